//! Seeded Gaussian-cluster datasets for tests, benchmarks and demos.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::dataset::{Dataset, FeatureVector};

#[derive(Clone, Debug, PartialEq)]
pub struct ClusterSpec {
    /// Rows per class; class `i` gets label `i`.
    pub class_sizes: Vec<usize>,
    pub dim: usize,
    /// Distance between every pair of class centers.
    pub separation: f64,
    /// Isotropic per-component standard deviation.
    pub std_dev: f64,
}

/// Centers `separation / sqrt(2) * e_i`, pairwise exactly `separation` apart.
pub fn simplex_centers(n: usize, dim: usize, separation: f64) -> Vec<Vec<f64>> {
    assert!(dim >= n, "simplex centers need dim >= class count");
    let scale = separation / std::f64::consts::SQRT_2;
    (0..n)
        .map(|i| {
            let mut c = vec![0.0; dim];
            c[i] = scale;
            c
        })
        .collect()
}

/// Draws `sizes[i]` isotropic Gaussian rows around `centers[i]`, grouped by class.
pub fn sample_clusters(centers: &[Vec<f64>], sizes: &[usize], std_dev: f64, seed: u64) -> Dataset {
    assert_eq!(centers.len(), sizes.len());
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let noise = Normal::new(0.0, std_dev).expect("finite std dev");
    let mut rows = Vec::with_capacity(sizes.iter().sum());
    for (label, (center, &n)) in centers.iter().zip(sizes).enumerate() {
        for _ in 0..n {
            let values = center.iter().map(|&c| c + noise.sample(&mut rng)).collect();
            rows.push(FeatureVector::labeled(values, label as u32));
        }
    }
    Dataset::new(rows).expect("nonempty, finite, uniform rows")
}

pub fn gaussian_clusters(spec: &ClusterSpec, seed: u64) -> Dataset {
    let centers = simplex_centers(spec.class_sizes.len(), spec.dim, spec.separation);
    sample_clusters(&centers, &spec.class_sizes, spec.std_dev, seed)
}
