//! Fisherfaces: PCA down to at most `c - c_n` components, then LDA down to
//! `d <= c_n - 1` discriminant directions.
//!
//! The LDA step solves `S_b w = lambda S_w w` by whitening with the Cholesky
//! factor of the (slightly regularized) within-class scatter, so the
//! eigenproblem it hands to the solver is symmetric.

use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::dataset::{ClassId, Dataset, FeatureVector};
use crate::error::{Error, Result};

/// Eigenvalues of the total scatter below this fraction of the largest are
/// treated as zero when estimating rank.
const RANK_TOLERANCE: f64 = 1e-10;
/// Within-class scatter is regularized by `REGULARIZATION * trace / k` on the diagonal.
const REGULARIZATION: f64 = 1e-9;

#[derive(Clone, Debug, PartialEq)]
pub struct FisherProjection {
    mean: DVector<f64>,
    /// `S x k`, orthonormal columns.
    pca_basis: DMatrix<f64>,
    /// `k x d`, unit-norm columns ordered by descending discriminant ratio.
    lda_basis: DMatrix<f64>,
}

impl FisherProjection {
    pub fn from_parts(
        mean: Vec<f64>,
        pca_basis: DMatrix<f64>,
        lda_basis: DMatrix<f64>,
    ) -> Result<Self> {
        if pca_basis.nrows() != mean.len() {
            return Err(Error::Shape {
                expected: mean.len(),
                actual: pca_basis.nrows(),
            });
        }
        if lda_basis.nrows() != pca_basis.ncols() {
            return Err(Error::Shape {
                expected: pca_basis.ncols(),
                actual: lda_basis.nrows(),
            });
        }
        if mean.is_empty() || lda_basis.ncols() == 0 {
            return Err(Error::Model(
                "fisher projection has an empty dimension".to_owned(),
            ));
        }
        Ok(Self {
            mean: DVector::from_vec(mean),
            pca_basis,
            lda_basis,
        })
    }

    pub fn input_dim(&self) -> usize {
        self.mean.len()
    }

    pub fn pca_dim(&self) -> usize {
        self.pca_basis.ncols()
    }

    pub fn output_dim(&self) -> usize {
        self.lda_basis.ncols()
    }

    pub fn mean(&self) -> &DVector<f64> {
        &self.mean
    }

    pub fn pca_basis(&self) -> &DMatrix<f64> {
        &self.pca_basis
    }

    pub fn lda_basis(&self) -> &DMatrix<f64> {
        &self.lda_basis
    }

    /// Combined `S x d` linear map.
    pub fn directions(&self) -> DMatrix<f64> {
        &self.pca_basis * &self.lda_basis
    }

    pub fn project(&self, v: &FeatureVector) -> Result<FeatureVector> {
        if v.dim() != self.input_dim() {
            return Err(Error::Shape {
                expected: self.input_dim(),
                actual: v.dim(),
            });
        }
        let centered = DVector::from_column_slice(&v.values) - &self.mean;
        let reduced = self.lda_basis.tr_mul(&self.pca_basis.tr_mul(&centered));
        Ok(FeatureVector::new(
            reduced.iter().copied().collect(),
            v.label,
        ))
    }

    pub fn project_dataset(&self, data: &Dataset) -> Result<Dataset> {
        let rows = data
            .rows()
            .iter()
            .map(|r| self.project(r))
            .collect::<Result<Vec<_>>>()?;
        Dataset::new(rows)
    }
}

/// Flips `v` so its largest-magnitude entry is positive (first one on ties).
fn fix_sign(mut v: DVector<f64>) -> DVector<f64> {
    let mut pivot = 0;
    for i in 1..v.len() {
        if v[i].abs() > v[pivot].abs() {
            pivot = i;
        }
    }
    if v[pivot] < 0.0 {
        v.neg_mut();
    }
    v
}

/// Eigenpairs of a symmetric matrix sorted by descending eigenvalue.
fn sorted_eigen(m: DMatrix<f64>) -> Vec<(f64, DVector<f64>)> {
    let eig = SymmetricEigen::new(m);
    let mut pairs: Vec<(f64, DVector<f64>)> = eig
        .eigenvalues
        .iter()
        .zip(eig.eigenvectors.column_iter())
        .map(|(&l, v)| (l, v.into_owned()))
        .collect();
    pairs.sort_by(|a, b| b.0.total_cmp(&a.0));
    pairs
}

/// Between- and within-class scatter of `rows` (one sample per row).
pub fn scatter_matrices(rows: &DMatrix<f64>, labels: &[ClassId]) -> (DMatrix<f64>, DMatrix<f64>) {
    let dim = rows.ncols();
    let mut groups: BTreeMap<ClassId, Vec<usize>> = BTreeMap::new();
    for (i, &l) in labels.iter().enumerate() {
        groups.entry(l).or_default().push(i);
    }
    let overall: DVector<f64> = rows.row_mean().transpose();
    let mut between = DMatrix::zeros(dim, dim);
    let mut within = DMatrix::zeros(dim, dim);
    for members in groups.values() {
        let mut class_mean = DVector::zeros(dim);
        for &i in members {
            class_mean += rows.row(i).transpose();
        }
        class_mean /= members.len() as f64;
        let shift = &class_mean - &overall;
        between += members.len() as f64 * &shift * shift.transpose();
        for &i in members {
            let d = rows.row(i).transpose() - &class_mean;
            within += &d * d.transpose();
        }
    }
    (between, within)
}

/// Fits the two-stage projection on labeled `data`, keeping `d` output dimensions.
pub fn fit_fisher(data: &Dataset, d: usize) -> Result<FisherProjection> {
    let labels = data.labels()?;
    let classes = data.class_ids();
    let n_classes = classes.len();
    if n_classes < 2 {
        return Err(Error::DegenerateLabels(format!(
            "fisher projection needs at least 2 classes, found {n_classes}"
        )));
    }
    for class in &classes {
        let n = labels.iter().filter(|&l| l == class).count();
        if n < 2 {
            return Err(Error::Fit(format!(
                "class {class} has {n} row(s); fisher projection needs at least 2 per class"
            )));
        }
    }
    if d == 0 || d > n_classes - 1 {
        return Err(Error::param(format!(
            "fisher output dimension must lie in 1..={}, got {d}",
            n_classes - 1
        )));
    }

    let (c, dim) = (data.len(), data.dim());
    let x = DMatrix::from_fn(c, dim, |i, j| data.rows()[i].values[j]);
    let mean: DVector<f64> = x.row_mean().transpose();
    let centered = DMatrix::from_fn(c, dim, |i, j| x[(i, j)] - mean[j]);

    // PCA on the total scatter
    let total_scatter = centered.tr_mul(&centered);
    let eig = sorted_eigen(total_scatter);
    let largest = eig[0].0.max(0.0);
    let rank = eig
        .iter()
        .filter(|(l, _)| largest > 0.0 && *l > RANK_TOLERANCE * largest)
        .count();
    let k = rank.min(c - n_classes);
    if k < d {
        return Err(Error::Fit(format!(
            "only {k} principal components available for {d} discriminant directions"
        )));
    }
    let pca_cols: Vec<DVector<f64>> = eig.into_iter().take(k).map(|(_, v)| fix_sign(v)).collect();
    let pca_basis = DMatrix::from_columns(&pca_cols);

    // LDA in PCA space
    let reduced = &centered * &pca_basis;
    let (between, mut within) = scatter_matrices(&reduced, &labels);
    let eps = REGULARIZATION * within.trace() / k as f64;
    for i in 0..k {
        within[(i, i)] += eps;
    }
    let chol = within
        .cholesky()
        .ok_or_else(|| Error::Fit("within-class scatter is not positive definite".to_owned()))?;
    let l = chol.l();
    let l_inv = l
        .clone()
        .try_inverse()
        .ok_or_else(|| Error::Fit("within-class scatter factor is singular".to_owned()))?;
    let mut whitened = &l_inv * &between * l_inv.transpose();
    // symmetrize away rounding
    whitened = (&whitened + whitened.transpose()) * 0.5;
    let lda_cols: Vec<DVector<f64>> = sorted_eigen(whitened)
        .into_iter()
        .take(d)
        .map(|(_, u)| {
            let w = l_inv.tr_mul(&u);
            let norm = w.norm();
            fix_sign(w / norm)
        })
        .collect();
    let lda_basis = DMatrix::from_columns(&lda_cols);

    FisherProjection::from_parts(mean.iter().copied().collect(), pca_basis, lda_basis)
}

/// Ratio `w' S_b w / w' S_w w` for each output column of a projected dataset.
pub fn component_criteria(projected: &Dataset) -> Result<Vec<f64>> {
    let labels = projected.labels()?;
    let rows = DMatrix::from_fn(projected.len(), projected.dim(), |i, j| {
        projected.rows()[i].values[j]
    });
    let (between, within) = scatter_matrices(&rows, &labels);
    Ok((0..projected.dim())
        .map(|j| between[(j, j)] / within[(j, j)])
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synthetic::{gaussian_clusters, ClusterSpec};
    use proptest::prelude::*;

    fn two_class_2d() -> Dataset {
        // class 0 around (0,0), class 1 around (4,0), symmetric spread
        let offsets = [(0.5, 0.5), (-0.5, 0.5), (0.5, -0.5), (-0.5, -0.5)];
        let mut rows = Vec::new();
        for (label, cx) in [(0u32, 0.0), (1, 4.0)] {
            for &(dx, dy) in &offsets {
                rows.push(FeatureVector::labeled(vec![cx + dx, dy], label));
            }
        }
        Dataset::new(rows).unwrap()
    }

    #[test]
    fn separating_axis_for_two_symmetric_classes() {
        let p = fit_fisher(&two_class_2d(), 1).unwrap();
        let w = p.directions();
        let w = w.column(0);
        assert!(w[1].abs() < 1e-9 * w[0].abs(), "direction {w:?}");
    }

    #[test]
    fn one_dimensional_data_projects_to_plus_minus_identity() {
        let rows = [(1.0, 0), (2.0, 0), (3.0, 0), (7.0, 1), (8.0, 1), (10.0, 1)]
            .iter()
            .map(|&(v, l)| FeatureVector::labeled(vec![v], l))
            .collect();
        let data = Dataset::new(rows).unwrap();
        let p = fit_fisher(&data, 1).unwrap();
        let mean = 31.0 / 6.0;
        for r in data.rows() {
            let out = p.project(r).unwrap();
            assert!(((out.values[0]).abs() - (r.values[0] - mean).abs()).abs() < 1e-12);
            assert_eq!(out.label, r.label);
        }
    }

    #[test]
    fn mean_projects_to_zero() {
        let data = two_class_2d();
        let p = fit_fisher(&data, 1).unwrap();
        let mean = FeatureVector::unlabeled(p.mean().iter().copied().collect());
        assert!(p
            .project(&mean)
            .unwrap()
            .values
            .iter()
            .all(|v| v.abs() < 1e-12));
        assert!(matches!(
            p.project(&FeatureVector::unlabeled(vec![1.0])),
            Err(Error::Shape {
                expected: 2,
                actual: 1
            })
        ));
    }

    #[test]
    fn identity_bases_give_centering() {
        let p = FisherProjection::from_parts(
            vec![1.0, -2.0],
            DMatrix::identity(2, 2),
            DMatrix::identity(2, 2),
        )
        .unwrap();
        let out = p
            .project(&FeatureVector::unlabeled(vec![3.0, 5.0]))
            .unwrap();
        assert_eq!(out.values, vec![2.0, 7.0]);
    }

    #[test]
    fn precondition_errors() {
        let single = Dataset::new(vec![
            FeatureVector::labeled(vec![1.0], 0),
            FeatureVector::labeled(vec![2.0], 0),
        ])
        .unwrap();
        assert!(matches!(
            fit_fisher(&single, 1),
            Err(Error::DegenerateLabels(_))
        ));
        assert!(matches!(
            fit_fisher(&two_class_2d(), 2),
            Err(Error::Parameter(_))
        ));
        let lonely = Dataset::new(vec![
            FeatureVector::labeled(vec![1.0], 0),
            FeatureVector::labeled(vec![2.0], 0),
            FeatureVector::labeled(vec![5.0], 1),
        ])
        .unwrap();
        assert!(matches!(fit_fisher(&lonely, 1), Err(Error::Fit(_))));
    }

    fn seven_class_data(seed: u64) -> Dataset {
        let spec = ClusterSpec {
            class_sizes: vec![30, 10, 7, 8, 5, 7, 4],
            dim: 10,
            separation: 3.0,
            std_dev: 1.0,
        };
        gaussian_clusters(&spec, seed)
    }

    #[test]
    fn bases_have_unit_norm_columns_and_dimension_bounds() {
        let data = seven_class_data(1);
        let p = fit_fisher(&data, 6).unwrap();
        assert_eq!(p.output_dim(), 6);
        assert!(p.pca_dim() <= data.len() - 7);
        for col in p
            .pca_basis()
            .column_iter()
            .chain(p.lda_basis().column_iter())
        {
            assert!((col.norm() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn criteria_are_nonincreasing_after_projection() {
        let data = seven_class_data(2);
        let p = fit_fisher(&data, 6).unwrap();
        let crit = component_criteria(&p.project_dataset(&data).unwrap()).unwrap();
        for w in crit.windows(2) {
            assert!(w[0] >= w[1] * (1.0 - 1e-9), "{crit:?}");
        }
    }

    #[test]
    fn row_permutation_only_flips_signs() {
        let data = seven_class_data(3);
        let p = fit_fisher(&data, 3).unwrap();
        let mut rows = data.rows().to_vec();
        rows.reverse();
        rows.swap(0, 17);
        let q = fit_fisher(&Dataset::new(rows).unwrap(), 3).unwrap();
        let (a, b) = (p.directions(), q.directions());
        for j in 0..3 {
            let same = (a.column(j) - b.column(j)).norm();
            let flipped = (a.column(j) + b.column(j)).norm();
            assert!(same.min(flipped) < 1e-8, "column {j}: {same} / {flipped}");
        }
    }

    proptest! {
        #[test]
        fn projection_is_affine(
            u in prop::collection::vec(-5.0f64..5.0, 10),
            w in prop::collection::vec(-5.0f64..5.0, 10),
            alpha in -2.0f64..2.0,
        ) {
            let data = seven_class_data(4);
            let p = fit_fisher(&data, 6).unwrap();
            let mix: Vec<f64> = u.iter().zip(&w).map(|(a, b)| alpha * a + (1.0 - alpha) * b).collect();
            let pu = p.project(&FeatureVector::unlabeled(u)).unwrap();
            let pw = p.project(&FeatureVector::unlabeled(w)).unwrap();
            let pm = p.project(&FeatureVector::unlabeled(mix)).unwrap();
            for j in 0..6 {
                let expected = alpha * pu.values[j] + (1.0 - alpha) * pw.values[j];
                prop_assert!((pm.values[j] - expected).abs() <= 1e-12);
            }
        }
    }
}
