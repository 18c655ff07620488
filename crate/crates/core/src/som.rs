//! Self-organizing map: a 2-D grid of prototype vectors trained online with
//! a Gaussian neighborhood.
//!
//! Each step presents one sample `x`, finds the best matching unit `w` by
//! Euclidean distance, and moves every unit `I` toward the sample:
//!
//! ```text
//! W_I <- W_I + alpha(t) * h(w, I, t) * (x - W_I)
//! h(w, I, t) = exp(-|r_w - r_I|^2 / (2 sigma(t)^2))
//! ```
//!
//! where `r_I = (I / cols, I % cols)` is the unit's grid position. Both
//! `alpha` and `sigma` decay linearly over the run.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dataset::{squared_euclidean, Dataset, FeatureVector};
use crate::error::{Error, Result};

const INIT_STREAM: u64 = 0;
const SHUFFLE_STREAM: u64 = 1;

#[derive(Clone, Debug, PartialEq)]
pub struct SomMap {
    rows: usize,
    cols: usize,
    dim: usize,
    /// `rows * cols` prototypes of `dim` components, unit-major.
    prototypes: Vec<f64>,
}

impl SomMap {
    pub fn from_prototypes(
        rows: usize,
        cols: usize,
        dim: usize,
        prototypes: Vec<f64>,
    ) -> Result<Self> {
        if rows == 0 || cols == 0 || dim == 0 {
            return Err(Error::param("map rows, cols and dim must be >= 1"));
        }
        if prototypes.len() != rows * cols * dim {
            return Err(Error::Shape {
                expected: rows * cols * dim,
                actual: prototypes.len(),
            });
        }
        if prototypes.iter().any(|v| !v.is_finite()) {
            return Err(Error::Range("map prototypes must be finite".to_owned()));
        }
        Ok(Self {
            rows,
            cols,
            dim,
            prototypes,
        })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn units(&self) -> usize {
        self.rows * self.cols
    }

    pub fn prototype(&self, unit: usize) -> &[f64] {
        &self.prototypes[unit * self.dim..(unit + 1) * self.dim]
    }

    pub fn prototypes(&self) -> impl Iterator<Item = &[f64]> {
        self.prototypes.chunks_exact(self.dim)
    }

    pub fn raw_prototypes(&self) -> &[f64] {
        &self.prototypes
    }

    pub fn grid_position(&self, unit: usize) -> (usize, usize) {
        (unit / self.cols, unit % self.cols)
    }

    fn check_dim(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.dim {
            return Err(Error::Shape {
                expected: self.dim,
                actual: x.len(),
            });
        }
        Ok(())
    }

    /// Best matching unit and its Euclidean distance; ties go to the lowest index.
    pub fn bmu(&self, x: &[f64]) -> Result<(usize, f64)> {
        self.check_dim(x)?;
        let mut best = (0, f64::INFINITY);
        for (i, w) in self.prototypes().enumerate() {
            let d2 = squared_euclidean(x, w);
            if d2 < best.1 {
                best = (i, d2);
            }
        }
        Ok((best.0, best.1.sqrt()))
    }

    /// Gaussian neighborhood weight between two units at radius `sigma`.
    pub fn neighborhood(&self, winner: usize, unit: usize, sigma: f64) -> Result<f64> {
        if sigma.is_nan() || sigma <= 0.0 {
            return Err(Error::param(format!(
                "neighborhood sigma must be > 0, got {sigma}"
            )));
        }
        Ok(self.kernel(winner, unit, sigma))
    }

    fn kernel(&self, winner: usize, unit: usize, sigma: f64) -> f64 {
        let (wr, wc) = self.grid_position(winner);
        let (ur, uc) = self.grid_position(unit);
        let dr = wr as f64 - ur as f64;
        let dc = wc as f64 - uc as f64;
        (-(dr * dr + dc * dc) / (2.0 * sigma * sigma)).exp()
    }

    /// One online update toward `x`.
    pub fn train_step(&mut self, x: &[f64], alpha: f64, sigma: f64) -> Result<()> {
        if !(0.0..=1.0).contains(&alpha) {
            return Err(Error::param(format!(
                "learning rate must lie in [0, 1], got {alpha}"
            )));
        }
        if sigma.is_nan() || sigma <= 0.0 {
            return Err(Error::param(format!(
                "neighborhood sigma must be > 0, got {sigma}"
            )));
        }
        let (winner, _) = self.bmu(x)?;
        for unit in 0..self.units() {
            let rate = alpha * self.kernel(winner, unit, sigma);
            let w = &mut self.prototypes[unit * self.dim..(unit + 1) * self.dim];
            for (wi, xi) in w.iter_mut().zip(x) {
                *wi += rate * (xi - *wi);
            }
        }
        Ok(())
    }

    /// Mean BMU distance over the rows of `data`.
    pub fn quantization_error(&self, data: &Dataset) -> Result<f64> {
        if data.is_empty() {
            return Err(Error::param("quantization error needs at least one row"));
        }
        let mut total = 0.0;
        for row in data.rows() {
            total += self.bmu(&row.values)?.1;
        }
        Ok(total / data.len() as f64)
    }

    /// Replaces `x` with its BMU prototype.
    pub fn nearest_prototype(&self, x: &FeatureVector) -> Result<FeatureVector> {
        let (unit, _) = self.bmu(&x.values)?;
        Ok(FeatureVector::new(self.prototype(unit).to_vec(), x.label))
    }
}

/// Randomly initialized map. Components are uniform over the per-dimension
/// `[min, max]` of `data` when given, else over `[0, 1)`, drawn unit-major.
pub fn init_map(
    rows: usize,
    cols: usize,
    dim: usize,
    seed: u64,
    data: Option<&Dataset>,
) -> Result<SomMap> {
    if rows == 0 || cols == 0 || dim == 0 {
        return Err(Error::param("map rows, cols and dim must be >= 1"));
    }
    let ranges = match data {
        Some(d) if d.dim() != dim => {
            return Err(Error::Shape {
                expected: dim,
                actual: d.dim(),
            })
        }
        Some(d) => d.ranges(),
        None => vec![(0.0, 1.0); dim],
    };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(INIT_STREAM);
    let mut prototypes = Vec::with_capacity(rows * cols * dim);
    for _ in 0..rows * cols {
        for &(lo, hi) in &ranges {
            let u: f64 = rng.gen();
            prototypes.push(lo + (hi - lo) * u);
        }
    }
    SomMap::from_prototypes(rows, cols, dim, prototypes)
}

/// Fully resolved training schedule.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TrainingSchedule {
    pub iterations: usize,
    pub alpha0: f64,
    pub alpha_final: f64,
    pub sigma0: f64,
    pub sigma_final: f64,
    pub seed: u64,
}

impl TrainingSchedule {
    pub fn validate(&self) -> Result<()> {
        if self.iterations < 1 {
            return Err(Error::param("training needs at least one iteration"));
        }
        if !(self.alpha_final >= 0.0 && self.alpha0 >= self.alpha_final && self.alpha0 <= 1.0) {
            return Err(Error::param(format!(
                "learning rates must satisfy 1 >= alpha0 >= alpha_final >= 0 (got {} -> {})",
                self.alpha0, self.alpha_final
            )));
        }
        if !(self.sigma_final > 0.0 && self.sigma0 >= self.sigma_final) {
            return Err(Error::param(format!(
                "radii must satisfy sigma0 >= sigma_final > 0 (got {} -> {})",
                self.sigma0, self.sigma_final
            )));
        }
        Ok(())
    }

    fn lerp(start: f64, end: f64, step: usize, total: usize) -> f64 {
        if total <= 1 {
            start
        } else {
            start + (end - start) * step as f64 / (total - 1) as f64
        }
    }

    pub fn alpha(&self, step: usize) -> f64 {
        Self::lerp(self.alpha0, self.alpha_final, step, self.iterations)
    }

    pub fn sigma(&self, step: usize) -> f64 {
        Self::lerp(self.sigma0, self.sigma_final, step, self.iterations)
    }

    pub fn with_seed(self, seed: u64) -> Self {
        Self { seed, ..self }
    }
}

/// Schedule settings where iterations and initial radius may be left to
/// map- and data-dependent defaults.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScheduleSpec {
    /// Defaults to 100 presentations per training row.
    pub iterations: Option<usize>,
    pub alpha0: f64,
    pub alpha_final: f64,
    /// Defaults to `max(rows, cols) / 2`.
    pub sigma0: Option<f64>,
    pub sigma_final: f64,
}

impl Default for ScheduleSpec {
    fn default() -> Self {
        Self {
            iterations: None,
            alpha0: 0.5,
            alpha_final: 0.01,
            sigma0: None,
            sigma_final: 0.5,
        }
    }
}

impl ScheduleSpec {
    pub fn resolve(&self, rows: usize, cols: usize, samples: usize, seed: u64) -> TrainingSchedule {
        let sigma0 = self.sigma0.unwrap_or(rows.max(cols) as f64 / 2.0);
        TrainingSchedule {
            iterations: self.iterations.unwrap_or(100 * samples),
            alpha0: self.alpha0,
            alpha_final: self.alpha_final,
            sigma0,
            // a 1x1 map has sigma0 0.5; keep the endpoints ordered
            sigma_final: self.sigma_final.min(sigma0),
            seed,
        }
    }
}

/// Online training: the data is shuffled once by `sched.seed` and cycled for
/// exactly `sched.iterations` steps.
pub fn train(map: &mut SomMap, data: &Dataset, sched: &TrainingSchedule) -> Result<()> {
    sched.validate()?;
    if data.is_empty() {
        return Err(Error::param("cannot train on an empty dataset"));
    }
    if data.dim() != map.dim {
        return Err(Error::Shape {
            expected: map.dim,
            actual: data.dim(),
        });
    }
    let mut order: Vec<usize> = (0..data.len()).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(sched.seed);
    rng.set_stream(SHUFFLE_STREAM);
    order.shuffle(&mut rng);
    for t in 0..sched.iterations {
        let x = &data.rows()[order[t % order.len()]].values;
        map.train_step(x, sched.alpha(t), sched.sigma(t))?;
    }
    Ok(())
}

/// Initializes from the data range and trains.
pub fn fit_map(
    rows: usize,
    cols: usize,
    data: &Dataset,
    sched: &TrainingSchedule,
) -> Result<SomMap> {
    let mut map = init_map(rows, cols, data.dim(), sched.seed, Some(data))?;
    train(&mut map, data, sched)?;
    Ok(map)
}
