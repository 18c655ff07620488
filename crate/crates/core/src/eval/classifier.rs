//! Reference classifiers used to score feature pipelines: k-nearest
//! neighbours and Gaussian naive Bayes.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::dataset::{squared_euclidean, ClassId, Dataset};
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum ClassifierKind {
    Knn { k: usize },
    GaussianNb,
}

impl ClassifierKind {
    pub const NAMES: &'static [&'static str] = &["1nn", "knn", "gnb"];

    /// Parses a config name; `knn` uses `knn_k` neighbours.
    pub fn from_name(name: &str, knn_k: usize) -> Result<Self> {
        match name {
            "1nn" => Ok(ClassifierKind::Knn { k: 1 }),
            "knn" => Ok(ClassifierKind::Knn { k: knn_k }),
            "gnb" | "naive-bayes" => Ok(ClassifierKind::GaussianNb),
            other => Err(Error::Config(format!(
                "unknown classifier {other:?}; valid names: {}",
                Self::NAMES.join(", ")
            ))),
        }
    }

    pub fn label(&self) -> String {
        match self {
            ClassifierKind::Knn { k: 1 } => "1-NN".to_owned(),
            ClassifierKind::Knn { k } => format!("{k}-NN"),
            ClassifierKind::GaussianNb => "NaiveBayes".to_owned(),
        }
    }

    pub fn fit(&self, train: &Dataset) -> Result<FittedClassifier> {
        match *self {
            ClassifierKind::Knn { k } => {
                if k == 0 || k > train.len() {
                    return Err(Error::param(format!(
                        "k must lie in 1..={} for this training set, got {k}",
                        train.len()
                    )));
                }
                train.labels()?;
                Ok(FittedClassifier::Knn {
                    k,
                    train: train.clone(),
                })
            }
            ClassifierKind::GaussianNb => Ok(FittedClassifier::GaussianNb(GaussianNb::fit(train)?)),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum FittedClassifier {
    Knn { k: usize, train: Dataset },
    GaussianNb(GaussianNb),
}

impl FittedClassifier {
    pub fn predict(&self, x: &[f64]) -> Result<ClassId> {
        match self {
            FittedClassifier::Knn { k, train } => knn_predict(train, x, *k),
            FittedClassifier::GaussianNb(nb) => nb.predict(x),
        }
    }
}

/// Majority label among the `k` nearest training rows. Equal distances
/// prefer the lower row index; tied votes prefer the lower class id.
pub fn knn_predict(train: &Dataset, x: &[f64], k: usize) -> Result<ClassId> {
    if train.is_empty() {
        return Err(Error::param("k-NN needs a nonempty training set"));
    }
    if k == 0 || k > train.len() {
        return Err(Error::param(format!(
            "k must lie in 1..={}, got {k}",
            train.len()
        )));
    }
    if x.len() != train.dim() {
        return Err(Error::Shape {
            expected: train.dim(),
            actual: x.len(),
        });
    }
    let labels = train.labels()?;
    let mut order: Vec<(f64, usize)> = train
        .rows()
        .iter()
        .enumerate()
        .map(|(i, r)| (squared_euclidean(&r.values, x), i))
        .collect();
    order.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    let mut votes: BTreeMap<ClassId, usize> = BTreeMap::new();
    for &(_, i) in &order[..k] {
        *votes.entry(labels[i]).or_default() += 1;
    }
    let top = *votes.values().max().expect("k >= 1");
    Ok(*votes.iter().find(|(_, &v)| v == top).expect("max exists").0)
}

#[derive(Clone, Debug, PartialEq)]
pub struct GaussianNb {
    classes: Vec<ClassId>,
    log_priors: Vec<f64>,
    means: Vec<Vec<f64>>,
    variances: Vec<Vec<f64>>,
}

impl GaussianNb {
    /// Per-class, per-dimension mean and (population) variance. Variances
    /// are floored at `max(1e-9 * overall variance of the dimension, 1e-12)`.
    pub fn fit(train: &Dataset) -> Result<Self> {
        let labels = train.labels()?;
        let dim = train.dim();
        let n = train.len() as f64;
        let overall_mean: Vec<f64> = (0..dim)
            .map(|j| train.rows().iter().map(|r| r.values[j]).sum::<f64>() / n)
            .collect();
        let floor: Vec<f64> = (0..dim)
            .map(|j| {
                let var = train
                    .rows()
                    .iter()
                    .map(|r| (r.values[j] - overall_mean[j]).powi(2))
                    .sum::<f64>()
                    / n;
                (1e-9 * var).max(1e-12)
            })
            .collect();

        let classes = train.class_ids();
        let mut model = GaussianNb {
            classes: classes.clone(),
            log_priors: Vec::new(),
            means: Vec::new(),
            variances: Vec::new(),
        };
        for class in classes {
            let members: Vec<&[f64]> = train
                .rows()
                .iter()
                .zip(&labels)
                .filter(|(_, &l)| l == class)
                .map(|(r, _)| r.values.as_slice())
                .collect();
            let m = members.len() as f64;
            if members.len() < 2 {
                return Err(Error::Fit(format!(
                    "class {class} has {} row(s); naive Bayes needs at least 2",
                    members.len()
                )));
            }
            let mean: Vec<f64> = (0..dim)
                .map(|j| members.iter().map(|r| r[j]).sum::<f64>() / m)
                .collect();
            let var: Vec<f64> = (0..dim)
                .map(|j| {
                    let v = members
                        .iter()
                        .map(|r| (r[j] - mean[j]).powi(2))
                        .sum::<f64>()
                        / m;
                    v.max(floor[j])
                })
                .collect();
            model.log_priors.push((m / n).ln());
            model.means.push(mean);
            model.variances.push(var);
        }
        Ok(model)
    }

    pub fn log_posteriors(&self, x: &[f64]) -> Result<Vec<(ClassId, f64)>> {
        let dim = self.means[0].len();
        if x.len() != dim {
            return Err(Error::Shape {
                expected: dim,
                actual: x.len(),
            });
        }
        Ok(self
            .classes
            .iter()
            .enumerate()
            .map(|(c, &class)| {
                let ll: f64 = (0..dim)
                    .map(|j| {
                        let var = self.variances[c][j];
                        -0.5 * (2.0 * std::f64::consts::PI * var).ln()
                            - (x[j] - self.means[c][j]).powi(2) / (2.0 * var)
                    })
                    .sum();
                (class, self.log_priors[c] + ll)
            })
            .collect())
    }

    /// Maximum a posteriori class; ties go to the lowest class id.
    pub fn predict(&self, x: &[f64]) -> Result<ClassId> {
        let scores = self.log_posteriors(x)?;
        let mut best = 0;
        for (i, s) in scores.iter().enumerate() {
            if s.1 > scores[best].1 {
                best = i;
            }
        }
        Ok(scores[best].0)
    }
}

pub fn gnb_fit_predict(train: &Dataset, x: &[f64]) -> Result<ClassId> {
    GaussianNb::fit(train)?.predict(x)
}
