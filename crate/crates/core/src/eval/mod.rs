//! Cross-validated comparison of feature pipelines.
//!
//! Every fold fits its Fisher projection, its map(s) and its classifier on
//! the training split alone. Test rows are projected, then transformed with
//! their labels hidden, so a concurrent-map transform picks the winning map
//! by quantization error exactly as it would for an unseen image.

mod classifier;
mod report;
mod split;

use std::collections::BTreeMap;

use rayon::prelude::*;

pub use classifier::{gnb_fit_predict, knn_predict, ClassifierKind, FittedClassifier, GaussianNb};
pub use report::{ComparisonTable, EvaluationReport};
pub use split::{holdout_indices, kfold_indices, kfold_split};

use crate::csom::{train_csom, CsomModel, TransformMode};
use crate::dataset::{ClassId, Dataset, FeatureVector};
use crate::error::Result;
use crate::fisher::{fit_fisher, FisherProjection};
use crate::som::{fit_map, ScheduleSpec, SomMap};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum FeaturePipeline {
    /// Fisher-reduced texture features as they are.
    Raw,
    /// One map trained on all classes pooled.
    SingleSom {
        rows: usize,
        cols: usize,
        mode: TransformMode,
    },
    /// One map per class.
    Csom {
        rows: usize,
        cols: usize,
        mode: TransformMode,
    },
}

impl FeaturePipeline {
    pub fn label(&self) -> String {
        let suffix = |mode: &TransformMode| match mode {
            TransformMode::Replace => String::new(),
            TransformMode::Append => " +append".to_owned(),
        };
        match self {
            FeaturePipeline::Raw => "Raw features".to_owned(),
            FeaturePipeline::SingleSom { rows, cols, mode } => {
                format!("Single SOM {rows}x{cols}{}", suffix(mode))
            }
            FeaturePipeline::Csom { rows, cols, mode } => {
                format!("CSOM {rows}x{cols}{}", suffix(mode))
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Protocol {
    KFold {
        folds: usize,
    },
    /// Fixed per-class test counts; classes not listed stay in training.
    Holdout {
        test_counts: BTreeMap<ClassId, usize>,
    },
}

/// Fisher stage setting: `None` skips it, `Some(None)` keeps `c_n - 1` dimensions.
pub type FisherSetting = Option<Option<usize>>;

#[derive(Clone, Debug, PartialEq)]
pub struct ExperimentSpec {
    pub pipeline: FeaturePipeline,
    pub classifier: ClassifierKind,
    pub fisher: FisherSetting,
    pub schedule: ScheduleSpec,
    pub protocol: Protocol,
    pub seed: u64,
}

#[derive(Clone, Debug, PartialEq)]
pub enum FeatureModel {
    Identity,
    Single {
        map: SomMap,
        mode: TransformMode,
    },
    Concurrent {
        model: CsomModel,
        mode: TransformMode,
    },
}

impl FeatureModel {
    pub fn transform(&self, data: &Dataset) -> Result<Dataset> {
        match self {
            FeatureModel::Identity => Ok(data.clone()),
            FeatureModel::Single { map, mode } => {
                let rows = data
                    .rows()
                    .par_iter()
                    .map(|r| {
                        let proto = map.nearest_prototype(r)?;
                        Ok(match mode {
                            TransformMode::Replace => proto,
                            TransformMode::Append => {
                                let mut v = r.values.clone();
                                v.extend(proto.values);
                                FeatureVector::new(v, r.label)
                            }
                        })
                    })
                    .collect::<Result<Vec<_>>>()?;
                Dataset::new(rows)
            }
            FeatureModel::Concurrent { model, mode } => model.transform(data, *mode),
        }
    }
}

/// Everything a fold fits. Depends on the training split only.
#[derive(Clone, Debug, PartialEq)]
pub struct FoldModels {
    pub fisher: Option<FisherProjection>,
    pub features: FeatureModel,
    pub classifier: FittedClassifier,
}

#[derive(Clone, Debug, PartialEq)]
pub struct FoldOutcome {
    pub models: FoldModels,
    pub truth: Vec<ClassId>,
    pub predictions: Vec<ClassId>,
}

impl FoldOutcome {
    pub fn accuracy(&self) -> f64 {
        let hits = self
            .truth
            .iter()
            .zip(&self.predictions)
            .filter(|(a, b)| a == b)
            .count();
        hits as f64 / self.truth.len() as f64
    }
}

fn fold_seed(seed: u64, fold: usize) -> u64 {
    seed ^ (fold as u64 + 1).wrapping_mul(0x9E37_79B9_7F4A_7C15)
}

/// Fits the fold's Fisher projection, feature model and classifier on `train`.
pub fn fit_fold(
    train: &Dataset,
    spec: &ExperimentSpec,
    fold: usize,
) -> Result<(FoldModels, Dataset)> {
    let fisher = match spec.fisher {
        None => None,
        Some(d) => {
            let d = d.unwrap_or(train.class_ids().len().saturating_sub(1));
            Some(fit_fisher(train, d)?)
        }
    };
    let reduced = match &fisher {
        Some(p) => p.project_dataset(train)?,
        None => train.clone(),
    };
    let seed = fold_seed(spec.seed, fold);
    let features = match spec.pipeline {
        FeaturePipeline::Raw => FeatureModel::Identity,
        FeaturePipeline::SingleSom { rows, cols, mode } => {
            let sched = spec.schedule.resolve(rows, cols, reduced.len(), seed);
            FeatureModel::Single {
                map: fit_map(rows, cols, &reduced, &sched)?,
                mode,
            }
        }
        FeaturePipeline::Csom { rows, cols, mode } => FeatureModel::Concurrent {
            model: train_csom(&reduced, rows, cols, &spec.schedule, seed)?,
            mode,
        },
    };
    let transformed = features.transform(&reduced)?;
    let classifier = spec.classifier.fit(&transformed)?;
    Ok((
        FoldModels {
            fisher,
            features,
            classifier,
        },
        transformed,
    ))
}

/// Fits on `train`, then scores `test` (labels are withheld from every
/// transform and only used for scoring).
pub fn evaluate_fold(
    train: &Dataset,
    test: &Dataset,
    spec: &ExperimentSpec,
    fold: usize,
) -> Result<FoldOutcome> {
    let run = || -> Result<FoldOutcome> {
        let (models, _) = fit_fold(train, spec, fold)?;
        let truth = test.labels()?;
        let hidden = test.without_labels();
        let reduced = match &models.fisher {
            Some(p) => p.project_dataset(&hidden)?,
            None => hidden,
        };
        let transformed = models.features.transform(&reduced)?;
        let predictions = transformed
            .rows()
            .iter()
            .map(|r| models.classifier.predict(&r.values))
            .collect::<Result<Vec<_>>>()?;
        Ok(FoldOutcome {
            models,
            truth,
            predictions,
        })
    };
    run().map_err(|e| e.in_fold(fold))
}

/// Test-index sets for the protocol.
pub fn protocol_folds(data: &Dataset, protocol: &Protocol, seed: u64) -> Result<Vec<Vec<usize>>> {
    let labels = data.labels()?;
    match protocol {
        Protocol::KFold { folds } => kfold_indices(&labels, *folds, seed),
        Protocol::Holdout { test_counts } => Ok(vec![holdout_indices(&labels, test_counts, seed)?]),
    }
}

/// Runs every fold of the protocol (folds in parallel) and aggregates.
pub fn run_experiment(data: &Dataset, spec: &ExperimentSpec) -> Result<EvaluationReport> {
    let folds = protocol_folds(data, &spec.protocol, spec.seed)?;
    let outcomes = folds
        .par_iter()
        .enumerate()
        .map(|(f, test_idx)| {
            let train = data.select(&split::train_indices(data.len(), test_idx))?;
            let test = data.select(test_idx)?;
            evaluate_fold(&train, &test, spec, f)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(EvaluationReport::from_outcomes(
        data.class_ids(),
        spec,
        folds,
        &outcomes,
    ))
}

/// Mean accuracy of every (classifier, pipeline) pair.
pub fn compare(
    data: &Dataset,
    base: &ExperimentSpec,
    pipelines: &[FeaturePipeline],
    classifiers: &[ClassifierKind],
) -> Result<(ComparisonTable, Vec<EvaluationReport>)> {
    let mut reports = Vec::new();
    let mut cells = Vec::new();
    for classifier in classifiers {
        let mut row = Vec::new();
        for pipeline in pipelines {
            let spec = ExperimentSpec {
                pipeline: *pipeline,
                classifier: *classifier,
                ..base.clone()
            };
            let report = run_experiment(data, &spec)?;
            row.push(report.mean_accuracy);
            reports.push(report);
        }
        cells.push(row);
    }
    let table = ComparisonTable {
        columns: pipelines.iter().map(FeaturePipeline::label).collect(),
        rows: classifiers.iter().map(ClassifierKind::label).collect(),
        accuracies: cells,
    };
    Ok((table, reports))
}
