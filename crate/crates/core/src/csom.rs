//! Concurrent self-organizing maps: one small map per class, trained only on
//! that class's rows, combined by winner-take-all on quantization error.

use rayon::prelude::*;

use crate::dataset::{ClassId, Dataset, FeatureVector};
use crate::error::{Error, Result};
use crate::som::{fit_map, ScheduleSpec, SomMap};

#[derive(Clone, Debug, PartialEq)]
pub struct CsomModel {
    /// Ascending class id, one map each.
    entries: Vec<(ClassId, SomMap)>,
    dim: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Classification {
    pub class: ClassId,
    /// BMU distance of `x` in each class map, ascending class id.
    pub errors: Vec<(ClassId, f64)>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum TransformMode {
    /// The winning prototype replaces the row.
    Replace,
    /// The winning prototype is appended to the row.
    Append,
}

impl std::str::FromStr for TransformMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "replace" => Ok(TransformMode::Replace),
            "append" => Ok(TransformMode::Append),
            other => Err(Error::param(format!(
                "unknown transform mode {other:?} (expected replace or append)"
            ))),
        }
    }
}

impl std::fmt::Display for TransformMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            TransformMode::Replace => "replace",
            TransformMode::Append => "append",
        })
    }
}

impl CsomModel {
    pub fn new(entries: Vec<(ClassId, SomMap)>) -> Result<Self> {
        let dim = entries.first().map(|(_, m)| m.dim()).ok_or_else(|| {
            Error::Model("a concurrent map model needs at least one class map".to_owned())
        })?;
        for pair in entries.windows(2) {
            if pair[0].0 >= pair[1].0 {
                return Err(Error::Model(format!(
                    "class ids must be strictly ascending ({} then {})",
                    pair[0].0, pair[1].0
                )));
            }
        }
        if let Some((class, m)) = entries.iter().find(|(_, m)| m.dim() != dim) {
            return Err(Error::Model(format!(
                "class {class} map has dimension {}, expected {dim}",
                m.dim()
            )));
        }
        Ok(Self { entries, dim })
    }

    pub fn entries(&self) -> &[(ClassId, SomMap)] {
        &self.entries
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn classes(&self) -> impl Iterator<Item = ClassId> + '_ {
        self.entries.iter().map(|(c, _)| *c)
    }

    pub fn map_for(&self, class: ClassId) -> Option<&SomMap> {
        self.entries
            .binary_search_by_key(&class, |(c, _)| *c)
            .ok()
            .map(|i| &self.entries[i].1)
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

    /// Winner-take-all: the class whose map quantizes `x` with least error.
    /// Ties go to the lowest class id.
    pub fn classify(&self, x: &[f64]) -> Result<Classification> {
        if self.entries.len() < 2 {
            return Err(Error::Model(format!(
                "classification needs at least 2 class maps, model has {}",
                self.entries.len()
            )));
        }
        self.check_dim(x)?;
        let errors = self
            .entries
            .iter()
            .map(|(c, m)| Ok((*c, m.bmu(x)?.1)))
            .collect::<Result<Vec<_>>>()?;
        let mut best = 0;
        for (i, e) in errors.iter().enumerate() {
            if e.1 < errors[best].1 {
                best = i;
            }
        }
        Ok(Classification {
            class: errors[best].0,
            errors,
        })
    }

    /// Prototype that represents `row`: the BMU in the row's own class map
    /// when labeled, else the BMU in the map that wins classification.
    pub fn winning_prototype(&self, row: &FeatureVector) -> Result<&[f64]> {
        self.check_dim(&row.values)?;
        let map = match row.label {
            Some(class) => self.map_for(class).ok_or(Error::ClassCoverage { class })?,
            None if self.entries.len() == 1 => &self.entries[0].1,
            None => {
                let winner = self.classify(&row.values)?.class;
                self.map_for(winner).expect("winner comes from the model")
            }
        };
        let (unit, _) = map.bmu(&row.values)?;
        Ok(map.prototype(unit))
    }

    pub fn transform(&self, data: &Dataset, mode: TransformMode) -> Result<Dataset> {
        match mode {
            TransformMode::Replace => self.transform_replace(data),
            TransformMode::Append => self.transform_append(data),
        }
    }

    pub fn transform_replace(&self, data: &Dataset) -> Result<Dataset> {
        let rows = data
            .rows()
            .par_iter()
            .map(|r| {
                Ok(FeatureVector::new(
                    self.winning_prototype(r)?.to_vec(),
                    r.label,
                ))
            })
            .collect::<Result<Vec<_>>>()?;
        Dataset::new(rows)
    }

    pub fn transform_append(&self, data: &Dataset) -> Result<Dataset> {
        let rows = data
            .rows()
            .par_iter()
            .map(|r| {
                let mut values = r.values.clone();
                values.extend_from_slice(self.winning_prototype(r)?);
                Ok(FeatureVector::new(values, r.label))
            })
            .collect::<Result<Vec<_>>>()?;
        Dataset::new(rows)
    }
}

/// One sub-dataset per label, ascending, preserving row order within a class.
pub fn split_by_class(data: &Dataset) -> Result<Vec<(ClassId, Dataset)>> {
    let labels = data.labels()?;
    data.class_ids()
        .into_iter()
        .map(|class| {
            let idx: Vec<usize> = (0..labels.len()).filter(|&i| labels[i] == class).collect();
            Ok((class, data.select(&idx)?))
        })
        .collect()
}

/// Trains one `rows x cols` map per class present in `data`.
///
/// Class `k`'s map is initialized and shuffled with seed `seed + k` and sees
/// only class `k`'s rows; maps train in parallel on the current rayon pool.
pub fn train_csom(
    data: &Dataset,
    rows: usize,
    cols: usize,
    sched: &ScheduleSpec,
    seed: u64,
) -> Result<CsomModel> {
    train_csom_for(data, &data.class_ids(), rows, cols, sched, |class| {
        seed.wrapping_add(class.0 as u64)
    })
}

/// As [`train_csom`], for an explicit class list and per-class seed rule.
/// A listed class without rows in `data` is an error.
pub fn train_csom_for(
    data: &Dataset,
    classes: &[ClassId],
    rows: usize,
    cols: usize,
    sched: &ScheduleSpec,
    seed_for: impl Fn(ClassId) -> u64 + Sync,
) -> Result<CsomModel> {
    let mut parts = split_by_class(data)?;
    let mut wanted = classes.to_vec();
    wanted.sort();
    wanted.dedup();
    for &class in &wanted {
        if !parts.iter().any(|(c, _)| *c == class) {
            return Err(Error::ClassData { class });
        }
    }
    parts.retain(|(c, _)| wanted.contains(c));
    let entries = parts
        .into_par_iter()
        .map(|(class, part)| {
            let schedule = sched.resolve(rows, cols, part.len(), seed_for(class));
            Ok((class, fit_map(rows, cols, &part, &schedule)?))
        })
        .collect::<Result<Vec<_>>>()?;
    CsomModel::new(entries)
}
