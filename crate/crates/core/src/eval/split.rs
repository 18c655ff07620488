use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::dataset::{ClassId, Dataset};
use crate::error::{Error, Result};

fn indices_by_class(labels: &[ClassId]) -> BTreeMap<ClassId, Vec<usize>> {
    let mut groups: BTreeMap<ClassId, Vec<usize>> = BTreeMap::new();
    for (i, &l) in labels.iter().enumerate() {
        groups.entry(l).or_default().push(i);
    }
    groups
}

/// Test-row indices of each stratified fold.
///
/// Each class's rows are shuffled (seeded per class) and dealt round-robin;
/// the dealing position carries over from one class to the next so fold
/// sizes stay within one row of each other and no fold is empty.
pub fn kfold_indices(labels: &[ClassId], k: usize, seed: u64) -> Result<Vec<Vec<usize>>> {
    if k < 2 {
        return Err(Error::param(format!("fold count must be >= 2, got {k}")));
    }
    if k > labels.len() {
        return Err(Error::param(format!(
            "fold count {k} exceeds the {} available rows",
            labels.len()
        )));
    }
    let mut folds = vec![Vec::new(); k];
    let mut next = 0;
    for (class, mut idx) in indices_by_class(labels) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(class.0 as u64);
        idx.shuffle(&mut rng);
        for i in idx {
            folds[next].push(i);
            next = (next + 1) % k;
        }
    }
    for f in &mut folds {
        f.sort_unstable();
    }
    Ok(folds)
}

fn complement(n: usize, test: &[usize]) -> Vec<usize> {
    let mut in_test = vec![false; n];
    for &i in test {
        in_test[i] = true;
    }
    (0..n).filter(|&i| !in_test[i]).collect()
}

/// Stratified k-fold `(train, test)` pairs.
pub fn kfold_split(data: &Dataset, k: usize, seed: u64) -> Result<Vec<(Dataset, Dataset)>> {
    let labels = data.labels()?;
    kfold_indices(&labels, k, seed)?
        .into_iter()
        .map(|test| {
            Ok((
                data.select(&complement(data.len(), &test))?,
                data.select(&test)?,
            ))
        })
        .collect()
}

/// Test indices for a fixed-size per-class holdout sample. Classes absent
/// from `test_counts` contribute no test rows; every class keeps at least
/// one training row.
pub fn holdout_indices(
    labels: &[ClassId],
    test_counts: &BTreeMap<ClassId, usize>,
    seed: u64,
) -> Result<Vec<usize>> {
    let groups = indices_by_class(labels);
    for class in test_counts.keys() {
        if !groups.contains_key(class) {
            return Err(Error::param(format!(
                "holdout names class {class}, which has no rows"
            )));
        }
    }
    let mut test = Vec::new();
    for (class, mut idx) in groups {
        let want = test_counts.get(&class).copied().unwrap_or(0);
        if want >= idx.len() {
            return Err(Error::param(format!(
                "holdout of {want} rows leaves no training rows for class {class} ({} rows)",
                idx.len()
            )));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(class.0 as u64);
        idx.shuffle(&mut rng);
        test.extend_from_slice(&idx[..want]);
    }
    if test.is_empty() {
        return Err(Error::param("holdout sample is empty"));
    }
    test.sort_unstable();
    Ok(test)
}

pub(crate) fn train_indices(n: usize, test: &[usize]) -> Vec<usize> {
    complement(n, test)
}
