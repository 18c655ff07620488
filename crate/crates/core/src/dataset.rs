//! Feature vectors, labeled datasets and their CSV form.
//!
//! A dataset CSV has a header `f0,...,fS-1,label`, one row per vector. Labels
//! are integer class ids; an empty label field means the row is unlabeled.
//! Values are written with 17 significant digits so that a write/read cycle
//! reproduces every `f64` exactly.

use std::collections::BTreeSet;
use std::fmt;
use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ClassId(pub u32);

impl fmt::Display for ClassId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.0.fmt(f)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct FeatureVector {
    pub values: Vec<f64>,
    pub label: Option<ClassId>,
}

impl FeatureVector {
    pub fn new(values: Vec<f64>, label: Option<ClassId>) -> Self {
        Self { values, label }
    }

    pub fn labeled(values: Vec<f64>, label: u32) -> Self {
        Self::new(values, Some(ClassId(label)))
    }

    pub fn unlabeled(values: Vec<f64>) -> Self {
        Self::new(values, None)
    }

    pub fn dim(&self) -> usize {
        self.values.len()
    }
}

/// A nonempty collection of feature vectors of uniform dimension.
#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    rows: Vec<FeatureVector>,
    dim: usize,
}

impl Dataset {
    pub fn new(rows: Vec<FeatureVector>) -> Result<Self> {
        let first = rows
            .first()
            .ok_or_else(|| Error::param("dataset must contain at least one row"))?;
        let dim = first.dim();
        if dim == 0 {
            return Err(Error::param(
                "feature vectors must have at least one component",
            ));
        }
        for (i, row) in rows.iter().enumerate() {
            if row.dim() != dim {
                return Err(Error::Shape {
                    expected: dim,
                    actual: row.dim(),
                });
            }
            if row.values.iter().any(|v| !v.is_finite()) {
                return Err(Error::Range(format!("row {i} contains a non-finite value")));
            }
        }
        Ok(Self { rows, dim })
    }

    pub fn rows(&self) -> &[FeatureVector] {
        &self.rows
    }

    pub fn into_rows(self) -> Vec<FeatureVector> {
        self.rows
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    /// Distinct labels present, ascending.
    pub fn class_ids(&self) -> Vec<ClassId> {
        self.rows
            .iter()
            .filter_map(|r| r.label)
            .collect::<BTreeSet<_>>()
            .into_iter()
            .collect()
    }

    pub fn is_fully_labeled(&self) -> bool {
        self.rows.iter().all(|r| r.label.is_some())
    }

    /// Labels of every row; errors on the first unlabeled one.
    pub fn labels(&self) -> Result<Vec<ClassId>> {
        self.rows
            .iter()
            .enumerate()
            .map(|(i, r)| {
                r.label
                    .ok_or_else(|| Error::Label(format!("row {i} is unlabeled")))
            })
            .collect()
    }

    /// Same rows with every label removed.
    pub fn without_labels(&self) -> Dataset {
        let rows = self
            .rows
            .iter()
            .map(|r| FeatureVector::unlabeled(r.values.clone()))
            .collect();
        Dataset {
            rows,
            dim: self.dim,
        }
    }

    /// Rows at the given indices, in that order.
    pub fn select(&self, indices: &[usize]) -> Result<Dataset> {
        Dataset::new(indices.iter().map(|&i| self.rows[i].clone()).collect())
    }

    /// Per-dimension (min, max) over all rows.
    pub fn ranges(&self) -> Vec<(f64, f64)> {
        let mut out = vec![(f64::INFINITY, f64::NEG_INFINITY); self.dim];
        for row in &self.rows {
            for (r, &v) in out.iter_mut().zip(&row.values) {
                r.0 = r.0.min(v);
                r.1 = r.1.max(v);
            }
        }
        out
    }

    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        let mut header: Vec<String> = (0..self.dim).map(|i| format!("f{i}")).collect();
        header.push("label".to_owned());
        w.write_record(&header)?;
        for row in &self.rows {
            let mut record: Vec<String> = row.values.iter().map(|&v| format_f64(v)).collect();
            record.push(row.label.map(|l| l.to_string()).unwrap_or_default());
            w.write_record(&record)?;
        }
        w.flush().map_err(|e| Error::Csv(e.into()))?;
        Ok(())
    }

    pub fn read_csv<R: Read>(reader: R) -> Result<Dataset> {
        let mut r = csv::ReaderBuilder::new()
            .has_headers(true)
            .from_reader(reader);
        let header = r.headers()?.clone();
        let width = header.len();
        if width < 2 || header.get(width - 1) != Some("label") {
            return Err(Error::Format(
                "dataset header must be f0,...,fS-1,label".to_owned(),
            ));
        }
        for (i, name) in header.iter().take(width - 1).enumerate() {
            if name != format!("f{i}") {
                return Err(Error::Format(format!("unexpected header column {name:?}")));
            }
        }
        let mut rows = Vec::new();
        for (line, record) in r.records().enumerate() {
            let record = record?;
            let values = record
                .iter()
                .take(width - 1)
                .map(|s| {
                    s.trim().parse::<f64>().map_err(|_| {
                        Error::Format(format!("row {line}: cannot parse {s:?} as a number"))
                    })
                })
                .collect::<Result<Vec<_>>>()?;
            let label = match record.get(width - 1).map(str::trim) {
                None | Some("") => None,
                Some(s) => Some(ClassId(s.parse().map_err(|_| {
                    Error::Format(format!("row {line}: label {s:?} is not a class id"))
                })?)),
            };
            rows.push(FeatureVector::new(values, label));
        }
        Dataset::new(rows)
    }

    pub fn load(path: &Path) -> Result<Dataset> {
        let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
        Dataset::read_csv(std::io::BufReader::new(file))
    }

    pub fn to_csv_string(&self) -> String {
        let mut buf = Vec::new();
        self.write_csv(&mut buf)
            .expect("writing to a Vec cannot fail");
        String::from_utf8(buf).expect("csv output is utf-8")
    }
}

/// Scientific notation with 17 significant digits; parses back bit-exactly.
pub fn format_f64(v: f64) -> String {
    format!("{v:.16e}")
}

pub fn euclidean(a: &[f64], b: &[f64]) -> f64 {
    squared_euclidean(a, b).sqrt()
}

pub fn squared_euclidean(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn rejects_ragged_rows() {
        let rows = vec![
            FeatureVector::labeled(vec![1.0, 2.0], 0),
            FeatureVector::labeled(vec![1.0], 0),
        ];
        assert!(matches!(
            Dataset::new(rows),
            Err(Error::Shape {
                expected: 2,
                actual: 1
            })
        ));
    }

    #[test]
    fn rejects_empty_and_non_finite() {
        assert!(Dataset::new(vec![]).is_err());
        assert!(Dataset::new(vec![FeatureVector::unlabeled(vec![f64::NAN])]).is_err());
    }

    #[test]
    fn csv_header_and_unlabeled_rows() {
        let ds = Dataset::new(vec![
            FeatureVector::labeled(vec![0.5, -1.0], 3),
            FeatureVector::unlabeled(vec![1.0, 2.0]),
        ])
        .unwrap();
        let text = ds.to_csv_string();
        assert!(text.starts_with("f0,f1,label\n"));
        let back = Dataset::read_csv(text.as_bytes()).unwrap();
        assert_eq!(back, ds);
        assert_eq!(back.class_ids(), vec![ClassId(3)]);
        assert!(back.labels().is_err());
    }

    #[test]
    fn csv_rejects_bad_header() {
        assert!(Dataset::read_csv("a,b\n1,2\n".as_bytes()).is_err());
        assert!(Dataset::read_csv("f0,label\nx,1\n".as_bytes()).is_err());
    }

    proptest! {
        #[test]
        fn csv_round_trip_is_bit_exact(
            rows in prop::collection::vec(
                (prop::collection::vec(-1e300f64..1e300, 3), prop::option::of(0u32..9)),
                1..20,
            )
        ) {
            let ds = Dataset::new(
                rows.into_iter().map(|(v, l)| FeatureVector::new(v, l.map(ClassId))).collect(),
            ).unwrap();
            let back = Dataset::read_csv(ds.to_csv_string().as_bytes()).unwrap();
            for (a, b) in ds.rows().iter().zip(back.rows()) {
                prop_assert_eq!(a.label, b.label);
                for (x, y) in a.values.iter().zip(&b.values) {
                    prop_assert_eq!(x.to_bits(), y.to_bits());
                }
            }
        }
    }
}
