use std::fmt::Write as _;

use crate::dataset::ClassId;

use super::{ExperimentSpec, FoldOutcome, Protocol};

#[derive(Clone, Debug, PartialEq)]
pub struct EvaluationReport {
    pub classes: Vec<ClassId>,
    pub fold_accuracies: Vec<f64>,
    pub mean_accuracy: f64,
    /// `confusion[true][predicted]`, indexed like `classes`.
    pub confusion: Vec<Vec<usize>>,
    /// Test-row indices of each fold into the evaluated dataset.
    pub fold_indices: Vec<Vec<usize>>,
    pub fold_truth: Vec<Vec<ClassId>>,
    pub fold_predictions: Vec<Vec<ClassId>>,
    pub config: Vec<(String, String)>,
}

impl EvaluationReport {
    pub(crate) fn from_outcomes(
        classes: Vec<ClassId>,
        spec: &ExperimentSpec,
        fold_indices: Vec<Vec<usize>>,
        outcomes: &[FoldOutcome],
    ) -> Self {
        let pos = |c: ClassId| {
            classes
                .binary_search(&c)
                .expect("labels come from the dataset")
        };
        let mut confusion = vec![vec![0; classes.len()]; classes.len()];
        for o in outcomes {
            for (t, p) in o.truth.iter().zip(&o.predictions) {
                confusion[pos(*t)][pos(*p)] += 1;
            }
        }
        let fold_accuracies: Vec<f64> = outcomes.iter().map(FoldOutcome::accuracy).collect();
        let mean_accuracy = fold_accuracies.iter().sum::<f64>() / fold_accuracies.len() as f64;
        EvaluationReport {
            classes,
            fold_accuracies,
            mean_accuracy,
            confusion,
            fold_indices,
            fold_truth: outcomes.iter().map(|o| o.truth.clone()).collect(),
            fold_predictions: outcomes.iter().map(|o| o.predictions.clone()).collect(),
            config: config_echo(spec),
        }
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for (k, v) in &self.config {
            writeln!(out, "{k:<12} {v}").unwrap();
        }
        writeln!(out, "mean accuracy {:.2}%", 100.0 * self.mean_accuracy).unwrap();
        let folds: Vec<String> = self
            .fold_accuracies
            .iter()
            .map(|a| format!("{:.2}%", 100.0 * a))
            .collect();
        writeln!(out, "per fold     {}", folds.join(" ")).unwrap();
        writeln!(out, "confusion (rows = true class, columns = predicted)").unwrap();
        write!(out, "{:>8}", "").unwrap();
        for c in &self.classes {
            write!(out, "{:>6}", c.0).unwrap();
        }
        out.push('\n');
        for (c, row) in self.classes.iter().zip(&self.confusion) {
            write!(out, "{:>8}", c.0).unwrap();
            for n in row {
                write!(out, "{n:>6}").unwrap();
            }
            out.push('\n');
        }
        out
    }

    /// `fold,accuracy` rows followed by a `mean` row.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("fold,accuracy\n");
        for (i, a) in self.fold_accuracies.iter().enumerate() {
            writeln!(out, "{i},{a:.6}").unwrap();
        }
        writeln!(out, "mean,{:.6}", self.mean_accuracy).unwrap();
        out
    }

    /// `row,true,predicted` for one fold.
    pub fn fold_csv(&self, fold: usize) -> String {
        let mut out = String::from("row,true,predicted\n");
        let rows = self.fold_indices[fold].iter();
        for ((row, t), p) in rows
            .zip(&self.fold_truth[fold])
            .zip(&self.fold_predictions[fold])
        {
            writeln!(out, "{row},{t},{p}").unwrap();
        }
        out
    }
}

fn config_echo(spec: &ExperimentSpec) -> Vec<(String, String)> {
    let fisher = match spec.fisher {
        None => "off".to_owned(),
        Some(None) => "classes-1".to_owned(),
        Some(Some(d)) => d.to_string(),
    };
    let protocol = match &spec.protocol {
        Protocol::KFold { folds } => format!("{folds}-fold stratified cross-validation"),
        Protocol::Holdout { test_counts } => {
            let counts: Vec<String> = test_counts
                .iter()
                .map(|(c, n)| format!("{c}:{n}"))
                .collect();
            format!("holdout {}", counts.join(","))
        }
    };
    let s = &spec.schedule;
    let schedule = format!(
        "iterations={} alpha={}->{} sigma={}->{}",
        s.iterations
            .map_or("100*rows".to_owned(), |t| t.to_string()),
        s.alpha0,
        s.alpha_final,
        s.sigma0
            .map_or("max(rows,cols)/2".to_owned(), |v| v.to_string()),
        s.sigma_final
    );
    vec![
        ("pipeline".to_owned(), spec.pipeline.label()),
        ("classifier".to_owned(), spec.classifier.label()),
        ("fisher".to_owned(), fisher),
        ("protocol".to_owned(), protocol),
        ("schedule".to_owned(), schedule),
        ("seed".to_owned(), spec.seed.to_string()),
    ]
}

/// Mean accuracies laid out with classifiers as rows and pipelines as columns.
#[derive(Clone, Debug, PartialEq)]
pub struct ComparisonTable {
    pub columns: Vec<String>,
    pub rows: Vec<String>,
    /// `accuracies[row][column]` in `[0, 1]`.
    pub accuracies: Vec<Vec<f64>>,
}

impl ComparisonTable {
    pub fn to_text(&self) -> String {
        let first = self
            .rows
            .iter()
            .map(String::len)
            .max()
            .unwrap_or(0)
            .max("Classifiers".len())
            + 2;
        let widths: Vec<usize> = self.columns.iter().map(|c| c.len().max(8) + 2).collect();
        let mut out = format!("{:<first$}", "Classifiers");
        for (c, w) in self.columns.iter().zip(&widths) {
            write!(out, "{c:>w$}").unwrap();
        }
        out = out.trim_end().to_owned();
        out.push('\n');
        for (name, row) in self.rows.iter().zip(&self.accuracies) {
            write!(out, "{name:<first$}").unwrap();
            for (a, w) in row.iter().zip(&widths) {
                write!(out, "{:>w$}", format!("{:.2}%", 100.0 * a)).unwrap();
            }
            out.push('\n');
        }
        out
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("classifier");
        for c in &self.columns {
            write!(out, ",{c}").unwrap();
        }
        out.push('\n');
        for (name, row) in self.rows.iter().zip(&self.accuracies) {
            out.push_str(name);
            for a in row {
                write!(out, ",{a:.6}").unwrap();
            }
            out.push('\n');
        }
        out
    }
}
