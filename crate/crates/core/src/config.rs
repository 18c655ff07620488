//! TOML experiment configuration and the image manifest.
//!
//! ```toml
//! seed = 7
//!
//! [roi]
//! mode = "blockwise"
//! m = 8
//!
//! [texture]
//! levels = 3
//! offsets = [[0, 1], [1, 0]]
//!
//! [fisher]
//! dim = 6
//!
//! [som]
//! rows = 5
//! cols = 5
//! schedule = { alpha0 = 0.5, sigma_final = 0.5 }
//!
//! [evaluate]
//! dataset = "features.csv"
//! classifiers = ["1nn", "gnb"]
//! pipelines = [
//!   { kind = "csom", rows = 5, cols = 5 },
//!   { kind = "single-som", rows = 10, cols = 10 },
//! ]
//! ```
//!
//! Relative paths are resolved against the directory holding the config file.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::csom::TransformMode;
use crate::dataset::ClassId;
use crate::error::{Error, Result};
use crate::eval::{ClassifierKind, ExperimentSpec, FeaturePipeline, FisherSetting, Protocol};
use crate::imaging::PreprocessConfig;
use crate::roi::RoiConfig;
use crate::som::ScheduleSpec;
use crate::texture::TextureConfig;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FisherConfig {
    pub enabled: bool,
    /// Output dimension; defaults to one less than the class count.
    pub dim: Option<usize>,
}

impl Default for FisherConfig {
    fn default() -> Self {
        Self {
            enabled: true,
            dim: None,
        }
    }
}

impl FisherConfig {
    pub fn setting(&self) -> FisherSetting {
        self.enabled.then_some(self.dim)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SomConfig {
    pub rows: usize,
    pub cols: usize,
    pub mode: String,
    pub schedule: ScheduleSpec,
}

impl Default for SomConfig {
    fn default() -> Self {
        Self {
            rows: 5,
            cols: 5,
            mode: "replace".to_owned(),
            schedule: ScheduleSpec::default(),
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExtractConfig {
    pub manifest: Option<PathBuf>,
    /// Directory the manifest's file names are relative to.
    pub images_dir: Option<PathBuf>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PipelineConfig {
    /// `raw`, `csom` or `single-som`.
    pub kind: String,
    pub rows: Option<usize>,
    pub cols: Option<usize>,
    pub mode: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvaluateConfig {
    pub dataset: Option<PathBuf>,
    pub folds: usize,
    /// Per-class test counts keyed by class id; replaces k-fold when set.
    pub holdout: Option<BTreeMap<String, usize>>,
    pub classifiers: Vec<String>,
    pub knn_k: usize,
    /// Defaults to a single concurrent-map pipeline sized by `[som]`.
    pub pipelines: Vec<PipelineConfig>,
}

impl Default for EvaluateConfig {
    fn default() -> Self {
        Self {
            dataset: None,
            folds: 10,
            holdout: None,
            classifiers: vec!["1nn".to_owned()],
            knn_k: 3,
            pipelines: Vec::new(),
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub seed: u64,
    pub preprocess: PreprocessConfig,
    pub roi: RoiConfig,
    pub texture: TextureConfig,
    pub fisher: FisherConfig,
    pub som: SomConfig,
    pub extract: ExtractConfig,
    pub evaluate: EvaluateConfig,
}

fn config_err(section: &str, e: Error) -> Error {
    match e {
        Error::Parameter(msg) | Error::Config(msg) => Error::Config(format!("[{section}] {msg}")),
        other => Error::Config(format!("[{section}] {other}")),
    }
}

fn parse_mode(section: &str, mode: &str) -> Result<TransformMode> {
    mode.parse().map_err(|e| config_err(section, e))
}

impl ExperimentConfig {
    /// Parses and validates.
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: ExperimentConfig =
            toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Reads, parses, validates and resolves relative paths.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        let mut cfg = Self::from_toml_str(&text).map_err(|e| match e {
            Error::Config(msg) => Error::Config(format!("{}: {msg}", path.display())),
            other => other,
        })?;
        if let Some(base) = path.parent() {
            let fix = |p: &mut Option<PathBuf>| {
                if let Some(p) = p {
                    if p.is_relative() {
                        *p = base.join(&*p);
                    }
                }
            };
            fix(&mut cfg.extract.manifest);
            fix(&mut cfg.extract.images_dir);
            fix(&mut cfg.evaluate.dataset);
        }
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        self.roi.validate().map_err(|e| config_err("roi", e))?;
        self.texture
            .validate()
            .map_err(|e| config_err("texture", e))?;
        if self.fisher.dim == Some(0) {
            return Err(Error::Config("[fisher] dim must be >= 1".to_owned()));
        }
        if self.som.rows == 0 || self.som.cols == 0 {
            return Err(Error::Config("[som] rows and cols must be >= 1".to_owned()));
        }
        parse_mode("som", &self.som.mode)?;
        if self.som.schedule.iterations == Some(0) {
            return Err(Error::Config(
                "[som.schedule] iterations must be >= 1".to_owned(),
            ));
        }
        self.som
            .schedule
            .resolve(self.som.rows, self.som.cols, 1, self.seed)
            .validate()
            .map_err(|e| config_err("som.schedule", e))?;
        if self.evaluate.knn_k == 0 {
            return Err(Error::Config("[evaluate] knn_k must be >= 1".to_owned()));
        }
        self.classifiers()?;
        self.pipelines()?;
        self.protocol()?;
        Ok(())
    }

    pub fn transform_mode(&self) -> Result<TransformMode> {
        parse_mode("som", &self.som.mode)
    }

    pub fn classifiers(&self) -> Result<Vec<ClassifierKind>> {
        if self.evaluate.classifiers.is_empty() {
            return Err(Error::Config(format!(
                "[evaluate] classifiers is empty; valid names: {}",
                ClassifierKind::NAMES.join(", ")
            )));
        }
        self.evaluate
            .classifiers
            .iter()
            .map(|n| {
                ClassifierKind::from_name(n, self.evaluate.knn_k)
                    .map_err(|e| config_err("evaluate", e))
            })
            .collect()
    }

    pub fn pipelines(&self) -> Result<Vec<FeaturePipeline>> {
        if self.evaluate.pipelines.is_empty() {
            return Ok(vec![FeaturePipeline::Csom {
                rows: self.som.rows,
                cols: self.som.cols,
                mode: self.transform_mode()?,
            }]);
        }
        self.evaluate
            .pipelines
            .iter()
            .map(|p| {
                let rows = p.rows.unwrap_or(self.som.rows);
                let cols = p.cols.unwrap_or(self.som.cols);
                if rows == 0 || cols == 0 {
                    return Err(Error::Config("[evaluate] pipeline rows and cols must be >= 1".to_owned()));
                }
                let mode = match &p.mode {
                    Some(m) => parse_mode("evaluate", m)?,
                    None => self.transform_mode()?,
                };
                match p.kind.as_str() {
                    "raw" => Ok(FeaturePipeline::Raw),
                    "csom" => Ok(FeaturePipeline::Csom { rows, cols, mode }),
                    "single-som" => Ok(FeaturePipeline::SingleSom { rows, cols, mode }),
                    other => Err(Error::Config(format!(
                        "[evaluate] unknown pipeline kind {other:?}; valid kinds: raw, csom, single-som"
                    ))),
                }
            })
            .collect()
    }

    pub fn protocol(&self) -> Result<Protocol> {
        match &self.evaluate.holdout {
            Some(counts) => {
                let mut test_counts = BTreeMap::new();
                for (k, &n) in counts {
                    let id: u32 = k.parse().map_err(|_| {
                        Error::Config(format!("[evaluate] holdout key {k:?} is not a class id"))
                    })?;
                    test_counts.insert(ClassId(id), n);
                }
                if test_counts.values().all(|&n| n == 0) {
                    return Err(Error::Config(
                        "[evaluate] holdout selects no test rows".to_owned(),
                    ));
                }
                Ok(Protocol::Holdout { test_counts })
            }
            None if self.evaluate.folds < 2 => {
                Err(Error::Config("[evaluate] folds must be >= 2".to_owned()))
            }
            None => Ok(Protocol::KFold {
                folds: self.evaluate.folds,
            }),
        }
    }

    /// Experiment settings for one pipeline/classifier pair.
    pub fn experiment_spec(
        &self,
        pipeline: FeaturePipeline,
        classifier: ClassifierKind,
    ) -> Result<ExperimentSpec> {
        Ok(ExperimentSpec {
            pipeline,
            classifier,
            fisher: self.fisher.setting(),
            schedule: self.som.schedule.clone(),
            protocol: self.protocol()?,
            seed: self.seed,
        })
    }

    /// Configuration echo stored in model files.
    pub fn model_metadata(&self) -> Vec<(String, String)> {
        let r = &self.roi;
        let t = &self.texture;
        let s = &self.som.schedule;
        let offsets: Vec<String> = t
            .offsets
            .iter()
            .map(|(dr, dc)| format!("{dr}:{dc}"))
            .collect();
        let opt = |v: Option<String>| v.unwrap_or_else(|| "default".to_owned());
        vec![
            ("roi.mode".into(), format!("{:?}", r.mode).to_lowercase()),
            ("roi.sn".into(), r.sn.to_string()),
            ("roi.m".into(), r.m.to_string()),
            (
                "roi.min_region_pixels".into(),
                r.min_region_pixels.to_string(),
            ),
            ("texture.levels".into(), t.levels.to_string()),
            ("texture.offsets".into(), offsets.join(" ")),
            ("texture.symmetric".into(), t.symmetric.to_string()),
            ("fisher.enabled".into(), self.fisher.enabled.to_string()),
            (
                "fisher.dim".into(),
                opt(self.fisher.dim.map(|d| d.to_string())),
            ),
            (
                "som.grid".into(),
                format!("{}x{}", self.som.rows, self.som.cols),
            ),
            (
                "som.iterations".into(),
                opt(s.iterations.map(|t| t.to_string())),
            ),
            (
                "som.alpha".into(),
                format!("{} {}", s.alpha0, s.alpha_final),
            ),
            (
                "som.sigma".into(),
                format!("{} {}", opt(s.sigma0.map(|v| v.to_string())), s.sigma_final),
            ),
            ("seed".into(), self.seed.to_string()),
        ]
    }
}

/// Parses `filename,class_id` lines. Blank lines and `#` comments are skipped.
pub fn parse_manifest(text: &str) -> Result<Vec<(String, ClassId)>> {
    let mut entries = Vec::new();
    for (n, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (name, class) = line.rsplit_once(',').ok_or_else(|| {
            Error::Format(format!(
                "manifest line {}: expected `filename,class_id`",
                n + 1
            ))
        })?;
        let class: u32 = class.trim().parse().map_err(|_| {
            Error::Format(format!("manifest line {}: bad class id {class:?}", n + 1))
        })?;
        let name = name.trim();
        if name.is_empty() {
            return Err(Error::Format(format!(
                "manifest line {}: empty file name",
                n + 1
            )));
        }
        entries.push((name.to_owned(), ClassId(class)));
    }
    if entries.is_empty() {
        return Err(Error::Config("manifest lists no images".to_owned()));
    }
    Ok(entries)
}
