use std::collections::BTreeSet;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use csom::config::{parse_manifest, ExperimentConfig};
use csom::csom::train_csom;
use csom::dataset::{format_f64, Dataset, FeatureVector};
use csom::eval::compare;
use csom::fisher::fit_fisher;
use csom::imaging::{preprocess, read_pgm_file};
use csom::model_file::{ModelFile, ModelMaps};
use csom::roi::select_regions;
use csom::som::fit_map;
use csom::texture::extract_features;
use csom::{Error, Result};
use rayon::prelude::*;

use crate::output::{io_err, write_atomic};
use crate::{Command, GlobalArgs};

pub fn run(global: GlobalArgs, command: Command) -> Result<()> {
    let mut cfg = match &global.config {
        Some(path) => ExperimentConfig::load(path)?,
        None => ExperimentConfig::default(),
    };
    if let Some(seed) = global.seed {
        cfg.seed = seed;
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(global.jobs)
        .build()
        .map_err(|e| Error::Config(format!("--jobs: {e}")))?;
    pool.install(|| match command {
        Command::Extract {
            manifest,
            images_dir,
            images,
            dump_masks,
            output,
        } => extract(
            &cfg,
            manifest,
            images_dir,
            &images,
            dump_masks.as_deref(),
            &output,
        ),
        Command::Train {
            data,
            single_som,
            output,
        } => train(&cfg, &data, single_som, &output),
        Command::Transform {
            model,
            data,
            mode,
            output,
        } => {
            let model = ModelFile::load(&model)?;
            let out = model.transform(&Dataset::load(&data)?, mode)?;
            write_atomic(&output, out.to_csv_string().as_bytes())
        }
        Command::Classify {
            model,
            data,
            vector,
            errors,
            output,
        } => classify(
            &model,
            data.as_deref(),
            vector.as_deref(),
            errors,
            output.as_deref(),
        ),
        Command::Evaluate { data, output } => evaluate(&cfg, data, &output),
    })
}

fn extract(
    cfg: &ExperimentConfig,
    manifest: Option<PathBuf>,
    images_dir: Option<PathBuf>,
    only: &[String],
    dump_masks: Option<&Path>,
    output: &Path,
) -> Result<()> {
    let manifest = manifest
        .or_else(|| cfg.extract.manifest.clone())
        .ok_or_else(|| {
            Error::Config("no manifest: pass --manifest or set [extract] manifest".to_owned())
        })?;
    let text = std::fs::read_to_string(&manifest).map_err(|e| io_err(&manifest, e))?;
    let mut entries = parse_manifest(&text)?;
    if !only.is_empty() {
        let listed: BTreeSet<&str> = entries.iter().map(|(n, _)| n.as_str()).collect();
        if let Some(missing) = only.iter().find(|n| !listed.contains(n.as_str())) {
            return Err(Error::Extraction {
                image: missing.clone(),
                reason: format!("no entry in manifest {}", manifest.display()),
            });
        }
        entries.retain(|(n, _)| only.contains(n));
    }
    let dir = images_dir
        .or_else(|| cfg.extract.images_dir.clone())
        .or_else(|| manifest.parent().map(Path::to_path_buf))
        .unwrap_or_default();

    let results: Vec<Result<(FeatureVector, bool, String)>> = entries
        .par_iter()
        .map(|(name, class)| {
            let named = |e: Error| match e {
                e @ Error::Extraction { .. } => e,
                other => Error::Extraction {
                    image: name.clone(),
                    reason: other.to_string(),
                },
            };
            let img = read_pgm_file(&dir.join(name)).map_err(named)?;
            let img = preprocess(&img, &cfg.preprocess).map_err(named)?;
            let features = extract_features(&img, &cfg.roi, &cfg.texture, name).map_err(named)?;
            let mut masks = String::new();
            if dump_masks.is_some() {
                for (i, mask) in select_regions(&img, &cfg.roi)
                    .map_err(named)?
                    .iter()
                    .enumerate()
                {
                    masks.push_str(&mask.to_rle_line(name, i));
                    masks.push('\n');
                }
            }
            let row = FeatureVector::new(features.vector.values, Some(*class));
            Ok((row, features.degenerate, masks))
        })
        .collect();

    let mut rows = Vec::with_capacity(results.len());
    let mut mask_text = String::new();
    for ((name, _), r) in entries.iter().zip(results) {
        let (row, degenerate, masks) = r?;
        if degenerate {
            eprintln!("warning: {name}: some region/offset pairs had no pixel pairs; their features are zero");
        }
        rows.push(row);
        mask_text.push_str(&masks);
    }
    let csv = Dataset::new(rows)?.to_csv_string();
    if let Some(path) = dump_masks {
        write_atomic(path, mask_text.as_bytes())?;
    }
    write_atomic(output, csv.as_bytes())
}

fn train(cfg: &ExperimentConfig, data: &Path, single_som: bool, output: &Path) -> Result<()> {
    let data = Dataset::load(data)?;
    data.labels()?;
    let fisher = match cfg.fisher.setting() {
        None => None,
        Some(d) => {
            let d = d.unwrap_or(data.class_ids().len().saturating_sub(1));
            Some(fit_fisher(&data, d)?)
        }
    };
    let reduced = match &fisher {
        Some(f) => f.project_dataset(&data)?,
        None => data,
    };
    let (rows, cols) = (cfg.som.rows, cfg.som.cols);
    let maps = if single_som {
        let sched = cfg
            .som
            .schedule
            .resolve(rows, cols, reduced.len(), cfg.seed);
        ModelMaps::Pooled(fit_map(rows, cols, &reduced.without_labels(), &sched)?)
    } else {
        ModelMaps::Concurrent(train_csom(
            &reduced,
            rows,
            cols,
            &cfg.som.schedule,
            cfg.seed,
        )?)
    };
    let mut metadata = vec![(
        "model.kind".to_owned(),
        if single_som { "single-som" } else { "csom" }.to_owned(),
    )];
    metadata.extend(cfg.model_metadata());
    let model = ModelFile {
        metadata,
        fisher,
        maps,
    };
    write_atomic(output, model.to_text().as_bytes())
}

fn parse_vector(text: &str) -> Result<Dataset> {
    let values = text
        .split(',')
        .map(|v| {
            v.trim()
                .parse::<f64>()
                .map_err(|_| Error::Format(format!("--vector: bad number {v:?}")))
        })
        .collect::<Result<Vec<_>>>()?;
    Dataset::new(vec![FeatureVector::unlabeled(values)])
}

fn classify(
    model: &Path,
    data: Option<&Path>,
    vector: Option<&str>,
    errors: bool,
    output: Option<&Path>,
) -> Result<()> {
    let model = ModelFile::load(model)?;
    let csom = model.concurrent()?;
    let data = match (data, vector) {
        (Some(path), _) => Dataset::load(path)?,
        (None, Some(v)) => parse_vector(v)?,
        (None, None) => return Err(Error::Config("pass --data or --vector".to_owned())),
    };
    let reduced = model.project(&data)?.without_labels();
    let results = reduced
        .rows()
        .par_iter()
        .map(|r| csom.classify(&r.values))
        .collect::<Result<Vec<_>>>()?;

    let mut out = String::from("row,predicted");
    if errors {
        for class in csom.classes() {
            write!(out, ",qe_{class}").unwrap();
        }
    }
    out.push('\n');
    for (i, c) in results.iter().enumerate() {
        write!(out, "{i},{}", c.class).unwrap();
        if errors {
            for (_, e) in &c.errors {
                write!(out, ",{}", format_f64(*e)).unwrap();
            }
        }
        out.push('\n');
    }
    match output {
        Some(path) => write_atomic(path, out.as_bytes()),
        None => {
            print!("{out}");
            Ok(())
        }
    }
}

fn evaluate(cfg: &ExperimentConfig, data: Option<PathBuf>, output: &Path) -> Result<()> {
    let path = data
        .or_else(|| cfg.evaluate.dataset.clone())
        .ok_or_else(|| {
            Error::Config("no dataset: pass --data or set [evaluate] dataset".to_owned())
        })?;
    let pipelines = cfg.pipelines()?;
    let classifiers = cfg.classifiers()?;
    let base = cfg.experiment_spec(pipelines[0], classifiers[0])?;
    let data = Dataset::load(&path)?;
    let (table, reports) = compare(&data, &base, &pipelines, &classifiers)?;

    let mut details = String::new();
    for r in &reports {
        details.push_str(&r.to_text());
        details.push('\n');
    }
    std::fs::create_dir_all(output).map_err(|e| io_err(output, e))?;
    let text = table.to_text();
    write_atomic(&output.join("comparison.txt"), text.as_bytes())?;
    write_atomic(&output.join("comparison.csv"), table.to_csv().as_bytes())?;
    write_atomic(&output.join("reports.txt"), details.as_bytes())?;
    print!("{text}");
    Ok(())
}
