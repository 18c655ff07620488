use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use csom::dataset::Dataset;
use csom::imaging::{write_pgm, Image, PgmEncoding};
use csom::model_file::{ModelFile, ModelMaps};
use csom::synthetic::{gaussian_clusters, ClusterSpec};
use tempfile::TempDir;

fn csom(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_csom"))
        .args(args)
        .output()
        .unwrap()
}

fn code(out: &Output) -> i32 {
    out.status.code().unwrap()
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

fn write(dir: &Path, name: &str, text: &str) -> PathBuf {
    let path = dir.join(name);
    fs::write(&path, text).unwrap();
    path
}

fn texture_image(seed: u32) -> Image {
    let (w, h) = (24, 20);
    let pixels = (0..w * h)
        .map(|i| {
            let (r, c) = ((i / w) as u32, (i % w) as u32);
            1 + (r * (3 + seed) + c * c * (1 + seed) + seed * 7) % 200
        })
        .collect();
    Image::new(w, h, 255, pixels).unwrap()
}

fn image_dir() -> TempDir {
    let dir = TempDir::new().unwrap();
    for i in 0..3 {
        let enc = if i == 1 {
            PgmEncoding::Ascii
        } else {
            PgmEncoding::Binary
        };
        fs::write(
            dir.path().join(format!("img{i}.pgm")),
            write_pgm(&texture_image(i), enc),
        )
        .unwrap();
    }
    write(
        dir.path(),
        "manifest.txt",
        "img0.pgm,0\nimg1.pgm,1\nimg2.pgm,0\n",
    );
    write(
        dir.path(),
        "block.toml",
        "[roi]\nmode = \"blockwise\"\nm = 4\n[texture]\noffsets = [[0, 1], [1, 0], [2, 2]]\n",
    );
    dir
}

fn labeled_csv(dir: &Path) -> PathBuf {
    let data = gaussian_clusters(
        &ClusterSpec {
            class_sizes: vec![14, 10, 8],
            dim: 5,
            separation: 4.0,
            std_dev: 1.0,
        },
        9,
    );
    write(dir, "train.csv", &data.to_csv_string())
}

fn small_config(dir: &Path, extra: &str) -> PathBuf {
    let text =
        format!("seed = 3\n[som]\nrows = 2\ncols = 3\nschedule = {{ iterations = 400 }}\n{extra}");
    write(dir, "exp.toml", &text)
}

#[test]
fn extract_blockwise_shape_and_determinism() {
    let dir = image_dir();
    let d = dir.path();
    let (cfg, manifest) = (d.join("block.toml"), d.join("manifest.txt"));
    let (out1, out2, masks) = (d.join("a.csv"), d.join("b.csv"), d.join("masks.txt"));
    let run = |out: &Path, jobs: &str| {
        csom(&[
            "extract",
            "--config",
            p(&cfg),
            "--manifest",
            p(&manifest),
            "--jobs",
            jobs,
            "--dump-masks",
            p(&masks),
            "-o",
            p(out),
        ])
    };
    let r = run(&out1, "1");
    assert_eq!(code(&r), 0, "{}", stderr(&r));
    let r = run(&out2, "3");
    assert_eq!(code(&r), 0, "{}", stderr(&r));

    let a = fs::read(&out1).unwrap();
    assert_eq!(a, fs::read(&out2).unwrap());
    let data = Dataset::load(&out1).unwrap();
    assert_eq!(data.len(), 3);
    assert_eq!(data.dim() + 1, 4 * 3 + 1);
    let header = String::from_utf8(a).unwrap();
    assert_eq!(header.lines().next().unwrap().split(',').count(), 4 * 3 + 1);
    let labels: Vec<u32> = data.labels().unwrap().iter().map(|c| c.0).collect();
    assert_eq!(labels, vec![0, 1, 0]);
    let masks = fs::read_to_string(&masks).unwrap();
    assert!(masks.lines().next().unwrap().starts_with("img0.pgm\t0\t"));
}

#[test]
fn extract_pixelwise_default_length() {
    let dir = image_dir();
    let out = dir.path().join("px.csv");
    let r = csom(&[
        "extract",
        "--manifest",
        p(&dir.path().join("manifest.txt")),
        "-o",
        p(&out),
    ]);
    assert_eq!(code(&r), 0, "{}", stderr(&r));
    assert_eq!(Dataset::load(&out).unwrap().dim(), 6 * 4 * 4);
}

#[test]
fn extract_empty_manifest_is_usage_error() {
    let dir = image_dir();
    let manifest = write(dir.path(), "empty.txt", "# nothing here\n");
    let out = dir.path().join("out.csv");
    let r = csom(&["extract", "--manifest", p(&manifest), "-o", p(&out)]);
    assert_eq!(code(&r), 1, "{}", stderr(&r));
    assert!(!out.exists());
}

#[test]
fn extract_unreadable_image_is_named_and_aborts() {
    let dir = image_dir();
    let manifest = write(dir.path(), "bad.txt", "img0.pgm,0\nghost.pgm,1\n");
    let out = dir.path().join("out.csv");
    let r = csom(&["extract", "--manifest", p(&manifest), "-o", p(&out)]);
    assert_eq!(code(&r), 2);
    assert!(stderr(&r).contains("ghost.pgm"), "{}", stderr(&r));
    assert!(!out.exists());

    fs::write(dir.path().join("junk.pgm"), b"P5\n4 4\n255\nab").unwrap();
    let manifest = write(dir.path(), "junk.txt", "junk.pgm,0\n");
    let r = csom(&["extract", "--manifest", p(&manifest), "-o", p(&out)]);
    assert_eq!(code(&r), 2);
    assert!(stderr(&r).contains("junk.pgm"), "{}", stderr(&r));
    assert!(!out.exists());
}

#[test]
fn extract_image_without_manifest_entry_is_named() {
    let dir = image_dir();
    let out = dir.path().join("out.csv");
    let r = csom(&[
        "extract",
        "--manifest",
        p(&dir.path().join("manifest.txt")),
        "-o",
        p(&out),
        "img2.pgm",
        "stray.pgm",
    ]);
    assert_ne!(code(&r), 0);
    assert!(stderr(&r).contains("stray.pgm"), "{}", stderr(&r));
    assert!(!out.exists());

    let r = csom(&[
        "extract",
        "--manifest",
        p(&dir.path().join("manifest.txt")),
        "-o",
        p(&out),
        "img2.pgm",
        "img0.pgm",
    ]);
    assert_eq!(code(&r), 0, "{}", stderr(&r));
    // manifest order, not argument order
    let text = fs::read_to_string(&out).unwrap();
    assert_eq!(text.lines().count(), 3);
}

#[test]
fn train_is_deterministic_and_single_som_has_one_map() {
    let dir = TempDir::new().unwrap();
    let d = dir.path();
    let (csv, cfg) = (labeled_csv(d), small_config(d, ""));
    let (m1, m2, m3) = (d.join("m1.txt"), d.join("m2.txt"), d.join("single.txt"));
    for (out, jobs) in [(&m1, "1"), (&m2, "4")] {
        let r = csom(&[
            "train",
            "--config",
            p(&cfg),
            "--data",
            p(&csv),
            "--jobs",
            jobs,
            "-o",
            p(out),
        ]);
        assert_eq!(code(&r), 0, "{}", stderr(&r));
    }
    assert_eq!(fs::read(&m1).unwrap(), fs::read(&m2).unwrap());
    let text = fs::read_to_string(&m1).unwrap();
    assert_eq!(text.matches("[map class=").count(), 3);
    assert!(text.contains("model.kind csom"));

    let r = csom(&[
        "train",
        "--config",
        p(&cfg),
        "--data",
        p(&csv),
        "--single-som",
        "-o",
        p(&m3),
    ]);
    assert_eq!(code(&r), 0, "{}", stderr(&r));
    let text = fs::read_to_string(&m3).unwrap();
    assert_eq!(text.matches("[map ").count(), 1);
    assert!(matches!(
        ModelFile::load(&m3).unwrap().maps,
        ModelMaps::Pooled(_)
    ));

    let r = csom(&["classify", "--model", p(&m3), "--data", p(&csv)]);
    assert_eq!(code(&r), 2, "{}", stderr(&r));
}

#[test]
fn seed_flag_changes_the_model() {
    let dir = TempDir::new().unwrap();
    let d = dir.path();
    let (csv, cfg) = (labeled_csv(d), small_config(d, ""));
    let (a, b) = (d.join("a.txt"), d.join("b.txt"));
    csom(&["train", "--config", p(&cfg), "--data", p(&csv), "-o", p(&a)]);
    csom(&[
        "train",
        "--config",
        p(&cfg),
        "--seed",
        "99",
        "--data",
        p(&csv),
        "-o",
        p(&b),
    ]);
    let (a, b) = (
        fs::read_to_string(a).unwrap(),
        fs::read_to_string(b).unwrap(),
    );
    assert_ne!(a, b);
    assert!(b.contains("\nseed 99\n"));
}

#[test]
fn tampered_model_is_integrity_error() {
    let dir = TempDir::new().unwrap();
    let d = dir.path();
    let (csv, cfg) = (labeled_csv(d), small_config(d, ""));
    let model = d.join("m.txt");
    let r = csom(&[
        "train",
        "--config",
        p(&cfg),
        "--data",
        p(&csv),
        "-o",
        p(&model),
    ]);
    assert_eq!(code(&r), 0, "{}", stderr(&r));
    let text = fs::read_to_string(&model).unwrap();
    let at = text.find("\nw ").unwrap() + 3;
    let mut bytes = text.into_bytes();
    bytes[at] = if bytes[at] == b'-' { b'1' } else { b'-' };
    fs::write(&model, bytes).unwrap();

    let out = d.join("t.csv");
    for args in [
        vec!["classify", "--model", p(&model), "--data", p(&csv)],
        vec![
            "transform",
            "--model",
            p(&model),
            "--data",
            p(&csv),
            "-o",
            p(&out),
        ],
    ] {
        let r = csom(&args);
        assert_eq!(code(&r), 3, "{}", stderr(&r));
        assert!(stderr(&r).contains("checksum"));
    }
    assert!(!out.exists());
}

#[test]
fn transform_shapes_and_prototype_membership() {
    let dir = TempDir::new().unwrap();
    let d = dir.path();
    let (csv, cfg) = (labeled_csv(d), small_config(d, "[fisher]\ndim = 2\n"));
    let model = d.join("m.txt");
    let r = csom(&[
        "train",
        "--config",
        p(&cfg),
        "--data",
        p(&csv),
        "-o",
        p(&model),
    ]);
    assert_eq!(code(&r), 0, "{}", stderr(&r));

    let (rep, app) = (d.join("rep.csv"), d.join("app.csv"));
    assert_eq!(
        code(&csom(&[
            "transform",
            "--model",
            p(&model),
            "--data",
            p(&csv),
            "-o",
            p(&rep)
        ])),
        0
    );
    let r = csom(&[
        "transform",
        "--model",
        p(&model),
        "--data",
        p(&csv),
        "--mode",
        "append",
        "-o",
        p(&app),
    ]);
    assert_eq!(code(&r), 0, "{}", stderr(&r));

    let header_width = |path: &Path| {
        fs::read_to_string(path)
            .unwrap()
            .lines()
            .next()
            .unwrap()
            .split(',')
            .count()
    };
    assert_eq!(header_width(&rep), 2 + 1);
    assert_eq!(header_width(&app), 2 * 2 + 1);

    let loaded = ModelFile::load(&model).unwrap();
    let protos = loaded.prototypes();
    let replaced = Dataset::load(&rep).unwrap();
    let input = Dataset::load(&csv).unwrap();
    assert_eq!(replaced.labels().unwrap(), input.labels().unwrap());
    for row in replaced.rows() {
        assert!(
            protos.contains(&row.values.as_slice()),
            "{:?} is not a prototype",
            row.values
        );
    }

    let wide = write(d, "wide.csv", "f0,f1,label\n1,2,0\n");
    let r = csom(&[
        "transform",
        "--model",
        p(&model),
        "--data",
        p(&wide),
        "-o",
        p(&d.join("w.csv")),
    ]);
    assert_eq!(code(&r), 2);
    assert!(
        stderr(&r).contains("expected dimension 5, got 2"),
        "{}",
        stderr(&r)
    );

    let r = csom(&[
        "transform",
        "--model",
        p(&model),
        "--data",
        p(&csv),
        "--mode",
        "merge",
        "-o",
        p(&rep),
    ]);
    assert_eq!(code(&r), 1);
}

#[test]
fn classify_rows_errors_and_exact_hit() {
    let dir = TempDir::new().unwrap();
    let d = dir.path();
    let (csv, cfg) = (
        labeled_csv(d),
        small_config(d, "[fisher]\nenabled = false\n"),
    );
    let model = d.join("m.txt");
    let r = csom(&[
        "train",
        "--config",
        p(&cfg),
        "--data",
        p(&csv),
        "-o",
        p(&model),
    ]);
    assert_eq!(code(&r), 0, "{}", stderr(&r));

    let r = csom(&["classify", "--model", p(&model), "--data", p(&csv)]);
    assert_eq!(code(&r), 0, "{}", stderr(&r));
    let plain = String::from_utf8(r.stdout).unwrap();
    assert_eq!(plain.lines().next(), Some("row,predicted"));
    assert_eq!(plain.lines().count(), 1 + 32);

    let out = d.join("cls.csv");
    let r = csom(&[
        "classify",
        "--model",
        p(&model),
        "--data",
        p(&csv),
        "--errors",
        "-o",
        p(&out),
    ]);
    assert_eq!(code(&r), 0, "{}", stderr(&r));
    let text = fs::read_to_string(&out).unwrap();
    assert_eq!(text.lines().next(), Some("row,predicted,qe_0,qe_1,qe_2"));
    for (i, line) in text.lines().skip(1).enumerate() {
        assert!(line.starts_with(&format!("{i},")));
        assert_eq!(line.split(',').count(), 5);
    }

    let loaded = ModelFile::load(&model).unwrap();
    let ModelMaps::Concurrent(m) = &loaded.maps else {
        panic!()
    };
    let (class, map) = &m.entries()[1];
    let proto: Vec<String> = map
        .prototype(4)
        .iter()
        .map(|v| format!("{v:.17e}"))
        .collect();
    let r = csom(&[
        "classify",
        "--model",
        p(&model),
        "--vector",
        &proto.join(","),
        "--errors",
    ]);
    assert_eq!(code(&r), 0, "{}", stderr(&r));
    let stdout = String::from_utf8(r.stdout).unwrap();
    let fields: Vec<&str> = stdout.lines().nth(1).unwrap().split(',').collect();
    assert_eq!(fields[1], class.to_string());
    assert_eq!(fields[2 + 1].parse::<f64>().unwrap(), 0.0);
}

fn eval_config(dir: &Path, classifiers: &str) -> PathBuf {
    labeled_csv(dir);
    let text = format!(
        "seed = 5\n\
         [som]\nschedule = {{ iterations = 300 }}\n\
         [evaluate]\ndataset = \"train.csv\"\nfolds = 4\nclassifiers = {classifiers}\n\
         pipelines = [\n\
           {{ kind = \"csom\", rows = 5, cols = 5 }},\n\
           {{ kind = \"single-som\", rows = 5, cols = 5 }},\n\
           {{ kind = \"single-som\", rows = 10, cols = 10 }},\n\
           {{ kind = \"single-som\", rows = 15, cols = 15 }},\n\
         ]\n"
    );
    write(dir, "eval.toml", &text)
}

#[test]
fn evaluate_table_layout_and_determinism() {
    let dir = TempDir::new().unwrap();
    let d = dir.path();
    let cfg = eval_config(d, "[\"1nn\", \"gnb\"]");
    let (o1, o2) = (d.join("r1"), d.join("r2"));
    for (out, jobs) in [(&o1, "1"), (&o2, "4")] {
        let r = csom(&[
            "evaluate",
            "--config",
            p(&cfg),
            "--jobs",
            jobs,
            "-o",
            p(out),
        ]);
        assert_eq!(code(&r), 0, "{}", stderr(&r));
    }
    for name in ["comparison.txt", "comparison.csv", "reports.txt"] {
        assert_eq!(
            fs::read(o1.join(name)).unwrap(),
            fs::read(o2.join(name)).unwrap(),
            "{name}"
        );
    }
    let csv = fs::read_to_string(o1.join("comparison.csv")).unwrap();
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(
        lines[0],
        "classifier,CSOM 5x5,Single SOM 5x5,Single SOM 10x10,Single SOM 15x15"
    );
    assert_eq!(lines.len(), 3);
    assert!(lines[1].starts_with("1-NN,"));
    assert!(lines[2].starts_with("NaiveBayes,"));
    let text = fs::read_to_string(o1.join("comparison.txt")).unwrap();
    assert!(text.starts_with("Classifiers"));
}

#[test]
fn evaluate_unknown_classifier_is_usage_error() {
    let dir = TempDir::new().unwrap();
    let d = dir.path();
    let cfg = eval_config(d, "[\"1nn\", \"svm\"]");
    let out = d.join("rep");
    let r = csom(&["evaluate", "--config", p(&cfg), "-o", p(&out)]);
    assert_eq!(code(&r), 1);
    let err = stderr(&r);
    for name in ["1nn", "knn", "gnb"] {
        assert!(err.contains(name), "{err}");
    }
    assert!(!out.exists());
}

#[test]
fn usage_errors_exit_one() {
    assert_eq!(code(&csom(&[])), 1);
    assert_eq!(code(&csom(&["train"])), 1);
    assert_eq!(code(&csom(&["frobnicate"])), 1);
    let dir = TempDir::new().unwrap();
    let cfg = write(dir.path(), "bad.toml", "[roi]\nsn = 0\n");
    let out = dir.path().join("m.txt");
    let r = csom(&[
        "train",
        "--config",
        p(&cfg),
        "--data",
        "nope.csv",
        "-o",
        p(&out),
    ]);
    assert_eq!(code(&r), 1, "{}", stderr(&r));
    assert!(!out.exists());
    assert_eq!(code(&csom(&["--help"])), 0);
}
