use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use csom::csom::TransformMode;
use csom::Error;

mod commands;
mod output;

/// Texture-feature classification with concurrent self-organizing maps.
#[derive(Debug, Parser)]
#[command(name = "csom", version)]
struct Cli {
    #[command(flatten)]
    global: GlobalArgs,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Args)]
struct GlobalArgs {
    /// TOML experiment configuration; built-in defaults when omitted.
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,
    /// Overrides the configured seed.
    #[arg(long, global = true, value_name = "N")]
    seed: Option<u64>,
    /// Worker threads for per-class training and per-row scoring (0 = all cores).
    #[arg(long, global = true, value_name = "N", default_value_t = 0)]
    jobs: usize,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Turn manifest-listed PGM images into a texture-feature CSV.
    Extract {
        /// `filename,class_id` lines; overrides `[extract] manifest`.
        #[arg(long)]
        manifest: Option<PathBuf>,
        /// Directory holding the images; overrides `[extract] images_dir`.
        #[arg(long)]
        images_dir: Option<PathBuf>,
        /// Restrict to these manifest file names (rows stay in manifest order).
        images: Vec<String>,
        /// Also write every region mask as run-length text lines.
        #[arg(long, value_name = "PATH")]
        dump_masks: Option<PathBuf>,
        #[arg(short, long)]
        output: PathBuf,
    },
    /// Fit the Fisher projection and the per-class maps on a labeled CSV.
    Train {
        #[arg(long)]
        data: PathBuf,
        /// Train one pooled map instead of one map per class.
        #[arg(long)]
        single_som: bool,
        #[arg(short, long)]
        output: PathBuf,
    },
    /// Replace or extend each row with its winning prototype.
    Transform {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        data: PathBuf,
        #[arg(long, default_value = "replace", value_parser = parse_mode)]
        mode: TransformMode,
        #[arg(short, long)]
        output: PathBuf,
    },
    /// Predict the class with the lowest quantization error.
    Classify {
        #[arg(long)]
        model: PathBuf,
        #[arg(long, conflicts_with = "vector", required_unless_present = "vector")]
        data: Option<PathBuf>,
        /// One comma-separated feature vector.
        #[arg(long, allow_hyphen_values = true)]
        vector: Option<String>,
        /// Add one quantization-error column per class.
        #[arg(long)]
        errors: bool,
        /// Write CSV here instead of standard output.
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
    /// Cross-validate the configured pipelines and classifiers.
    Evaluate {
        /// Overrides `[evaluate] dataset`.
        #[arg(long)]
        data: Option<PathBuf>,
        /// Directory for comparison.txt, comparison.csv and reports.txt.
        #[arg(short, long)]
        output: PathBuf,
    },
}

fn parse_mode(s: &str) -> Result<TransformMode, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

const EXIT_USAGE: u8 = 1;
const EXIT_DATA: u8 = 2;
const EXIT_INTEGRITY: u8 = 3;

fn exit_code(e: &Error) -> u8 {
    if e.is_usage() {
        EXIT_USAGE
    } else if e.is_integrity() {
        EXIT_INTEGRITY
    } else {
        EXIT_DATA
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match commands::run(cli.global, cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let mut msg = format!("error: {e}");
            let mut source = std::error::Error::source(&e);
            while let Some(s) = source {
                // thiserror already embeds the direct source in the message
                if !msg.contains(&s.to_string()) {
                    msg.push_str(&format!(": {s}"));
                }
                source = s.source();
            }
            eprintln!("{msg}");
            ExitCode::from(exit_code(&e))
        }
    }
}
