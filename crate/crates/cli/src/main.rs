//! `placerec`: synthetic data generation, training, description,
//! evaluation, ablation and gradient checks.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

#[derive(Parser, Debug)]
#[command(name = "placerec", version, about = "LiDAR place recognition toolkit")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Generate a synthetic dataset directory.
    SynthGen {
        #[arg(long)]
        config: Option<PathBuf>,
        /// Output directory (overrides `output` in the config).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Train an encoder; writes checkpoint.json, encoder.json and train_log.jsonl.
    Train {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        dataset: Option<PathBuf>,
        #[arg(long)]
        out_dir: PathBuf,
        /// Continue from `out_dir/checkpoint.json`.
        #[arg(long)]
        resume: bool,
    },
    /// Describe every scan of a dataset directory.
    Describe {
        /// Training checkpoint or encoder parameter file.
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        dataset: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        config: Option<PathBuf>,
        /// Print per-stage timings to stderr.
        #[arg(long)]
        timing: bool,
    },
    /// Precision-recall evaluation of a descriptor file.
    Evaluate {
        #[arg(long)]
        descriptors: PathBuf,
        /// Ground-truth `query match` pairs to cross-check against the poses.
        #[arg(long)]
        labels: Option<PathBuf>,
        #[arg(long)]
        config: Option<PathBuf>,
        /// Write the PR table here instead of stdout.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Compare analytic gradients with central finite differences.
    Gradcheck {
        /// Random instances per component.
        #[arg(long, default_value_t = 10, value_parser = clap::value_parser!(u64).range(1..))]
        seeds: u64,
        #[arg(long, default_value_t = 0)]
        base_seed: u64,
        /// Flip the sign of one component's gradient (harness self-test).
        #[arg(long)]
        inject_sign_error: Option<String>,
    },
    /// Train one model per omega and seed, report held-out F1max.
    Ablate {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        train: Option<PathBuf>,
        #[arg(long)]
        eval: Option<PathBuf>,
    },
}

/// A failure with its exit code and a short machine-readable kind.
#[derive(Debug)]
pub struct CliError {
    pub code: u8,
    pub kind: &'static str,
    pub message: String,
}

impl CliError {
    pub fn usage(message: impl Into<String>) -> Self {
        Self { code: 1, kind: "usage", message: message.into() }
    }
}

impl From<placerec_core::Error> for CliError {
    fn from(e: placerec_core::Error) -> Self {
        use placerec_core::Error as E;
        let kind = match &e {
            E::Io { .. } => "io",
            E::MalformedFile { .. } => "malformed-file",
            E::Parse { .. } => "parse",
            E::InvalidInput(_) => "invalid-input",
            E::Config(_) => "config",
            E::DatasetTooSparse(_) => "dataset-too-sparse",
            E::DegenerateGeometry(_) => "degenerate-geometry",
            E::Numerical(_) => "numerical",
        };
        let code = if e.is_validation() { 1 } else { 2 };
        Self { code, kind, message: e.to_string() }
    }
}

fn one_line(s: &str) -> String {
    s.split_whitespace().collect::<Vec<_>>().join(" ")
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                print!("{e}");
                return ExitCode::SUCCESS;
            }
            let text = e.to_string();
            let first = text.lines().next().unwrap_or("").trim_start_matches("error: ");
            eprintln!("error[usage]: {}", one_line(first));
            return ExitCode::from(1);
        }
    };
    let result = match cli.command {
        Command::SynthGen { config, out } => commands::synth_gen(config.as_deref(), out),
        Command::Train { config, dataset, out_dir, resume } => {
            commands::train(config.as_deref(), dataset, &out_dir, resume)
        }
        Command::Describe { checkpoint, dataset, out, config, timing } => {
            commands::describe(&checkpoint, &dataset, &out, config.as_deref(), timing)
        }
        Command::Evaluate { descriptors, labels, config, out } => {
            commands::evaluate(&descriptors, labels.as_deref(), config.as_deref(), out.as_deref())
        }
        Command::Gradcheck { seeds, base_seed, inject_sign_error } => {
            commands::gradcheck(seeds as usize, base_seed, inject_sign_error.as_deref())
        }
        Command::Ablate { config, train, eval } => commands::ablate(config.as_deref(), train, eval),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error[{}]: {}", e.kind, one_line(&e.message));
            ExitCode::from(e.code)
        }
    }
}
