use std::collections::BTreeSet;
use std::fs::{self, OpenOptions};
use std::io::Write;
use std::path::{Path, PathBuf};

use placerec_core::gradcheck::{run_gradcheck, Component, GradCheckConfig};
use placerec_core::aggregation::{read_descriptor_file, write_descriptor_file, DescriptorRecord};
use placerec_core::retrieval::{evaluate_sequence, timing_report};
use placerec_core::synthdata::{generate_dataset, generate_world, load_dataset_dir, load_labels, revisit_labels};
use placerec_core::training::{describe_samples, run_ablation, train_loop_with, Checkpoint, EpochRecord, TrainState};
use placerec_core::{DbEntry, EncoderParams, Error};

use crate::config::RunConfig;
use crate::CliError;

type CliResult = std::result::Result<(), CliError>;

fn load_config(path: Option<&Path>) -> std::result::Result<RunConfig, CliError> {
    match path {
        Some(p) => Ok(RunConfig::load(p)?),
        None => Ok(RunConfig::default()),
    }
}

fn io_err(path: &Path, e: std::io::Error) -> CliError {
    Error::Io { path: path.to_path_buf(), source: e }.into()
}

fn require(path: Option<PathBuf>, what: &str) -> std::result::Result<PathBuf, CliError> {
    path.ok_or_else(|| CliError::usage(format!("missing {what} path (flag or config key)")))
}

/// Writes through a temporary file so a crash never leaves a torn file.
fn write_atomic(path: &Path, bytes: &[u8]) -> CliResult {
    let tmp = path.with_extension("tmp");
    fs::write(&tmp, bytes).map_err(|e| io_err(&tmp, e))?;
    fs::rename(&tmp, path).map_err(|e| io_err(path, e))
}

pub fn synth_gen(config: Option<&Path>, out: Option<PathBuf>) -> CliResult {
    let cfg = load_config(config)?;
    let out = require(out.or(cfg.output.clone()), "output")?;
    let b = &cfg.benchmark;
    let world = generate_world(&b.world, cfg.world_seed)?;
    let ds = generate_dataset(&world, &b.trajectory, &b.scan, cfg.data_seed)?;
    ds.write_dir(&out)?;
    let points: usize = ds.scans.iter().map(|s| s.len()).sum();
    println!(
        "{}",
        serde_json::json!({
            "out": out.display().to_string(),
            "scans": ds.len(),
            "mean_points": points as f64 / ds.len().max(1) as f64,
            "labels": ds.labels.len(),
        })
    );
    Ok(())
}

pub fn train(config: Option<&Path>, dataset: Option<PathBuf>, out_dir: &Path, resume: bool) -> CliResult {
    let cfg = load_config(config)?;
    let dataset = require(dataset.or(cfg.dataset.clone()), "dataset")?;
    let dir = load_dataset_dir(&dataset)?;
    let samples = dir.samples(0);
    fs::create_dir_all(out_dir).map_err(|e| io_err(out_dir, e))?;
    let ckpt = out_dir.join("checkpoint.json");
    let log_path = out_dir.join("train_log.jsonl");
    let state = if resume {
        let state = Checkpoint::load(&ckpt)?;
        // keep only records of completed epochs
        let kept: String = match fs::read_to_string(&log_path) {
            Ok(text) => text
                .lines()
                .filter(|l| {
                    serde_json::from_str::<EpochRecord>(l).is_ok_and(|r| r.epoch < state.epoch)
                })
                .map(|l| format!("{l}\n"))
                .collect(),
            Err(_) => String::new(),
        };
        write_atomic(&log_path, kept.as_bytes())?;
        state
    } else {
        write_atomic(&log_path, b"")?;
        TrainState::new(&cfg.train)
    };
    let encoder_path = out_dir.join("encoder.json");
    let outcome = train_loop_with(&samples, &cfg.train, state, |state, record| {
        let mut f = OpenOptions::new()
            .append(true)
            .open(&log_path)
            .map_err(|e| Error::Io { path: log_path.clone(), source: e })?;
        writeln!(f, "{}", record.to_json_line()).map_err(|e| Error::Io { path: log_path.clone(), source: e })?;
        Checkpoint::save(&ckpt, state)?;
        state.params.save(&encoder_path)
    })?;
    if !encoder_path.exists() {
        outcome.state.params.save(&encoder_path)?;
        Checkpoint::save(&ckpt, &outcome.state)?;
    }
    let last = outcome.log.last();
    println!(
        "{}",
        serde_json::json!({
            "epochs_run": outcome.log.len(),
            "epoch": outcome.state.epoch,
            "step": outcome.state.opt.step,
            "joint": last.map(|r| r.joint),
            "checkpoint": ckpt.display().to_string(),
        })
    );
    Ok(())
}

fn load_params(path: &Path) -> std::result::Result<EncoderParams, CliError> {
    let text = fs::read_to_string(path).map_err(|e| io_err(path, e))?;
    match Checkpoint::from_json(&text) {
        Ok(state) => Ok(state.params),
        Err(_) => EncoderParams::from_json(&text).map_err(|e| {
            CliError::from(Error::MalformedFile {
                path: path.to_path_buf(),
                reason: format!("neither a training checkpoint nor an encoder file: {e}"),
            })
        }),
    }
}

pub fn describe(checkpoint: &Path, dataset: &Path, out: &Path, config: Option<&Path>, timing: bool) -> CliResult {
    let cfg = load_config(config)?;
    let params = load_params(checkpoint)?;
    let dir = load_dataset_dir(dataset)?;
    let samples = dir.samples(0);
    let entries = describe_samples(&samples, &params, &cfg.describe)?;
    let records: Vec<DescriptorRecord> = entries
        .iter()
        .map(|e| DescriptorRecord { pose: e.pose, descriptor: e.descriptor.clone() })
        .collect();
    write_descriptor_file(out, params.feature_dim(), &records)?;
    let degenerate = entries.iter().filter(|e| e.descriptor.degenerate).count();
    if timing {
        let scans = samples
            .iter()
            .map(|s| Ok(((*s.cloud.load()?).clone(), s.pose)))
            .collect::<placerec_core::Result<Vec<_>>>()?;
        let report = timing_report(&params, &cfg.describe, &scans, cfg.eval.exclusion_time)?;
        eprint!("{}", report.to_table());
    }
    println!(
        "{}",
        serde_json::json!({
            "out": out.display().to_string(),
            "records": entries.len(),
            "degenerate": degenerate,
        })
    );
    Ok(())
}

pub fn evaluate(descriptors: &Path, labels: Option<&Path>, config: Option<&Path>, out: Option<&Path>) -> CliResult {
    let cfg = load_config(config)?;
    let (_, records) = read_descriptor_file(descriptors)?;
    let entries: Vec<DbEntry> = records
        .into_iter()
        .enumerate()
        .map(|(index, r)| DbEntry { timestamp: r.pose.timestamp, pose: r.pose, descriptor: r.descriptor, index })
        .collect();
    let curve = evaluate_sequence(&entries, &cfg.eval)?;
    let mut summary: serde_json::Value = serde_json::from_str(&curve.summary_json()).expect("summary is JSON");
    if let Some(path) = labels {
        if !path.is_file() {
            return Err(io_err(path, std::io::Error::from(std::io::ErrorKind::NotFound)));
        }
        let given: BTreeSet<(usize, usize)> = load_labels(path, entries.len())?.into_iter().collect();
        let poses: Vec<_> = entries.iter().map(|e| e.pose).collect();
        let derived: BTreeSet<(usize, usize)> =
            revisit_labels(&poses, cfg.eval.revisit_pos, cfg.eval.exclusion_time).into_iter().collect();
        summary["label_pairs"] = given.len().into();
        summary["label_mismatches"] = given.symmetric_difference(&derived).count().into();
    }
    let table = curve.to_table();
    match out {
        Some(p) => fs::write(p, &table).map_err(|e| io_err(p, e))?,
        None => print!("{table}"),
    }
    println!("{summary}");
    Ok(())
}

pub fn gradcheck(seeds: usize, base_seed: u64, inject: Option<&str>) -> CliResult {
    if seeds == 0 {
        return Err(CliError::usage("--seeds must be at least 1"));
    }
    let inject_sign_error = match inject {
        Some(name) => Some(Component::from_name(name).ok_or_else(|| {
            let names: Vec<_> = Component::ALL.iter().map(|c| c.name()).collect();
            CliError::usage(format!("unknown component {name:?}; expected one of {}", names.join(", ")))
        })?),
        None => None,
    };
    let cfg = GradCheckConfig {
        instances: seeds,
        seed: base_seed,
        inject_sign_error,
        ..GradCheckConfig::default()
    };
    let report = run_gradcheck(&cfg)?;
    print!("{}", report.to_text());
    if report.passed() {
        Ok(())
    } else {
        let failed: Vec<_> = report.components.iter().filter(|c| !c.passed).map(|c| c.component.name()).collect();
        Err(CliError {
            code: 2,
            kind: "gradcheck",
            message: format!("gradient mismatch in {}", failed.join(", ")),
        })
    }
}

pub fn ablate(config: Option<&Path>, train: Option<PathBuf>, eval: Option<PathBuf>) -> CliResult {
    let cfg = load_config(config)?;
    let train = require(train.or(cfg.dataset.clone()), "train dataset")?;
    let eval = require(eval.or(cfg.eval_dataset.clone()), "eval dataset")?;
    let train = load_dataset_dir(&train)?.samples(0);
    let eval = load_dataset_dir(&eval)?.samples(1);
    let report = run_ablation(&train, &eval, &cfg.omegas, &cfg.seeds, &cfg.train, &cfg.describe, &cfg.eval)?;
    print!("{}", report.to_table());
    let rows: Vec<_> = report
        .rows
        .iter()
        .map(|r| serde_json::json!({"omega": r.omega, "f1max": r.f1max, "mean": r.mean}))
        .collect();
    println!("{}", serde_json::json!({"seeds": report.seeds, "rows": rows}));
    Ok(())
}
