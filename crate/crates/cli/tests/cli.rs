use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use nalgebra::Vector3;
use placerec_core::aggregation::{read_descriptor_file, write_descriptor_file, DescriptorRecord};
use placerec_core::{GlobalDescriptor, Pose};
use tempfile::TempDir;

const TINY: &str = "\
# small but trainable
num_scans = 300
feature_dim = 4
epochs = 1
tuples_per_epoch = 2
omega = 1.0
";

fn placerec(args: &[&str], cwd: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_placerec"))
        .args(args)
        .current_dir(cwd)
        .output()
        .expect("binary runs")
}

fn ok(out: &Output) -> String {
    assert!(
        out.status.success(),
        "status {:?}\nstderr: {}",
        out.status,
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout.clone()).unwrap()
}

fn assert_error(out: &Output, code: i32, kind: &str) {
    assert_eq!(out.status.code(), Some(code), "stderr: {}", String::from_utf8_lossy(&out.stderr));
    let err = String::from_utf8_lossy(&out.stderr);
    let lines: Vec<&str> = err.lines().collect();
    assert_eq!(lines.len(), 1, "expected a single error line, got {err:?}");
    assert!(lines[0].starts_with(&format!("error[{kind}]: ")), "{err}");
}

struct Fixture {
    dir: TempDir,
}

impl Fixture {
    fn new(config: &str) -> Self {
        let dir = tempfile::tempdir().unwrap();
        fs::write(dir.path().join("run.cfg"), config).unwrap();
        Self { dir }
    }

    fn path(&self) -> &Path {
        self.dir.path()
    }

    fn run(&self, args: &[&str]) -> Output {
        placerec(args, self.path())
    }

    fn gen(&self, out: &str) {
        ok(&self.run(&["synth-gen", "--config", "run.cfg", "--out", out]));
    }
}

fn tree_bytes(root: &Path) -> Vec<(PathBuf, Vec<u8>)> {
    let mut out = Vec::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in fs::read_dir(&d).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                out.push((p.strip_prefix(root).unwrap().to_path_buf(), fs::read(&p).unwrap()));
            }
        }
    }
    out.sort();
    out
}

#[test]
fn synth_gen_layout_and_rerun() {
    let f = Fixture::new(TINY);
    f.gen("a");
    f.gen("b");
    for name in ["poses.txt", "times.txt", "labels.txt", "scans/000000.bin"] {
        assert!(f.path().join("a").join(name).is_file(), "{name}");
    }
    let a = tree_bytes(&f.path().join("a"));
    assert_eq!(a.len(), 301 + 3);
    assert_eq!(a, tree_bytes(&f.path().join("b")));
}

#[test]
fn synth_gen_without_output_is_usage_error() {
    let f = Fixture::new(TINY);
    assert_error(&f.run(&["synth-gen", "--config", "run.cfg"]), 1, "usage");
}

#[test]
fn config_errors_are_single_line() {
    let f = Fixture::new("omega = 1\nbogus = 3\n");
    let out = f.run(&["synth-gen", "--config", "run.cfg", "--out", "x"]);
    assert_error(&out, 1, "parse");
    assert!(String::from_utf8_lossy(&out.stderr).contains("line 2"));
    fs::write(f.path().join("run.cfg"), "tau_p = 50\n").unwrap();
    assert_error(&f.run(&["synth-gen", "--config", "run.cfg", "--out", "x"]), 1, "config");
    assert_error(&f.run(&["train", "--out-dir", "x"]), 1, "usage");
    assert_error(&f.run(&["frobnicate"]), 1, "usage");
    assert_error(&f.run(&["evaluate", "--descriptors", "missing.bin"]), 2, "io");
}

fn log_records(path: &Path) -> Vec<serde_json::Value> {
    fs::read_to_string(path)
        .unwrap()
        .lines()
        .map(|l| serde_json::from_str(l).unwrap())
        .collect()
}

#[test]
fn train_resume_describe_evaluate() {
    let f = Fixture::new(TINY);
    f.gen("ds");
    ok(&f.run(&["train", "--config", "run.cfg", "--dataset", "ds", "--out-dir", "run"]));
    for name in ["checkpoint.json", "encoder.json", "train_log.jsonl"] {
        assert!(f.path().join("run").join(name).is_file(), "{name}");
    }
    let log = log_records(&f.path().join("run/train_log.jsonl"));
    assert_eq!(log.len(), 1);
    assert!(log[0]["llc"].as_f64().unwrap() > 0.0);
    let step1 = log[0]["step"].as_u64().unwrap();

    fs::write(f.path().join("run.cfg"), TINY.replace("epochs = 1", "epochs = 2")).unwrap();
    ok(&f.run(&["train", "--config", "run.cfg", "--dataset", "ds", "--out-dir", "run", "--resume"]));
    let resumed = log_records(&f.path().join("run/train_log.jsonl"));
    assert_eq!(resumed.len(), 2);
    assert_eq!(resumed[0], log[0]);
    assert!(resumed[1]["step"].as_u64().unwrap() > step1);

    // an uninterrupted two-epoch run writes the same log
    ok(&f.run(&["train", "--config", "run.cfg", "--dataset", "ds", "--out-dir", "full"]));
    assert_eq!(
        fs::read(f.path().join("full/train_log.jsonl")).unwrap(),
        fs::read(f.path().join("run/train_log.jsonl")).unwrap()
    );

    for (ckpt, out) in [("run/checkpoint.json", "d1.bin"), ("run/encoder.json", "d2.bin")] {
        ok(&f.run(&["describe", "--checkpoint", ckpt, "--dataset", "ds", "--out", out]));
    }
    let d1 = fs::read(f.path().join("d1.bin")).unwrap();
    assert_eq!(d1, fs::read(f.path().join("d2.bin")).unwrap());
    let (d, entries) = read_descriptor_file(f.path().join("d1.bin")).unwrap();
    assert_eq!(d, 4);
    assert_eq!(entries.len(), 301);
    for e in &entries {
        assert!(e.descriptor.degenerate || (e.descriptor.norm() - 1.0).abs() < 1e-9);
    }

    let out = ok(&f.run(&["evaluate", "--descriptors", "d1.bin", "--labels", "ds/labels.txt"]));
    let summary: serde_json::Value = serde_json::from_str(out.lines().last().unwrap()).unwrap();
    let pairs = fs::read_to_string(f.path().join("ds/labels.txt")).unwrap().lines().count();
    assert!(pairs > 100);
    assert_eq!(summary["label_pairs"], pairs);
    assert!(summary["label_mismatches"].is_u64());
    assert_eq!(summary["num_queries"], 271);
}

#[test]
fn omega_zero_logs_zero_local_loss() {
    let f = Fixture::new(&TINY.replace("omega = 1.0", "omega = 0"));
    f.gen("ds");
    ok(&f.run(&["train", "--config", "run.cfg", "--dataset", "ds", "--out-dir", "run"]));
    let log = log_records(&f.path().join("run/train_log.jsonl"));
    assert_eq!(log[0]["llc"].as_f64(), Some(0.0));
    assert_eq!(log[0]["lg"], log[0]["joint"]);
}

fn entry(i: usize, values: Vec<f64>, x: f64) -> DescriptorRecord {
    DescriptorRecord {
        descriptor: GlobalDescriptor::new(values),
        pose: Pose::from_yaw(0.0, Vector3::new(x, 0.0, 0.0), 10.0 * i as f64),
    }
}

fn unit(k: usize) -> Vec<f64> {
    let mut v = vec![0.0; 16];
    v[k] = 1.0;
    v
}

fn parse_table(text: &str) -> Vec<Vec<f64>> {
    text.lines()
        .skip(1)
        .filter(|l| !l.starts_with('{'))
        .map(|l| l.split_whitespace().map(|t| t.parse().unwrap()).collect())
        .collect()
}

#[test]
fn evaluate_duplicates_and_round_trip() {
    let f = Fixture::new("");
    // places 0..6 visited, then 0..3 revisited with duplicated descriptors
    let mut entries: Vec<DescriptorRecord> = (0..6).map(|i| entry(i, unit(i), 100.0 * i as f64)).collect();
    for j in 0..3 {
        entries.push(entry(6 + j, unit(j), 100.0 * j as f64));
    }
    write_descriptor_file(f.path().join("d.bin"), 4, &entries).unwrap();
    let out = ok(&f.run(&["evaluate", "--descriptors", "d.bin", "--out", "pr.txt"]));
    let summary: serde_json::Value = serde_json::from_str(out.trim()).unwrap();
    assert_eq!(summary["f1max"].as_f64(), Some(1.0));
    assert_eq!(summary["no_revisit"], false);

    let rows = parse_table(&fs::read_to_string(f.path().join("pr.txt")).unwrap());
    assert!(!rows.is_empty());
    let best = rows
        .iter()
        .map(|r| {
            let (p, rec) = (r[1], r[2]);
            if p + rec > 0.0 {
                2.0 * p * rec / (p + rec)
            } else {
                0.0
            }
        })
        .fold(0.0, f64::max);
    assert_eq!(best, summary["f1max"].as_f64().unwrap());
}

#[test]
fn evaluate_without_revisits() {
    let f = Fixture::new("");
    let entries: Vec<DescriptorRecord> = (0..8).map(|i| entry(i, unit(i), 100.0 * i as f64)).collect();
    write_descriptor_file(f.path().join("d.bin"), 4, &entries).unwrap();
    let out = ok(&f.run(&["evaluate", "--descriptors", "d.bin"]));
    let summary: serde_json::Value = serde_json::from_str(out.lines().last().unwrap()).unwrap();
    assert_eq!(summary["f1max"].as_f64(), Some(0.0));
    assert_eq!(summary["no_revisit"], true);
}

#[test]
fn gradcheck_passes_and_detects_injected_error() {
    let f = Fixture::new("");
    let out = ok(&f.run(&["gradcheck", "--seeds", "3"]));
    assert_eq!(out.lines().filter(|l| l.starts_with("PASS ")).count(), 5, "{out}");

    let out = f.run(&["gradcheck", "--seeds", "2", "--inject-sign-error", "joint_loss"]);
    assert_error(&out, 2, "gradcheck");
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(stdout.lines().any(|l| l.starts_with("FAIL joint_loss")), "{stdout}");
    assert!(String::from_utf8_lossy(&out.stderr).contains("joint_loss"));

    assert_error(&f.run(&["gradcheck", "--seeds", "0"]), 1, "usage");
    assert_error(&f.run(&["gradcheck", "--inject-sign-error", "nope"]), 1, "usage");
}

#[test]
fn ablate_reports_one_row_per_omega() {
    let f = Fixture::new(&format!("{TINY}omegas = 0, 1.0\nseeds = 0\n"));
    f.gen("train");
    fs::write(f.path().join("eval.cfg"), format!("{TINY}world_seed = 2\ndata_seed = 5\n")).unwrap();
    ok(&f.run(&["synth-gen", "--config", "eval.cfg", "--out", "eval"]));
    let out = ok(&f.run(&["ablate", "--config", "run.cfg", "--train", "train", "--eval", "eval"]));
    let lines: Vec<&str> = out.lines().collect();
    assert!(lines[0].starts_with("objective\tseed0\tmean"), "{out}");
    assert!(lines[1].starts_with("L_g\t"));
    assert!(lines[2].starts_with("L_g + 1.0·L_lc\t"));
    let summary: serde_json::Value = serde_json::from_str(lines.last().unwrap()).unwrap();
    assert_eq!(summary["rows"].as_array().unwrap().len(), 2);
}
