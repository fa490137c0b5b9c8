//! Flat `key = value` run configuration.
//!
//! Blank lines and lines starting with `#` are ignored. Lists are comma
//! separated. Unknown keys are rejected.

use std::path::{Path, PathBuf};

use placerec_core::retrieval::{DescribeConfig, EvalConfig};
use placerec_core::synthdata::Benchmark;
use placerec_core::training::TrainConfig;
use placerec_core::{Error, Result};

#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    pub train: TrainConfig,
    pub eval: EvalConfig,
    pub describe: DescribeConfig,
    pub benchmark: Benchmark,
    pub world_seed: u64,
    pub data_seed: u64,
    pub omegas: Vec<f64>,
    pub seeds: Vec<u64>,
    pub dataset: Option<PathBuf>,
    pub eval_dataset: Option<PathBuf>,
    pub output: Option<PathBuf>,
}

pub const DEFAULT_NUM_SCANS: usize = 300;

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            train: TrainConfig::default(),
            eval: EvalConfig::default(),
            describe: DescribeConfig::default(),
            benchmark: Benchmark::desk(DEFAULT_NUM_SCANS),
            world_seed: 1,
            data_seed: 1,
            omegas: vec![0.0, 0.1, 1.0],
            seeds: vec![0, 1, 2],
            dataset: None,
            eval_dataset: None,
            output: None,
        }
    }
}

fn parse_err(path: &Path, line: usize, reason: impl Into<String>) -> Error {
    Error::Parse {
        path: path.to_path_buf(),
        line,
        reason: reason.into(),
    }
}

fn num<T: std::str::FromStr>(v: &str) -> std::result::Result<T, String>
where
    T::Err: std::fmt::Display,
{
    v.parse::<T>().map_err(|e| format!("cannot parse {v:?}: {e}"))
}

fn list<T: std::str::FromStr>(v: &str) -> std::result::Result<Vec<T>, String>
where
    T::Err: std::fmt::Display,
{
    v.split(',').map(|s| num(s.trim())).collect()
}

fn flag(v: &str) -> std::result::Result<bool, String> {
    match v {
        "true" | "1" | "yes" => Ok(true),
        "false" | "0" | "no" => Ok(false),
        _ => Err(format!("expected a boolean, got {v:?}")),
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::Io {
            path: path.to_path_buf(),
            source: e,
        })?;
        Self::parse(&text, path)
    }

    pub fn parse(text: &str, path: &Path) -> Result<Self> {
        let mut entries = Vec::new();
        for (n, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| parse_err(path, n + 1, "expected key = value"))?;
            entries.push((n + 1, k.trim().to_string(), v.trim().to_string()));
        }
        let mut cfg = RunConfig::default();
        if let Some((line, _, v)) = entries.iter().rev().find(|(_, k, _)| k == "num_scans") {
            let n: usize = num(v).map_err(|e| parse_err(path, *line, e))?;
            if n == 0 {
                return Err(parse_err(path, *line, "num_scans must be positive"));
            }
            cfg.benchmark = Benchmark::desk(n);
        }
        for (line, k, v) in &entries {
            cfg.apply(k, v).map_err(|e| parse_err(path, *line, e))?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    fn apply(&mut self, key: &str, v: &str) -> std::result::Result<(), String> {
        let t = &mut self.train;
        let b = &mut self.benchmark;
        match key {
            "num_scans" => {}
            "voxel_size" => {
                t.voxel_size = num(v)?;
                self.describe.voxel_size = t.voxel_size;
            }
            "max_points" => {
                t.max_points = num(v)?;
                self.describe.max_points = t.max_points;
            }
            "epn_alpha" => {
                t.losses.epn_alpha = num(v)?;
                self.describe.epn_alpha = t.losses.epn_alpha;
            }
            "feature_dim" => t.feature_dim = num(v)?,
            "k" => t.k = num(v)?,
            "normalize_intensity" => t.normalize_intensity = flag(v)?,
            "r" => t.correspondence_radius = num(v)?,
            "correspondence_samples" => t.correspondence_samples = num(v)?,
            "m_p" => t.losses.local.m_p = num(v)?,
            "m_n" => t.losses.local.m_n = num(v)?,
            "lambda_n" => t.losses.local.lambda_n = num(v)?,
            "mining_size" => t.losses.local.mining_size = num(v)?,
            "alpha_q" => t.losses.quadruplet.alpha = num(v)?,
            "beta_q" => t.losses.quadruplet.beta = num(v)?,
            "num_positives" => t.losses.quadruplet.num_positives = num(v)?,
            "num_negatives" => t.losses.quadruplet.num_negatives = num(v)?,
            "omega" => t.losses.joint.omega = num(v)?,
            "omegas" => self.omegas = list(v)?,
            "tau_p" => t.tau_p = num(v)?,
            "tau_n" => t.tau_n = num(v)?,
            "learning_rate" => t.learning_rate = num(v)?,
            "lr_drop_epoch" => t.lr_drop_epoch = num(v)?,
            "lr_drop_factor" => t.lr_drop_factor = num(v)?,
            "epochs" => t.epochs = num(v)?,
            "batch_tuples" => t.batch_tuples = num(v)?,
            "tuples_per_epoch" => t.tuples_per_epoch = Some(num(v)?),
            "seed" => t.seed = num(v)?,
            "seeds" => self.seeds = list(v)?,
            "jitter_sigma" => t.jitter_sigma = num(v)?,
            "jitter_clip" => t.jitter_clip = num(v)?,
            "rotation_max_deg" => t.rotation_max_deg = num(v)?,
            "ground_removal" => {
                t.ground = if flag(v)? { Some(Default::default()) } else { None };
            }
            "icp" => {
                t.icp = if flag(v)? { Some(Default::default()) } else { None };
            }
            "local_on_both_positives" => t.local_on_both_positives = flag(v)?,
            "t_r" => self.eval.exclusion_time = num(v)?,
            "revisit_pos" => self.eval.revisit_pos = num(v)?,
            "revisit_amb" => self.eval.revisit_amb = num(v)?,
            "world_seed" => self.world_seed = num(v)?,
            "data_seed" => self.data_seed = num(v)?,
            "sensor_range" => b.scan.sensor_range = num(v)?,
            "noise_sigma" => b.scan.noise_sigma = num(v)?,
            "keep_fraction" => b.scan.keep_fraction = num(v)?,
            "pose_noise_translation" => b.trajectory.pose_noise_translation = num(v)?,
            "pose_noise_rotation_deg" => b.trajectory.pose_noise_rotation_deg = num(v)?,
            "label_min_time" => b.trajectory.label_min_time = num(v)?,
            "num_boxes" => b.world.num_boxes = num(v)?,
            "num_cylinders" => b.world.num_cylinders = num(v)?,
            "num_planes" => b.world.num_planes = num(v)?,
            "surface_density" => b.world.surface_density = num(v)?,
            "ground_density" => b.world.ground_density = num(v)?,
            "dataset" => self.dataset = Some(PathBuf::from(v)),
            "eval_dataset" => self.eval_dataset = Some(PathBuf::from(v)),
            "output" => self.output = Some(PathBuf::from(v)),
            _ => return Err(format!("unknown key {key:?}")),
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        self.train.validate()?;
        self.eval.validate()?;
        self.benchmark.world.validate()?;
        self.benchmark.trajectory.validate()?;
        let s = &self.benchmark.scan;
        if !(s.sensor_range > 0.0 && s.noise_sigma >= 0.0 && s.keep_fraction > 0.0 && s.keep_fraction <= 1.0) {
            return Err(Error::Config("invalid scan settings".into()));
        }
        if self.omegas.is_empty() || self.omegas.iter().any(|w| !(*w >= 0.0)) {
            return Err(Error::Config("omegas must be a non-empty list of non-negative values".into()));
        }
        if self.seeds.is_empty() {
            return Err(Error::Config("seeds must not be empty".into()));
        }
        Ok(())
    }
}
