use rayon::prelude::*;

use super::{train_loop, Sample, TrainConfig};
use crate::encoder::EncoderParams;
use crate::error::{Error, Result};
use crate::retrieval::{describe_cloud, evaluate_sequence, DbEntry, DescribeConfig, EvalConfig, PrCurve};

/// Describes every sample of a time-ordered sequence.
pub fn describe_samples(samples: &[Sample], params: &EncoderParams, cfg: &DescribeConfig) -> Result<Vec<DbEntry>> {
    samples
        .par_iter()
        .enumerate()
        .map(|(i, s)| {
            let cloud = s.cloud.load()?;
            Ok(DbEntry {
                descriptor: describe_cloud(&cloud, params, cfg)?,
                pose: s.pose,
                timestamp: s.timestamp(),
                index: i,
            })
        })
        .collect()
}

pub fn evaluate_model(samples: &[Sample], params: &EncoderParams, dcfg: &DescribeConfig, ecfg: &EvalConfig) -> Result<PrCurve> {
    evaluate_sequence(&describe_samples(samples, params, dcfg)?, ecfg)
}

#[derive(Clone, Debug, PartialEq)]
pub struct AblationRow {
    pub omega: f64,
    pub label: String,
    /// F1max per seed, in seed order.
    pub f1max: Vec<f64>,
    pub mean: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct AblationReport {
    pub seeds: Vec<u64>,
    pub rows: Vec<AblationRow>,
}

impl AblationReport {
    pub fn to_table(&self) -> String {
        let mut s = String::from("objective");
        for seed in &self.seeds {
            s.push_str(&format!("\tseed{seed}"));
        }
        s.push_str("\tmean\n");
        for row in &self.rows {
            s.push_str(&row.label);
            for f in &row.f1max {
                s.push_str(&format!("\t{f:.4}"));
            }
            s.push_str(&format!("\t{:.4}\n", row.mean));
        }
        s
    }
}

pub fn objective_label(omega: f64) -> String {
    if omega == 0.0 {
        "L_g".to_string()
    } else {
        format!("L_g + {omega:?}·L_lc")
    }
}

/// Trains one model per `(ω, seed)` on `train` and reports the held-out
/// F1max on `eval`.
pub fn run_ablation(
    train: &[Sample],
    eval: &[Sample],
    omegas: &[f64],
    seeds: &[u64],
    cfg: &TrainConfig,
    dcfg: &DescribeConfig,
    ecfg: &EvalConfig,
) -> Result<AblationReport> {
    if omegas.is_empty() || seeds.is_empty() {
        return Err(Error::Config("ablation needs at least one omega and one seed".into()));
    }
    let mut rows = Vec::with_capacity(omegas.len());
    for &omega in omegas {
        let mut f1max = Vec::with_capacity(seeds.len());
        for &seed in seeds {
            let mut c = cfg.clone();
            c.seed = seed;
            c.losses.joint.omega = omega;
            let outcome = train_loop(train, &c)?;
            let curve = evaluate_model(eval, &outcome.state.params, dcfg, ecfg)?;
            log::info!("omega {omega} seed {seed}: f1max {:.4}", curve.f1max);
            f1max.push(curve.f1max);
        }
        let mean = f1max.iter().sum::<f64>() / f1max.len() as f64;
        rows.push(AblationRow {
            omega,
            label: objective_label(omega),
            f1max,
            mean,
        });
    }
    Ok(AblationReport {
        seeds: seeds.to_vec(),
        rows,
    })
}
