use std::time::Instant;

use super::eval::{query_top1, DbEntry};
use crate::aggregation::{aggregate, GlobalDescriptor, DEFAULT_EPN_ALPHA};
use crate::encoder::{encode, EncoderParams};
use crate::error::Result;
use crate::pointcloud::{cap_points, voxel_downsample, PointCloud, Pose, DEFAULT_MAX_POINTS};

/// Evaluation-time preprocessing and aggregation settings. Ground removal
/// is not part of the evaluation path.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DescribeConfig {
    pub voxel_size: f64,
    pub max_points: usize,
    pub epn_alpha: f64,
    pub seed: u64,
}

impl Default for DescribeConfig {
    fn default() -> Self {
        Self {
            voxel_size: 0.1,
            max_points: DEFAULT_MAX_POINTS,
            epn_alpha: DEFAULT_EPN_ALPHA,
            seed: 0,
        }
    }
}

pub fn preprocess_eval(cloud: &PointCloud, cfg: &DescribeConfig) -> PointCloud {
    let down = if cfg.voxel_size > 0.0 {
        voxel_downsample(cloud, cfg.voxel_size)
    } else {
        cloud.clone()
    };
    cap_points(&down, cfg.max_points, cfg.seed)
}

pub fn describe_cloud(cloud: &PointCloud, params: &EncoderParams, cfg: &DescribeConfig) -> Result<GlobalDescriptor> {
    let features = encode(&preprocess_eval(cloud, cfg), params)?;
    aggregate(&features, cfg.epn_alpha)
}

/// Mean wall-clock milliseconds per entry for each pipeline stage.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct TimingReport {
    pub entries: usize,
    pub preproc_ms: f64,
    pub description_ms: f64,
    pub querying_ms: f64,
    pub total_ms: f64,
}

impl TimingReport {
    pub fn to_table(&self) -> String {
        let mut s = String::from("preproc_ms description_ms querying_ms total_ms\n");
        if self.entries > 0 {
            s.push_str(&format!(
                "{:.3} {:.3} {:.3} {:.3}\n",
                self.preproc_ms, self.description_ms, self.querying_ms, self.total_ms
            ));
        }
        s
    }
}

/// Runs the evaluation pipeline over a time-ordered sequence, timing each
/// stage. Each scan is queried against the descriptors already built.
pub fn timing_report(
    params: &EncoderParams,
    cfg: &DescribeConfig,
    scans: &[(PointCloud, Pose)],
    exclusion_time: f64,
) -> Result<TimingReport> {
    if scans.is_empty() {
        return Ok(TimingReport::default());
    }
    let (mut pre, mut desc, mut query) = (0.0, 0.0, 0.0);
    let mut db: Vec<DbEntry> = Vec::with_capacity(scans.len());
    for (i, (cloud, pose)) in scans.iter().enumerate() {
        let t0 = Instant::now();
        let prepared = preprocess_eval(cloud, cfg);
        let t1 = Instant::now();
        let descriptor = aggregate(&encode(&prepared, params)?, cfg.epn_alpha)?;
        let t2 = Instant::now();
        let entry = DbEntry {
            descriptor,
            pose: *pose,
            timestamp: pose.timestamp,
            index: i,
        };
        std::hint::black_box(query_top1(&db, &entry, exclusion_time));
        let t3 = Instant::now();
        db.push(entry);
        pre += (t1 - t0).as_secs_f64();
        desc += (t2 - t1).as_secs_f64();
        query += (t3 - t2).as_secs_f64();
    }
    let n = scans.len() as f64;
    let (p, d, q) = (pre * 1e3 / n, desc * 1e3 / n, query * 1e3 / n);
    Ok(TimingReport {
        entries: scans.len(),
        preproc_ms: p,
        description_ms: d,
        querying_ms: q,
        total_ms: p + d + q,
    })
}
