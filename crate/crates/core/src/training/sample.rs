use std::path::PathBuf;
use std::sync::Arc;

use rand::seq::index;
use rand::Rng;

use super::TrainConfig;
use crate::error::{Error, Result};
use crate::pointcloud::{load_kitti_bin, PointCloud, Pose};
use crate::rng;

/// Where a sample's points live.
#[derive(Clone, Debug)]
pub enum CloudRef {
    Memory(Arc<PointCloud>),
    File(PathBuf),
}

impl CloudRef {
    pub fn load(&self) -> Result<Arc<PointCloud>> {
        match self {
            CloudRef::Memory(c) => Ok(Arc::clone(c)),
            CloudRef::File(p) => load_kitti_bin(p).map(Arc::new),
        }
    }
}

#[derive(Clone, Debug)]
pub struct Sample {
    pub cloud: CloudRef,
    pub pose: Pose,
    pub sequence_id: u32,
}

impl Sample {
    pub fn in_memory(cloud: PointCloud, pose: Pose, sequence_id: u32) -> Self {
        Self {
            cloud: CloudRef::Memory(Arc::new(cloud)),
            pose,
            sequence_id,
        }
    }

    pub fn timestamp(&self) -> f64 {
        self.pose.timestamp
    }
}

/// Indices into the dataset a tuple was drawn from.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TrainingTuple {
    pub anchor: usize,
    pub positives: Vec<usize>,
    pub negatives: Vec<usize>,
    pub other_negative: usize,
}

impl TrainingTuple {
    /// All members in the order anchor, positives, negatives, other negative.
    pub fn members(&self) -> Vec<usize> {
        let mut m = vec![self.anchor];
        m.extend(&self.positives);
        m.extend(&self.negatives);
        m.push(self.other_negative);
        m
    }
}

fn dist(dataset: &[Sample], a: usize, b: usize) -> f64 {
    dataset[a].pose.distance(&dataset[b].pose)
}

/// Positive and negative candidate lists for an anchor. Samples from other
/// sequences are compared by pose as well; a shared world frame is assumed.
fn candidates(dataset: &[Sample], a: usize, cfg: &TrainConfig) -> (Vec<usize>, Vec<usize>) {
    let mut pos = Vec::new();
    let mut neg = Vec::new();
    for j in 0..dataset.len() {
        if j == a {
            continue;
        }
        let d = dist(dataset, a, j);
        if d < cfg.tau_p {
            pos.push(j);
        } else if d > cfg.tau_n {
            neg.push(j);
        }
    }
    (pos, neg)
}

/// Anchors with enough positives and negatives for a full tuple.
pub fn eligible_anchors(dataset: &[Sample], cfg: &TrainConfig) -> Vec<usize> {
    let np = cfg.losses.quadruplet.num_positives;
    let nn = cfg.losses.quadruplet.num_negatives;
    (0..dataset.len())
        .filter(|&a| {
            let (pos, neg) = candidates(dataset, a, cfg);
            pos.len() >= np && neg.len() > nn
        })
        .collect()
}

/// Draws one tuple. The other negative lies more than `tau_p` from the
/// anchor and from every chosen negative; if the first draw of negatives
/// leaves no such sample, negatives are redrawn a bounded number of times.
pub fn sample_tuple(dataset: &[Sample], cfg: &TrainConfig, seed: u64) -> Result<TrainingTuple> {
    let anchors = eligible_anchors(dataset, cfg);
    sample_tuple_from(dataset, &anchors, cfg, seed)
}

pub(crate) fn sample_tuple_from(
    dataset: &[Sample],
    anchors: &[usize],
    cfg: &TrainConfig,
    seed: u64,
) -> Result<TrainingTuple> {
    if anchors.is_empty() {
        return Err(Error::DatasetTooSparse(format!(
            "no anchor among {} samples has {} positives within {} m and {} negatives beyond {} m",
            dataset.len(),
            cfg.losses.quadruplet.num_positives,
            cfg.tau_p,
            cfg.losses.quadruplet.num_negatives + 1,
            cfg.tau_n
        )));
    }
    let np = cfg.losses.quadruplet.num_positives;
    let nn = cfg.losses.quadruplet.num_negatives;
    let mut r = rng::seeded(seed);
    let anchor = anchors[r.random_range(0..anchors.len())];
    let (pos, neg) = candidates(dataset, anchor, cfg);
    let positives: Vec<usize> = index::sample(&mut r, pos.len(), np).into_iter().map(|i| pos[i]).collect();
    for _ in 0..64 {
        let negatives: Vec<usize> = index::sample(&mut r, neg.len(), nn).into_iter().map(|i| neg[i]).collect();
        let others: Vec<usize> = (0..dataset.len())
            .filter(|&j| {
                j != anchor
                    && !negatives.contains(&j)
                    && dist(dataset, anchor, j) > cfg.tau_p
                    && negatives.iter().all(|&n| dist(dataset, n, j) > cfg.tau_p)
            })
            .collect();
        if !others.is_empty() {
            let other_negative = others[r.random_range(0..others.len())];
            return Ok(TrainingTuple {
                anchor,
                positives,
                negatives,
                other_negative,
            });
        }
    }
    Err(Error::DatasetTooSparse(format!(
        "no other negative found for anchor {anchor}"
    )))
}

/// Checks every distance rule of a tuple directly from the stored poses.
pub fn tuple_violations(dataset: &[Sample], t: &TrainingTuple, cfg: &TrainConfig) -> Vec<String> {
    let mut v = Vec::new();
    for &p in &t.positives {
        if !(dist(dataset, t.anchor, p) < cfg.tau_p) {
            v.push(format!("positive {p} is not within {} m of the anchor", cfg.tau_p));
        }
    }
    for &n in &t.negatives {
        if !(dist(dataset, t.anchor, n) > cfg.tau_n) {
            v.push(format!("negative {n} is not beyond {} m of the anchor", cfg.tau_n));
        }
        if !(dist(dataset, n, t.other_negative) > cfg.tau_p) {
            v.push(format!("other negative is within {} m of negative {n}", cfg.tau_p));
        }
    }
    if !(dist(dataset, t.anchor, t.other_negative) > cfg.tau_p) {
        v.push("other negative is within tau_p of the anchor".into());
    }
    v
}
