use std::sync::Arc;

use rand::seq::index;
use rayon::prelude::*;

use super::{apply_transform, icp_with_report, IcpConfig, KdTree};
use crate::error::{Error, Result};
use crate::pointcloud::{PointCloud, Pose};
use crate::rng;

/// Index pairs `(i, j)` into two clouds whose aligned positions lie within
/// `radius` of each other, together with the aligned positions themselves
/// (used to tell mined negatives that are geometric neighbors apart).
#[derive(Clone, Debug)]
pub struct CorrespondenceSet {
    pub pairs: Vec<(usize, usize)>,
    pub radius: f64,
    pub aligned1: Arc<[[f64; 3]]>,
    pub aligned2: Arc<[[f64; 3]]>,
}

impl CorrespondenceSet {
    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    /// Squared aligned distance between point `i` of cloud 1 and `j` of cloud 2.
    pub fn aligned_dist2(&self, i: usize, j: usize) -> f64 {
        let a = &self.aligned1[i];
        let b = &self.aligned2[j];
        (a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2) + (a[2] - b[2]).powi(2)
    }

    /// Builds a set directly from already-aligned positions.
    pub fn from_aligned(aligned1: Vec<[f64; 3]>, aligned2: Vec<[f64; 3]>, radius: f64) -> Self {
        let tree = KdTree::new(aligned2.clone());
        let pairs = radius_pairs(&aligned1, &tree, radius);
        Self {
            pairs,
            radius,
            aligned1: aligned1.into(),
            aligned2: aligned2.into(),
        }
    }
}

fn radius_pairs(src: &[[f64; 3]], tree: &KdTree, r: f64) -> Vec<(usize, usize)> {
    src.par_iter()
        .enumerate()
        .map(|(i, p)| {
            tree.radius_query(p, r)
                .into_iter()
                .map(|j| (i, j))
                .collect::<Vec<_>>()
        })
        .collect::<Vec<_>>()
        .into_iter()
        .flatten()
        .collect()
}

/// Moves both clouds into the world frame with their poses, optionally
/// refines cloud 1 onto cloud 2 with ICP, then emits every pair within `r`,
/// sorted by `(i, j)`.
pub fn find_correspondences(
    p1: &PointCloud,
    p2: &PointCloud,
    t1: &Pose,
    t2: &Pose,
    r: f64,
    icp: Option<&IcpConfig>,
) -> Result<CorrespondenceSet> {
    if r <= 0.0 {
        return Err(Error::InvalidInput(format!("correspondence radius must be positive, got {r}")));
    }
    let mut w1 = apply_transform(p1, &t1.transform());
    let w2 = apply_transform(p2, &t2.transform());
    if let Some(cfg) = icp {
        if !w1.is_empty() && !w2.is_empty() {
            let refine = icp_with_report(&w1, &w2, &Default::default(), cfg)?.transform;
            w1 = apply_transform(&w1, &refine);
        }
    }
    Ok(CorrespondenceSet::from_aligned(w1.positions(), w2.positions(), r))
}

/// Uniform subsample of `min(n, |C|)` pairs, kept in `(i, j)` order.
pub fn sample_correspondences(c12: &CorrespondenceSet, n: usize, seed: u64) -> CorrespondenceSet {
    assert!(n > 0, "sample size must be positive");
    if c12.len() <= n {
        return c12.clone();
    }
    let mut keep = index::sample(&mut rng::seeded(seed), c12.len(), n).into_vec();
    keep.sort_unstable();
    CorrespondenceSet {
        pairs: keep.into_iter().map(|k| c12.pairs[k]).collect(),
        ..c12.clone()
    }
}
