use rayon::prelude::*;

use crate::aggregation::{aggregate_backward, aggregate_with_cache, AggregateCache, GlobalDescriptor, DEFAULT_EPN_ALPHA};
use crate::encoder::{EncoderParams, FeatureMap, Encoder};
use crate::error::{Error, Result};
use crate::geometry::CorrespondenceSet;
use crate::losses::{
    hardest_contrastive_loss, joint_loss, quadruplet_loss, JointConfig, LocalLossConfig, LossWithGrad, QuadrupletConfig,
};
use crate::pointcloud::PointCloud;

/// Loss hyper-parameters shared by training and gradient checking.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LossConfig {
    pub local: LocalLossConfig,
    pub quadruplet: QuadrupletConfig,
    pub joint: JointConfig,
    pub epn_alpha: f64,
}

impl Default for LossConfig {
    fn default() -> Self {
        Self {
            local: LocalLossConfig::default(),
            quadruplet: QuadrupletConfig::default(),
            joint: JointConfig::default(),
            epn_alpha: DEFAULT_EPN_ALPHA,
        }
    }
}

/// Prepared clouds of one tuple, in the order anchor, positives,
/// negatives, other negative.
#[derive(Clone, Debug)]
pub struct TupleClouds {
    pub clouds: Vec<PointCloud>,
    pub num_positives: usize,
    pub num_negatives: usize,
}

impl TupleClouds {
    pub fn new(anchor: PointCloud, positives: Vec<PointCloud>, negatives: Vec<PointCloud>, other: PointCloud) -> Self {
        let num_positives = positives.len();
        let num_negatives = negatives.len();
        let mut clouds = vec![anchor];
        clouds.extend(positives);
        clouds.extend(negatives);
        clouds.push(other);
        Self {
            clouds,
            num_positives,
            num_negatives,
        }
    }
}

/// A local-loss term between two members of the tuple.
#[derive(Clone, Debug)]
pub struct LocalPair {
    pub first: usize,
    pub second: usize,
    pub correspondences: CorrespondenceSet,
}

#[derive(Clone, Debug)]
pub struct TupleObjective {
    pub lg: f64,
    pub llc: f64,
    pub joint: LossWithGrad,
    pub descriptors: Vec<GlobalDescriptor>,
}

/// Forward and backward pass of the joint loss for one tuple. The local
/// term is averaged over `local_pairs` and is never evaluated when its
/// weight is zero.
pub fn tuple_loss_and_grad(
    tuple: &TupleClouds,
    local_pairs: &[LocalPair],
    params: &EncoderParams,
    cfg: &LossConfig,
    seed: u64,
) -> Result<TupleObjective> {
    let p = tuple.num_positives;
    let n = tuple.num_negatives;
    if tuple.clouds.len() != p + n + 2 {
        return Err(Error::InvalidInput("tuple cloud count does not match its layout".into()));
    }
    let encoded: Vec<(FeatureMap, _)> = tuple
        .clouds
        .par_iter()
        .map(|c| params.forward(c))
        .collect::<Result<_>>()?;
    let caches: Vec<AggregateCache> = encoded
        .par_iter()
        .map(|(f, _)| aggregate_with_cache(f, cfg.epn_alpha))
        .collect::<Result<_>>()?;
    let descriptors: Vec<GlobalDescriptor> = caches.iter().map(|c| c.descriptor.clone()).collect();

    let q = quadruplet_loss(
        &descriptors[0],
        &descriptors[1..=p],
        &descriptors[p + 1..=p + n],
        &descriptors[p + n + 1],
        &cfg.quadruplet,
    )?;
    let mut desc_grads = vec![q.grad_anchor];
    desc_grads.extend(q.grad_positives);
    desc_grads.extend(q.grad_negatives);
    desc_grads.push(q.grad_other);

    let feature_grads: Vec<FeatureMap> = encoded
        .par_iter()
        .zip(&caches)
        .zip(&desc_grads)
        .map(|(((f, _), cache), g)| aggregate_backward(f, cache, g))
        .collect();
    let mut grad_g = params.zeros_like().data;
    for ((_, enc_cache), fg) in encoded.iter().zip(&feature_grads) {
        params.backward(enc_cache, fg, &mut grad_g)?;
    }
    let global = LossWithGrad { value: q.value, grad: grad_g };

    if cfg.joint.omega == 0.0 || local_pairs.is_empty() {
        return Ok(TupleObjective {
            lg: global.value,
            llc: 0.0,
            joint: global,
            descriptors,
        });
    }

    let scale = 1.0 / local_pairs.len() as f64;
    let mut local_feature_grads: Vec<Option<FeatureMap>> = vec![None; tuple.clouds.len()];
    let mut llc = 0.0;
    for (t, pair) in local_pairs.iter().enumerate() {
        let out = hardest_contrastive_loss(
            &encoded[pair.first].0,
            &encoded[pair.second].0,
            &pair.correspondences,
            &cfg.local,
            crate::rng::derive(seed, t as u64),
        )?;
        llc += scale * out.value;
        for (idx, g) in [(pair.first, out.grad1), (pair.second, out.grad2)] {
            local_feature_grads[idx]
                .get_or_insert_with(|| FeatureMap::zeros(g.len(), g.dim()))
                .add_scaled(&g, scale);
        }
    }
    let mut grad_lc = params.zeros_like().data;
    for (idx, g) in local_feature_grads.iter().enumerate() {
        if let Some(g) = g {
            params.backward(&encoded[idx].1, g, &mut grad_lc)?;
        }
    }
    let local = LossWithGrad { value: llc, grad: grad_lc };
    Ok(TupleObjective {
        lg: global.value,
        llc,
        joint: joint_loss(&global, &local, &cfg.joint)?,
        descriptors,
    })
}
