use rand::seq::index;

use crate::encoder::FeatureMap;
use crate::error::{Error, Result};
use crate::geometry::CorrespondenceSet;
use crate::rng;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LocalLossConfig {
    /// Positive margin on squared feature distance.
    pub m_p: f64,
    /// Negative margin on squared feature distance.
    pub m_n: f64,
    pub lambda_n: f64,
    /// Size of the random negative pool drawn from each cloud per call.
    pub mining_size: usize,
}

impl Default for LocalLossConfig {
    fn default() -> Self {
        Self {
            m_p: 0.1,
            m_n: 2.0,
            lambda_n: 0.5,
            mining_size: 512,
        }
    }
}

impl LocalLossConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.m_p >= 0.0 && self.m_n > self.m_p && self.lambda_n >= 0.0) || self.mining_size == 0 {
            return Err(Error::Config(format!("invalid local loss config {self:?}")));
        }
        Ok(())
    }
}

#[derive(Clone, Debug)]
pub struct LocalLoss {
    pub value: f64,
    pub positive: f64,
    pub negative1: f64,
    pub negative2: f64,
    /// Number of pairs whose mined negative is geometrically valid, per side.
    pub valid1: usize,
    pub valid2: usize,
    pub grad1: FeatureMap,
    pub grad2: FeatureMap,
}

fn dist2(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Nearest feature among `pool` rows of `other` (first on ties).
fn mine(query: &[f64], other: &FeatureMap, pool: &[usize]) -> (usize, f64) {
    let mut best = (pool[0], f64::INFINITY);
    for &k in pool {
        let d = dist2(query, other.row(k));
        if d < best.1 {
            best = (k, d);
        }
    }
    best
}

/// Hardest-contrastive consistency loss over correspondences `c12`.
///
/// For each pair `(i, j)`: a positive hinge `[|f1_i − f2_j|² − m_p]₊`
/// averaged over all pairs, plus for each side a hinge
/// `λ_n [m_n − min_k |f_i − f_k|²]₊` against the hardest feature in a random
/// pool of the other cloud. A mined negative that lies geometrically within
/// the correspondence radius of the query point is discarded; each negative
/// sum is divided by its count of kept terms.
pub fn hardest_contrastive_loss(
    f1: &FeatureMap,
    f2: &FeatureMap,
    c12: &CorrespondenceSet,
    cfg: &LocalLossConfig,
    seed: u64,
) -> Result<LocalLoss> {
    cfg.validate()?;
    if c12.is_empty() {
        return Err(Error::InvalidInput("empty correspondence set".into()));
    }
    if f1.is_empty() || f2.is_empty() || f1.dim() != f2.dim() {
        return Err(Error::InvalidInput("feature maps must be non-empty and of equal width".into()));
    }
    if c12.aligned1.len() != f1.len() || c12.aligned2.len() != f2.len() {
        return Err(Error::InvalidInput("correspondence set does not match feature map sizes".into()));
    }
    let mut r = rng::seeded(seed);
    let mut pool2 = index::sample(&mut r, f2.len(), cfg.mining_size.min(f2.len())).into_vec();
    let mut pool1 = index::sample(&mut r, f1.len(), cfg.mining_size.min(f1.len())).into_vec();
    pool1.sort_unstable();
    pool2.sort_unstable();

    let r2 = c12.radius * c12.radius;
    let mut memo1: Vec<Option<(usize, f64)>> = vec![None; f1.len()];
    let mut memo2: Vec<Option<(usize, f64)>> = vec![None; f2.len()];
    let mut positives = Vec::with_capacity(c12.len());
    let mut neg1 = Vec::new();
    let mut neg2 = Vec::new();
    for &(i, j) in &c12.pairs {
        let fi = f1.row(i);
        let fj = f2.row(j);
        positives.push((i, j, dist2(fi, fj)));
        let (ki, di) = *memo1[i].get_or_insert_with(|| mine(fi, f2, &pool2));
        if c12.aligned_dist2(i, ki) >= r2 {
            neg1.push((i, ki, di));
        }
        let (kj, dj) = *memo2[j].get_or_insert_with(|| mine(fj, f1, &pool1));
        if c12.aligned_dist2(kj, j) >= r2 {
            neg2.push((j, kj, dj));
        }
    }

    let mut grad1 = FeatureMap::zeros(f1.len(), f1.dim());
    let mut grad2 = FeatureMap::zeros(f2.len(), f2.dim());
    let n_pos = positives.len() as f64;
    let mut positive = 0.0;
    for &(i, j, d) in &positives {
        if d - cfg.m_p > 0.0 {
            positive += (d - cfg.m_p) / n_pos;
            push_pair_grad(&mut grad1, i, &mut grad2, j, f1.row(i), f2.row(j), 2.0 / n_pos);
        }
    }
    let mut negative1 = 0.0;
    if !neg1.is_empty() {
        let scale = cfg.lambda_n / neg1.len() as f64;
        for &(i, k, d) in &neg1 {
            if cfg.m_n - d > 0.0 {
                negative1 += scale * (cfg.m_n - d);
                push_pair_grad(&mut grad1, i, &mut grad2, k, f1.row(i), f2.row(k), -2.0 * scale);
            }
        }
    }
    let mut negative2 = 0.0;
    if !neg2.is_empty() {
        let scale = cfg.lambda_n / neg2.len() as f64;
        for &(j, k, d) in &neg2 {
            if cfg.m_n - d > 0.0 {
                negative2 += scale * (cfg.m_n - d);
                push_pair_grad(&mut grad2, j, &mut grad1, k, f2.row(j), f1.row(k), -2.0 * scale);
            }
        }
    }
    Ok(LocalLoss {
        value: positive + negative1 + negative2,
        positive,
        negative1,
        negative2,
        valid1: neg1.len(),
        valid2: neg2.len(),
        grad1,
        grad2,
    })
}

/// Gradient of `coef/2 · |a − b|²`: `+coef (a − b)` to `a`, `−coef (a − b)` to `b`.
fn push_pair_grad(ga: &mut FeatureMap, ia: usize, gb: &mut FeatureMap, ib: usize, a: &[f64], b: &[f64], coef: f64) {
    for (x, (av, bv)) in a.iter().zip(b).enumerate() {
        let g = coef * (av - bv);
        ga.row_mut(ia)[x] += g;
        gb.row_mut(ib)[x] -= g;
    }
}
