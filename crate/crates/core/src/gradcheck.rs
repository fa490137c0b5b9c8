//! Finite-difference verification of every analytic gradient in the
//! pipeline.
//!
//! Each component is checked on random instances that are regenerated until
//! they sit away from the kinks of the loss (hinge boundaries, argmax and
//! argmin switches) and have well-separated singular values, so central
//! differences are meaningful.

use rand::Rng;

use crate::aggregation::{aggregate_backward, aggregate_with_cache, second_order_pool, svd_square, GlobalDescriptor};
use crate::encoder::{encode, encode_backward, EncoderParams, FeatureMap};
use crate::error::{Error, Result};
use crate::geometry::CorrespondenceSet;
use crate::losses::{hardest_contrastive_loss, quadruplet_loss, JointConfig, LocalLossConfig, QuadrupletConfig};
use crate::pointcloud::{Point, PointCloud};
use crate::rng;
use crate::training::{tuple_loss_and_grad, LocalPair, LossConfig, TupleClouds};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Component {
    LocalLoss,
    Quadruplet,
    Aggregation,
    Joint,
    Encoder,
}

impl Component {
    pub const ALL: [Component; 5] = [
        Component::LocalLoss,
        Component::Quadruplet,
        Component::Aggregation,
        Component::Joint,
        Component::Encoder,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Component::LocalLoss => "local_consistency_loss",
            Component::Quadruplet => "quadruplet_loss",
            Component::Aggregation => "aggregation",
            Component::Joint => "joint_loss",
            Component::Encoder => "encoder",
        }
    }

    pub fn from_name(name: &str) -> Option<Component> {
        Component::ALL.into_iter().find(|c| c.name() == name)
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GradCheckConfig {
    /// Random instances per component.
    pub instances: usize,
    pub seed: u64,
    pub tolerance: f64,
    /// Central-difference step.
    pub step: f64,
    pub feature_dim: usize,
    pub points: usize,
    pub min_spectral_gap: f64,
    /// Clearance required from every kink of a piecewise-smooth loss.
    pub kink_margin: f64,
    /// Flips the sign of one component's analytic gradient (harness self-test).
    pub inject_sign_error: Option<Component>,
}

impl Default for GradCheckConfig {
    fn default() -> Self {
        Self {
            instances: 10,
            seed: 0,
            tolerance: 1e-4,
            step: 1e-6,
            feature_dim: 4,
            points: 20,
            min_spectral_gap: 0.1,
            kink_margin: 1e-3,
            inject_sign_error: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ComponentReport {
    pub component: Component,
    pub instances: usize,
    pub worst_relative_error: f64,
    pub passed: bool,
}

#[derive(Clone, Debug, PartialEq)]
pub struct GradCheckReport {
    pub components: Vec<ComponentReport>,
}

impl GradCheckReport {
    pub fn passed(&self) -> bool {
        self.components.iter().all(|c| c.passed)
    }

    pub fn to_text(&self) -> String {
        self.components
            .iter()
            .map(|c| {
                format!(
                    "{} {} instances={} worst_rel_err={:.3e}\n",
                    if c.passed { "PASS" } else { "FAIL" },
                    c.component.name(),
                    c.instances,
                    c.worst_relative_error
                )
            })
            .collect()
    }
}

/// `‖a − b‖ / max(‖a‖, ‖b‖, 1e-8)`.
pub fn relative_error(a: &[f64], b: &[f64]) -> f64 {
    let norm = |v: &[f64]| v.iter().map(|x| x * x).sum::<f64>().sqrt();
    let diff: f64 = a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt();
    diff / norm(a).max(norm(b)).max(1e-8)
}

/// Central differences of `f` at `x`.
pub fn central_difference(x: &[f64], h: f64, f: impl Fn(&[f64]) -> f64) -> Vec<f64> {
    let mut probe = x.to_vec();
    (0..x.len())
        .map(|i| {
            let orig = probe[i];
            probe[i] = orig + h;
            let up = f(&probe);
            probe[i] = orig - h;
            let down = f(&probe);
            probe[i] = orig;
            (up - down) / (2.0 * h)
        })
        .collect()
}

const MAX_TRIES: usize = 10_000;
const JOINT_WEIGHT_SCALE: f64 = 2.0;

fn random_features(n: usize, d: usize, r: &mut rng::Rng) -> FeatureMap {
    FeatureMap::new(d, (0..n * d).map(|_| r.random_range(-1.0..1.0)).collect()).expect("shape")
}

/// Pooled matrix has a clear argmax everywhere and well-separated,
/// non-vanishing singular values.
fn aggregation_conditioned(fm: &FeatureMap, cfg: &GradCheckConfig) -> bool {
    let d = fm.dim();
    for x in 0..d {
        for y in x..d {
            let mut best = [f64::NEG_INFINITY; 2];
            for row in fm.rows() {
                let v = row[x] * row[y];
                if v > best[0] {
                    best = [v, best[0]];
                } else if v > best[1] {
                    best[1] = v;
                }
            }
            if best[0] - best[1] < cfg.kink_margin {
                return false;
            }
        }
    }
    let Ok(pooled) = second_order_pool(fm) else { return false };
    let Ok(svd) = svd_square(&pooled.matrix) else { return false };
    let mut s: Vec<f64> = svd.s.iter().copied().collect();
    s.sort_by(f64::total_cmp);
    s[0] >= cfg.min_spectral_gap && s.windows(2).all(|w| w[1] - w[0] >= cfg.min_spectral_gap)
}

fn flip(grad: &mut [f64], c: Component, cfg: &GradCheckConfig) {
    if cfg.inject_sign_error == Some(c) {
        for g in grad {
            *g = -*g;
        }
    }
}

fn check_aggregation(cfg: &GradCheckConfig, r: &mut rng::Rng) -> Result<f64> {
    let (n, d) = (cfg.points, cfg.feature_dim);
    let fm = (0..MAX_TRIES)
        .map(|_| random_features(n, d, r))
        .find(|f| aggregation_conditioned(f, cfg))
        .ok_or_else(|| Error::Numerical("no well-conditioned aggregation instance found".into()))?;
    let upstream: Vec<f64> = (0..d * d).map(|_| r.random_range(-1.0..1.0)).collect();
    let alpha = LossConfig::default().epn_alpha;
    let cache = aggregate_with_cache(&fm, alpha)?;
    let mut analytic = aggregate_backward(&fm, &cache, &upstream).as_slice().to_vec();
    flip(&mut analytic, Component::Aggregation, cfg);
    let fd = central_difference(fm.as_slice(), cfg.step, |x| {
        let f = FeatureMap::new(d, x.to_vec()).expect("shape");
        let g = aggregate_with_cache(&f, alpha).expect("aggregate").descriptor;
        g.values.iter().zip(&upstream).map(|(a, b)| a * b).sum()
    });
    Ok(relative_error(&analytic, &fd))
}

fn random_unit(len: usize, r: &mut rng::Rng) -> GlobalDescriptor {
    let v: Vec<f64> = (0..len).map(|_| r.random_range(-1.0..1.0)).collect();
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    GlobalDescriptor::new(v.into_iter().map(|x| x / norm).collect())
}

fn quadruplet_conditioned(
    a: &GlobalDescriptor,
    ps: &[GlobalDescriptor],
    ns: &[GlobalDescriptor],
    o: &GlobalDescriptor,
    qc: &QuadrupletConfig,
    margin: f64,
) -> bool {
    let mut dp: Vec<f64> = ps.iter().map(|p| a.distance2(p)).collect();
    dp.sort_by(|x, y| y.total_cmp(x));
    if dp.len() > 1 && dp[0] - dp[1] < margin {
        return false;
    }
    let d_ap = dp[0];
    ns.iter().all(|n| {
        (d_ap - a.distance2(n) + qc.alpha).abs() >= margin && (d_ap - o.distance2(n) + qc.beta).abs() >= margin
    })
}

fn check_quadruplet(cfg: &GradCheckConfig, r: &mut rng::Rng) -> Result<f64> {
    let qc = QuadrupletConfig::default();
    let len = cfg.feature_dim * cfg.feature_dim;
    let (np, nn) = (qc.num_positives, qc.num_negatives);
    let mut found = None;
    for _ in 0..MAX_TRIES {
        let a = random_unit(len, r);
        let ps: Vec<_> = (0..np).map(|_| random_unit(len, r)).collect();
        let ns: Vec<_> = (0..nn).map(|_| random_unit(len, r)).collect();
        let o = random_unit(len, r);
        if quadruplet_conditioned(&a, &ps, &ns, &o, &qc, cfg.kink_margin) {
            found = Some((a, ps, ns, o));
            break;
        }
    }
    let (a, ps, ns, o) = found.ok_or_else(|| Error::Numerical("no well-conditioned quadruplet instance found".into()))?;
    let out = quadruplet_loss(&a, &ps, &ns, &o, &qc)?;
    let mut analytic: Vec<f64> = out.grad_anchor.clone();
    analytic.extend(out.grad_positives.iter().flatten());
    analytic.extend(out.grad_negatives.iter().flatten());
    analytic.extend(&out.grad_other);
    flip(&mut analytic, Component::Quadruplet, cfg);
    let x: Vec<f64> = std::iter::once(&a)
        .chain(&ps)
        .chain(&ns)
        .chain(std::iter::once(&o))
        .flat_map(|g| g.values.iter().copied())
        .collect();
    let fd = central_difference(&x, cfg.step, |x| {
        let mut chunks = x.chunks_exact(len).map(|c| GlobalDescriptor::new(c.to_vec()));
        let a = chunks.next().expect("anchor");
        let ps: Vec<_> = chunks.by_ref().take(np).collect();
        let ns: Vec<_> = chunks.by_ref().take(nn).collect();
        let o = chunks.next().expect("other");
        quadruplet_loss(&a, &ps, &ns, &o, &qc).expect("loss").value
    });
    Ok(relative_error(&analytic, &fd))
}

fn random_positions(n: usize, r: &mut rng::Rng) -> Vec<[f64; 3]> {
    (0..n)
        .map(|_| [r.random_range(0.0..2.0), r.random_range(0.0..2.0), r.random_range(0.0..2.0)])
        .collect()
}

fn jittered(p: &[[f64; 3]], sigma: f64, r: &mut rng::Rng) -> Vec<[f64; 3]> {
    p.iter()
        .map(|q| [q[0] + r.random_range(-sigma..sigma), q[1] + r.random_range(-sigma..sigma), q[2] + r.random_range(-sigma..sigma)])
        .collect()
}

fn dist2(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Every squared feature distance the loss could look at is clear of the
/// margins, and no two candidates for a mined minimum are nearly tied.
fn local_conditioned(f1: &FeatureMap, f2: &FeatureMap, set: &CorrespondenceSet, lc: &LocalLossConfig, margin: f64) -> bool {
    let side_ok = |q: &[f64], other: &FeatureMap| {
        let mut d: Vec<f64> = other.rows().map(|row| dist2(q, row)).collect();
        d.sort_by(f64::total_cmp);
        d.windows(2).all(|w| w[1] - w[0] >= margin) && d.iter().all(|v| (v - lc.m_n).abs() >= margin)
    };
    set.pairs.iter().all(|&(i, j)| {
        (dist2(f1.row(i), f2.row(j)) - lc.m_p).abs() >= margin && side_ok(f1.row(i), f2) && side_ok(f2.row(j), f1)
    })
}

fn check_local(cfg: &GradCheckConfig, r: &mut rng::Rng) -> Result<f64> {
    let (n, d) = (cfg.points, cfg.feature_dim);
    let lc = LocalLossConfig {
        mining_size: n / 2,
        ..LocalLossConfig::default()
    };
    let mut found = None;
    for _ in 0..MAX_TRIES {
        let p1 = random_positions(n, r);
        let p2 = jittered(&p1, 0.1, r);
        let set = CorrespondenceSet::from_aligned(p1, p2, 0.3);
        let f1 = random_features(n, d, r);
        let f2 = random_features(n, d, r);
        if !set.is_empty() && local_conditioned(&f1, &f2, &set, &lc, cfg.kink_margin) {
            found = Some((f1, f2, set));
            break;
        }
    }
    let (f1, f2, set) = found.ok_or_else(|| Error::Numerical("no well-conditioned local-loss instance found".into()))?;
    let seed = r.random::<u64>();
    let out = hardest_contrastive_loss(&f1, &f2, &set, &lc, seed)?;
    let mut analytic = out.grad1.as_slice().to_vec();
    analytic.extend(out.grad2.as_slice());
    flip(&mut analytic, Component::LocalLoss, cfg);
    let x: Vec<f64> = f1.as_slice().iter().chain(f2.as_slice()).copied().collect();
    let fd = central_difference(&x, cfg.step, |x| {
        let (a, b) = x.split_at(n * d);
        let a = FeatureMap::new(d, a.to_vec()).expect("shape");
        let b = FeatureMap::new(d, b.to_vec()).expect("shape");
        hardest_contrastive_loss(&a, &b, &set, &lc, seed).expect("loss").value
    });
    Ok(relative_error(&analytic, &fd))
}

fn random_cloud(positions: &[[f64; 3]], r: &mut rng::Rng) -> PointCloud {
    positions
        .iter()
        .map(|p| Point::new(p[0], p[1], p[2], r.random()))
        .collect()
}

fn check_encoder(cfg: &GradCheckConfig, r: &mut rng::Rng) -> Result<f64> {
    let cloud = random_cloud(&random_positions(cfg.points, r), r);
    let params = EncoderParams::init(cfg.feature_dim, 8, r.random());
    let (n, d) = (cfg.points, cfg.feature_dim);
    let upstream = random_features(n, d, r);
    let mut analytic = encode_backward(&cloud, &params, &upstream)?.data;
    flip(&mut analytic, Component::Encoder, cfg);
    let fd = central_difference(&params.data, cfg.step, |x| {
        let p = EncoderParams {
            data: x.to_vec(),
            ..params.clone()
        };
        let f = encode(&cloud, &p).expect("encode");
        f.as_slice().iter().zip(upstream.as_slice()).map(|(a, b)| a * b).sum()
    });
    Ok(relative_error(&analytic, &fd))
}

/// Full tuple objective through a small encoder: anchor, two positives, two
/// negatives and an other negative, with the local loss on the anchor and
/// first positive.
fn check_joint(cfg: &GradCheckConfig, r: &mut rng::Rng) -> Result<f64> {
    let n = cfg.points;
    let losses = LossConfig {
        quadruplet: QuadrupletConfig {
            num_negatives: 2,
            ..QuadrupletConfig::default()
        },
        local: LocalLossConfig {
            mining_size: n / 2,
            ..LocalLossConfig::default()
        },
        joint: JointConfig { omega: 1.0 },
        ..LossConfig::default()
    };
    for _ in 0..MAX_TRIES {
        let mut params = EncoderParams::init(cfg.feature_dim, 8, r.random());
        for v in &mut params.data {
            *v *= JOINT_WEIGHT_SCALE;
        }
        let anchor_pos = random_positions(n, r);
        let pos_pos = jittered(&anchor_pos, 0.1, r);
        let mut clouds = vec![random_cloud(&anchor_pos, r), random_cloud(&pos_pos, r)];
        for _ in 0..4 {
            clouds.push(random_cloud(&random_positions(n, r), r));
        }
        let features: Vec<FeatureMap> = clouds.iter().map(|c| encode(c, &params)).collect::<Result<_>>()?;
        if !features.iter().all(|f| aggregation_conditioned(f, cfg)) {
            continue;
        }
        let set = CorrespondenceSet::from_aligned(anchor_pos, pos_pos, 0.3);
        if set.is_empty() || !local_conditioned(&features[0], &features[1], &set, &losses.local, cfg.kink_margin) {
            continue;
        }
        let descs: Vec<GlobalDescriptor> = features
            .iter()
            .map(|f| aggregate_with_cache(f, losses.epn_alpha).map(|c| c.descriptor))
            .collect::<Result<_>>()?;
        if !quadruplet_conditioned(&descs[0], &descs[1..3], &descs[3..5], &descs[5], &losses.quadruplet, cfg.kink_margin) {
            continue;
        }
        let mut it = clouds.into_iter();
        let a = it.next().expect("anchor");
        let ps: Vec<PointCloud> = it.by_ref().take(2).collect();
        let ns: Vec<PointCloud> = it.by_ref().take(2).collect();
        let tuple = TupleClouds::new(a, ps, ns, it.next().expect("other"));
        let pairs = vec![LocalPair {
            first: 0,
            second: 1,
            correspondences: set,
        }];
        let seed = r.random::<u64>();
        let obj = tuple_loss_and_grad(&tuple, &pairs, &params, &losses, seed)?;
        let mut analytic = obj.joint.grad;
        flip(&mut analytic, Component::Joint, cfg);
        let fd = central_difference(&params.data, cfg.step, |x| {
            let p = EncoderParams {
                data: x.to_vec(),
                ..params.clone()
            };
            tuple_loss_and_grad(&tuple, &pairs, &p, &losses, seed).expect("objective").joint.value
        });
        return Ok(relative_error(&analytic, &fd));
    }
    Err(Error::Numerical("no well-conditioned joint instance found".into()))
}

pub fn check_component(component: Component, cfg: &GradCheckConfig) -> Result<ComponentReport> {
    let mut worst: f64 = 0.0;
    for i in 0..cfg.instances {
        let mut r = rng::seeded(rng::derive2(cfg.seed, component as u64, i as u64));
        let err = match component {
            Component::LocalLoss => check_local(cfg, &mut r)?,
            Component::Quadruplet => check_quadruplet(cfg, &mut r)?,
            Component::Aggregation => check_aggregation(cfg, &mut r)?,
            Component::Joint => check_joint(cfg, &mut r)?,
            Component::Encoder => check_encoder(cfg, &mut r)?,
        };
        worst = worst.max(err);
    }
    Ok(ComponentReport {
        component,
        instances: cfg.instances,
        worst_relative_error: worst,
        passed: worst <= cfg.tolerance,
    })
}

pub fn run_gradcheck(cfg: &GradCheckConfig) -> Result<GradCheckReport> {
    if cfg.instances == 0 {
        return Err(Error::Config("gradient check needs at least one instance".into()));
    }
    let components = Component::ALL
        .iter()
        .map(|&c| check_component(c, cfg))
        .collect::<Result<_>>()?;
    Ok(GradCheckReport { components })
}
