use crate::aggregation::GlobalDescriptor;
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct QuadrupletConfig {
    /// Margin against the anchor–negative distances.
    pub alpha: f64,
    /// Margin against the other-negative–negative distances.
    pub beta: f64,
    pub num_negatives: usize,
    pub num_positives: usize,
}

impl Default for QuadrupletConfig {
    fn default() -> Self {
        Self {
            alpha: 0.5,
            beta: 0.3,
            num_negatives: 9,
            num_positives: 2,
        }
    }
}

impl QuadrupletConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.alpha >= 0.0 && self.beta >= 0.0) || self.num_negatives == 0 || self.num_positives == 0 {
            return Err(Error::Config(format!("invalid quadruplet config {self:?}")));
        }
        Ok(())
    }
}

#[derive(Clone, Debug)]
pub struct QuadrupletLoss {
    pub value: f64,
    /// Index of the hardest positive; only it receives gradient.
    pub hardest: usize,
    pub grad_anchor: Vec<f64>,
    pub grad_positives: Vec<Vec<f64>>,
    pub grad_negatives: Vec<Vec<f64>>,
    pub grad_other: Vec<f64>,
}

/// Positive farthest from the anchor in descriptor space (lowest index on ties).
pub fn hardest_positive(anchor: &GlobalDescriptor, positives: &[GlobalDescriptor]) -> Result<usize> {
    if positives.is_empty() {
        return Err(Error::InvalidInput("no positives".into()));
    }
    let mut best = (0, f64::NEG_INFINITY);
    for (i, p) in positives.iter().enumerate() {
        let d = anchor.distance2(p);
        if d > best.1 {
            best = (i, d);
        }
    }
    Ok(best.0)
}

/// Sum over negatives `n_i` of
/// `[|a − hp|² − |a − n_i|² + α]₊ + [|a − hp|² − |n* − n_i|² + β]₊`.
pub fn quadruplet_loss(
    anchor: &GlobalDescriptor,
    positives: &[GlobalDescriptor],
    negatives: &[GlobalDescriptor],
    other: &GlobalDescriptor,
    cfg: &QuadrupletConfig,
) -> Result<QuadrupletLoss> {
    if negatives.is_empty() {
        return Err(Error::InvalidInput("no negatives".into()));
    }
    let hardest = hardest_positive(anchor, positives)?;
    let dim = anchor.len();
    if positives.iter().chain(negatives).chain([other]).any(|g| g.len() != dim) {
        return Err(Error::InvalidInput("descriptor lengths differ".into()));
    }
    let a = &anchor.values;
    let hp = &positives[hardest].values;
    let ns = &other.values;
    let d_ap = anchor.distance2(&positives[hardest]);

    let mut value = 0.0;
    let mut grad_anchor = vec![0.0; dim];
    let mut grad_hp = vec![0.0; dim];
    let mut grad_other = vec![0.0; dim];
    let mut grad_negatives = vec![vec![0.0; dim]; negatives.len()];
    for (neg, gn) in negatives.iter().zip(&mut grad_negatives) {
        let n = &neg.values;
        let first = d_ap - anchor.distance2(neg) + cfg.alpha;
        if first > 0.0 {
            value += first;
            for x in 0..dim {
                grad_anchor[x] += 2.0 * (n[x] - hp[x]);
                grad_hp[x] -= 2.0 * (a[x] - hp[x]);
                gn[x] += 2.0 * (a[x] - n[x]);
            }
        }
        let second = d_ap - other.distance2(neg) + cfg.beta;
        if second > 0.0 {
            value += second;
            for x in 0..dim {
                grad_anchor[x] += 2.0 * (a[x] - hp[x]);
                grad_hp[x] -= 2.0 * (a[x] - hp[x]);
                grad_other[x] -= 2.0 * (ns[x] - n[x]);
                gn[x] += 2.0 * (ns[x] - n[x]);
            }
        }
    }
    let mut grad_positives = vec![vec![0.0; dim]; positives.len()];
    grad_positives[hardest] = grad_hp;
    Ok(QuadrupletLoss {
        value,
        hardest,
        grad_anchor,
        grad_positives,
        grad_negatives,
        grad_other,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng;
    use rand::Rng;

    fn unit(values: Vec<f64>) -> GlobalDescriptor {
        let n = values.iter().map(|v| v * v).sum::<f64>().sqrt();
        GlobalDescriptor::new(values.into_iter().map(|v| v / n).collect())
    }

    fn random_desc(r: &mut rng::Rng, dim: usize) -> GlobalDescriptor {
        unit((0..dim).map(|_| r.random_range(-1.0..1.0)).collect())
    }

    #[test]
    fn hardest_positive_cases() {
        let a = unit(vec![1.0, 0.0]);
        let far = unit(vec![-1.0, 0.1]);
        assert_eq!(hardest_positive(&a, &[a.clone(), far]).unwrap(), 1);
        assert_eq!(hardest_positive(&a, std::slice::from_ref(&a)).unwrap(), 0);
        assert!(hardest_positive(&a, &[]).is_err());
        let mut r = rng::seeded(1);
        let ps: Vec<_> = (0..5).map(|_| random_desc(&mut r, 16)).collect();
        let a16 = random_desc(&mut r, 16);
        let idx = hardest_positive(&a16, &ps).unwrap();
        for p in &ps {
            assert!(a16.distance(&ps[idx]) >= a16.distance(p));
        }
    }

    #[test]
    fn identical_descriptors_give_margins() {
        let g = unit(vec![0.3, 0.4, 0.5, 0.1]);
        let out = quadruplet_loss(&g, &[g.clone(), g.clone()], &vec![g.clone(); 9], &g, &QuadrupletConfig::default()).unwrap();
        assert!((out.value - 7.2).abs() < 1e-12);
    }

    #[test]
    fn inactive_hinges() {
        let a = GlobalDescriptor::new(vec![1.0, 0.0, 0.0]);
        let negs = vec![GlobalDescriptor::new(vec![0.0, 1.0, 0.0]), GlobalDescriptor::new(vec![0.0, -1.0, 0.0])];
        let other = GlobalDescriptor::new(vec![0.0, 0.0, 1.0]);
        let out = quadruplet_loss(&a, std::slice::from_ref(&a), &negs, &other, &QuadrupletConfig::default()).unwrap();
        assert_eq!(out.value, 0.0);
        assert!(out.grad_anchor.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn negative_order_does_not_matter() {
        let mut r = rng::seeded(2);
        let a = random_desc(&mut r, 9);
        let ps: Vec<_> = (0..2).map(|_| random_desc(&mut r, 9)).collect();
        let ns: Vec<_> = (0..9).map(|_| random_desc(&mut r, 9)).collect();
        let o = random_desc(&mut r, 9);
        let cfg = QuadrupletConfig::default();
        let x = quadruplet_loss(&a, &ps, &ns, &o, &cfg).unwrap();
        let mut rev = ns.clone();
        rev.reverse();
        let y = quadruplet_loss(&a, &ps, &rev, &o, &cfg).unwrap();
        assert!((x.value - y.value).abs() < 1e-12);
        assert!(x.value >= 0.0);
    }

    #[test]
    fn empty_inputs_rejected() {
        let g = unit(vec![1.0, 1.0]);
        let cfg = QuadrupletConfig::default();
        assert!(quadruplet_loss(&g, &[], std::slice::from_ref(&g), &g, &cfg).is_err());
        assert!(quadruplet_loss(&g, std::slice::from_ref(&g), &[], &g, &cfg).is_err());
    }
}
