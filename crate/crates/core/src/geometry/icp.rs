use nalgebra::{Matrix3, Vector3};

use super::{KdTree, RigidTransform};
use crate::error::{Error, Result};
use crate::pointcloud::PointCloud;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct IcpConfig {
    pub max_iter: usize,
    /// Stop once the RMS residual improves by less than this (meters).
    pub tol: f64,
    /// Nearest-neighbor pairs farther apart than this are ignored.
    pub max_pair_dist: f64,
}

impl Default for IcpConfig {
    fn default() -> Self {
        Self {
            max_iter: 50,
            tol: 1e-6,
            max_pair_dist: 2.0,
        }
    }
}

#[derive(Clone, Debug)]
pub struct IcpReport {
    pub transform: RigidTransform,
    pub iterations: usize,
    /// Per iteration: RMS pair distance before and after that iteration's
    /// alignment, measured on the same pairing.
    pub residuals: Vec<(f64, f64)>,
}

/// Point-to-point ICP aligning `src` onto `tgt`, starting from `init`.
pub fn icp_point_to_point(
    src: &PointCloud,
    tgt: &PointCloud,
    init: &RigidTransform,
    max_iter: usize,
    tol: f64,
) -> Result<RigidTransform> {
    let cfg = IcpConfig {
        max_iter,
        tol,
        ..IcpConfig::default()
    };
    icp_with_report(src, tgt, init, &cfg).map(|r| r.transform)
}

pub fn icp_with_report(
    src: &PointCloud,
    tgt: &PointCloud,
    init: &RigidTransform,
    cfg: &IcpConfig,
) -> Result<IcpReport> {
    if src.is_empty() || tgt.is_empty() {
        return Err(Error::InvalidInput("ICP needs non-empty clouds".into()));
    }
    let tree = KdTree::from_cloud(tgt);
    let src_pts: Vec<Vector3<f64>> = src.iter().map(|p| p.position()).collect();
    let max_d2 = cfg.max_pair_dist * cfg.max_pair_dist;
    let mut current = *init;
    let mut residuals = Vec::new();
    let mut prev_mean = f64::INFINITY;
    for _ in 0..cfg.max_iter {
        let mut moved = Vec::new();
        let mut matched = Vec::new();
        for p in &src_pts {
            let q = current.apply(p);
            if let Some((j, d2)) = tree.nearest(&[q.x, q.y, q.z]) {
                if d2 < max_d2 {
                    moved.push(q);
                    let t = tree.point(j);
                    matched.push(Vector3::new(t[0], t[1], t[2]));
                }
            }
        }
        if moved.len() < 3 {
            return Err(Error::DegenerateGeometry(format!(
                "only {} point pairs within {} m",
                moved.len(),
                cfg.max_pair_dist
            )));
        }
        let before = rms_distance(&moved, &matched, &RigidTransform::identity());
        let step = best_fit(&moved, &matched)?;
        let after = rms_distance(&moved, &matched, &step);
        current = step.compose(&current);
        residuals.push((before, after));
        let improvement = prev_mean - after;
        prev_mean = after;
        if improvement.abs() < cfg.tol || after == 0.0 {
            break;
        }
    }
    Ok(IcpReport {
        transform: current,
        iterations: residuals.len(),
        residuals,
    })
}

/// Root-mean-square pair distance, the quantity the Kabsch step minimizes.
fn rms_distance(src: &[Vector3<f64>], tgt: &[Vector3<f64>], t: &RigidTransform) -> f64 {
    let ss: f64 = src.iter().zip(tgt).map(|(s, d)| (t.apply(s) - d).norm_squared()).sum();
    (ss / src.len() as f64).sqrt()
}

/// Closed-form least-squares rigid alignment of paired points (Kabsch).
fn best_fit(src: &[Vector3<f64>], tgt: &[Vector3<f64>]) -> Result<RigidTransform> {
    let n = src.len() as f64;
    let cs = src.iter().sum::<Vector3<f64>>() / n;
    let ct = tgt.iter().sum::<Vector3<f64>>() / n;
    let mut h = Matrix3::zeros();
    for (s, t) in src.iter().zip(tgt) {
        h += (s - cs) * (t - ct).transpose();
    }
    let svd = h.svd(true, true);
    let sv = svd.singular_values;
    let scale = sv.max();
    let mut sorted = [sv[0], sv[1], sv[2]];
    sorted.sort_by(|a, b| b.total_cmp(a));
    if scale <= 0.0 || sorted[1] <= 1e-10 * scale {
        return Err(Error::DegenerateGeometry(
            "cross-covariance has rank < 2 (collinear points)".into(),
        ));
    }
    let u = svd.u.expect("svd requested u");
    let v = svd.v_t.expect("svd requested v_t").transpose();
    let mut d = Matrix3::identity();
    if (v * u.transpose()).determinant() < 0.0 {
        d[(2, 2)] = -1.0;
    }
    let rotation = v * d * u.transpose();
    Ok(RigidTransform::new(rotation, ct - rotation * cs))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::apply_transform;
    use crate::pointcloud::Point;
    use crate::rng;
    use rand::Rng;

    fn random_cloud(n: usize, seed: u64) -> PointCloud {
        let mut r = rng::seeded(seed);
        (0..n)
            .map(|_| Point::new(r.random_range(-2.0..2.0), r.random_range(-2.0..2.0), r.random_range(-1.0..1.0), 0.0))
            .collect()
    }

    #[test]
    fn fixed_point_is_identity() {
        let c = random_cloud(200, 1);
        let t = icp_point_to_point(&c, &c, &RigidTransform::identity(), 30, 1e-9).unwrap();
        assert!((t.rotation - Matrix3::identity()).amax() < 1e-9);
        assert!(t.translation.norm() < 1e-9);
    }

    #[test]
    fn recovers_small_motion() {
        let src = random_cloud(500, 2);
        let truth = RigidTransform::from_axis_angle(Vector3::z(), 5f64.to_radians(), Vector3::new(0.3, 0.1, 0.0));
        let tgt = apply_transform(&src, &truth);
        let est = icp_point_to_point(&src, &tgt, &RigidTransform::identity(), 100, 1e-10).unwrap();
        let err = est.compose(&truth.inverse());
        assert!(err.translation.norm() < 1e-3, "{}", err.translation.norm());
        assert!(err.angle() < 1e-3);
    }

    #[test]
    fn collinear_is_degenerate() {
        let c = PointCloud::new(vec![Point::new(0.0, 0.0, 0.0, 0.0), Point::new(1.0, 0.0, 0.0, 0.0)]);
        let err = icp_point_to_point(&c, &c, &RigidTransform::identity(), 10, 1e-6);
        assert!(matches!(err, Err(Error::DegenerateGeometry(_))));
        let line: PointCloud = (0..20).map(|i| Point::new(i as f64 * 0.1, 0.0, 0.0, 0.0)).collect();
        assert!(matches!(
            icp_point_to_point(&line, &line, &RigidTransform::identity(), 10, 1e-6),
            Err(Error::DegenerateGeometry(_))
        ));
    }

    #[test]
    fn residual_non_increasing_on_its_pairing() {
        let src = random_cloud(300, 8);
        let truth = RigidTransform::from_axis_angle(Vector3::new(0.1, 0.2, 1.0), 0.12, Vector3::new(0.2, -0.2, 0.05));
        let tgt = apply_transform(&src, &truth);
        let cfg = IcpConfig { max_iter: 40, tol: 0.0, ..Default::default() };
        let rep = icp_with_report(&src, &tgt, &RigidTransform::identity(), &cfg).unwrap();
        for (before, after) in &rep.residuals {
            assert!(after <= &(before + 1e-12));
        }
    }
}
