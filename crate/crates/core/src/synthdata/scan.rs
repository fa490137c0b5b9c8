use rand::Rng;
use rand_distr::{Distribution, Normal};

use super::SyntheticWorld;
use crate::pointcloud::{Point, PointCloud, Pose};
use crate::rng;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ScanConfig {
    pub sensor_range: f64,
    /// Per-axis Gaussian position noise.
    pub noise_sigma: f64,
    /// Probability that each in-range surface point is returned.
    pub keep_fraction: f64,
}

impl Default for ScanConfig {
    fn default() -> Self {
        Self {
            sensor_range: 30.0,
            noise_sigma: 0.01,
            keep_fraction: 0.7,
        }
    }
}

/// Surface points within `sensor_range` of the sensor, in the sensor frame,
/// with per-axis Gaussian noise and independent random dropout. Points keep
/// world order; intensity is the owning surface's intensity.
pub fn simulate_scan(world: &SyntheticWorld, pose: &Pose, cfg: &ScanConfig, seed: u64) -> PointCloud {
    let t = pose.translation;
    let center = [t.x, t.y, t.z];
    let inv = pose.transform().inverse();
    let mut r = rng::seeded(seed);
    let noise = Normal::new(0.0, cfg.noise_sigma.max(0.0)).expect("finite sigma");
    let mut out = Vec::new();
    for i in world.tree.radius_query(&center, cfg.sensor_range) {
        if cfg.keep_fraction < 1.0 && r.random::<f64>() >= cfg.keep_fraction {
            continue;
        }
        let p = &world.points.points[i];
        let mut q = inv.apply_array(&[p.x, p.y, p.z]);
        if cfg.noise_sigma > 0.0 {
            for v in &mut q {
                *v += noise.sample(&mut r);
            }
        }
        out.push(Point::new(q[0], q[1], q[2], p.intensity));
    }
    PointCloud::new(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{icp_point_to_point, RigidTransform};
    use crate::synthdata::{generate_world, WorldConfig};
    use nalgebra::Vector3;

    fn world() -> SyntheticWorld {
        generate_world(&WorldConfig::default(), 4).unwrap()
    }

    #[test]
    fn far_pose_gives_empty_scan() {
        let w = world();
        let pose = Pose::from_yaw(0.0, Vector3::new(5000.0, 0.0, 0.0), 0.0);
        assert!(simulate_scan(&w, &pose, &ScanConfig::default(), 0).is_empty());
    }

    #[test]
    fn noiseless_scan_lies_on_world_points() {
        let w = world();
        let pose = Pose::from_yaw(0.3, Vector3::new(-60.0, -60.0, 1.8), 0.0);
        let cfg = ScanConfig {
            noise_sigma: 0.0,
            keep_fraction: 1.0,
            ..ScanConfig::default()
        };
        let scan = simulate_scan(&w, &pose, &cfg, 1);
        assert!(!scan.is_empty());
        let tf = pose.transform();
        for p in scan.iter() {
            let q = tf.apply_array(&[p.x, p.y, p.z]);
            let (_, d2) = w.tree.nearest(&q).unwrap();
            assert!(d2 < 1e-20);
            assert!(p.position().norm() < cfg.sensor_range);
        }
    }

    #[test]
    fn same_seed_same_scan() {
        let w = world();
        let pose = Pose::from_yaw(1.0, Vector3::new(0.0, -60.0, 1.8), 0.0);
        let cfg = ScanConfig::default();
        assert_eq!(simulate_scan(&w, &pose, &cfg, 7), simulate_scan(&w, &pose, &cfg, 7));
    }

    #[test]
    fn scans_from_same_pose_align_at_identity() {
        let w = world();
        let pose = Pose::from_yaw(0.0, Vector3::new(20.0, -60.0, 1.8), 0.0);
        let cfg = ScanConfig {
            noise_sigma: 0.01,
            keep_fraction: 1.0,
            ..ScanConfig::default()
        };
        let a = simulate_scan(&w, &pose, &cfg, 1);
        let b = simulate_scan(&w, &pose, &cfg, 2);
        let t = icp_point_to_point(&a, &b, &RigidTransform::identity(), 30, 1e-9).unwrap();
        assert!(t.translation.norm() < 0.01, "{}", t.translation.norm());
        assert!(t.angle() < 1e-3);
    }
}
