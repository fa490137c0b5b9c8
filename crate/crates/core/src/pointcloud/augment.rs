use std::f64::consts::PI;

use rand::Rng;
use rand_distr::{Distribution, Normal};

use super::{Point, PointCloud};
use crate::rng;

/// Adds independent per-axis `N(0, sigma²)` offsets clamped to
/// `[-clip, clip]`. Intensity is untouched.
pub fn augment_jitter(cloud: &PointCloud, sigma: f64, clip: f64, seed: u64) -> PointCloud {
    assert!(sigma >= 0.0 && clip >= 0.0, "sigma and clip must be non-negative");
    if sigma == 0.0 {
        return cloud.clone();
    }
    let normal = Normal::new(0.0, sigma).expect("finite sigma");
    let mut rng = rng::seeded(seed);
    let mut offset = || normal.sample(&mut rng).clamp(-clip, clip);
    cloud
        .iter()
        .map(|p| Point::new(p.x + offset(), p.y + offset(), p.z + offset(), p.intensity))
        .collect()
}

/// Rotates every point about the z axis through the origin.
pub fn augment_rotate_z(cloud: &PointCloud, angle: f64) -> PointCloud {
    if angle == 0.0 {
        return cloud.clone();
    }
    let (s, c) = angle.sin_cos();
    cloud
        .iter()
        .map(|p| Point::new(c * p.x - s * p.y, s * p.x + c * p.y, p.z, p.intensity))
        .collect()
}

/// Rotation about z by an angle drawn uniformly from `[-max_angle, max_angle]`
/// (at most ±π).
pub fn random_rotate_z(cloud: &PointCloud, max_angle: f64, seed: u64) -> PointCloud {
    let max_angle = max_angle.min(PI);
    if max_angle <= 0.0 {
        return cloud.clone();
    }
    let angle = rng::seeded(seed).random_range(-max_angle..=max_angle);
    augment_rotate_z(cloud, angle)
}
