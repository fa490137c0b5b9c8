use std::collections::HashMap;

use nalgebra::Vector3;
use rand::seq::index;

use super::{Point, PointCloud};
use crate::rng;

/// Replaces the points of every occupied voxel by their centroid (intensity
/// averaged). Voxel index is `floor(coord / voxel_size)` per axis. Output
/// voxels appear in order of first occupancy.
pub fn voxel_downsample(cloud: &PointCloud, voxel_size: f64) -> PointCloud {
    assert!(voxel_size > 0.0, "voxel_size must be positive");
    let mut slots: HashMap<(i64, i64, i64), usize> = HashMap::new();
    let mut acc: Vec<([f64; 4], usize)> = Vec::new();
    for p in cloud.iter() {
        let key = (
            (p.x / voxel_size).floor() as i64,
            (p.y / voxel_size).floor() as i64,
            (p.z / voxel_size).floor() as i64,
        );
        let slot = *slots.entry(key).or_insert_with(|| {
            acc.push(([0.0; 4], 0));
            acc.len() - 1
        });
        let (sum, n) = &mut acc[slot];
        sum[0] += p.x;
        sum[1] += p.y;
        sum[2] += p.z;
        sum[3] += p.intensity;
        *n += 1;
    }
    acc.into_iter()
        .map(|(s, n)| {
            if n == 1 {
                Point::new(s[0], s[1], s[2], s[3])
            } else {
                let n = n as f64;
                Point::new(s[0] / n, s[1] / n, s[2] / n, s[3] / n)
            }
        })
        .collect()
}

/// RANSAC ground-plane parameters.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GroundFilter {
    /// Point-to-plane inlier distance, meters.
    pub dist_thresh: f64,
    pub max_iters: usize,
    /// Largest angle between the plane normal and +z still treated as ground.
    pub max_tilt_deg: f64,
}

impl Default for GroundFilter {
    fn default() -> Self {
        Self {
            dist_thresh: 0.3,
            max_iters: 100,
            max_tilt_deg: 30.0,
        }
    }
}

/// Removes the inliers of the largest-consensus RANSAC plane, but only when
/// that plane is near-horizontal. Clouds with fewer than three points and
/// clouds whose dominant plane is tilted are returned unchanged.
pub fn remove_ground_ransac(cloud: &PointCloud, filter: &GroundFilter, seed: u64) -> PointCloud {
    let n = cloud.len();
    if n < 3 {
        return cloud.clone();
    }
    let pos: Vec<Vector3<f64>> = cloud.iter().map(Point::position).collect();
    let mut rng = rng::seeded(seed);
    let mut best: Option<(usize, Vector3<f64>, f64)> = None;
    for _ in 0..filter.max_iters {
        let pick = index::sample(&mut rng, n, 3);
        let (a, b, c) = (pos[pick.index(0)], pos[pick.index(1)], pos[pick.index(2)]);
        let normal = (b - a).cross(&(c - a));
        let len = normal.norm();
        if len < 1e-12 {
            continue;
        }
        let normal = normal / len;
        let offset = -normal.dot(&a);
        let support = pos
            .iter()
            .filter(|p| (normal.dot(p) + offset).abs() < filter.dist_thresh)
            .count();
        if best.is_none_or(|(s, _, _)| support > s) {
            best = Some((support, normal, offset));
        }
    }
    let Some((_, normal, offset)) = best else {
        return cloud.clone();
    };
    let cos_tilt = normal.z.abs();
    if cos_tilt < filter.max_tilt_deg.to_radians().cos() {
        return cloud.clone();
    }
    cloud
        .iter()
        .zip(&pos)
        .filter(|(_, p)| (normal.dot(p) + offset).abs() >= filter.dist_thresh)
        .map(|(pt, _)| *pt)
        .collect()
}

/// Uniform subsample without replacement down to `max_n` points, keeping
/// the input order of the survivors.
pub fn cap_points(cloud: &PointCloud, max_n: usize, seed: u64) -> PointCloud {
    assert!(max_n > 0, "max_n must be positive");
    if cloud.len() <= max_n {
        return cloud.clone();
    }
    let mut rng = rng::seeded(seed);
    let mut keep = index::sample(&mut rng, cloud.len(), max_n).into_vec();
    keep.sort_unstable();
    cloud.select(&keep)
}


#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    #[test]
    fn voxel_centroid() {
        let cloud = PointCloud::new(vec![Point::new(0.01, 0.0, 0.0, 1.0), Point::new(0.02, 0.0, 0.0, 0.0)]);
        let out = voxel_downsample(&cloud, 0.1);
        assert_eq!(out.len(), 1);
        assert!((out.points[0].x - 0.015).abs() < 1e-15);
        assert_eq!(out.points[0].intensity, 0.5);

        let single = PointCloud::new(vec![Point::new(0.3, -1.2, 4.0, 0.7)]);
        assert_eq!(voxel_downsample(&single, 0.1), single);
        assert!(voxel_downsample(&PointCloud::default(), 0.1).is_empty());
    }

    #[test]
    fn voxel_unit_cube_matches_enumeration() {
        let mut rng = rng::seeded(5);
        let cloud: PointCloud = (0..1000)
            .map(|_| Point::new(rng.random(), rng.random(), rng.random(), 0.0))
            .collect();
        let out = voxel_downsample(&cloud, 0.5);
        // brute-force: set of occupied voxel keys
        let mut keys: Vec<(i64, i64, i64)> = cloud
            .iter()
            .map(|p| ((p.x / 0.5).floor() as i64, (p.y / 0.5).floor() as i64, (p.z / 0.5).floor() as i64))
            .collect();
        keys.sort_unstable();
        keys.dedup();
        assert_eq!(out.len(), keys.len());
        assert!(out.len() <= 8);
    }

    fn plane_with_outliers() -> PointCloud {
        let mut pts = Vec::new();
        for i in 0..10 {
            for j in 0..10 {
                pts.push(Point::new(i as f64 * 0.5, j as f64 * 0.5, 0.0, 0.1));
            }
        }
        for i in 0..10 {
            pts.push(Point::new(i as f64 * 0.3, 1.0, 5.0, 0.9));
        }
        PointCloud::new(pts)
    }

    #[test]
    fn ground_removed_leaves_elevated_points() {
        let cloud = plane_with_outliers();
        let filter = GroundFilter { dist_thresh: 0.05, ..Default::default() };
        let out = remove_ground_ransac(&cloud, &filter, 3);
        assert_eq!(out.len(), 10);
        assert!(out.iter().all(|p| p.z == 5.0));
    }

    #[test]
    fn vertical_wall_is_kept() {
        let pts: Vec<Point> = (0..100)
            .map(|k| Point::new((k % 10) as f64 * 0.5, 3.0, (k / 10) as f64 * 0.5, 0.3))
            .collect();
        let cloud = PointCloud::new(pts);
        let out = remove_ground_ransac(&cloud, &GroundFilter::default(), 1);
        assert_eq!(out, cloud);
    }

    #[test]
    fn tiny_cloud_unchanged() {
        let cloud = PointCloud::new(vec![Point::new(0.0, 0.0, 0.0, 0.0), Point::new(1.0, 0.0, 0.0, 0.0)]);
        assert_eq!(remove_ground_ransac(&cloud, &GroundFilter::default(), 0), cloud);
    }

    #[test]
    fn cap_contract() {
        let cloud: PointCloud = (0..100).map(|i| Point::new(i as f64, 0.0, 0.0, 0.0)).collect();
        let small = cloud.select(&(0..10).collect::<Vec<_>>());
        assert_eq!(cap_points(&small, 20, 1), small);
        let out = cap_points(&cloud, 35, 9);
        assert_eq!(out.len(), 35);
        assert!(out.iter().all(|p| cloud.points.contains(p)));
        let mut xs: Vec<f64> = out.iter().map(|p| p.x).collect();
        xs.dedup();
        assert_eq!(xs.len(), 35);
        assert_eq!(cap_points(&cloud, 35, 9), out);
    }
}
