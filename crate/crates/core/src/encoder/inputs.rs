use std::cmp::Ordering;

use crate::geometry::KdTree;
use crate::pointcloud::PointCloud;

pub const INPUT_DIM: usize = 9;

/// Raw per-point network input:
/// `[x, y, z, intensity, Δcx, Δcy, Δcz, cov_trace, mean_dist]` where `Δc`
/// is the neighbor centroid minus the point, `cov_trace` the trace of the
/// neighbor covariance and `mean_dist` the mean distance to the neighbors.
pub type PointDescriptorInput = [f64; INPUT_DIM];

/// Context statistics over the `k` nearest other points (all other points
/// when the cloud has at most `k + 1`). With `normalize_intensity` the
/// intensity channel is min-max scaled to `[0, 1]` per cloud.
///
/// Neighbors are summed in an order fixed by geometry, so permuting the
/// cloud permutes the rows of the result exactly.
pub fn build_inputs(cloud: &PointCloud, k: usize, normalize_intensity: bool) -> Vec<PointDescriptorInput> {
    assert!(k >= 1, "k must be at least 1");
    let n = cloud.len();
    if n == 0 {
        return Vec::new();
    }
    let positions = cloud.positions();
    let tree = KdTree::new(positions.clone());
    let (imin, imax) = cloud
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), p| (lo.min(p.intensity), hi.max(p.intensity)));
    let span = imax - imin;
    let kk = k.min(n - 1);
    positions
        .iter()
        .enumerate()
        .map(|(i, p)| {
            let intensity = cloud.points[i].intensity;
            let intensity = if !normalize_intensity {
                intensity
            } else if span > 0.0 {
                (intensity - imin) / span
            } else {
                0.0
            };
            let mut nbrs: Vec<(f64, [f64; 3])> = tree
                .knn(p, kk, Some(i))
                .into_iter()
                .map(|(j, d2)| (d2, positions[j]))
                .collect();
            nbrs.sort_by(|a, b| {
                a.0.total_cmp(&b.0)
                    .then_with(|| cmp_point(&a.1, &b.1))
            });
            let mut row = [0.0; INPUT_DIM];
            row[..3].copy_from_slice(p);
            row[3] = intensity;
            if nbrs.is_empty() {
                return row;
            }
            let m = nbrs.len() as f64;
            let mut c = [0.0; 3];
            let mut mean_dist = 0.0;
            for (d2, q) in &nbrs {
                for a in 0..3 {
                    c[a] += q[a];
                }
                mean_dist += d2.sqrt();
            }
            for v in &mut c {
                *v /= m;
            }
            let mut trace = 0.0;
            for (_, q) in &nbrs {
                for a in 0..3 {
                    trace += (q[a] - c[a]).powi(2);
                }
            }
            for a in 0..3 {
                row[4 + a] = c[a] - p[a];
            }
            row[7] = trace / m;
            row[8] = mean_dist / m;
            row
        })
        .collect()
}

fn cmp_point(a: &[f64; 3], b: &[f64; 3]) -> Ordering {
    a[0].total_cmp(&b[0])
        .then(a[1].total_cmp(&b[1]))
        .then(a[2].total_cmp(&b[2]))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pointcloud::Point;
    use crate::rng;
    use rand::Rng;

    #[test]
    fn single_point_has_empty_context() {
        let c = PointCloud::new(vec![Point::new(1.0, 2.0, 3.0, 0.4)]);
        let rows = build_inputs(&c, 4, false);
        assert_eq!(rows[0], [1.0, 2.0, 3.0, 0.4, 0.0, 0.0, 0.0, 0.0, 0.0]);
    }

    #[test]
    fn symmetric_pair_of_neighbors() {
        let c = PointCloud::new(vec![
            Point::new(0.0, 0.0, 0.0, 0.0),
            Point::new(1.0, 0.0, 0.0, 0.0),
            Point::new(-1.0, 0.0, 0.0, 0.0),
        ]);
        let row = build_inputs(&c, 2, false)[0];
        assert_eq!(&row[4..7], &[0.0, 0.0, 0.0]);
        assert_eq!(row[8], 1.0);
        assert_eq!(row[7], 1.0);
    }

    #[test]
    fn matches_brute_force_knn() {
        let mut r = rng::seeded(12);
        let c: PointCloud = (0..100)
            .map(|_| Point::new(r.random_range(-3.0..3.0), r.random_range(-3.0..3.0), r.random_range(0.0..1.0), r.random_range(0.0..100.0)))
            .collect();
        let k = 6;
        let rows = build_inputs(&c, k, true);
        let (lo, hi) = (
            c.iter().map(|p| p.intensity).fold(f64::INFINITY, f64::min),
            c.iter().map(|p| p.intensity).fold(f64::NEG_INFINITY, f64::max),
        );
        for (i, p) in c.iter().enumerate() {
            let mut d: Vec<(f64, usize)> = (0..c.len()).filter(|&j| j != i).map(|j| (p.dist2(&c.points[j]), j)).collect();
            d.sort_by(|a, b| a.0.total_cmp(&b.0));
            let nb: Vec<&Point> = d[..k].iter().map(|&(_, j)| &c.points[j]).collect();
            let cx = nb.iter().map(|q| q.x).sum::<f64>() / k as f64;
            let cy = nb.iter().map(|q| q.y).sum::<f64>() / k as f64;
            let cz = nb.iter().map(|q| q.z).sum::<f64>() / k as f64;
            let tr = nb.iter().map(|q| (q.x - cx).powi(2) + (q.y - cy).powi(2) + (q.z - cz).powi(2)).sum::<f64>() / k as f64;
            let md = d[..k].iter().map(|(d2, _)| d2.sqrt()).sum::<f64>() / k as f64;
            let expect = [p.x, p.y, p.z, (p.intensity - lo) / (hi - lo), cx - p.x, cy - p.y, cz - p.z, tr, md];
            for a in 0..INPUT_DIM {
                assert!((rows[i][a] - expect[a]).abs() < 1e-12, "point {i} channel {a}");
            }
        }
    }

    #[test]
    fn small_cloud_uses_all_others() {
        let c = PointCloud::new(vec![
            Point::new(0.0, 0.0, 0.0, 1.0),
            Point::new(2.0, 0.0, 0.0, 1.0),
            Point::new(0.0, 4.0, 0.0, 1.0),
        ]);
        let rows = build_inputs(&c, 16, true);
        assert_eq!(rows[0][4], 1.0);
        assert_eq!(rows[0][5], 2.0);
        assert_eq!(rows[0][8], 3.0);
        // constant intensity normalizes to zero
        assert!(rows.iter().all(|r| r[3] == 0.0));
    }
}
