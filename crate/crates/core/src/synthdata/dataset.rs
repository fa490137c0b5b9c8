use nalgebra::Vector3;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;

use super::{simulate_scan, ScanConfig, SyntheticWorld};
use crate::error::{Error, Result};
use crate::pointcloud::{PointCloud, Pose};
use crate::rng;
use crate::training::Sample;

/// Drive again along waypoints `from..=to` of the main route.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct RevisitSegment {
    pub from: usize,
    pub to: usize,
    pub reversed: bool,
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrajectorySpec {
    pub waypoints: Vec<[f64; 2]>,
    /// Meters per second.
    pub speed: f64,
    /// Seconds between scans.
    pub scan_period: f64,
    /// Legs driven after the main route, in order.
    pub revisits: Vec<RevisitSegment>,
    /// Standard deviation of the recorded position error per horizontal axis.
    pub pose_noise_translation: f64,
    /// Standard deviation of the recorded heading error, in degrees.
    pub pose_noise_rotation_deg: f64,
    pub sensor_height: f64,
    /// Minimum time between a query and its labeled match.
    pub label_min_time: f64,
    /// Radius of the revisit rule used for labels.
    pub revisit_radius: f64,
}

impl Default for TrajectorySpec {
    fn default() -> Self {
        Self {
            waypoints: vec![[0.0, 0.0], [100.0, 0.0]],
            speed: 2.0,
            scan_period: 1.0,
            revisits: Vec::new(),
            pose_noise_translation: 0.5,
            pose_noise_rotation_deg: 2.0,
            sensor_height: 1.8,
            label_min_time: 30.0,
            revisit_radius: 3.0,
        }
    }
}

impl TrajectorySpec {
    pub fn validate(&self) -> Result<()> {
        if self.waypoints.len() < 2 {
            return Err(Error::Config("trajectory needs at least two waypoints".into()));
        }
        if !(self.speed > 0.0 && self.scan_period > 0.0) {
            return Err(Error::Config("speed and scan period must be positive".into()));
        }
        if !(self.pose_noise_translation >= 0.0 && self.pose_noise_rotation_deg >= 0.0 && self.revisit_radius > 0.0) {
            return Err(Error::Config("noise scales must be non-negative".into()));
        }
        for s in &self.revisits {
            if s.from >= s.to || s.to >= self.waypoints.len() {
                return Err(Error::Config(format!(
                    "revisit segment {}..{} is not a valid range of {} waypoints",
                    s.from,
                    s.to,
                    self.waypoints.len()
                )));
            }
        }
        Ok(())
    }

    fn legs(&self) -> Vec<Vec<[f64; 2]>> {
        let mut legs = vec![self.waypoints.clone()];
        for s in &self.revisits {
            let mut leg = self.waypoints[s.from..=s.to].to_vec();
            if s.reversed {
                leg.reverse();
            }
            legs.push(leg);
        }
        legs
    }

    /// True sensor poses at every scan instant. Legs are driven one after
    /// another; the clock keeps running across the jump between legs.
    pub fn true_poses(&self) -> Result<Vec<Pose>> {
        self.validate()?;
        let step = self.speed * self.scan_period;
        let mut poses = Vec::new();
        for leg in self.legs() {
            let mut s = 0.0;
            for w in leg.windows(2) {
                let (dx, dy) = (w[1][0] - w[0][0], w[1][1] - w[0][1]);
                let l = dx.hypot(dy);
                if l == 0.0 {
                    continue;
                }
                let heading = dy.atan2(dx);
                while s < l {
                    let t = poses.len() as f64 * self.scan_period;
                    let pos = Vector3::new(w[0][0] + dx * s / l, w[0][1] + dy * s / l, self.sensor_height);
                    poses.push(Pose::from_yaw(heading, pos, t));
                    s += step;
                }
                s -= l;
            }
        }
        Ok(poses)
    }
}

/// Scans along a trajectory with recorded (possibly perturbed) poses and
/// ground-truth revisit labels from the true poses.
#[derive(Clone, Debug)]
pub struct SyntheticDataset {
    pub scans: Vec<PointCloud>,
    pub poses: Vec<Pose>,
    pub true_poses: Vec<Pose>,
    /// `(query, match)` pairs with `match < query`.
    pub labels: Vec<(usize, usize)>,
}

impl SyntheticDataset {
    pub fn len(&self) -> usize {
        self.scans.len()
    }

    pub fn is_empty(&self) -> bool {
        self.scans.is_empty()
    }

    /// Training samples carrying the recorded poses.
    pub fn samples(&self, sequence_id: u32) -> Vec<Sample> {
        self.scans
            .iter()
            .zip(&self.poses)
            .map(|(c, p)| Sample::in_memory(c.clone(), *p, sequence_id))
            .collect()
    }
}

/// Every pair `(q, m)`, `m < q`, whose poses are closer than `radius` and at
/// least `min_time` apart in time.
pub fn revisit_labels(poses: &[Pose], radius: f64, min_time: f64) -> Vec<(usize, usize)> {
    let mut labels = Vec::new();
    for q in 0..poses.len() {
        for m in 0..q {
            if poses[q].timestamp - poses[m].timestamp >= min_time && poses[q].distance(&poses[m]) < radius {
                labels.push((q, m));
            }
        }
    }
    labels
}

pub fn generate_dataset(world: &SyntheticWorld, traj: &TrajectorySpec, scan: &ScanConfig, seed: u64) -> Result<SyntheticDataset> {
    let true_poses = traj.true_poses()?;
    let scans: Vec<PointCloud> = true_poses
        .par_iter()
        .enumerate()
        .map(|(i, p)| simulate_scan(world, p, scan, rng::derive2(seed, 1, i as u64)))
        .collect();
    let mut r = rng::seeded(rng::derive(seed, 2));
    let tn = Normal::new(0.0, traj.pose_noise_translation).expect("finite sigma");
    let rn = Normal::new(0.0, traj.pose_noise_rotation_deg.to_radians()).expect("finite sigma");
    let poses = true_poses
        .iter()
        .map(|p| {
            if traj.pose_noise_translation == 0.0 && traj.pose_noise_rotation_deg == 0.0 {
                return *p;
            }
            let dyaw = rn.sample(&mut r);
            let offset = Vector3::new(tn.sample(&mut r), tn.sample(&mut r), 0.0);
            let rot = nalgebra::Rotation3::from_axis_angle(&Vector3::z_axis(), dyaw).into_inner() * p.rotation;
            Pose::new(rot, p.translation + offset, p.timestamp)
        })
        .collect();
    let labels = revisit_labels(&true_poses, traj.revisit_radius, traj.label_min_time);
    Ok(SyntheticDataset {
        scans,
        poses,
        true_poses,
        labels,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synthdata::{generate_world, WorldConfig};

    #[test]
    fn no_revisits_no_labels() {
        let traj = TrajectorySpec {
            waypoints: vec![[0.0, 0.0], [200.0, 0.0]],
            ..TrajectorySpec::default()
        };
        let poses = traj.true_poses().unwrap();
        assert_eq!(poses.len(), 100);
        assert!(revisit_labels(&poses, 3.0, 30.0).is_empty());
    }

    #[test]
    fn out_and_back_labels_on_return_leg() {
        let traj = TrajectorySpec {
            waypoints: vec![[0.0, 0.0], [100.0, 0.0]],
            revisits: vec![RevisitSegment { from: 0, to: 1, reversed: true }],
            ..TrajectorySpec::default()
        };
        let poses = traj.true_poses().unwrap();
        let labels = revisit_labels(&poses, 3.0, 30.0);
        assert!(!labels.is_empty());
        for &(q, m) in &labels {
            assert!(q >= 50 && m < 50);
        }
        // a return-leg scan lacks a label only where its partner is too recent
        for q in 50..poses.len() {
            let has = labels.iter().any(|&(a, _)| a == q);
            let expected = (0..50).any(|m| poses[q].timestamp - poses[m].timestamp >= 30.0 && poses[q].distance(&poses[m]) < 3.0);
            assert_eq!(has, expected);
        }
    }

    #[test]
    fn invalid_revisit_segment() {
        let traj = TrajectorySpec {
            revisits: vec![RevisitSegment { from: 1, to: 5, reversed: false }],
            ..TrajectorySpec::default()
        };
        assert!(traj.true_poses().is_err());
    }

    #[test]
    fn generation_is_deterministic() {
        let world = generate_world(&WorldConfig::default(), 2).unwrap();
        let traj = TrajectorySpec {
            waypoints: vec![[-60.0, -60.0], [0.0, -60.0]],
            ..TrajectorySpec::default()
        };
        let a = generate_dataset(&world, &traj, &ScanConfig::default(), 9).unwrap();
        let b = generate_dataset(&world, &traj, &ScanConfig::default(), 9).unwrap();
        assert_eq!(a.scans, b.scans);
        assert_eq!(a.poses, b.poses);
        assert_ne!(a.poses, a.true_poses);
    }
}
