use super::LossConfig;
use crate::encoder::{DEFAULT_FEATURE_DIM, DEFAULT_NEIGHBORS};
use crate::error::{Error, Result};
use crate::geometry::{IcpConfig, DEFAULT_CORRESPONDENCE_RADIUS, DEFAULT_CORRESPONDENCE_SAMPLES};
use crate::pointcloud::{GroundFilter, DEFAULT_MAX_POINTS};

#[derive(Clone, Debug, PartialEq)]
pub struct TrainConfig {
    /// Positives lie closer than this to the anchor (meters).
    pub tau_p: f64,
    /// Negatives lie farther than this from the anchor (meters).
    pub tau_n: f64,
    pub learning_rate: f64,
    pub lr_drop_factor: f64,
    pub lr_drop_epoch: usize,
    pub epochs: usize,
    /// Tuples averaged per optimizer step.
    pub batch_tuples: usize,
    /// Tuples per epoch; `None` means a quarter of the dataset, rounded up.
    pub tuples_per_epoch: Option<usize>,
    pub seed: u64,
    pub voxel_size: f64,
    pub max_points: usize,
    pub feature_dim: usize,
    pub k: usize,
    pub normalize_intensity: bool,
    pub correspondence_radius: f64,
    pub correspondence_samples: usize,
    /// ICP refinement of the recorded poses before correspondence search.
    pub icp: Option<IcpConfig>,
    pub ground: Option<GroundFilter>,
    pub jitter_sigma: f64,
    pub jitter_clip: f64,
    pub rotation_max_deg: f64,
    /// Apply the local loss to both positives instead of the first only.
    pub local_on_both_positives: bool,
    pub losses: LossConfig,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            tau_p: 3.0,
            tau_n: 20.0,
            learning_rate: 0.001,
            lr_drop_factor: 10.0,
            lr_drop_epoch: 10,
            epochs: 30,
            batch_tuples: 1,
            tuples_per_epoch: None,
            seed: 0,
            voxel_size: 0.1,
            max_points: DEFAULT_MAX_POINTS,
            feature_dim: DEFAULT_FEATURE_DIM,
            k: DEFAULT_NEIGHBORS,
            normalize_intensity: true,
            correspondence_radius: DEFAULT_CORRESPONDENCE_RADIUS,
            correspondence_samples: DEFAULT_CORRESPONDENCE_SAMPLES,
            icp: Some(IcpConfig::default()),
            ground: Some(GroundFilter::default()),
            jitter_sigma: 0.01,
            jitter_clip: 0.03,
            rotation_max_deg: 180.0,
            local_on_both_positives: false,
            losses: LossConfig::default(),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: &str| Err(Error::Config(msg.to_string()));
        if !(self.tau_p > 0.0 && self.tau_p < self.tau_n) {
            return bad("require 0 < tau_p < tau_n");
        }
        if !(self.learning_rate >= 0.0 && self.lr_drop_factor > 0.0) {
            return bad("learning rate must be non-negative and the drop factor positive");
        }
        if self.batch_tuples == 0 || self.tuples_per_epoch == Some(0) {
            return bad("batch_tuples and tuples_per_epoch must be positive");
        }
        if !(self.voxel_size >= 0.0) || self.max_points == 0 || self.feature_dim == 0 || self.k == 0 {
            return bad("voxel_size, max_points, feature_dim and k must be positive");
        }
        if !(self.correspondence_radius > 0.0) || self.correspondence_samples == 0 {
            return bad("correspondence radius and sample count must be positive");
        }
        if !(self.jitter_sigma >= 0.0 && self.jitter_clip >= 0.0 && self.rotation_max_deg >= 0.0) {
            return bad("augmentation parameters must be non-negative");
        }
        if !(self.losses.epn_alpha > 0.0 && self.losses.epn_alpha <= 1.0) {
            return bad("epn alpha must lie in (0, 1]");
        }
        self.losses.local.validate()?;
        self.losses.quadruplet.validate()?;
        if !(self.losses.joint.omega >= 0.0) {
            return bad("omega must be non-negative");
        }
        Ok(())
    }

    pub fn tuples_in_epoch(&self, dataset_len: usize) -> usize {
        self.tuples_per_epoch.unwrap_or(dataset_len.div_ceil(4))
    }

    pub fn learning_rate_at(&self, epoch: usize) -> f64 {
        super::learning_rate_at(self.learning_rate, self.lr_drop_factor, self.lr_drop_epoch, epoch)
    }
}
