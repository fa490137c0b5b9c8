//! Pluggable local feature extraction.
//!
//! [`Encoder`] is the seam between point clouds and the differentiable
//! aggregation/loss stack. [`EncoderParams`] is the reference
//! implementation: per-point k-NN context statistics fed through a small
//! ReLU MLP.

mod features;
mod inputs;
mod mlp;

pub use features::FeatureMap;
pub use inputs::{build_inputs, PointDescriptorInput, INPUT_DIM};
pub use mlp::{encode, encode_backward, EncoderParams, MlpCache, HIDDEN_WIDTH};

use crate::error::Result;
use crate::pointcloud::PointCloud;

/// Default local feature dimension.
pub const DEFAULT_FEATURE_DIM: usize = 16;
/// Default neighborhood size for the context statistics.
pub const DEFAULT_NEIGHBORS: usize = 16;

/// A differentiable map from a point cloud to one feature vector per point.
///
/// Parameters are exposed as a single flat slice so optimizers and gradient
/// checkers can stay agnostic of the architecture.
pub trait Encoder: Send + Sync {
    type Cache: Send + Sync;

    fn feature_dim(&self) -> usize;

    fn params(&self) -> &[f64];

    fn params_mut(&mut self) -> &mut [f64];

    fn forward(&self, cloud: &PointCloud) -> Result<(FeatureMap, Self::Cache)>;

    /// Accumulates `d loss / d params` into `grad` given `d loss / d features`.
    fn backward(&self, cache: &Self::Cache, upstream: &FeatureMap, grad: &mut [f64]) -> Result<()>;

    fn num_params(&self) -> usize {
        self.params().len()
    }
}
