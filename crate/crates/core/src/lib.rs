//! Locally guided global descriptors for LiDAR place recognition.
//!
//! The pipeline turns a point cloud into a unit-norm global descriptor in
//! two stages: a per-point [`encoder`] producing local features, and an
//! [`aggregation`] stage (element-wise max second-order pooling followed by
//! singular-value power normalization). Training combines a scene-level
//! quadruplet loss on descriptors with a contrastive consistency loss on
//! local features of geometrically corresponding points ([`losses`]).
//!
//! Everything runs on `f64` and is deterministic for a given seed.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod aggregation;
pub mod encoder;
pub mod error;
pub mod geometry;
pub mod gradcheck;
pub mod losses;
pub mod pointcloud;
pub mod retrieval;
pub mod rng;
pub mod synthdata;
pub mod training;

pub use aggregation::{aggregate, GlobalDescriptor, PooledMatrix};
pub use encoder::{encode, Encoder, EncoderParams, FeatureMap};
pub use error::{Error, Result};
pub use geometry::{CorrespondenceSet, KdTree, RigidTransform};
pub use pointcloud::{Point, PointCloud, Pose};
pub use retrieval::{DbEntry, EvalConfig, PrCurve};
pub use training::{Sample, TrainConfig, TrainingTuple};
