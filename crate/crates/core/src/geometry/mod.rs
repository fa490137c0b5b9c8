//! Rigid transforms, exact KD-tree search, ICP and point correspondences.

mod correspondence;
mod icp;
mod kdtree;
mod transform;

pub use correspondence::{find_correspondences, sample_correspondences, CorrespondenceSet};
pub use icp::{icp_point_to_point, icp_with_report, IcpConfig, IcpReport};
pub use kdtree::KdTree;
pub use transform::{apply_transform, RigidTransform};

/// Default correspondence radius in meters.
pub const DEFAULT_CORRESPONDENCE_RADIUS: f64 = 0.3;

/// Positive pairs kept per local-consistency evaluation.
pub const DEFAULT_CORRESPONDENCE_SAMPLES: usize = 5192;
