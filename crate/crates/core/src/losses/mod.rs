//! Training signals: the local consistency loss on point features, the
//! quadruplet loss on global descriptors, and their weighted combination.

mod joint;
mod local;
mod quadruplet;

pub use joint::{joint_loss, JointConfig, LossWithGrad};
pub use local::{hardest_contrastive_loss, LocalLoss, LocalLossConfig};
pub use quadruplet::{hardest_positive, quadruplet_loss, QuadrupletConfig, QuadrupletLoss};
