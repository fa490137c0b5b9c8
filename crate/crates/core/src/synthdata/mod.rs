//! Deterministic synthetic worlds for training and evaluation at desk
//! scale: roadside primitives along a corridor, a simple range-limited
//! sensor model, and trajectories with planned revisits.

mod dataset;
mod dir;
mod scan;
mod world;

pub use dataset::{generate_dataset, revisit_labels, RevisitSegment, SyntheticDataset, TrajectorySpec};
pub use dir::{load_dataset_dir, load_labels, DatasetDir};
pub use scan::{simulate_scan, ScanConfig};
pub use world::{generate_world, IntensityBands, Primitive, PrimitiveKind, SyntheticWorld, WorldConfig, GROUND_OWNER};

/// World, trajectory and sensor settings of a ready-made benchmark scene.
#[derive(Clone, Debug, PartialEq)]
pub struct Benchmark {
    pub world: WorldConfig,
    pub trajectory: TrajectorySpec,
    pub scan: ScanConfig,
}

impl Benchmark {
    /// A square loop driven once, followed by a same-direction revisit of
    /// three sides. Scan spacing is chosen so the sequence holds roughly
    /// `num_scans` scans of about 2000 points.
    pub fn desk(num_scans: usize) -> Self {
        let side = 120.0;
        let h = side / 2.0;
        let waypoints = vec![[-h, -h], [h, -h], [h, h], [-h, h], [-h, -h]];
        let revisits = vec![RevisitSegment { from: 0, to: 3, reversed: false }];
        let total_len = side * (4.0 + 2.0 + 1.0);
        let spacing = total_len / num_scans.max(1) as f64;
        let trajectory = TrajectorySpec {
            waypoints: waypoints.clone(),
            speed: spacing,
            scan_period: 1.0,
            revisits,
            ..TrajectorySpec::default()
        };
        let world = WorldConfig {
            corridor: waypoints,
            surface_density: 3.7,
            ..WorldConfig::default()
        };
        Self {
            world,
            trajectory,
            scan: ScanConfig::default(),
        }
    }
}
