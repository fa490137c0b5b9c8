use nalgebra::{Matrix3, Rotation3, Vector3};

use crate::pointcloud::PointCloud;

/// `p' = R·p + t`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RigidTransform {
    pub rotation: Matrix3<f64>,
    pub translation: Vector3<f64>,
}

impl Default for RigidTransform {
    fn default() -> Self {
        Self::identity()
    }
}

impl RigidTransform {
    pub fn new(rotation: Matrix3<f64>, translation: Vector3<f64>) -> Self {
        Self {
            rotation,
            translation,
        }
    }

    pub fn identity() -> Self {
        Self::new(Matrix3::identity(), Vector3::zeros())
    }

    pub fn from_axis_angle(axis: Vector3<f64>, angle: f64, translation: Vector3<f64>) -> Self {
        let rot = Rotation3::from_axis_angle(&nalgebra::Unit::new_normalize(axis), angle);
        Self::new(*rot.matrix(), translation)
    }

    pub fn apply(&self, p: &Vector3<f64>) -> Vector3<f64> {
        self.rotation * p + self.translation
    }

    pub fn apply_array(&self, p: &[f64; 3]) -> [f64; 3] {
        let q = self.apply(&Vector3::new(p[0], p[1], p[2]));
        [q.x, q.y, q.z]
    }

    /// `self ∘ other`: applies `other` first.
    pub fn compose(&self, other: &RigidTransform) -> RigidTransform {
        RigidTransform::new(
            self.rotation * other.rotation,
            self.rotation * other.translation + self.translation,
        )
    }

    pub fn inverse(&self) -> RigidTransform {
        let rt = self.rotation.transpose();
        RigidTransform::new(rt, -(rt * self.translation))
    }

    /// Rotation angle of `R` in radians.
    pub fn angle(&self) -> f64 {
        ((self.rotation.trace() - 1.0) / 2.0).clamp(-1.0, 1.0).acos()
    }
}

pub fn apply_transform(cloud: &PointCloud, t: &RigidTransform) -> PointCloud {
    cloud
        .iter()
        .map(|p| p.with_position(t.apply(&p.position())))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pointcloud::Point;

    #[test]
    fn identity_and_translation() {
        let c = PointCloud::new(vec![Point::new(0.0, 0.0, 0.0, 0.4), Point::new(1.0, 2.0, 3.0, 0.1)]);
        assert_eq!(apply_transform(&c, &RigidTransform::identity()), c);
        let t = RigidTransform::new(Matrix3::identity(), Vector3::new(1.0, 0.0, 0.0));
        let moved = apply_transform(&c, &t);
        assert_eq!(moved.points[0], Point::new(1.0, 0.0, 0.0, 0.4));
    }

    #[test]
    fn inverse_round_trip() {
        let t = RigidTransform::from_axis_angle(Vector3::new(0.3, -1.0, 0.5), 0.8, Vector3::new(2.0, -1.0, 0.3));
        let c = PointCloud::new((0..10).map(|i| Point::new(i as f64, -(i as f64) * 0.5, 1.0, 0.0)).collect());
        let back = apply_transform(&apply_transform(&c, &t), &t.inverse());
        for (a, b) in c.iter().zip(back.iter()) {
            assert!(a.dist2(b).sqrt() < 1e-9);
        }
        let id = t.compose(&t.inverse());
        assert!((id.rotation - Matrix3::identity()).amax() < 1e-12);
        assert!(id.translation.norm() < 1e-12);
        assert!(crate::pointcloud::orthonormality_error(&t.compose(&t).rotation) < 1e-9);
    }
}
