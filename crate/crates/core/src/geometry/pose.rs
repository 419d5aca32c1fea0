use nalgebra::{Matrix3, Matrix4, Quaternion, Point3, UnitQuaternion, Vector3};

use super::GeometryError;

/// Similarity transform `x ↦ scale · R x + t`, with `R` a unit quaternion.
///
/// Quaternions are stored and serialized in `(w, x, y, z)` order.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Pose6DoF {
    rotation: UnitQuaternion<f64>,
    translation: Vector3<f64>,
    scale: f64,
}

impl Default for Pose6DoF {
    fn default() -> Self {
        Self::identity()
    }
}

impl Pose6DoF {
    pub fn identity() -> Self {
        Self {
            rotation: UnitQuaternion::identity(),
            translation: Vector3::zeros(),
            scale: 1.0,
        }
    }

    /// Builds a pose from a `(w, x, y, z)` quaternion, renormalizing it.
    pub fn new(wxyz: [f64; 4], translation: [f64; 3], scale: f64) -> Result<Self, GeometryError> {
        let q = Quaternion::new(wxyz[0], wxyz[1], wxyz[2], wxyz[3]);
        let n = q.norm();
        if !(n.is_finite() && n > 1e-12) {
            return Err(GeometryError::InvalidPose(format!("quaternion norm {n}")));
        }
        if !(scale.is_finite() && scale > 0.0) {
            return Err(GeometryError::InvalidPose(format!("scale {scale}")));
        }
        if translation.iter().any(|t| !t.is_finite()) {
            return Err(GeometryError::InvalidPose("non-finite translation".into()));
        }
        Ok(Self {
            rotation: UnitQuaternion::from_quaternion(q),
            translation: Vector3::from(translation),
            scale,
        })
    }

    pub fn from_parts(rotation: UnitQuaternion<f64>, translation: Vector3<f64>, scale: f64) -> Self {
        debug_assert!(scale > 0.0);
        Self {
            rotation,
            translation,
            scale,
        }
    }

    pub fn from_rotation_translation(rotation: UnitQuaternion<f64>, translation: Vector3<f64>) -> Self {
        Self::from_parts(rotation, translation, 1.0)
    }

    pub fn rotation(&self) -> &UnitQuaternion<f64> {
        &self.rotation
    }

    pub fn translation(&self) -> &Vector3<f64> {
        &self.translation
    }

    pub fn scale(&self) -> f64 {
        self.scale
    }

    pub fn with_scale(mut self, scale: f64) -> Self {
        self.scale = scale;
        self
    }

    pub fn wxyz(&self) -> [f64; 4] {
        let q = self.rotation.quaternion();
        [q.w, q.i, q.j, q.k]
    }

    pub fn transform_point(&self, p: &Point3<f64>) -> Point3<f64> {
        Point3::from(self.rotation * p.coords * self.scale + self.translation)
    }

    pub fn transform_vector(&self, v: &Vector3<f64>) -> Vector3<f64> {
        self.rotation * v
    }

    /// `self ∘ other`: applies `other` first, then `self`.
    pub fn compose(&self, other: &Pose6DoF) -> Pose6DoF {
        Pose6DoF {
            rotation: self.rotation * other.rotation,
            translation: self.translation + self.rotation * other.translation * self.scale,
            scale: self.scale * other.scale,
        }
    }

    pub fn inverse(&self) -> Pose6DoF {
        let inv_r = self.rotation.inverse();
        let inv_s = 1.0 / self.scale;
        Pose6DoF {
            rotation: inv_r,
            translation: -(inv_r * self.translation) * inv_s,
            scale: inv_s,
        }
    }

    /// Applies a left increment: rotation `exp(ω) R`, translation `t + δt`, scale `s · e^{δs}`.
    pub fn apply_increment(&self, delta: &[f64]) -> Pose6DoF {
        let omega = Vector3::new(delta[0], delta[1], delta[2]);
        let dq = UnitQuaternion::from_scaled_axis(omega);
        let mut rotation = dq * self.rotation;
        rotation.renormalize();
        let ds = delta.get(6).copied().unwrap_or(0.0);
        Pose6DoF {
            rotation,
            translation: self.translation + Vector3::new(delta[3], delta[4], delta[5]),
            scale: self.scale * ds.exp(),
        }
    }

    /// Homogeneous 4×4 matrix of the similarity.
    pub fn to_homogeneous(&self) -> Matrix4<f64> {
        let r: Matrix3<f64> = self.rotation.to_rotation_matrix().into_inner() * self.scale;
        let mut m = Matrix4::identity();
        m.fixed_view_mut::<3, 3>(0, 0).copy_from(&r);
        m.fixed_view_mut::<3, 1>(0, 3).copy_from(&self.translation);
        m
    }

    /// Rotation angle (radians) between the two poses' orientations.
    pub fn rotation_error(&self, other: &Pose6DoF) -> f64 {
        rotation_angle_between(&self.rotation, &other.rotation)
    }

    pub fn translation_error(&self, other: &Pose6DoF) -> f64 {
        (self.translation - other.translation).norm()
    }
}

/// Geodesic angle of `a⁻¹ b`, in `[0, π]`.
pub fn rotation_angle_between(a: &UnitQuaternion<f64>, b: &UnitQuaternion<f64>) -> f64 {
    quaternion_angle(&(a.inverse() * b))
}

pub fn quaternion_angle(q: &UnitQuaternion<f64>) -> f64 {
    let q = q.quaternion();
    2.0 * q.imag().norm().atan2(q.w.abs())
}

/// Spherical linear interpolation along the shorter arc.
///
/// When `dot(q0, q1) < 0` the second quaternion is negated first; nearly
/// parallel inputs fall back to normalized linear interpolation.
pub fn slerp(q0: &UnitQuaternion<f64>, q1: &UnitQuaternion<f64>, t: f64) -> UnitQuaternion<f64> {
    let a = q0.quaternion().coords;
    let mut b = q1.quaternion().coords;
    let mut dot = a.dot(&b);
    if dot < 0.0 {
        b = -b;
        dot = -dot;
    }
    let v = if dot > 1.0 - 1e-12 {
        a * (1.0 - t) + b * t
    } else {
        let theta = dot.min(1.0).acos();
        let s = theta.sin();
        a * (((1.0 - t) * theta).sin() / s) + b * ((t * theta).sin() / s)
    };
    UnitQuaternion::from_quaternion(Quaternion::from(v))
}

/// Rotation vector `ω` with `exp(ω) = q`, taking the shorter representative.
pub fn rotation_log(q: &UnitQuaternion<f64>) -> Vector3<f64> {
    let mut q = *q.quaternion();
    if q.w < 0.0 {
        q = -q;
    }
    let s = q.imag().norm();
    if s < 1e-15 {
        return q.imag() * 2.0;
    }
    let angle = 2.0 * s.atan2(q.w);
    q.imag() * (angle / s)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::{FRAC_PI_2, FRAC_PI_4, PI};

    fn random_pose(rng: &mut ChaCha8Rng) -> Pose6DoF {
        let q = [
            rng.random_range(-1.0..1.0),
            rng.random_range(-1.0..1.0),
            rng.random_range(-1.0..1.0),
            rng.random_range(-1.0..1.0),
        ];
        let t = [
            rng.random_range(-2.0..2.0),
            rng.random_range(-2.0..2.0),
            rng.random_range(-2.0..2.0),
        ];
        Pose6DoF::new(q, t, rng.random_range(0.5..2.0)).unwrap()
    }

    #[test]
    fn identity_composition() {
        let p = Pose6DoF::new([0.3, 0.1, -0.4, 0.8], [1.0, 2.0, 3.0], 1.5).unwrap();
        let c = Pose6DoF::identity().compose(&p);
        assert!((c.to_homogeneous() - p.to_homogeneous()).amax() < 1e-15);
    }

    #[test]
    fn quarter_turns_compose_to_half_turn() {
        let q = UnitQuaternion::from_axis_angle(&Vector3::z_axis(), FRAC_PI_2);
        let p = Pose6DoF::from_rotation_translation(q, Vector3::zeros());
        let c = p.compose(&p);
        let half = UnitQuaternion::from_axis_angle(&Vector3::z_axis(), PI);
        assert!(rotation_angle_between(c.rotation(), &half) < 1e-12);
    }

    #[test]
    fn composition_matches_matrix_product() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..200 {
            let a = random_pose(&mut rng);
            let b = random_pose(&mut rng);
            let oracle = a.to_homogeneous() * b.to_homogeneous();
            let got = a.compose(&b).to_homogeneous();
            assert!((oracle - got).amax() < 1e-9);
        }
    }

    #[test]
    fn composition_is_associative() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        for _ in 0..200 {
            let (a, b, c) = (random_pose(&mut rng), random_pose(&mut rng), random_pose(&mut rng));
            let l = a.compose(&b).compose(&c).to_homogeneous();
            let r = a.compose(&b.compose(&c)).to_homogeneous();
            assert!((l - r).amax() < 1e-9);
        }
    }

    #[test]
    fn inverse_round_trips() {
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        let a = random_pose(&mut rng);
        let id = a.compose(&a.inverse()).to_homogeneous();
        assert!((id - Matrix4::identity()).amax() < 1e-12);
    }

    #[test]
    fn construction_renormalizes_and_validates() {
        let p = Pose6DoF::new([2.0, 0.0, 0.0, 0.0], [0.0; 3], 1.0).unwrap();
        assert!((p.rotation().quaternion().norm() - 1.0).abs() < 1e-12);
        assert!(Pose6DoF::new([0.0; 4], [0.0; 3], 1.0).is_err());
        assert!(Pose6DoF::new([1.0, 0.0, 0.0, 0.0], [0.0; 3], 0.0).is_err());
    }

    #[test]
    fn slerp_endpoints_and_midpoint() {
        let q0 = UnitQuaternion::identity();
        let q1 = UnitQuaternion::from_axis_angle(&Vector3::x_axis(), FRAC_PI_2);
        assert_eq!(slerp(&q0, &q1, 0.0), q0);
        let mid = slerp(&q0, &q1, 0.5);
        let oracle = UnitQuaternion::from_axis_angle(&Vector3::x_axis(), FRAC_PI_4);
        assert!(rotation_angle_between(&mid, &oracle) < 1e-9);
    }

    #[test]
    fn slerp_takes_short_arc_for_antipodal_representation() {
        let q0 = UnitQuaternion::identity();
        let q1 = UnitQuaternion::from_axis_angle(&Vector3::y_axis(), 0.4);
        let neg = UnitQuaternion::new_unchecked(-*q1.quaternion());
        let a = slerp(&q0, &q1, 0.5);
        let b = slerp(&q0, &neg, 0.5);
        assert!(rotation_angle_between(&a, &b) < 1e-12);
        assert!((quaternion_angle(&a) - 0.2).abs() < 1e-12);
    }

    #[test]
    fn slerp_is_unit_and_linear_in_angle() {
        let mut rng = ChaCha8Rng::seed_from_u64(14);
        for _ in 0..1000 {
            let a = *random_pose(&mut rng).rotation();
            let b = *random_pose(&mut rng).rotation();
            let t: f64 = rng.random_range(0.0..1.0);
            let s = slerp(&a, &b, t);
            assert!((s.quaternion().norm() - 1.0).abs() < 1e-9);
            let total = rotation_angle_between(&a, &b);
            let part = rotation_angle_between(&a, &s);
            assert!((part - t * total).abs() < 1e-6, "{part} {t} {total}");
        }
    }

    #[test]
    fn rotation_log_inverts_exp() {
        let w = Vector3::new(0.3, -1.2, 0.5);
        let q = UnitQuaternion::from_scaled_axis(w);
        assert!((rotation_log(&q) - w).norm() < 1e-12);
    }
}
