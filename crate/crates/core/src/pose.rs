//! Rigid-body poses, 6-DOF disturbance vectors and the robot state.
//!
//! Orientation is held as a unit quaternion. The external form of a pose is
//! always a row-major 4x4 homogeneous matrix, `{"T": [16 floats]}`.

use nalgebra::{Matrix3, Matrix4, Rotation3, UnitQuaternion, Vector3};
use serde::{Deserialize, Deserializer, Serialize, Serializer};

/// Rigid transform of a frame: position plus orientation.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Pose {
    pub position: Vector3<f64>,
    pub rotation: UnitQuaternion<f64>,
}

impl Default for Pose {
    fn default() -> Self {
        Self::identity()
    }
}

impl Pose {
    pub fn identity() -> Self {
        Self {
            position: Vector3::zeros(),
            rotation: UnitQuaternion::identity(),
        }
    }

    pub fn new(position: Vector3<f64>, rotation: UnitQuaternion<f64>) -> Self {
        Self { position, rotation }
    }

    pub fn from_translation(x: f64, y: f64, z: f64) -> Self {
        Self::new(Vector3::new(x, y, z), UnitQuaternion::identity())
    }

    /// Pose with the given roll, pitch, yaw (intrinsic z-y-x convention).
    pub fn from_xyz_rpy(p: Vector3<f64>, roll: f64, pitch: f64, yaw: f64) -> Self {
        Self::new(p, UnitQuaternion::from_euler_angles(roll, pitch, yaw))
    }

    /// Builds a pose whose rotation is the exponential of a rotation vector.
    pub fn exp(dp: Vector3<f64>, rotvec: Vector3<f64>) -> Self {
        Self::new(dp, UnitQuaternion::from_scaled_axis(rotvec))
    }

    /// Pose applying the small perturbation `d` (translation then rotation vector).
    pub fn small(d: &DisturbanceVec) -> Self {
        Self::exp(d.dp, d.dr)
    }

    pub fn rotation_matrix(&self) -> Matrix3<f64> {
        self.rotation.to_rotation_matrix().into_inner()
    }

    pub fn rpy(&self) -> (f64, f64, f64) {
        self.rotation.euler_angles()
    }

    pub fn yaw(&self) -> f64 {
        self.rpy().2
    }

    pub fn inverse(&self) -> Pose {
        let inv = self.rotation.inverse();
        Pose::new(-(inv * self.position), inv)
    }

    pub fn transform_point(&self, p: &Vector3<f64>) -> Vector3<f64> {
        self.rotation * p + self.position
    }

    pub fn to_matrix(&self) -> Matrix4<f64> {
        let mut m = Matrix4::identity();
        m.fixed_view_mut::<3, 3>(0, 0)
            .copy_from(&self.rotation_matrix());
        m.fixed_view_mut::<3, 1>(0, 3).copy_from(&self.position);
        m
    }

    /// Row-major 16-element representation of the homogeneous matrix.
    pub fn to_row_major(&self) -> [f64; 16] {
        let m = self.to_matrix();
        let mut out = [0.0; 16];
        for r in 0..4 {
            for c in 0..4 {
                out[r * 4 + c] = m[(r, c)];
            }
        }
        out
    }

    /// Inverse of [`Pose::to_row_major`]. The rotation block is re-orthonormalized.
    pub fn from_row_major(t: &[f64; 16]) -> Pose {
        let rot = Matrix3::new(t[0], t[1], t[2], t[4], t[5], t[6], t[8], t[9], t[10]);
        let position = Vector3::new(t[3], t[7], t[11]);
        let rotation =
            UnitQuaternion::from_rotation_matrix(&Rotation3::from_matrix(&rot));
        Pose::new(position, rotation)
    }

    /// Max deviation of the rotation block from orthonormality.
    pub fn orthonormality_error(&self) -> f64 {
        let r = self.rotation_matrix();
        (r.transpose() * r - Matrix3::identity()).abs().max()
    }
}

/// `a ∘ b`: the transform applying `b` first, then `a`.
pub fn compose(a: &Pose, b: &Pose) -> Pose {
    let mut q = a.rotation * b.rotation;
    q.renormalize();
    Pose::new(a.rotation * b.position + a.position, q)
}

/// Tracking error of `actual` with respect to `target`.
///
/// `dp` is the world-frame position difference `target - actual`; `dr` is the
/// rotation vector of `actual⁻¹ · target`, i.e. expressed in the actual frame.
pub fn pose_error(target: &Pose, actual: &Pose) -> DisturbanceVec {
    let rel = actual.rotation.inverse() * target.rotation;
    DisturbanceVec {
        dp: target.position - actual.position,
        dr: rel.scaled_axis(),
    }
}

impl Serialize for Pose {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        #[derive(Serialize)]
        struct Wire {
            #[serde(rename = "T")]
            t: Vec<f64>,
        }
        Wire {
            t: self.to_row_major().to_vec(),
        }
        .serialize(s)
    }
}

impl<'de> Deserialize<'de> for Pose {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        #[derive(Deserialize)]
        struct Wire {
            #[serde(rename = "T")]
            t: Vec<f64>,
        }
        let w = Wire::deserialize(d)?;
        let arr: [f64; 16] = w
            .t
            .try_into()
            .map_err(|_| serde::de::Error::custom("pose matrix must have 16 entries"))?;
        Ok(Pose::from_row_major(&arr))
    }
}

/// Six-DOF perturbation: translation (m) and small-angle rotation vector (rad).
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct DisturbanceVec {
    pub dp: Vector3<f64>,
    pub dr: Vector3<f64>,
}

impl DisturbanceVec {
    pub fn zero() -> Self {
        Self::default()
    }

    pub fn new(dp: Vector3<f64>, dr: Vector3<f64>) -> Self {
        Self { dp, dr }
    }

    pub fn from_array(a: [f64; 6]) -> Self {
        Self {
            dp: Vector3::new(a[0], a[1], a[2]),
            dr: Vector3::new(a[3], a[4], a[5]),
        }
    }

    pub fn to_array(&self) -> [f64; 6] {
        [
            self.dp.x, self.dp.y, self.dp.z, self.dr.x, self.dr.y, self.dr.z,
        ]
    }

    pub fn is_finite(&self) -> bool {
        self.to_array().iter().all(|v| v.is_finite())
    }

    pub fn norm(&self) -> f64 {
        (self.dp.norm_squared() + self.dr.norm_squared()).sqrt()
    }

    pub fn scale(&self, k: f64) -> Self {
        Self::new(self.dp * k, self.dr * k)
    }

    /// Rotates both components by `r` (e.g. chassis frame to world frame).
    pub fn rotated(&self, r: &UnitQuaternion<f64>) -> Self {
        Self::new(r * self.dp, r * self.dr)
    }

    /// True when the vertical translation stays within the compensation range.
    pub fn within_envelope(&self, max_dz: f64) -> bool {
        self.is_finite() && self.dp.z.abs() <= max_dz
    }
}

impl std::ops::Add for DisturbanceVec {
    type Output = Self;
    fn add(self, o: Self) -> Self {
        Self::new(self.dp + o.dp, self.dr + o.dr)
    }
}

impl std::ops::Sub for DisturbanceVec {
    type Output = Self;
    fn sub(self, o: Self) -> Self {
        Self::new(self.dp - o.dp, self.dr - o.dr)
    }
}

impl std::ops::Neg for DisturbanceVec {
    type Output = Self;
    fn neg(self) -> Self {
        Self::new(-self.dp, -self.dr)
    }
}

impl Serialize for DisturbanceVec {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        #[derive(Serialize)]
        struct Wire {
            dp: [f64; 3],
            dr: [f64; 3],
        }
        Wire {
            dp: [self.dp.x, self.dp.y, self.dp.z],
            dr: [self.dr.x, self.dr.y, self.dr.z],
        }
        .serialize(s)
    }
}

impl<'de> Deserialize<'de> for DisturbanceVec {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        #[derive(Deserialize)]
        struct Wire {
            dp: [f64; 3],
            dr: [f64; 3],
        }
        let w = Wire::deserialize(d)?;
        Ok(Self::new(Vector3::from(w.dp), Vector3::from(w.dr)))
    }
}

/// Planar chassis odometry: position on the ground plane and heading.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Planar {
    pub x: f64,
    pub y: f64,
    pub yaw: f64,
}

/// Chassis rates: forward speed (m/s) and yaw rate (rad/s).
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct BaseVel {
    pub v: f64,
    pub omega: f64,
}

/// Plant state stepped at 1 ms.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct RobotState {
    /// Chassis frame in world, terrain-slaved and including injected noise.
    pub base: Pose,
    /// Noise-free integrated planar pose.
    pub odom: Planar,
    pub base_vel: BaseVel,
    /// End-effector position relative to the nominal tool point, chassis frame.
    pub arm_offset: Vector3<f64>,
    pub arm_vel: Vector3<f64>,
    pub time: f64,
}

impl RobotState {
    pub fn at_rest(odom: Planar) -> Self {
        Self {
            base: Pose::from_xyz_rpy(Vector3::new(odom.x, odom.y, 0.0), 0.0, 0.0, odom.yaw),
            odom,
            ..Default::default()
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::FRAC_PI_2;

    fn some_pose() -> Pose {
        Pose::from_xyz_rpy(Vector3::new(1.0, -2.0, 0.5), 0.1, -0.3, 1.2)
    }

    #[test]
    fn identity_composition() {
        let p = some_pose();
        let a = compose(&Pose::identity(), &p);
        let b = compose(&p, &Pose::identity());
        assert!((a.to_matrix() - p.to_matrix()).abs().max() < 1e-12);
        assert!((b.to_matrix() - p.to_matrix()).abs().max() < 1e-12);
    }

    #[test]
    fn inverse_composition() {
        let p = some_pose();
        let i = compose(&p, &p.inverse());
        assert!((i.to_matrix() - Matrix4::identity()).abs().max() < 1e-9);
    }

    #[test]
    fn translations_compose_like_matrices() {
        let a = Pose::from_translation(1.0, 0.0, 0.0);
        let b = Pose::from_translation(0.0, 2.0, 0.0);
        let c = compose(&a, &b);
        // [I t_a; 0 1][I t_b; 0 1] = [I t_a + t_b; 0 1]
        let expected = Matrix4::new(
            1.0, 0.0, 0.0, 1.0, //
            0.0, 1.0, 0.0, 2.0, //
            0.0, 0.0, 1.0, 0.0, //
            0.0, 0.0, 0.0, 1.0,
        );
        assert!((c.to_matrix() - expected).abs().max() < 1e-15);
    }

    #[test]
    fn compose_matches_matrix_product() {
        let a = some_pose();
        let b = Pose::from_xyz_rpy(Vector3::new(0.3, 0.2, -0.1), -0.2, 0.4, -2.0);
        let c = compose(&a, &b);
        let m = a.to_matrix() * b.to_matrix();
        assert!((c.to_matrix() - m).abs().max() < 1e-12);
    }

    #[test]
    fn pose_error_cases() {
        let p = some_pose();
        let e = pose_error(&p, &p);
        assert!(e.norm() < 1e-12);

        let mut t = p;
        t.position.z += 0.003;
        let e = pose_error(&t, &p);
        assert!((e.dp - Vector3::new(0.0, 0.0, 0.003)).norm() < 1e-15);
        assert!(e.dr.norm() < 1e-12);

        let a = Pose::identity();
        let t = Pose::from_xyz_rpy(Vector3::zeros(), 0.0, 0.0, 0.01);
        let e = pose_error(&t, &a);
        assert!((e.dr - Vector3::new(0.0, 0.0, 0.01)).norm() < 1e-6);
    }

    #[test]
    fn yaw_rotates_offset_into_world_y() {
        let base = Pose::from_xyz_rpy(Vector3::zeros(), 0.0, 0.0, FRAC_PI_2);
        let p = base.transform_point(&Vector3::new(0.1, 0.0, 0.0));
        assert!((p - Vector3::new(0.0, 0.1, 0.0)).norm() < 1e-15);
    }

    #[test]
    fn json_wire_formats() {
        let p = some_pose();
        let s = serde_json::to_string(&p).unwrap();
        assert!(s.starts_with("{\"T\":["));
        let back: Pose = serde_json::from_str(&s).unwrap();
        assert!((back.to_matrix() - p.to_matrix()).abs().max() < 1e-12);

        let d = DisturbanceVec::from_array([1.0, 2.0, 3.0, 0.1, 0.2, 0.3]);
        let s = serde_json::to_string(&d).unwrap();
        assert_eq!(s, r#"{"dp":[1.0,2.0,3.0],"dr":[0.1,0.2,0.3]}"#);
        let back: DisturbanceVec = serde_json::from_str(&s).unwrap();
        assert_eq!(back, d);

        assert!(serde_json::from_str::<Pose>(r#"{"T":[1,2,3]}"#).is_err());
    }

    #[test]
    fn envelope_check() {
        let ok = DisturbanceVec::from_array([0.0, 0.0, 0.15, 0.0, 0.0, 0.0]);
        let bad = DisturbanceVec::from_array([0.0, 0.0, -0.16, 0.0, 0.0, 0.0]);
        assert!(ok.within_envelope(0.15));
        assert!(!bad.within_envelope(0.15));
        assert!(!DisturbanceVec::from_array([f64::NAN, 0.0, 0.0, 0.0, 0.0, 0.0]).is_finite());
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        fn pose_strategy() -> impl Strategy<Value = Pose> {
            (
                -10.0..10.0f64,
                -10.0..10.0f64,
                -10.0..10.0f64,
                -3.0..3.0f64,
                -1.5..1.5f64,
                -3.0..3.0f64,
            )
                .prop_map(|(x, y, z, r, p, w)| {
                    Pose::from_xyz_rpy(Vector3::new(x, y, z), r, p, w)
                })
        }

        proptest! {
            #[test]
            fn identity_is_neutral(p in pose_strategy()) {
                let a = compose(&Pose::identity(), &p);
                let b = compose(&p, &Pose::identity());
                prop_assert!((a.to_matrix() - p.to_matrix()).abs().max() < 1e-12);
                prop_assert!((b.to_matrix() - p.to_matrix()).abs().max() < 1e-12);
            }

            #[test]
            fn composition_associative(a in pose_strategy(), b in pose_strategy(), c in pose_strategy()) {
                let l = compose(&compose(&a, &b), &c);
                let r = compose(&a, &compose(&b, &c));
                prop_assert!((l.to_matrix() - r.to_matrix()).abs().max() < 1e-9);
                prop_assert!(l.orthonormality_error() < 1e-9);
            }

            #[test]
            fn dp_antisymmetric(a in pose_strategy(), b in pose_strategy()) {
                let ab = pose_error(&a, &b);
                let ba = pose_error(&b, &a);
                prop_assert!((ab.dp + ba.dp).abs().max() < 1e-12);
            }

            #[test]
            fn small_perturbation_round_trip(
                p in pose_strategy(),
                d in prop::array::uniform6(-4.0e-4..4.0e-4f64),
            ) {
                // the translation error is reported in world axes, so it is
                // brought back into the perturbed frame before comparing
                let d = DisturbanceVec::from_array(d);
                let target = compose(&p, &Pose::small(&d));
                let e = pose_error(&target, &p);
                let local = DisturbanceVec::new(p.rotation.inverse() * e.dp, e.dr);
                prop_assert!((local - d).norm() < 1e-6);
            }

            #[test]
            fn row_major_round_trip(p in pose_strategy()) {
                let back = Pose::from_row_major(&p.to_row_major());
                prop_assert!((back.to_matrix() - p.to_matrix()).abs().max() < 1e-12);
            }
        }
    }
}
