//! Rigid-body primitives shared across the pipeline: end-effector poses,
//! rotation vectors, and the planar base pose with its world transform.
//!
//! Quaternions are scalar-first and stored in canonical form (non-negative
//! scalar part), so `q` and `-q` always collapse to the same value before
//! any distance is computed on them.

use std::f64::consts::{PI, TAU};

use nalgebra::{Isometry3, Quaternion, Translation3, UnitQuaternion, Vector3};
use serde::{Deserialize, Serialize};

/// Position plus orientation of an end-effector.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Pose {
    pub p: Vector3<f64>,
    r: UnitQuaternion<f64>,
}

impl Pose {
    pub fn new(p: Vector3<f64>, r: UnitQuaternion<f64>) -> Self {
        Pose {
            p,
            r: canonical_quat(r),
        }
    }

    /// Builds a pose from a scalar-first quaternion `[w, x, y, z]`, renormalizing it.
    pub fn from_wxyz(p: [f64; 3], q: [f64; 4]) -> Self {
        let quat = UnitQuaternion::from_quaternion(Quaternion::new(q[0], q[1], q[2], q[3]));
        Pose::new(Vector3::from(p), quat)
    }

    pub fn from_rotvec(p: Vector3<f64>, w: RotVec) -> Self {
        Pose::new(p, rotvec_to_quat(w))
    }

    pub fn identity() -> Self {
        Pose::new(Vector3::zeros(), UnitQuaternion::identity())
    }

    pub fn rotation(&self) -> UnitQuaternion<f64> {
        self.r
    }

    /// Scalar-first quaternion components in canonical sign.
    pub fn wxyz(&self) -> [f64; 4] {
        let q = self.r.quaternion();
        [q.w, q.i, q.j, q.k]
    }

    pub fn rotvec(&self) -> RotVec {
        quat_to_rotvec(self.r)
    }

    pub fn to_isometry(&self) -> Isometry3<f64> {
        Isometry3::from_parts(Translation3::from(self.p), self.r)
    }

    pub fn from_isometry(iso: &Isometry3<f64>) -> Self {
        Pose::new(iso.translation.vector, iso.rotation)
    }

    /// Position distance and rotation angle between two poses.
    pub fn error_to(&self, other: &Pose) -> (f64, f64) {
        let dp = (self.p - other.p).norm();
        (dp, rotation_angle_between(&self.r, &other.r))
    }
}

/// Angle of the relative rotation `a^-1 * b`, accurate near zero.
pub fn rotation_angle_between(a: &UnitQuaternion<f64>, b: &UnitQuaternion<f64>) -> f64 {
    let d = a.inverse() * b;
    let c = d.quaternion();
    let n = (c.i * c.i + c.j * c.j + c.k * c.k).sqrt();
    2.0 * n.atan2(c.w.abs())
}

/// Returns the representative of `{q, -q}` with `w >= 0`.
///
/// When `w == 0` exactly, the first non-zero vector component is made positive.
pub fn canonical_quat(q: UnitQuaternion<f64>) -> UnitQuaternion<f64> {
    let c = q.quaternion();
    let flip = if c.w != 0.0 {
        c.w < 0.0
    } else {
        [c.i, c.j, c.k]
            .into_iter()
            .find(|v| *v != 0.0)
            .is_some_and(|v| v < 0.0)
    };
    if flip {
        UnitQuaternion::new_unchecked(-c)
    } else {
        q
    }
}

/// Axis-angle product with the angle wrapped to `[0, pi]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct RotVec(pub Vector3<f64>);

impl RotVec {
    /// Wraps an arbitrary axis-angle vector to its minimal representation.
    pub fn new(w: Vector3<f64>) -> Self {
        let angle = w.norm();
        if angle <= PI {
            return RotVec(w);
        }
        let axis = w / angle;
        let wrapped = angle.rem_euclid(TAU);
        if wrapped > PI {
            RotVec(-axis * (TAU - wrapped))
        } else {
            RotVec(axis * wrapped)
        }
    }

    pub fn zero() -> Self {
        RotVec(Vector3::zeros())
    }

    pub fn angle(&self) -> f64 {
        self.0.norm()
    }

    pub fn as_array(&self) -> [f64; 3] {
        [self.0.x, self.0.y, self.0.z]
    }

    pub fn distance(&self, other: &RotVec) -> f64 {
        (self.0 - other.0).norm()
    }
}

impl From<[f64; 3]> for RotVec {
    fn from(v: [f64; 3]) -> Self {
        RotVec::new(Vector3::from(v))
    }
}

pub fn quat_to_rotvec(r: UnitQuaternion<f64>) -> RotVec {
    let r = canonical_quat(r);
    let c = r.quaternion();
    let v = Vector3::new(c.i, c.j, c.k);
    let n = v.norm();
    if n == 0.0 {
        return RotVec::zero();
    }
    let angle = 2.0 * n.atan2(c.w);
    RotVec(v * (angle / n))
}

pub fn rotvec_to_quat(w: RotVec) -> UnitQuaternion<f64> {
    let angle = w.0.norm();
    if angle == 0.0 {
        return UnitQuaternion::identity();
    }
    let half = 0.5 * angle;
    let v = w.0 * (half.sin() / angle);
    canonical_quat(UnitQuaternion::new_unchecked(Quaternion::new(
        half.cos(),
        v.x,
        v.y,
        v.z,
    )))
}

/// Wraps an angle to `(-pi, pi]`.
pub fn wrap_angle(a: f64) -> f64 {
    let w = (a + PI).rem_euclid(TAU) - PI;
    if w == -PI {
        PI
    } else {
        w
    }
}

/// Planar base placement: position on the floor plus yaw about world Z.
/// Height is a separate configuration scalar.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BasePose {
    pub x: f64,
    pub y: f64,
    pub theta: f64,
}

impl BasePose {
    pub fn new(x: f64, y: f64, theta: f64) -> Self {
        BasePose {
            x,
            y,
            theta: wrap_angle(theta),
        }
    }
}

pub fn base_to_world(b: BasePose, base_height: f64) -> Isometry3<f64> {
    Isometry3::from_parts(
        Translation3::new(b.x, b.y, base_height),
        UnitQuaternion::from_axis_angle(&Vector3::z_axis(), b.theta),
    )
}

/// Re-expresses a world-frame pose in the frame of a robot base at `b`.
pub fn express_in_base(b: BasePose, base_height: f64, target: &Pose) -> Pose {
    let inv = base_to_world(b, base_height).inverse();
    Pose::from_isometry(&(inv * target.to_isometry()))
}

/// Joint values of a serial arm (radians for revolute, meters for prismatic).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct JointConfig(pub Vec<f64>);

impl JointConfig {
    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn max_abs_diff(&self, other: &JointConfig) -> f64 {
        self.0
            .iter()
            .zip(&other.0)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }
}

impl From<Vec<f64>> for JointConfig {
    fn from(v: Vec<f64>) -> Self {
        JointConfig(v)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    const FRAC_1_SQRT_2: f64 = std::f64::consts::FRAC_1_SQRT_2;

    fn q(w: f64, x: f64, y: f64, z: f64) -> UnitQuaternion<f64> {
        UnitQuaternion::from_quaternion(Quaternion::new(w, x, y, z))
    }

    #[test]
    fn quat_to_rotvec_examples() {
        assert_eq!(quat_to_rotvec(q(1.0, 0.0, 0.0, 0.0)).0, Vector3::zeros());

        let w = quat_to_rotvec(q(FRAC_1_SQRT_2, 0.0, 0.0, FRAC_1_SQRT_2));
        assert_abs_diff_eq!(w.0, Vector3::new(0.0, 0.0, PI / 2.0), epsilon = 1e-12);

        let w = quat_to_rotvec(q(0.0, 1.0, 0.0, 0.0));
        assert_abs_diff_eq!(w.0, Vector3::new(PI, 0.0, 0.0), epsilon = 1e-12);
        // the other half of the double cover lands on the same vector
        let w = quat_to_rotvec(UnitQuaternion::new_unchecked(Quaternion::new(0.0, -1.0, 0.0, 0.0)));
        assert_abs_diff_eq!(w.0, Vector3::new(PI, 0.0, 0.0), epsilon = 1e-12);
    }

    #[test]
    fn rotvec_to_quat_examples() {
        let c = |w: RotVec| {
            let r = rotvec_to_quat(w);
            let q = r.quaternion();
            [q.w, q.i, q.j, q.k]
        };
        assert_eq!(c(RotVec::zero()), [1.0, 0.0, 0.0, 0.0]);
        let v = c(RotVec::from([0.0, 0.0, PI / 2.0]));
        for (a, b) in v.iter().zip([FRAC_1_SQRT_2, 0.0, 0.0, FRAC_1_SQRT_2]) {
            assert_abs_diff_eq!(*a, b, epsilon = 1e-12);
        }
        let v = c(RotVec::from([PI, 0.0, 0.0]));
        for (a, b) in v.iter().zip([0.0, 1.0, 0.0, 0.0]) {
            assert_abs_diff_eq!(*a, b, epsilon = 1e-12);
        }
    }

    #[test]
    fn rotvec_new_wraps_long_vectors() {
        let w = RotVec::new(Vector3::new(0.0, 0.0, 1.5 * PI));
        assert_abs_diff_eq!(w.0, Vector3::new(0.0, 0.0, -0.5 * PI), epsilon = 1e-12);
        let w = RotVec::new(Vector3::new(2.0 * PI + 0.25, 0.0, 0.0));
        assert_abs_diff_eq!(w.0, Vector3::new(0.25, 0.0, 0.0), epsilon = 1e-12);
    }

    #[test]
    fn base_to_world_examples() {
        let t = base_to_world(BasePose::new(0.0, 0.0, 0.0), 0.0);
        assert_eq!(t, Isometry3::identity());

        let t = base_to_world(BasePose::new(1.0, 2.0, 0.0), 0.5);
        assert_abs_diff_eq!(t.translation.vector, Vector3::new(1.0, 2.0, 0.5));
        assert_abs_diff_eq!(t.rotation.angle(), 0.0);

        let t = base_to_world(BasePose::new(0.0, 0.0, PI / 2.0), 0.0);
        let x_base_in_world = t.rotation * Vector3::x();
        assert_abs_diff_eq!(x_base_in_world, Vector3::y(), epsilon = 1e-15);
    }

    #[test]
    fn express_in_base_examples() {
        let target = Pose::from_wxyz([0.3, -0.2, 0.1], [0.9, 0.1, -0.3, 0.2]);
        let same = express_in_base(BasePose::new(0.0, 0.0, 0.0), 0.0, &target);
        let (dp, da) = same.error_to(&target);
        assert!(dp < 1e-15 && da < 1e-12);

        let t = Pose::new(Vector3::new(1.0, 0.0, 0.0), UnitQuaternion::identity());
        let local = express_in_base(BasePose::new(1.0, 0.0, 0.0), 0.0, &t);
        assert_abs_diff_eq!(local.p, Vector3::zeros(), epsilon = 1e-15);

        let t = Pose::new(Vector3::new(0.0, 1.0, 0.0), UnitQuaternion::identity());
        let local = express_in_base(BasePose::new(0.0, 0.0, PI / 2.0), 0.0, &t);
        assert_abs_diff_eq!(local.p, Vector3::new(1.0, 0.0, 0.0), epsilon = 1e-15);
    }

    #[test]
    fn base_theta_wraps_to_half_open_interval() {
        assert_abs_diff_eq!(BasePose::new(0.0, 0.0, -PI).theta, PI);
        assert_abs_diff_eq!(BasePose::new(0.0, 0.0, 3.0 * PI / 2.0).theta, -PI / 2.0, epsilon = 1e-15);
        assert_abs_diff_eq!(BasePose::new(0.0, 0.0, 0.3).theta, 0.3);
    }

    fn arb_rotvec() -> impl Strategy<Value = RotVec> {
        (-1.0f64..1.0, -1.0f64..1.0, -1.0f64..1.0, 0.0f64..PI).prop_filter_map(
            "axis too short",
            |(x, y, z, a)| {
                let v = Vector3::new(x, y, z);
                (v.norm() > 1e-3).then(|| RotVec(v.normalize() * a))
            },
        )
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(2000))]

        #[test]
        fn rotvec_round_trip(w in arb_rotvec()) {
            let back = quat_to_rotvec(rotvec_to_quat(w));
            prop_assert!((back.0 - w.0).norm() < 1e-9);
        }

        #[test]
        fn conversion_agrees_with_nalgebra(w in arb_rotvec()) {
            let reference = UnitQuaternion::from_scaled_axis(w.0);
            prop_assert!(rotvec_to_quat(w).angle_to(&reference) < 1e-12);
        }

        #[test]
        fn canonicalization_idempotent(w in arb_rotvec(), flip in any::<bool>()) {
            let mut r = UnitQuaternion::from_scaled_axis(w.0);
            if flip {
                r = UnitQuaternion::new_unchecked(-r.into_inner());
            }
            let once = canonical_quat(r);
            prop_assert!(once.quaternion().w >= 0.0);
            prop_assert_eq!(canonical_quat(once), once);
        }

        #[test]
        fn express_in_base_inverts_world_transform(
            x in -3.0f64..3.0, y in -3.0f64..3.0, th in -PI..PI, h in 0.0f64..2.0,
            px in -1.0f64..1.0, py in -1.0f64..1.0, pz in -1.0f64..1.0, w in arb_rotvec(),
        ) {
            let b = BasePose::new(x, y, th);
            let local = Pose::from_rotvec(Vector3::new(px, py, pz), w);
            let world = Pose::from_isometry(&(base_to_world(b, h) * local.to_isometry()));
            let back = express_in_base(b, h, &world);
            let (dp, da) = back.error_to(&local);
            prop_assert!(dp < 1e-12, "dp = {dp}");
            prop_assert!(da < 1e-12, "da = {da}");
        }
    }
}
