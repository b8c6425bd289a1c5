//! Serial-arm kinematics in the standard (distal) Denavit-Hartenberg convention.
//!
//! Link `i` contributes `Rz(theta_i) * Tz(d_i) * Tx(a_i) * Rx(alpha_i)`, where a
//! revolute joint sets `theta_i = q_i + theta_offset_i` and a prismatic joint
//! sets `d_i = d + q_i`.
//!
//! Inverse kinematics is closed-form for 6R arms whose last three axes meet in a
//! spherical wrist (the shipped reference arm); any other chain falls back to a
//! damped-least-squares solver.

use std::f64::consts::{FRAC_PI_2, PI, TAU};
use std::path::Path;

use nalgebra::{Matrix3, Matrix6, Matrix6xX, Rotation3, UnitQuaternion, Vector3, Vector6};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{quat_to_rotvec, JointConfig, Pose};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum JointKind {
    Revolute,
    Prismatic,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JointSpec {
    pub kind: JointKind,
    pub a: f64,
    pub alpha: f64,
    pub d: f64,
    #[serde(default)]
    pub theta_offset: f64,
    pub q_min: f64,
    pub q_max: f64,
}

impl JointSpec {
    pub fn revolute(a: f64, alpha: f64, d: f64, q_min: f64, q_max: f64) -> Self {
        JointSpec {
            kind: JointKind::Revolute,
            a,
            alpha,
            d,
            theta_offset: 0.0,
            q_min,
            q_max,
        }
    }

    pub fn q_mid(&self) -> f64 {
        0.5 * (self.q_min + self.q_max)
    }

    /// Half of the joint range, the largest possible distance from `q_mid`.
    pub fn half_range(&self) -> f64 {
        0.5 * (self.q_max - self.q_min)
    }

    fn link(&self, q: f64) -> (Matrix3<f64>, Vector3<f64>) {
        let (theta, d) = match self.kind {
            JointKind::Revolute => (q + self.theta_offset, self.d),
            JointKind::Prismatic => (self.theta_offset, self.d + q),
        };
        dh_link(self.a, self.alpha, d, theta)
    }
}

fn dh_link(a: f64, alpha: f64, d: f64, theta: f64) -> (Matrix3<f64>, Vector3<f64>) {
    let (st, ct) = theta.sin_cos();
    let (sa, ca) = alpha.sin_cos();
    let rot = Matrix3::new(ct, -st * ca, st * sa, st, ct * ca, -ct * sa, 0.0, sa, ca);
    (rot, Vector3::new(a * ct, a * st, d))
}

/// On-disk form of a kinematic model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelFile {
    pub name: String,
    pub convention: String,
    pub base_height: f64,
    pub joints: Vec<JointSpec>,
}

pub const DH_STANDARD: &str = "dh-standard";

/// Immutable serial-arm description.
#[derive(Debug, Clone)]
pub struct KinematicModel {
    name: String,
    joints: Vec<JointSpec>,
    base_height: f64,
    wrist: Option<SphericalWrist>,
}

/// One inverse-kinematics solution with the label of the branch that produced it.
#[derive(Debug, Clone, PartialEq)]
pub struct IkSolution {
    pub q: JointConfig,
    pub branch_id: usize,
}

impl KinematicModel {
    pub fn new(name: impl Into<String>, joints: Vec<JointSpec>, base_height: f64) -> Result<Self> {
        if joints.len() < 3 {
            return Err(Error::Model(format!(
                "need at least 3 joints, got {}",
                joints.len()
            )));
        }
        for (i, j) in joints.iter().enumerate() {
            let finite = [j.a, j.alpha, j.d, j.theta_offset, j.q_min, j.q_max]
                .iter()
                .all(|v| v.is_finite());
            if !finite {
                return Err(Error::Model(format!("joint {i} has a non-finite parameter")));
            }
            if j.q_min >= j.q_max {
                return Err(Error::Model(format!(
                    "joint {i}: q_min ({}) must be below q_max ({})",
                    j.q_min, j.q_max
                )));
            }
        }
        if !base_height.is_finite() {
            return Err(Error::Model("base_height must be finite".into()));
        }
        let wrist = SphericalWrist::detect(&joints);
        Ok(KinematicModel {
            name: name.into(),
            joints,
            base_height,
            wrist,
        })
    }

    pub fn from_file_model(file: ModelFile) -> Result<Self> {
        if file.convention != DH_STANDARD {
            return Err(Error::Model(format!(
                "unsupported convention `{}` (expected `{DH_STANDARD}`)",
                file.convention
            )));
        }
        KinematicModel::new(file.name, file.joints, file.base_height)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let file: ModelFile = toml::from_str(&text)
            .map_err(|e| Error::Model(format!("{}: {}", path.display(), e.message())))?;
        KinematicModel::from_file_model(file)
    }

    pub fn to_file_model(&self) -> ModelFile {
        ModelFile {
            name: self.name.clone(),
            convention: DH_STANDARD.into(),
            base_height: self.base_height,
            joints: self.joints.clone(),
        }
    }

    /// 6R arm with a spherical wrist that ships with the crate.
    ///
    /// Shoulder height 0.35 m above the mounting flange, 1.0 m upper arm,
    /// 0.95 m forearm, 0.12 m tool flange, mounted 0.8 m above the floor.
    /// With all joints at zero the upper arm is horizontal, the forearm hangs
    /// straight down, and the tool points down; see
    /// [`REFERENCE_HOME_POSITION`]. Shoulder, elbow and wrist-bend travel is
    /// narrow, as on table-side surgical arms.
    pub fn reference() -> Self {
        let deg = |v: f64| v.to_radians();
        let joints = vec![
            JointSpec::revolute(0.0, FRAC_PI_2, 0.35, deg(-90.0), deg(90.0)),
            JointSpec::revolute(1.0, 0.0, 0.0, deg(-60.0), deg(60.0)),
            JointSpec::revolute(0.0, FRAC_PI_2, 0.0, deg(-60.0), deg(60.0)),
            JointSpec::revolute(0.0, -FRAC_PI_2, 0.95, deg(-175.0), deg(175.0)),
            JointSpec::revolute(0.0, FRAC_PI_2, 0.0, deg(-90.0), deg(90.0)),
            JointSpec::revolute(0.0, 0.0, 0.12, deg(-178.0), deg(178.0)),
        ];
        KinematicModel::new("reference-6r-spherical-wrist", joints, 0.8)
            .expect("reference model is valid")
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn joints(&self) -> &[JointSpec] {
        &self.joints
    }

    pub fn dof(&self) -> usize {
        self.joints.len()
    }

    pub fn base_height(&self) -> f64 {
        self.base_height
    }

    pub fn with_base_height(mut self, h: f64) -> Self {
        self.base_height = h;
        self
    }

    pub fn has_closed_form_ik(&self) -> bool {
        self.wrist.is_some()
    }

    pub fn q_mid(&self) -> JointConfig {
        JointConfig(self.joints.iter().map(JointSpec::q_mid).collect())
    }

    /// Sum of link lengths, an upper bound on the distance the flange can reach
    /// from the base origin (prismatic joints counted at full extension).
    pub fn max_reach(&self) -> f64 {
        self.joints
            .iter()
            .map(|j| match j.kind {
                JointKind::Revolute => j.a.abs() + j.d.abs(),
                JointKind::Prismatic => {
                    j.a.abs() + (j.d + j.q_min).abs().max((j.d + j.q_max).abs())
                }
            })
            .sum()
    }

    pub fn within_limits(&self, q: &JointConfig, tol: f64) -> bool {
        q.0.iter()
            .zip(&self.joints)
            .all(|(v, j)| *v >= j.q_min - tol && *v <= j.q_max + tol)
    }

    fn check_dim(&self, q: &JointConfig) -> Result<()> {
        if q.len() != self.dof() {
            return Err(Error::Dimension {
                expected: self.dof(),
                got: q.len(),
            });
        }
        Ok(())
    }

    /// Frame `i` (for `i` in `0..=n`) expressed in the base frame; frame 0 is the base.
    fn frames(&self, q: &[f64]) -> Vec<(Matrix3<f64>, Vector3<f64>)> {
        let mut out = Vec::with_capacity(q.len() + 1);
        let mut rot = Matrix3::identity();
        let mut pos = Vector3::zeros();
        out.push((rot, pos));
        for (j, &qi) in self.joints.iter().zip(q) {
            let (r, t) = j.link(qi);
            pos += rot * t;
            rot *= r;
            out.push((rot, pos));
        }
        out
    }

    pub fn forward_kinematics(&self, q: &JointConfig) -> Result<Pose> {
        self.check_dim(q)?;
        Ok(self.fk_unchecked(q.as_slice()))
    }

    fn fk_unchecked(&self, q: &[f64]) -> Pose {
        let (rot, pos) = *self.frames(q).last().expect("at least one frame");
        Pose::new(pos, rot_to_quat(rot))
    }

    /// Geometric Jacobian in the base frame; rows 0..3 are linear velocity,
    /// rows 3..6 angular velocity.
    pub fn jacobian(&self, q: &JointConfig) -> Result<Matrix6xX<f64>> {
        self.check_dim(q)?;
        Ok(self.jacobian_unchecked(q.as_slice()))
    }

    fn jacobian_unchecked(&self, q: &[f64]) -> Matrix6xX<f64> {
        let frames = self.frames(q);
        let tip = frames[frames.len() - 1].1;
        let mut jac = Matrix6xX::zeros(self.dof());
        for (i, joint) in self.joints.iter().enumerate() {
            let (rot, origin) = frames[i];
            let z = rot.column(2).into_owned();
            let (lin, ang) = match joint.kind {
                JointKind::Revolute => (z.cross(&(tip - origin)), z),
                JointKind::Prismatic => (z, Vector3::zeros()),
            };
            jac.fixed_view_mut::<3, 1>(0, i).copy_from(&lin);
            jac.fixed_view_mut::<3, 1>(3, i).copy_from(&ang);
        }
        jac
    }

    /// All in-limit solutions for `target` (expressed in the robot base frame),
    /// ordered by branch id. An unreachable target yields an empty list.
    pub fn inverse_kinematics(&self, target: &Pose) -> Vec<IkSolution> {
        let candidates = match &self.wrist {
            Some(w) => w.solve(self, target),
            None => self.numeric_ik(target),
        };
        let mut out: Vec<IkSolution> = Vec::with_capacity(candidates.len());
        for cand in candidates {
            if !self.within_limits(&cand.q, 0.0) {
                continue;
            }
            if out.iter().any(|s| s.q.max_abs_diff(&cand.q) <= 1e-6) {
                continue;
            }
            out.push(cand);
        }
        out
    }

    /// Damped-least-squares IK starting from `seed`; `None` if it does not converge.
    pub fn solve_numeric_from(&self, target: &Pose, seed: &JointConfig) -> Option<JointConfig> {
        if seed.len() != self.dof() {
            return None;
        }
        let mut q = seed.0.clone();
        self.clamp(&mut q);
        let lambda2 = DLS_DAMPING * DLS_DAMPING;
        for _ in 0..DLS_MAX_ITERS {
            let pose = self.fk_unchecked(&q);
            let err = task_error(&pose, target);
            if err.norm() < DLS_TOLERANCE {
                return Some(JointConfig(q));
            }
            let jac = self.jacobian_unchecked(&q);
            let jjt: Matrix6<f64> = &jac * jac.transpose() + Matrix6::identity() * lambda2;
            let y = jjt.cholesky()?.solve(&err);
            let dq = jac.transpose() * y;
            for (v, d) in q.iter_mut().zip(dq.iter()) {
                *v += d;
            }
            self.clamp(&mut q);
        }
        let err = task_error(&self.fk_unchecked(&q), target);
        (err.norm() < DLS_TOLERANCE).then_some(JointConfig(q))
    }

    fn clamp(&self, q: &mut [f64]) {
        for (v, j) in q.iter_mut().zip(&self.joints) {
            *v = v.clamp(j.q_min, j.q_max);
        }
    }

    fn numeric_ik(&self, target: &Pose) -> Vec<IkSolution> {
        let mid = self.q_mid();
        let mut rng = ChaCha8Rng::seed_from_u64(DLS_SEED_STREAM);
        let mut seeds = vec![mid.clone()];
        for _ in 0..DLS_EXTRA_SEEDS {
            let q = self
                .joints
                .iter()
                .map(|j| j.q_mid() + rng.random_range(-0.8..0.8) * j.half_range())
                .collect();
            seeds.push(JointConfig(q));
        }
        let mut found: Vec<JointConfig> = Vec::new();
        for seed in &seeds {
            if let Some(q) = self.solve_numeric_from(target, seed) {
                if found.iter().all(|f| f.max_abs_diff(&q) > DLS_DEDUP) {
                    found.push(q);
                }
            }
        }
        found
            .into_iter()
            .enumerate()
            .map(|(branch_id, q)| IkSolution { q, branch_id })
            .collect()
    }
}

const DLS_DAMPING: f64 = 1e-3;
const DLS_MAX_ITERS: usize = 200;
const DLS_TOLERANCE: f64 = 1e-8;
const DLS_EXTRA_SEEDS: usize = 7;
const DLS_DEDUP: f64 = 1e-4;
const DLS_SEED_STREAM: u64 = 0x5eed_d15;

/// Position error stacked over the rotation-vector orientation error, both in
/// the base frame.
fn task_error(current: &Pose, target: &Pose) -> Vector6<f64> {
    let dp = target.p - current.p;
    let dr = quat_to_rotvec(target.rotation() * current.rotation().inverse()).0;
    Vector6::new(dp.x, dp.y, dp.z, dr.x, dr.y, dr.z)
}

fn rot_to_quat(m: Matrix3<f64>) -> UnitQuaternion<f64> {
    UnitQuaternion::from_rotation_matrix(&Rotation3::from_matrix_unchecked(m))
}

/// Home pose of [`KinematicModel::reference`] at `q = 0`: flange position in
/// the base frame.
pub const REFERENCE_HOME_POSITION: [f64; 3] = [1.0, 0.0, 0.35 - 0.95 - 0.12];
/// Home orientation (`[w, x, y, z]`): a half turn about base X, tool pointing down.
pub const REFERENCE_HOME_WXYZ: [f64; 4] = [0.0, 1.0, 0.0, 0.0];

/// Geometry of a 6R arm whose structure admits the decoupled closed-form
/// solution: alphas `(pi/2, 0, pi/2, -pi/2, pi/2, 0)`, link lengths
/// `(0, a2, 0, 0, 0, 0)` and offsets `(d1, 0, 0, d4, 0, d6)`.
#[derive(Debug, Clone)]
struct SphericalWrist {
    d1: f64,
    a2: f64,
    d4: f64,
    d6: f64,
    offsets: [f64; 6],
    mids: [f64; 6],
}

impl SphericalWrist {
    fn detect(joints: &[JointSpec]) -> Option<Self> {
        const ALPHAS: [f64; 6] = [FRAC_PI_2, 0.0, FRAC_PI_2, -FRAC_PI_2, FRAC_PI_2, 0.0];
        const TOL: f64 = 1e-12;
        if joints.len() != 6 {
            return None;
        }
        for (j, alpha) in joints.iter().zip(ALPHAS) {
            if j.kind != JointKind::Revolute || (j.alpha - alpha).abs() > TOL {
                return None;
            }
            // one window of width 2*pi per joint keeps the branch count finite
            if j.q_max - j.q_min > TAU {
                return None;
            }
        }
        let zero_a = [0, 2, 3, 4, 5].iter().all(|&i| joints[i].a.abs() <= TOL);
        let zero_d = [1, 2, 4].iter().all(|&i| joints[i].d.abs() <= TOL);
        if !zero_a || !zero_d || joints[1].a.abs() <= TOL || joints[3].d.abs() <= TOL {
            return None;
        }
        let mut offsets = [0.0; 6];
        let mut mids = [0.0; 6];
        for i in 0..6 {
            offsets[i] = joints[i].theta_offset;
            mids[i] = joints[i].q_mid();
        }
        Some(SphericalWrist {
            d1: joints[0].d,
            a2: joints[1].a,
            d4: joints[3].d,
            d6: joints[5].d,
            offsets,
            mids,
        })
    }

    /// Up to eight candidates: shoulder (front/back) x elbow (two signs) x
    /// wrist (flip). Branch id = 4 * shoulder + 2 * elbow + wrist.
    fn solve(&self, model: &KinematicModel, target: &Pose) -> Vec<IkSolution> {
        let rot = target.rotation().to_rotation_matrix().into_inner();
        let approach = rot.column(2).into_owned();
        let pw = target.p - self.d6 * approach;

        let radial = pw.x.hypot(pw.y);
        let heading = if radial < 1e-12 { 0.0 } else { pw.y.atan2(pw.x) };
        let height = pw.z - self.d1;
        let (a2, d4) = (self.a2, self.d4);

        let c3 = (radial * radial + height * height - a2 * a2 - d4 * d4) / (2.0 * a2 * d4);
        if c3.abs() > 1.0 + 1e-10 {
            return Vec::new();
        }
        let c3 = c3.clamp(-1.0, 1.0);
        let s3_mag = (1.0 - c3 * c3).max(0.0).sqrt();

        let mut out = Vec::with_capacity(8);
        for shoulder in 0..2 {
            let t1 = heading + PI * shoulder as f64;
            let reach = if shoulder == 0 { radial } else { -radial };
            for elbow in 0..2 {
                let s3 = if elbow == 0 { s3_mag } else { -s3_mag };
                let t3_planar = s3.atan2(c3);
                let t2 = height.atan2(reach) - (d4 * s3).atan2(a2 + d4 * c3);
                let t3 = t3_planar + FRAC_PI_2;

                let r03 = arm_rotation(t1, t2, t3);
                let r36 = r03.transpose() * rot;
                for wrist in 0..2 {
                    let (t4, t5, t6) = wrist_angles(&r36, wrist == 1);
                    let thetas = [t1, t2, t3, t4, t5, t6];
                    let q: Vec<f64> = thetas
                        .iter()
                        .enumerate()
                        .map(|(i, t)| wrap_near(t - self.offsets[i], self.mids[i]))
                        .collect();
                    // singular configurations can yield a branch that misses the
                    // target; verify before accepting
                    let (dp, da) = model.fk_unchecked(&q).error_to(target);
                    if dp > 1e-8 || da > 1e-8 {
                        continue;
                    }
                    out.push(IkSolution {
                        q: JointConfig(q),
                        branch_id: 4 * shoulder + 2 * elbow + wrist,
                    });
                }
            }
        }
        out
    }
}

/// Orientation of frame 3 for the first three joint angles.
fn arm_rotation(t1: f64, t2: f64, t3: f64) -> Matrix3<f64> {
    let (s1, c1) = t1.sin_cos();
    let (s23, c23) = (t2 + t3).sin_cos();
    // Rz(t1) Rx(pi/2) Rz(t2 + t3) Rx(pi/2)
    Matrix3::new(
        c1 * c23,
        s1,
        c1 * s23,
        s1 * c23,
        -c1,
        s1 * s23,
        s23,
        0.0,
        -c23,
    )
}

/// ZYZ decomposition of the wrist rotation `Rz(t4) Ry(t5) Rz(t6)`.
fn wrist_angles(r: &Matrix3<f64>, flip: bool) -> (f64, f64, f64) {
    let s5 = r[(0, 2)].hypot(r[(1, 2)]);
    let c5 = r[(2, 2)];
    if s5 < 1e-12 {
        if c5 > 0.0 {
            return (0.0, 0.0, r[(1, 0)].atan2(r[(0, 0)]));
        }
        return (0.0, PI, -(-r[(1, 0)]).atan2(-r[(0, 0)]));
    }
    if flip {
        (
            (-r[(1, 2)]).atan2(-r[(0, 2)]),
            (-s5).atan2(c5),
            (-r[(2, 1)]).atan2(r[(2, 0)]),
        )
    } else {
        (
            r[(1, 2)].atan2(r[(0, 2)]),
            s5.atan2(c5),
            r[(2, 1)].atan2(-r[(2, 0)]),
        )
    }
}

/// Wraps `angle` into `(mid - pi, mid + pi]`.
fn wrap_near(angle: f64, mid: f64) -> f64 {
    let w = (angle - mid + PI).rem_euclid(TAU) - PI;
    let w = if w == -PI { PI } else { w };
    mid + w
}
