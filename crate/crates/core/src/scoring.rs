//! Base-pose scoring: joint margin, manipulability, and the weighted sum over a
//! representative set.

use nalgebra::{Matrix3, Matrix6xX, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{express_in_base, BasePose, JointConfig, Pose};
use crate::kinematics::KinematicModel;
use crate::pattern::{RepresentativeEntry, RepresentativeSet};

/// Eigenvalues below this are treated as a collapsed ellipsoid axis.
pub const SINGULAR_EIGENVALUE: f64 = 1e-12;

/// Non-negative per-joint weights normalized to sum to one.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct JointWeights(Vec<f64>);

impl JointWeights {
    pub fn new(raw: Vec<f64>) -> Result<Self> {
        if raw.is_empty() {
            return Err(Error::config("joint_weights", "empty weight vector"));
        }
        if raw.iter().any(|w| !w.is_finite() || *w < 0.0) {
            return Err(Error::config(
                "joint_weights",
                "weights must be finite and non-negative",
            ));
        }
        let total: f64 = raw.iter().sum();
        if total <= 0.0 {
            return Err(Error::config("joint_weights", "weights sum to zero"));
        }
        Ok(JointWeights(raw.into_iter().map(|w| w / total).collect()))
    }

    pub fn uniform(n: usize) -> Self {
        JointWeights(vec![1.0 / n as f64; n])
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

impl TryFrom<Vec<f64>> for JointWeights {
    type Error = Error;
    fn try_from(v: Vec<f64>) -> Result<Self> {
        JointWeights::new(v)
    }
}

impl From<JointWeights> for Vec<f64> {
    fn from(w: JointWeights) -> Self {
        w.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct JointMargin {
    pub score: f64,
    /// Set when some joint sat outside its limits and its term was clamped to 0.
    pub out_of_limits: bool,
}

/// Weighted mean of `1 - |q - q_mid| / half_range` over the joints.
pub fn joint_margin_score(
    q: &JointConfig,
    model: &KinematicModel,
    weights: &JointWeights,
) -> Result<JointMargin> {
    let n = model.dof();
    if q.len() != n {
        return Err(Error::Dimension {
            expected: n,
            got: q.len(),
        });
    }
    if weights.len() != n {
        return Err(Error::Dimension {
            expected: n,
            got: weights.len(),
        });
    }
    let mut score = 0.0;
    let mut out_of_limits = false;
    for ((qi, joint), w) in q.0.iter().zip(model.joints()).zip(weights.as_slice()) {
        let mut mu = (qi - joint.q_mid()).abs() / joint.half_range();
        if mu > 1.0 {
            mu = 1.0;
            out_of_limits = true;
        }
        score += w * (1.0 - mu);
    }
    Ok(JointMargin {
        score,
        out_of_limits,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Manipulability {
    pub linear: f64,
    pub angular: f64,
}

impl Manipulability {
    pub fn total(&self) -> f64 {
        self.linear + self.angular
    }
}

/// Inverse axis ratio `sqrt(lambda_min / lambda_max)` of the ellipsoid `A = B * B^T`.
pub fn inverse_axis_ratio(a: Matrix3<f64>) -> f64 {
    let eig = SymmetricEigen::new(a).eigenvalues;
    let lmax = eig.max().max(0.0);
    let lmin = eig.min().max(0.0);
    if lmin < SINGULAR_EIGENVALUE {
        return 0.0;
    }
    (lmin / lmax).sqrt()
}

pub fn manipulability_score(jac: &Matrix6xX<f64>) -> Manipulability {
    let jv = jac.rows(0, 3);
    let jw = jac.rows(3, 3);
    Manipulability {
        linear: inverse_axis_ratio((jv * jv.transpose()).fixed_view::<3, 3>(0, 0).into_owned()),
        angular: inverse_axis_ratio((jw * jw.transpose()).fixed_view::<3, 3>(0, 0).into_owned()),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PoseScore {
    pub score_jm: f64,
    pub score_lm: f64,
    pub score_am: f64,
    pub score_m: f64,
    pub feasible: bool,
    /// IK branch that produced the reported scores.
    pub branch_id: Option<usize>,
}

impl PoseScore {
    pub const INFEASIBLE: PoseScore = PoseScore {
        score_jm: 0.0,
        score_lm: 0.0,
        score_am: 0.0,
        score_m: 0.0,
        feasible: false,
        branch_id: None,
    };

    pub fn total(&self) -> f64 {
        self.score_jm + self.score_m
    }
}

/// Scores a configuration that is already known to reach the target.
pub fn config_score(
    model: &KinematicModel,
    q: &JointConfig,
    weights: &JointWeights,
) -> Result<PoseScore> {
    let jm = joint_margin_score(q, model, weights)?;
    let man = manipulability_score(&model.jacobian(q)?);
    Ok(PoseScore {
        score_jm: jm.score,
        score_lm: man.linear,
        score_am: man.angular,
        score_m: man.total(),
        feasible: true,
        branch_id: None,
    })
}

/// Scores one world-frame target for a robot mounted at `base`.
///
/// Among all in-limit IK branches the one with the highest `score_jm + score_m`
/// is reported; ties go to the lower branch id. Unreachable targets score zero.
pub fn pose_score(
    model: &KinematicModel,
    base: BasePose,
    target: &Pose,
    weights: &JointWeights,
) -> Result<PoseScore> {
    let local = express_in_base(base, model.base_height(), target);
    let mut best = PoseScore::INFEASIBLE;
    for sol in model.inverse_kinematics(&local) {
        let mut s = config_score(model, &sol.q, weights)?;
        s.branch_id = Some(sol.branch_id);
        if !best.feasible || s.total() > best.total() {
            best = s;
        }
    }
    Ok(best)
}

pub fn entry_score(
    model: &KinematicModel,
    base: BasePose,
    entry: &RepresentativeEntry,
    weights: &JointWeights,
) -> Result<PoseScore> {
    pose_score(model, base, &entry.pose(), weights)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EntryContribution {
    pub entry: usize,
    pub score: PoseScore,
    pub weight: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FinalScore {
    pub value: f64,
    pub per_entry: Vec<EntryContribution>,
}

/// Sum of `w_voxel * (score_jm + score_m)` over the set, with `w_voxel = 1` for
/// visited voxels and `alpha` otherwise. `alpha == 0` skips unvisited entries.
pub fn final_score(
    model: &KinematicModel,
    base: BasePose,
    set: &RepresentativeSet,
    alpha: f64,
    weights: &JointWeights,
) -> Result<FinalScore> {
    if !(0.0..=1.0).contains(&alpha) {
        return Err(Error::config("alpha", format!("{alpha} is outside [0, 1]")));
    }
    let mut value = 0.0;
    let mut per_entry = Vec::with_capacity(set.entries.len());
    for (i, entry) in set.entries.iter().enumerate() {
        let weight = if entry.visited { 1.0 } else { alpha };
        if weight == 0.0 {
            continue;
        }
        let score = entry_score(model, base, entry, weights)?;
        value += weight * score.total();
        per_entry.push(EntryContribution {
            entry: i,
            score,
            weight,
        });
    }
    Ok(FinalScore { value, per_entry })
}
