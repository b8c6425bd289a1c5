//! Run configuration shared by every command.
//!
//! One TOML document drives the whole pipeline. Angles are written in
//! degrees (`*_deg` fields) and converted on use. Any field can be overridden
//! with a dotted path, e.g. `grid.step_x=0.01`.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::dataset::BaseRange;
use crate::error::{Error, Result};
use crate::kinematics::KinematicModel;
use crate::optimizer::GridSpec;
use crate::pattern::{PatternConfig, Workspace};
use crate::regression::{LassoParams, MlpParams, SplitParams, DEFAULT_WIDTHS};
use crate::scoring::JointWeights;
use crate::tracegen::OperatorProfile;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// Master seed; every stage derives its own stream from it.
    pub seed: u64,
    pub workspace: WorkspaceConfig,
    pub robot: RobotConfig,
    pub base_range: RangeConfig,
    pub scoring: ScoringConfig,
    pub pattern: PatternConfig,
    pub traces: TraceConfig,
    pub sampling: SamplingConfig,
    pub mlp: MlpConfig,
    pub lasso: LassoConfig,
    pub grid: GridConfig,
    pub score_map: ScoreMapConfig,
    pub evaluation: EvaluationConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct WorkspaceConfig {
    pub origin: [f64; 3],
    pub dims: [f64; 3],
    pub voxel_size: f64,
}

impl Default for WorkspaceConfig {
    fn default() -> Self {
        WorkspaceConfig {
            origin: [1.45, -0.91, 0.03],
            dims: [0.2, 0.1, 0.1],
            voxel_size: 0.02,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RobotConfig {
    /// Kinematic model file; the built-in reference arm when absent.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub model: Option<PathBuf>,
    /// Overrides the model's mounting height.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub base_height: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RangeConfig {
    pub x: [f64; 2],
    pub y: [f64; 2],
    pub theta_deg: [f64; 2],
}

impl Default for RangeConfig {
    fn default() -> Self {
        let r = BaseRange::right_arm();
        RangeConfig {
            x: r.x,
            y: r.y,
            theta_deg: [-120.0, -60.0],
        }
    }
}

impl RangeConfig {
    pub fn to_range(&self) -> Result<BaseRange> {
        BaseRange::new(
            self.x,
            self.y,
            [self.theta_deg[0].to_radians(), self.theta_deg[1].to_radians()],
        )
        .map_err(|e| Error::config("base_range", e.to_string()))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScoringConfig {
    /// Weight of unvisited voxels in the final score.
    pub alpha: f64,
    /// Per-joint weights of the joint margin score; uniform when absent.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub joint_weights: Option<Vec<f64>>,
}

impl Default for ScoringConfig {
    fn default() -> Self {
        ScoringConfig {
            alpha: 0.0,
            joint_weights: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TraceConfig {
    pub n_samples: usize,
    /// "L" or "R".
    pub arm: String,
    pub sample_rate_hz: f64,
    pub synthetic: SyntheticProfileConfig,
    /// Explicit operator profile; replaces `synthetic` when present.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub profile: Option<OperatorProfile>,
}

impl Default for TraceConfig {
    fn default() -> Self {
        TraceConfig {
            n_samples: 18_839,
            arm: "R".into(),
            sample_rate_hz: 30.0,
            synthetic: SyntheticProfileConfig::default(),
            profile: None,
        }
    }
}

/// Parameters of [`OperatorProfile::synthetic`]. `operator` picks the
/// operator; the master seed only drives trace sampling.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SyntheticProfileConfig {
    pub operator: u64,
    pub modes_per_voxel: Vec<usize>,
    pub sigma: f64,
    pub min_separation: f64,
}

impl Default for SyntheticProfileConfig {
    fn default() -> Self {
        SyntheticProfileConfig {
            operator: 1,
            modes_per_voxel: vec![1, 2, 3, 2, 1, 2],
            sigma: 0.05,
            min_separation: 0.6,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SamplingConfig {
    pub m: usize,
}

impl Default for SamplingConfig {
    fn default() -> Self {
        SamplingConfig { m: 20_000 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MlpConfig {
    pub widths: Vec<usize>,
    pub learning_rate: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub holdout_fraction: f64,
}

impl Default for MlpConfig {
    fn default() -> Self {
        MlpConfig {
            widths: DEFAULT_WIDTHS.to_vec(),
            learning_rate: 1e-4,
            epochs: 5000,
            batch_size: 256,
            holdout_fraction: 0.1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LassoConfig {
    /// Also fit the linear baseline during `train` and report its metrics.
    pub compare: bool,
    pub penalty: f64,
    pub max_sweeps: usize,
    pub tolerance: f64,
}

impl Default for LassoConfig {
    fn default() -> Self {
        let p = LassoParams::default();
        LassoConfig {
            compare: true,
            penalty: p.penalty,
            max_sweeps: p.max_sweeps,
            tolerance: p.tolerance,
        }
    }
}

/// Either explicit steps or explicit per-axis point counts; counts win when
/// both are given.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GridConfig {
    pub step_x: f64,
    pub step_y: f64,
    pub step_theta_deg: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub counts: Option<[usize; 3]>,
}

impl Default for GridConfig {
    fn default() -> Self {
        GridConfig {
            step_x: 0.005,
            step_y: 0.005,
            step_theta_deg: 0.5,
            counts: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScoreMapConfig {
    pub theta_deg: f64,
}

impl Default for ScoreMapConfig {
    fn default() -> Self {
        ScoreMapConfig { theta_deg: -90.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvaluationConfig {
    pub n_random: usize,
}

impl Default for EvaluationConfig {
    fn default() -> Self {
        EvaluationConfig { n_random: 1000 }
    }
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            seed: 0,
            workspace: WorkspaceConfig::default(),
            robot: RobotConfig::default(),
            base_range: RangeConfig::default(),
            scoring: ScoringConfig::default(),
            pattern: PatternConfig::default(),
            traces: TraceConfig::default(),
            sampling: SamplingConfig::default(),
            mlp: MlpConfig::default(),
            lasso: LassoConfig::default(),
            grid: GridConfig::default(),
            score_map: ScoreMapConfig::default(),
            evaluation: EvaluationConfig::default(),
        }
    }
}

/// Pipeline stages with independent random streams.
#[derive(Debug, Clone, Copy)]
pub enum Stage {
    Traces,
    Sampling,
    Split,
    Training,
    Evaluation,
}

impl RunConfig {
    /// Parses a TOML document, applying `overrides` (`dotted.path=value`)
    /// before validation.
    pub fn from_toml_str(text: &str, overrides: &[String]) -> Result<Self> {
        let mut table: toml::Table =
            toml::from_str(text).map_err(|e| Error::config("config", e.message().to_string()))?;
        for o in overrides {
            apply_override(&mut table, o)?;
        }
        let cfg: RunConfig = toml::Value::Table(table)
            .try_into()
            .map_err(|e: toml::de::Error| Error::config("config", e.message().to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Loads `path`, or the defaults when `None`.
    pub fn load(path: Option<&Path>, overrides: &[String]) -> Result<Self> {
        let text = match path {
            Some(p) => std::fs::read_to_string(p).map_err(|e| Error::io(p, e))?,
            None => String::new(),
        };
        RunConfig::from_toml_str(&text, overrides)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    /// SHA-256 of the canonical serialization.
    pub fn digest(&self) -> String {
        hex::encode(Sha256::digest(self.to_toml_string().as_bytes()))
    }

    pub fn stage_seed(&self, stage: Stage) -> u64 {
        // splitmix64 finalizer over seed and stage tag
        let mut z = self.seed ^ (stage as u64 + 1).wrapping_mul(0x9e37_79b9_7f4a_7c15);
        z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
        z ^ (z >> 31)
    }

    pub fn validate(&self) -> Result<()> {
        self.workspace()?;
        self.kinematic_model()?;
        self.base_range()?;
        self.joint_weights()?;
        self.grid()?;
        if !(0.0..=1.0).contains(&self.scoring.alpha) {
            return Err(Error::config("scoring.alpha", "must lie in [0, 1]"));
        }
        self.pattern.validate()?;
        if self.traces.n_samples == 0 {
            return Err(Error::config("traces.n_samples", "must be at least 1"));
        }
        if self.traces.arm != "L" && self.traces.arm != "R" {
            return Err(Error::config("traces.arm", "must be \"L\" or \"R\""));
        }
        if !(self.traces.sample_rate_hz > 0.0 && self.traces.sample_rate_hz.is_finite()) {
            return Err(Error::config("traces.sample_rate_hz", "must be positive"));
        }
        if let Some(p) = &self.traces.profile {
            p.validate(&self.workspace()?)?;
        } else {
            let s = &self.traces.synthetic;
            if s.modes_per_voxel.is_empty() || s.modes_per_voxel.contains(&0) {
                return Err(Error::config("traces.synthetic.modes_per_voxel", "needs positive mode counts"));
            }
            if !(s.sigma > 0.0 && s.sigma.is_finite()) {
                return Err(Error::config("traces.synthetic.sigma", "must be positive"));
            }
            if !(s.min_separation >= 0.0) {
                return Err(Error::config("traces.synthetic.min_separation", "must be non-negative"));
            }
        }
        if self.sampling.m == 0 {
            return Err(Error::config("sampling.m", "must be at least 1"));
        }
        self.mlp_params().validate()?;
        self.split_params().validate()?;
        if !(self.lasso.penalty >= 0.0 && self.lasso.penalty.is_finite()) {
            return Err(Error::config("lasso.penalty", "must be non-negative"));
        }
        if self.evaluation.n_random == 0 {
            return Err(Error::config("evaluation.n_random", "must be at least 1"));
        }
        Ok(())
    }

    pub fn workspace(&self) -> Result<Workspace> {
        let w = &self.workspace;
        Workspace::new(w.origin, w.dims, w.voxel_size).map_err(|e| Error::config("workspace", e.to_string()))
    }

    pub fn kinematic_model(&self) -> Result<KinematicModel> {
        let model = match &self.robot.model {
            Some(p) => {
                if !p.exists() {
                    return Err(Error::config("robot.model", format!("{} does not exist", p.display())));
                }
                KinematicModel::load(p)?
            }
            None => KinematicModel::reference(),
        };
        Ok(match self.robot.base_height {
            Some(h) if h.is_finite() => model.with_base_height(h),
            Some(_) => return Err(Error::config("robot.base_height", "must be finite")),
            None => model,
        })
    }

    pub fn base_range(&self) -> Result<BaseRange> {
        self.base_range.to_range()
    }

    pub fn joint_weights(&self) -> Result<JointWeights> {
        let dof = self.kinematic_model()?.dof();
        match &self.scoring.joint_weights {
            None => Ok(JointWeights::uniform(dof)),
            Some(w) if w.len() != dof => Err(Error::config(
                "scoring.joint_weights",
                format!("expected {dof} weights, got {}", w.len()),
            )),
            Some(w) => JointWeights::new(w.clone()).map_err(|e| Error::config("scoring.joint_weights", e.to_string())),
        }
    }

    pub fn grid(&self) -> Result<GridSpec> {
        let range = self.base_range()?;
        let g = &self.grid;
        match g.counts {
            Some(c) => GridSpec::from_counts(range, c),
            None => GridSpec::new(range, g.step_x, g.step_y, g.step_theta_deg.to_radians()),
        }
    }

    pub fn operator_profile(&self) -> Result<OperatorProfile> {
        let ws = self.workspace()?;
        let profile = match &self.traces.profile {
            Some(p) => p.clone(),
            None => {
                let s = &self.traces.synthetic;
                OperatorProfile::synthetic(&ws, &s.modes_per_voxel, s.sigma, s.min_separation, s.operator)
            }
        };
        profile.validate(&ws)?;
        Ok(profile)
    }

    pub fn mlp_params(&self) -> MlpParams {
        MlpParams {
            widths: self.mlp.widths.clone(),
            learning_rate: self.mlp.learning_rate,
            epochs: self.mlp.epochs,
            batch_size: self.mlp.batch_size,
            seed: self.stage_seed(Stage::Training),
        }
    }

    pub fn split_params(&self) -> SplitParams {
        SplitParams {
            holdout_fraction: self.mlp.holdout_fraction,
            seed: self.stage_seed(Stage::Split),
        }
    }

    pub fn lasso_params(&self) -> LassoParams {
        LassoParams {
            penalty: self.lasso.penalty,
            max_sweeps: self.lasso.max_sweeps,
            tolerance: self.lasso.tolerance,
        }
    }
}

/// Applies `a.b.c=value` to a TOML table. The value is parsed as a TOML
/// literal and falls back to a bare string.
pub fn apply_override(table: &mut toml::Table, spec: &str) -> Result<()> {
    let (path, raw) = spec
        .split_once('=')
        .ok_or_else(|| Error::config(spec, "override must look like dotted.path=value"))?;
    let path = path.trim();
    let keys: Vec<&str> = path.split('.').collect();
    if keys.iter().any(|k| k.is_empty()) {
        return Err(Error::config(path, "empty key in dotted path"));
    }
    let value = parse_value(raw.trim());
    let mut cur = table;
    for k in &keys[..keys.len() - 1] {
        let entry = cur
            .entry(k.to_string())
            .or_insert_with(|| toml::Value::Table(toml::Table::new()));
        cur = entry
            .as_table_mut()
            .ok_or_else(|| Error::config(path, format!("`{k}` is not a table")))?;
    }
    cur.insert(keys[keys.len() - 1].to_string(), value);
    Ok(())
}

fn parse_value(raw: &str) -> toml::Value {
    let doc = format!("v = {raw}");
    match toml::from_str::<toml::Table>(&doc) {
        Ok(mut t) => t.remove("v").expect("key present"),
        Err(_) => toml::Value::String(raw.to_string()),
    }
}
