//! Surrogate models of the placement score over base poses.
//!
//! Inputs are mapped per axis onto `[-1, 1]` using the sampling range; the
//! same mapping is stored with the model and reused at prediction time.

mod lasso;
mod mlp;

use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use lasso::{LassoParams, LassoRegressor};
pub use mlp::{DenseLayer, Gradients, MlpParams, MlpRegressor, Network, TrainingInfo, DEFAULT_WIDTHS};

use crate::dataset::{BaseRange, Sample, SampleSet};
use crate::error::{Error, Result};
use crate::geometry::BasePose;

pub const MODEL_FORMAT_VERSION: u32 = 1;

/// Affine per-axis map from a [`BaseRange`] onto the unit cube `[-1, 1]^3`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Normalizer {
    pub range: BaseRange,
}

const EXTRAPOLATION_SLACK: f64 = 1e-12;

impl Normalizer {
    pub fn new(range: BaseRange) -> Self {
        Normalizer { range }
    }

    pub fn normalize(&self, b: &BasePose) -> [f64; 3] {
        let axes = self.range.axes();
        let v = [b.x, b.y, b.theta];
        std::array::from_fn(|j| {
            let [lo, hi] = axes[j];
            if hi > lo {
                2.0 * (v[j] - lo) / (hi - lo) - 1.0
            } else {
                0.0
            }
        })
    }

    pub fn denormalize(&self, u: &[f64; 3]) -> BasePose {
        let axes = self.range.axes();
        let v: [f64; 3] = std::array::from_fn(|j| {
            let [lo, hi] = axes[j];
            lo + 0.5 * (u[j] + 1.0) * (hi - lo)
        });
        BasePose {
            x: v[0],
            y: v[1],
            theta: v[2],
        }
    }

    pub fn is_extrapolated(&self, u: &[f64; 3]) -> bool {
        u.iter().any(|c| c.abs() > 1.0 + EXTRAPOLATION_SLACK)
    }
}

/// Zero-mean, unit-variance target transform. A constant target gets a zero
/// scale, so the inverse returns the mean whatever the network outputs.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Standardizer {
    pub mean: f64,
    pub std: f64,
}

impl Standardizer {
    pub fn fit(values: impl Iterator<Item = f64> + Clone) -> Self {
        let n = values.clone().count().max(1) as f64;
        let mean = values.clone().sum::<f64>() / n;
        let var = values.map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
        let std = var.sqrt();
        Standardizer {
            mean,
            std: if std > 1e-12 * mean.abs().max(1.0) { std } else { 0.0 },
        }
    }

    pub fn forward(&self, v: f64) -> f64 {
        if self.std > 0.0 {
            (v - self.mean) / self.std
        } else {
            0.0
        }
    }

    pub fn inverse(&self, z: f64) -> f64 {
        z * self.std + self.mean
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Regressor {
    Mlp(MlpRegressor),
    Lasso(LassoRegressor),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Prediction {
    pub score: f64,
    /// The query lies outside the training range.
    pub extrapolated: bool,
}

impl Regressor {
    pub fn kind(&self) -> &'static str {
        match self {
            Regressor::Mlp(_) => "mlp",
            Regressor::Lasso(_) => "lasso",
        }
    }

    pub fn normalizer(&self) -> &Normalizer {
        match self {
            Regressor::Mlp(m) => &m.normalizer,
            Regressor::Lasso(m) => &m.normalizer,
        }
    }

    pub fn predict_normalized(&self, u: &[f64; 3]) -> f64 {
        match self {
            Regressor::Mlp(m) => m.predict_normalized(u),
            Regressor::Lasso(m) => m.predict_normalized(u),
        }
    }

    pub fn predict(&self, base: &BasePose) -> Prediction {
        let u = self.normalizer().normalize(base);
        Prediction {
            score: self.predict_normalized(&u),
            extrapolated: self.normalizer().is_extrapolated(&u),
        }
    }

    /// Parallel over rows; each value equals the corresponding single
    /// [`Regressor::predict`] bit for bit.
    pub fn predict_many(&self, bases: &[BasePose]) -> Vec<f64> {
        bases.par_iter().map(|b| self.predict(b).score).collect()
    }

    /// Writes the model file; `config_digest` records the run configuration.
    pub fn save(&self, path: &Path, config_digest: Option<&str>) -> Result<()> {
        let doc = ModelDocument {
            format_version: MODEL_FORMAT_VERSION,
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
            config_digest: config_digest.map(str::to_string),
            model: self.clone(),
        };
        let text = serde_json::to_string_pretty(&doc)?;
        std::fs::write(path, text).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Regressor::from_json(&text)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let value: serde_json::Value = serde_json::from_str(text)?;
        match value.get("format_version").and_then(|v| v.as_u64()) {
            Some(v) if v == MODEL_FORMAT_VERSION as u64 => {}
            Some(v) => {
                return Err(Error::ModelFile(format!(
                    "format_version {v} is not supported (expected {MODEL_FORMAT_VERSION})"
                )))
            }
            None => return Err(Error::ModelFile("missing format_version".into())),
        }
        let doc: ModelDocument = serde_json::from_value(value).map_err(|e| Error::ModelFile(e.to_string()))?;
        if let Regressor::Mlp(m) = &doc.model {
            m.check_shape()?;
        }
        Ok(doc.model)
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct ModelDocument {
    format_version: u32,
    tool_version: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    config_digest: Option<String>,
    #[serde(flatten)]
    model: Regressor,
}

/// Root-mean-square error and population standard deviation of the
/// residuals `prediction - truth`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub rmse: f64,
    pub sd: f64,
    pub n: usize,
}

impl EvalReport {
    pub fn from_residuals(residuals: &[f64]) -> Result<Self> {
        if residuals.is_empty() {
            return Err(Error::NoSamples);
        }
        let n = residuals.len() as f64;
        let mean = residuals.iter().sum::<f64>() / n;
        let mse = residuals.iter().map(|r| r * r).sum::<f64>() / n;
        let var = residuals.iter().map(|r| (r - mean) * (r - mean)).sum::<f64>() / n;
        Ok(EvalReport {
            rmse: mse.sqrt(),
            sd: var.sqrt(),
            n: residuals.len(),
        })
    }
}

pub fn evaluate(model: &Regressor, rows: &[Sample]) -> Result<EvalReport> {
    let bases: Vec<BasePose> = rows.iter().map(|r| r.base).collect();
    let pred = model.predict_many(&bases);
    let residuals: Vec<f64> = pred.iter().zip(rows).map(|(p, r)| p - r.score).collect();
    EvalReport::from_residuals(&residuals)
}

/// Seeded shuffle split; returns `(train, test)` with the test part holding
/// `round(fraction * n)` rows, at least one of each when `n >= 2`.
pub fn split_holdout(rows: &[Sample], fraction: f64, seed: u64) -> (Vec<Sample>, Vec<Sample>) {
    let n = rows.len();
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let mut n_test = (fraction * n as f64).round() as usize;
    if n >= 2 {
        n_test = n_test.clamp(1, n - 1);
    } else {
        n_test = 0;
    }
    let (test_idx, train_idx) = idx.split_at(n_test);
    let mut test_idx = test_idx.to_vec();
    let mut train_idx = train_idx.to_vec();
    test_idx.sort_unstable();
    train_idx.sort_unstable();
    (
        train_idx.iter().map(|&i| rows[i]).collect(),
        test_idx.iter().map(|&i| rows[i]).collect(),
    )
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SplitParams {
    pub holdout_fraction: f64,
    pub seed: u64,
}

impl Default for SplitParams {
    fn default() -> Self {
        SplitParams {
            holdout_fraction: 0.1,
            seed: 0,
        }
    }
}

impl SplitParams {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..1.0).contains(&self.holdout_fraction) {
            return Err(Error::config("split.holdout_fraction", "must lie in [0, 1)"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct Trained {
    pub model: Regressor,
    /// Held-out metrics; `None` when the split leaves no test rows.
    pub holdout: Option<EvalReport>,
    pub train_rows: usize,
    pub test_rows: usize,
}

fn finish(model: Regressor, train: &[Sample], test: &[Sample]) -> Result<Trained> {
    let holdout = if test.is_empty() { None } else { Some(evaluate(&model, test)?) };
    Ok(Trained {
        model,
        holdout,
        train_rows: train.len(),
        test_rows: test.len(),
    })
}

pub fn train_mlp(data: &SampleSet, params: &MlpParams, split: &SplitParams) -> Result<Trained> {
    split.validate()?;
    if data.is_empty() {
        return Err(Error::NoSamples);
    }
    let (train, test) = split_holdout(&data.rows, split.holdout_fraction, split.seed);
    let model = Regressor::Mlp(MlpRegressor::fit(&train, &data.meta.range, params)?);
    finish(model, &train, &test)
}

pub fn train_lasso(data: &SampleSet, params: &LassoParams, split: &SplitParams) -> Result<Trained> {
    split.validate()?;
    if data.len() < 4 {
        return Err(Error::NoSamples);
    }
    if !(params.penalty >= 0.0 && params.penalty.is_finite()) {
        return Err(Error::config("lasso.penalty", "must be non-negative"));
    }
    let (train, test) = split_holdout(&data.rows, split.holdout_fraction, split.seed);
    let model = Regressor::Lasso(LassoRegressor::fit(&train, &data.meta.range, params));
    finish(model, &train, &test)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn range() -> BaseRange {
        BaseRange::right_arm()
    }

    fn rows_from(f: impl Fn(&BasePose) -> f64, m: usize, seed: u64) -> SampleSet {
        let rows = crate::dataset::sample_bases(&range(), m, seed)
            .into_iter()
            .map(|b| Sample { base: b, score: f(&b) })
            .collect();
        SampleSet::from_rows(rows, range(), seed)
    }

    #[test]
    fn normalizer_maps_corners() {
        let n = Normalizer::new(range());
        let r = range();
        let lo = n.normalize(&BasePose {
            x: r.x[0],
            y: r.y[0],
            theta: r.theta[0],
        });
        let hi = n.normalize(&BasePose {
            x: r.x[1],
            y: r.y[1],
            theta: r.theta[1],
        });
        assert_eq!(lo, [-1.0; 3]);
        assert_eq!(hi, [1.0; 3]);
        assert!(!n.is_extrapolated(&hi));
        assert!(n.is_extrapolated(&n.normalize(&BasePose { x: r.x[1] + 0.1, ..BasePose::new(0.0, 0.0, -1.5) })));
    }

    proptest! {
        #[test]
        fn normalizer_round_trip(x in 1.188f64..1.888, y in -0.212f64..0.488, t in -2.09f64..-1.05) {
            let n = Normalizer::new(range());
            let b = n.denormalize(&n.normalize(&BasePose { x, y, theta: t }));
            prop_assert!((b.x - x).abs() < 1e-12 && (b.y - y).abs() < 1e-12 && (b.theta - t).abs() < 1e-12);
        }
    }

    #[test]
    fn eval_report_examples() {
        let r = EvalReport::from_residuals(&[1.0, -1.0]).unwrap();
        assert_eq!((r.rmse, r.sd), (1.0, 1.0));
        let r = EvalReport::from_residuals(&[2.0, 2.0, 2.0]).unwrap();
        assert_eq!((r.rmse, r.sd), (2.0, 0.0));
        assert!(matches!(EvalReport::from_residuals(&[]), Err(Error::NoSamples)));
    }

    #[test]
    fn split_is_seeded_and_disjoint() {
        let data = rows_from(|b| b.x, 100, 1);
        let (a, b) = split_holdout(&data.rows, 0.1, 3);
        assert_eq!((a.len(), b.len()), (90, 10));
        for s in &b {
            assert!(!a.contains(s));
        }
        let (a2, _) = split_holdout(&data.rows, 0.1, 3);
        assert_eq!(a, a2);
        let (a3, _) = split_holdout(&data.rows, 0.1, 4);
        assert_ne!(a, a3);
    }

    #[test]
    fn mlp_learns_constant_target() {
        let data = rows_from(|_| 42.0, 200, 2);
        let params = MlpParams {
            widths: vec![3, 8, 8, 1],
            epochs: 20,
            ..Default::default()
        };
        let t = train_mlp(&data, &params, &SplitParams::default()).unwrap();
        for s in &data.rows {
            assert_eq!(t.model.predict(&s.base).score, 42.0);
        }
        assert!(t.holdout.unwrap().rmse <= 1e-2 * 42.0);
    }

    #[test]
    fn mlp_loss_drops_on_smooth_field() {
        let data = rows_from(|b| 10.0 * b.x - 5.0 * b.y + (2.0 * b.theta).sin(), 1000, 5);
        let params = MlpParams {
            widths: vec![3, 16, 16, 1],
            epochs: 60,
            learning_rate: 3e-3,
            ..Default::default()
        };
        let t = train_mlp(&data, &params, &SplitParams::default()).unwrap();
        let Regressor::Mlp(m) = &t.model else { unreachable!() };
        let h = &m.training.loss_history;
        assert_eq!(h.len(), 60);
        assert!(h[59] * 10.0 < h[0], "{} -> {}", h[0], h[59]);
        assert!(t.holdout.unwrap().rmse < 0.3);
    }

    #[test]
    fn training_is_deterministic() {
        let data = rows_from(|b| b.x * b.y, 300, 6);
        let params = MlpParams {
            widths: vec![3, 8, 1],
            epochs: 5,
            ..Default::default()
        };
        let a = train_mlp(&data, &params, &SplitParams::default()).unwrap();
        let b = train_mlp(&data, &params, &SplitParams::default()).unwrap();
        assert_eq!(a.model, b.model);
    }

    #[test]
    fn diverging_learning_rate_is_reported() {
        let data = rows_from(|b| 1e3 * b.x, 200, 7);
        let params = MlpParams {
            widths: vec![3, 8, 1],
            epochs: 50,
            learning_rate: 1e300,
            ..Default::default()
        };
        assert!(matches!(
            train_mlp(&data, &params, &SplitParams::default()),
            Err(Error::Training(_))
        ));
    }

    #[test]
    fn lasso_requires_four_rows() {
        let data = rows_from(|b| b.x, 3, 1);
        assert!(matches!(
            train_lasso(&data, &LassoParams::default(), &SplitParams::default()),
            Err(Error::NoSamples)
        ));
    }

    #[test]
    fn model_file_round_trip_is_exact() {
        let dir = tempfile::tempdir().unwrap();
        let data = rows_from(|b| b.x + b.theta, 100, 8);
        let mlp = train_mlp(
            &data,
            &MlpParams {
                widths: vec![3, 6, 5, 1],
                epochs: 3,
                ..Default::default()
            },
            &SplitParams::default(),
        )
        .unwrap()
        .model;
        let lasso = train_lasso(&data, &LassoParams::default(), &SplitParams::default()).unwrap().model;
        for model in [mlp, lasso] {
            let path = dir.path().join(format!("{}.json", model.kind()));
            model.save(&path, None).unwrap();
            let back = Regressor::load(&path).unwrap();
            assert_eq!(back, model);
            for s in &data.rows {
                assert_eq!(back.predict(&s.base).score.to_bits(), model.predict(&s.base).score.to_bits());
            }
        }
    }

    #[test]
    fn wrong_format_version_is_rejected() {
        let data = rows_from(|b| b.x, 50, 9);
        let model = train_lasso(&data, &LassoParams::default(), &SplitParams::default()).unwrap().model;
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.json");
        model.save(&path, None).unwrap();
        let text = std::fs::read_to_string(&path).unwrap().replace("\"format_version\": 1", "\"format_version\": 2");
        assert!(matches!(Regressor::from_json(&text), Err(Error::ModelFile(_))));
    }

    #[test]
    fn predict_many_matches_single() {
        let data = rows_from(|b| b.y, 64, 10);
        let model = train_mlp(
            &data,
            &MlpParams {
                widths: vec![3, 8, 8, 1],
                epochs: 2,
                ..Default::default()
            },
            &SplitParams::default(),
        )
        .unwrap()
        .model;
        let bases: Vec<BasePose> = data.rows.iter().map(|r| r.base).collect();
        let many = model.predict_many(&bases);
        for (b, v) in bases.iter().zip(many) {
            assert_eq!(model.predict(b).score.to_bits(), v.to_bits());
        }
    }
}
