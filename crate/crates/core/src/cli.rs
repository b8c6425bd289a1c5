//! Pipeline commands. Each one reads its inputs, runs one stage, and writes
//! its outputs; the `baseplace` binary is a thin argument parser over these.
//!
//! JSON outputs carry `format_version`, `tool_version` and `config_digest`.

use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::config::{RunConfig, Stage};
use crate::dataset::{build_dataset, read_rows_csv, write_rows_csv, BaseRange, SampleMeta, SampleSet};
use crate::error::{Error, Result};
use crate::geometry::BasePose;
use crate::optimizer::{evaluate_against_random, export_score_map, grid_search, BaselineReport, OptimResult};
use crate::pattern::{representative_poses, visit_ranking, voxelize, RepresentativeSet};
use crate::regression::{train_lasso, train_mlp, EvalReport, Regressor};
use crate::tracefile::{read_poses, write_traces};
use crate::tracegen::generate_traces;

pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Serialize, Deserialize)]
pub struct Document<T> {
    pub format_version: u32,
    pub tool_version: String,
    pub config_digest: String,
    #[serde(flatten)]
    pub body: T,
}

pub fn write_document<T: Serialize>(path: &Path, cfg: &RunConfig, body: T) -> Result<()> {
    let doc = Document {
        format_version: FORMAT_VERSION,
        tool_version: env!("CARGO_PKG_VERSION").to_string(),
        config_digest: cfg.digest(),
        body,
    };
    let mut text = serde_json::to_string_pretty(&doc)?;
    text.push('\n');
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

pub fn read_document<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let doc: Document<T> = serde_json::from_str(&text).map_err(|e| Error::Parse {
        path: path.to_path_buf(),
        line: e.line(),
        reason: e.to_string(),
    })?;
    if doc.format_version != FORMAT_VERSION {
        return Err(Error::Parse {
            path: path.to_path_buf(),
            line: 1,
            reason: format!("format_version {} is not supported", doc.format_version),
        });
    }
    Ok(doc.body)
}

/// `<path><suffix>`, e.g. `set.json.visits.csv`.
pub fn sidecar(path: &Path, suffix: &str) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(suffix);
    PathBuf::from(s)
}

pub fn cmd_gen_traces(cfg: &RunConfig, out: &Path) -> Result<usize> {
    let profile = cfg.operator_profile()?;
    let ws = cfg.workspace()?;
    let poses = generate_traces(&profile, &ws, cfg.traces.n_samples, cfg.stage_seed(Stage::Traces))?;
    write_traces(out, &poses, &cfg.traces.arm, cfg.traces.sample_rate_hz)?;
    Ok(poses.len())
}

#[derive(Debug, Clone, PartialEq)]
pub struct AnalyzeOutcome {
    pub set: RepresentativeSet,
    /// Set when most samples fall outside the workspace.
    pub warning: Option<String>,
}

pub fn analyze_traces(cfg: &RunConfig, traces: &Path) -> Result<(RepresentativeSet, crate::pattern::Voxelization)> {
    let poses = read_poses(traces, &cfg.traces.arm)?;
    if poses.is_empty() {
        return Err(Error::NoSamples);
    }
    let vox = voxelize(&poses, &cfg.workspace()?);
    let set = representative_poses(&vox, &cfg.pattern);
    Ok((set, vox))
}

pub fn cmd_analyze(cfg: &RunConfig, traces: &Path, out: &Path) -> Result<AnalyzeOutcome> {
    let (set, vox) = analyze_traces(cfg, traces)?;
    let outside = vox.out_of_workspace as f64 / vox.total_samples.max(1) as f64;
    let warning = (outside > 0.5).then(|| {
        format!(
            "{:.1}% of samples fall outside the workspace; check workspace.origin",
            100.0 * outside
        )
    });
    write_document(out, cfg, &set)?;
    let mut w = csv::Writer::from_path(sidecar(out, ".visits.csv"))?;
    w.write_record(["voxel_id", "x", "y", "z", "visits"])?;
    for (id, c, n) in visit_ranking(&vox) {
        w.write_record([id.to_string(), c[0].to_string(), c[1].to_string(), c[2].to_string(), n.to_string()])?;
    }
    w.flush().map_err(|e| Error::io(out, e))?;
    Ok(AnalyzeOutcome { set, warning })
}

pub fn read_repset(path: &Path) -> Result<RepresentativeSet> {
    read_document(path)
}

pub fn cmd_sample(cfg: &RunConfig, repset: &Path, out: &Path) -> Result<SampleSet> {
    let set = read_repset(repset)?;
    let data = build_dataset(
        &cfg.kinematic_model()?,
        &set,
        &cfg.base_range()?,
        cfg.sampling.m,
        cfg.stage_seed(Stage::Sampling),
        cfg.scoring.alpha,
        &cfg.joint_weights()?,
    )?;
    write_rows_csv(out, &data.rows)?;
    write_document(&sidecar(out, ".meta.json"), cfg, &data.meta)?;
    Ok(data)
}

/// Reads a dataset and its `.meta.json` sidecar; without the sidecar the
/// configured range is assumed.
pub fn read_dataset(cfg: &RunConfig, path: &Path) -> Result<SampleSet> {
    let rows = read_rows_csv(path)?;
    let meta_path = sidecar(path, ".meta.json");
    if meta_path.exists() {
        let meta: SampleMeta = read_document(&meta_path)?;
        if meta.rows != rows.len() {
            return Err(Error::Parse {
                path: meta_path,
                line: 1,
                reason: format!("metadata lists {} rows, dataset has {}", meta.rows, rows.len()),
            });
        }
        Ok(SampleSet { rows, meta })
    } else {
        Ok(SampleSet::from_rows(rows, cfg.base_range()?, cfg.stage_seed(Stage::Sampling)))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub train_rows: usize,
    pub test_rows: usize,
    pub mlp: Option<EvalReport>,
    pub mlp_final_loss: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub lasso: Option<EvalReport>,
}

/// Trains the MLP (and the LASSO baseline when enabled). Writes the model
/// to `out` and the metrics to `<out>.report.json`.
pub fn cmd_train(cfg: &RunConfig, dataset: &Path, out: &Path) -> Result<TrainReport> {
    let data = read_dataset(cfg, dataset)?;
    if data.len() < 10 {
        return Err(Error::NoSamples);
    }
    let split = cfg.split_params();
    let mlp = train_mlp(&data, &cfg.mlp_params(), &split)?;
    let lasso = if cfg.lasso.compare {
        let l = train_lasso(&data, &cfg.lasso_params(), &split)?;
        l.model.save(&sidecar(out, ".lasso.json"), Some(&cfg.digest()))?;
        l.holdout
    } else {
        None
    };
    mlp.model.save(out, Some(&cfg.digest()))?;
    let final_loss = match &mlp.model {
        Regressor::Mlp(m) => m.training.loss_history.last().copied().unwrap_or(f64::NAN),
        Regressor::Lasso(_) => f64::NAN,
    };
    let report = TrainReport {
        train_rows: mlp.train_rows,
        test_rows: mlp.test_rows,
        mlp: mlp.holdout,
        mlp_final_loss: final_loss,
        lasso,
    };
    write_document(&sidecar(out, ".report.json"), cfg, &report)?;
    Ok(report)
}

/// Loads a model and checks that it was trained on the configured range.
pub fn load_model(cfg: &RunConfig, path: &Path) -> Result<Regressor> {
    let model = Regressor::load(path)?;
    let trained = model.normalizer().range;
    let configured = cfg.base_range()?;
    if !ranges_match(&trained, &configured) {
        return Err(Error::config(
            "base_range",
            format!("model was trained on {trained:?}, config asks for {configured:?}"),
        ));
    }
    Ok(model)
}

fn ranges_match(a: &BaseRange, b: &BaseRange) -> bool {
    a.axes()
        .iter()
        .flatten()
        .zip(b.axes().iter().flatten())
        .all(|(u, v)| (u - v).abs() <= 1e-9)
}

pub fn cmd_optimize(cfg: &RunConfig, model: &Path, out: &Path) -> Result<OptimResult> {
    let model = load_model(cfg, model)?;
    let result = grid_search(&model, &cfg.grid()?);
    write_document(out, cfg, &result)?;
    Ok(result)
}

/// Writes the fixed-theta slice as CSV; returns the row count.
pub fn cmd_score_map(cfg: &RunConfig, model: &Path, out: &Path) -> Result<usize> {
    let model = load_model(cfg, model)?;
    let rows = export_score_map(&model, &cfg.grid()?, cfg.score_map.theta_deg.to_radians())
        .map_err(|e| Error::config("score_map.theta_deg", e.to_string()))?;
    write_rows_csv(out, &rows)?;
    Ok(rows.len())
}

#[derive(Debug, Clone, PartialEq)]
pub enum EvalTarget {
    /// Grid-search this model and evaluate its optimum.
    Model(PathBuf),
    Pose(BasePose),
}

impl EvalTarget {
    /// A path to an existing file, or `x,y,theta_deg`.
    pub fn parse(s: &str) -> Result<Self> {
        let parts: Vec<&str> = s.split(',').collect();
        if parts.len() == 3 && !Path::new(s).exists() {
            let v: Vec<f64> = parts
                .iter()
                .map(|p| p.trim().parse::<f64>())
                .collect::<std::result::Result<_, _>>()
                .map_err(|e| Error::config("target", format!("bad pose {s:?}: {e}")))?;
            return Ok(EvalTarget::Pose(BasePose {
                x: v[0],
                y: v[1],
                theta: v[2].to_radians(),
            }));
        }
        Ok(EvalTarget::Model(PathBuf::from(s)))
    }
}

pub fn cmd_evaluate(
    cfg: &RunConfig,
    target: &EvalTarget,
    test_repset: &Path,
    out: Option<&Path>,
) -> Result<BaselineReport> {
    let best = match target {
        EvalTarget::Pose(b) => *b,
        EvalTarget::Model(path) => grid_search(&load_model(cfg, path)?, &cfg.grid()?).best,
    };
    let set = read_repset(test_repset)?;
    if set.is_empty() {
        return Err(Error::EmptyRepresentativeSet);
    }
    let report = evaluate_against_random(
        &cfg.kinematic_model()?,
        &set,
        best,
        &cfg.base_range()?,
        cfg.evaluation.n_random,
        cfg.stage_seed(Stage::Evaluation),
        cfg.scoring.alpha,
        &cfg.joint_weights()?,
    )?;
    if let Some(out) = out {
        write_document(out, cfg, &report)?;
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn eval_target_parsing() {
        assert_eq!(
            EvalTarget::parse("1.5, 0.1, -90").unwrap(),
            EvalTarget::Pose(BasePose {
                x: 1.5,
                y: 0.1,
                theta: (-90f64).to_radians()
            })
        );
        assert_eq!(EvalTarget::parse("m.json").unwrap(), EvalTarget::Model("m.json".into()));
        assert!(EvalTarget::parse("a,b,c").is_err());
    }

    #[test]
    fn sidecar_appends() {
        assert_eq!(sidecar(Path::new("out/set.json"), ".visits.csv"), PathBuf::from("out/set.json.visits.csv"));
    }
}
