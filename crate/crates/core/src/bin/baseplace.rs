use std::path::PathBuf;
use std::process::ExitCode;

use baseplace::cli::{self, EvalTarget};
use baseplace::config::RunConfig;
use baseplace::Error;
use clap::{Args, Parser, Subcommand};

#[derive(Parser)]
#[command(name = "baseplace", version, about = "Operator-specific robot base placement")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// TOML run configuration; built-in defaults when omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Overrides `seed`.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Overrides one config field, e.g. `--set grid.step_x=0.01`. Repeatable.
    #[arg(long = "set", value_name = "PATH=VALUE", global = true)]
    sets: Vec<String>,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic operator trace.
    GenTraces {
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        common: Common,
    },
    /// Extract the representative pose set from a trace.
    Analyze {
        traces: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        common: Common,
    },
    /// Score random base poses against a representative set.
    Sample {
        repset: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        common: Common,
    },
    /// Fit the score regressor to a dataset.
    Train {
        dataset: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        common: Common,
    },
    /// Grid-search a trained model for the best base pose.
    Optimize {
        model: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        common: Common,
    },
    /// Export a fixed-theta slice of the score map.
    ScoreMap {
        model: PathBuf,
        /// Overrides `score_map.theta_deg`.
        #[arg(long, allow_hyphen_values = true)]
        theta: Option<f64>,
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        common: Common,
    },
    /// Compare a model's optimum (or a given `x,y,theta_deg`) with random placements.
    Evaluate {
        target: String,
        test_repset: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
        #[command(flatten)]
        common: Common,
    },
}

fn load(common: &Common, extra: &[String]) -> Result<RunConfig, Error> {
    let mut sets = common.sets.clone();
    if let Some(seed) = common.seed {
        sets.push(format!("seed={seed}"));
    }
    sets.extend_from_slice(extra);
    RunConfig::load(common.config.as_deref(), &sets)
}

fn run(cli: Cli) -> Result<(), Error> {
    match cli.command {
        Command::GenTraces { out, common } => {
            let n = cli::cmd_gen_traces(&load(&common, &[])?, &out)?;
            println!("samples={n}");
        }
        Command::Analyze { traces, out, common } => {
            let outcome = cli::cmd_analyze(&load(&common, &[])?, &traces, &out)?;
            if let Some(w) = outcome.warning {
                eprintln!("warning: {w}");
            }
            let s = &outcome.set.summary;
            println!(
                "entries={} voxels_visited={} samples={} out_of_workspace={}",
                outcome.set.len(),
                s.voxels_visited,
                s.total_samples,
                s.out_of_workspace
            );
        }
        Command::Sample { repset, out, common } => {
            let data = cli::cmd_sample(&load(&common, &[])?, &repset, &out)?;
            let zeros = data.rows.iter().filter(|r| r.score == 0.0).count();
            println!("rows={} zero_rows={zeros}", data.len());
        }
        Command::Train { dataset, out, common } => {
            let r = cli::cmd_train(&load(&common, &[])?, &dataset, &out)?;
            if let Some(m) = r.mlp {
                println!("mlp rmse={} sd={} n={}", m.rmse, m.sd, m.n);
            }
            if let Some(l) = r.lasso {
                println!("lasso rmse={} sd={} n={}", l.rmse, l.sd, l.n);
            }
            println!("final_loss={}", r.mlp_final_loss);
        }
        Command::Optimize { model, out, common } => {
            let r = cli::cmd_optimize(&load(&common, &[])?, &model, &out)?;
            println!(
                "best x={} y={} theta_deg={} score={} points={}",
                r.best.x,
                r.best.y,
                r.best.theta.to_degrees(),
                r.best_score,
                r.grid_points_evaluated
            );
        }
        Command::ScoreMap { model, theta, out, common } => {
            let extra: Vec<String> = theta.map(|t| format!("score_map.theta_deg={t:?}")).into_iter().collect();
            let n = cli::cmd_score_map(&load(&common, &extra)?, &model, &out)?;
            println!("rows={n}");
        }
        Command::Evaluate {
            target,
            test_repset,
            out,
            common,
        } => {
            let cfg = load(&common, &[])?;
            let r = cli::cmd_evaluate(&cfg, &EvalTarget::parse(&target)?, &test_repset, out.as_deref())?;
            println!(
                "optimal_score={} random_mean={} random_sd={} n_random={} improvement_pct={}",
                r.optimal_score, r.random_mean, r.random_sd, r.n_random, r.improvement_pct
            );
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let msg = e.to_string().replace('\n', " ");
            eprintln!("error: kind={} msg={msg}", e.kind());
            ExitCode::FAILURE
        }
    }
}
