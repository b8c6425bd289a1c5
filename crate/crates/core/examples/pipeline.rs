//! Full pipeline for one synthetic operator through the command functions:
//! traces, analysis, sampling, training, grid search and the random baseline.
//!
//!     cargo run --release --example pipeline -- /tmp/run 200

use std::path::PathBuf;

use baseplace::cli::{self, EvalTarget};
use baseplace::config::RunConfig;

fn main() {
    let mut args = std::env::args().skip(1);
    let dir = PathBuf::from(args.next().unwrap_or_else(|| "pipeline-out".into()));
    let epochs: usize = args.next().map_or(200, |s| s.parse().unwrap());
    std::fs::create_dir_all(&dir).unwrap();
    let p = |name: &str| dir.join(name);

    let mut cfg = RunConfig::default();
    cfg.mlp.epochs = epochs;
    cfg.grid.counts = Some([71, 71, 61]);

    let n = cli::cmd_gen_traces(&cfg, &p("traces.jsonl")).unwrap();
    let set = cli::cmd_analyze(&cfg, &p("traces.jsonl"), &p("set.json")).unwrap().set;
    println!("{n} samples -> {} representative poses", set.len());

    let data = cli::cmd_sample(&cfg, &p("set.json"), &p("data.csv")).unwrap();
    println!("{} scored base poses", data.len());

    let report = cli::cmd_train(&cfg, &p("data.csv"), &p("model.json")).unwrap();
    if let (Some(m), Some(l)) = (&report.mlp, &report.lasso) {
        println!("held-out rmse: mlp {:.3}, lasso {:.3}", m.rmse, l.rmse);
    }

    let best = cli::cmd_optimize(&cfg, &p("model.json"), &p("optim.json")).unwrap();
    println!(
        "best base x={:.3} y={:.3} theta={:.1}° predicted {:.2}",
        best.best.x,
        best.best.y,
        best.best.theta.to_degrees(),
        best.best_score
    );

    // a second session of the same operator serves as the test set
    let mut test = cfg.clone();
    test.seed = cfg.seed + 100;
    cli::cmd_gen_traces(&test, &p("test.jsonl")).unwrap();
    cli::cmd_analyze(&test, &p("test.jsonl"), &p("test.json")).unwrap();
    let r = cli::cmd_evaluate(&cfg, &EvalTarget::Pose(best.best), &p("test.json"), Some(&p("eval.json"))).unwrap();
    println!(
        "true score {:.2} vs random {:.2} ± {:.2}: {:+.1}%",
        r.optimal_score, r.random_mean, r.random_sd, r.improvement_pct
    );
}
