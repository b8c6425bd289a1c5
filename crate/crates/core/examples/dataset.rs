//! Scored base-pose samples for a representative set, written as CSV.
//!
//!     cargo run --release --example dataset -- /tmp/data.csv

use baseplace::dataset::{build_dataset, write_rows_csv, BaseRange};
use baseplace::kinematics::KinematicModel;
use baseplace::pattern::{representative_poses, voxelize, PatternConfig, Workspace};
use baseplace::scoring::JointWeights;
use baseplace::tracegen::{generate_traces, OperatorProfile};

fn main() {
    let out = std::env::args().nth(1).unwrap_or_else(|| "data.csv".into());
    let ws = Workspace::new([1.45, -0.91, 0.03], [0.2, 0.1, 0.1], 0.02).unwrap();
    let profile = OperatorProfile::synthetic(&ws, &[1, 2, 3, 2, 1, 2], 0.05, 0.6, 1);
    let traces = generate_traces(&profile, &ws, 18_839, 1).unwrap();
    let set = representative_poses(&voxelize(&traces, &ws), &PatternConfig::default());

    let arm = KinematicModel::reference();
    let data = build_dataset(&arm, &set, &BaseRange::right_arm(), 2000, 5, 0.0, &JointWeights::uniform(6)).unwrap();
    write_rows_csv(out.as_ref(), &data.rows).unwrap();

    let scores: Vec<f64> = data.rows.iter().map(|r| r.score).collect();
    let max = scores.iter().copied().fold(f64::MIN, f64::max);
    let mean = scores.iter().sum::<f64>() / scores.len() as f64;
    let zeros = scores.iter().filter(|s| **s == 0.0).count();
    println!("{} rows over {} entries -> {out}", data.len(), set.len());
    println!("score mean {mean:.2}, max {max:.2}, unreachable rows {zeros}");
}
