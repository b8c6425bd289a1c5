//! Grid search over a trained regressor and a fixed-theta score map.
//!
//!     cargo run --release --example optimization

use baseplace::dataset::{sample_bases, BaseRange, Sample, SampleSet};
use baseplace::optimizer::{export_score_map, grid_search, GridSpec};
use baseplace::regression::{train_mlp, MlpParams, Normalizer, SplitParams};

fn main() {
    let range = BaseRange::right_arm();
    let norm = Normalizer::new(range);
    let peak = [0.3, -0.4, 0.2];
    let rows = sample_bases(&range, 6000, 2)
        .into_iter()
        .map(|b| {
            let u = norm.normalize(&b);
            let d2: f64 = (0..3).map(|i| (u[i] - peak[i]).powi(2)).sum();
            Sample { base: b, score: 100.0 * (-d2 / 0.25).exp() }
        })
        .collect();
    let data = SampleSet::from_rows(rows, range, 2);
    let params = MlpParams { epochs: 200, learning_rate: 1e-3, ..Default::default() };
    let model = train_mlp(&data, &params, &SplitParams::default()).unwrap().model;

    let grid = GridSpec::from_counts(range, [71, 71, 61]).unwrap();
    let result = grid_search(&model, &grid);
    let truth = norm.denormalize(&peak);
    println!(
        "best x={:.4} y={:.4} theta={:.2}° score={:.2} ({} points)",
        result.best.x,
        result.best.y,
        result.best.theta.to_degrees(),
        result.best_score,
        result.grid_points_evaluated
    );
    println!("planted peak x={:.4} y={:.4} theta={:.2}°", truth.x, truth.y, truth.theta.to_degrees());
    for r in result.runner_ups.iter().take(3) {
        println!("  runner-up {:.4} {:.4} {:.2}° {:.2}", r.base.x, r.base.y, r.base.theta.to_degrees(), r.score);
    }

    let slice = export_score_map(&model, &grid, truth.theta).unwrap();
    println!("score map at theta={:.1}°: {} rows", truth.theta.to_degrees(), slice.len());
}
