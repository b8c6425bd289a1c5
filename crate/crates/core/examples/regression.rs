//! MLP against the LASSO baseline on an analytic three-bump score field.
//!
//!     cargo run --release --example regression -- 300

use baseplace::dataset::{sample_bases, BaseRange, Sample, SampleSet};
use baseplace::regression::{train_lasso, train_mlp, LassoParams, MlpParams, Normalizer, SplitParams};

fn main() {
    let epochs: usize = std::env::args().nth(1).map_or(300, |s| s.parse().unwrap());
    let range = BaseRange::right_arm();
    let norm = Normalizer::new(range);
    let bumps = [([0.5, -0.3, 0.2], 60.0), ([-0.4, 0.5, -0.6], 45.0), ([0.0, 0.0, 0.8], 30.0)];
    let field = |u: [f64; 3]| -> f64 {
        bumps
            .iter()
            .map(|(c, h)| {
                let d2: f64 = (0..3).map(|i| (u[i] - c[i]).powi(2)).sum();
                h * (-d2 / 0.18).exp()
            })
            .sum()
    };
    let rows = sample_bases(&range, 20_000, 1)
        .into_iter()
        .map(|b| Sample { base: b, score: field(norm.normalize(&b)) })
        .collect();
    let data = SampleSet::from_rows(rows, range, 1);

    let split = SplitParams::default();
    let lasso = train_lasso(&data, &LassoParams::default(), &split).unwrap();
    let mlp = train_mlp(&data, &MlpParams { epochs, ..Default::default() }, &split).unwrap();
    let (l, m) = (lasso.holdout.unwrap(), mlp.holdout.unwrap());
    println!("lasso: rmse {:.3} sd {:.3}", l.rmse, l.sd);
    println!("mlp ({epochs} epochs): rmse {:.3} sd {:.3}", m.rmse, m.sd);
}
