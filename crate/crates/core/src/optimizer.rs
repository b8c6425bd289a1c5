//! Exhaustive search of a trained score map, contour slices, and comparison
//! of the chosen base against random placements using the true score.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::{sample_bases, BaseRange, Sample};
use crate::error::{Error, Result};
use crate::geometry::BasePose;
use crate::kinematics::KinematicModel;
use crate::pattern::RepresentativeSet;
use crate::regression::Regressor;
use crate::scoring::{final_score, JointWeights};

pub const RUNNER_UPS: usize = 10;

/// Regular lattice over a [`BaseRange`], anchored at the lower corner.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub range: BaseRange,
    pub step_x: f64,
    pub step_y: f64,
    pub step_theta: f64,
}

impl GridSpec {
    pub fn new(range: BaseRange, step_x: f64, step_y: f64, step_theta: f64) -> Result<Self> {
        let g = GridSpec {
            range,
            step_x,
            step_y,
            step_theta,
        };
        g.validate()?;
        Ok(g)
    }

    /// Grid with exactly `counts[i]` points per axis, spanning the range
    /// end to end.
    pub fn from_counts(range: BaseRange, counts: [usize; 3]) -> Result<Self> {
        let axes = range.axes();
        let mut steps = [0.0; 3];
        for i in 0..3 {
            if counts[i] == 0 {
                return Err(Error::config("grid.counts", "every axis needs at least one point"));
            }
            let span = axes[i][1] - axes[i][0];
            steps[i] = if counts[i] == 1 {
                // any step wider than the span yields a single point
                if span > 0.0 {
                    2.0 * span
                } else {
                    1.0
                }
            } else {
                span / (counts[i] - 1) as f64
            };
        }
        GridSpec::new(range, steps[0], steps[1], steps[2])
    }

    pub fn validate(&self) -> Result<()> {
        self.range.validate()?;
        for (name, s) in [("grid.step_x", self.step_x), ("grid.step_y", self.step_y), ("grid.step_theta", self.step_theta)] {
            if !(s > 0.0 && s.is_finite()) {
                return Err(Error::config(name, "must be positive"));
            }
        }
        Ok(())
    }

    pub fn steps(&self) -> [f64; 3] {
        [self.step_x, self.step_y, self.step_theta]
    }

    pub fn counts(&self) -> [usize; 3] {
        let axes = self.range.axes();
        let steps = self.steps();
        std::array::from_fn(|i| ((axes[i][1] - axes[i][0]) / steps[i] + 1e-9).floor() as usize + 1)
    }

    pub fn len(&self) -> usize {
        self.counts().iter().product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn axis_value(&self, axis: usize, i: usize) -> f64 {
        self.range.axes()[axis][0] + i as f64 * self.steps()[axis]
    }

    /// Point for a flat index ordered X-major, then Y, then theta.
    pub fn point(&self, index: usize) -> BasePose {
        let [_, ny, nt] = self.counts();
        let it = index % nt;
        let iy = (index / nt) % ny;
        let ix = index / (nt * ny);
        BasePose {
            x: self.axis_value(0, ix),
            y: self.axis_value(1, iy),
            theta: self.axis_value(2, it),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RankedPose {
    pub base: BasePose,
    pub score: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptimResult {
    pub best: BasePose,
    pub best_score: f64,
    pub grid_points_evaluated: usize,
    /// Next best grid points, best first, excluding `best`.
    pub runner_ups: Vec<RankedPose>,
}

#[derive(Clone, Copy)]
struct Candidate {
    index: usize,
    score: f64,
}

impl Candidate {
    /// Higher score wins; equal scores go to the lower index, i.e. the lowest
    /// X, then Y, then theta. NaN never wins.
    fn beats(&self, other: &Candidate) -> bool {
        let a = if self.score.is_nan() { f64::NEG_INFINITY } else { self.score };
        let b = if other.score.is_nan() { f64::NEG_INFINITY } else { other.score };
        a > b || (a == b && self.index < other.index)
    }
}

fn push_top(top: &mut Vec<Candidate>, c: Candidate, k: usize) {
    if top.len() == k && !c.beats(top.last().expect("k > 0")) {
        return;
    }
    let pos = top.iter().position(|t| c.beats(t)).unwrap_or(top.len());
    top.insert(pos, c);
    top.truncate(k);
}

pub fn grid_search(model: &Regressor, grid: &GridSpec) -> OptimResult {
    let n = grid.len();
    let k = RUNNER_UPS + 1;
    let top = (0..n)
        .into_par_iter()
        .fold(Vec::new, |mut top, index| {
            let score = model.predict(&grid.point(index)).score;
            push_top(&mut top, Candidate { index, score }, k);
            top
        })
        .reduce(Vec::new, |mut a, b| {
            for c in b {
                push_top(&mut a, c, k);
            }
            a
        });
    let ranked: Vec<RankedPose> = top
        .iter()
        .map(|c| RankedPose {
            base: grid.point(c.index),
            score: c.score,
        })
        .collect();
    OptimResult {
        best: ranked[0].base,
        best_score: ranked[0].score,
        grid_points_evaluated: n,
        runner_ups: ranked[1..].to_vec(),
    }
}

/// Fixed-theta slice of the score map, rows ordered X-major then Y.
pub fn export_score_map(model: &Regressor, grid: &GridSpec, theta: f64) -> Result<Vec<Sample>> {
    let [lo, hi] = grid.range.theta;
    if !(theta >= lo - 1e-12 && theta <= hi + 1e-12) {
        return Err(Error::config("theta", format!("{theta} rad is outside the base range [{lo}, {hi}]")));
    }
    let [nx, ny, _] = grid.counts();
    let bases: Vec<BasePose> = (0..nx * ny)
        .map(|i| BasePose {
            x: grid.axis_value(0, i / ny),
            y: grid.axis_value(1, i % ny),
            theta,
        })
        .collect();
    let scores = model.predict_many(&bases);
    Ok(bases
        .into_iter()
        .zip(scores)
        .map(|(base, score)| Sample { base, score })
        .collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BaselineReport {
    pub optimal: BasePose,
    pub optimal_score: f64,
    pub random_mean: f64,
    /// Population standard deviation.
    pub random_sd: f64,
    pub random_max: f64,
    /// Share of random placements scoring strictly below the optimum.
    pub random_below_fraction: f64,
    pub n_random: usize,
    pub improvement_pct: f64,
}

impl BaselineReport {
    /// Whether the optimum beats the random mean by one standard deviation.
    pub fn exceeds_one_sd(&self) -> bool {
        self.optimal_score > self.random_mean + self.random_sd
    }
}

/// Compares the true score at `best` with the true scores at `others`.
pub fn evaluate_against_poses(
    model: &KinematicModel,
    set: &RepresentativeSet,
    best: BasePose,
    others: &[BasePose],
    alpha: f64,
    weights: &JointWeights,
) -> Result<BaselineReport> {
    if others.is_empty() {
        return Err(Error::NoSamples);
    }
    let optimal_score = final_score(model, best, set, alpha, weights)?.value;
    let scores: Vec<f64> = others
        .par_iter()
        .map(|b| final_score(model, *b, set, alpha, weights).map(|f| f.value))
        .collect::<Result<_>>()?;
    let n = scores.len() as f64;
    let mean = scores.iter().sum::<f64>() / n;
    let sd = (scores.iter().map(|s| (s - mean) * (s - mean)).sum::<f64>() / n).sqrt();
    let improvement_pct = if mean == 0.0 {
        if optimal_score == 0.0 {
            0.0
        } else {
            f64::INFINITY
        }
    } else {
        100.0 * (optimal_score - mean) / mean
    };
    Ok(BaselineReport {
        optimal: best,
        optimal_score,
        random_mean: mean,
        random_sd: sd,
        random_max: scores.iter().copied().fold(f64::NEG_INFINITY, f64::max),
        random_below_fraction: scores.iter().filter(|&&s| s < optimal_score).count() as f64 / n,
        n_random: scores.len(),
        improvement_pct,
    })
}

#[allow(clippy::too_many_arguments)]
pub fn evaluate_against_random(
    model: &KinematicModel,
    set: &RepresentativeSet,
    best: BasePose,
    range: &BaseRange,
    n_random: usize,
    seed: u64,
    alpha: f64,
    weights: &JointWeights,
) -> Result<BaselineReport> {
    range.validate()?;
    let others = sample_bases(range, n_random, seed);
    evaluate_against_poses(model, set, best, &others, alpha, weights)
}
