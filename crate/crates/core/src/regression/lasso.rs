//! L1-penalized linear regression by cyclic coordinate descent.
//!
//! Minimizes `(1/n) * sum (y - w.x - b)^2 + penalty * |w|_1` over normalized
//! inputs; the intercept is left unpenalized and recovered from the means.

use serde::{Deserialize, Serialize};

use super::Normalizer;
use crate::dataset::{BaseRange, Sample};
use crate::geometry::BasePose;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LassoParams {
    pub penalty: f64,
    pub max_sweeps: usize,
    pub tolerance: f64,
}

impl Default for LassoParams {
    fn default() -> Self {
        LassoParams {
            penalty: 0.5,
            max_sweeps: 10_000,
            tolerance: 1e-8,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LassoRegressor {
    pub weights: [f64; 3],
    pub bias: f64,
    pub penalty: f64,
    pub normalizer: Normalizer,
    pub sweeps: usize,
    pub converged: bool,
}

fn soft_threshold(v: f64, t: f64) -> f64 {
    if v > t {
        v - t
    } else if v < -t {
        v + t
    } else {
        0.0
    }
}

impl LassoRegressor {
    /// Fits on already-normalized inputs.
    pub fn fit_normalized(
        inputs: &[[f64; 3]],
        targets: &[f64],
        normalizer: Normalizer,
        params: &LassoParams,
    ) -> Self {
        assert_eq!(inputs.len(), targets.len());
        let n = inputs.len() as f64;
        let mut x_mean = [0.0; 3];
        for x in inputs {
            for j in 0..3 {
                x_mean[j] += x[j] / n;
            }
        }
        let y_mean = targets.iter().sum::<f64>() / n;
        let centred: Vec<[f64; 3]> = inputs
            .iter()
            .map(|x| [x[0] - x_mean[0], x[1] - x_mean[1], x[2] - x_mean[2]])
            .collect();
        let mut curvature = [0.0; 3];
        for x in &centred {
            for j in 0..3 {
                curvature[j] += x[j] * x[j] / n;
            }
        }
        let mut residual: Vec<f64> = targets.iter().map(|y| y - y_mean).collect();
        let mut w = [0.0; 3];
        let threshold = 0.5 * params.penalty;
        let mut sweeps = 0;
        let mut converged = false;
        while sweeps < params.max_sweeps {
            sweeps += 1;
            let mut max_change: f64 = 0.0;
            for j in 0..3 {
                if curvature[j] <= 1e-300 {
                    w[j] = 0.0;
                    continue;
                }
                let rho = centred
                    .iter()
                    .zip(&residual)
                    .map(|(x, r)| x[j] * r)
                    .sum::<f64>()
                    / n
                    + curvature[j] * w[j];
                let updated = soft_threshold(rho, threshold) / curvature[j];
                let delta = updated - w[j];
                if delta != 0.0 {
                    for (x, r) in centred.iter().zip(residual.iter_mut()) {
                        *r -= x[j] * delta;
                    }
                }
                w[j] = updated;
                max_change = max_change.max(delta.abs());
            }
            if max_change < params.tolerance {
                converged = true;
                break;
            }
        }
        let bias = y_mean - (0..3).map(|j| x_mean[j] * w[j]).sum::<f64>();
        LassoRegressor {
            weights: w,
            bias,
            penalty: params.penalty,
            normalizer,
            sweeps,
            converged,
        }
    }

    pub fn fit(rows: &[Sample], range: &BaseRange, params: &LassoParams) -> Self {
        let normalizer = Normalizer::new(*range);
        let inputs: Vec<[f64; 3]> = rows.iter().map(|r| normalizer.normalize(&r.base)).collect();
        let targets: Vec<f64> = rows.iter().map(|r| r.score).collect();
        LassoRegressor::fit_normalized(&inputs, &targets, normalizer, params)
    }

    pub fn predict_normalized(&self, u: &[f64; 3]) -> f64 {
        self.weights[0] * u[0] + self.weights[1] * u[1] + self.weights[2] * u[2] + self.bias
    }

    pub fn predict(&self, b: &BasePose) -> f64 {
        self.predict_normalized(&self.normalizer.normalize(b))
    }
}
