//! Fully connected ReLU network trained with Adam on mean squared error.
//!
//! Training runs batched through ndarray. Inference goes through
//! [`DenseLayer::forward_row`], a fixed-order scalar loop, so a single-point
//! prediction and a batched grid evaluation return identical bits.

use ndarray::{Array1, Array2, Axis, Zip};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{Normalizer, Standardizer};
use crate::dataset::{BaseRange, Sample};
use crate::error::{Error, Result};
use crate::geometry::BasePose;

pub const DEFAULT_WIDTHS: [usize; 5] = [3, 48, 96, 192, 1];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MlpParams {
    pub widths: Vec<usize>,
    pub learning_rate: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
}

impl Default for MlpParams {
    fn default() -> Self {
        MlpParams {
            widths: DEFAULT_WIDTHS.to_vec(),
            learning_rate: 1e-4,
            epochs: 5000,
            batch_size: 256,
            seed: 0,
        }
    }
}

impl MlpParams {
    pub fn validate(&self) -> Result<()> {
        if self.widths.len() < 2 || self.widths[0] != 3 || *self.widths.last().unwrap() != 1 {
            return Err(Error::config("mlp.widths", "must start with 3 and end with 1"));
        }
        if self.widths.contains(&0) {
            return Err(Error::config("mlp.widths", "layer width 0"));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::config("mlp.learning_rate", "must be positive"));
        }
        if self.epochs == 0 {
            return Err(Error::config("mlp.epochs", "must be at least 1"));
        }
        if self.batch_size == 0 {
            return Err(Error::config("mlp.batch_size", "must be at least 1"));
        }
        Ok(())
    }
}

/// Row-major `n_out x n_in` weights.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DenseLayer {
    pub n_in: usize,
    pub n_out: usize,
    pub weights: Vec<f64>,
    pub biases: Vec<f64>,
}

impl DenseLayer {
    pub fn forward_row(&self, input: &[f64], out: &mut Vec<f64>, relu: bool) {
        out.clear();
        for o in 0..self.n_out {
            let row = &self.weights[o * self.n_in..(o + 1) * self.n_in];
            let mut acc = self.biases[o];
            for (w, x) in row.iter().zip(input) {
                acc += w * x;
            }
            out.push(if relu { acc.max(0.0) } else { acc });
        }
    }
}

/// Trainable parameters in ndarray form.
#[derive(Debug, Clone, PartialEq)]
pub struct Network {
    pub weights: Vec<Array2<f64>>,
    pub biases: Vec<Array1<f64>>,
}

/// Gradients laid out like [`Network`].
#[derive(Debug, Clone)]
pub struct Gradients {
    pub weights: Vec<Array2<f64>>,
    pub biases: Vec<Array1<f64>>,
}

impl Network {
    /// Uniform fan-in initialisation: ReLU layers use `sqrt(6 / fan_in)`,
    /// the linear output layer `sqrt(3 / fan_in)`. Biases start at zero.
    pub fn init(widths: &[usize], seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let layers = widths.len() - 1;
        let mut weights = Vec::with_capacity(layers);
        let mut biases = Vec::with_capacity(layers);
        for l in 0..layers {
            let (n_in, n_out) = (widths[l], widths[l + 1]);
            let gain = if l + 1 == layers { 3.0 } else { 6.0 };
            let limit = (gain / n_in as f64).sqrt();
            weights.push(Array2::from_shape_fn((n_out, n_in), |_| rng.random_range(-limit..limit)));
            biases.push(Array1::zeros(n_out));
        }
        Network { weights, biases }
    }

    pub fn layer_count(&self) -> usize {
        self.weights.len()
    }

    pub fn param_count(&self) -> usize {
        self.weights.iter().map(|w| w.len()).sum::<usize>() + self.biases.iter().map(|b| b.len()).sum::<usize>()
    }

    /// Flat parameter access: all weights layer by layer, then all biases.
    pub fn param(&self, i: usize) -> f64 {
        *self.flat_ref(i)
    }

    pub fn set_param(&mut self, i: usize, v: f64) {
        *self.flat_mut(i) = v;
    }

    fn locate(&self, mut i: usize) -> (bool, usize, usize) {
        for (l, w) in self.weights.iter().enumerate() {
            if i < w.len() {
                return (true, l, i);
            }
            i -= w.len();
        }
        for (l, b) in self.biases.iter().enumerate() {
            if i < b.len() {
                return (false, l, i);
            }
            i -= b.len();
        }
        panic!("parameter index out of range");
    }

    fn flat_ref(&self, i: usize) -> &f64 {
        match self.locate(i) {
            (true, l, k) => &self.weights[l].as_slice().expect("standard layout")[k],
            (false, l, k) => &self.biases[l][k],
        }
    }

    fn flat_mut(&mut self, i: usize) -> &mut f64 {
        match self.locate(i) {
            (true, l, k) => &mut self.weights[l].as_slice_mut().expect("standard layout")[k],
            (false, l, k) => &mut self.biases[l][k],
        }
    }

    /// Returns pre-activations and activations for every layer; `acts[0]` is
    /// the input batch.
    fn forward_cache(&self, x: &Array2<f64>) -> (Vec<Array2<f64>>, Vec<Array2<f64>>) {
        let n = self.layer_count();
        let mut pre = Vec::with_capacity(n);
        let mut acts = Vec::with_capacity(n + 1);
        acts.push(x.clone());
        for l in 0..n {
            let z = acts[l].dot(&self.weights[l].t()) + &self.biases[l];
            let a = if l + 1 == n { z.clone() } else { z.mapv(|v| v.max(0.0)) };
            pre.push(z);
            acts.push(a);
        }
        (pre, acts)
    }

    pub fn forward_batch(&self, x: &Array2<f64>) -> Array1<f64> {
        let (_, mut acts) = self.forward_cache(x);
        acts.pop().expect("output layer").column(0).to_owned()
    }

    /// Mean squared error over the batch.
    pub fn loss(&self, x: &Array2<f64>, y: &Array1<f64>) -> f64 {
        let out = self.forward_batch(x);
        (&out - y).mapv(|d| d * d).mean().unwrap_or(0.0)
    }

    /// Loss and its gradient by backpropagation.
    pub fn loss_and_gradients(&self, x: &Array2<f64>, y: &Array1<f64>) -> (f64, Gradients) {
        let n = self.layer_count();
        let batch = x.nrows() as f64;
        let (pre, acts) = self.forward_cache(x);
        let diff = &acts[n].column(0) - y;
        let loss = diff.mapv(|d| d * d).sum() / batch;

        let mut gw = vec![Array2::zeros((0, 0)); n];
        let mut gb = vec![Array1::zeros(0); n];
        let mut delta = (diff * (2.0 / batch)).insert_axis(Axis(1));
        for l in (0..n).rev() {
            gw[l] = delta.t().dot(&acts[l]);
            gb[l] = delta.sum_axis(Axis(0));
            if l > 0 {
                let mut back = delta.dot(&self.weights[l]);
                Zip::from(&mut back).and(&pre[l - 1]).for_each(|d, &z| {
                    if z <= 0.0 {
                        *d = 0.0;
                    }
                });
                delta = back;
            }
        }
        (loss, Gradients { weights: gw, biases: gb })
    }

    fn to_layers(&self) -> Vec<DenseLayer> {
        self.weights
            .iter()
            .zip(&self.biases)
            .map(|(w, b)| DenseLayer {
                n_in: w.ncols(),
                n_out: w.nrows(),
                weights: w.iter().copied().collect(),
                biases: b.to_vec(),
            })
            .collect()
    }
}

impl Gradients {
    pub fn param(&self, i: usize) -> f64 {
        let mut i = i;
        for w in &self.weights {
            if i < w.len() {
                return w.as_slice().expect("standard layout")[i];
            }
            i -= w.len();
        }
        for b in &self.biases {
            if i < b.len() {
                return b[i];
            }
            i -= b.len();
        }
        panic!("parameter index out of range");
    }
}

struct Adam {
    mw: Vec<Array2<f64>>,
    vw: Vec<Array2<f64>>,
    mb: Vec<Array1<f64>>,
    vb: Vec<Array1<f64>>,
    step: i32,
    lr: f64,
}

const BETA1: f64 = 0.9;
const BETA2: f64 = 0.999;
const EPS: f64 = 1e-8;

impl Adam {
    fn new(net: &Network, lr: f64) -> Self {
        Adam {
            mw: net.weights.iter().map(|w| Array2::zeros(w.raw_dim())).collect(),
            vw: net.weights.iter().map(|w| Array2::zeros(w.raw_dim())).collect(),
            mb: net.biases.iter().map(|b| Array1::zeros(b.raw_dim())).collect(),
            vb: net.biases.iter().map(|b| Array1::zeros(b.raw_dim())).collect(),
            step: 0,
            lr,
        }
    }

    fn update(&mut self, net: &mut Network, g: &Gradients) {
        self.step += 1;
        let c1 = 1.0 - BETA1.powi(self.step);
        let c2 = 1.0 - BETA2.powi(self.step);
        let lr = self.lr;
        let apply = |p: &mut f64, g: &f64, m: &mut f64, v: &mut f64| {
            *m = BETA1 * *m + (1.0 - BETA1) * g;
            *v = BETA2 * *v + (1.0 - BETA2) * g * g;
            *p -= lr * (*m / c1) / ((*v / c2).sqrt() + EPS);
        };
        for l in 0..net.layer_count() {
            Zip::from(&mut net.weights[l])
                .and(&g.weights[l])
                .and(&mut self.mw[l])
                .and(&mut self.vw[l])
                .for_each(apply);
            Zip::from(&mut net.biases[l])
                .and(&g.biases[l])
                .and(&mut self.mb[l])
                .and(&mut self.vb[l])
                .for_each(apply);
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingInfo {
    pub params: MlpParams,
    pub train_rows: usize,
    /// Mean training loss per epoch, in standardized target units.
    pub loss_history: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MlpRegressor {
    pub widths: Vec<usize>,
    pub activation: String,
    pub layers: Vec<DenseLayer>,
    pub normalizer: Normalizer,
    pub target: Standardizer,
    pub training: TrainingInfo,
}

impl MlpRegressor {
    pub fn fit(rows: &[Sample], range: &BaseRange, params: &MlpParams) -> Result<Self> {
        params.validate()?;
        if rows.is_empty() {
            return Err(Error::NoSamples);
        }
        let normalizer = Normalizer::new(*range);
        let target = Standardizer::fit(rows.iter().map(|r| r.score));
        let n = rows.len();
        let mut x = Array2::zeros((n, 3));
        for (i, r) in rows.iter().enumerate() {
            let u = normalizer.normalize(&r.base);
            for j in 0..3 {
                x[[i, j]] = u[j];
            }
        }
        let y = Array1::from_iter(rows.iter().map(|r| target.forward(r.score)));

        let mut net = Network::init(&params.widths, params.seed);
        let mut adam = Adam::new(&net, params.learning_rate);
        let mut rng = ChaCha8Rng::seed_from_u64(params.seed ^ 0x5eed_0f_ba7c4);
        let mut order: Vec<usize> = (0..n).collect();
        let mut history = Vec::with_capacity(params.epochs);
        for epoch in 0..params.epochs {
            order.shuffle(&mut rng);
            let mut total = 0.0;
            for chunk in order.chunks(params.batch_size) {
                let xb = x.select(Axis(0), chunk);
                let yb = y.select(Axis(0), chunk);
                let (loss, grads) = net.loss_and_gradients(&xb, &yb);
                if !loss.is_finite() {
                    return Err(Error::Training(format!("non-finite loss at epoch {}", epoch + 1)));
                }
                total += loss * chunk.len() as f64;
                adam.update(&mut net, &grads);
            }
            history.push(total / n as f64);
        }

        Ok(MlpRegressor {
            widths: params.widths.clone(),
            activation: "relu".into(),
            layers: net.to_layers(),
            normalizer,
            target,
            training: TrainingInfo {
                params: params.clone(),
                train_rows: n,
                loss_history: history,
            },
        })
    }

    pub fn predict_normalized(&self, u: &[f64; 3]) -> f64 {
        let mut a: Vec<f64> = u.to_vec();
        let mut b = Vec::with_capacity(self.widths.iter().copied().max().unwrap_or(1));
        let last = self.layers.len() - 1;
        for (l, layer) in self.layers.iter().enumerate() {
            layer.forward_row(&a, &mut b, l != last);
            std::mem::swap(&mut a, &mut b);
        }
        self.target.inverse(a[0])
    }

    pub fn predict(&self, base: &BasePose) -> f64 {
        self.predict_normalized(&self.normalizer.normalize(base))
    }

    pub(crate) fn check_shape(&self) -> Result<()> {
        if self.activation != "relu" {
            return Err(Error::ModelFile(format!("unsupported activation `{}`", self.activation)));
        }
        if self.widths.len() != self.layers.len() + 1 || self.widths.first() != Some(&3) || self.widths.last() != Some(&1)
        {
            return Err(Error::ModelFile("layer widths do not match layers".into()));
        }
        for (l, layer) in self.layers.iter().enumerate() {
            if layer.n_in != self.widths[l]
                || layer.n_out != self.widths[l + 1]
                || layer.weights.len() != layer.n_in * layer.n_out
                || layer.biases.len() != layer.n_out
            {
                return Err(Error::ModelFile(format!("layer {l} has inconsistent shape")));
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn batch(n: usize, seed: u64) -> (Array2<f64>, Array1<f64>) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x = Array2::from_shape_fn((n, 3), |_| rng.random_range(-1.0..1.0));
        let y = x.map_axis(Axis(1), |r| (2.0f64 * r[0]).sin() + r[1] * r[2]);
        (x, y)
    }

    /// Central differences over every parameter of a small-batch loss.
    fn worst_relative_gradient_error(widths: &[usize], seed: u64) -> (f64, f64) {
        let net = Network::init(widths, seed);
        let (x, y) = batch(10, seed + 100);
        let (_, g) = net.loss_and_gradients(&x, &y);
        let h = 1e-6;
        let mut probe = net.clone();
        let (mut diff2, mut norm2, mut worst) = (0.0, 0.0, 0.0f64);
        for i in 0..net.param_count() {
            let p = net.param(i);
            probe.set_param(i, p + h);
            let up = probe.loss(&x, &y);
            probe.set_param(i, p - h);
            let down = probe.loss(&x, &y);
            probe.set_param(i, p);
            let fd = (up - down) / (2.0 * h);
            let an = g.param(i);
            diff2 += (fd - an) * (fd - an);
            norm2 += an * an;
            worst = worst.max((fd - an).abs() / (an.abs().max(fd.abs()) + 1e-6));
        }
        ((diff2 / norm2).sqrt(), worst)
    }

    #[test]
    fn gradients_match_central_differences() {
        let (vector_rel, worst) = worst_relative_gradient_error(&[3, 8, 6, 1], 4);
        assert!(vector_rel < 1e-6, "vector relative error {vector_rel}");
        assert!(worst < 1e-4, "worst component error {worst}");
    }

    #[test]
    fn batched_and_row_forward_agree() {
        let net = Network::init(&DEFAULT_WIDTHS, 2);
        let (x, _) = batch(16, 3);
        let batched = net.forward_batch(&x);
        let layers = net.to_layers();
        for i in 0..16 {
            let mut a = x.row(i).to_vec();
            let mut b = Vec::new();
            for (l, layer) in layers.iter().enumerate() {
                layer.forward_row(&a, &mut b, l + 1 != layers.len());
                std::mem::swap(&mut a, &mut b);
            }
            assert!((a[0] - batched[i]).abs() < 1e-12);
        }
    }

    #[test]
    fn init_is_seeded() {
        assert_eq!(Network::init(&[3, 4, 1], 9), Network::init(&[3, 4, 1], 9));
        assert_ne!(Network::init(&[3, 4, 1], 9), Network::init(&[3, 4, 1], 10));
    }

    #[test]
    fn flat_parameter_indexing_round_trips() {
        let mut net = Network::init(&[3, 4, 2, 1], 1);
        assert_eq!(net.param_count(), 3 * 4 + 4 * 2 + 2 + 4 + 2 + 1);
        let last = net.param_count() - 1;
        net.set_param(last, 7.5);
        assert_eq!(net.biases[2][0], 7.5);
        net.set_param(12, -1.0);
        assert_eq!(net.weights[1][[0, 0]], -1.0);
    }

    #[test]
    fn params_validation() {
        let mut p = MlpParams::default();
        assert!(p.validate().is_ok());
        p.widths = vec![2, 4, 1];
        assert!(p.validate().is_err());
        let p = MlpParams {
            learning_rate: 0.0,
            ..Default::default()
        };
        assert!(p.validate().is_err());
    }
}
