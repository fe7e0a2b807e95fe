//! Three-layer (input, hidden, output) feed-forward network trained by
//! backpropagation.

use alloc::vec;
use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::stats::{log_sum_exp, rng_from};

const TAG_INIT: u64 = 0x494e4954;
const TAG_SHUFFLE: u64 = 0x53485546;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum NnError {
    #[error("shape mismatch: expected length {expected}, found {found}")]
    ShapeMismatch { expected: usize, found: usize },
    #[error("empty batch")]
    EmptyBatch,
    #[error("inputs and targets differ in length ({inputs} vs {targets})")]
    LengthMismatch { inputs: usize, targets: usize },
    #[error("training diverged at epoch {epoch}")]
    Divergence { epoch: usize },
    #[error("minimax loss on a softmax output needs at least two units")]
    UnsupportedCombination,
    #[error("empty input")]
    EmptyInput,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    Sigmoid,
    Relu,
    Tanh,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OutputActivation {
    Sigmoid,
    Softmax,
    Linear,
}

/// Training objective.
///
/// `CrossEntropy` is binary cross-entropy per unit for sigmoid outputs,
/// categorical cross-entropy for softmax, and binary cross-entropy on logits
/// for linear outputs. `GanMinimax` is the discriminator side of the minimax
/// game on the first output unit: `-(t ln D + (1 - t) ln(1 - D))` with
/// `t = 1` for real and `t = 0` for generated samples, where `D` is that
/// unit's probability (the sigmoid of a linear output).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Loss {
    CrossEntropy,
    GanMinimax,
}

pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + libm::exp(-z))
    } else {
        let e = libm::exp(z);
        e / (1.0 + e)
    }
}

/// `ln(1 + e^z)` without overflow.
fn softplus(z: f64) -> f64 {
    if z > 0.0 {
        z + libm::log1p(libm::exp(-z))
    } else {
        libm::log1p(libm::exp(z))
    }
}

impl Activation {
    fn apply(self, z: f64) -> f64 {
        match self {
            Activation::Sigmoid => sigmoid(z),
            Activation::Relu => z.max(0.0),
            Activation::Tanh => libm::tanh(z),
        }
    }

    /// Derivative expressed through the pre-activation `z` and activation `a`.
    fn derivative(self, z: f64, a: f64) -> f64 {
        match self {
            Activation::Sigmoid => a * (1.0 - a),
            Activation::Relu => {
                if z > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Tanh => 1.0 - a * a,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
    pub loss: Loss,
    /// Half-width of the uniform weight initialization; `None` uses
    /// `1 / sqrt(fan_in)` per layer.
    pub init_scale: Option<f64>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            learning_rate: 0.05,
            epochs: 200,
            batch_size: 32,
            seed: 0,
            loss: Loss::CrossEntropy,
            init_scale: None,
        }
    }
}

/// Dense network with one hidden layer. Weight matrices are row-major with
/// one row per destination unit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DenseNet {
    pub d_in: usize,
    pub d_hidden: usize,
    pub d_out: usize,
    pub w1: Vec<f64>,
    pub b1: Vec<f64>,
    pub w2: Vec<f64>,
    pub b2: Vec<f64>,
    pub hidden: Activation,
    pub output: OutputActivation,
    pub seed: u64,
}

/// Gradient structure mirroring [`DenseNet`]'s parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub w1: Vec<f64>,
    pub b1: Vec<f64>,
    pub w2: Vec<f64>,
    pub b2: Vec<f64>,
}

impl Gradients {
    fn zeros(net: &DenseNet) -> Self {
        Gradients {
            w1: vec![0.0; net.w1.len()],
            b1: vec![0.0; net.b1.len()],
            w2: vec![0.0; net.w2.len()],
            b2: vec![0.0; net.b2.len()],
        }
    }

    fn scale(&mut self, s: f64) {
        for v in [&mut self.w1, &mut self.b1, &mut self.w2, &mut self.b2] {
            v.iter_mut().for_each(|x| *x *= s);
        }
    }

    /// All entries in parameter order (w1, b1, w2, b2).
    pub fn flat(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.w1.len() + self.b1.len() + self.w2.len() + self.b2.len());
        out.extend_from_slice(&self.w1);
        out.extend_from_slice(&self.b1);
        out.extend_from_slice(&self.w2);
        out.extend_from_slice(&self.b2);
        out
    }
}

/// Intermediate values of one forward pass.
#[derive(Debug, Clone)]
pub struct ForwardTrace {
    pub hidden_pre: Vec<f64>,
    pub hidden: Vec<f64>,
    pub output_pre: Vec<f64>,
    pub output: Vec<f64>,
}

impl DenseNet {
    /// Network with every parameter zero.
    pub fn zeros(d_in: usize, d_hidden: usize, d_out: usize, hidden: Activation, output: OutputActivation) -> Self {
        DenseNet {
            d_in,
            d_hidden,
            d_out,
            w1: vec![0.0; d_hidden * d_in],
            b1: vec![0.0; d_hidden],
            w2: vec![0.0; d_out * d_hidden],
            b2: vec![0.0; d_out],
            hidden,
            output,
            seed: 0,
        }
    }

    /// Uniform initialization in `±scale` drawn from `seed`; biases start at 0.
    pub fn new(
        d_in: usize,
        d_hidden: usize,
        d_out: usize,
        hidden: Activation,
        output: OutputActivation,
        init_scale: Option<f64>,
        seed: u64,
    ) -> Self {
        let mut net = Self::zeros(d_in, d_hidden, d_out, hidden, output);
        net.seed = seed;
        let mut rng = rng_from(seed, TAG_INIT);
        let s1 = init_scale.unwrap_or(1.0 / libm::sqrt(d_in.max(1) as f64));
        let s2 = init_scale.unwrap_or(1.0 / libm::sqrt(d_hidden.max(1) as f64));
        for w in net.w1.iter_mut() {
            *w = rng.random_range(-s1..=s1);
        }
        for w in net.w2.iter_mut() {
            *w = rng.random_range(-s2..=s2);
        }
        net
    }

    pub fn parameter_count(&self) -> usize {
        self.w1.len() + self.b1.len() + self.w2.len() + self.b2.len()
    }

    pub fn is_finite(&self) -> bool {
        [&self.w1, &self.b1, &self.w2, &self.b2]
            .iter()
            .all(|v| v.iter().all(|x| x.is_finite()))
    }

    /// Mutable access to parameter `i` in the order of [`Gradients::flat`].
    pub fn parameter_mut(&mut self, mut i: usize) -> &mut f64 {
        for v in [&mut self.w1, &mut self.b1, &mut self.w2, &mut self.b2] {
            if i < v.len() {
                return &mut v[i];
            }
            i -= v.len();
        }
        panic!("parameter index out of range");
    }

    fn check_input(&self, x: &[f64]) -> Result<(), NnError> {
        if x.len() != self.d_in {
            return Err(NnError::ShapeMismatch {
                expected: self.d_in,
                found: x.len(),
            });
        }
        Ok(())
    }

    pub fn forward_trace(&self, x: &[f64]) -> Result<ForwardTrace, NnError> {
        self.check_input(x)?;
        let hidden_pre: Vec<f64> = (0..self.d_hidden)
            .map(|j| {
                let row = &self.w1[j * self.d_in..(j + 1) * self.d_in];
                self.b1[j] + row.iter().zip(x).map(|(w, v)| w * v).sum::<f64>()
            })
            .collect();
        let hidden: Vec<f64> = hidden_pre.iter().map(|&z| self.hidden.apply(z)).collect();
        let output_pre: Vec<f64> = (0..self.d_out)
            .map(|k| {
                let row = &self.w2[k * self.d_hidden..(k + 1) * self.d_hidden];
                self.b2[k] + row.iter().zip(&hidden).map(|(w, a)| w * a).sum::<f64>()
            })
            .collect();
        let output = match self.output {
            OutputActivation::Sigmoid => output_pre.iter().map(|&z| sigmoid(z)).collect(),
            OutputActivation::Linear => output_pre.clone(),
            OutputActivation::Softmax => {
                let lse = log_sum_exp(&output_pre);
                output_pre.iter().map(|&z| libm::exp(z - lse)).collect()
            }
        };
        Ok(ForwardTrace {
            hidden_pre,
            hidden,
            output_pre,
            output,
        })
    }

    pub fn forward(&self, x: &[f64]) -> Result<Vec<f64>, NnError> {
        Ok(self.forward_trace(x)?.output)
    }

    fn check_target(&self, t: &[f64]) -> Result<(), NnError> {
        if t.len() != self.d_out {
            return Err(NnError::ShapeMismatch {
                expected: self.d_out,
                found: t.len(),
            });
        }
        if self.output == OutputActivation::Softmax && self.d_out < 2 {
            // Single-unit softmax is constant.
            return Err(NnError::UnsupportedCombination);
        }
        Ok(())
    }

    /// Per-sample loss and its gradient with respect to the output
    /// pre-activations.
    fn loss_and_delta(&self, tr: &ForwardTrace, target: &[f64], loss: Loss) -> (f64, Vec<f64>) {
        let z = &tr.output_pre;
        let p = &tr.output;
        let mut delta = vec![0.0; self.d_out];
        let value = match (loss, self.output) {
            (Loss::CrossEntropy, OutputActivation::Sigmoid | OutputActivation::Linear) => {
                let mut l = 0.0;
                for k in 0..self.d_out {
                    l += softplus(z[k]) - target[k] * z[k];
                    delta[k] = sigmoid(z[k]) - target[k];
                }
                l
            }
            (Loss::CrossEntropy, OutputActivation::Softmax) => {
                let lse = log_sum_exp(z);
                let ysum: f64 = target.iter().sum();
                let mut l = 0.0;
                for k in 0..self.d_out {
                    l -= target[k] * (z[k] - lse);
                    delta[k] = p[k] * ysum - target[k];
                }
                l
            }
            (Loss::GanMinimax, OutputActivation::Sigmoid | OutputActivation::Linear) => {
                let t = target[0];
                delta[0] = sigmoid(z[0]) - t;
                softplus(z[0]) - t * z[0]
            }
            (Loss::GanMinimax, OutputActivation::Softmax) => {
                let t = target[0];
                let lse = log_sum_exp(z);
                let lse_rest = log_sum_exp(&z[1..]);
                let ln_p0 = z[0] - lse;
                let ln_rest = lse_rest - lse;
                for k in 0..self.d_out {
                    let d_ln_p0 = if k == 0 { 1.0 } else { 0.0 } - p[k];
                    let q = if k == 0 { 0.0 } else { libm::exp(z[k] - lse_rest) };
                    let d_ln_rest = q - p[k];
                    delta[k] = -t * d_ln_p0 - (1.0 - t) * d_ln_rest;
                }
                -t * ln_p0 - (1.0 - t) * ln_rest
            }
        };
        (value, delta)
    }

    /// Accumulates parameter gradients for the given output deltas and
    /// returns the gradient with respect to the input.
    fn backward(&self, x: &[f64], tr: &ForwardTrace, delta_out: &[f64], g: &mut Gradients) -> Vec<f64> {
        let mut delta_hidden = vec![0.0; self.d_hidden];
        for k in 0..self.d_out {
            let d = delta_out[k];
            g.b2[k] += d;
            let row = k * self.d_hidden;
            for j in 0..self.d_hidden {
                g.w2[row + j] += d * tr.hidden[j];
                delta_hidden[j] += d * self.w2[row + j];
            }
        }
        let mut dx = vec![0.0; self.d_in];
        for j in 0..self.d_hidden {
            let d = delta_hidden[j] * self.hidden.derivative(tr.hidden_pre[j], tr.hidden[j]);
            g.b1[j] += d;
            let row = j * self.d_in;
            for i in 0..self.d_in {
                g.w1[row + i] += d * x[i];
                dx[i] += d * self.w1[row + i];
            }
        }
        dx
    }

    fn check_batch(&self, inputs: &[Vec<f64>], targets: &[Vec<f64>]) -> Result<(), NnError> {
        if inputs.is_empty() {
            return Err(NnError::EmptyBatch);
        }
        if inputs.len() != targets.len() {
            return Err(NnError::LengthMismatch {
                inputs: inputs.len(),
                targets: targets.len(),
            });
        }
        for t in targets {
            self.check_target(t)?;
        }
        Ok(())
    }

    /// Mean loss over a batch.
    pub fn loss(&self, inputs: &[Vec<f64>], targets: &[Vec<f64>], loss: Loss) -> Result<f64, NnError> {
        self.check_batch(inputs, targets)?;
        let mut total = 0.0;
        for (x, t) in inputs.iter().zip(targets) {
            let tr = self.forward_trace(x)?;
            total += self.loss_and_delta(&tr, t, loss).0;
        }
        Ok(total / inputs.len() as f64)
    }

    /// Exact gradients of the mean batch loss, plus the per-sample gradient of
    /// the mean loss with respect to each input.
    pub fn backprop_with_inputs(
        &self,
        inputs: &[Vec<f64>],
        targets: &[Vec<f64>],
        loss: Loss,
    ) -> Result<(Gradients, Vec<Vec<f64>>), NnError> {
        self.check_batch(inputs, targets)?;
        let mut g = Gradients::zeros(self);
        let inv = 1.0 / inputs.len() as f64;
        let mut dxs = Vec::with_capacity(inputs.len());
        for (x, t) in inputs.iter().zip(targets) {
            let tr = self.forward_trace(x)?;
            let (_, delta) = self.loss_and_delta(&tr, t, loss);
            let mut dx = self.backward(x, &tr, &delta, &mut g);
            dx.iter_mut().for_each(|v| *v *= inv);
            dxs.push(dx);
        }
        g.scale(inv);
        Ok((g, dxs))
    }

    pub fn backprop_grads(&self, inputs: &[Vec<f64>], targets: &[Vec<f64>], loss: Loss) -> Result<Gradients, NnError> {
        Ok(self.backprop_with_inputs(inputs, targets, loss)?.0)
    }

    /// Parameter gradients of `sum_n upstream[n] . output(inputs[n])`, i.e.
    /// backpropagation of an externally supplied gradient on the outputs.
    pub fn backprop_from_output(&self, inputs: &[Vec<f64>], upstream: &[Vec<f64>]) -> Result<Gradients, NnError> {
        if inputs.is_empty() {
            return Err(NnError::EmptyBatch);
        }
        if inputs.len() != upstream.len() {
            return Err(NnError::LengthMismatch {
                inputs: inputs.len(),
                targets: upstream.len(),
            });
        }
        let mut g = Gradients::zeros(self);
        for (x, up) in inputs.iter().zip(upstream) {
            if up.len() != self.d_out {
                return Err(NnError::ShapeMismatch {
                    expected: self.d_out,
                    found: up.len(),
                });
            }
            let tr = self.forward_trace(x)?;
            let delta: Vec<f64> = match self.output {
                OutputActivation::Linear => up.clone(),
                OutputActivation::Sigmoid => up.iter().zip(&tr.output).map(|(u, o)| u * o * (1.0 - o)).collect(),
                OutputActivation::Softmax => {
                    let dot: f64 = up.iter().zip(&tr.output).map(|(u, o)| u * o).sum();
                    up.iter().zip(&tr.output).map(|(u, o)| o * (u - dot)).collect()
                }
            };
            self.backward(x, &tr, &delta, &mut g);
        }
        Ok(g)
    }

    /// Gradient-descent step `theta -= lr * g`.
    pub fn apply_gradients(&mut self, g: &Gradients, lr: f64) {
        let pairs: [(&mut Vec<f64>, &Vec<f64>); 4] = [
            (&mut self.w1, &g.w1),
            (&mut self.b1, &g.b1),
            (&mut self.w2, &g.w2),
            (&mut self.b2, &g.b2),
        ];
        for (p, d) in pairs {
            for (a, b) in p.iter_mut().zip(d) {
                *a -= lr * b;
            }
        }
    }
}

/// Output of [`train`].
#[derive(Debug, Clone, PartialEq)]
pub struct Trained {
    pub net: DenseNet,
    /// Mean loss over the whole dataset after each epoch.
    pub loss_trace: Vec<f64>,
}

/// Mini-batch SGD with per-epoch shuffling drawn from `cfg.seed`.
pub fn train(net: &DenseNet, inputs: &[Vec<f64>], targets: &[Vec<f64>], cfg: &TrainConfig) -> Result<Trained, NnError> {
    net.check_batch(inputs, targets)?;
    let mut net = net.clone();
    let mut trace = Vec::with_capacity(cfg.epochs);
    let mut rng = rng_from(cfg.seed, TAG_SHUFFLE);
    let mut order: Vec<usize> = (0..inputs.len()).collect();
    let batch = cfg.batch_size.max(1);
    let mut xb = Vec::with_capacity(batch);
    let mut tb = Vec::with_capacity(batch);
    for epoch in 0..cfg.epochs {
        order.shuffle(&mut rng);
        for chunk in order.chunks(batch) {
            xb.clear();
            tb.clear();
            for &i in chunk {
                xb.push(inputs[i].clone());
                tb.push(targets[i].clone());
            }
            let g = net.backprop_grads(&xb, &tb, cfg.loss)?;
            net.apply_gradients(&g, cfg.learning_rate);
        }
        let l = net.loss(inputs, targets, cfg.loss)?;
        if !l.is_finite() || !net.is_finite() {
            return Err(NnError::Divergence { epoch });
        }
        trace.push(l);
    }
    Ok(Trained { net, loss_trace: trace })
}

/// Binary classification metrics at a score threshold.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Evaluation {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    /// `None` unless both classes are present.
    pub auc: Option<f64>,
    pub tp: usize,
    pub fp: usize,
    pub tn: usize,
    pub fn_: usize,
}

/// Precision, recall and F1 of `score >= threshold`, and the rank-statistic
/// AUC with average ranks for ties.
pub fn evaluate(scores: &[f64], labels: &[bool], threshold: f64) -> Result<Evaluation, NnError> {
    if scores.is_empty() {
        return Err(NnError::EmptyInput);
    }
    if scores.len() != labels.len() {
        return Err(NnError::LengthMismatch {
            inputs: scores.len(),
            targets: labels.len(),
        });
    }
    let (mut tp, mut fp, mut tn, mut fn_) = (0, 0, 0, 0);
    for (&s, &l) in scores.iter().zip(labels) {
        match (s >= threshold, l) {
            (true, true) => tp += 1,
            (true, false) => fp += 1,
            (false, false) => tn += 1,
            (false, true) => fn_ += 1,
        }
    }
    let ratio = |a: usize, b: usize| if a + b == 0 { 0.0 } else { a as f64 / (a + b) as f64 };
    let precision = ratio(tp, fp);
    let recall = ratio(tp, fn_);
    let f1 = if precision + recall == 0.0 {
        0.0
    } else {
        2.0 * precision * recall / (precision + recall)
    };
    Ok(Evaluation {
        precision,
        recall,
        f1,
        auc: auc(scores, labels),
        tp,
        fp,
        tn,
        fn_,
    })
}

pub fn auc(scores: &[f64], labels: &[bool]) -> Option<f64> {
    let n_pos = labels.iter().filter(|&&l| l).count();
    let n_neg = labels.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return None;
    }
    let mut idx: Vec<usize> = (0..scores.len()).collect();
    idx.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));
    let mut rank_sum = 0.0;
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && scores[idx[j + 1]] == scores[idx[i]] {
            j += 1;
        }
        let avg_rank = (i + j) as f64 / 2.0 + 1.0;
        rank_sum += idx[i..=j].iter().filter(|&&k| labels[k]).count() as f64 * avg_rank;
        i = j + 1;
    }
    let u = rank_sum - (n_pos * (n_pos + 1)) as f64 / 2.0;
    Some(u / (n_pos * n_neg) as f64)
}
