//! A small dense MLP with ReLU hidden layers, tempered softmax losses, Adam,
//! and a finite-difference gradient checker.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{axpy, Matrix, Vector};
use crate::seed;

/// How output units group into coarse classes: unit `c * per_class + s` is
/// subclass `s` of class `c`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct HeadSplit {
    pub classes: usize,
    pub per_class: usize,
}

impl HeadSplit {
    pub fn new(classes: usize, per_class: usize) -> Self {
        HeadSplit { classes, per_class }
    }

    pub fn plain(classes: usize) -> Self {
        HeadSplit::new(classes, 1)
    }

    pub fn outputs(&self) -> usize {
        self.classes * self.per_class
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Relu,
}

/// Fully connected layer; `weights` is `fan_in × fan_out`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dense {
    pub weights: Matrix,
    pub bias: Vector,
}

impl Dense {
    pub fn zeros(fan_in: usize, fan_out: usize) -> Self {
        Dense {
            weights: Matrix::zeros(fan_in, fan_out),
            bias: vec![0.0; fan_out],
        }
    }

    pub fn fan_in(&self) -> usize {
        self.weights.rows()
    }

    pub fn fan_out(&self) -> usize {
        self.weights.cols()
    }

    fn apply(&self, input: &Matrix) -> Result<Matrix> {
        let mut out = input.matmul(&self.weights)?;
        for r in 0..out.rows() {
            axpy(1.0, &self.bias, out.row_mut(r));
        }
        Ok(out)
    }
}

/// Multilayer perceptron: ReLU on every hidden layer, linear output head.
///
/// The activations feeding the head are the model's embedding.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Mlp {
    layers: Vec<Dense>,
    head: HeadSplit,
    activation: Activation,
}

impl Mlp {
    /// Glorot-uniform weights, zero biases. `layer_dims` runs from the input
    /// width through the hidden widths to the output width, which must equal
    /// `head.outputs()`.
    pub fn new(layer_dims: &[usize], head: HeadSplit, seed: u64) -> Result<Self> {
        if layer_dims.len() < 2 {
            return Err(Error::InvalidArgument(
                "an MLP needs at least input and output dimensions".into(),
            ));
        }
        if layer_dims.contains(&0) || head.per_class == 0 {
            return Err(Error::InvalidArgument(format!(
                "layer widths and subclasses per class must be positive: {layer_dims:?}"
            )));
        }
        let out = *layer_dims.last().unwrap();
        if out != head.outputs() {
            return Err(Error::shape("Mlp::new output width", head.outputs(), out));
        }
        let mut rng = seed::rng(seed);
        let layers = layer_dims
            .windows(2)
            .map(|w| {
                let (fan_in, fan_out) = (w[0], w[1]);
                let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
                let weights = Matrix::from_fn(fan_in, fan_out, |_, _| rng.random_range(-limit..limit));
                Dense {
                    weights,
                    bias: vec![0.0; fan_out],
                }
            })
            .collect();
        Ok(Mlp {
            layers,
            head,
            activation: Activation::Relu,
        })
    }

    pub fn from_layers(layers: Vec<Dense>, head: HeadSplit) -> Result<Self> {
        if layers.is_empty() {
            return Err(Error::InvalidArgument("an MLP needs at least one layer".into()));
        }
        for (i, l) in layers.iter().enumerate() {
            if l.bias.len() != l.fan_out() {
                return Err(Error::shape("Mlp layer bias", l.fan_out(), l.bias.len()));
            }
            if i > 0 && layers[i - 1].fan_out() != l.fan_in() {
                return Err(Error::shape(
                    "Mlp consecutive layers",
                    layers[i - 1].fan_out(),
                    l.fan_in(),
                ));
            }
        }
        let out = layers.last().unwrap().fan_out();
        if out != head.outputs() {
            return Err(Error::shape("Mlp output width", head.outputs(), out));
        }
        Ok(Mlp {
            layers,
            head,
            activation: Activation::Relu,
        })
    }

    pub fn layers(&self) -> &[Dense] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [Dense] {
        &mut self.layers
    }

    pub fn head_split(&self) -> HeadSplit {
        self.head
    }

    pub fn activation(&self) -> Activation {
        self.activation
    }

    pub fn layer_dims(&self) -> Vec<usize> {
        let mut dims = vec![self.layers[0].fan_in()];
        dims.extend(self.layers.iter().map(Dense::fan_out));
        dims
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].fan_in()
    }

    pub fn embedding_dim(&self) -> usize {
        self.output_layer().fan_in()
    }

    pub fn output_dim(&self) -> usize {
        self.output_layer().fan_out()
    }

    pub fn output_layer(&self) -> &Dense {
        self.layers.last().expect("non-empty by construction")
    }

    pub fn num_params(&self) -> usize {
        self.layers
            .iter()
            .map(|l| l.weights.as_slice().len() + l.bias.len())
            .sum()
    }

    fn check_input(&self, batch: &Matrix) -> Result<()> {
        if batch.cols() != self.input_dim() {
            return Err(Error::shape("forward input", self.input_dim(), batch.cols()));
        }
        Ok(())
    }

    pub fn forward(&self, batch: &Matrix) -> Result<ForwardTrace> {
        self.check_input(batch)?;
        let mut activations = Vec::with_capacity(self.layers.len());
        let mut current = batch.clone();
        let last = self.layers.len() - 1;
        let mut logits = None;
        for (i, layer) in self.layers.iter().enumerate() {
            let z = layer.apply(&current)?;
            activations.push(current);
            if i == last {
                logits = Some(z);
                break;
            }
            current = z.map(relu);
        }
        Ok(ForwardTrace {
            activations,
            logits: logits.expect("at least one layer"),
        })
    }

    /// Penultimate activations only.
    pub fn embed(&self, batch: &Matrix) -> Result<Matrix> {
        self.check_input(batch)?;
        let mut current = batch.clone();
        for layer in &self.layers[..self.layers.len() - 1] {
            current = layer.apply(&current)?.map(relu);
        }
        Ok(current)
    }

    pub fn logits(&self, batch: &Matrix) -> Result<Matrix> {
        let h = self.embed(batch)?;
        self.output_layer().apply(&h)
    }

    /// Backpropagates `logit_grad` (dL/dlogits) and, optionally, an extra
    /// gradient arriving directly at the embedding.
    pub fn backward(
        &self,
        trace: &ForwardTrace,
        logit_grad: &Matrix,
        embedding_grad: Option<&Matrix>,
    ) -> Result<Gradients> {
        if trace.activations.len() != self.layers.len() {
            return Err(Error::shape(
                "backward trace depth",
                self.layers.len(),
                trace.activations.len(),
            ));
        }
        for (layer, act) in self.layers.iter().zip(&trace.activations) {
            if act.cols() != layer.fan_in() {
                return Err(Error::shape("backward trace width", layer.fan_in(), act.cols()));
            }
        }
        let n = trace.logits.rows();
        if logit_grad.shape() != trace.logits.shape() {
            return Err(Error::shape(
                "backward logit gradient",
                format!("{:?}", trace.logits.shape()),
                format!("{:?}", logit_grad.shape()),
            ));
        }
        if let Some(eg) = embedding_grad {
            if eg.shape() != (n, self.embedding_dim()) {
                return Err(Error::shape(
                    "backward embedding gradient",
                    format!("{:?}", (n, self.embedding_dim())),
                    format!("{:?}", eg.shape()),
                ));
            }
        }

        let mut grads: Vec<Dense> = Vec::with_capacity(self.layers.len());
        let mut upstream = logit_grad.clone();
        for i in (0..self.layers.len()).rev() {
            let input = &trace.activations[i];
            let weights = input.matmul_tn(&upstream)?;
            let mut bias = vec![0.0; upstream.cols()];
            for row in upstream.row_iter() {
                axpy(1.0, row, &mut bias);
            }
            grads.push(Dense { weights, bias });
            if i == 0 {
                break;
            }
            let mut down = upstream.matmul_nt(&self.layers[i].weights)?;
            if i == self.layers.len() - 1 {
                if let Some(eg) = embedding_grad {
                    for (d, e) in down.as_mut_slice().iter_mut().zip(eg.as_slice()) {
                        *d += e;
                    }
                }
            }
            // input is post-ReLU, so input > 0 exactly where the unit was active
            for (d, a) in down.as_mut_slice().iter_mut().zip(input.as_slice()) {
                if *a <= 0.0 {
                    *d = 0.0;
                }
            }
            upstream = down;
        }
        grads.reverse();
        Ok(Gradients { layers: grads })
    }

    /// Every parameter tensor as a flat mutable slice, layer by layer
    /// (weights then bias).
    pub fn param_slices_mut(&mut self) -> Vec<&mut [f64]> {
        let mut out = Vec::with_capacity(2 * self.layers.len());
        for l in &mut self.layers {
            out.push(l.weights.as_mut_slice());
            out.push(l.bias.as_mut_slice());
        }
        out
    }

    pub fn param_slices(&self) -> Vec<&[f64]> {
        let mut out = Vec::with_capacity(2 * self.layers.len());
        for l in &self.layers {
            out.push(l.weights.as_slice());
            out.push(l.bias.as_slice());
        }
        out
    }

    pub fn flat_params(&self) -> Vec<f64> {
        self.param_slices().concat()
    }

    pub fn is_finite(&self) -> bool {
        self.param_slices()
            .iter()
            .all(|s| s.iter().all(|v| v.is_finite()))
    }
}

#[inline]
fn relu(x: f64) -> f64 {
    if x > 0.0 {
        x
    } else {
        0.0
    }
}

/// Activations recorded during a forward pass.
#[derive(Debug, Clone)]
pub struct ForwardTrace {
    /// Input to each layer: the batch, then each post-ReLU hidden activation.
    pub activations: Vec<Matrix>,
    pub logits: Matrix,
}

impl ForwardTrace {
    pub fn embedding(&self) -> &Matrix {
        self.activations.last().expect("non-empty trace")
    }
}

/// Per-layer parameter gradients, shaped like the model's layers.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub layers: Vec<Dense>,
}

impl Gradients {
    pub fn slices(&self) -> Vec<&[f64]> {
        let mut out = Vec::with_capacity(2 * self.layers.len());
        for l in &self.layers {
            out.push(l.weights.as_slice());
            out.push(l.bias.as_slice());
        }
        out
    }

    pub fn flat(&self) -> Vec<f64> {
        self.slices().concat()
    }
}

/// A scalar loss and its gradient with respect to the logits it consumed.
#[derive(Debug, Clone)]
pub struct LossGrad {
    pub loss: f64,
    pub grad: Matrix,
}

fn check_temperature(t: f64) -> Result<()> {
    if !(t > 0.0 && t.is_finite()) {
        return Err(Error::InvalidArgument(format!(
            "temperature must be positive and finite, got {t}"
        )));
    }
    Ok(())
}

/// Row-wise `softmax(z / t)` in place on a slice, with max subtraction.
pub(crate) fn softmax_row(z: &[f64], t: f64, out: &mut [f64]) {
    let max = z.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mut sum = 0.0;
    for (o, &v) in out.iter_mut().zip(z) {
        *o = ((v - max) / t).exp();
        sum += *o;
    }
    out.iter_mut().for_each(|o| *o /= sum);
}

pub fn softmax_tempered(logits: &Matrix, t: f64) -> Result<Matrix> {
    check_temperature(t)?;
    let mut out = Matrix::zeros(logits.rows(), logits.cols());
    for r in 0..logits.rows() {
        softmax_row(logits.row(r), t, out.row_mut(r));
    }
    Ok(out)
}

const NORMALIZATION_TOL: f64 = 1e-6;

fn check_distribution(p: &Matrix, what: &'static str) -> Result<()> {
    for (r, row) in p.row_iter().enumerate() {
        let sum: f64 = row.iter().sum();
        if (sum - 1.0).abs() > NORMALIZATION_TOL || row.iter().any(|&v| v < 0.0) {
            return Err(Error::InvalidArgument(format!(
                "{what} row {r} is not a probability vector (sum {sum})"
            )));
        }
    }
    Ok(())
}

/// Mean over rows of `Σ p log(p/q)`, with `0 log 0 = 0`.
///
/// The gradient is taken with respect to logits `u` with `q = softmax(u)`,
/// i.e. `(q − p) / n`. Callers that temper `u = z / t` divide by `t`.
pub fn kl_divergence(p: &Matrix, q: &Matrix) -> Result<LossGrad> {
    if p.shape() != q.shape() {
        return Err(Error::shape(
            "kl_divergence",
            format!("{:?}", p.shape()),
            format!("{:?}", q.shape()),
        ));
    }
    check_distribution(p, "p")?;
    check_distribution(q, "q")?;
    let n = p.rows();
    let mut total = 0.0;
    let mut grad = Matrix::zeros(n, p.cols());
    let inv_n = if n > 0 { 1.0 / n as f64 } else { 0.0 };
    for r in 0..n {
        let (pr, qr) = (p.row(r), q.row(r));
        for (k, (&pk, &qk)) in pr.iter().zip(qr).enumerate() {
            if pk > 0.0 {
                total += pk * (pk.ln() - qk.ln());
            }
            grad[(r, k)] = (qk - pk) * inv_n;
        }
    }
    Ok(LossGrad {
        loss: total * inv_n,
        grad,
    })
}

/// Mean negative log-probability of the labelled class; gradient on logits.
pub fn cross_entropy(labels: &[usize], logits: &Matrix) -> Result<LossGrad> {
    if labels.len() != logits.rows() {
        return Err(Error::shape("cross_entropy labels", logits.rows(), labels.len()));
    }
    let k = logits.cols();
    let n = labels.len();
    let inv_n = if n > 0 { 1.0 / n as f64 } else { 0.0 };
    let mut grad = Matrix::zeros(n, k);
    let mut total = 0.0;
    for (r, &y) in labels.iter().enumerate() {
        if y >= k {
            return Err(Error::InvalidArgument(format!(
                "label {y} out of range for {k} outputs"
            )));
        }
        let row = logits.row(r);
        let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let lse = max + row.iter().map(|v| (v - max).exp()).sum::<f64>().ln();
        total += lse - row[y];
        let g = grad.row_mut(r);
        for (gk, &v) in g.iter_mut().zip(row) {
            *gk = (v - lse).exp() * inv_n;
        }
        g[y] -= inv_n;
    }
    Ok(LossGrad {
        loss: total * inv_n,
        grad,
    })
}

/// Adam hyperparameters and moment accumulators.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Adam {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    step: u64,
    first: Vec<Vec<f64>>,
    second: Vec<Vec<f64>>,
}

impl Adam {
    pub fn new(learning_rate: f64) -> Self {
        Adam {
            learning_rate,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            step: 0,
            first: Vec::new(),
            second: Vec::new(),
        }
    }

    pub fn steps(&self) -> u64 {
        self.step
    }

    /// One bias-corrected Adam update. Moment buffers are sized on the first
    /// call and must keep the same shapes afterwards.
    pub fn step(&mut self, params: &mut [&mut [f64]], grads: &[&[f64]]) -> Result<()> {
        if params.len() != grads.len() {
            return Err(Error::shape("Adam tensors", params.len(), grads.len()));
        }
        if self.first.is_empty() {
            self.first = params.iter().map(|p| vec![0.0; p.len()]).collect();
            self.second = self.first.clone();
        }
        if self.first.len() != params.len() {
            return Err(Error::shape("Adam state tensors", self.first.len(), params.len()));
        }
        for ((p, g), m) in params.iter().zip(grads).zip(&self.first) {
            if p.len() != g.len() || p.len() != m.len() {
                return Err(Error::shape("Adam tensor length", p.len(), g.len()));
            }
        }
        self.step += 1;
        let t = self.step as i32;
        let c1 = 1.0 - self.beta1.powi(t);
        let c2 = 1.0 - self.beta2.powi(t);
        for (((p, g), m), v) in params
            .iter_mut()
            .zip(grads)
            .zip(&mut self.first)
            .zip(&mut self.second)
        {
            for i in 0..p.len() {
                let gi = g[i];
                m[i] = self.beta1 * m[i] + (1.0 - self.beta1) * gi;
                v[i] = self.beta2 * v[i] + (1.0 - self.beta2) * gi * gi;
                let m_hat = m[i] / c1;
                let v_hat = v[i] / c2;
                p[i] -= self.learning_rate * m_hat / (v_hat.sqrt() + self.eps);
            }
        }
        Ok(())
    }
}

pub const FD_STEP: f64 = 1e-5;

/// Denominator floor for [`relative_error`]. Central differences at
/// [`FD_STEP`] cannot resolve gradients much below `1e-11` for O(1) losses, so
/// smaller magnitudes are compared absolutely.
pub const RELATIVE_ERROR_FLOOR: f64 = 1e-6;

/// Maximum relative disagreement between backprop and central differences
/// over every parameter of `model`, for a loss defined on the logits.
///
/// Relative error is `|a − n| / max(|a|, |n|, RELATIVE_ERROR_FLOOR)`.
pub fn gradient_check<F>(model: &Mlp, loss_fn: F, batch: &Matrix) -> Result<f64>
where
    F: Fn(&Matrix) -> Result<LossGrad>,
{
    let trace = model.forward(batch)?;
    let lg = loss_fn(&trace.logits)?;
    let analytic = model.backward(&trace, &lg.grad, None)?.flat();

    let mut probe = model.clone();
    let mut worst: f64 = 0.0;
    let mut idx = 0;
    let tensors = probe.param_slices().iter().map(|s| s.len()).collect::<Vec<_>>();
    for (t, len) in tensors.into_iter().enumerate() {
        for i in 0..len {
            let original = probe.param_slices()[t][i];
            probe.param_slices_mut()[t][i] = original + FD_STEP;
            let plus = loss_fn(&probe.logits(batch)?)?.loss;
            probe.param_slices_mut()[t][i] = original - FD_STEP;
            let minus = loss_fn(&probe.logits(batch)?)?.loss;
            probe.param_slices_mut()[t][i] = original;
            let numeric = (plus - minus) / (2.0 * FD_STEP);
            worst = worst.max(relative_error(analytic[idx], numeric));
            idx += 1;
        }
    }
    Ok(worst)
}

pub fn relative_error(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(RELATIVE_ERROR_FLOOR)
}
