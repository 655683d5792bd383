//! Mini-batch training loop shared by every method.

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::data::LabeledDataset;
use crate::error::{Error, Result};
use crate::lelp::predict_class;
use crate::linalg::Matrix;
use crate::nn::{Adam, ForwardTrace, HeadSplit, Mlp};
use crate::seed;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    /// Seeds the per-epoch shuffling streams.
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 100,
            batch_size: 64,
            learning_rate: 1e-3,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 {
            return Err(Error::InvalidArgument("batch size must be positive".into()));
        }
        if !(self.learning_rate > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "learning rate must be positive, got {}",
                self.learning_rate
            )));
        }
        Ok(())
    }
}

/// How a model's logits turn into a coarse class prediction.
#[derive(Debug, Clone, PartialEq)]
pub enum Predictor {
    /// Sum the softmax mass of each class's output group, take the argmax.
    Grouped(HeadSplit),
    /// Argmax over fine classes, then map to the coarse class.
    FineToCoarse(Vec<usize>),
}

impl Predictor {
    pub fn predict(&self, logits: &[f64]) -> usize {
        match self {
            Predictor::Grouped(split) => predict_class(logits, split.per_class),
            Predictor::FineToCoarse(map) => map[argmax(logits)],
        }
    }
}

/// Index of the largest entry, lowest index on ties.
pub fn argmax(v: &[f64]) -> usize {
    let mut best = 0;
    for (i, &x) in v.iter().enumerate() {
        if x > v[best] {
            best = i;
        }
    }
    best
}

pub fn accuracy(model: &Mlp, features: &Matrix, labels: &[usize], predictor: &Predictor) -> Result<f64> {
    if labels.is_empty() {
        return Ok(0.0);
    }
    let logits = model.logits(features)?;
    let correct = logits
        .row_iter()
        .zip(labels)
        .filter(|(row, &y)| predictor.predict(row) == y)
        .count();
    Ok(correct as f64 / labels.len() as f64)
}

/// Loss on one mini-batch plus the gradients the loop needs.
#[derive(Debug, Clone)]
pub struct BatchLoss {
    pub loss: f64,
    pub logit_grad: Matrix,
    pub embedding_grad: Option<Matrix>,
    /// Gradients for the objective's own parameters, in `extra_params` order.
    pub extra_grads: Vec<Vec<f64>>,
}

impl BatchLoss {
    pub fn on_logits(loss: f64, logit_grad: Matrix) -> Self {
        BatchLoss {
            loss,
            logit_grad,
            embedding_grad: None,
            extra_grads: Vec::new(),
        }
    }
}

/// A training objective evaluated on rows of the training set.
pub trait Objective {
    /// `indices` are the training rows in this batch; `trace` is the
    /// student's forward pass on exactly those rows.
    fn batch_loss(&mut self, indices: &[usize], trace: &ForwardTrace) -> Result<BatchLoss>;

    /// Trainable parameters owned by the objective (e.g. a projection matrix).
    fn extra_params(&mut self) -> Vec<&mut [f64]> {
        Vec::new()
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainCurves {
    /// Mean training loss per epoch.
    pub epoch_loss: Vec<f64>,
    /// Coarse accuracy on the evaluation set after each epoch, if one was given.
    pub epoch_accuracy: Vec<f64>,
    /// Loss of every optimizer step, in order.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub step_loss: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub model: Mlp,
    pub curves: TrainCurves,
    pub final_accuracy: Option<f64>,
}

/// Shuffled mini-batch Adam. Each epoch draws its permutation from a stream
/// keyed by `(config.seed, epoch)`; the last partial batch is kept.
pub fn fit(
    mut model: Mlp,
    inputs: &Matrix,
    objective: &mut dyn Objective,
    config: &TrainConfig,
    predictor: &Predictor,
    eval: Option<&LabeledDataset>,
) -> Result<TrainOutcome> {
    config.validate()?;
    if inputs.cols() != model.input_dim() {
        return Err(Error::shape("training inputs", model.input_dim(), inputs.cols()));
    }
    let n = inputs.rows();
    let mut adam = Adam::new(config.learning_rate);
    let mut curves = TrainCurves::default();
    let mut order: Vec<usize> = (0..n).collect();

    for epoch in 0..config.epochs {
        order.sort_unstable();
        let mut rng = seed::derived_rng(config.seed, &["epoch".into(), epoch.into()]);
        order.shuffle(&mut rng);

        let mut total = 0.0;
        for batch in order.chunks(config.batch_size) {
            let x = inputs.select_rows(batch);
            let trace = model.forward(&x)?;
            let bl = objective.batch_loss(batch, &trace)?;
            let grads = model.backward(&trace, &bl.logit_grad, bl.embedding_grad.as_ref())?;

            let mut grad_slices = grads.slices();
            grad_slices.extend(bl.extra_grads.iter().map(Vec::as_slice));
            let mut params = model.param_slices_mut();
            params.extend(objective.extra_params());
            adam.step(&mut params, &grad_slices)?;

            total += bl.loss * batch.len() as f64;
            curves.step_loss.push(bl.loss);
        }
        curves.epoch_loss.push(if n > 0 { total / n as f64 } else { 0.0 });
        if let Some(test) = eval {
            curves
                .epoch_accuracy
                .push(accuracy(&model, &test.features, &test.labels, predictor)?);
        }
    }

    let final_accuracy = match eval {
        Some(test) => Some(match curves.epoch_accuracy.last() {
            Some(&a) => a,
            None => accuracy(&model, &test.features, &test.labels, predictor)?,
        }),
        None => None,
    };
    Ok(TrainOutcome {
        model,
        curves,
        final_accuracy,
    })
}
