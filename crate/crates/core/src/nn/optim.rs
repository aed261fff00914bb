use serde::{Deserialize, Serialize};

use super::model::RnnModel;
use crate::error::{Error, Result};

pub const MAX_EPOCHS_PER_BATCH: usize = 10;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    /// Decoupled weight decay.
    pub weight_decay: f64,
    /// Optimizer steps taken on each mini-batch.
    pub n_epoch: usize,
    /// Number of mini-batches `N`.
    pub n_batches: usize,
    pub batch_size: usize,
    /// Global gradient-norm clip; `None` disables clipping.
    pub clip_norm: Option<f64>,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            learning_rate: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            weight_decay: 0.0,
            n_epoch: 1,
            n_batches: 2000,
            batch_size: 16,
            clip_norm: Some(1.0),
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let ok = self.learning_rate > 0.0
            && (0.0..1.0).contains(&self.beta1)
            && (0.0..1.0).contains(&self.beta2)
            && self.epsilon > 0.0
            && self.weight_decay >= 0.0
            && (1..=MAX_EPOCHS_PER_BATCH).contains(&self.n_epoch)
            && self.n_batches >= 1
            && self.batch_size >= 1
            && self.clip_norm.map_or(true, |c| c > 0.0);
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidInput(format!(
                "invalid training configuration (n_epoch must be 1..={MAX_EPOCHS_PER_BATCH}, N >= 1): {self:?}"
            )))
        }
    }
}

/// Adaptive-moment optimizer with bias correction and decoupled weight decay.
#[derive(Clone, Debug, PartialEq)]
pub struct Adam {
    pub m: Vec<Vec<f64>>,
    pub v: Vec<Vec<f64>>,
    pub t: u64,
}

impl Adam {
    pub fn new(model: &RnnModel) -> Self {
        let zeros: Vec<Vec<f64>> = model.tensors().iter().map(|t| vec![0.0; t.len()]).collect();
        Adam { m: zeros.clone(), v: zeros, t: 0 }
    }

    pub fn step(&mut self, model: &mut RnnModel, grad: &RnnModel, cfg: &TrainConfig) {
        self.t += 1;
        let bc1 = 1.0 - cfg.beta1.powi(self.t as i32);
        let bc2 = 1.0 - cfg.beta2.powi(self.t as i32);
        let grads = grad.tensors();
        for (((p, g), m), v) in model.tensors_mut().into_iter().zip(grads).zip(&mut self.m).zip(&mut self.v) {
            adam_update(p, g, m, v, cfg, bc1, bc2);
        }
    }
}

/// Update of one parameter block.
pub fn adam_update(p: &mut [f64], g: &[f64], m: &mut [f64], v: &mut [f64], cfg: &TrainConfig, bc1: f64, bc2: f64) {
    for (((pi, gi), mi), vi) in p.iter_mut().zip(g).zip(m.iter_mut()).zip(v.iter_mut()) {
        *mi = cfg.beta1 * *mi + (1.0 - cfg.beta1) * gi;
        *vi = cfg.beta2 * *vi + (1.0 - cfg.beta2) * gi * gi;
        let mhat = *mi / bc1;
        let vhat = *vi / bc2;
        *pi -= cfg.learning_rate * (mhat / (vhat.sqrt() + cfg.epsilon) + cfg.weight_decay * *pi);
    }
}

pub fn grad_norm(grad: &RnnModel) -> f64 {
    grad.tensors().iter().flat_map(|t| t.iter()).map(|g| g * g).sum::<f64>().sqrt()
}

/// Rescale `grad` to norm `max_norm` if it is larger; returns the norm before clipping.
pub fn clip_global_norm(grad: &mut RnnModel, max_norm: f64) -> f64 {
    let norm = grad_norm(grad);
    if norm > max_norm {
        let s = max_norm / norm;
        for t in grad.tensors_mut() {
            t.iter_mut().for_each(|g| *g *= s);
        }
    }
    norm
}

/// `n_epoch` optimizer steps on one batch (time-major blocks).
#[derive(Clone, Debug, PartialEq)]
pub struct BatchOutcome {
    /// Loss before each step.
    pub losses: Vec<f64>,
    /// Predictions of the first forward pass, before any update.
    pub first_prediction: Vec<f64>,
}

pub fn train_on_batch(
    model: &mut RnnModel,
    opt: &mut Adam,
    x_tm: &[f64],
    y_tm: &[f64],
    steps: usize,
    batch: usize,
    cfg: &TrainConfig,
) -> Result<BatchOutcome> {
    let mut losses = Vec::with_capacity(cfg.n_epoch);
    let mut first_prediction = Vec::new();
    for epoch in 0..cfg.n_epoch {
        let (loss, mut grad, pred) = model.loss_gradient_output(x_tm, y_tm, steps, batch)?;
        losses.push(loss);
        if epoch == 0 {
            first_prediction = pred;
        }
        if !loss.is_finite() {
            break;
        }
        if let Some(c) = cfg.clip_norm {
            clip_global_norm(&mut grad, c);
        }
        opt.step(model, &grad, cfg);
    }
    Ok(BatchOutcome { losses, first_prediction })
}
