use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{Kind, SurrogateBundle};
use crate::data::{assemble_batch, batch_schedule, TrainingSet};
use crate::error::{Error, Result};
use crate::nn::{to_time_major, train_on_batch, Adam, BatchOutcome, TrainConfig};

/// Record of one mini-batch.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BatchLog {
    pub batch: usize,
    pub length_group: usize,
    pub length: usize,
    /// Training loss of every network before its first update on this batch
    /// (`None` for networks that are not trained).
    pub losses: Vec<Option<f64>>,
    /// The same predictions measured in the normalized full-dimensional field space.
    pub full_dim_mse: f64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainHistory {
    pub batches: Vec<BatchLog>,
}

impl TrainHistory {
    /// Mean full-dimensional MSE over the last `n` batches.
    pub fn tail_mean_full_dim(&self, n: usize) -> f64 {
        let tail = &self.batches[self.batches.len().saturating_sub(n)..];
        tail.iter().map(|b| b.full_dim_mse).sum::<f64>() / tail.len().max(1) as f64
    }

    /// Mean training loss of network `q` over the last `n` batches.
    pub fn tail_mean_loss(&self, q: usize, n: usize) -> f64 {
        let tail = &self.batches[self.batches.len().saturating_sub(n)..];
        let vals: Vec<f64> = tail.iter().filter_map(|b| b.losses.get(q).copied().flatten()).collect();
        vals.iter().sum::<f64>() / vals.len().max(1) as f64
    }
}

/// Train on `N` scheduled mini-batches. Every trained network sees every
/// batch, on its own slice of the targets. On a non-finite loss the networks
/// are restored to their state before that batch and training stops with
/// [`Error::Diverged`].
pub fn train(bundle: &mut SurrogateBundle, set: &TrainingSet, cfg: &TrainConfig) -> Result<TrainHistory> {
    cfg.validate()?;
    let prep = bundle.prep()?.clone();
    let n_target = prep.target_dim();
    if let Some(s) = set.seqs.first() {
        if s.n_out != n_target || s.n_in != bundle.rnns[0].nnw_in.n_in() {
            return Err(Error::DimensionMismatch { expected: n_target, got: s.n_out });
        }
    }
    let schedule = batch_schedule(set, cfg.n_batches, cfg.batch_size, cfg.seed)?;
    let mut opts: Vec<Adam> = bundle.rnns.iter().map(Adam::new).collect();
    let ranges = bundle.group_map();
    let trained: Vec<bool> = (0..bundle.rnns.len()).map(|q| bundle.is_trained(q)).collect();
    let d = bundle.d as f64;
    let mut history = TrainHistory::default();

    for (bi, sb) in schedule.iter().enumerate() {
        let mb = assemble_batch(set, sb.group, &sb.indices)?;
        let (steps, batch) = (mb.len, mb.batch);
        let x_tm = to_time_major(&mb.inputs, batch, steps, mb.n_in);
        let y_tm = to_time_major(&mb.outputs, batch, steps, n_target);
        let aux_tm = to_time_major(&mb.aux, batch, steps, 1);
        let slices: Vec<Vec<f64>> = ranges
            .iter()
            .map(|r| y_tm.chunks_exact(n_target).flat_map(|row| row[r.clone()].iter().copied()).collect())
            .collect();

        let snapshot = (bundle.rnns.clone(), opts.clone());
        let outcomes: Vec<Option<BatchOutcome>> = bundle
            .rnns
            .par_iter_mut()
            .zip(opts.par_iter_mut())
            .enumerate()
            .map(|(q, (model, opt))| {
                if trained[q] {
                    train_on_batch(model, opt, &x_tm, &slices[q], steps, batch, cfg).map(Some)
                } else {
                    Ok(None)
                }
            })
            .collect::<Result<_>>()?;

        let losses: Vec<Option<f64>> = outcomes.iter().map(|o| o.as_ref().map(|o| o.losses[0])).collect();
        if outcomes.iter().flatten().any(|o| o.losses.iter().any(|l| !l.is_finite())) {
            bundle.rnns = snapshot.0;
            log::error!("non-finite loss at mini-batch {bi}; parameters restored to their state before it");
            return Err(Error::Diverged { batch: bi, group: sb.group });
        }

        // Full-dimensional error of the pre-update predictions.
        let rows = steps * batch;
        let mut sq = 0.0;
        for (q, r) in ranges.iter().enumerate() {
            let k = r.len();
            for row in 0..rows {
                let target = &y_tm[row * n_target + r.start..row * n_target + r.end];
                match (&outcomes[q], bundle.kind()) {
                    (Some(o), Kind::I) => {
                        let pred = &o.first_prediction[row * k..(row + 1) * k];
                        sq += pred.iter().zip(target).map(|(a, b)| (a - b) * (a - b)).sum::<f64>();
                    }
                    (pred, _) => {
                        let cn = prep.coef_norm.as_ref().ok_or(Error::NotPrepared)?;
                        let mean = prep.coef_mean.as_ref().ok_or(Error::NotPrepared)?;
                        for (j, c) in r.clone().enumerate() {
                            let truth = target[j] * cn.chi_s[c] + cn.chi_mu[c];
                            let guess = match pred {
                                Some(o) => o.first_prediction[row * k + j] * cn.chi_s[c] + cn.chi_mu[c],
                                None => mean[c],
                            };
                            sq += (guess - truth) * (guess - truth);
                        }
                    }
                }
            }
        }
        if bundle.kind() != Kind::I {
            sq += aux_tm.iter().sum::<f64>();
        }
        let full_dim_mse = sq / (rows as f64 * d);

        if bi % 100 == 0 || bi + 1 == schedule.len() {
            log::info!("batch {bi}/{}: length {steps}, full-dimensional MSE {full_dim_mse:.3e}", schedule.len());
        }
        history.batches.push(BatchLog { batch: bi, length_group: sb.group, length: steps, losses, full_dim_mse });
    }
    Ok(history)
}
