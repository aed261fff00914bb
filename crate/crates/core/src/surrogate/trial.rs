use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::Preprocessing;
use crate::data::{assemble_batch, batch_schedule, PairSequence, SequenceRecord, TrainingSet};
use crate::error::{Error, Result};
use crate::nn::{to_time_major, train_on_batch, Adam, Architecture, RnnModel, TrainConfig};
use crate::rng::{derive_seed, seeded};

/// Pearson correlation a validation trace must reach for the trend to count as captured.
pub const TREND_THRESHOLD: f64 = 0.9;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrialConfig {
    /// 1-based index of the probed coefficient.
    pub target_p: usize,
    pub start_n_h: usize,
    pub increment: usize,
    /// Largest hidden size tried before giving up.
    pub max_n_h: usize,
    pub nnw_in: Vec<usize>,
    /// Hidden layers of the output network (the output width is 1).
    pub nnw_out_hidden: Vec<usize>,
    pub group_lengths: Vec<usize>,
    pub validation_fraction: f64,
    /// Optimizer settings; `n_batches` is the budget of every trial.
    pub train: TrainConfig,
    pub seed: u64,
}

impl Default for TrialConfig {
    fn default() -> Self {
        TrialConfig {
            target_p: 60,
            start_n_h: 100,
            increment: 100,
            max_n_h: 1000,
            nnw_in: vec![3, 70],
            nnw_out_hidden: vec![30],
            group_lengths: vec![],
            validation_fraction: 0.2,
            train: TrainConfig::default(),
            seed: 0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrialStep {
    pub n_h: usize,
    pub final_loss: f64,
    pub score: f64,
    pub passed: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrialReport {
    pub target_p: usize,
    pub threshold: f64,
    /// First hidden size whose score passed, if any.
    pub recommended_n_h: Option<usize>,
    pub best_n_h: usize,
    pub best_score: f64,
    pub steps: Vec<TrialStep>,
}

pub fn pearson(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len().min(b.len()) as f64;
    if n < 2.0 {
        return 0.0;
    }
    let ma = a.iter().sum::<f64>() / n;
    let mb = b.iter().sum::<f64>() / n;
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        sab += (x - ma) * (y - mb);
        saa += (x - ma) * (x - ma);
        sbb += (y - mb) * (y - mb);
    }
    if saa == 0.0 || sbb == 0.0 {
        return 0.0;
    }
    sab / (saa * sbb).sqrt()
}

fn single_coefficient(seq: &PairSequence, c: usize) -> Result<PairSequence> {
    let y = seq.outputs.chunks_exact(seq.n_out).map(|r| r[c]).collect();
    PairSequence::new(seq.n_in, 1, seq.inputs.clone(), y, vec![])
}

/// Grow the hidden size until a single-output network captures the trend of
/// one normalized PCA coefficient on held-out sequences.
pub fn hidden_size_trial(records: &[SequenceRecord], prep: &Preprocessing, cfg: &TrialConfig) -> Result<TrialReport> {
    let pca = prep.pca.as_ref().ok_or_else(|| Error::InvalidInput("the hidden-size trial needs a fitted PCA".into()))?;
    if cfg.target_p == 0 || cfg.target_p > pca.p {
        return Err(Error::InvalidInput(format!("target_p = {} outside 1..={}", cfg.target_p, pca.p)));
    }
    if cfg.start_n_h == 0 || cfg.increment == 0 || cfg.max_n_h < cfg.start_n_h {
        return Err(Error::InvalidInput("need start_n_h >= 1, increment >= 1 and max_n_h >= start_n_h".into()));
    }
    if !(0.0..1.0).contains(&cfg.validation_fraction) {
        return Err(Error::InvalidInput("validation_fraction must be in [0, 1)".into()));
    }
    cfg.train.validate()?;
    let c = cfg.target_p - 1;
    let mut seqs = records
        .iter()
        .filter(|r| r.length > 0)
        .map(|r| single_coefficient(&prep.encode(r)?, c))
        .collect::<Result<Vec<_>>>()?;
    seqs.shuffle(&mut seeded(derive_seed(cfg.seed, 0x7a11)));
    let n_val = ((seqs.len() as f64 * cfg.validation_fraction).ceil() as usize).clamp(1, seqs.len().saturating_sub(1).max(1));
    let val = seqs.split_off(seqs.len().saturating_sub(n_val));
    if seqs.is_empty() {
        return Err(Error::InvalidInput("too few sequences for a train/validation split".into()));
    }
    let set = TrainingSet::new(seqs, &cfg.group_lengths)?;
    let schedule = batch_schedule(&set, cfg.train.n_batches, cfg.train.batch_size, cfg.train.seed)?;
    let val_target: Vec<f64> = val.iter().flat_map(|s| s.outputs.iter().copied()).collect();

    let mut steps = Vec::new();
    let mut n_h = cfg.start_n_h;
    while n_h <= cfg.max_n_h {
        let mut nnw_out = vec![n_h];
        nnw_out.extend(&cfg.nnw_out_hidden);
        nnw_out.push(1);
        let arch = Architecture { nnw_in: cfg.nnw_in.clone(), n_h, nnw_out };
        let mut model = RnnModel::new(&arch, derive_seed(cfg.seed, n_h as u64))?;
        let mut opt = Adam::new(&model);
        let mut final_loss = f64::NAN;
        for sb in &schedule {
            let mb = assemble_batch(&set, sb.group, &sb.indices)?;
            let x = to_time_major(&mb.inputs, mb.batch, mb.len, mb.n_in);
            let y = to_time_major(&mb.outputs, mb.batch, mb.len, 1);
            let out = train_on_batch(&mut model, &mut opt, &x, &y, mb.len, mb.batch, &cfg.train)?;
            final_loss = *out.losses.last().unwrap_or(&f64::NAN);
            if !final_loss.is_finite() {
                break;
            }
        }
        let pred: Vec<f64> = val.iter().flat_map(|s| model.forward_sequence(&s.inputs).0).collect();
        let score = if final_loss.is_finite() { pearson(&pred, &val_target) } else { f64::NAN };
        let passed = score >= TREND_THRESHOLD;
        log::info!("hidden-size trial: n_h = {n_h}, final loss {final_loss:.3e}, r = {score:.4}");
        steps.push(TrialStep { n_h, final_loss, score, passed });
        if passed {
            break;
        }
        n_h += cfg.increment;
    }
    let best = steps
        .iter()
        .filter(|s| s.score.is_finite())
        .max_by(|a, b| a.score.total_cmp(&b.score))
        .cloned()
        .unwrap_or(TrialStep { n_h: cfg.start_n_h, final_loss: f64::NAN, score: f64::NAN, passed: false });
    Ok(TrialReport {
        target_p: cfg.target_p,
        threshold: TREND_THRESHOLD,
        recommended_n_h: steps.iter().find(|s| s.passed).map(|s| s.n_h),
        best_n_h: best.n_h,
        best_score: best.score,
        steps,
    })
}
