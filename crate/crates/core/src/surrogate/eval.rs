use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{Kind, SurrogateBundle};
use crate::data::{Family, SequenceRecord};
use crate::error::{Error, Result};

/// Per-step fields predicted for one strain history.
#[derive(Clone, Debug, PartialEq)]
pub struct Prediction {
    pub length: usize,
    pub d: usize,
    /// Fields in the normalized space (`length × d`).
    pub normalized: Vec<f64>,
    /// Fields in physical units, raw network output (negative `γ` kept).
    pub fields: Vec<f64>,
    /// `fields` clamped at zero, for rendering `γ` only.
    pub gamma_clamped: Option<Vec<f64>>,
}

/// Normalized PCA coefficients (or fields, kind I) for a raw strain block `length × n_in`.
fn network_outputs(bundle: &SurrogateBundle, inputs: &[f64], n_in: usize) -> Result<Vec<f64>> {
    let prep = bundle.prep()?;
    let expected = prep.input_norm.n_features();
    if n_in != expected || inputs.len() % n_in.max(1) != 0 {
        return Err(Error::DimensionMismatch { expected, got: n_in });
    }
    let steps = inputs.len() / n_in.max(1);
    let x = prep.input_norm.normalize(inputs);
    let width = prep.target_dim();
    let mut out = vec![0.0; steps * width];
    for (q, range) in bundle.group_map().into_iter().enumerate() {
        if bundle.kind() != Kind::I && !bundle.is_trained(q) {
            // The coefficient sits at its training mean.
            let cn = prep.coef_norm.as_ref().ok_or(Error::NotPrepared)?;
            let mean = prep.coef_mean.as_ref().ok_or(Error::NotPrepared)?;
            for row in out.chunks_exact_mut(width) {
                for c in range.clone() {
                    row[c] = (mean[c] - cn.chi_mu[c]) / cn.chi_s[c];
                }
            }
            continue;
        }
        let (y, _) = bundle.rnns[q].forward_sequence(&x);
        let k = range.len();
        for (row, src) in out.chunks_exact_mut(width).zip(y.chunks_exact(k)) {
            row[range.clone()].copy_from_slice(src);
        }
    }
    Ok(out)
}

/// Run the surrogate on a raw strain history (`length × n_in`) and map the
/// outputs back to fields.
pub fn predict_fields(bundle: &SurrogateBundle, inputs: &[f64], n_in: usize) -> Result<Prediction> {
    let prep = bundle.prep()?;
    let out = network_outputs(bundle, inputs, n_in)?;
    let d = bundle.d;
    let normalized = match (&prep.pca, &prep.coef_norm) {
        (Some(pca), Some(cn)) => {
            let xi = cn.denormalize(&out);
            let mut block = Vec::with_capacity(xi.len() / pca.p.max(1) * d);
            for row in xi.chunks_exact(pca.p) {
                block.extend(pca.reconstruct(row)?);
            }
            block
        }
        _ => out,
    };
    let fields = prep.field_norm.denormalize(&normalized);
    let gamma_clamped = (prep.family == Family::Gamma).then(|| fields.iter().map(|v| v.max(0.0)).collect());
    Ok(Prediction { length: normalized.len() / d.max(1), d, normalized, fields, gamma_clamped })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SequenceEvaluation {
    pub index: usize,
    pub length: usize,
    pub mse: f64,
    /// Largest predicted and reference field value at every step (physical units).
    pub max_pred: Vec<f64>,
    pub max_true: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FieldSnapshot {
    pub sequence: usize,
    pub step: usize,
    pub predicted: Vec<f64>,
    pub reference: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvaluationReport {
    /// Step-weighted MSE in the normalized full-dimensional space.
    pub mse_full_dim: f64,
    pub per_sequence: Vec<SequenceEvaluation>,
    pub snapshots: Vec<FieldSnapshot>,
}

fn row_max(block: &[f64], d: usize) -> Vec<f64> {
    block.chunks_exact(d).map(|r| r.iter().copied().fold(f64::NEG_INFINITY, f64::max)).collect()
}

/// Evaluate on reference records; `snapshots` lists `(sequence, step)` pairs
/// whose full fields are kept. Empty records are skipped.
pub fn evaluate(bundle: &SurrogateBundle, records: &[SequenceRecord], snapshots: &[(usize, usize)]) -> Result<EvaluationReport> {
    let prep = bundle.prep()?;
    let family = prep.family;
    let d = bundle.d;
    let per: Vec<(SequenceEvaluation, Vec<FieldSnapshot>)> = records
        .par_iter()
        .enumerate()
        .filter(|(_, r)| r.length > 0)
        .map(|(i, r)| {
            if r.dim(family) != d {
                return Err(Error::DimensionMismatch { expected: d, got: r.dim(family) });
            }
            let pred = predict_fields(bundle, &r.inputs, r.n_in)?;
            let truth = prep.field_norm.normalize(r.field(family));
            let sq: f64 = pred.normalized.iter().zip(&truth).map(|(a, b)| (a - b) * (a - b)).sum();
            let snaps = snapshots
                .iter()
                .filter(|&&(s, t)| s == i && t < r.length)
                .map(|&(_, t)| FieldSnapshot {
                    sequence: i,
                    step: t,
                    predicted: pred.fields[t * d..(t + 1) * d].to_vec(),
                    reference: r.field_row(family, t).to_vec(),
                })
                .collect();
            let eval = SequenceEvaluation {
                index: i,
                length: r.length,
                mse: sq / (r.length * d) as f64,
                max_pred: row_max(&pred.fields, d),
                max_true: row_max(r.field(family), d),
            };
            Ok((eval, snaps))
        })
        .collect::<Result<_>>()?;
    let steps: usize = per.iter().map(|(e, _)| e.length).sum();
    let mse_full_dim = per.iter().map(|(e, _)| e.mse * e.length as f64).sum::<f64>() / steps.max(1) as f64;
    let (per_sequence, snaps): (Vec<_>, Vec<_>) = per.into_iter().unzip();
    Ok(EvaluationReport { mse_full_dim, per_sequence, snapshots: snaps.into_iter().flatten().collect() })
}

/// Reconstruction MSE of the retained PCA on the records (normalized space):
/// the lowest error any kind II/III surrogate can reach on them.
pub fn pca_floor(bundle: &SurrogateBundle, records: &[SequenceRecord]) -> Result<f64> {
    let prep = bundle.prep()?;
    let pca = prep.pca.as_ref().ok_or_else(|| Error::InvalidInput("kind I has no PCA floor".into()))?;
    let (mut sq, mut steps) = (0.0, 0usize);
    for r in records.iter().filter(|r| r.length > 0) {
        for row in prep.field_norm.normalize(r.field(prep.family)).chunks_exact(pca.d) {
            sq += pca.residual_sq(row)?;
        }
        steps += r.length;
    }
    Ok(sq / (steps.max(1) * pca.d) as f64)
}
