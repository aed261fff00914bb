use super::Kind;
use crate::data::{Family, NormalizationSpec, PairSequence, SequenceRecord, TrainingSet};
use crate::error::{Error, Result};
use crate::pca::{PcaModel, PcaOptions};

/// Normalizations and reduction shared by training and prediction.
///
/// The PCA is fitted on normalized fields, so its reconstruction error and
/// every reported MSE live in the same normalized full-dimensional space.
#[derive(Clone, Debug, PartialEq)]
pub struct Preprocessing {
    pub family: Family,
    /// Strain inputs.
    pub input_norm: NormalizationSpec,
    /// Per-component field normalization.
    pub field_norm: NormalizationSpec,
    pub pca: Option<PcaModel>,
    /// Per-coefficient normalization of the PCA coefficients.
    pub coef_norm: Option<NormalizationSpec>,
    /// Training-set mean of each coefficient (used for untrained groups).
    pub coef_mean: Option<Vec<f64>>,
}

fn input_rows(records: &[SequenceRecord]) -> impl Iterator<Item = &[f64]> {
    records.iter().flat_map(|r| r.inputs.chunks_exact(r.n_in))
}

fn check_records(records: &[SequenceRecord], family: Family) -> Result<usize> {
    let first = records.iter().find(|r| r.length > 0).ok_or_else(|| Error::InvalidInput("no non-empty records".into()))?;
    let d = first.dim(family);
    if d == 0 {
        return Err(Error::InvalidInput(format!("records carry no {} field", family.name())));
    }
    if let Some(bad) = records.iter().find(|r| r.dim(family) != d || r.n_in != first.n_in) {
        return Err(Error::DimensionMismatch { expected: d, got: bad.dim(family) });
    }
    Ok(d)
}

/// Fit the input and field normalizations.
pub fn fit_normalizations(records: &[SequenceRecord], family: Family) -> Result<(NormalizationSpec, NormalizationSpec)> {
    let d = check_records(records, family)?;
    let input_norm = NormalizationSpec::fit(input_rows(records), records[0].n_in)?;
    let field_norm = NormalizationSpec::fit(records.iter().flat_map(|r| r.field(family).chunks_exact(d)), d)?;
    Ok((input_norm, field_norm))
}

/// Normalized field block of one record (`length × d`).
pub fn normalized_fields(field_norm: &NormalizationSpec, record: &SequenceRecord, family: Family) -> Vec<f64> {
    field_norm.normalize(record.field(family))
}

/// PCA of the normalized fields of every step of every record.
pub fn fit_field_pca(
    records: &[SequenceRecord],
    family: Family,
    field_norm: &NormalizationSpec,
    opts: &PcaOptions,
) -> Result<PcaModel> {
    let d = check_records(records, family)?;
    let blocks: Vec<Vec<f64>> = records.iter().map(|r| normalized_fields(field_norm, r, family)).collect();
    let rows: Vec<&[f64]> = blocks.iter().flat_map(|b| b.chunks_exact(d)).collect();
    PcaModel::fit(&rows, opts)
}

impl Preprocessing {
    /// Assemble the preprocessing of a surrogate of `kind`; `pca` is cut down
    /// to `p` components and is required for kinds II and III.
    pub fn new(
        records: &[SequenceRecord],
        family: Family,
        kind: Kind,
        input_norm: NormalizationSpec,
        field_norm: NormalizationSpec,
        pca: Option<&PcaModel>,
        p: usize,
    ) -> Result<Self> {
        let d = check_records(records, family)?;
        if field_norm.n_features() != d {
            return Err(Error::DimensionMismatch { expected: d, got: field_norm.n_features() });
        }
        if kind == Kind::I {
            return Ok(Preprocessing { family, input_norm, field_norm, pca: None, coef_norm: None, coef_mean: None });
        }
        let pca = pca.ok_or_else(|| Error::InvalidInput("kinds II and III need a fitted PCA".into()))?.truncated(p)?;
        if pca.d != d {
            return Err(Error::DimensionMismatch { expected: d, got: pca.d });
        }
        let mut coefs = Vec::new();
        for r in records {
            coefs.extend(project_rows(&pca, &normalized_fields(&field_norm, r, family))?);
        }
        let n_rows = (coefs.len() / p.max(1)).max(1) as f64;
        let mut mean = vec![0.0; p];
        for row in coefs.chunks_exact(p.max(1)) {
            for (m, v) in mean.iter_mut().zip(row) {
                *m += v / n_rows;
            }
        }
        let coef_norm = NormalizationSpec::fit(coefs.chunks_exact(p.max(1)), p)?;
        Ok(Preprocessing { family, input_norm, field_norm, pca: Some(pca), coef_norm: Some(coef_norm), coef_mean: Some(mean) })
    }

    /// Width of the network target.
    pub fn target_dim(&self) -> usize {
        self.pca.as_ref().map_or(self.field_norm.n_features(), |m| m.p)
    }

    /// Network input block and normalized target block of one record, with
    /// the squared PCA residual of every step (zeros for kind I).
    pub fn encode(&self, record: &SequenceRecord) -> Result<PairSequence> {
        let x = self.input_norm.normalize(&record.inputs);
        let fields = normalized_fields(&self.field_norm, record, self.family);
        match (&self.pca, &self.coef_norm) {
            (Some(pca), Some(cn)) => {
                let mut xi = project_rows(pca, &fields)?;
                let mut aux = Vec::with_capacity(record.length);
                for (t, row) in fields.chunks_exact(pca.d).enumerate() {
                    let rec = pca.reconstruct(&xi[t * pca.p..(t + 1) * pca.p])?;
                    aux.push(row.iter().zip(&rec).map(|(a, b)| (a - b) * (a - b)).sum());
                }
                cn.normalize_in_place(&mut xi);
                PairSequence::new(record.n_in, pca.p, x, xi, aux)
            }
            _ => PairSequence::new(record.n_in, self.field_norm.n_features(), x, fields, vec![]),
        }
    }

    pub fn training_set(&self, records: &[SequenceRecord], group_lengths: &[usize]) -> Result<TrainingSet> {
        let seqs = records.iter().filter(|r| r.length > 0).map(|r| self.encode(r)).collect::<Result<Vec<_>>>()?;
        TrainingSet::new(seqs, group_lengths)
    }
}

/// `ξ` for every row of a block.
pub fn project_rows(pca: &PcaModel, block: &[f64]) -> Result<Vec<f64>> {
    let mut out = Vec::with_capacity(block.len() / pca.d.max(1) * pca.p);
    for row in block.chunks_exact(pca.d) {
        out.extend(pca.project(row)?);
    }
    Ok(out)
}
