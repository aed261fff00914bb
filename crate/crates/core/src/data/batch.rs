use rand::Rng;

use super::record::pad_trim_index;
use crate::error::{Error, Result};
use crate::rng::{seeded, SimRng};

/// Input/target pair of one training sequence (already normalized).
#[derive(Clone, Debug, PartialEq)]
pub struct PairSequence {
    pub n_in: usize,
    pub n_out: usize,
    pub len: usize,
    pub inputs: Vec<f64>,
    pub outputs: Vec<f64>,
    /// Optional per-step scalar carried along with the targets (empty if unused).
    pub aux: Vec<f64>,
}

impl PairSequence {
    pub fn new(n_in: usize, n_out: usize, inputs: Vec<f64>, outputs: Vec<f64>, aux: Vec<f64>) -> Result<Self> {
        if n_in == 0 || inputs.len() % n_in != 0 {
            return Err(Error::InvalidInput("input block does not split into steps".into()));
        }
        let len = inputs.len() / n_in;
        if outputs.len() != len * n_out {
            return Err(Error::DimensionMismatch { expected: len * n_out, got: outputs.len() });
        }
        if !aux.is_empty() && aux.len() != len {
            return Err(Error::DimensionMismatch { expected: len, got: aux.len() });
        }
        Ok(PairSequence { n_in, n_out, len, inputs, outputs, aux })
    }
}

/// Training sequences partitioned into length groups: group 0 holds every
/// sequence, group `i > 0` only those longer than the previous group length.
/// Every sequence is brought to its group's length when batched.
#[derive(Clone, Debug)]
pub struct TrainingSet {
    pub seqs: Vec<PairSequence>,
    pub group_lengths: Vec<usize>,
    pub members: Vec<Vec<usize>>,
}

impl TrainingSet {
    pub fn new(seqs: Vec<PairSequence>, group_lengths: &[usize]) -> Result<Self> {
        if group_lengths.is_empty() || group_lengths.windows(2).any(|w| w[0] >= w[1]) || group_lengths[0] == 0 {
            return Err(Error::InvalidInput(format!(
                "length groups must be positive and strictly increasing, got {group_lengths:?}"
            )));
        }
        if let Some(s) = seqs.first() {
            if seqs.iter().any(|q| q.n_in != s.n_in || q.n_out != s.n_out || q.len == 0) {
                return Err(Error::InvalidInput("training sequences must be non-empty and share dimensions".into()));
            }
        }
        let members = group_lengths
            .iter()
            .enumerate()
            .map(|(g, _)| {
                let floor = if g == 0 { 0 } else { group_lengths[g - 1] };
                (0..seqs.len()).filter(|&i| seqs[i].len > floor).collect()
            })
            .collect();
        Ok(TrainingSet { seqs, group_lengths: group_lengths.to_vec(), members })
    }

    pub fn n_groups(&self) -> usize {
        self.group_lengths.len()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct MiniBatch {
    pub batch: usize,
    pub len: usize,
    pub n_in: usize,
    pub n_out: usize,
    /// batch × len × n_in
    pub inputs: Vec<f64>,
    /// batch × len × n_out
    pub outputs: Vec<f64>,
    /// batch × len, zeros when the set carries no auxiliary data
    pub aux: Vec<f64>,
    pub indices: Vec<usize>,
    pub group: usize,
}

impl MiniBatch {
    pub fn input_seq(&self, b: usize) -> &[f64] {
        let n = self.len * self.n_in;
        &self.inputs[b * n..(b + 1) * n]
    }

    pub fn output_seq(&self, b: usize) -> &[f64] {
        let n = self.len * self.n_out;
        &self.outputs[b * n..(b + 1) * n]
    }

    pub fn aux_seq(&self, b: usize) -> &[f64] {
        &self.aux[b * self.len..(b + 1) * self.len]
    }
}

/// Assemble the batch of the given sequences at the length of `group`.
pub fn assemble_batch(set: &TrainingSet, group: usize, indices: &[usize]) -> Result<MiniBatch> {
    let len = *set.group_lengths.get(group).ok_or(Error::EmptyGroup(group))?;
    let first = set.seqs.get(*indices.first().ok_or(Error::EmptyGroup(group))?).ok_or(Error::EmptyGroup(group))?;
    let (n_in, n_out) = (first.n_in, first.n_out);
    let mut inputs = Vec::with_capacity(indices.len() * len * n_in);
    let mut outputs = Vec::with_capacity(indices.len() * len * n_out);
    let mut aux = Vec::with_capacity(indices.len() * len);
    for &i in indices {
        let s = &set.seqs[i];
        for t in pad_trim_index(s.len, len) {
            inputs.extend_from_slice(&s.inputs[t * n_in..(t + 1) * n_in]);
            outputs.extend_from_slice(&s.outputs[t * n_out..(t + 1) * n_out]);
            aux.push(s.aux.get(t).copied().unwrap_or(0.0));
        }
    }
    Ok(MiniBatch { batch: indices.len(), len, n_in, n_out, inputs, outputs, aux, indices: indices.to_vec(), group })
}

/// Draw `batch_size` members of `group` uniformly with replacement.
pub fn sample_indices(set: &TrainingSet, batch_size: usize, group: usize, rng: &mut SimRng) -> Result<Vec<usize>> {
    let members = set.members.get(group).filter(|m| !m.is_empty()).ok_or(Error::EmptyGroup(group))?;
    Ok((0..batch_size).map(|_| members[rng.gen_range(0..members.len())]).collect())
}

pub fn sample_minibatch(set: &TrainingSet, batch_size: usize, group: usize, rng: &mut SimRng) -> Result<MiniBatch> {
    let idx = sample_indices(set, batch_size, group, rng)?;
    assemble_batch(set, group, &idx)
}

/// One scheduled mini-batch: its length group and member indices.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ScheduledBatch {
    pub group: usize,
    pub indices: Vec<usize>,
}

/// Batch plan for a whole training run, fixed by `seed`. Each batch comes
/// from one length group picked uniformly among the non-empty groups.
pub fn batch_schedule(set: &TrainingSet, n_batches: usize, batch_size: usize, seed: u64) -> Result<Vec<ScheduledBatch>> {
    let groups: Vec<usize> = (0..set.n_groups()).filter(|&g| !set.members[g].is_empty()).collect();
    if groups.is_empty() {
        return Err(Error::EmptyGroup(0));
    }
    let mut rng = seeded(seed);
    (0..n_batches)
        .map(|_| {
            let group = groups[rng.gen_range(0..groups.len())];
            Ok(ScheduledBatch { group, indices: sample_indices(set, batch_size, group, &mut rng)? })
        })
        .collect()
}
