use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::micro::SequenceResult;
use crate::pathgen::{LoadingPath, PathKind};
use crate::tensor::SymTensor2;

/// Which state-variable field a quantity refers to.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Family {
    Gamma,
    Tau,
}

impl Family {
    pub fn name(self) -> &'static str {
        match self {
            Family::Gamma => "gamma",
            Family::Tau => "tau",
        }
    }
}

impl std::str::FromStr for Family {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "gamma" => Ok(Family::Gamma),
            "tau" => Ok(Family::Tau),
            other => Err(Error::InvalidInput(format!("unknown field family '{other}' (expected gamma or tau)"))),
        }
    }
}

pub const FLAG_TRUNCATED: u8 = 1;
/// Inputs are stretches `U` (xx, yy, xy) and there are no outputs.
pub const FLAG_PATH: u8 = 1 << 1;
pub const FLAG_CYCLIC: u8 = 1 << 2;

/// One loading sequence with its fields, stored as row-major step blocks.
#[derive(Clone, Debug, PartialEq)]
pub struct SequenceRecord {
    pub n_in: usize,
    pub d_gamma: usize,
    pub d_tau: usize,
    pub length: usize,
    pub flags: u8,
    pub inputs: Vec<f64>,
    pub gamma: Vec<f64>,
    pub tau: Vec<f64>,
}

impl SequenceRecord {
    pub fn new(
        n_in: usize,
        d_gamma: usize,
        d_tau: usize,
        flags: u8,
        inputs: Vec<f64>,
        gamma: Vec<f64>,
        tau: Vec<f64>,
    ) -> Result<Self> {
        if n_in == 0 || inputs.len() % n_in != 0 {
            return Err(Error::InvalidInput(format!("{} input values do not split into rows of {n_in}", inputs.len())));
        }
        let length = inputs.len() / n_in;
        for (block, d) in [(&gamma, d_gamma), (&tau, d_tau)] {
            if block.len() != length * d {
                return Err(Error::DimensionMismatch { expected: length * d, got: block.len() });
            }
        }
        Ok(SequenceRecord { n_in, d_gamma, d_tau, length, flags, inputs, gamma, tau })
    }

    /// Record of the strain features of `path` and the fields produced on it.
    pub fn from_simulation(path: &LoadingPath, result: &SequenceResult, d_gamma: usize, d_tau: usize) -> Self {
        let n = result.snapshots.len();
        let inputs = path.strain_features()[..n].iter().flatten().copied().collect();
        let gamma = result.snapshots.iter().flat_map(|s| s.gamma_field.iter().copied()).collect();
        let tau = result.snapshots.iter().flat_map(|s| s.tau_field.iter().copied()).collect();
        let mut flags = if result.truncated { FLAG_TRUNCATED } else { 0 };
        if path.kind == PathKind::Cyclic {
            flags |= FLAG_CYCLIC;
        }
        SequenceRecord { n_in: 3, d_gamma, d_tau, length: n, flags, inputs, gamma, tau }
    }

    /// Store a loading path as its in-plane stretch components.
    pub fn from_path(path: &LoadingPath) -> Self {
        let inputs = path.steps.iter().flat_map(|u| [u.xx, u.yy, u.xy]).collect();
        let flags = FLAG_PATH | if path.kind == PathKind::Cyclic { FLAG_CYCLIC } else { 0 };
        SequenceRecord { n_in: 3, d_gamma: 0, d_tau: 0, length: path.len(), flags, inputs, gamma: vec![], tau: vec![] }
    }

    pub fn to_path(&self) -> Result<LoadingPath> {
        if self.flags & FLAG_PATH == 0 || self.n_in != 3 {
            return Err(Error::Format("record does not hold a loading path".into()));
        }
        let steps = self.inputs.chunks_exact(3).map(|c| SymTensor2::plane(c[0], c[1], c[2], 1.0)).collect();
        let kind = if self.flags & FLAG_CYCLIC != 0 { PathKind::Cyclic } else { PathKind::RandomWalk };
        Ok(LoadingPath::from_stretches(steps, kind))
    }

    pub fn is_truncated(&self) -> bool {
        self.flags & FLAG_TRUNCATED != 0
    }

    pub fn input_row(&self, t: usize) -> &[f64] {
        &self.inputs[t * self.n_in..(t + 1) * self.n_in]
    }

    pub fn dim(&self, family: Family) -> usize {
        match family {
            Family::Gamma => self.d_gamma,
            Family::Tau => self.d_tau,
        }
    }

    pub fn field(&self, family: Family) -> &[f64] {
        match family {
            Family::Gamma => &self.gamma,
            Family::Tau => &self.tau,
        }
    }

    pub fn field_row(&self, family: Family, t: usize) -> &[f64] {
        let d = self.dim(family);
        &self.field(family)[t * d..(t + 1) * d]
    }

    /// Re-index the steps: output step `k` is source step `index[k]`.
    pub fn gather(&self, index: &[usize]) -> Self {
        let pick = |block: &[f64], d: usize| -> Vec<f64> {
            index.iter().flat_map(|&t| block[t * d..(t + 1) * d].iter().copied()).collect()
        };
        SequenceRecord {
            length: index.len(),
            inputs: pick(&self.inputs, self.n_in),
            gamma: pick(&self.gamma, self.d_gamma),
            tau: pick(&self.tau, self.d_tau),
            ..*self
        }
    }

    pub fn truncate(&self, len: usize) -> Self {
        let len = len.min(self.length);
        SequenceRecord {
            length: len,
            inputs: self.inputs[..len * self.n_in].to_vec(),
            gamma: self.gamma[..len * self.d_gamma].to_vec(),
            tau: self.tau[..len * self.d_tau].to_vec(),
            ..*self
        }
    }
}

/// Cut `record` before the first step at which any component of `family`
/// exceeds `y_crit`. A record that exceeds at step 0 comes back empty.
pub fn pre_trim(record: &SequenceRecord, y_crit: f64, family: Family) -> Result<SequenceRecord> {
    if !(y_crit > 0.0) {
        return Err(Error::InvalidInput(format!("critical value must be positive, got {y_crit}")));
    }
    let first_bad = (0..record.length).find(|&t| record.field_row(family, t).iter().any(|&v| v > y_crit));
    Ok(match first_bad {
        Some(k) => record.truncate(k),
        None => record.clone(),
    })
}

/// Source step for every output step when bringing a sequence of `len` steps
/// to `target` steps. Short sequences repeat step 0 `m₁` times in front and the
/// last step `m₂` times at the end, `m₂ − m₁ ∈ {0, 1}`; long ones lose their tail.
pub fn pad_trim_index(len: usize, target: usize) -> Vec<usize> {
    assert!(len >= 1 && target >= 1, "pad/trim needs non-empty sequences");
    if len >= target {
        return (0..target).collect();
    }
    let m1 = (target - len) / 2;
    let m2 = target - len - m1;
    std::iter::repeat(0)
        .take(m1)
        .chain(0..len)
        .chain(std::iter::repeat(len - 1).take(m2))
        .collect()
}

pub fn pad_or_trim(record: &SequenceRecord, target_len: usize) -> Result<SequenceRecord> {
    if target_len == 0 || record.length == 0 {
        return Err(Error::InvalidInput("pad/trim needs a non-empty record and target".into()));
    }
    Ok(record.gather(&pad_trim_index(record.length, target_len)))
}
