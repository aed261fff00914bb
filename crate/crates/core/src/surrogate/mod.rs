//! Surrogates I, II and III: a recurrent network mapping the macro strain
//! history to a full state-variable field (I), to its PCA coefficients (II),
//! or to `Q` groups of PCA coefficients with one network per group (III).

mod eval;
mod io;
mod prep;
mod train;
mod trial;

use std::ops::Range;

use serde::{Deserialize, Serialize};

pub use eval::*;
pub use prep::*;
pub use train::*;
pub use trial::*;

use crate::data::Family;
use crate::error::{Error, Result};
use crate::nn::{Architecture, RnnModel};
use crate::rng::derive_seed;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Kind {
    I,
    II,
    III,
}

impl std::str::FromStr for Kind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "I" | "1" => Ok(Kind::I),
            "II" | "2" => Ok(Kind::II),
            "III" | "3" => Ok(Kind::III),
            other => Err(Error::InvalidInput(format!("unknown surrogate kind '{other}' (expected I, II or III)"))),
        }
    }
}

/// Architecture in table notation: `nnw_out` lists the hidden layers of the
/// output network followed by its output width (the leading `n_h` is implied).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SurrogateSpec {
    pub kind: Kind,
    pub family: Family,
    pub nnw_in: Vec<usize>,
    pub n_h: usize,
    pub nnw_out: Vec<usize>,
    /// Retained PCA components (ignored by kind I).
    pub p: usize,
    /// Number of coefficient groups (kind III; 1 otherwise).
    pub q: usize,
    /// Groups `0..trained_groups` are trained; the rest keep their initial weights.
    pub trained_groups: usize,
    pub seed: u64,
}

impl SurrogateSpec {
    /// Output width of each network for a field of dimension `d`.
    pub fn output_width(&self, d: usize) -> Result<usize> {
        match self.kind {
            Kind::I => Ok(d),
            Kind::II => Ok(self.p),
            Kind::III => {
                if self.q == 0 || self.p % self.q != 0 {
                    return Err(Error::Indivisible { p: self.p, q: self.q });
                }
                Ok(self.p / self.q)
            }
        }
    }

    pub fn n_models(&self) -> usize {
        match self.kind {
            Kind::III => self.q,
            _ => 1,
        }
    }

    pub fn architecture(&self, d: usize) -> Result<Architecture> {
        let width = self.output_width(d)?;
        if self.nnw_out.last() != Some(&width) {
            return Err(Error::InvalidInput(format!(
                "output network {:?} must end at the network output width {width}",
                self.nnw_out
            )));
        }
        let mut out = vec![self.n_h];
        out.extend(&self.nnw_out);
        let arch = Architecture { nnw_in: self.nnw_in.clone(), n_h: self.n_h, nnw_out: out };
        arch.validate()?;
        Ok(arch)
    }

    pub fn validate(&self, d: usize) -> Result<()> {
        self.output_width(d)?;
        if self.kind != Kind::I && (self.p == 0 || self.p > d) {
            return Err(Error::InvalidInput(format!("p = {} must be in 1..={d}", self.p)));
        }
        if self.kind != Kind::III && self.q != 1 {
            return Err(Error::InvalidInput(format!("kind {:?} uses a single network (q = 1)", self.kind)));
        }
        if self.trained_groups > self.n_models() {
            return Err(Error::InvalidInput(format!(
                "{} trained groups requested but only {} exist",
                self.trained_groups,
                self.n_models()
            )));
        }
        self.architecture(d).map(|_| ())
    }
}

/// A surrogate with its networks and (once fitted) its preprocessing.
#[derive(Clone, Debug, PartialEq)]
pub struct SurrogateBundle {
    pub spec: SurrogateSpec,
    /// Full field dimension.
    pub d: usize,
    pub rnns: Vec<RnnModel>,
    pub prep: Option<Preprocessing>,
}

impl SurrogateBundle {
    pub fn kind(&self) -> Kind {
        self.spec.kind
    }

    /// Width of every network output.
    pub fn group_width(&self) -> usize {
        self.rnns[0].nnw_out.n_out()
    }

    /// Output index range of network `q`.
    pub fn group_range(&self, q: usize) -> Range<usize> {
        let k = self.group_width();
        q * k..(q + 1) * k
    }

    pub fn group_map(&self) -> Vec<Range<usize>> {
        (0..self.rnns.len()).map(|q| self.group_range(q)).collect()
    }

    pub fn is_trained(&self, q: usize) -> bool {
        q < self.spec.trained_groups
    }

    pub fn n_params(&self) -> usize {
        self.rnns.iter().map(RnnModel::n_params).sum()
    }

    pub fn prep(&self) -> Result<&Preprocessing> {
        self.prep.as_ref().ok_or(Error::NotPrepared)
    }
}

/// Initialize the networks; network `q` is seeded with `derive_seed(seed, q)`.
pub fn build_surrogate(spec: &SurrogateSpec, d: usize) -> Result<SurrogateBundle> {
    spec.validate(d)?;
    let arch = spec.architecture(d)?;
    let rnns = (0..spec.n_models())
        .map(|q| RnnModel::new(&arch, derive_seed(spec.seed, q as u64)))
        .collect::<Result<Vec<_>>>()?;
    Ok(SurrogateBundle { spec: spec.clone(), d, rnns, prep: None })
}

/// Contiguous blocks of `p/q` coefficients, in order.
pub fn split_outputs(coefficients: &[f64], q: usize) -> Result<Vec<Vec<f64>>> {
    let p = coefficients.len();
    if q == 0 || p % q != 0 {
        return Err(Error::Indivisible { p, q });
    }
    if p == 0 {
        return Ok(vec![Vec::new(); q]);
    }
    Ok(coefficients.chunks_exact(p / q).map(<[f64]>::to_vec).collect())
}
