use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use rand::seq::index;
use serde::{Deserialize, Serialize};

use super::eigen::symmetric_eigen;
use crate::data::io::{get_f64s, get_u32, put_f64s, put_u32, to_u32};
use crate::error::{Error, Result};
use crate::rng::seeded;

pub const DEFAULT_DIM_CAP: usize = 10_000;
/// Eigenvalues below this fraction of the largest are treated as zero.
pub const EIGEN_FLOOR: f64 = 1e-12;

pub const PCA_MAGIC: &[u8; 7] = b"RVEPCA1";
pub const PCA_VERSION: u32 = 1;

/// How many principal components to keep.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Retention {
    /// Smallest `p` whose residual eigenvalue fraction is at most δ.
    Delta(f64),
    Fixed(usize),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PcaOptions {
    pub subsample_fraction: f64,
    pub retention: Retention,
    pub seed: u64,
    pub dim_cap: usize,
}

impl Default for PcaOptions {
    fn default() -> Self {
        PcaOptions { subsample_fraction: 0.01, retention: Retention::Fixed(180), seed: 0, dim_cap: DEFAULT_DIM_CAP }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct PcaModel {
    pub d: usize,
    pub p: usize,
    pub mean: Vec<f64>,
    /// All `d` eigenvalues of `AAᵀ`, descending.
    pub eigenvalues: Vec<f64>,
    /// `d × p` row-major; column `i` is the `i`-th principal direction.
    pub components: Vec<f64>,
    pub n_fit: usize,
    pub delta: Option<f64>,
}

/// `1 − Σ_{i≤p} Λᵢ / Σ_k Λ_k` (zero when the spectrum vanishes).
pub fn residual_fraction_of(eigenvalues: &[f64], p: usize) -> f64 {
    let total: f64 = eigenvalues.iter().sum();
    if total <= 0.0 {
        return 0.0;
    }
    let tail: f64 = eigenvalues[p.min(eigenvalues.len())..].iter().sum();
    (tail / total).max(0.0)
}

impl PcaModel {
    /// Fit on a seeded subsample (without replacement) of `snapshots`.
    pub fn fit(snapshots: &[&[f64]], opts: &PcaOptions) -> Result<Self> {
        if !(opts.subsample_fraction > 0.0 && opts.subsample_fraction <= 1.0) {
            return Err(Error::InvalidInput(format!(
                "subsample fraction must be in (0, 1], got {}",
                opts.subsample_fraction
            )));
        }
        let n_all = snapshots.len();
        let n = ((opts.subsample_fraction * n_all as f64).ceil() as usize).min(n_all);
        if n < 2 {
            return Err(Error::InvalidInput(format!("PCA needs at least 2 snapshots, subsample has {n}")));
        }
        let mut picked = if n == n_all {
            (0..n_all).collect::<Vec<_>>()
        } else {
            index::sample(&mut seeded(opts.seed), n_all, n).into_vec()
        };
        picked.sort_unstable();
        let rows: Vec<&[f64]> = picked.iter().map(|&i| snapshots[i]).collect();
        Self::fit_all(&rows, opts.retention, opts.dim_cap)
    }

    /// Fit on every snapshot given.
    pub fn fit_all(rows: &[&[f64]], retention: Retention, dim_cap: usize) -> Result<Self> {
        let n = rows.len();
        if n < 2 {
            return Err(Error::InvalidInput(format!("PCA needs at least 2 snapshots, got {n}")));
        }
        let d = rows[0].len();
        if d > dim_cap {
            return Err(Error::DimensionCap { d, cap: dim_cap });
        }
        if let Some(bad) = rows.iter().find(|r| r.len() != d) {
            return Err(Error::DimensionMismatch { expected: d, got: bad.len() });
        }

        let mut mean = vec![0.0; d];
        for r in rows {
            for (m, v) in mean.iter_mut().zip(r.iter()) {
                *m += v;
            }
        }
        mean.iter_mut().for_each(|m| *m /= n as f64);

        // M = A Aᵀ, accumulated over the upper triangle.
        let mut m = vec![0.0; d * d];
        let mut centred = vec![0.0; d];
        for r in rows {
            for ((c, v), mu) in centred.iter_mut().zip(r.iter()).zip(&mean) {
                *c = v - mu;
            }
            for i in 0..d {
                let ci = centred[i];
                if ci == 0.0 {
                    continue;
                }
                let row = &mut m[i * d..(i + 1) * d];
                for j in i..d {
                    row[j] += ci * centred[j];
                }
            }
        }
        for i in 0..d {
            for j in 0..i {
                m[i * d + j] = m[j * d + i];
            }
        }

        let (mut eigenvalues, vectors) = symmetric_eigen(&m, d)?;
        let floor = EIGEN_FLOOR * eigenvalues.first().copied().unwrap_or(0.0).max(0.0);
        for l in eigenvalues.iter_mut() {
            if *l < floor || *l < 0.0 {
                *l = 0.0;
            }
        }

        let (p, delta) = match retention {
            Retention::Fixed(p) => {
                if p > d {
                    return Err(Error::InvalidInput(format!("cannot retain {p} components of a {d}-dimensional field")));
                }
                (p, None)
            }
            Retention::Delta(delta) => {
                if !(0.0..=1.0).contains(&delta) {
                    return Err(Error::InvalidInput(format!("retention tolerance must be in [0, 1], got {delta}")));
                }
                let p = (0..=d).find(|&p| residual_fraction_of(&eigenvalues, p) <= delta).unwrap_or(d);
                (p, Some(delta))
            }
        };
        let mut components = vec![0.0; d * p];
        for row in 0..d {
            components[row * p..(row + 1) * p].copy_from_slice(&vectors[row * d..row * d + p]);
        }
        Ok(PcaModel { d, p, mean, eigenvalues, components, n_fit: n, delta })
    }

    /// Same model keeping only the leading `p` components.
    pub fn truncated(&self, p: usize) -> Result<Self> {
        if p > self.p {
            return Err(Error::InvalidInput(format!("model retains {} components, {p} requested", self.p)));
        }
        let mut components = Vec::with_capacity(self.d * p);
        for row in 0..self.d {
            components.extend_from_slice(&self.components[row * self.p..row * self.p + p]);
        }
        Ok(PcaModel { p, components, delta: None, ..self.clone() })
    }

    pub fn residual_fraction(&self, p: usize) -> f64 {
        residual_fraction_of(&self.eigenvalues, p)
    }

    /// `(p, residual fraction)` for `p = 1..=d`.
    pub fn residual_curve(&self) -> Vec<(usize, f64)> {
        (1..=self.d).map(|p| (p, self.residual_fraction(p))).collect()
    }

    /// `ξ = Vᵀ(x − a_μ)`
    pub fn project(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.d {
            return Err(Error::DimensionMismatch { expected: self.d, got: x.len() });
        }
        let mut xi = vec![0.0; self.p];
        for (row, (v, mu)) in x.iter().zip(&self.mean).enumerate() {
            let c = v - mu;
            for (k, w) in xi.iter_mut().zip(&self.components[row * self.p..(row + 1) * self.p]) {
                *k += w * c;
            }
        }
        Ok(xi)
    }

    /// `x̂ = V ξ + a_μ`
    pub fn reconstruct(&self, xi: &[f64]) -> Result<Vec<f64>> {
        if xi.len() != self.p {
            return Err(Error::DimensionMismatch { expected: self.p, got: xi.len() });
        }
        Ok((0..self.d)
            .map(|row| {
                let w = &self.components[row * self.p..(row + 1) * self.p];
                self.mean[row] + w.iter().zip(xi).map(|(a, b)| a * b).sum::<f64>()
            })
            .collect())
    }

    /// `‖x − x̂(ξ(x))‖²`, the squared distance of `x` from the retained subspace.
    pub fn residual_sq(&self, x: &[f64]) -> Result<f64> {
        let xhat = self.reconstruct(&self.project(x)?)?;
        Ok(x.iter().zip(&xhat).map(|(a, b)| (a - b) * (a - b)).sum())
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        let mut w = BufWriter::new(File::create(path)?);
        w.write_all(PCA_MAGIC)?;
        put_u32(&mut w, PCA_VERSION)?;
        put_u32(&mut w, to_u32(self.d, "dimension")?)?;
        put_u32(&mut w, to_u32(self.p, "component count")?)?;
        put_u32(&mut w, to_u32(self.n_fit, "snapshot count")?)?;
        put_f64s(&mut w, &[self.delta.unwrap_or(f64::NAN)])?;
        put_f64s(&mut w, &self.mean)?;
        put_f64s(&mut w, &self.eigenvalues)?;
        put_f64s(&mut w, &self.components)?;
        w.flush()?;
        Ok(())
    }

    pub fn read(path: &Path) -> Result<Self> {
        let mut r = BufReader::new(File::open(path)?);
        let mut magic = [0u8; 7];
        r.read_exact(&mut magic)?;
        if &magic != PCA_MAGIC {
            return Err(Error::Format(format!("{} is not a PCA model file", path.display())));
        }
        let version = get_u32(&mut r)?;
        if version != PCA_VERSION {
            return Err(Error::Format(format!("unsupported PCA model version {version}")));
        }
        let d = get_u32(&mut r)? as usize;
        let p = get_u32(&mut r)? as usize;
        let n_fit = get_u32(&mut r)? as usize;
        let delta = get_f64s(&mut r, 1)?[0];
        let mean = get_f64s(&mut r, d)?;
        let eigenvalues = get_f64s(&mut r, d)?;
        let components = get_f64s(&mut r, d * p)?;
        Ok(PcaModel { d, p, mean, eigenvalues, components, n_fit, delta: (!delta.is_nan()).then_some(delta) })
    }
}
