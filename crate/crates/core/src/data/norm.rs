use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Per-feature affine map `x̲ = (x − χ_μ)/χ_s` onto [−1, 1] over the fit data.
///
/// A feature that is constant on the fit data keeps `χ_s = 1` (a pure shift)
/// and is listed in `degenerate`. Values outside the fitted range are mapped
/// by the same affine law, without clamping.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NormalizationSpec {
    pub chi_min: Vec<f64>,
    pub chi_max: Vec<f64>,
    pub chi_mu: Vec<f64>,
    pub chi_s: Vec<f64>,
    pub degenerate: Vec<bool>,
}

impl NormalizationSpec {
    pub fn from_bounds(chi_min: Vec<f64>, chi_max: Vec<f64>) -> Result<Self> {
        if chi_min.len() != chi_max.len() {
            return Err(Error::DimensionMismatch { expected: chi_min.len(), got: chi_max.len() });
        }
        let mut chi_mu = Vec::with_capacity(chi_min.len());
        let mut chi_s = Vec::with_capacity(chi_min.len());
        let mut degenerate = Vec::with_capacity(chi_min.len());
        for (&lo, &hi) in chi_min.iter().zip(&chi_max) {
            if !(lo.is_finite() && hi.is_finite() && lo <= hi) {
                return Err(Error::InvalidInput(format!("invalid feature bounds [{lo}, {hi}]")));
            }
            chi_mu.push(0.5 * (lo + hi));
            let s = 0.5 * (hi - lo);
            degenerate.push(s <= 0.0);
            chi_s.push(if s > 0.0 { s } else { 1.0 });
        }
        Ok(NormalizationSpec { chi_min, chi_max, chi_mu, chi_s, degenerate })
    }

    /// Fit on rows of `n_features` values each.
    pub fn fit<'a>(rows: impl IntoIterator<Item = &'a [f64]>, n_features: usize) -> Result<Self> {
        let mut lo = vec![f64::INFINITY; n_features];
        let mut hi = vec![f64::NEG_INFINITY; n_features];
        let mut seen = false;
        for row in rows {
            if row.len() != n_features {
                return Err(Error::DimensionMismatch { expected: n_features, got: row.len() });
            }
            seen = true;
            for ((l, h), &v) in lo.iter_mut().zip(hi.iter_mut()).zip(row) {
                *l = l.min(v);
                *h = h.max(v);
            }
        }
        if !seen {
            return Err(Error::InvalidInput("normalization needs at least one sample".into()));
        }
        Self::from_bounds(lo, hi)
    }

    pub fn n_features(&self) -> usize {
        self.chi_mu.len()
    }

    pub fn n_degenerate(&self) -> usize {
        self.degenerate.iter().filter(|&&d| d).count()
    }

    /// Normalize a block of consecutive rows in place.
    pub fn normalize_in_place(&self, block: &mut [f64]) {
        let n = self.n_features();
        debug_assert_eq!(block.len() % n, 0);
        for row in block.chunks_exact_mut(n) {
            for (k, v) in row.iter_mut().enumerate() {
                *v = if self.degenerate[k] {
                    *v - self.chi_mu[k]
                } else {
                    // (x − χ_μ)/χ_s written so that rounding keeps [χ_min, χ_max] inside [−1, 1]
                    let (lo, hi) = (self.chi_min[k], self.chi_max[k]);
                    ((*v - lo) - (hi - *v)) / (hi - lo)
                };
            }
        }
    }

    pub fn denormalize_in_place(&self, block: &mut [f64]) {
        let n = self.n_features();
        debug_assert_eq!(block.len() % n, 0);
        for row in block.chunks_exact_mut(n) {
            for ((v, m), s) in row.iter_mut().zip(&self.chi_mu).zip(&self.chi_s) {
                *v = v.mul_add(*s, *m);
            }
        }
    }

    pub fn normalize(&self, block: &[f64]) -> Vec<f64> {
        let mut out = block.to_vec();
        self.normalize_in_place(&mut out);
        out
    }

    pub fn denormalize(&self, block: &[f64]) -> Vec<f64> {
        let mut out = block.to_vec();
        self.denormalize_in_place(&mut out);
        out
    }
}
