//! Constitutive laws of the two phases.
//!
//! Both phases share a Hencky-type elastic potential
//! `ψ = K/2 ln²J + μ/4 (ln C)ᵈᵉᵛ : (ln C)ᵈᵉᵛ`; the matrix evaluates it on the
//! elastic part `Cᵉ = Fᵉᵀ Fᵉ` of a multiplicative split `F = Fᵉ·Fᵖ` and adds
//! J2 plasticity with saturating isotropic hardening
//! `R(γ) = Y (1 − exp(−k γ))`.
//!
//! Stresses are in MPa.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::{exp_sym, sym_eig, SymTensor2, Tensor2};

const NEWTON_MAX_ITERS: usize = 50;
const BISECTION_MAX_ITERS: usize = 200;
/// Allowed drift of `det Fᵖ` from one before it is renormalized.
const PLASTIC_DET_TOL: f64 = 1e-6;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FiberParams {
    /// MPa
    pub k_fib: f64,
    /// MPa
    pub mu_fib: f64,
}

impl FiberParams {
    pub fn from_gpa(k_fib: f64, mu_fib: f64) -> Self {
        FiberParams { k_fib: k_fib * 1e3, mu_fib: mu_fib * 1e3 }
    }
}

impl Default for FiberParams {
    /// K = 16.67 GPa, μ = 12.50 GPa.
    fn default() -> Self {
        FiberParams::from_gpa(16.67, 12.50)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MatrixParams {
    /// MPa
    pub k_mat: f64,
    /// MPa
    pub mu_mat: f64,
    /// Initial yield stress, MPa.
    pub tau_y0: f64,
    /// Hardening saturation, MPa.
    pub y_hard: f64,
    /// Hardening exponent.
    pub k_hard: f64,
}

impl Default for MatrixParams {
    /// K = 2.50 GPa, μ = 1.15 GPa, τ_y⁰ = 100 MPa, Y = 20 MPa, k = 30.
    fn default() -> Self {
        MatrixParams { k_mat: 2500.0, mu_mat: 1150.0, tau_y0: 100.0, y_hard: 20.0, k_hard: 30.0 }
    }
}

impl MatrixParams {
    pub fn hardening(&self, gamma: f64) -> f64 {
        self.y_hard * (1.0 - (-self.k_hard * gamma).exp())
    }

    /// Yield function `f = τ_eq − τ_y⁰ − R(γ)`.
    pub fn yield_function(&self, tau_eq: f64, gamma: f64) -> f64 {
        tau_eq - self.tau_y0 - self.hardening(gamma)
    }

    /// Residual of the scalar return equation at plastic increment `dg`.
    pub fn return_residual(&self, tau_trial: f64, gamma: f64, dg: f64) -> f64 {
        tau_trial - 3.0 * self.mu_mat * dg - self.tau_y0 - self.hardening(gamma + dg)
    }
}

/// Plastic history of one matrix point.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PlasticState {
    pub fp: Tensor2,
    pub gamma: f64,
}

impl Default for PlasticState {
    fn default() -> Self {
        PlasticState { fp: Tensor2::identity(), gamma: 0.0 }
    }
}

/// Equivalent von Mises stress `√(3/2 κᵈᵉᵛ:κᵈᵉᵛ)` of a Kirchhoff stress.
pub fn von_mises(kappa: &Tensor2) -> f64 {
    let d = kappa.sym().dev();
    (1.5 * d.ddot(&d)).sqrt()
}

/// Hyperelastic fiber: `P = K F⁻ᵀ ln J + F⁻ᵀ·[μ (ln C)ᵈᵉᵛ]`.
pub fn fiber_stress(f: &Tensor2, params: &FiberParams) -> Result<(Tensor2, f64)> {
    let j = f.det();
    if !(j > 0.0) {
        return Err(Error::InvalidDeformation { det: j });
    }
    let c = f.right_cauchy_green();
    let dec = sym_eig(&c)?;
    let dev_log_c = dec.reassemble_with(f64::ln).dev();
    let inner = SymTensor2::identity().scale(params.k_fib * j.ln()) + dev_log_c.scale(params.mu_fib);
    let f_inv_t = f.inverse()?.transpose();
    let p = f_inv_t * inner.to_tensor();
    let kappa = p * f.transpose();
    Ok((p, von_mises(&kappa)))
}

/// Plastic increment `Δγ ≥ 0` solving
/// `τ_tr − 3μΔγ − τ_y⁰ − R(γ + Δγ) = 0` for a trial state beyond yield.
///
/// Newton from `Δγ = 0` converges monotonically because the residual is
/// convex and decreasing; bisection on `[0, τ_tr/(3μ)]` is the fallback.
pub fn return_map_increment(tau_trial: f64, gamma: f64, params: &MatrixParams) -> f64 {
    let g = |x: f64| params.return_residual(tau_trial, gamma, x);
    if g(0.0) <= 0.0 {
        return 0.0;
    }
    let three_mu = 3.0 * params.mu_mat;
    let tol = 1e-13 * params.tau_y0;
    let mut x = 0.0;
    for _ in 0..NEWTON_MAX_ITERS {
        let r = g(x);
        if r.abs() <= tol {
            return x;
        }
        let slope = -three_mu - params.y_hard * params.k_hard * (-params.k_hard * (gamma + x)).exp();
        let next = x - r / slope;
        if !next.is_finite() || next < 0.0 {
            break;
        }
        if (next - x).abs() <= f64::EPSILON * next.abs() {
            return next;
        }
        x = next;
    }
    log::debug!("return mapping fell back to bisection (tau_trial = {tau_trial}, gamma = {gamma})");
    bisect(g, 0.0, tau_trial / three_mu)
}

fn bisect(g: impl Fn(f64) -> f64, mut lo: f64, mut hi: f64) -> f64 {
    for _ in 0..BISECTION_MAX_ITERS {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if g(mid) > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

/// Result of one constitutive update of a matrix point.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MatrixResponse {
    pub p: Tensor2,
    pub tau_eq: f64,
    pub state: PlasticState,
    pub delta_gamma: f64,
}

/// Elastic predictor / plastic corrector for the finite-strain J2 matrix.
///
/// The flow `Fᵖ ← exp(Δγ N)·Fᵖ` uses the normal `N = 3/2 Mᵈᵉᵛ/τ_tr` of the
/// trial stress in the intermediate configuration, which is coaxial with the
/// trial `Cᵉ`; the update is exactly isochoric. A plastic increment larger
/// than `dgamma_cap` is refused with [`Error::SubstepRequired`] so the caller
/// can split the load step.
pub fn matrix_update(
    f: &Tensor2,
    state: &PlasticState,
    params: &MatrixParams,
    dgamma_cap: f64,
) -> Result<MatrixResponse> {
    let j = f.det();
    if !(j > 0.0) {
        return Err(Error::InvalidDeformation { det: j });
    }
    let fp_inv = state.fp.inverse()?;
    let fe_trial = *f * fp_inv;
    let dec = sym_eig(&fe_trial.right_cauchy_green())?;
    if let Some((index, &value)) = dec.values.iter().enumerate().find(|(_, &l)| l <= 0.0) {
        return Err(Error::NonPositiveEigenvalue { index, value });
    }

    // Everything below lives in the eigenbasis of the trial Cᵉ.
    let log_c = dec.values.map(f64::ln);
    let mean = (log_c[0] + log_c[1] + log_c[2]) / 3.0;
    let mandel_dev = log_c.map(|l| params.mu_mat * (l - mean));
    let tau_trial = (1.5 * mandel_dev.iter().map(|m| m * m).sum::<f64>()).sqrt();

    let mut delta_gamma = 0.0;
    let mut log_c_new = log_c;
    let mut new_state = *state;
    if params.yield_function(tau_trial, state.gamma) > 0.0 {
        delta_gamma = return_map_increment(tau_trial, state.gamma, params);
        if delta_gamma > dgamma_cap {
            return Err(Error::SubstepRequired { delta_gamma, cap: dgamma_cap });
        }
        let normal = mandel_dev.map(|m| 1.5 * m / tau_trial);
        for k in 0..3 {
            log_c_new[k] -= 2.0 * delta_gamma * normal[k];
        }
        let flow = spectral_with(&dec.vectors, normal.map(|n| n * delta_gamma));
        let mut fp = exp_sym(&flow)?.to_tensor() * state.fp;
        let det_fp = fp.det();
        if (det_fp - 1.0).abs() > PLASTIC_DET_TOL {
            log::warn!("det(Fp) drifted to {det_fp}; renormalizing");
            fp = fp.scale(det_fp.powf(-1.0 / 3.0));
        }
        new_state = PlasticState { fp, gamma: state.gamma + delta_gamma };
    }

    // P = K ln J F⁻ᵀ + Fᵉ·[μ Cᵉ⁻¹·(ln Cᵉ)ᵈᵉᵛ]·Fᵖ⁻ᵀ
    let fp_inv_new = if delta_gamma > 0.0 { new_state.fp.inverse()? } else { fp_inv };
    let fe = *f * fp_inv_new;
    let mean_new = (log_c_new[0] + log_c_new[1] + log_c_new[2]) / 3.0;
    let inner_w = [0, 1, 2].map(|k| params.mu_mat * (log_c_new[k] - mean_new) * (-log_c_new[k]).exp());
    let inner = spectral_with(&dec.vectors, inner_w).to_tensor();
    let ln_j = j.ln();
    let p = f.inverse()?.transpose().scale(params.k_mat * ln_j) + fe * inner * fp_inv_new.transpose();
    let kappa = p * f.transpose();
    Ok(MatrixResponse { p, tau_eq: von_mises(&kappa), state: new_state, delta_gamma })
}

/// `Σₖ wₖ qₖ⊗qₖ` for the columns `qₖ` of `vectors`.
fn spectral_with(vectors: &[[f64; 3]; 3], w: [f64; 3]) -> SymTensor2 {
    let entry = |i: usize, j: usize| (0..3).map(|k| w[k] * vectors[i][k] * vectors[j][k]).sum::<f64>();
    SymTensor2 {
        xx: entry(0, 0),
        yy: entry(1, 1),
        zz: entry(2, 2),
        xy: entry(0, 1),
        yz: entry(1, 2),
        xz: entry(0, 2),
    }
}
