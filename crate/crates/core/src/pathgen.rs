//! Macro loading paths: random walks and proportional cyclic paths in the
//! right stretch tensor, with their deformation gradients and Green-Lagrange
//! strains.
//!
//! Termination of a random walk uses the stretch deviation
//! `maxᵢ |λᵢ(U) − 1| > r_max`; stretch eigenvalues sit near one, so a bound on
//! `|λᵢ|` itself would end every path at its first step.

use std::f64::consts::PI;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::{self, SimRng};
use crate::tensor::{sqrt_spd, sym_eig, SymTensor2, Tensor2};

/// Recorded in manifests next to generated path sets.
pub const TERMINATION_RULE: &str = "max_i |lambda_i(U) - 1| > r_max (stretch deviation)";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RandomWalkConfig {
    /// Lower bound of the increment radius; increments are strictly larger.
    pub delta_r_min: f64,
    /// Upper bound of the increment radius (inclusive).
    pub delta_r: f64,
    pub r_max: f64,
    pub max_steps: usize,
    pub seed: u64,
}

impl Default for RandomWalkConfig {
    fn default() -> Self {
        RandomWalkConfig {
            delta_r_min: 5e-4,
            delta_r: 5e-3,
            r_max: 0.1,
            max_steps: 10_000,
            seed: 0,
        }
    }
}

impl RandomWalkConfig {
    pub fn validate(&self) -> Result<()> {
        let ok = self.delta_r_min >= 0.0
            && self.delta_r_min < self.delta_r
            && self.delta_r < self.r_max
            && self.r_max < 1.0
            && self.max_steps > 0;
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidInput(format!(
                "random walk requires 0 <= delta_r_min < delta_r < r_max < 1 and max_steps > 0, got {self:?}"
            )))
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PathKind {
    RandomWalk,
    Cyclic,
}

#[derive(Clone, Debug, PartialEq)]
pub struct LoadingPath {
    /// Right stretch tensor per step; step 0 is the identity.
    pub steps: Vec<SymTensor2>,
    /// Green-Lagrange strain per step.
    pub strains: Vec<SymTensor2>,
    pub kind: PathKind,
}

impl LoadingPath {
    pub fn from_stretches(steps: Vec<SymTensor2>, kind: PathKind) -> Self {
        let strains = steps.iter().map(u_to_e).collect();
        LoadingPath { steps, strains, kind }
    }

    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }

    /// Input features `(E_xx, E_yy, E_xy)` per step.
    pub fn strain_features(&self) -> Vec<[f64; 3]> {
        self.strains.iter().map(|e| [e.xx, e.yy, e.xy]).collect()
    }
}

/// One random in-plane stretch increment `Δλ₁ n₁⊗n₁ + Δλ₂ n₂⊗n₂`.
///
/// The squared radius `Δλ₁² + Δλ₂²` is uniform on `(ΔR_min², ΔR²]` and is split
/// at a uniform fraction between the two eigenvalues; each eigenvalue gets an
/// independent random sign so that paths can unload.
pub fn random_increment(rng: &mut SimRng, cfg: &RandomWalkConfig) -> SymTensor2 {
    let hi = cfg.delta_r * cfg.delta_r;
    let lo = cfg.delta_r_min * cfg.delta_r_min;
    // gen::<f64>() is in [0, 1), so the radius lands in (lo, hi].
    let radius_sq = hi - rng.gen::<f64>() * (hi - lo);
    let split: f64 = rng.gen();
    let mut l1 = (split * radius_sq).sqrt();
    let mut l2 = ((1.0 - split) * radius_sq).sqrt();
    if rng.gen::<bool>() {
        l1 = -l1;
    }
    if rng.gen::<bool>() {
        l2 = -l2;
    }
    let theta = rng.gen::<f64>() * PI;
    in_plane_spectral(l1, l2, theta)
}

/// `a n₁⊗n₁ + b n₂⊗n₂` with `n₁ = (cos θ, sin θ, 0)`, `n₂ ⟂ n₁` in plane.
fn in_plane_spectral(a: f64, b: f64, theta: f64) -> SymTensor2 {
    let (s, c) = theta.sin_cos();
    SymTensor2::plane(
        a * c * c + b * s * s,
        a * s * s + b * c * c,
        (a - b) * c * s,
        0.0,
    )
}

/// Largest stretch deviation `maxᵢ |λᵢ − 1|`.
pub fn stretch_deviation(u: &SymTensor2) -> f64 {
    sym_eig(u)
        .map(|d| d.values.iter().map(|l| (l - 1.0).abs()).fold(0.0, f64::max))
        .unwrap_or(f64::INFINITY)
}

/// Random walk in `U` starting from the identity. The step that first pushes
/// the stretch deviation beyond `r_max` is kept as the terminal step.
pub fn generate_random_path(cfg: &RandomWalkConfig) -> Result<LoadingPath> {
    cfg.validate()?;
    let mut rng = rng::seeded(cfg.seed);
    let mut u = SymTensor2::identity();
    let mut steps = vec![u];
    for _ in 0..cfg.max_steps {
        u = u + random_increment(&mut rng, cfg);
        steps.push(u);
        if stretch_deviation(&u) > cfg.r_max {
            break;
        }
    }
    Ok(LoadingPath::from_stretches(steps, PathKind::RandomWalk))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CyclicConfig {
    pub n_reversals: usize,
    pub amplitude_max: f64,
    pub step_size: f64,
    pub seed: u64,
}

impl CyclicConfig {
    pub fn validate(&self) -> Result<()> {
        let ok = self.n_reversals >= 1
            && self.step_size > 0.0
            && self.step_size < self.amplitude_max
            && self.amplitude_max < 0.5;
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidInput(format!(
                "cyclic path requires n_reversals >= 1 and 0 < step_size < amplitude_max < 0.5, got {self:?}"
            )))
        }
    }
}

/// Random loading direction and reversal amplitudes of a cyclic path.
#[derive(Clone, Debug, PartialEq)]
pub struct CyclicPlan {
    /// Unit-norm symmetric in-plane direction of the strain.
    pub direction: SymTensor2,
    /// Knots of the load factor: `0, a₁, …, a_n, 0`.
    pub knots: Vec<f64>,
}

pub fn cyclic_plan(cfg: &CyclicConfig) -> Result<CyclicPlan> {
    cfg.validate()?;
    let mut rng = rng::seeded(cfg.seed);
    let phi = rng.gen::<f64>() * 2.0 * PI;
    let theta = rng.gen::<f64>() * PI;
    let direction = in_plane_spectral(phi.cos(), phi.sin(), theta);
    let mut knots = Vec::with_capacity(cfg.n_reversals + 2);
    knots.push(0.0);
    for _ in 0..cfg.n_reversals {
        knots.push(rng.gen_range(-cfg.amplitude_max..=cfg.amplitude_max));
    }
    knots.push(0.0);
    Ok(CyclicPlan { direction, knots })
}

/// Piecewise-linear ramp through `knots`, each leg split into equal steps no
/// longer than `step_size`. Knot values are hit exactly.
pub fn load_factor_ramp(knots: &[f64], step_size: f64) -> Vec<f64> {
    let mut s = vec![knots.first().copied().unwrap_or(0.0)];
    for leg in knots.windows(2) {
        let (a, b) = (leg[0], leg[1]);
        let n = ((b - a).abs() / step_size).ceil() as usize;
        for j in 1..n {
            s.push(a + (b - a) * j as f64 / n as f64);
        }
        if n > 0 {
            s.push(b);
        }
    }
    s
}

/// Proportional cyclic path: the Green-Lagrange strain follows `E(t) = s(t)·D`
/// exactly, and `U(t) = √(I + 2 s(t) D)` shares the eigenvectors of `D`.
pub fn generate_cyclic_path(cfg: &CyclicConfig) -> Result<LoadingPath> {
    let plan = cyclic_plan(cfg)?;
    let ramp = load_factor_ramp(&plan.knots, cfg.step_size);
    let d = plan.direction;
    let mut steps = Vec::with_capacity(ramp.len());
    let mut strains = Vec::with_capacity(ramp.len());
    for &s in &ramp {
        let e = d.scale(s);
        let u = if s == 0.0 {
            SymTensor2::identity()
        } else {
            sqrt_spd(&(SymTensor2::identity() + e.scale(2.0)))?
        };
        steps.push(u);
        strains.push(e);
    }
    Ok(LoadingPath { steps, strains, kind: PathKind::Cyclic })
}

/// A mixed set of random-walk and cyclic paths.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PathSetConfig {
    pub n_random: usize,
    pub n_cyclic: usize,
    pub delta_r_min: f64,
    pub delta_r: f64,
    pub r_max: f64,
    pub max_steps: usize,
    /// Load-factor step of cyclic paths.
    pub cyclic_step: f64,
    /// Inclusive range of the number of reversals of a cyclic path.
    pub reversals: (usize, usize),
    pub seed: u64,
}

impl Default for PathSetConfig {
    fn default() -> Self {
        let rw = RandomWalkConfig::default();
        PathSetConfig {
            n_random: 200,
            n_cyclic: 40,
            delta_r_min: rw.delta_r_min,
            delta_r: rw.delta_r,
            r_max: rw.r_max,
            max_steps: rw.max_steps,
            cyclic_step: rw.delta_r,
            reversals: (2, 6),
            seed: 0,
        }
    }
}

impl PathSetConfig {
    pub fn random_walk(&self, index: u64) -> RandomWalkConfig {
        RandomWalkConfig {
            delta_r_min: self.delta_r_min,
            delta_r: self.delta_r,
            r_max: self.r_max,
            max_steps: self.max_steps,
            seed: rng::derive_seed(self.seed, index),
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.random_walk(0).validate()?;
        let (lo, hi) = self.reversals;
        if lo == 0 || lo > hi {
            return Err(Error::InvalidInput(format!("invalid reversal range {:?}", self.reversals)));
        }
        if self.n_cyclic > 0 {
            CyclicConfig { n_reversals: lo, amplitude_max: self.r_max, step_size: self.cyclic_step, seed: 0 }
                .validate()?;
        }
        Ok(())
    }
}

/// Random walks first, then cyclic paths; path `i` draws from the child
/// seed `derive_seed(seed, i)`, so each path can be regenerated on its own.
pub fn generate_path_set(cfg: &PathSetConfig) -> Result<Vec<LoadingPath>> {
    cfg.validate()?;
    let mut paths = Vec::with_capacity(cfg.n_random + cfg.n_cyclic);
    for i in 0..cfg.n_random {
        paths.push(generate_random_path(&cfg.random_walk(i as u64))?);
    }
    for j in 0..cfg.n_cyclic {
        let seed = rng::derive_seed(cfg.seed, (cfg.n_random + j) as u64);
        let mut r = rng::seeded(seed);
        let n_reversals = r.gen_range(cfg.reversals.0..=cfg.reversals.1);
        let cc = CyclicConfig { n_reversals, amplitude_max: cfg.r_max, step_size: cfg.cyclic_step, seed: r.gen() };
        paths.push(generate_cyclic_path(&cc)?);
    }
    Ok(paths)
}

/// `F = R·U` with `R = I`.
pub fn u_to_f(u: &SymTensor2) -> Tensor2 {
    u.to_tensor()
}

/// `E = ½(U·U − I)`, evaluated with fused multiply-adds.
pub fn u_to_e(u: &SymTensor2) -> SymTensor2 {
    let m = u.to_matrix();
    let entry = |i: usize, j: usize, delta: f64| {
        let v = m[i][0].mul_add(m[0][j], m[i][1].mul_add(m[1][j], m[i][2].mul_add(m[2][j], -delta)));
        0.5 * v
    };
    SymTensor2 {
        xx: entry(0, 0, 1.0),
        yy: entry(1, 1, 1.0),
        zz: entry(2, 2, 1.0),
        xy: entry(0, 1, 0.0),
        yz: entry(1, 2, 0.0),
        xz: entry(0, 2, 0.0),
    }
}

/// Inverse of [`u_to_e`]: `U = √(I + 2E)`.
pub fn e_to_u(e: &SymTensor2) -> Result<SymTensor2> {
    sqrt_spd(&(SymTensor2::identity() + e.scale(2.0)))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn eigen_norm(t: &SymTensor2) -> f64 {
        let d = sym_eig(t).unwrap();
        d.values.iter().map(|l| l * l).sum::<f64>().sqrt()
    }

    #[test]
    fn increments_respect_radius_bounds_and_stay_in_plane() {
        let cfg = RandomWalkConfig::default();
        let mut rng = rng::seeded(3);
        for _ in 0..10_000 {
            let du = random_increment(&mut rng, &cfg);
            let r = eigen_norm(&du);
            assert!(r > cfg.delta_r_min && r <= cfg.delta_r * (1.0 + 1e-12), "radius {r}");
            assert_eq!((du.zz, du.xz, du.yz), (0.0, 0.0, 0.0));
        }
    }

    #[test]
    fn random_path_is_deterministic_and_terminates_past_r_max() {
        let cfg = RandomWalkConfig { seed: 11, ..Default::default() };
        let a = generate_random_path(&cfg).unwrap();
        let b = generate_random_path(&cfg).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.steps[0], SymTensor2::identity());
        assert_eq!(a.strains[0], SymTensor2::zero());
        let last = a.steps.last().unwrap();
        assert!(stretch_deviation(last) > 0.1);
        for u in &a.steps[..a.len() - 1] {
            assert!(stretch_deviation(u) <= 0.1);
        }
    }

    #[test]
    fn max_steps_caps_the_walk() {
        let cfg = RandomWalkConfig { max_steps: 5, ..Default::default() };
        assert_eq!(generate_random_path(&cfg).unwrap().len(), 6);
    }

    #[test]
    fn invalid_configs_are_rejected() {
        let bad = RandomWalkConfig { delta_r_min: 0.01, ..Default::default() };
        assert!(generate_random_path(&bad).is_err());
        let bad = CyclicConfig { n_reversals: 0, amplitude_max: 0.1, step_size: 0.01, seed: 0 };
        assert!(generate_cyclic_path(&bad).is_err());
    }

    #[test]
    fn single_reversal_returns_to_identity() {
        let cfg = CyclicConfig { n_reversals: 1, amplitude_max: 0.08, step_size: 0.002, seed: 5 };
        let path = generate_cyclic_path(&cfg).unwrap();
        let visits = path.steps.iter().filter(|u| **u == SymTensor2::identity()).count();
        assert_eq!(visits, 2);
    }

    #[test]
    fn cyclic_steps_share_direction_eigenvectors() {
        let cfg = CyclicConfig { n_reversals: 4, amplitude_max: 0.1, step_size: 0.003, seed: 9 };
        let plan = cyclic_plan(&cfg).unwrap();
        let q = sym_eig(&plan.direction).unwrap();
        let path = generate_cyclic_path(&cfg).unwrap();
        for u in &path.steps {
            // Qᵀ U Q must be diagonal.
            let m = u.to_matrix();
            for a in 0..3 {
                for b in 0..3 {
                    if a == b {
                        continue;
                    }
                    let va = q.vector(a);
                    let vb = q.vector(b);
                    let mut x = 0.0;
                    for i in 0..3 {
                        for j in 0..3 {
                            x += va[i] * m[i][j] * vb[j];
                        }
                    }
                    assert!(x.abs() < 1e-12, "off-diagonal {x}");
                }
            }
        }
    }

    #[test]
    fn u_to_f_and_u_to_e_basics() {
        assert_eq!(u_to_f(&SymTensor2::identity()), Tensor2::identity());
        let u = SymTensor2::diag(1.1, 0.95, 1.0);
        assert_eq!(u_to_f(&u), u.to_tensor());
        assert_eq!(u_to_e(&SymTensor2::identity()), SymTensor2::zero());
        let e = u_to_e(&SymTensor2::diag(1.1, 1.0, 1.0));
        assert!((e.xx - 0.105).abs() < 1e-15);
        assert_eq!((e.yy, e.zz, e.xy), (0.0, 0.0, 0.0));
    }

    #[test]
    fn e_to_u_inverts_u_to_e() {
        let u = SymTensor2::plane(1.04, 0.97, 0.015, 1.0);
        let back = e_to_u(&u_to_e(&u)).unwrap();
        assert!((back - u).norm() < 1e-14);
    }
}
