//! Point-ensemble stand-in for a finite-element volume element.
//!
//! Every point sees the local deformation `F_p = I + A_p (F_M − I)`, where
//! `A_p` is a fixed random linear map on the in-plane components of `F − I`.
//! Matrix points come first in every field, fiber points follow.

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::material::{fiber_stress, matrix_update, FiberParams, MatrixParams, PlasticState};
use crate::error::{Error, Result};
use crate::pathgen::{u_to_f, LoadingPath};
use crate::rng::seeded;
use crate::tensor::Tensor2;

/// In-plane components of `F − I`, in the order (xx, xy, yx, yy).
const PLANE: [(usize, usize); 4] = [(0, 0), (0, 1), (1, 0), (1, 1)];

/// Maximum number of halvings of one load step.
pub const MAX_HALVINGS: u32 = 8;

/// Linear map on the in-plane part of `F − I`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Concentration(pub [[f64; 4]; 4]);

impl Concentration {
    pub fn identity() -> Self {
        let mut a = [[0.0; 4]; 4];
        for (i, row) in a.iter_mut().enumerate() {
            row[i] = 1.0;
        }
        Concentration(a)
    }

    /// Local deformation gradient for the macroscopic `f`.
    pub fn localize(&self, f: &Tensor2) -> Tensor2 {
        let g = PLANE.map(|(i, j)| f.0[i][j] - if i == j { 1.0 } else { 0.0 });
        let mut out = Tensor2::identity();
        for (row, &(i, j)) in self.0.iter().zip(PLANE.iter()) {
            out.0[i][j] += row.iter().zip(g.iter()).map(|(a, b)| a * b).sum::<f64>();
        }
        out
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EnsembleConfig {
    pub d_gamma: usize,
    pub n_fiber: usize,
    pub perturbation_amplitude: f64,
    pub seed: u64,
    /// Largest plastic increment accepted in a single matrix update.
    pub dgamma_cap: f64,
    pub fiber: FiberParams,
    pub matrix: MatrixParams,
}

impl Default for EnsembleConfig {
    fn default() -> Self {
        EnsembleConfig {
            d_gamma: 200,
            n_fiber: 80,
            perturbation_amplitude: 0.3,
            seed: 0,
            dgamma_cap: 0.05,
            fiber: FiberParams::default(),
            matrix: MatrixParams::default(),
        }
    }
}

impl EnsembleConfig {
    pub fn validate(&self) -> Result<()> {
        let m = &self.matrix;
        let ok = self.d_gamma >= 1
            && (0.0..1.0).contains(&self.perturbation_amplitude)
            && self.dgamma_cap > 0.0
            && self.fiber.k_fib > 0.0
            && self.fiber.mu_fib > 0.0
            && [m.k_mat, m.mu_mat, m.tau_y0, m.y_hard, m.k_hard].iter().all(|&v| v > 0.0);
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidInput(format!("invalid ensemble configuration: {self:?}")))
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct RveEnsemble {
    pub matrix_maps: Vec<Concentration>,
    pub matrix_states: Vec<PlasticState>,
    pub fiber_maps: Vec<Concentration>,
    pub config: EnsembleConfig,
}

impl RveEnsemble {
    pub fn d_gamma(&self) -> usize {
        self.matrix_maps.len()
    }

    pub fn d_tau(&self) -> usize {
        self.matrix_maps.len() + self.fiber_maps.len()
    }

    /// Average of all concentration maps.
    pub fn mean_map(&self) -> Concentration {
        let n = self.d_tau() as f64;
        let mut mean = [[0.0; 4]; 4];
        for c in self.matrix_maps.iter().chain(&self.fiber_maps) {
            for (mr, cr) in mean.iter_mut().zip(c.0.iter()) {
                for (m, v) in mr.iter_mut().zip(cr) {
                    *m += v;
                }
            }
        }
        Concentration(mean.map(|r| r.map(|v| v / n)))
    }

    /// Fresh copy with every matrix point back in its virgin state.
    pub fn reset(&self) -> Self {
        let mut e = self.clone();
        e.matrix_states.iter_mut().for_each(|s| *s = PlasticState::default());
        e
    }
}

/// Random concentration ensemble; the perturbations are re-centred to zero
/// mean and then scaled so that the largest has Frobenius norm equal to the
/// amplitude (which bounds its operator norm).
pub fn build_ensemble(cfg: &EnsembleConfig) -> Result<RveEnsemble> {
    cfg.validate()?;
    let n = cfg.d_gamma + cfg.n_fiber;
    let mut rng = seeded(cfg.seed);
    let mut raw: Vec<[[f64; 4]; 4]> =
        (0..n).map(|_| [[0.0; 4]; 4].map(|r| r.map(|_: f64| rng.gen_range(-1.0..=1.0)))).collect();

    let mut mean = [[0.0; 4]; 4];
    for g in &raw {
        for i in 0..4 {
            for j in 0..4 {
                mean[i][j] += g[i][j] / n as f64;
            }
        }
    }
    for g in raw.iter_mut() {
        for i in 0..4 {
            for j in 0..4 {
                g[i][j] -= mean[i][j];
            }
        }
    }
    let max_norm = raw
        .iter()
        .map(|g| g.iter().flatten().map(|v| v * v).sum::<f64>().sqrt())
        .fold(0.0, f64::max);
    let scale = if max_norm > 0.0 { cfg.perturbation_amplitude / max_norm } else { 0.0 };

    let maps: Vec<Concentration> = raw
        .iter()
        .map(|g| {
            let mut a = Concentration::identity();
            if scale > 0.0 {
                for i in 0..4 {
                    for j in 0..4 {
                        a.0[i][j] += scale * g[i][j];
                    }
                }
            }
            a
        })
        .collect();
    let (matrix_maps, fiber_maps) = maps.split_at(cfg.d_gamma);
    Ok(RveEnsemble {
        matrix_maps: matrix_maps.to_vec(),
        matrix_states: vec![PlasticState::default(); cfg.d_gamma],
        fiber_maps: fiber_maps.to_vec(),
        config: cfg.clone(),
    })
}

#[derive(Clone, Debug, PartialEq)]
pub struct FieldSnapshot {
    pub gamma_field: Vec<f64>,
    pub tau_field: Vec<f64>,
    /// Volume average of the local first Piola–Kirchhoff stresses, MPa.
    pub p_hom: Tensor2,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SequenceResult {
    pub snapshots: Vec<FieldSnapshot>,
    /// Set when a step could not be integrated and the sequence was cut there.
    pub truncated: bool,
}

/// Advance one matrix point from `f_prev` to `f_next`, halving the step on
/// demand.
fn advance_matrix_point(
    f_prev: &Tensor2,
    f_next: &Tensor2,
    state: &PlasticState,
    params: &MatrixParams,
    cap: f64,
) -> Result<(Tensor2, f64, PlasticState)> {
    let mut last_err = None;
    for halvings in 0..=MAX_HALVINGS {
        let n = 1usize << halvings;
        let mut s = *state;
        let mut out = None;
        for k in 1..=n {
            let t = k as f64 / n as f64;
            let f = if k == n { *f_next } else { *f_prev + (*f_next - *f_prev).scale(t) };
            match matrix_update(&f, &s, params, cap) {
                Ok(r) => {
                    s = r.state;
                    out = Some((r.p, r.tau_eq));
                }
                Err(e @ Error::SubstepRequired { .. }) => {
                    last_err = Some(e);
                    out = None;
                    break;
                }
                Err(e) => return Err(e),
            }
        }
        if let Some((p, tau)) = out {
            if halvings > 0 {
                log::trace!("load step integrated with {n} sub-steps");
            }
            return Ok((p, tau, s));
        }
    }
    Err(last_err.expect("at least one attempt"))
}

/// Drive the ensemble along `path`; one snapshot per path step.
pub fn run_sequence(path: &LoadingPath, ensemble: &RveEnsemble) -> SequenceResult {
    let cfg = &ensemble.config;
    let mut states = ensemble.matrix_states.clone();
    let mut snapshots = Vec::with_capacity(path.len());
    let n_points = ensemble.d_tau() as f64;
    let mut f_prev = Tensor2::identity();

    for (t, u) in path.steps.iter().enumerate() {
        let f_macro = u_to_f(u);
        let step = (|| -> Result<FieldSnapshot> {
            let mut gamma_field = Vec::with_capacity(ensemble.d_gamma());
            let mut tau_field = Vec::with_capacity(ensemble.d_tau());
            let mut p_sum = Tensor2::zero();
            let mut new_states = Vec::with_capacity(states.len());
            for (map, state) in ensemble.matrix_maps.iter().zip(&states) {
                let f0 = map.localize(&f_prev);
                let f1 = map.localize(&f_macro);
                let (p, tau, s) = advance_matrix_point(&f0, &f1, state, &cfg.matrix, cfg.dgamma_cap)?;
                gamma_field.push(s.gamma);
                tau_field.push(tau);
                p_sum = p_sum + p;
                new_states.push(s);
            }
            for map in &ensemble.fiber_maps {
                let (p, tau) = fiber_stress(&map.localize(&f_macro), &cfg.fiber)?;
                tau_field.push(tau);
                p_sum = p_sum + p;
            }
            states = new_states;
            Ok(FieldSnapshot { gamma_field, tau_field, p_hom: p_sum.scale(1.0 / n_points) })
        })();
        match step {
            Ok(s) => snapshots.push(s),
            Err(e) => {
                log::warn!("sequence truncated at step {t} of {}: {e}", path.len());
                return SequenceResult { snapshots, truncated: true };
            }
        }
        f_prev = f_macro;
    }
    SequenceResult { snapshots, truncated: false }
}

/// [`run_sequence`] over many paths in parallel; results keep the input order.
pub fn run_sequences(paths: &[LoadingPath], ensemble: &RveEnsemble) -> Vec<SequenceResult> {
    paths.par_iter().map(|p| run_sequence(p, ensemble)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pathgen::{generate_cyclic_path, CyclicConfig, PathKind};
    use crate::tensor::SymTensor2;

    fn small(amplitude: f64) -> EnsembleConfig {
        EnsembleConfig { d_gamma: 6, n_fiber: 3, perturbation_amplitude: amplitude, seed: 9, ..Default::default() }
    }

    #[test]
    fn counts_and_mean_map() {
        let e = build_ensemble(&small(0.3)).unwrap();
        assert_eq!((e.d_gamma(), e.d_tau()), (6, 9));
        let mean = e.mean_map();
        let id = Concentration::identity();
        for i in 0..4 {
            for j in 0..4 {
                assert!((mean.0[i][j] - id.0[i][j]).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn zero_amplitude_gives_identity_maps() {
        let e = build_ensemble(&small(0.0)).unwrap();
        assert!(e.matrix_maps.iter().chain(&e.fiber_maps).all(|m| *m == Concentration::identity()));
    }

    #[test]
    fn identity_macro_state_maps_to_identity() {
        let e = build_ensemble(&small(0.5)).unwrap();
        for m in e.matrix_maps.iter().chain(&e.fiber_maps) {
            assert_eq!(m.localize(&Tensor2::identity()), Tensor2::identity());
        }
    }

    #[test]
    fn identity_path_gives_zero_fields() {
        let e = build_ensemble(&small(0.3)).unwrap();
        let path = LoadingPath::from_stretches(vec![SymTensor2::identity(); 4], PathKind::RandomWalk);
        let r = run_sequence(&path, &e);
        assert!(!r.truncated);
        assert_eq!(r.snapshots.len(), 4);
        for s in &r.snapshots {
            assert!(s.gamma_field.iter().chain(&s.tau_field).all(|&v| v == 0.0));
            assert_eq!(s.p_hom, Tensor2::zero());
        }
    }

    #[test]
    fn gamma_is_monotone_along_a_cyclic_path() {
        let e = build_ensemble(&small(0.3)).unwrap();
        let cfg = CyclicConfig { n_reversals: 3, amplitude_max: 0.08, step_size: 4e-3, seed: 5 };
        let r = run_sequence(&generate_cyclic_path(&cfg).unwrap(), &e);
        assert!(!r.truncated);
        for w in r.snapshots.windows(2) {
            for (a, b) in w[0].gamma_field.iter().zip(&w[1].gamma_field) {
                assert!(b >= a);
            }
        }
        assert!(r.snapshots.iter().any(|s| s.gamma_field.iter().any(|&g| g > 0.0)));
    }
}
