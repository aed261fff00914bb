use super::dense::{accumulate_param_grads, affine_rows, backprop_rows, dot, uniform_init};
use crate::rng::SimRng;

/// Gate order used for every per-gate array: update, reset, candidate.
pub const GATE_U: usize = 0;
pub const GATE_R: usize = 1;
pub const GATE_C: usize = 2;

#[inline]
pub fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// Single-layer GRU with an input-side and a hidden-side bias on each gate
/// path. Matrices are `[n_h][n_I]` (input side) and `[n_h][n_h]` (hidden side).
#[derive(Clone, Debug, PartialEq)]
pub struct GruCell {
    pub n_i: usize,
    pub n_h: usize,
    pub wx: [Vec<f64>; 3],
    pub wh: [Vec<f64>; 3],
    pub bx: [Vec<f64>; 3],
    pub bh: [Vec<f64>; 3],
}

impl GruCell {
    pub fn zeros(n_i: usize, n_h: usize) -> Self {
        GruCell {
            n_i,
            n_h,
            wx: std::array::from_fn(|_| vec![0.0; n_h * n_i]),
            wh: std::array::from_fn(|_| vec![0.0; n_h * n_h]),
            bx: std::array::from_fn(|_| vec![0.0; n_h]),
            bh: std::array::from_fn(|_| vec![0.0; n_h]),
        }
    }

    pub fn init(n_i: usize, n_h: usize, rng: &mut SimRng) -> Self {
        GruCell {
            n_i,
            n_h,
            wx: std::array::from_fn(|_| uniform_init(rng, n_h * n_i, n_i)),
            wh: std::array::from_fn(|_| uniform_init(rng, n_h * n_h, n_h)),
            bx: std::array::from_fn(|_| uniform_init(rng, n_h, n_i)),
            bh: std::array::from_fn(|_| uniform_init(rng, n_h, n_h)),
        }
    }

    /// `3·n_h·(n_h + n_I + 2)`
    pub fn n_params(&self) -> usize {
        3 * self.n_h * (self.n_h + self.n_i + 2)
    }
}

/// One step for a single sequence.
pub fn gru_step(cell: &GruCell, x: &[f64], h_prev: &[f64]) -> Vec<f64> {
    let (n_i, n_h) = (cell.n_i, cell.n_h);
    assert_eq!(x.len(), n_i, "GRU input width");
    assert_eq!(h_prev.len(), n_h, "GRU hidden width");
    (0..n_h)
        .map(|j| {
            let zx = |g: usize| cell.bx[g][j] + dot(&cell.wx[g][j * n_i..(j + 1) * n_i], x);
            let zh = |g: usize| cell.bh[g][j] + dot(&cell.wh[g][j * n_h..(j + 1) * n_h], h_prev);
            let r = sigmoid(zx(GATE_R) + zh(GATE_R));
            let u = sigmoid(zx(GATE_U) + zh(GATE_U));
            let c = (zx(GATE_C) + r * zh(GATE_C)).tanh();
            u * h_prev[j] + (1.0 - u) * c
        })
        .collect()
}

/// Everything a batched recurrence keeps for the backward pass; all blocks
/// are time-major `(T·B) × n_h`.
#[derive(Clone, Debug, Default)]
pub(crate) struct GruTrace {
    pub h: Vec<f64>,
    pub u: Vec<f64>,
    pub r: Vec<f64>,
    pub c: Vec<f64>,
    /// Hidden-side candidate term `W_h h_prev + b_h`.
    pub hc: Vec<f64>,
}

/// Run the recurrence over `steps` steps of `batch` rows each. `xp` is the
/// time-major block of cell inputs.
pub(crate) fn gru_forward(cell: &GruCell, xp: &[f64], steps: usize, batch: usize, h0: f64) -> GruTrace {
    let n_h = cell.n_h;
    let rows = steps * batch;
    let zx: [Vec<f64>; 3] = std::array::from_fn(|g| {
        let mut out = vec![0.0; rows * n_h];
        affine_rows(xp, cell.n_i, &cell.wx[g], &cell.bx[g], &mut out);
        out
    });
    let mut tr = GruTrace {
        h: vec![0.0; rows * n_h],
        u: vec![0.0; rows * n_h],
        r: vec![0.0; rows * n_h],
        c: vec![0.0; rows * n_h],
        hc: vec![0.0; rows * n_h],
    };
    let h_init = vec![h0; batch * n_h];
    let mut zh = [vec![0.0; batch * n_h], vec![0.0; batch * n_h], vec![0.0; batch * n_h]];
    for t in 0..steps {
        let blk = t * batch * n_h..(t + 1) * batch * n_h;
        let h_prev: &[f64] = if t == 0 { &h_init } else { &tr.h[(t - 1) * batch * n_h..t * batch * n_h] };
        for g in 0..3 {
            affine_rows(h_prev, n_h, &cell.wh[g], &cell.bh[g], &mut zh[g]);
        }
        let h_prev = h_prev.to_vec();
        for k in 0..batch * n_h {
            let i = blk.start + k;
            let r = sigmoid(zx[GATE_R][i] + zh[GATE_R][k]);
            let u = sigmoid(zx[GATE_U][i] + zh[GATE_U][k]);
            let c = (zx[GATE_C][i] + r * zh[GATE_C][k]).tanh();
            tr.r[i] = r;
            tr.u[i] = u;
            tr.c[i] = c;
            tr.hc[i] = zh[GATE_C][k];
            tr.h[i] = u * h_prev[k] + (1.0 - u) * c;
        }
    }
    tr
}

/// Backpropagation through time. `dh_out` holds the loss gradient with
/// respect to every emitted hidden state; returns the gradient with respect
/// to the cell inputs `xp`.
pub(crate) fn gru_backward(
    cell: &GruCell,
    xp: &[f64],
    tr: &GruTrace,
    dh_out: &[f64],
    steps: usize,
    batch: usize,
    h0: f64,
    grad: &mut GruCell,
) -> Vec<f64> {
    let n_h = cell.n_h;
    let bn = batch * n_h;
    let rows = steps * batch;
    let mut dzx: [Vec<f64>; 3] = std::array::from_fn(|_| vec![0.0; rows * n_h]);
    let mut dzh = [vec![0.0; bn], vec![0.0; bn], vec![0.0; bn]];
    let mut dh_next = vec![0.0; bn];
    let h_init = vec![h0; bn];

    for t in (0..steps).rev() {
        let off = t * bn;
        let h_prev: &[f64] = if t == 0 { &h_init } else { &tr.h[off - bn..off] };
        let mut dh_prev = vec![0.0; bn];
        for k in 0..bn {
            let i = off + k;
            let dh = dh_out[i] + dh_next[k];
            let (u, r, c) = (tr.u[i], tr.r[i], tr.c[i]);
            let dc = dh * (1.0 - u);
            let du = dh * (h_prev[k] - c);
            dh_prev[k] = dh * u;
            let dac = dc * (1.0 - c * c);
            let dar = dac * tr.hc[i] * r * (1.0 - r);
            let dau = du * u * (1.0 - u);
            dzx[GATE_C][i] = dac;
            dzx[GATE_R][i] = dar;
            dzx[GATE_U][i] = dau;
            dzh[GATE_C][k] = dac * r;
            dzh[GATE_R][k] = dar;
            dzh[GATE_U][k] = dau;
        }
        for g in 0..3 {
            accumulate_param_grads(&dzh[g], h_prev, n_h, &mut grad.wh[g], &mut grad.bh[g]);
            backprop_rows(&dzh[g], &cell.wh[g], n_h, n_h, &mut dh_prev);
        }
        dh_next = dh_prev;
    }

    let mut dxp = vec![0.0; rows * cell.n_i];
    for g in 0..3 {
        accumulate_param_grads(&dzx[g], xp, cell.n_i, &mut grad.wx[g], &mut grad.bx[g]);
        backprop_rows(&dzx[g], &cell.wx[g], cell.n_i, n_h, &mut dxp);
    }
    dxp
}
