use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::rng::SimRng;

pub const LEAKY_SLOPE: f64 = 0.01;

/// `max(0, x) + min(0, x)/100`
#[inline]
pub fn leaky_relu(x: f64) -> f64 {
    if x >= 0.0 {
        x
    } else {
        x * LEAKY_SLOPE
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    LeakyRelu,
    None,
}

/// Dot product with four independent accumulators (fixed summation order).
#[inline]
pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    let mut acc = [0.0; 4];
    let ca = a.chunks_exact(4);
    let cb = b.chunks_exact(4);
    let (ra, rb) = (ca.remainder(), cb.remainder());
    for (x, y) in ca.zip(cb) {
        acc[0] += x[0] * y[0];
        acc[1] += x[1] * y[1];
        acc[2] += x[2] * y[2];
        acc[3] += x[3] * y[3];
    }
    let mut tail = 0.0;
    for (x, y) in ra.iter().zip(rb) {
        tail += x * y;
    }
    (acc[0] + acc[1]) + (acc[2] + acc[3]) + tail
}

#[inline]
pub(crate) fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

/// `out[r] = b + W x[r]` for every row, `W` stored `[n_out][n_in]`.
pub(crate) fn affine_rows(x: &[f64], n_in: usize, w: &[f64], b: &[f64], out: &mut [f64]) {
    let n_out = b.len();
    for (xr, orow) in x.chunks_exact(n_in).zip(out.chunks_exact_mut(n_out)) {
        for ((o, wrow), bo) in orow.iter_mut().zip(w.chunks_exact(n_in)).zip(b) {
            *o = bo + dot(xr, wrow);
        }
    }
}

/// `dW += Σ_r dy[r] ⊗ x[r]`, `db += Σ_r dy[r]`.
pub(crate) fn accumulate_param_grads(dy: &[f64], x: &[f64], n_in: usize, dw: &mut [f64], db: &mut [f64]) {
    let n_out = db.len();
    for (dyr, xr) in dy.chunks_exact(n_out).zip(x.chunks_exact(n_in)) {
        for ((g, dwrow), dbo) in dyr.iter().zip(dw.chunks_exact_mut(n_in)).zip(db.iter_mut()) {
            if *g != 0.0 {
                axpy(*g, xr, dwrow);
                *dbo += g;
            }
        }
    }
}

/// `dx[r] += Wᵀ dy[r]`.
pub(crate) fn backprop_rows(dy: &[f64], w: &[f64], n_in: usize, n_out: usize, dx: &mut [f64]) {
    for (dyr, dxr) in dy.chunks_exact(n_out).zip(dx.chunks_exact_mut(n_in)) {
        for (g, wrow) in dyr.iter().zip(w.chunks_exact(n_in)) {
            if *g != 0.0 {
                axpy(*g, wrow, dxr);
            }
        }
    }
}

pub(crate) fn uniform_init(rng: &mut SimRng, n: usize, fan_in: usize) -> Vec<f64> {
    let bound = 1.0 / (fan_in as f64).sqrt();
    (0..n).map(|_| rng.gen_range(-bound..bound)).collect()
}

/// Fully connected layer; `w` is `[n_out][n_in]` row-major.
#[derive(Clone, Debug, PartialEq)]
pub struct Dense {
    pub n_in: usize,
    pub n_out: usize,
    pub w: Vec<f64>,
    pub b: Vec<f64>,
    pub activation: Activation,
}

impl Dense {
    pub fn zeros(n_in: usize, n_out: usize, activation: Activation) -> Self {
        Dense { n_in, n_out, w: vec![0.0; n_in * n_out], b: vec![0.0; n_out], activation }
    }

    pub fn init(n_in: usize, n_out: usize, activation: Activation, rng: &mut SimRng) -> Self {
        Dense { n_in, n_out, w: uniform_init(rng, n_in * n_out, n_in), b: uniform_init(rng, n_out, n_in), activation }
    }

    /// `(n_in + 1)·n_out`
    pub fn n_params(&self) -> usize {
        (self.n_in + 1) * self.n_out
    }

    pub fn forward_rows(&self, x: &[f64], out: &mut [f64]) {
        affine_rows(x, self.n_in, &self.w, &self.b, out);
        if self.activation == Activation::LeakyRelu {
            out.iter_mut().for_each(|v| *v = leaky_relu(*v));
        }
    }
}

/// Chain of dense layers with its layer-size signature `(n₀, …, n_N)`.
#[derive(Clone, Debug, PartialEq)]
pub struct FeedForwardNet {
    pub layers: Vec<Dense>,
}

impl FeedForwardNet {
    /// Leaky ReLU after every layer, except the last one when `linear_output`.
    pub fn init(sizes: &[usize], linear_output: bool, rng: &mut SimRng) -> Self {
        let n = sizes.len().saturating_sub(1);
        let layers = (0..n)
            .map(|i| {
                let act = if linear_output && i + 1 == n { Activation::None } else { Activation::LeakyRelu };
                Dense::init(sizes[i], sizes[i + 1], act, rng)
            })
            .collect();
        FeedForwardNet { layers }
    }

    pub fn zeros_like(&self) -> Self {
        FeedForwardNet { layers: self.layers.iter().map(|l| Dense::zeros(l.n_in, l.n_out, l.activation)).collect() }
    }

    pub fn sizes(&self) -> Vec<usize> {
        let mut s: Vec<usize> = self.layers.first().map(|l| vec![l.n_in]).unwrap_or_default();
        s.extend(self.layers.iter().map(|l| l.n_out));
        s
    }

    pub fn n_in(&self) -> usize {
        self.layers.first().map_or(0, |l| l.n_in)
    }

    pub fn n_out(&self) -> usize {
        self.layers.last().map_or(0, |l| l.n_out)
    }

    pub fn n_params(&self) -> usize {
        self.layers.iter().map(Dense::n_params).sum()
    }

    /// Outputs of every layer for a block of rows (`acts[0]` is the input).
    pub fn forward_trace(&self, x: &[f64]) -> Vec<Vec<f64>> {
        let rows = if self.n_in() == 0 { 0 } else { x.len() / self.n_in() };
        let mut acts = Vec::with_capacity(self.layers.len() + 1);
        acts.push(x.to_vec());
        for l in &self.layers {
            let mut out = vec![0.0; rows * l.n_out];
            l.forward_rows(acts.last().unwrap(), &mut out);
            acts.push(out);
        }
        acts
    }

    pub fn forward(&self, x: &[f64]) -> Vec<f64> {
        self.forward_trace(x).pop().unwrap()
    }

    /// Accumulate parameter gradients into `grad` and return the gradient
    /// with respect to the input rows.
    pub fn backward(&self, acts: &[Vec<f64>], mut dy: Vec<f64>, grad: &mut FeedForwardNet) -> Vec<f64> {
        for (k, l) in self.layers.iter().enumerate().rev() {
            if l.activation == Activation::LeakyRelu {
                // Output and pre-activation share their sign.
                for (g, y) in dy.iter_mut().zip(&acts[k + 1]) {
                    if *y < 0.0 {
                        *g *= LEAKY_SLOPE;
                    }
                }
            }
            let gl = &mut grad.layers[k];
            accumulate_param_grads(&dy, &acts[k], l.n_in, &mut gl.w, &mut gl.b);
            let mut dx = vec![0.0; acts[k].len()];
            backprop_rows(&dy, &l.w, l.n_in, l.n_out, &mut dx);
            dy = dx;
        }
        dy
    }
}
