use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::dense::FeedForwardNet;
use super::gru::{gru_backward, gru_forward, gru_step, GruCell, GruTrace};
use crate::data::io::{get_f64s, get_u32, put_f64s, put_u32, to_u32};
use crate::error::{Error, Result};
use crate::rng::seeded;

pub const MODEL_MAGIC: &[u8; 7] = b"RNNMDL1";
pub const MODEL_VERSION: u32 = 1;
pub const DEFAULT_H0: f64 = -1.0;

/// Layer sizes of the three blocks. `nnw_in` runs from the network input to
/// the GRU input width; `nnw_out` from the hidden width to the output.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Architecture {
    pub nnw_in: Vec<usize>,
    pub n_h: usize,
    pub nnw_out: Vec<usize>,
}

impl Architecture {
    pub fn validate(&self) -> Result<()> {
        let ok = self.nnw_in.len() >= 2
            && self.nnw_out.len() >= 2
            && self.n_h > 0
            && self.nnw_out[0] == self.n_h
            && self.nnw_in.iter().chain(&self.nnw_out).all(|&n| n > 0);
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidInput(format!(
                "invalid architecture {self:?}: both networks need at least two positive layer sizes and the output network must start at n_h"
            )))
        }
    }

    pub fn n_x(&self) -> usize {
        self.nnw_in[0]
    }

    pub fn n_i(&self) -> usize {
        *self.nnw_in.last().unwrap()
    }

    pub fn n_y(&self) -> usize {
        *self.nnw_out.last().unwrap()
    }

    /// Closed-form parameter count: dense pairs `(nᵢ + 1)·nᵢ₊₁` plus the GRU.
    pub fn n_params(&self) -> usize {
        let pairs = |s: &[usize]| s.windows(2).map(|w| (w[0] + 1) * w[1]).sum::<usize>();
        pairs(&self.nnw_in) + 3 * self.n_h * (self.n_h + self.n_i() + 2) + pairs(&self.nnw_out)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct RnnModel {
    pub nnw_in: FeedForwardNet,
    pub gru: GruCell,
    pub nnw_out: FeedForwardNet,
    pub h0: f64,
}

/// Activations of one batched forward pass, time-major rows (`t·B + b`).
#[derive(Clone, Debug)]
pub struct ForwardTrace {
    pub steps: usize,
    pub batch: usize,
    in_acts: Vec<Vec<f64>>,
    gru: GruTrace,
    out_acts: Vec<Vec<f64>>,
}

impl ForwardTrace {
    /// Network outputs, time-major.
    pub fn outputs(&self) -> &[f64] {
        self.out_acts.last().unwrap()
    }

    /// Hidden states, time-major.
    pub fn hidden(&self) -> &[f64] {
        &self.gru.h
    }
}

/// Reorder a sequence-major block (`b·T + t`) into time-major rows.
pub fn to_time_major(x: &[f64], batch: usize, steps: usize, width: usize) -> Vec<f64> {
    let mut out = vec![0.0; x.len()];
    for b in 0..batch {
        for t in 0..steps {
            let src = (b * steps + t) * width;
            let dst = (t * batch + b) * width;
            out[dst..dst + width].copy_from_slice(&x[src..src + width]);
        }
    }
    out
}

pub fn to_seq_major(x: &[f64], batch: usize, steps: usize, width: usize) -> Vec<f64> {
    let mut out = vec![0.0; x.len()];
    for b in 0..batch {
        for t in 0..steps {
            let src = (t * batch + b) * width;
            let dst = (b * steps + t) * width;
            out[dst..dst + width].copy_from_slice(&x[src..src + width]);
        }
    }
    out
}

/// Mean square error over every component.
pub fn mse_loss(pred: &[f64], target: &[f64]) -> Result<f64> {
    if pred.len() != target.len() {
        return Err(Error::DimensionMismatch { expected: target.len(), got: pred.len() });
    }
    if pred.is_empty() {
        return Ok(0.0);
    }
    Ok(pred.iter().zip(target).map(|(a, b)| (a - b) * (a - b)).sum::<f64>() / pred.len() as f64)
}

impl RnnModel {
    /// Randomly initialized model; NNW_O has no activation on its last layer.
    pub fn new(arch: &Architecture, seed: u64) -> Result<Self> {
        arch.validate()?;
        let mut rng = seeded(seed);
        let nnw_in = FeedForwardNet::init(&arch.nnw_in, false, &mut rng);
        let gru = GruCell::init(arch.n_i(), arch.n_h, &mut rng);
        let nnw_out = FeedForwardNet::init(&arch.nnw_out, true, &mut rng);
        Ok(RnnModel { nnw_in, gru, nnw_out, h0: DEFAULT_H0 })
    }

    pub fn architecture(&self) -> Architecture {
        Architecture { nnw_in: self.nnw_in.sizes(), n_h: self.gru.n_h, nnw_out: self.nnw_out.sizes() }
    }

    pub fn zeros_like(&self) -> Self {
        RnnModel {
            nnw_in: self.nnw_in.zeros_like(),
            gru: GruCell::zeros(self.gru.n_i, self.gru.n_h),
            nnw_out: self.nnw_out.zeros_like(),
            h0: self.h0,
        }
    }

    pub fn n_params(&self) -> usize {
        self.nnw_in.n_params() + self.gru.n_params() + self.nnw_out.n_params()
    }

    /// Every parameter block in canonical order.
    pub fn tensors(&self) -> Vec<&[f64]> {
        let mut v: Vec<&[f64]> = Vec::new();
        for l in &self.nnw_in.layers {
            v.push(&l.w);
            v.push(&l.b);
        }
        let g = &self.gru;
        for block in [&g.wx, &g.wh, &g.bx, &g.bh] {
            for t in block.iter() {
                v.push(t);
            }
        }
        for l in &self.nnw_out.layers {
            v.push(&l.w);
            v.push(&l.b);
        }
        v
    }

    pub fn tensors_mut(&mut self) -> Vec<&mut [f64]> {
        let mut v: Vec<&mut [f64]> = Vec::new();
        for l in &mut self.nnw_in.layers {
            v.push(&mut l.w);
            v.push(&mut l.b);
        }
        let g = &mut self.gru;
        for block in [&mut g.wx, &mut g.wh, &mut g.bx, &mut g.bh] {
            for t in block.iter_mut() {
                v.push(t);
            }
        }
        for l in &mut self.nnw_out.layers {
            v.push(&mut l.w);
            v.push(&mut l.b);
        }
        v
    }

    /// Single-sequence forward, step by step; `inputs` is `steps × n_x`.
    pub fn forward_sequence(&self, inputs: &[f64]) -> (Vec<f64>, Vec<Vec<f64>>) {
        let n_x = self.nnw_in.n_in();
        let mut h = vec![self.h0; self.gru.n_h];
        let mut outputs = Vec::with_capacity(inputs.len() / n_x * self.nnw_out.n_out());
        let mut hidden = Vec::with_capacity(inputs.len() / n_x);
        for x in inputs.chunks_exact(n_x) {
            let xp = self.nnw_in.forward(x);
            h = gru_step(&self.gru, &xp, &h);
            outputs.extend(self.nnw_out.forward(&h));
            hidden.push(h.clone());
        }
        (outputs, hidden)
    }

    /// Batched forward over time-major input rows.
    pub fn forward_batch(&self, x_tm: &[f64], steps: usize, batch: usize) -> ForwardTrace {
        let in_acts = self.nnw_in.forward_trace(x_tm);
        let gru = gru_forward(&self.gru, in_acts.last().unwrap(), steps, batch, self.h0);
        let out_acts = self.nnw_out.forward_trace(&gru.h);
        ForwardTrace { steps, batch, in_acts, gru, out_acts }
    }

    /// Accumulate into `grad` the gradient for the output gradient `dy`
    /// (time-major, same shape as the outputs).
    pub fn backward(&self, trace: &ForwardTrace, dy: Vec<f64>, grad: &mut RnnModel) {
        let dh = self.nnw_out.backward(&trace.out_acts, dy, &mut grad.nnw_out);
        let dxp = gru_backward(
            &self.gru,
            trace.in_acts.last().unwrap(),
            &trace.gru,
            &dh,
            trace.steps,
            trace.batch,
            self.h0,
            &mut grad.gru,
        );
        self.nnw_in.backward(&trace.in_acts, dxp, &mut grad.nnw_in);
    }

    /// Batch MSE and its exact gradient (time-major inputs and targets).
    pub fn loss_and_gradient(&self, x_tm: &[f64], y_tm: &[f64], steps: usize, batch: usize) -> Result<(f64, RnnModel)> {
        let (loss, grad, _) = self.loss_gradient_output(x_tm, y_tm, steps, batch)?;
        Ok((loss, grad))
    }

    /// As [`Self::loss_and_gradient`], also returning the predictions.
    pub fn loss_gradient_output(
        &self,
        x_tm: &[f64],
        y_tm: &[f64],
        steps: usize,
        batch: usize,
    ) -> Result<(f64, RnnModel, Vec<f64>)> {
        let mut trace = self.forward_batch(x_tm, steps, batch);
        let pred = trace.outputs();
        let loss = mse_loss(pred, y_tm)?;
        let scale = 2.0 / pred.len().max(1) as f64;
        let dy = pred.iter().zip(y_tm).map(|(p, y)| scale * (p - y)).collect();
        let mut grad = self.zeros_like();
        self.backward(&trace, dy, &mut grad);
        let pred = trace.out_acts.pop().unwrap_or_default();
        Ok((loss, grad, pred))
    }

    pub fn write_to(&self, w: &mut impl Write) -> Result<()> {
        w.write_all(MODEL_MAGIC)?;
        put_u32(w, MODEL_VERSION)?;
        let arch = self.architecture();
        for sizes in [&arch.nnw_in, &vec![arch.n_h], &arch.nnw_out] {
            put_u32(w, to_u32(sizes.len(), "layer count")?)?;
            for &s in sizes.iter() {
                put_u32(w, to_u32(s, "layer size")?)?;
            }
        }
        put_f64s(w, &[self.h0])?;
        for t in self.tensors() {
            put_f64s(w, t)?;
        }
        Ok(())
    }

    pub fn read_from(r: &mut impl Read) -> Result<Self> {
        let mut magic = [0u8; 7];
        r.read_exact(&mut magic)?;
        if &magic != MODEL_MAGIC {
            return Err(Error::Format("not a recurrent model file".into()));
        }
        let version = get_u32(r)?;
        if version != MODEL_VERSION {
            return Err(Error::Format(format!("unsupported model version {version}")));
        }
        let mut sizes = Vec::new();
        for _ in 0..3 {
            let n = get_u32(r)? as usize;
            if n > 1 << 16 {
                return Err(Error::Format("implausible layer count".into()));
            }
            sizes.push((0..n).map(|_| get_u32(r).map(|v| v as usize)).collect::<Result<Vec<_>>>()?);
        }
        if sizes[1].len() != 1 {
            return Err(Error::Format("malformed hidden-size block".into()));
        }
        let arch = Architecture { nnw_in: sizes[0].clone(), n_h: sizes[1][0], nnw_out: sizes[2].clone() };
        arch.validate().map_err(|e| Error::Format(e.to_string()))?;
        let h0 = get_f64s(r, 1)?[0];
        let mut model = RnnModel::new(&arch, 0)?.zeros_like();
        model.h0 = h0;
        for t in model.tensors_mut() {
            let vals = get_f64s(r, t.len())?;
            t.copy_from_slice(&vals);
        }
        Ok(model)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut w = BufWriter::new(File::create(path)?);
        self.write_to(&mut w)?;
        w.flush()?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::read_from(&mut BufReader::new(File::open(path)?))
    }
}
