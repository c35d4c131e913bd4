//! Minimal f64 building blocks for the Q-network and the CNN: a dense
//! layer with manual backprop, Adam, flat parameter access for finite
//! difference checks, and a self-describing model file format.

use std::io::{Read, Write};

use ndarray::{Array1, Array2, ArrayView2, Axis};
use serde::de::DeserializeOwned;
use serde::Serialize;

use crate::error::{Error, Result};

/// Fully connected layer `y = x·W + b` with `W` stored as `in × out`.
#[derive(Clone, Debug, PartialEq)]
pub struct Dense {
    pub w: Array2<f64>,
    pub b: Array1<f64>,
}

impl Dense {
    /// Uniform init in `±1/sqrt(fan_in)`.
    pub fn new<R: rand::Rng>(fan_in: usize, fan_out: usize, rng: &mut R) -> Self {
        let bound = 1.0 / (fan_in as f64).sqrt();
        let w = Array2::from_shape_simple_fn((fan_in, fan_out), || rng.random_range(-bound..bound));
        let b = Array1::from_shape_simple_fn(fan_out, || rng.random_range(-bound..bound));
        Dense { w, b }
    }

    pub fn zeros(fan_in: usize, fan_out: usize) -> Self {
        Dense {
            w: Array2::zeros((fan_in, fan_out)),
            b: Array1::zeros(fan_out),
        }
    }

    pub fn fan_in(&self) -> usize {
        self.w.nrows()
    }

    pub fn fan_out(&self) -> usize {
        self.w.ncols()
    }

    pub fn forward(&self, x: ArrayView2<f64>) -> Array2<f64> {
        let mut y = x.dot(&self.w);
        y += &self.b;
        y
    }

    /// Accumulates parameter gradients into `grad` and returns `dL/dx`.
    pub fn backward(&self, x: ArrayView2<f64>, dy: ArrayView2<f64>, grad: &mut Dense) -> Array2<f64> {
        ndarray::linalg::general_mat_mul(1.0, &x.t(), &dy, 1.0, &mut grad.w);
        grad.b += &dy.sum_axis(Axis(0));
        dy.dot(&self.w.t())
    }
}

pub fn relu_inplace(x: &mut Array2<f64>) {
    x.mapv_inplace(|v| v.max(0.0));
}

/// Zeroes `dy` wherever the ReLU output `y` was not positive.
pub fn relu_backward_inplace(dy: &mut Array2<f64>, y: &Array2<f64>) {
    ndarray::Zip::from(dy).and(y).for_each(|d, &o| {
        if o <= 0.0 {
            *d = 0.0;
        }
    });
}

/// Flat views of every trainable tensor, in a fixed order.
pub trait Parameters {
    fn params(&self) -> Vec<&[f64]>;
    fn params_mut(&mut self) -> Vec<&mut [f64]>;

    fn param_count(&self) -> usize {
        self.params().iter().map(|p| p.len()).sum()
    }

    fn param(&self, mut idx: usize) -> f64 {
        for p in self.params() {
            if idx < p.len() {
                return p[idx];
            }
            idx -= p.len();
        }
        panic!("parameter index out of range")
    }

    fn set_param(&mut self, mut idx: usize, value: f64) {
        for p in self.params_mut() {
            if idx < p.len() {
                p[idx] = value;
                return;
            }
            idx -= p.len();
        }
        panic!("parameter index out of range")
    }

    fn all_finite(&self) -> bool {
        self.params().iter().all(|p| p.iter().all(|v| v.is_finite()))
    }
}

impl Parameters for Dense {
    fn params(&self) -> Vec<&[f64]> {
        vec![
            self.w.as_slice().expect("standard layout"),
            self.b.as_slice().expect("standard layout"),
        ]
    }

    fn params_mut(&mut self) -> Vec<&mut [f64]> {
        vec![
            self.w.as_slice_mut().expect("standard layout"),
            self.b.as_slice_mut().expect("standard layout"),
        ]
    }
}

/// Adam with bias correction.
#[derive(Clone, Debug)]
pub struct Adam {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    t: u64,
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
}

impl Adam {
    pub fn new<P: Parameters>(lr: f64, model: &P) -> Self {
        let shapes: Vec<usize> = model.params().iter().map(|p| p.len()).collect();
        Adam {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            t: 0,
            m: shapes.iter().map(|&n| vec![0.0; n]).collect(),
            v: shapes.iter().map(|&n| vec![0.0; n]).collect(),
        }
    }

    pub fn steps(&self) -> u64 {
        self.t
    }

    pub fn step<P: Parameters>(&mut self, model: &mut P, grad: &P) {
        self.t += 1;
        let t = self.t as i32;
        let c1 = 1.0 - self.beta1.powi(t);
        let c2 = 1.0 - self.beta2.powi(t);
        let (b1, b2, lr, eps) = (self.beta1, self.beta2, self.lr, self.eps);
        for (((p, g), m), v) in model
            .params_mut()
            .into_iter()
            .zip(grad.params())
            .zip(self.m.iter_mut())
            .zip(self.v.iter_mut())
        {
            for i in 0..p.len() {
                let gi = g[i];
                m[i] = b1 * m[i] + (1.0 - b1) * gi;
                v[i] = b2 * v[i] + (1.0 - b2) * gi * gi;
                let mhat = m[i] / c1;
                let vhat = v[i] / c2;
                p[i] -= lr * mhat / (vhat.sqrt() + eps);
            }
        }
    }
}

/// Stable `log(softmax(x))` per row.
pub fn log_softmax_rows(logits: &Array2<f64>) -> Array2<f64> {
    let mut out = logits.clone();
    for mut row in out.rows_mut() {
        let max = row.fold(f64::NEG_INFINITY, |a, &b| a.max(b));
        let lse = max + row.iter().map(|v| (v - max).exp()).sum::<f64>().ln();
        row.mapv_inplace(|v| v - lse);
    }
    out
}

const MODEL_MAGIC_LEN: usize = 8;

/// Writes `magic`, a JSON header and the concatenated parameters as
/// little-endian f64.
pub(crate) fn write_model<W: Write, H: Serialize>(
    mut w: W,
    magic: &[u8; MODEL_MAGIC_LEN],
    header: &H,
    params: &[&[f64]],
) -> Result<()> {
    let header = serde_json::to_vec(header)?;
    w.write_all(magic)?;
    w.write_all(&(header.len() as u32).to_le_bytes())?;
    w.write_all(&header)?;
    let n: usize = params.iter().map(|p| p.len()).sum();
    w.write_all(&(n as u64).to_le_bytes())?;
    for p in params {
        for v in *p {
            w.write_all(&v.to_le_bytes())?;
        }
    }
    w.flush()?;
    Ok(())
}

pub(crate) fn read_model<R: Read, H: DeserializeOwned>(
    mut r: R,
    magic: &[u8; MODEL_MAGIC_LEN],
) -> Result<(H, Vec<f64>)> {
    let mut got = [0u8; MODEL_MAGIC_LEN];
    r.read_exact(&mut got)?;
    if &got != magic {
        return Err(Error::Parameter(format!(
            "bad model magic {:?}, expected {:?}",
            String::from_utf8_lossy(&got),
            String::from_utf8_lossy(magic)
        )));
    }
    let mut len = [0u8; 4];
    r.read_exact(&mut len)?;
    let mut header = vec![0u8; u32::from_le_bytes(len) as usize];
    r.read_exact(&mut header)?;
    let header: H = serde_json::from_slice(&header)?;
    let mut n = [0u8; 8];
    r.read_exact(&mut n)?;
    let n = u64::from_le_bytes(n) as usize;
    let mut values = Vec::with_capacity(n);
    let mut buf = [0u8; 8];
    for _ in 0..n {
        r.read_exact(&mut buf)?;
        values.push(f64::from_le_bytes(buf));
    }
    Ok((header, values))
}

/// Copies `values` into `model`, checking the total length.
pub(crate) fn load_params<P: Parameters>(model: &mut P, values: &[f64]) -> Result<()> {
    if model.param_count() != values.len() {
        return Err(Error::Shape(format!(
            "model has {} parameters, file has {}",
            model.param_count(),
            values.len()
        )));
    }
    let mut off = 0;
    for p in model.params_mut() {
        p.copy_from_slice(&values[off..off + p.len()]);
        off += p.len();
    }
    Ok(())
}

/// Central-difference relative errors against analytic gradients for the
/// listed parameter indices. Returns `(index, analytic, numeric, rel_err)`.
pub fn finite_difference_check<P, F>(
    model: &mut P,
    analytic: &P,
    indices: &[usize],
    h: f64,
    mut loss: F,
) -> Vec<(usize, f64, f64, f64)>
where
    P: Parameters,
    F: FnMut(&P) -> f64,
{
    indices
        .iter()
        .map(|&i| {
            let orig = model.param(i);
            model.set_param(i, orig + h);
            let up = loss(model);
            model.set_param(i, orig - h);
            let down = loss(model);
            model.set_param(i, orig);
            let numeric = (up - down) / (2.0 * h);
            let a = analytic.param(i);
            let rel = (a - numeric).abs() / a.abs().max(numeric.abs()).max(1e-12);
            (i, a, numeric, rel)
        })
        .collect()
}
