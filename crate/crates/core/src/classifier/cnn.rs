//! KPI-window CNN: a 4×1 temporal convolution shared across features, a
//! 512-unit hidden layer and a log-softmax over the four classes.

use std::io::{Read, Write};
use std::path::Path;

use ndarray::{Array1, Array2, Axis};
use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{ClassifierConfig, NormStats, TrafficClass, Window, N_CLASSES};
use crate::env::N_KPIS;
use crate::error::{Error, Result};
use crate::nn::{self, log_softmax_rows, relu_backward_inplace, relu_inplace, Adam, Dense, Parameters};
use crate::seed;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CnnArch {
    /// Window length T in periods.
    pub window: usize,
    pub kernels: usize,
    pub kernel_len: usize,
    pub hidden: usize,
}

impl CnnArch {
    pub fn conv_len(&self) -> usize {
        self.window + 1 - self.kernel_len
    }

    /// Width of the flattened convolution output.
    pub fn flat_dim(&self) -> usize {
        self.conv_len() * N_KPIS * self.kernels
    }

    pub fn validate(&self) -> Result<()> {
        if self.kernel_len == 0 || self.window < self.kernel_len {
            return Err(Error::config("classifier.window", "window must be at least the kernel length"));
        }
        if self.kernels == 0 || self.hidden == 0 {
            return Err(Error::config("classifier.kernels", "layer sizes must be >= 1"));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct EpochLog {
    pub epoch: u32,
    pub train_loss: f64,
    pub val_loss: f64,
    pub lr: f64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct CnnTrainInfo {
    pub epochs: u32,
    pub best_epoch: u32,
    pub best_val_loss: f64,
    pub train_windows: usize,
    pub val_windows: usize,
    pub seed: u64,
    pub history: Vec<EpochLog>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct CnnModel {
    pub arch: CnnArch,
    /// `kernel_len × kernels`.
    conv_w: Array2<f64>,
    conv_b: Array1<f64>,
    fc1: Dense,
    fc2: Dense,
    pub norm: NormStats,
    pub info: CnnTrainInfo,
}

impl Parameters for CnnModel {
    fn params(&self) -> Vec<&[f64]> {
        let mut v = vec![
            self.conv_w.as_slice().expect("standard layout"),
            self.conv_b.as_slice().expect("standard layout"),
        ];
        v.extend(self.fc1.params());
        v.extend(self.fc2.params());
        v
    }

    fn params_mut(&mut self) -> Vec<&mut [f64]> {
        let mut v = vec![
            self.conv_w.as_slice_mut().expect("standard layout"),
            self.conv_b.as_slice_mut().expect("standard layout"),
        ];
        v.extend(self.fc1.params_mut());
        v.extend(self.fc2.params_mut());
        v
    }
}

struct Cache {
    patches: Array2<f64>,
    conv: Array2<f64>,
    hidden: Array2<f64>,
    logp: Array2<f64>,
}

impl CnnModel {
    pub fn new<R: Rng>(arch: CnnArch, norm: NormStats, rng: &mut R) -> Self {
        let conv = Dense::new(arch.kernel_len, arch.kernels, rng);
        CnnModel {
            arch,
            conv_w: conv.w,
            conv_b: conv.b,
            fc1: Dense::new(arch.flat_dim(), arch.hidden, rng),
            fc2: Dense::new(arch.hidden, N_CLASSES, rng),
            norm,
            info: CnnTrainInfo::default(),
        }
    }

    pub fn zeros(arch: CnnArch) -> Self {
        CnnModel {
            arch,
            conv_w: Array2::zeros((arch.kernel_len, arch.kernels)),
            conv_b: Array1::zeros(arch.kernels),
            fc1: Dense::zeros(arch.flat_dim(), arch.hidden),
            fc2: Dense::zeros(arch.hidden, N_CLASSES),
            norm: NormStats::identity(),
            info: CnnTrainInfo::default(),
        }
    }

    fn zero_grad(&mut self) {
        for p in self.params_mut() {
            p.fill(0.0);
        }
    }

    /// Rows `(b, t, f)` holding `x[b][t..t + k][f]`.
    fn patches(&self, batch: &[&Array2<f64>]) -> Array2<f64> {
        let (k, len) = (self.arch.kernel_len, self.arch.conv_len());
        let mut p = Array2::zeros((batch.len() * len * N_KPIS, k));
        let mut row = 0;
        for x in batch {
            for t in 0..len {
                for f in 0..N_KPIS {
                    for j in 0..k {
                        p[[row, j]] = x[[t + j, f]];
                    }
                    row += 1;
                }
            }
        }
        p
    }

    fn forward_cached(&self, batch: &[&Array2<f64>]) -> Result<Cache> {
        for x in batch {
            if x.dim() != (self.arch.window, N_KPIS) {
                return Err(Error::Shape(format!(
                    "window of shape {:?}, model expects ({}, {N_KPIS})",
                    x.dim(),
                    self.arch.window
                )));
            }
        }
        let patches = self.patches(batch);
        let mut conv = patches.dot(&self.conv_w);
        conv += &self.conv_b;
        relu_inplace(&mut conv);
        let flat = conv
            .view()
            .into_shape_with_order((batch.len(), self.arch.flat_dim()))
            .expect("contiguous conv output");
        let mut hidden = self.fc1.forward(flat);
        relu_inplace(&mut hidden);
        let logits = self.fc2.forward(hidden.view());
        Ok(Cache {
            patches,
            conv,
            hidden,
            logp: log_softmax_rows(&logits),
        })
    }

    /// Log-probabilities for already normalized windows, one row each.
    pub fn log_probs(&self, batch: &[&Array2<f64>]) -> Result<Array2<f64>> {
        Ok(self.forward_cached(batch)?.logp)
    }

    /// Mean negative log-likelihood and its gradient, accumulated into `grad`.
    fn loss_and_grad(&self, batch: &[&Array2<f64>], labels: &[usize], grad: &mut CnnModel) -> Result<f64> {
        let c = self.forward_cached(batch)?;
        let n = batch.len() as f64;
        let mut loss = 0.0;
        let mut dlogits = c.logp.mapv(f64::exp);
        for (i, &y) in labels.iter().enumerate() {
            loss -= c.logp[[i, y]];
            dlogits[[i, y]] -= 1.0;
        }
        dlogits /= n;
        let mut dh = self.fc2.backward(c.hidden.view(), dlogits.view(), &mut grad.fc2);
        relu_backward_inplace(&mut dh, &c.hidden);
        let flat = c
            .conv
            .view()
            .into_shape_with_order((batch.len(), self.arch.flat_dim()))
            .expect("contiguous conv output");
        let dflat = self.fc1.backward(flat, dh.view(), &mut grad.fc1);
        let mut dconv = dflat
            .into_shape_with_order((c.conv.nrows(), self.arch.kernels))
            .expect("contiguous gradient");
        relu_backward_inplace(&mut dconv, &c.conv);
        ndarray::linalg::general_mat_mul(1.0, &c.patches.t(), &dconv, 1.0, &mut grad.conv_w);
        grad.conv_b += &dconv.sum_axis(Axis(0));
        Ok(loss / n)
    }

    /// Mean NLL over normalized windows.
    pub fn loss(&self, batch: &[&Array2<f64>], labels: &[usize]) -> Result<f64> {
        let logp = self.log_probs(batch)?;
        Ok(labels.iter().enumerate().map(|(i, &y)| -logp[[i, y]]).sum::<f64>() / batch.len() as f64)
    }

    /// Analytic gradient of [`CnnModel::loss`] for gradient checking.
    pub fn gradient(&self, batch: &[&Array2<f64>], labels: &[usize]) -> Result<CnnModel> {
        let mut g = CnnModel::zeros(self.arch);
        self.loss_and_grad(batch, labels, &mut g)?;
        Ok(g)
    }

    pub fn write<W: Write>(&self, w: W) -> Result<()> {
        let header = ModelHeader {
            arch: self.arch,
            norm: self.norm.clone(),
            info: self.info.clone(),
        };
        nn::write_model(w, MODEL_MAGIC, &header, &self.params())
    }

    pub fn read<R: Read>(r: R) -> Result<Self> {
        let (h, values): (ModelHeader, Vec<f64>) = nn::read_model(r, MODEL_MAGIC)?;
        h.arch.validate()?;
        let mut m = CnnModel::zeros(h.arch);
        nn::load_params(&mut m, &values)?;
        m.norm = h.norm;
        m.info = h.info;
        Ok(m)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        self.write(std::io::BufWriter::new(std::fs::File::create(path)?))
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::read(std::io::BufReader::new(std::fs::File::open(path)?)).map_err(|e| match e {
            Error::Io(_) | Error::Json(_) | Error::Parameter(_) | Error::Shape(_) => Error::format(path, e),
            other => other,
        })
    }
}

const MODEL_MAGIC: &[u8; 8] = b"SLCNNMDL";

#[derive(Serialize, Deserialize)]
struct ModelHeader {
    arch: CnnArch,
    norm: NormStats,
    info: CnnTrainInfo,
}

fn balanced(windows: &[Window], rng: &mut seed::Rng) -> Vec<usize> {
    let mut by_class: [Vec<usize>; N_CLASSES] = Default::default();
    for (i, w) in windows.iter().enumerate() {
        by_class[w.label.index()].push(i);
    }
    let smallest = by_class.iter().filter(|v| !v.is_empty()).map(Vec::len).min().unwrap_or(0);
    let mut out = Vec::new();
    for mut idx in by_class {
        idx.shuffle(rng);
        idx.truncate(smallest);
        out.extend(idx);
    }
    out.sort_unstable();
    out
}

/// Trains on `train` (raw windows, `label` as target) with `val` driving the
/// plateau and early-stopping rules. The best-validation weights are kept.
pub fn train_cnn(train: &[Window], val: &[Window], cfg: &ClassifierConfig, seed: u64) -> Result<CnnModel> {
    let arch = cfg.arch();
    arch.validate()?;
    if train.is_empty() {
        return Err(Error::EmptyDataset("no training windows".into()));
    }
    let mut classes = train.iter().map(|w| w.label).collect::<Vec<TrafficClass>>();
    classes.sort();
    classes.dedup();
    if classes.len() < 2 {
        return Err(Error::Training(format!(
            "training data holds a single class ({}), need at least 2",
            classes[0]
        )));
    }
    let mut rng = seed::rng(seed);
    let norm = NormStats::fit(train)?;
    let idx = if cfg.balance {
        balanced(train, &mut rng)
    } else {
        (0..train.len()).collect()
    };
    let xs: Vec<Array2<f64>> = idx.iter().map(|&i| norm.apply(&train[i].data)).collect();
    let ys: Vec<usize> = idx.iter().map(|&i| train[i].label.index()).collect();
    let val_x: Vec<Array2<f64>> = val.iter().map(|w| norm.apply(&w.data)).collect();
    let val_y: Vec<usize> = val.iter().map(|w| w.label.index()).collect();

    let mut model = CnnModel::new(arch, norm, &mut rng);
    let mut grad = CnnModel::zeros(arch);
    let mut opt = Adam::new(cfg.lr, &model);
    let mut best = model.clone();
    let mut best_loss = f64::INFINITY;
    let mut best_epoch = 0;
    let mut since_best = 0u32;
    let mut since_lr = 0u32;
    let mut history = Vec::new();
    let mut order: Vec<usize> = (0..xs.len()).collect();
    let batch_size = cfg.batch_size.max(1);

    for epoch in 1..=cfg.max_epochs {
        order.shuffle(&mut rng);
        let mut total = 0.0;
        for chunk in order.chunks(batch_size) {
            let bx: Vec<&Array2<f64>> = chunk.iter().map(|&i| &xs[i]).collect();
            let by: Vec<usize> = chunk.iter().map(|&i| ys[i]).collect();
            grad.zero_grad();
            let loss = model.loss_and_grad(&bx, &by, &mut grad)?;
            if !loss.is_finite() {
                return Err(Error::Training(format!("non-finite CNN loss at epoch {epoch} (lr {})", opt.lr)));
            }
            total += loss * chunk.len() as f64;
            opt.step(&mut model, &grad);
        }
        let train_loss = total / xs.len() as f64;
        let val_loss = if val_x.is_empty() {
            train_loss
        } else {
            let mut sum = 0.0;
            for (cx, cy) in val_x.chunks(256).zip(val_y.chunks(256)) {
                let refs: Vec<&Array2<f64>> = cx.iter().collect();
                sum += model.loss(&refs, cy)? * cx.len() as f64;
            }
            sum / val_x.len() as f64
        };
        history.push(EpochLog {
            epoch,
            train_loss,
            val_loss,
            lr: opt.lr,
        });
        if val_loss < best_loss - cfg.min_delta {
            best_loss = val_loss;
            best_epoch = epoch;
            best.clone_from(&model);
            since_best = 0;
            since_lr = 0;
        } else {
            since_best += 1;
            since_lr += 1;
        }
        if since_best >= cfg.stop_patience {
            break;
        }
        if since_lr >= cfg.plateau_patience {
            opt.lr = (opt.lr * cfg.lr_factor).max(cfg.lr_floor);
            since_lr = 0;
        }
    }
    best.info = CnnTrainInfo {
        epochs: history.len() as u32,
        best_epoch,
        best_val_loss: best_loss,
        train_windows: xs.len(),
        val_windows: val_x.len(),
        seed,
        history,
    };
    Ok(best)
}

/// Predicted class and log-probabilities of one raw window. Equal
/// log-probabilities resolve to the lowest class index.
pub fn classify(model: &CnnModel, window: &Array2<f64>) -> Result<(TrafficClass, [f64; N_CLASSES])> {
    let x = model.norm.apply(window);
    let lp = model.log_probs(&[&x])?;
    let row: [f64; N_CLASSES] = std::array::from_fn(|i| lp[[0, i]]);
    Ok((TrafficClass::ALL[argmax(&row)], row))
}

pub(crate) fn argmax(row: &[f64]) -> usize {
    let mut best = 0;
    for (i, v) in row.iter().enumerate() {
        if *v > row[best] {
            best = i;
        }
    }
    best
}

/// Predictions for many raw windows, batched.
pub fn classify_many(model: &CnnModel, windows: &[&Array2<f64>]) -> Result<Vec<TrafficClass>> {
    let mut out = Vec::with_capacity(windows.len());
    for chunk in windows.chunks(128) {
        let xs: Vec<Array2<f64>> = chunk.iter().map(|w| model.norm.apply(w)).collect();
        let refs: Vec<&Array2<f64>> = xs.iter().collect();
        let lp = model.log_probs(&refs)?;
        for row in lp.rows() {
            out.push(TrafficClass::ALL[argmax(row.as_slice().expect("row-major"))]);
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::finite_difference_check;

    fn arch(window: usize) -> CnnArch {
        CnnArch {
            window,
            kernels: 3,
            kernel_len: 4,
            hidden: 8,
        }
    }

    fn random_window(rng: &mut seed::Rng, t: usize) -> Array2<f64> {
        Array2::from_shape_simple_fn((t, N_KPIS), || rng.random_range(0.0..1.0))
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let mut rng = seed::rng(5);
        let mut m = CnnModel::new(arch(6), NormStats::identity(), &mut rng);
        let xs: Vec<Array2<f64>> = (0..5).map(|_| random_window(&mut rng, 6)).collect();
        let refs: Vec<&Array2<f64>> = xs.iter().collect();
        let ys = [0, 1, 2, 3, 1];
        let g = m.gradient(&refs, &ys).unwrap();
        let idx: Vec<usize> = (0..20).map(|_| rng.random_range(0..m.param_count())).collect();
        for (i, a, num, rel) in finite_difference_check(&mut m, &g, &idx, 1e-6, |m| m.loss(&refs, &ys).unwrap()) {
            assert!(rel < 1e-4 || (a - num).abs() < 1e-9, "param {i}: {a} vs {num}");
        }
    }

    #[test]
    fn log_probs_normalise_and_shape_is_checked() {
        let mut rng = seed::rng(6);
        let m = CnnModel::new(arch(8), NormStats::identity(), &mut rng);
        let x = random_window(&mut rng, 8);
        let (_, lp) = classify(&m, &x).unwrap();
        assert!((lp.iter().map(|v| v.exp()).sum::<f64>() - 1.0).abs() < 1e-9);
        assert!(classify(&m, &random_window(&mut rng, 7)).is_err());
    }

    #[test]
    fn uniform_logits_pick_class_zero() {
        let m = CnnModel::zeros(arch(4));
        let x = Array2::zeros((4, N_KPIS));
        assert_eq!(classify(&m, &x).unwrap().0, TrafficClass::ALL[0]);
    }

    #[test]
    fn file_round_trip_is_exact() {
        let mut rng = seed::rng(7);
        let m = CnnModel::new(arch(5), NormStats::identity(), &mut rng);
        let mut buf = Vec::new();
        m.write(&mut buf).unwrap();
        assert_eq!(CnnModel::read(&buf[..]).unwrap(), m);
    }
}
