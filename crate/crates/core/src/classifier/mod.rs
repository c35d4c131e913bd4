//! Traffic-class classifier over sliding windows of per-UE KPIs.
//!
//! A window is `T` consecutive KPI rows of one UE. Training labels come from
//! the generating slice, except that fully idle windows are labeled `ctrl`.
//! Evaluation scores predictions against the generating class, so idle
//! windows of a bursty source count as errors unless ITR removes them.

mod cnn;

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;
use std::str::FromStr;
use std::time::Instant;

use ndarray::Array2;
use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use cnn::{classify, classify_many, train_cnn, CnnArch, CnnModel, CnnTrainInfo, EpochLog};

use crate::config::Config;
use crate::env::{emit_kpi_records, radio_rng, read_kpi_csv, write_kpi_csv, Gnb, KpiRecord, N_KPIS, TRAFFIC_KPIS};
use crate::error::{Error, Result};
use crate::mdp::RbAllocation;
use crate::seed;
use crate::slice::Slice;
use crate::traffic::{arrivals_for_trace, generate_trace, PeriodArrivals};

pub const N_CLASSES: usize = 4;

/// Window lengths the classifier is defined for.
pub const WINDOW_SIZES: [usize; 5] = [4, 8, 16, 32, 64];

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TrafficClass {
    Embb,
    Mmtc,
    Urllc,
    Ctrl,
}

impl TrafficClass {
    /// Output-index order of the model.
    pub const ALL: [TrafficClass; N_CLASSES] = [
        TrafficClass::Embb,
        TrafficClass::Mmtc,
        TrafficClass::Urllc,
        TrafficClass::Ctrl,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn name(self) -> &'static str {
        match self {
            TrafficClass::Embb => "embb",
            TrafficClass::Mmtc => "mmtc",
            TrafficClass::Urllc => "urllc",
            TrafficClass::Ctrl => "ctrl",
        }
    }

    /// The slice whose traffic generates this class; `None` for ctrl.
    pub fn slice(self) -> Option<Slice> {
        match self {
            TrafficClass::Embb => Some(Slice::Embb),
            TrafficClass::Mmtc => Some(Slice::Mmtc),
            TrafficClass::Urllc => Some(Slice::Urllc),
            TrafficClass::Ctrl => None,
        }
    }
}

impl fmt::Display for TrafficClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for TrafficClass {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        TrafficClass::ALL
            .into_iter()
            .find(|c| c.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| Error::Parameter(format!("unknown traffic class `{s}`")))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ClassifierConfig {
    /// Window length T in periods.
    pub window: usize,
    /// Simulated two-minute trials per class.
    pub trials_per_class: usize,
    /// Fraction of trials per class held out for testing.
    pub test_fraction: f64,
    /// Fraction of the training trials used for the plateau rule.
    pub val_fraction: f64,
    /// Keep every n-th training window.
    pub train_stride: usize,
    /// Keep every n-th test window.
    pub eval_stride: usize,
    /// RB allocation `[mmtc, urllc]` of the simulated cell.
    pub rbs: [u8; 2],
    /// Slice of the UE in ctrl-only trials.
    pub ctrl_slice: Slice,
    pub kernels: usize,
    pub kernel_len: usize,
    pub hidden: usize,
    pub lr: f64,
    pub lr_factor: f64,
    pub lr_floor: f64,
    pub plateau_patience: u32,
    pub stop_patience: u32,
    pub min_delta: f64,
    pub max_epochs: u32,
    pub batch_size: usize,
    /// Downsample every label to the size of the smallest one.
    pub balance: bool,
    /// Apply ITR at evaluation.
    pub itr: bool,
    pub itr_threshold: f64,
}

impl Default for ClassifierConfig {
    fn default() -> Self {
        ClassifierConfig {
            window: 64,
            trials_per_class: 30,
            test_fraction: 0.2,
            val_fraction: 0.1,
            train_stride: 16,
            eval_stride: 1,
            rbs: [5, 6],
            ctrl_slice: Slice::Embb,
            kernels: 20,
            kernel_len: 4,
            hidden: 512,
            lr: 1e-3,
            lr_factor: 0.1,
            lr_floor: 1e-5,
            plateau_patience: 10,
            stop_patience: 25,
            min_delta: 1e-4,
            max_epochs: 350,
            batch_size: 64,
            balance: true,
            itr: false,
            itr_threshold: 0.0,
        }
    }
}

impl ClassifierConfig {
    pub fn arch(&self) -> CnnArch {
        CnnArch {
            window: self.window,
            kernels: self.kernels,
            kernel_len: self.kernel_len,
            hidden: self.hidden,
        }
    }

    pub fn allocation(&self) -> Result<RbAllocation> {
        RbAllocation::new(self.rbs[0], self.rbs[1])
            .map_err(|e| Error::config("classifier.rbs", e.to_string()))
    }

    pub fn validate(&self) -> Result<()> {
        let key = |k: &str| format!("classifier.{k}");
        if !WINDOW_SIZES.contains(&self.window) {
            return Err(Error::config(key("window"), format!("must be one of {WINDOW_SIZES:?}")));
        }
        self.arch().validate()?;
        if self.trials_per_class < 2 {
            return Err(Error::config(key("trials_per_class"), "must be >= 2"));
        }
        if !(self.test_fraction > 0.0 && self.test_fraction < 1.0) {
            return Err(Error::config(key("test_fraction"), "must lie in (0, 1)"));
        }
        if !(0.0..1.0).contains(&self.val_fraction) {
            return Err(Error::config(key("val_fraction"), "must lie in [0, 1)"));
        }
        if self.train_stride == 0 {
            return Err(Error::config(key("train_stride"), "must be >= 1"));
        }
        if self.eval_stride == 0 {
            return Err(Error::config(key("eval_stride"), "must be >= 1"));
        }
        self.allocation()?;
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return Err(Error::config(key("lr"), "must be > 0"));
        }
        if !(self.lr_factor > 0.0 && self.lr_factor <= 1.0) {
            return Err(Error::config(key("lr_factor"), "must lie in (0, 1]"));
        }
        if !(self.lr_floor > 0.0 && self.lr_floor <= self.lr) {
            return Err(Error::config(key("lr_floor"), "must lie in (0, lr]"));
        }
        if !(self.min_delta >= 0.0) {
            return Err(Error::config(key("min_delta"), "must be >= 0"));
        }
        if self.max_epochs == 0 {
            return Err(Error::config(key("max_epochs"), "must be >= 1"));
        }
        if self.batch_size == 0 {
            return Err(Error::config(key("batch_size"), "must be >= 1"));
        }
        if !(self.itr_threshold >= 0.0) {
            return Err(Error::config(key("itr_threshold"), "must be >= 0"));
        }
        Ok(())
    }
}

/// A period is idle when no samples are scheduled and no bits move in
/// either direction.
pub fn is_idle_period(features: &[f64]) -> bool {
    features[1] == 0.0 && features[7] == 0.0 && features[3] == 0.0 && features[9] == 0.0
}

#[derive(Clone, Debug, PartialEq)]
pub struct Window {
    /// `T × 17` raw KPI values.
    pub data: Array2<f64>,
    /// Training label: the generating class, or ctrl when every period is idle.
    pub label: TrafficClass,
    /// Generating class.
    pub truth: TrafficClass,
    /// Index of the first period.
    pub start: usize,
}

/// Every length-`t` window of one UE's KPI stream (stride one period).
/// Fewer than `t` records give no windows.
pub fn build_windows(records: &[KpiRecord], t: usize, class: TrafficClass) -> Vec<Window> {
    if t == 0 || records.len() < t {
        return Vec::new();
    }
    let rows: Vec<[f64; N_KPIS]> = records.iter().map(KpiRecord::features).collect();
    let idle: Vec<bool> = rows.iter().map(|r| is_idle_period(r)).collect();
    (0..=rows.len() - t)
        .map(|start| {
            let mut data = Array2::zeros((t, N_KPIS));
            for (i, row) in rows[start..start + t].iter().enumerate() {
                for (f, v) in row.iter().enumerate() {
                    data[[i, f]] = *v;
                }
            }
            let label = if idle[start..start + t].iter().all(|&b| b) {
                TrafficClass::Ctrl
            } else {
                class
            };
            Window {
                data,
                label,
                truth: class,
                start,
            }
        })
        .collect()
}

/// Per-feature min/max from the training split.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NormStats {
    pub min: [f64; N_KPIS],
    pub max: [f64; N_KPIS],
}

impl NormStats {
    /// The map that leaves values in [0, 1] untouched.
    pub fn identity() -> Self {
        NormStats {
            min: [0.0; N_KPIS],
            max: [1.0; N_KPIS],
        }
    }

    pub fn fit(windows: &[Window]) -> Result<Self> {
        if windows.is_empty() {
            return Err(Error::EmptyDataset("normalizer needs at least one window".into()));
        }
        let mut s = NormStats {
            min: [f64::INFINITY; N_KPIS],
            max: [f64::NEG_INFINITY; N_KPIS],
        };
        for w in windows {
            for row in w.data.rows() {
                for (f, v) in row.iter().enumerate() {
                    s.min[f] = s.min[f].min(*v);
                    s.max[f] = s.max[f].max(*v);
                }
            }
        }
        Ok(s)
    }

    /// Affine map to [0, 1], clipped; constant features map to 0.
    pub fn apply(&self, data: &Array2<f64>) -> Array2<f64> {
        let mut out = data.clone();
        for mut row in out.rows_mut() {
            for (f, v) in row.iter_mut().enumerate() {
                let range = self.max[f] - self.min[f];
                *v = if range > 0.0 {
                    ((*v - self.min[f]) / range).clamp(0.0, 1.0)
                } else {
                    0.0
                };
            }
        }
        out
    }
}

/// Whether any traffic-volume KPI exceeds `threshold` in any period.
pub fn has_traffic(window: &Window, threshold: f64) -> bool {
    window
        .data
        .rows()
        .into_iter()
        .any(|row| TRAFFIC_KPIS.iter().any(|&f| row[f] > threshold))
}

/// Idle Traffic Removal: drops windows with no traffic above `threshold`.
pub fn itr_filter(windows: Vec<Window>, threshold: f64) -> Vec<Window> {
    windows.into_iter().filter(|w| has_traffic(w, threshold)).collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub n_windows: usize,
    pub accuracy: f64,
    /// Recall per true class; absent when the class has no windows.
    pub per_class: BTreeMap<String, Option<f64>>,
    /// Rows are true classes, columns predictions, both in model order.
    pub confusion: [[u64; N_CLASSES]; N_CLASSES],
}

pub fn metrics(truth: &[TrafficClass], pred: &[TrafficClass]) -> Result<Metrics> {
    if truth.len() != pred.len() {
        return Err(Error::Shape(format!("{} labels for {} predictions", truth.len(), pred.len())));
    }
    if truth.is_empty() {
        return Err(Error::EmptyDataset("no windows to evaluate".into()));
    }
    let mut confusion = [[0u64; N_CLASSES]; N_CLASSES];
    for (t, p) in truth.iter().zip(pred) {
        confusion[t.index()][p.index()] += 1;
    }
    let correct: u64 = (0..N_CLASSES).map(|i| confusion[i][i]).sum();
    let per_class = TrafficClass::ALL
        .iter()
        .map(|c| {
            let row = confusion[c.index()];
            let n: u64 = row.iter().sum();
            (c.name().to_string(), (n > 0).then(|| row[c.index()] as f64 / n as f64))
        })
        .collect();
    Ok(Metrics {
        n_windows: truth.len(),
        accuracy: correct as f64 / truth.len() as f64,
        per_class,
        confusion,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub window: usize,
    pub with_itr: bool,
    /// Windows removed by ITR.
    pub removed: usize,
    #[serde(flatten)]
    pub metrics: Metrics,
    /// Mean single-window classify latency in milliseconds.
    pub mean_infer_ms: f64,
    pub max_infer_ms: f64,
}

/// Scores `model` on `windows` against their generating class.
pub fn evaluate(model: &CnnModel, windows: Vec<Window>, with_itr: bool, threshold: f64) -> Result<EvalReport> {
    let before = windows.len();
    let windows = if with_itr { itr_filter(windows, threshold) } else { windows };
    if windows.is_empty() {
        return Err(Error::EmptyDataset(format!(
            "no test windows left (of {before}) after {}",
            if with_itr { "ITR" } else { "windowing" }
        )));
    }
    let refs: Vec<&Array2<f64>> = windows.iter().map(|w| &w.data).collect();
    let pred = classify_many(model, &refs)?;
    let truth: Vec<TrafficClass> = windows.iter().map(|w| w.truth).collect();
    let metrics = metrics(&truth, &pred)?;

    let mut times = Vec::new();
    for w in windows.iter().step_by((windows.len() / 32).max(1)) {
        let t0 = Instant::now();
        classify(model, &w.data)?;
        times.push(t0.elapsed().as_secs_f64() * 1e3);
    }
    Ok(EvalReport {
        window: model.arch.window,
        with_itr,
        removed: before - windows.len(),
        metrics,
        mean_infer_ms: times.iter().sum::<f64>() / times.len() as f64,
        max_infer_ms: times.iter().copied().fold(0.0, f64::max),
    })
}

/// Confusion matrix as CSV with a `true\pred` corner cell.
pub fn write_confusion_csv<W: std::io::Write>(m: &Metrics, w: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(w);
    let mut header = vec!["true\\pred".to_string()];
    header.extend(TrafficClass::ALL.iter().map(|c| c.name().to_string()));
    w.write_record(&header)?;
    for c in TrafficClass::ALL {
        let mut row = vec![c.name().to_string()];
        row.extend(m.confusion[c.index()].iter().map(u64::to_string));
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Test,
}

/// One simulated single-UE trial with its class and split.
#[derive(Clone, Debug, PartialEq)]
pub struct LabeledTrace {
    pub name: String,
    pub class: TrafficClass,
    pub split: Split,
    pub records: Vec<KpiRecord>,
}

/// Runs one single-UE trial of `class`. Ctrl trials carry no application
/// traffic at all.
pub fn simulate_class_trial(cfg: &Config, class: TrafficClass, seed: u64) -> Result<Vec<KpiRecord>> {
    let period_ms = cfg.env.period_ms;
    let periods = (cfg.traffic.chunk_s * 1000.0 / period_ms as f64).round() as u64;
    let arrivals = match class.slice() {
        Some(slice) => {
            let profile = &cfg.traffic.profiles()[slice.index()];
            arrivals_for_trace(&generate_trace(profile, cfg.traffic.chunk_s, seed)?, period_ms)
        }
        None => Vec::new(),
    };
    let ue_slice = class.slice().unwrap_or(cfg.classifier.ctrl_slice);
    let rbs = cfg.classifier.allocation()?;
    let mut gnb = Gnb::new(cfg.env.clone(), &[ue_slice]);
    let mut radio = radio_rng(seed::derive(seed, &[2]));
    let mut records = Vec::with_capacity(periods as usize);
    for p in 0..periods {
        let a = arrivals.get(p as usize).copied().unwrap_or(PeriodArrivals::idle(p));
        let (frame, ues) = gnb.step(&[a], rbs)?;
        records.extend(emit_kpi_records(&frame, &ues, &cfg.env, &mut radio));
    }
    Ok(records)
}

fn split_counts(n: usize, fraction: f64) -> usize {
    if n < 2 || fraction <= 0.0 {
        return 0;
    }
    ((fraction * n as f64).round() as usize).clamp(1, n - 1)
}

/// `trials_per_class` fresh trials per class, split into train and test at
/// the trial level.
pub fn synthesize_dataset(cfg: &Config) -> Result<Vec<LabeledTrace>> {
    let c = &cfg.classifier;
    let jobs: Vec<(TrafficClass, usize)> = TrafficClass::ALL
        .iter()
        .flat_map(|&class| (0..c.trials_per_class).map(move |k| (class, k)))
        .collect();
    let records = jobs
        .par_iter()
        .map(|&(class, k)| {
            let s = seed::derive(cfg.seed, &[seed::stage::CLASSIFIER_DATA, class.index() as u64, k as u64]);
            simulate_class_trial(cfg, class, s)
        })
        .collect::<Result<Vec<_>>>()?;
    let mut test = vec![false; jobs.len()];
    for class in TrafficClass::ALL {
        let mut idx: Vec<usize> = (0..jobs.len()).filter(|&i| jobs[i].0 == class).collect();
        idx.shuffle(&mut seed::derived_rng(cfg.seed, &[seed::stage::CLASSIFIER_DATA, 100, class.index() as u64]));
        for &i in &idx[..split_counts(idx.len(), c.test_fraction)] {
            test[i] = true;
        }
    }
    Ok(jobs
        .into_iter()
        .zip(records)
        .zip(test)
        .map(|(((class, k), records), is_test)| LabeledTrace {
            name: format!("{class}_{k:03}"),
            class,
            split: if is_test { Split::Test } else { Split::Train },
            records,
        })
        .collect())
}

/// Windows of the given traces, keeping every `stride`-th window per trace.
pub fn trace_windows<'a>(traces: impl IntoIterator<Item = &'a LabeledTrace>, t: usize, stride: usize) -> Vec<Window> {
    traces
        .into_iter()
        .flat_map(|tr| {
            build_windows(&tr.records, t, tr.class)
                .into_iter()
                .step_by(stride.max(1))
        })
        .collect()
}

/// Trains on the train-split traces. Part of them, chosen per class, is held
/// out as validation for the plateau and early-stopping rules.
pub fn train_classifier(traces: &[LabeledTrace], cfg: &ClassifierConfig, seed: u64) -> Result<CnnModel> {
    let mut train = Vec::new();
    let mut val = Vec::new();
    let mut rng = seed::rng(seed::derive(seed, &[0]));
    for class in TrafficClass::ALL {
        let mut pool: Vec<&LabeledTrace> = traces
            .iter()
            .filter(|t| t.split == Split::Train && t.class == class)
            .collect();
        pool.shuffle(&mut rng);
        let n_val = split_counts(pool.len(), cfg.val_fraction);
        val.extend(pool.drain(..n_val));
        train.extend(pool);
    }
    let train_w = trace_windows(train, cfg.window, cfg.train_stride);
    let val_w = trace_windows(val, cfg.window, cfg.train_stride);
    train_cnn(&train_w, &val_w, cfg, seed::derive(seed, &[1]))
}

/// Evaluates on the test-split traces.
pub fn evaluate_traces(
    model: &CnnModel,
    traces: &[LabeledTrace],
    eval_stride: usize,
    with_itr: bool,
    threshold: f64,
) -> Result<EvalReport> {
    let windows = trace_windows(
        traces.iter().filter(|t| t.split == Split::Test),
        model.arch.window,
        eval_stride,
    );
    evaluate(model, windows, with_itr, threshold)
}

#[derive(Serialize, Deserialize)]
struct LabelRow {
    file: String,
    label: TrafficClass,
    split: Split,
}

pub const LABELS_FILE: &str = "labels.csv";

/// Writes one KPI CSV per trace plus `labels.csv` (`file,label,split`).
pub fn write_dataset(dir: &Path, traces: &[LabeledTrace]) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    let mut labels = csv::Writer::from_path(dir.join(LABELS_FILE))?;
    for t in traces {
        let file = format!("{}.csv", t.name);
        write_kpi_csv(&t.records, std::io::BufWriter::new(std::fs::File::create(dir.join(&file))?))?;
        labels.serialize(LabelRow {
            file,
            label: t.class,
            split: t.split,
        })?;
    }
    labels.flush()?;
    Ok(())
}

pub fn read_dataset(dir: &Path) -> Result<Vec<LabeledTrace>> {
    let labels_path = dir.join(LABELS_FILE);
    let mut labels = csv::Reader::from_path(&labels_path).map_err(|e| Error::format(&labels_path, e))?;
    let mut out = Vec::new();
    for row in labels.deserialize() {
        let row: LabelRow = row.map_err(|e| Error::format(&labels_path, e))?;
        let path = dir.join(&row.file);
        let file = std::fs::File::open(&path).map_err(|e| Error::format(&path, e))?;
        let mut records = read_kpi_csv(std::io::BufReader::new(file)).map_err(|e| Error::format(&path, e))?;
        records.sort_by_key(|r| r.timestamp_ms);
        out.push(LabeledTrace {
            name: row.file.trim_end_matches(".csv").to_string(),
            class: row.label,
            split: row.split,
            records,
        });
    }
    if out.is_empty() {
        return Err(Error::format(&labels_path, "dataset lists no files"));
    }
    Ok(out)
}
