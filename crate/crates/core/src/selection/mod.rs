//! Bellman-error policy selection and per-tuple trial statistics.

use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, StudentsT};

use crate::agents::QFunction;
use crate::error::{Error, Result};
use crate::mdp::{MdpState, Transition};
use crate::seed;

/// Mean absolute TD residual `|Q(s,a) − (r + γ·max_valid Q(s'))|`.
pub fn bellman_error<S, Q>(q: &Q, val: &[Transition<S>], discount: f64) -> Result<f64>
where
    S: MdpState,
    Q: QFunction<S> + ?Sized,
{
    if val.is_empty() {
        return Err(Error::EmptyDataset("Bellman error needs a non-empty validation set".into()));
    }
    let total: f64 = val
        .iter()
        .map(|t| (q.q(&t.s, t.a) - (t.r + discount * q.max_valid(&t.sp))).abs())
        .sum();
    Ok(total / val.len() as f64)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Selection {
    pub selected: usize,
    pub bellman_errors: Vec<f64>,
}

/// Index of the candidate with the smallest Bellman error; the earlier
/// candidate wins ties.
pub fn select_policy<S: MdpState>(
    candidates: &[&dyn QFunction<S>],
    val: &[Transition<S>],
    discount: f64,
) -> Result<Selection> {
    if candidates.is_empty() {
        return Err(Error::Parameter("policy selection needs at least one candidate".into()));
    }
    let bellman_errors = candidates
        .iter()
        .map(|q| bellman_error(*q, val, discount))
        .collect::<Result<Vec<_>>>()?;
    let mut selected = 0;
    for (i, be) in bellman_errors.iter().enumerate() {
        if *be < bellman_errors[selected] {
            selected = i;
        }
    }
    Ok(Selection {
        selected,
        bellman_errors,
    })
}

/// Training and validation transitions.
pub type Split<S> = (Vec<Transition<S>>, Vec<Transition<S>>);

/// Random train/validation partition that keeps every trial whole. The
/// validation side gets `max(1, round((1 − ratio)·n_trials))` trials.
pub fn split_dataset<S: Clone>(
    all: &[Transition<S>],
    ratio: f64,
    seed: u64,
) -> Result<Split<S>> {
    if !(ratio > 0.0 && ratio < 1.0) {
        return Err(Error::Parameter(format!(
            "split ratio must lie strictly between 0 and 1, got {ratio}"
        )));
    }
    let mut trials: BTreeMap<(u32, u32), Vec<usize>> = BTreeMap::new();
    for (i, t) in all.iter().enumerate() {
        trials.entry(t.meta.trial_key()).or_default().push(i);
    }
    let n = trials.len();
    if n < 2 {
        return Err(Error::EmptyDataset(format!("splitting needs at least 2 trials, found {n}")));
    }
    let n_val = (((1.0 - ratio) * n as f64).round() as usize).clamp(1, n - 1);
    let mut keys: Vec<(u32, u32)> = trials.keys().copied().collect();
    keys.shuffle(&mut seed::rng(seed));
    let val_keys: std::collections::BTreeSet<_> = keys[..n_val].iter().copied().collect();
    let (mut train, mut val) = (Vec::new(), Vec::new());
    for t in all {
        if val_keys.contains(&t.meta.trial_key()) {
            val.push(t.clone());
        } else {
            train.push(t.clone());
        }
    }
    Ok((train, val))
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalStats {
    pub mean: f64,
    /// Sample standard deviation (n − 1).
    pub std: f64,
    pub cv: f64,
    pub n_trials: usize,
    /// Half-width of the 95% Student-t interval for the mean.
    pub ci_halfwidth: f64,
}

/// Two-sided 95% Student-t quantile with `dof` degrees of freedom.
pub fn t_quantile(dof: f64) -> f64 {
    StudentsT::new(0.0, 1.0, dof)
        .expect("dof > 0")
        .inverse_cdf(0.975)
}

fn halfwidth(std: f64, n: usize) -> f64 {
    t_quantile(n as f64 - 1.0) * std / (n as f64).sqrt()
}

pub fn eval_stats(scores: &[f64]) -> Result<EvalStats> {
    let n = scores.len();
    if n < 2 {
        return Err(Error::Domain(format!("statistics need at least 2 trials, got {n}")));
    }
    let mean = scores.iter().sum::<f64>() / n as f64;
    if !(mean > 0.0) {
        return Err(Error::Domain(format!("statistics need a positive mean, got {mean}")));
    }
    let var = scores.iter().map(|s| (s - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    let std = var.sqrt();
    Ok(EvalStats {
        mean,
        std,
        cv: std / mean,
        n_trials: n,
        ci_halfwidth: halfwidth(std, n),
    })
}

/// Additional trials needed before the 95% half-width drops to
/// `target_rel · mean`.
pub fn required_trials(stats: &EvalStats, target_rel: f64) -> usize {
    let goal = target_rel * stats.mean;
    if stats.std == 0.0 || stats.ci_halfwidth <= goal {
        return 0;
    }
    let fits = |n: usize| halfwidth(stats.std, n) <= goal;
    // Fixed point of n = (t_{n-1}·std/goal)², then settle on the smallest n.
    let mut n = 2usize;
    for _ in 0..100 {
        let next = ((t_quantile(n as f64 - 1.0) * stats.std / goal).powi(2).ceil() as usize).max(2);
        if next == n {
            break;
        }
        n = next;
    }
    while !fits(n) {
        n += 1;
    }
    while n > 2 && fits(n - 1) {
        n -= 1;
    }
    n.saturating_sub(stats.n_trials)
}
