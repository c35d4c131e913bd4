use std::collections::HashMap;

use rand::seq::SliceRandom;

use super::{max_over, Hyperparams, QFunction, TrainInfo};
use crate::error::{Error, Result};
use crate::mdp::{Action, MdpState, State, Transition, N_ACTIONS};
use crate::seed;

/// Sparse Q-table. Pairs never updated read as 0.
#[derive(Clone, Debug, PartialEq)]
pub struct QTable<S: MdpState = State> {
    rows: HashMap<S, Row>,
    pub hyperparams: Hyperparams,
    pub info: TrainInfo,
}

#[derive(Clone, Copy, Debug, Default, PartialEq)]
struct Row {
    q: [f64; N_ACTIONS],
    /// Actions that have been written.
    seen: u8,
}

impl<S: MdpState> Default for QTable<S> {
    fn default() -> Self {
        QTable {
            rows: HashMap::new(),
            hyperparams: Hyperparams::default(),
            info: TrainInfo::default(),
        }
    }
}

impl<S: MdpState> QTable<S> {
    pub fn get(&self, s: &S, a: Action) -> f64 {
        self.rows.get(s).map_or(0.0, |r| r.q[a.index()])
    }

    /// Writes one entry; `a` must be valid in `s`.
    pub fn set(&mut self, s: S, a: Action, q: f64) -> Result<()> {
        if !s.valid_actions().contains(a) {
            return Err(Error::Domain(format!("action {a} is not valid in {s:?}")));
        }
        let row = self.rows.entry(s).or_default();
        row.q[a.index()] = q;
        row.seen |= 1 << a.code();
        Ok(())
    }

    /// Number of stored (state, action) pairs.
    pub fn len(&self) -> usize {
        self.rows.values().map(|r| r.seen.count_ones() as usize).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Stored entries sorted by state then action.
    pub fn entries(&self) -> Vec<(S, Action, f64)> {
        let mut states: Vec<&S> = self.rows.keys().collect();
        states.sort();
        let mut out = Vec::with_capacity(self.len());
        for s in states {
            let row = &self.rows[s];
            for a in Action::all().filter(|a| row.seen & (1 << a.code()) != 0) {
                out.push((s.clone(), a, row.q[a.index()]));
            }
        }
        out
    }
}

impl<S: MdpState> QFunction<S> for QTable<S> {
    fn q_values(&self, s: &S) -> [f64; N_ACTIONS] {
        self.rows.get(s).map_or([0.0; N_ACTIONS], |r| r.q)
    }
}

impl QTable<State> {
    /// `[m, u, e, rb_m, rb_u, a, q]` per entry.
    pub(crate) fn to_flat(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.len() * 7);
        for (s, a, q) in self.entries() {
            out.extend(s.raw().map(f64::from));
            out.push(f64::from(a.code()));
            out.push(q);
        }
        out
    }

    pub(crate) fn from_flat(values: &[f64]) -> Result<Self> {
        if !values.len().is_multiple_of(7) {
            return Err(Error::Shape(format!("tabular payload of {} values is not a multiple of 7", values.len())));
        }
        let as_u8 = |v: f64| -> Result<u8> {
            if v.fract() == 0.0 && (0.0..=255.0).contains(&v) {
                Ok(v as u8)
            } else {
                Err(Error::Shape(format!("bad integer field {v} in tabular payload")))
            }
        };
        let mut t = QTable::default();
        for chunk in values.chunks_exact(7) {
            let mut raw = [0u8; 5];
            for (r, v) in raw.iter_mut().zip(chunk) {
                *r = as_u8(*v)?;
            }
            let s = State::from_raw(raw)?;
            let a = Action::new(as_u8(chunk[5])?)?;
            t.set(s, a, chunk[6])?;
        }
        Ok(t)
    }
}

/// Watkins Q-learning swept repeatedly over a fixed dataset. Each pass visits
/// the transitions in a fresh seed-derived order; training stops once a pass
/// moves no entry by more than `tabular_tol` or after `tabular_max_passes`.
pub fn tabular_train<S: MdpState>(data: &[Transition<S>], hp: &Hyperparams, seed: u64) -> Result<QTable<S>> {
    hp.validate()?;
    if data.is_empty() {
        return Err(Error::EmptyDataset("tabular training needs at least one transition".into()));
    }
    if let Some(t) = data.iter().find(|t| !t.s.valid_actions().contains(t.a)) {
        return Err(Error::Domain(format!("transition takes invalid action {} in {:?}", t.a, t.s)));
    }
    let mut rng = seed::rng(seed);
    let mut table = QTable::<S> {
        hyperparams: hp.clone(),
        ..Default::default()
    };
    let mut order: Vec<usize> = (0..data.len()).collect();
    let mut passes = 0u64;
    let mut max_delta = f64::INFINITY;
    while passes < u64::from(hp.tabular_max_passes) {
        order.shuffle(&mut rng);
        max_delta = 0.0f64;
        for &i in &order {
            let t = &data[i];
            let next = table
                .rows
                .get(&t.sp)
                .map_or(0.0, |r| max_over(&r.q, t.sp.valid_actions()));
            let row = table.rows.entry(t.s.clone()).or_default();
            let old = row.q[t.a.index()];
            let delta = hp.tabular_lr * (t.r + hp.discount * next - old);
            row.q[t.a.index()] = old + delta;
            row.seen |= 1 << t.a.code();
            max_delta = max_delta.max(delta.abs());
        }
        passes += 1;
        if !max_delta.is_finite() {
            return Err(Error::Training(format!("tabular Q diverged at pass {passes}")));
        }
        if max_delta < hp.tabular_tol {
            break;
        }
    }
    table.info = TrainInfo {
        iterations: passes,
        final_metric: max_delta,
        converged: max_delta < hp.tabular_tol,
        n_transitions: data.len(),
        seed,
    };
    Ok(table)
}
