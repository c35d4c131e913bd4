//! A 6×8 grid world with seven masked moves, small enough to solve exactly.

#![allow(dead_code)]

use std::collections::BTreeMap;

use slicelab::mdp::{ActionSet, MdpState, TransitionMeta, N_ACTIONS, STATE_DIM};
use slicelab::{Action, Transition};

pub const W: i8 = 6;
pub const H: i8 = 8;
pub const GOAL: (i8, i8) = (4, 6);

/// Move per action code: stay, four axis steps, two diagonals.
const MOVES: [(i8, i8); N_ACTIONS] = [(0, 0), (1, 0), (-1, 0), (0, 1), (0, -1), (1, 1), (-1, -1)];

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Cell(pub i8, pub i8);

impl Cell {
    pub fn all() -> Vec<Cell> {
        (0..W).flat_map(|x| (0..H).map(move |y| Cell(x, y))).collect()
    }

    fn target(self, a: Action) -> Option<Cell> {
        let (dx, dy) = MOVES[a.index()];
        let (x, y) = (self.0 + dx, self.1 + dy);
        ((0..W).contains(&x) && (0..H).contains(&y)).then_some(Cell(x, y))
    }

    pub fn step(self, a: Action) -> Cell {
        self.target(a).unwrap_or(self)
    }

    pub fn reward(self, a: Action) -> f64 {
        let n = self.step(a);
        1.0 - f64::from((n.0 - GOAL.0).abs() + (n.1 - GOAL.1).abs()) / 12.0
    }
}

impl MdpState for Cell {
    fn features(&self) -> [f64; STATE_DIM] {
        let x = f64::from(self.0) / f64::from(W - 1);
        let y = f64::from(self.1) / f64::from(H - 1);
        [x, y, x * x, y * y, x * y]
    }

    fn valid_actions(&self) -> ActionSet {
        ActionSet::from_actions(Action::all().filter(|a| self.target(*a).is_some()))
    }
}

/// Every valid `(s, a)` exactly once.
pub fn exhaustive_data() -> Vec<Transition<Cell>> {
    let mut out = Vec::new();
    for (i, s) in Cell::all().into_iter().enumerate() {
        for a in s.valid_actions().iter() {
            out.push(Transition {
                s,
                a,
                r: s.reward(a),
                sp: s.step(a),
                meta: TransitionMeta {
                    epoch: 0,
                    trial: i as u32,
                    period: a.code().into(),
                },
            });
        }
    }
    out
}

/// Value iteration on the exact model.
pub fn value_iteration(discount: f64) -> BTreeMap<(Cell, Action), f64> {
    let mut q: BTreeMap<(Cell, Action), f64> = BTreeMap::new();
    for s in Cell::all() {
        for a in s.valid_actions().iter() {
            q.insert((s, a), 0.0);
        }
    }
    let v = |q: &BTreeMap<(Cell, Action), f64>, s: Cell| {
        s.valid_actions()
            .iter()
            .map(|a| q[&(s, a)])
            .fold(f64::NEG_INFINITY, f64::max)
    };
    loop {
        let mut delta = 0.0f64;
        let next: BTreeMap<_, _> = q
            .keys()
            .map(|&(s, a)| {
                let nq = s.reward(a) + discount * v(&q, s.step(a));
                delta = delta.max((nq - q[&(s, a)]).abs());
                ((s, a), nq)
            })
            .collect();
        q = next;
        if delta < 1e-13 {
            return q;
        }
    }
}

/// Actions within `tol` of the best optimal value in `s`.
pub fn optimal_actions(q: &BTreeMap<(Cell, Action), f64>, s: Cell, tol: f64) -> Vec<Action> {
    let best = s
        .valid_actions()
        .iter()
        .map(|a| q[&(s, a)])
        .fold(f64::NEG_INFINITY, f64::max);
    s.valid_actions().iter().filter(|a| q[&(s, *a)] >= best - tol).collect()
}
