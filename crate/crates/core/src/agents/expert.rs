//! Static baseline: walk the allocation one Rb per period toward a target
//! derived from the user tuple.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mdp::{Action, RbAllocation, State, UserTuple, TOTAL_RBS};
use crate::slice::Slice;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExpertConfig {
    /// Per-user weights in (mMTC, URLLC, eMBB) order.
    pub weights: [f64; 3],
    /// Fixed `[rb_mmtc, rb_urllc]` targets keyed by `"m,u,e"`; these win over
    /// the weights.
    pub targets: BTreeMap<String, [u8; 2]>,
}

impl Default for ExpertConfig {
    fn default() -> Self {
        ExpertConfig {
            weights: [1.0, 2.0, 3.0],
            targets: BTreeMap::new(),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ExpertPolicy {
    cfg: ExpertConfig,
    fixed: BTreeMap<UserTuple, RbAllocation>,
}

impl Default for ExpertPolicy {
    fn default() -> Self {
        ExpertPolicy::new(ExpertConfig::default()).expect("default expert config is valid")
    }
}

impl ExpertPolicy {
    pub fn new(cfg: ExpertConfig) -> Result<Self> {
        if cfg.weights.iter().any(|w| !(w.is_finite() && *w > 0.0)) {
            return Err(Error::config("expert.weights", "weights must be finite and > 0"));
        }
        let mut fixed = BTreeMap::new();
        for (k, [m, u]) in &cfg.targets {
            let key = format!("expert.targets.\"{k}\"");
            let users: UserTuple = k.parse().map_err(|e: Error| Error::config(&key, e.to_string()))?;
            let rbs = RbAllocation::new(*m, *u).map_err(|e| Error::config(&key, e.to_string()))?;
            fixed.insert(users, rbs);
        }
        Ok(ExpertPolicy { cfg, fixed })
    }

    pub fn config(&self) -> &ExpertConfig {
        &self.cfg
    }

    pub fn target(&self, users: UserTuple) -> RbAllocation {
        self.fixed
            .get(&users)
            .copied()
            .unwrap_or_else(|| proportional_target(users, self.cfg.weights))
    }

    /// One Rb from the slice furthest above target to the one furthest below.
    pub fn act(&self, s: &State) -> Action {
        let target = self.target(s.users).as_array();
        let cur = s.rbs.as_array();
        let diff: [i16; 3] = std::array::from_fn(|i| i16::from(cur[i]) - i16::from(target[i]));
        let from = (0..3).max_by_key(|&i| (diff[i], std::cmp::Reverse(i))).unwrap();
        let to = (0..3).min_by_key(|&i| (diff[i], i)).unwrap();
        if diff[from] <= 0 {
            return Action::KEEP;
        }
        Action::moving(Slice::ALL[from], Slice::ALL[to]).expect("distinct slices")
    }
}

/// One Rb per slice, then the remaining Rbs by largest remainder of
/// `weight × users`; equal remainders favour the heavier weight.
pub fn proportional_target(users: UserTuple, weights: [f64; 3]) -> RbAllocation {
    let counts = users.as_array();
    let w: [f64; 3] = std::array::from_fn(|i| weights[i] * f64::from(counts[i]));
    let total: f64 = w.iter().sum();
    let spare = TOTAL_RBS - 3;
    let mut rbs = [1u8; 3];
    if total > 0.0 {
        let quota: [f64; 3] = std::array::from_fn(|i| f64::from(spare) * w[i] / total);
        let mut left = spare;
        for i in 0..3 {
            let f = quota[i].floor() as u8;
            rbs[i] += f;
            left -= f;
        }
        let mut order = [0usize, 1, 2];
        order.sort_by(|&a, &b| {
            let (fa, fb) = (quota[a] - quota[a].floor(), quota[b] - quota[b].floor());
            fb.total_cmp(&fa).then(weights[b].total_cmp(&weights[a])).then(b.cmp(&a))
        });
        for &i in order.iter().take(usize::from(left)) {
            rbs[i] += 1;
        }
    } else {
        rbs[2] += spare;
    }
    RbAllocation::from_array(rbs).expect("target sums to 17 with every slice >= 1")
}
