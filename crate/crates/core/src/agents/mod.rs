//! Offline learners and the policies deployed during data collection.

pub mod dqn;
pub mod expert;
pub mod tabular;

use std::fmt;
use std::io::{Read, Write};
use std::path::Path;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mdp::{Action, ActionSet, MdpState, State, N_ACTIONS};
use crate::nn;

pub use dqn::{dqn_train, encode_dataset, td_loss, td_loss_and_grad, QNetwork, TdBatch};
pub use expert::{ExpertConfig, ExpertPolicy};
pub use tabular::{tabular_train, QTable};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Hyperparams {
    pub tabular_lr: f64,
    pub tabular_max_passes: u32,
    /// Stop once a full pass changes no entry by more than this.
    pub tabular_tol: f64,
    pub dqn_lr: f64,
    pub dqn_hidden: usize,
    pub dqn_steps: u32,
    pub minibatch: usize,
    pub target_sync_interval: u32,
    pub discount: f64,
    /// Exploration rate while collecting data.
    pub epsilon: f64,
}

impl Default for Hyperparams {
    fn default() -> Self {
        Hyperparams {
            tabular_lr: 0.1,
            tabular_max_passes: 200,
            tabular_tol: 1e-4,
            dqn_lr: 0.01,
            dqn_hidden: 256,
            dqn_steps: 20_000,
            minibatch: 64,
            target_sync_interval: 500,
            discount: 0.99,
            epsilon: 0.05,
        }
    }
}

impl Hyperparams {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("agents.tabular_lr", self.tabular_lr),
            ("agents.tabular_tol", self.tabular_tol),
            ("agents.dqn_lr", self.dqn_lr),
        ];
        for (key, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::config(key, format!("must be > 0, got {v}")));
            }
        }
        let counts = [
            ("agents.tabular_max_passes", self.tabular_max_passes as usize),
            ("agents.dqn_hidden", self.dqn_hidden),
            ("agents.dqn_steps", self.dqn_steps as usize),
            ("agents.minibatch", self.minibatch),
            ("agents.target_sync_interval", self.target_sync_interval as usize),
        ];
        for (key, v) in counts {
            if v == 0 {
                return Err(Error::config(key, "must be >= 1"));
            }
        }
        if !(0.0..1.0).contains(&self.discount) {
            return Err(Error::config("agents.discount", format!("must be in [0, 1), got {}", self.discount)));
        }
        if !(0.0..=1.0).contains(&self.epsilon) {
            return Err(Error::config("agents.epsilon", format!("must be in [0, 1], got {}", self.epsilon)));
        }
        Ok(())
    }
}

/// Anything that scores the seven actions of a state.
pub trait QFunction<S: MdpState = State> {
    fn q_values(&self, s: &S) -> [f64; N_ACTIONS];

    fn q(&self, s: &S, a: Action) -> f64 {
        self.q_values(s)[a.index()]
    }

    fn max_valid(&self, s: &S) -> f64 {
        max_over(&self.q_values(s), s.valid_actions())
    }

    fn greedy(&self, s: &S) -> Action {
        argmax_over(&self.q_values(s), s.valid_actions())
    }
}

/// Largest Q among `valid`.
pub fn max_over(q: &[f64; N_ACTIONS], valid: ActionSet) -> f64 {
    valid.iter().map(|a| q[a.index()]).fold(f64::NEG_INFINITY, f64::max)
}

/// Argmax among `valid`; the lowest code wins ties.
pub fn argmax_over(q: &[f64; N_ACTIONS], valid: ActionSet) -> Action {
    let mut best = Action::KEEP;
    let mut best_q = f64::NEG_INFINITY;
    for a in valid.iter() {
        if q[a.index()] > best_q {
            best = a;
            best_q = q[a.index()];
        }
    }
    best
}

pub fn uniform_valid<R: Rng + ?Sized>(valid: ActionSet, rng: &mut R) -> Action {
    let k = rng.random_range(0..valid.len());
    valid.iter().nth(k).expect("action 0 is always valid")
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PolicyKind {
    Tabular,
    Deepq,
    Random,
    Expert,
}

impl PolicyKind {
    pub fn name(self) -> &'static str {
        match self {
            PolicyKind::Tabular => "tabular",
            PolicyKind::Deepq => "deepq",
            PolicyKind::Random => "random",
            PolicyKind::Expert => "expert",
        }
    }
}

impl fmt::Display for PolicyKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for PolicyKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "tabular" => Ok(PolicyKind::Tabular),
            "deepq" | "dqn" => Ok(PolicyKind::Deepq),
            "random" => Ok(PolicyKind::Random),
            "expert" => Ok(PolicyKind::Expert),
            _ => Err(Error::Parameter(format!("unknown policy kind `{s}`"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum Policy {
    Tabular(QTable),
    DeepQ(QNetwork),
    Random,
    Expert(ExpertPolicy),
}

impl Policy {
    pub fn kind(&self) -> PolicyKind {
        match self {
            Policy::Tabular(_) => PolicyKind::Tabular,
            Policy::DeepQ(_) => PolicyKind::Deepq,
            Policy::Random => PolicyKind::Random,
            Policy::Expert(_) => PolicyKind::Expert,
        }
    }

    /// Q-values for the learned kinds.
    pub fn q_function(&self) -> Option<&dyn QFunction> {
        match self {
            Policy::Tabular(t) => Some(t),
            Policy::DeepQ(n) => Some(n),
            _ => None,
        }
    }

    /// Greedy action. Only the random kind draws from `rng`.
    pub fn act_greedy<R: Rng + ?Sized>(&self, s: &State, rng: &mut R) -> Action {
        match self {
            Policy::Tabular(t) => t.greedy(s),
            Policy::DeepQ(n) => n.greedy(s),
            Policy::Random => uniform_valid(s.valid_actions(), rng),
            Policy::Expert(e) => e.act(s),
        }
    }

    /// With probability `epsilon` a uniform valid action, else greedy.
    pub fn act_epsilon<R: Rng + ?Sized>(&self, s: &State, epsilon: f64, rng: &mut R) -> Action {
        if epsilon > 0.0 && rng.random::<f64>() < epsilon {
            uniform_valid(s.valid_actions(), rng)
        } else {
            self.act_greedy(s, rng)
        }
    }

    pub fn write<W: Write>(&self, w: W) -> Result<()> {
        let (header, params): (PolicyHeader, Vec<f64>) = match self {
            Policy::Tabular(t) => (
                PolicyHeader {
                    kind: PolicyKind::Tabular,
                    hyperparams: Some(t.hyperparams.clone()),
                    info: Some(t.info.clone()),
                    hidden: None,
                    expert: None,
                },
                t.to_flat(),
            ),
            Policy::DeepQ(n) => (
                PolicyHeader {
                    kind: PolicyKind::Deepq,
                    hyperparams: Some(n.hyperparams.clone()),
                    info: Some(n.info.clone()),
                    hidden: Some(n.hidden()),
                    expert: None,
                },
                nn::Parameters::params(n).concat(),
            ),
            Policy::Random => (
                PolicyHeader {
                    kind: PolicyKind::Random,
                    hyperparams: None,
                    info: None,
                    hidden: None,
                    expert: None,
                },
                Vec::new(),
            ),
            Policy::Expert(e) => (
                PolicyHeader {
                    kind: PolicyKind::Expert,
                    hyperparams: None,
                    info: None,
                    hidden: None,
                    expert: Some(e.config().clone()),
                },
                Vec::new(),
            ),
        };
        nn::write_model(w, POLICY_MAGIC, &header, &[&params])
    }

    pub fn read<R: Read>(r: R) -> Result<Self> {
        let (h, values): (PolicyHeader, Vec<f64>) = nn::read_model(r, POLICY_MAGIC)?;
        let missing = |what: &str| Error::Parameter(format!("{} policy file lacks {what}", h.kind));
        Ok(match h.kind {
            PolicyKind::Tabular => {
                let mut t = QTable::from_flat(&values)?;
                t.hyperparams = h.hyperparams.clone().ok_or_else(|| missing("hyperparams"))?;
                t.info = h.info.clone().ok_or_else(|| missing("training info"))?;
                Policy::Tabular(t)
            }
            PolicyKind::Deepq => {
                let hidden = h.hidden.ok_or_else(|| missing("hidden size"))?;
                let mut n = QNetwork::zeros(hidden);
                nn::load_params(&mut n, &values)?;
                n.hyperparams = h.hyperparams.clone().ok_or_else(|| missing("hyperparams"))?;
                n.info = h.info.clone().ok_or_else(|| missing("training info"))?;
                Policy::DeepQ(n)
            }
            PolicyKind::Random => Policy::Random,
            PolicyKind::Expert => Policy::Expert(ExpertPolicy::new(h.expert.clone().ok_or_else(|| missing("expert config"))?)?),
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let f = std::fs::File::create(path)?;
        self.write(std::io::BufWriter::new(f))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let f = std::fs::File::open(path)?;
        Self::read(std::io::BufReader::new(f)).map_err(|e| match e {
            Error::Io(_) | Error::Json(_) | Error::Parameter(_) | Error::Shape(_) => Error::format(path, e),
            other => other,
        })
    }
}

const POLICY_MAGIC: &[u8; 8] = b"SLPOLICY";

#[derive(Serialize, Deserialize)]
struct PolicyHeader {
    kind: PolicyKind,
    hyperparams: Option<Hyperparams>,
    info: Option<TrainInfo>,
    hidden: Option<usize>,
    expert: Option<ExpertConfig>,
}

/// Summary of a training run, kept with the model.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainInfo {
    /// Passes (tabular) or gradient steps (DQN).
    pub iterations: u64,
    /// Last pass's largest |ΔQ| (tabular) or last minibatch loss (DQN).
    pub final_metric: f64,
    pub converged: bool,
    pub n_transitions: usize,
    pub seed: u64,
}
