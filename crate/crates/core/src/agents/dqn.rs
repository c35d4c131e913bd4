use ndarray::{Array2, ArrayView2, Axis};
use rand::Rng;

use super::{max_over, Hyperparams, QFunction, TrainInfo};
use crate::error::{Error, Result};
use crate::mdp::{ActionSet, MdpState, State, Transition, N_ACTIONS, STATE_DIM};
use crate::nn::{relu_backward_inplace, relu_inplace, Adam, Dense, Parameters};
use crate::seed;

/// `5 → hidden (ReLU) → 7` Q-network.
#[derive(Clone, Debug, PartialEq)]
pub struct QNetwork {
    l1: Dense,
    l2: Dense,
    pub hyperparams: Hyperparams,
    pub info: TrainInfo,
}

impl QNetwork {
    pub fn new<R: Rng>(hidden: usize, rng: &mut R) -> Self {
        QNetwork {
            l1: Dense::new(STATE_DIM, hidden, rng),
            l2: Dense::new(hidden, N_ACTIONS, rng),
            hyperparams: Hyperparams::default(),
            info: TrainInfo::default(),
        }
    }

    pub fn zeros(hidden: usize) -> Self {
        QNetwork {
            l1: Dense::zeros(STATE_DIM, hidden),
            l2: Dense::zeros(hidden, N_ACTIONS),
            hyperparams: Hyperparams::default(),
            info: TrainInfo::default(),
        }
    }

    pub fn hidden(&self) -> usize {
        self.l1.fan_out()
    }

    fn forward_cached(&self, x: ArrayView2<f64>) -> (Array2<f64>, Array2<f64>) {
        let mut h = self.l1.forward(x);
        relu_inplace(&mut h);
        let q = self.l2.forward(h.view());
        (h, q)
    }

    /// Q-values for a batch of encoded states, one row each.
    pub fn forward(&self, x: ArrayView2<f64>) -> Array2<f64> {
        self.forward_cached(x).1
    }

    pub fn q_from_features(&self, f: &[f64; STATE_DIM]) -> [f64; N_ACTIONS] {
        let x = ArrayView2::from_shape((1, STATE_DIM), f).expect("1 x 5");
        let q = self.forward(x);
        std::array::from_fn(|i| q[[0, i]])
    }
}

impl<S: MdpState> QFunction<S> for QNetwork {
    fn q_values(&self, s: &S) -> [f64; N_ACTIONS] {
        self.q_from_features(&s.features())
    }
}

impl Parameters for QNetwork {
    fn params(&self) -> Vec<&[f64]> {
        let mut v = self.l1.params();
        v.extend(self.l2.params());
        v
    }

    fn params_mut(&mut self) -> Vec<&mut [f64]> {
        let mut v = self.l1.params_mut();
        v.extend(self.l2.params_mut());
        v
    }
}

/// Encoded minibatch of transitions.
#[derive(Clone, Debug)]
pub struct TdBatch {
    pub x: Array2<f64>,
    pub actions: Vec<usize>,
    pub rewards: Vec<f64>,
    pub x_next: Array2<f64>,
    pub valid_next: Vec<ActionSet>,
}

impl TdBatch {
    pub fn from_transitions<'a, S: MdpState + 'a>(ts: impl IntoIterator<Item = &'a Transition<S>>) -> Self {
        let mut x = Vec::new();
        let mut x_next = Vec::new();
        let mut actions = Vec::new();
        let mut rewards = Vec::new();
        let mut valid_next = Vec::new();
        for t in ts {
            x.extend(t.s.features());
            x_next.extend(t.sp.features());
            actions.push(t.a.index());
            rewards.push(t.r);
            valid_next.push(t.sp.valid_actions());
        }
        let n = actions.len();
        TdBatch {
            x: Array2::from_shape_vec((n, STATE_DIM), x).expect("n x 5"),
            actions,
            rewards,
            x_next: Array2::from_shape_vec((n, STATE_DIM), x_next).expect("n x 5"),
            valid_next,
        }
    }

    pub fn len(&self) -> usize {
        self.actions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.actions.is_empty()
    }

    fn select(&self, idx: &[usize]) -> TdBatch {
        TdBatch {
            x: self.x.select(Axis(0), idx),
            actions: idx.iter().map(|&i| self.actions[i]).collect(),
            rewards: idx.iter().map(|&i| self.rewards[i]).collect(),
            x_next: self.x_next.select(Axis(0), idx),
            valid_next: idx.iter().map(|&i| self.valid_next[i]).collect(),
        }
    }
}

fn td_targets(target: &QNetwork, batch: &TdBatch, discount: f64) -> Vec<f64> {
    let qn = target.forward(batch.x_next.view());
    (0..batch.len())
        .map(|i| {
            let row: [f64; N_ACTIONS] = std::array::from_fn(|a| qn[[i, a]]);
            batch.rewards[i] + discount * max_over(&row, batch.valid_next[i])
        })
        .collect()
}

/// Mean squared TD error, with the target network's masked max held fixed.
pub fn td_loss(online: &QNetwork, target: &QNetwork, batch: &TdBatch, discount: f64) -> f64 {
    let y = td_targets(target, batch, discount);
    let q = online.forward(batch.x.view());
    (0..batch.len())
        .map(|i| (q[[i, batch.actions[i]]] - y[i]).powi(2))
        .sum::<f64>()
        / batch.len() as f64
}

/// Loss and its gradient with respect to the online network's parameters.
pub fn td_loss_and_grad(online: &QNetwork, target: &QNetwork, batch: &TdBatch, discount: f64) -> (f64, QNetwork) {
    let n = batch.len() as f64;
    let y = td_targets(target, batch, discount);
    let (h, q) = online.forward_cached(batch.x.view());
    let mut dq = Array2::zeros(q.raw_dim());
    let mut loss = 0.0;
    for i in 0..batch.len() {
        let a = batch.actions[i];
        let e = q[[i, a]] - y[i];
        loss += e * e;
        dq[[i, a]] = 2.0 * e / n;
    }
    let mut grad = QNetwork::zeros(online.hidden());
    let mut dh = online.l2.backward(h.view(), dq.view(), &mut grad.l2);
    relu_backward_inplace(&mut dh, &h);
    online.l1.backward(batch.x.view(), dh.view(), &mut grad.l1);
    (loss / n, grad)
}

/// DQN on a fixed dataset: uniform minibatches with replacement, a target
/// network copied every `target_sync_interval` steps, Adam, and a fixed step
/// budget.
pub fn dqn_train<S: MdpState>(data: &[Transition<S>], hp: &Hyperparams, seed: u64) -> Result<QNetwork> {
    hp.validate()?;
    if data.is_empty() {
        return Err(Error::EmptyDataset("DQN training needs at least one transition".into()));
    }
    let mut rng = seed::rng(seed);
    let all = TdBatch::from_transitions(data);
    let mut online = QNetwork::new(hp.dqn_hidden, &mut rng);
    let mut target = online.clone();
    let mut opt = Adam::new(hp.dqn_lr, &online);
    let mut recent = std::collections::VecDeque::with_capacity(100);
    let mut idx = vec![0usize; hp.minibatch];
    for step in 0..hp.dqn_steps {
        if step > 0 && step % hp.target_sync_interval == 0 {
            target.clone_from(&online);
        }
        for i in idx.iter_mut() {
            *i = rng.random_range(0..all.len());
        }
        let batch = all.select(&idx);
        let (loss, grad) = td_loss_and_grad(&online, &target, &batch, hp.discount);
        if !loss.is_finite() || !grad.all_finite() {
            return Err(Error::Training(format!(
                "non-finite TD loss {loss} at step {step} (lr {}, discount {}, {} transitions, reward range [{}, {}])",
                hp.dqn_lr,
                hp.discount,
                data.len(),
                all.rewards.iter().cloned().fold(f64::INFINITY, f64::min),
                all.rewards.iter().cloned().fold(f64::NEG_INFINITY, f64::max),
            )));
        }
        opt.step(&mut online, &grad);
        if recent.len() == 100 {
            recent.pop_front();
        }
        recent.push_back(loss);
    }
    online.hyperparams = hp.clone();
    online.info = TrainInfo {
        iterations: u64::from(hp.dqn_steps),
        final_metric: recent.iter().sum::<f64>() / recent.len() as f64,
        converged: true,
        n_transitions: data.len(),
        seed,
    };
    Ok(online)
}

/// Encoded copy of a dataset for callers that evaluate many networks.
pub fn encode_dataset(data: &[Transition<State>]) -> TdBatch {
    TdBatch::from_transitions(data)
}
