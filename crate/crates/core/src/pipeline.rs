//! Train-test-improve loop: collect trials under the deployed policy, grow
//! the dataset, train both learners offline, keep the one with the smaller
//! Bellman error, deploy it next epoch.

use std::collections::BTreeMap;
use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use rand::seq::IndexedRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::agents::{dqn_train, tabular_train, ExpertPolicy, Policy, PolicyKind, QFunction, TrainInfo};
use crate::config::Config;
use crate::env::{emit_kpi_records, radio_rng, write_kpi_csv, EnvConfig, Gnb, KpiRecord};
use crate::error::{Error, Result};
use crate::mdp::{all_user_tuples, read_transitions_file, write_transitions, RbAllocation, State, Transition, TransitionMeta, UserTuple, COMMON_TUPLES};
use crate::scoring::{reward, ScoreConstants};
use crate::selection::{eval_stats, required_trials, select_policy, split_dataset, EvalStats};
use crate::seed::{self, stage};
use crate::traffic::{PeriodArrivals, TraceLibrary};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub epochs: u32,
    pub trials_per_common: u32,
    /// Non-common tuples sampled each epoch.
    pub extra_tuples: u32,
    pub trials_per_extra: u32,
    /// Periods per trial; 480 is two minutes.
    pub periods: u32,
    pub split_ratio: f64,
    /// Top up a tuple while its 95% half-width exceeds this fraction of the mean.
    pub ci_target_rel: f64,
    /// Most top-up trials per tuple per epoch.
    pub topup_cap: u32,
    /// `[rb_mmtc, rb_urllc]` at the start of every trial.
    pub initial_rbs: [u8; 2],
    /// Deployed in epoch 1.
    pub first_policy: PolicyKind,
    /// Tuples for the final policy-vs-baselines comparison, as `"m,u,e"`.
    pub compare_tuples: Vec<String>,
    pub compare_trials: u32,
    pub write_kpis: bool,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            epochs: 4,
            trials_per_common: 3,
            extra_tuples: 5,
            trials_per_extra: 1,
            periods: 480,
            split_ratio: 0.8,
            ci_target_rel: 0.10,
            topup_cap: 10,
            initial_rbs: [5, 6],
            first_policy: PolicyKind::Random,
            compare_tuples: COMMON_TUPLES.iter().map(|t| format!("{},{},{}", t.mmtc, t.urllc, t.embb)).collect(),
            compare_trials: 10,
            write_kpis: true,
        }
    }
}

impl PipelineConfig {
    pub fn validate(&self) -> Result<()> {
        for (key, v) in [
            ("pipeline.epochs", self.epochs),
            ("pipeline.periods", self.periods),
            ("pipeline.trials_per_common", self.trials_per_common),
        ] {
            if v == 0 {
                return Err(Error::config(key, "must be >= 1"));
            }
        }
        if !(self.split_ratio > 0.0 && self.split_ratio < 1.0) {
            return Err(Error::config("pipeline.split_ratio", "must lie strictly between 0 and 1"));
        }
        if !(self.ci_target_rel > 0.0) {
            return Err(Error::config("pipeline.ci_target_rel", "must be > 0"));
        }
        self.initial_allocation()?;
        self.comparison_tuples()?;
        if matches!(self.first_policy, PolicyKind::Tabular | PolicyKind::Deepq) {
            return Err(Error::config("pipeline.first_policy", "must be `random` or `expert`"));
        }
        Ok(())
    }

    pub fn initial_allocation(&self) -> Result<RbAllocation> {
        RbAllocation::new(self.initial_rbs[0], self.initial_rbs[1])
            .map_err(|e| Error::config("pipeline.initial_rbs", e.to_string()))
    }

    pub fn comparison_tuples(&self) -> Result<Vec<UserTuple>> {
        self.compare_tuples
            .iter()
            .map(|s| s.parse().map_err(|e: Error| Error::config("pipeline.compare_tuples", e.to_string())))
            .collect()
    }
}

/// Everything an episode needs besides the policy.
#[derive(Clone, Debug)]
pub struct Simulator {
    pub env: EnvConfig,
    pub score: ScoreConstants,
    pub library: TraceLibrary,
    pub periods: u32,
    pub initial: RbAllocation,
}

impl Simulator {
    pub fn from_config(cfg: &Config) -> Result<Self> {
        let library = TraceLibrary::generate(
            &cfg.traffic.profiles(),
            cfg.traffic.traces_per_slice,
            cfg.traffic.trace_s,
            cfg.traffic.chunk_s,
            cfg.env.period_ms,
            cfg.seed,
        )?;
        Ok(Simulator {
            env: cfg.env.clone(),
            score: cfg.score.clone(),
            library,
            periods: cfg.pipeline.periods,
            initial: cfg.pipeline.initial_allocation()?,
        })
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Episode {
    pub users: UserTuple,
    pub transitions: Vec<Transition>,
    pub mean_reward: f64,
    /// Per-UE KPI rows, empty unless requested.
    pub kpis: Vec<KpiRecord>,
}

/// Runs one trial. Each period the policy sees `(users, rbs)`, picks an
/// action (ε-greedy), the gNB serves the period under the new allocation,
/// and that period's frame yields the reward.
pub fn run_episode(
    sim: &Simulator,
    policy: &Policy,
    users: UserTuple,
    epsilon: f64,
    seed: u64,
    meta: TransitionMeta,
    record_kpis: bool,
) -> Result<Episode> {
    let users = UserTuple::new(users.mmtc, users.urllc, users.embb)?;
    let ue_slices = users.ue_slices();
    let mut traffic_rng = seed::derived_rng(seed, &[0]);
    let mut action_rng = seed::derived_rng(seed, &[1]);
    let mut radio = radio_rng(seed::derive(seed, &[2]));
    let traces: Vec<&[PeriodArrivals]> = ue_slices
        .iter()
        .map(|&s| sim.library.pick(s, &mut traffic_rng))
        .collect();

    let mut gnb = Gnb::new(sim.env.clone(), &ue_slices);
    let mut s = State::new(users, sim.initial);
    let mut transitions = Vec::with_capacity(sim.periods as usize);
    let mut kpis = Vec::new();
    let mut total = 0.0;
    let mut arrivals = vec![PeriodArrivals::idle(0); ue_slices.len()];
    for p in 0..sim.periods {
        for (a, trace) in arrivals.iter_mut().zip(&traces) {
            *a = trace.get(p as usize).copied().unwrap_or(PeriodArrivals::idle(u64::from(p)));
        }
        let a = policy.act_epsilon(&s, epsilon, &mut action_rng);
        let sp = s.step(a);
        let (frame, ues) = gnb.step(&arrivals, sp.rbs)?;
        let r = reward(&frame, &sim.score)?;
        if record_kpis {
            kpis.extend(emit_kpi_records(&frame, &ues, &sim.env, &mut radio));
        }
        total += r;
        transitions.push(Transition {
            s,
            a,
            r,
            sp,
            meta: TransitionMeta { period: p, ..meta },
        });
        s = sp;
    }
    Ok(Episode {
        users,
        mean_reward: total / f64::from(sim.periods),
        transitions,
        kpis,
    })
}

/// `n` tuples drawn uniformly from the valid tuples outside the common nine,
/// distinct while `n` allows it.
pub fn sample_extra_tuples(n: usize, seed: u64) -> Vec<UserTuple> {
    let pool: Vec<UserTuple> = all_user_tuples().into_iter().filter(|t| !t.is_common()).collect();
    let mut rng = seed::rng(seed);
    if n <= pool.len() {
        pool.choose_multiple(&mut rng, n).copied().collect()
    } else {
        (0..n).map(|_| *pool.choose(&mut rng).expect("non-empty pool")).collect()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TupleReport {
    pub users: UserTuple,
    pub scores: Vec<f64>,
    /// Absent with fewer than two trials.
    pub stats: Option<EvalStats>,
    pub topup_trials: u32,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CandidateReport {
    pub kind: PolicyKind,
    pub bellman_error: f64,
    pub train: TrainInfo,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DatasetSizes {
    pub new_transitions: usize,
    pub total: usize,
    pub train: usize,
    pub validation: usize,
    pub trials: u32,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochReport {
    pub epoch: u32,
    /// Policy that collected this epoch's data.
    pub deployed: PolicyKind,
    pub tuples: Vec<TupleReport>,
    /// Mean trial score over the common tuples.
    pub common_mean: f64,
    pub candidates: Vec<CandidateReport>,
    pub selected: PolicyKind,
    pub dataset: DatasetSizes,
}

impl EpochReport {
    pub fn tuple(&self, users: UserTuple) -> Option<&TupleReport> {
        self.tuples.iter().find(|t| t.users == users)
    }
}

pub struct EpochOutcome {
    pub report: EpochReport,
    pub new_transitions: Vec<Transition>,
    /// `(trial, rows)` when KPI logging is on.
    pub kpi_logs: Vec<(u32, Vec<KpiRecord>)>,
    pub candidates: Vec<Policy>,
    pub selected: Policy,
}

struct TrialPlan {
    users: UserTuple,
    seed: u64,
}

fn run_trials(
    sim: &Simulator,
    policy: &Policy,
    epsilon: f64,
    epoch: u32,
    first_trial: u32,
    plans: &[TrialPlan],
    record_kpis: bool,
) -> Result<Vec<Episode>> {
    plans
        .par_iter()
        .enumerate()
        .map(|(i, p)| {
            let meta = TransitionMeta {
                epoch,
                trial: first_trial + i as u32,
                period: 0,
            };
            run_episode(sim, policy, p.users, epsilon, p.seed, meta, record_kpis)
        })
        .collect()
}

/// One epoch: collect, top up noisy tuples, append, split, train, select.
pub fn run_epoch(
    cfg: &Config,
    sim: &Simulator,
    epoch: u32,
    deploy: &Policy,
    dataset: &mut Vec<Transition>,
) -> Result<EpochOutcome> {
    let pc = &cfg.pipeline;
    let root = cfg.seed;
    let e = u64::from(epoch);
    let eps = cfg.agents.epsilon;
    let record = pc.write_kpis;

    let mut plans = Vec::new();
    for t in COMMON_TUPLES {
        for _ in 0..pc.trials_per_common {
            plans.push(t);
        }
    }
    for t in sample_extra_tuples(pc.extra_tuples as usize, seed::derive(root, &[stage::EXTRA_TUPLES, e])) {
        for _ in 0..pc.trials_per_extra {
            plans.push(t);
        }
    }
    let plans: Vec<TrialPlan> = plans
        .into_iter()
        .enumerate()
        .map(|(i, users)| TrialPlan {
            users,
            seed: seed::derive(root, &[stage::COLLECT, e, i as u64]),
        })
        .collect();
    let mut episodes = run_trials(sim, deploy, eps, epoch, 0, &plans, record)?;

    let mut order: Vec<UserTuple> = Vec::new();
    for ep in &episodes {
        if !order.contains(&ep.users) {
            order.push(ep.users);
        }
    }
    let mut topups: BTreeMap<UserTuple, u32> = BTreeMap::new();
    loop {
        let mut scores: BTreeMap<UserTuple, Vec<f64>> = BTreeMap::new();
        for ep in &episodes {
            scores.entry(ep.users).or_default().push(ep.mean_reward);
        }
        let mut extra = Vec::new();
        for users in &order {
            let Ok(stats) = eval_stats(&scores[users]) else {
                continue;
            };
            let done = topups.get(users).copied().unwrap_or(0);
            if stats.ci_halfwidth <= pc.ci_target_rel * stats.mean || done >= pc.topup_cap {
                continue;
            }
            let need = (required_trials(&stats, pc.ci_target_rel) as u32).clamp(1, pc.topup_cap - done);
            *topups.entry(*users).or_default() += need;
            extra.extend(std::iter::repeat_n(*users, need as usize));
        }
        if extra.is_empty() {
            break;
        }
        let first = episodes.len() as u32;
        let plans: Vec<TrialPlan> = extra
            .into_iter()
            .enumerate()
            .map(|(i, users)| TrialPlan {
                users,
                seed: seed::derive(root, &[stage::TOPUP, e, u64::from(first) + i as u64]),
            })
            .collect();
        episodes.extend(run_trials(sim, deploy, eps, epoch, first, &plans, record)?);
    }

    let mut tuples = Vec::new();
    for users in &order {
        let scores: Vec<f64> = episodes
            .iter()
            .filter(|ep| ep.users == *users)
            .map(|ep| ep.mean_reward)
            .collect();
        tuples.push(TupleReport {
            users: *users,
            stats: eval_stats(&scores).ok(),
            scores,
            topup_trials: topups.get(users).copied().unwrap_or(0),
        });
    }
    let common: Vec<f64> = episodes
        .iter()
        .filter(|ep| ep.users.is_common())
        .map(|ep| ep.mean_reward)
        .collect();
    let common_mean = common.iter().sum::<f64>() / common.len().max(1) as f64;

    let n_trials = episodes.len() as u32;
    let mut new_transitions = Vec::with_capacity(episodes.len() * pc.periods as usize);
    let mut kpi_logs = Vec::new();
    for (i, ep) in episodes.into_iter().enumerate() {
        new_transitions.extend(ep.transitions);
        if record {
            kpi_logs.push((i as u32, ep.kpis));
        }
    }
    dataset.extend(new_transitions.iter().cloned());

    let (train, val) = split_dataset(dataset, pc.split_ratio, seed::derive(root, &[stage::SPLIT, e]))?;
    let (tab, dqn) = rayon::join(
        || tabular_train(&train, &cfg.agents, seed::derive(root, &[stage::TABULAR, e])),
        || dqn_train(&train, &cfg.agents, seed::derive(root, &[stage::DQN, e])),
    );
    let candidates = vec![Policy::Tabular(tab?), Policy::DeepQ(dqn?)];
    let qs: Vec<&dyn QFunction> = candidates.iter().filter_map(|p| p.q_function()).collect();
    let selection = select_policy(&qs, &val, cfg.agents.discount)?;
    let candidate_reports = candidates
        .iter()
        .zip(&selection.bellman_errors)
        .map(|(p, be)| CandidateReport {
            kind: p.kind(),
            bellman_error: *be,
            train: match p {
                Policy::Tabular(t) => t.info.clone(),
                Policy::DeepQ(n) => n.info.clone(),
                _ => TrainInfo::default(),
            },
        })
        .collect();
    let selected = candidates[selection.selected].clone();

    Ok(EpochOutcome {
        report: EpochReport {
            epoch,
            deployed: deploy.kind(),
            tuples,
            common_mean,
            candidates: candidate_reports,
            selected: selected.kind(),
            dataset: DatasetSizes {
                new_transitions: new_transitions.len(),
                total: dataset.len(),
                train: train.len(),
                validation: val.len(),
                trials: n_trials,
            },
        },
        new_transitions,
        kpi_logs,
        candidates,
        selected,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PolicyScores {
    pub kind: PolicyKind,
    pub scores: Vec<f64>,
    pub stats: Option<EvalStats>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ComparisonRow {
    pub users: UserTuple,
    pub policies: Vec<PolicyScores>,
}

impl ComparisonRow {
    pub fn get(&self, kind: PolicyKind) -> Option<&PolicyScores> {
        self.policies.iter().find(|p| p.kind == kind)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ComparisonReport {
    /// Kind of the learned policy under test.
    pub learned: PolicyKind,
    pub trials_per_tuple: u32,
    pub rows: Vec<ComparisonRow>,
}

impl ComparisonReport {
    pub fn row(&self, users: UserTuple) -> Option<&ComparisonRow> {
        self.rows.iter().find(|r| r.users == users)
    }
}

/// Greedy runs of `learned`, the expert and the random policy on identical
/// trial seeds (same traffic draws for every policy).
pub fn compare_policies(cfg: &Config, sim: &Simulator, learned: &Policy) -> Result<ComparisonReport> {
    let expert = Policy::Expert(ExpertPolicy::new(cfg.expert.clone())?);
    let policies = [learned, &expert, &Policy::Random];
    let tuples = cfg.pipeline.comparison_tuples()?;
    let n = cfg.pipeline.compare_trials;
    let mut rows = Vec::new();
    for (ti, users) in tuples.iter().enumerate() {
        let mut row = ComparisonRow {
            users: *users,
            policies: Vec::new(),
        };
        for p in policies {
            let scores = (0..n)
                .into_par_iter()
                .map(|k| {
                    let s = seed::derive(cfg.seed, &[stage::COMPARE, ti as u64, u64::from(k)]);
                    run_episode(sim, p, *users, 0.0, s, TransitionMeta::default(), false).map(|e| e.mean_reward)
                })
                .collect::<Result<Vec<f64>>>()?;
            row.policies.push(PolicyScores {
                kind: p.kind(),
                stats: eval_stats(&scores).ok(),
                scores,
            });
        }
        rows.push(row);
    }
    Ok(ComparisonReport {
        learned: learned.kind(),
        trials_per_tuple: n,
        rows,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PipelineReport {
    pub seed: u64,
    pub epochs: Vec<EpochReport>,
    pub comparison: Option<ComparisonReport>,
}

pub struct PipelineRun {
    pub report: PipelineReport,
    pub final_policy: Policy,
    pub dataset: Vec<Transition>,
}

fn epoch_dir(out: &Path, epoch: u32) -> PathBuf {
    out.join(format!("epoch_{epoch}"))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut w = BufWriter::new(fs::File::create(path)?);
    serde_json::to_writer_pretty(&mut w, value)?;
    w.write_all(b"\n")?;
    w.flush()?;
    Ok(())
}

pub fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path)?;
    serde_json::from_str(&text).map_err(|e| Error::format(path, e))
}

fn persist_epoch(out: &Path, outcome: &EpochOutcome) -> Result<()> {
    let dir = epoch_dir(out, outcome.report.epoch);
    fs::create_dir_all(&dir)?;
    write_transitions(
        &outcome.new_transitions,
        BufWriter::new(fs::File::create(dir.join("transitions.jsonl"))?),
    )?;
    for p in &outcome.candidates {
        p.save(&dir.join(format!("policy_{}.bin", p.kind())))?;
    }
    if !outcome.kpi_logs.is_empty() {
        let kdir = dir.join("kpis");
        fs::create_dir_all(&kdir)?;
        for (trial, rows) in &outcome.kpi_logs {
            write_kpi_csv(rows, BufWriter::new(fs::File::create(kdir.join(format!("trial_{trial}.csv")))?))?;
        }
    }
    // Written last: its presence marks the epoch complete.
    write_json(&dir.join("report.json"), &outcome.report)
}

/// Reloads a completed epoch: its report, transitions and selected policy.
fn load_epoch(out: &Path, epoch: u32) -> Result<Option<(EpochReport, Vec<Transition>, Policy)>> {
    let dir = epoch_dir(out, epoch);
    let report_path = dir.join("report.json");
    if !report_path.exists() {
        return Ok(None);
    }
    let report: EpochReport = read_json(&report_path)?;
    let transitions = read_transitions_file(&dir.join("transitions.jsonl"))?;
    let policy = Policy::load(&dir.join(format!("policy_{}.bin", report.selected)))?;
    Ok(Some((report, transitions, policy)))
}

/// Chains the configured epochs, deploying each epoch's selection in the
/// next, then compares the final selection with the baselines. With
/// `out_dir`, artifacts are written per epoch and completed epochs found
/// there are reused when `resume` is set.
pub fn train_test_improve(cfg: &Config, out_dir: Option<&Path>, resume: bool) -> Result<PipelineRun> {
    cfg.validate()?;
    let sim = Simulator::from_config(cfg)?;
    if let Some(out) = out_dir {
        fs::create_dir_all(out)?;
        let resolved = out.join("config.resolved.toml");
        let text = cfg.to_toml()?;
        if resume && resolved.exists() && fs::read_to_string(&resolved)? != text {
            return Err(Error::Parameter(format!(
                "cannot resume: {} differs from the current configuration",
                resolved.display()
            )));
        }
        fs::write(&resolved, text)?;
    }

    let mut policy = match cfg.pipeline.first_policy {
        PolicyKind::Expert => Policy::Expert(ExpertPolicy::new(cfg.expert.clone())?),
        _ => Policy::Random,
    };
    let mut dataset = Vec::new();
    let mut epochs = Vec::new();
    for epoch in 1..=cfg.pipeline.epochs {
        if resume {
            if let Some((report, transitions, selected)) = out_dir.map(|o| load_epoch(o, epoch)).transpose()?.flatten() {
                dataset.extend(transitions);
                epochs.push(report);
                policy = selected;
                continue;
            }
        }
        let outcome = run_epoch(cfg, &sim, epoch, &policy, &mut dataset)?;
        if let Some(out) = out_dir {
            persist_epoch(out, &outcome)?;
        }
        epochs.push(outcome.report);
        policy = outcome.selected;
    }

    let comparison = if cfg.pipeline.compare_trials > 0 && !cfg.pipeline.compare_tuples.is_empty() {
        Some(compare_policies(cfg, &sim, &policy)?)
    } else {
        None
    };
    let report = PipelineReport {
        seed: cfg.seed,
        epochs,
        comparison,
    };
    if let Some(out) = out_dir {
        write_json(&out.join("report.json"), &report)?;
        fs::write(out.join("report.txt"), crate::report::render_text(&report))?;
        policy.save(&out.join(format!("final_policy_{}.bin", policy.kind())))?;
    }
    Ok(PipelineRun {
        report,
        final_policy: policy,
        dataset,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small_cfg() -> Config {
        let mut cfg = Config::default();
        cfg.traffic.traces_per_slice = 1;
        cfg.traffic.trace_s = 30.0;
        cfg.traffic.chunk_s = 10.0;
        cfg.pipeline.periods = 40;
        cfg
    }

    #[test]
    fn episode_has_one_transition_per_period_and_is_deterministic() {
        let cfg = small_cfg();
        let sim = Simulator::from_config(&cfg).unwrap();
        let users = UserTuple::new(1, 2, 3).unwrap();
        let run = |seed| run_episode(&sim, &Policy::Random, users, 0.05, seed, TransitionMeta::default(), true).unwrap();
        let a = run(7);
        assert_eq!(a.transitions.len(), 40);
        assert_eq!(a.kpis.len(), 40 * 6);
        assert!(a.transitions.iter().all(|t| t.is_consistent()));
        assert!(a.transitions.windows(2).all(|w| w[1].s == w[0].sp));
        assert_eq!(a, run(7));
        assert_ne!(a.transitions, run(8).transitions);
    }

    #[test]
    fn single_urllc_user_is_served_without_delay() {
        let cfg = small_cfg();
        let sim = Simulator::from_config(&cfg).unwrap();
        let users = UserTuple::new(0, 1, 0).unwrap();
        // Empty eMBB scores 1/2 and idle mMTC at most 1/3, so 11/18 is the ceiling.
        let ep = run_episode(&sim, &Policy::Random, users, 0.0, 3, TransitionMeta::default(), false).unwrap();
        assert!(ep.mean_reward > 0.45 && ep.mean_reward <= 11.0 / 18.0 + 1e-12, "{}", ep.mean_reward);
        let urllc_ok = ep.transitions.iter().all(|t| t.r >= (1.0 + 0.5 + 1.0 / 51.0) / 3.0 - 1e-12);
        assert!(urllc_ok);
    }

    #[test]
    fn extra_tuples_are_valid_and_not_common() {
        assert!(sample_extra_tuples(0, 1).is_empty());
        let t = sample_extra_tuples(50, 1);
        assert_eq!(t.len(), 50);
        assert!(t.iter().all(|u| (1..=10).contains(&u.total()) && !u.is_common()));
        assert_eq!(t, sample_extra_tuples(50, 1));
        assert_eq!(sample_extra_tuples(400, 2).len(), 400);
    }

    #[test]
    fn config_validation_names_keys() {
        let mut pc = PipelineConfig::default();
        pc.initial_rbs = [0, 3];
        assert!(matches!(pc.validate(), Err(Error::Config { key, .. }) if key == "pipeline.initial_rbs"));
        let mut pc = PipelineConfig::default();
        pc.compare_tuples = vec!["0,0,0".into()];
        assert!(matches!(pc.validate(), Err(Error::Config { key, .. }) if key == "pipeline.compare_tuples"));
    }
}
