//! Plain-text tables for pipeline and classifier reports.

use std::fmt::Write;

use crate::classifier::{EvalReport, TrafficClass};
use crate::mdp::UserTuple;
use crate::pipeline::{ComparisonReport, EpochReport, PipelineReport};
use crate::selection::EvalStats;

fn users(u: UserTuple) -> String {
    format!("{}, {}, {}", u.mmtc, u.urllc, u.embb)
}

fn mean_cv(stats: Option<&EvalStats>, scores: &[f64]) -> (String, String) {
    match stats {
        Some(s) => (format!("{:.4}", s.mean), format!("{:.4}", s.cv)),
        None if !scores.is_empty() => (format!("{:.4}", scores.iter().sum::<f64>() / scores.len() as f64), "-".into()),
        None => ("-".into(), "-".into()),
    }
}

/// Per-tuple score table of one epoch.
pub fn render_epoch(r: &EpochReport) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "Epoch {} (deployed: {})", r.epoch, r.deployed);
    let _ = writeln!(out, "{:<10} | {:>7} | {:>7} | {:>6}", "Users", "Mean", "CV", "Trials");
    let _ = writeln!(out, "{}", "-".repeat(40));
    for t in &r.tuples {
        let (mean, cv) = mean_cv(t.stats.as_ref(), &t.scores);
        let _ = writeln!(out, "{:<10} | {:>7} | {:>7} | {:>6}", users(t.users), mean, cv, t.scores.len());
    }
    let _ = writeln!(out, "common-tuple mean: {:.4}", r.common_mean);
    for c in &r.candidates {
        let mark = if c.kind == r.selected { " *" } else { "" };
        let _ = writeln!(out, "  BE[{}] = {:.6}{mark}", c.kind, c.bellman_error);
    }
    let _ = writeln!(
        out,
        "dataset: {} new, {} total ({} train / {} validation)",
        r.dataset.new_transitions, r.dataset.total, r.dataset.train, r.dataset.validation
    );
    out
}

/// Learned policy against the baselines, one row per tuple.
pub fn render_comparison(c: &ComparisonReport) -> String {
    let mut out = String::new();
    let kinds: Vec<_> = c.rows.first().map(|r| r.policies.iter().map(|p| p.kind).collect()).unwrap_or_default();
    let _ = write!(out, "{:<10}", "Users");
    for k in &kinds {
        let _ = write!(out, " | {:>8} {:>7}", format!("{k} mean"), "CV");
    }
    out.push('\n');
    let _ = writeln!(out, "{}", "-".repeat(10 + 19 * kinds.len()));
    for row in &c.rows {
        let _ = write!(out, "{:<10}", users(row.users));
        for p in &row.policies {
            let (mean, cv) = mean_cv(p.stats.as_ref(), &p.scores);
            let _ = write!(out, " | {mean:>8} {cv:>7}");
        }
        out.push('\n');
    }
    let _ = writeln!(out, "({} greedy trials per tuple and policy)", c.trials_per_tuple);
    out
}

pub fn render_text(r: &PipelineReport) -> String {
    let mut out = format!("seed {}\n\n", r.seed);
    for e in &r.epochs {
        out.push_str(&render_epoch(e));
        out.push('\n');
    }
    if let Some(c) = &r.comparison {
        out.push_str("Comparison\n");
        out.push_str(&render_comparison(c));
    }
    out
}

pub fn render_eval(r: &EvalReport) -> String {
    let mut out = String::new();
    let _ = writeln!(
        out,
        "T = {}, ITR {}: accuracy {:.4} over {} windows ({} removed)",
        r.window,
        if r.with_itr { "on" } else { "off" },
        r.metrics.accuracy,
        r.metrics.n_windows,
        r.removed
    );
    let _ = write!(out, "{:<6}", "");
    for c in TrafficClass::ALL {
        let _ = write!(out, " {:>7}", c.name());
    }
    let _ = writeln!(out, " {:>8}", "recall");
    for c in TrafficClass::ALL {
        let _ = write!(out, "{:<6}", c.name());
        for v in r.metrics.confusion[c.index()] {
            let _ = write!(out, " {v:>7}");
        }
        let recall = r.metrics.per_class.get(c.name()).copied().flatten();
        let _ = writeln!(out, " {:>8}", recall.map_or("-".into(), |v| format!("{v:.4}")));
    }
    let _ = writeln!(out, "inference: mean {:.3} ms, max {:.3} ms per window", r.mean_infer_ms, r.max_infer_ms);
    out
}
