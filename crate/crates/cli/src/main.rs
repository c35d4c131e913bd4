//! `slicelab` command-line front end.

use std::fs;
use std::io::BufWriter;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand, ValueEnum};
use serde_json::json;

use slicelab::agents::{dqn_train, tabular_train, ExpertPolicy, Policy, QFunction};
use slicelab::classifier::{self, CnnModel};
use slicelab::env::write_kpi_csv;
use slicelab::mdp::{read_transitions_file, write_transitions, TransitionMeta};
use slicelab::pipeline::{read_json, run_episode, train_test_improve, PipelineReport, Simulator};
use slicelab::selection::select_policy;
use slicelab::traffic::{generate_trace, write_trace_csv};
use slicelab::{report, seed, Config, Slice, Transition, UserTuple};

#[derive(Parser, Debug)]
#[command(
    name = "slicelab",
    version,
    about = "Slice traffic simulation, offline RL for PRB allocation, and KPI traffic classification",
    after_help = "Any config key can be overridden with `--section.key value` (or `--section.key=value`); \
                  overrides win over the config file, and --seed/--out-dir/--jobs win over both."
)]
struct Cli {
    /// TOML config file; defaults apply to everything it leaves out.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Root seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long, global = true)]
    out_dir: Option<PathBuf>,
    /// Worker threads for trial collection (default: every core).
    #[arg(long, global = true)]
    jobs: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Generate synthetic traffic traces as CSV.
    GenTraces {
        /// Only this slice (default: all three).
        #[arg(long)]
        slice: Option<Slice>,
        /// Traces per slice (default: traffic.traces_per_slice).
        #[arg(long)]
        count: Option<usize>,
        /// Trace length in seconds (default: traffic.trace_s).
        #[arg(long)]
        duration_s: Option<f64>,
    },
    /// Run one trial and log its transitions and KPIs.
    Episode {
        /// User tuple as `mmtc,urllc,embb`.
        #[arg(long)]
        users: UserTuple,
        /// `random`, `expert`, or a saved policy file.
        #[arg(long, default_value = "random")]
        policy: String,
        /// Exploration rate (default: agents.epsilon for learned policies, 0 otherwise).
        #[arg(long)]
        epsilon: Option<f64>,
        /// Trial index used to derive the trial seed.
        #[arg(long, default_value_t = 0)]
        trial: u64,
    },
    /// Train a Q-function offline on logged transitions.
    Train {
        #[arg(long, value_enum)]
        agent: Agent,
        /// JSON-lines transition files.
        #[arg(long, required = true, num_args = 1..)]
        data: Vec<PathBuf>,
    },
    /// Pick the policy with the smallest Bellman error on validation data.
    Select {
        #[arg(long, required = true, num_args = 1..)]
        policies: Vec<PathBuf>,
        #[arg(long, required = true, num_args = 1..)]
        val: Vec<PathBuf>,
    },
    /// Run the train-test-improve loop and the final comparison.
    Pipeline {
        /// Reuse completed epochs found in the output directory.
        #[arg(long)]
        resume: bool,
    },
    /// Train the traffic classifier.
    ClassifyTrain {
        /// Dataset directory with `labels.csv`; synthesized into the output
        /// directory when absent.
        #[arg(long)]
        dataset: Option<PathBuf>,
    },
    /// Evaluate a trained classifier on the test split.
    ClassifyEval {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        dataset: PathBuf,
        /// Apply Idle Traffic Removal (default: classifier.itr).
        #[arg(long)]
        itr: bool,
    },
    /// Render a saved pipeline or classifier report.
    Report {
        /// `report.json` of a pipeline run or `metrics.json` of an evaluation.
        input: PathBuf,
        #[arg(long, value_enum, default_value_t = Format::Text)]
        format: Format,
    },
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum Agent {
    Tabular,
    Deepq,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum Format {
    Text,
    Json,
}

/// Pulls `--a.b value` and `--a.b=value` pairs out of `args`.
fn split_overrides(args: Vec<String>) -> Result<(Vec<String>, Vec<(String, String)>)> {
    let mut rest = Vec::new();
    let mut overrides = Vec::new();
    let mut it = args.into_iter();
    while let Some(arg) = it.next() {
        let Some(key) = arg.strip_prefix("--").filter(|k| k.split('=').next().is_some_and(|k| k.contains('.'))) else {
            rest.push(arg);
            continue;
        };
        match key.split_once('=') {
            Some((k, v)) => overrides.push((k.to_string(), v.to_string())),
            None => {
                let v = it.next().with_context(|| format!("override --{key} needs a value"))?;
                overrides.push((key.to_string(), v));
            }
        }
    }
    Ok((rest, overrides))
}

fn load_config(cli: &Cli, mut overrides: Vec<(String, String)>) -> Result<Config> {
    if let Some(s) = cli.seed {
        overrides.push(("seed".into(), s.to_string()));
    }
    if let Some(d) = &cli.out_dir {
        overrides.push(("out_dir".into(), toml_string(&d.to_string_lossy())));
    }
    if let Some(j) = cli.jobs {
        overrides.push(("jobs".into(), j.to_string()));
    }
    let cfg = match &cli.config {
        Some(path) => Config::from_file(path, &overrides)?,
        None => Config::from_toml_str("", &overrides)?,
    };
    Ok(cfg)
}

fn toml_string(s: &str) -> String {
    serde_json::to_string(s).expect("strings serialize")
}

fn write_json(path: &Path, value: &impl serde::Serialize) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

fn read_all_transitions(paths: &[PathBuf]) -> Result<Vec<Transition>> {
    let mut out = Vec::new();
    for p in paths {
        out.extend(read_transitions_file(p).with_context(|| format!("reading {}", p.display()))?);
    }
    Ok(out)
}

fn load_policy(spec: &str, cfg: &Config) -> Result<Policy> {
    Ok(match spec {
        "random" => Policy::Random,
        "expert" => Policy::Expert(ExpertPolicy::new(cfg.expert.clone())?),
        path => Policy::load(Path::new(path)).with_context(|| format!("loading policy {path}"))?,
    })
}

fn gen_traces(cfg: &Config, slice: Option<Slice>, count: Option<usize>, duration_s: Option<f64>) -> Result<()> {
    let dir = cfg.out_dir.join("traces");
    fs::create_dir_all(&dir)?;
    let count = count.unwrap_or(cfg.traffic.traces_per_slice);
    let duration = duration_s.unwrap_or(cfg.traffic.trace_s);
    for profile in cfg.traffic.profiles() {
        if slice.is_some_and(|s| s != profile.slice) {
            continue;
        }
        for k in 0..count {
            let s = seed::derive(cfg.seed, &[seed::stage::LIBRARY, profile.slice.index() as u64, k as u64]);
            let trace = generate_trace(&profile, duration, s)?;
            let path = dir.join(format!("{}_{k}.csv", profile.slice));
            write_trace_csv(&trace, BufWriter::new(fs::File::create(&path)?))?;
            println!(
                "{}: {} events, {:.2} MB, {:.0} s",
                path.display(),
                trace.events.len(),
                trace.total_bytes() as f64 / 1e6,
                duration
            );
        }
    }
    Ok(())
}

fn episode(cfg: &Config, users: UserTuple, policy: &str, epsilon: Option<f64>, trial: u64) -> Result<()> {
    let policy = load_policy(policy, cfg)?;
    let eps = epsilon.unwrap_or(if policy.q_function().is_some() { cfg.agents.epsilon } else { 0.0 });
    let sim = Simulator::from_config(cfg)?;
    let s = seed::derive(cfg.seed, &[seed::stage::COLLECT, 0, trial]);
    let ep = run_episode(&sim, &policy, users, eps, s, TransitionMeta::default(), true)?;
    let dir = &cfg.out_dir;
    fs::create_dir_all(dir)?;
    write_transitions(&ep.transitions, BufWriter::new(fs::File::create(dir.join("transitions.jsonl"))?))?;
    write_kpi_csv(&ep.kpis, BufWriter::new(fs::File::create(dir.join("kpis.csv"))?))?;
    write_json(
        &dir.join("episode.json"),
        &json!({ "users": users, "policy": policy.kind(), "epsilon": eps, "seed": s, "mean_reward": ep.mean_reward }),
    )?;
    println!(
        "users {users}, policy {}, ε = {eps}: mean reward {:.4} over {} periods",
        policy.kind(),
        ep.mean_reward,
        ep.transitions.len()
    );
    println!("wrote {}", dir.display());
    Ok(())
}

fn train(cfg: &Config, agent: Agent, data: &[PathBuf]) -> Result<()> {
    let data = read_all_transitions(data)?;
    let s = seed::derive(cfg.seed, &[seed::stage::TABULAR]);
    let policy = match agent {
        Agent::Tabular => Policy::Tabular(tabular_train(&data, &cfg.agents, s)?),
        Agent::Deepq => Policy::DeepQ(dqn_train(&data, &cfg.agents, seed::derive(cfg.seed, &[seed::stage::DQN]))?),
    };
    fs::create_dir_all(&cfg.out_dir)?;
    let path = cfg.out_dir.join(format!("policy_{}.bin", policy.kind()));
    policy.save(&path)?;
    let info = match &policy {
        Policy::Tabular(t) => t.info.clone(),
        Policy::DeepQ(n) => n.info.clone(),
        _ => unreachable!("only learned kinds are trained"),
    };
    write_json(&cfg.out_dir.join(format!("train_{}.json", policy.kind())), &info)?;
    println!(
        "{}: {} transitions, {} iterations, final metric {:.3e}, converged {}",
        policy.kind(),
        info.n_transitions,
        info.iterations,
        info.final_metric,
        info.converged
    );
    println!("wrote {}", path.display());
    Ok(())
}

fn select(cfg: &Config, policies: &[PathBuf], val: &[PathBuf]) -> Result<()> {
    let val = read_all_transitions(val)?;
    let loaded = policies
        .iter()
        .map(|p| Policy::load(p).with_context(|| format!("loading {}", p.display())))
        .collect::<Result<Vec<_>>>()?;
    let mut qs: Vec<&dyn QFunction> = Vec::new();
    for (p, path) in loaded.iter().zip(policies) {
        match p.q_function() {
            Some(q) => qs.push(q),
            None => bail!("{} holds a {} policy without Q-values", path.display(), p.kind()),
        }
    }
    let sel = select_policy(&qs, &val, cfg.agents.discount)?;
    for (i, (path, be)) in policies.iter().zip(&sel.bellman_errors).enumerate() {
        let mark = if i == sel.selected { "  <- selected" } else { "" };
        println!("{:<40} BE {be:.6}{mark}", path.display());
    }
    fs::create_dir_all(&cfg.out_dir)?;
    write_json(
        &cfg.out_dir.join("selection.json"),
        &json!({
            "policies": policies,
            "bellman_errors": sel.bellman_errors,
            "selected": policies[sel.selected],
            "validation_transitions": val.len(),
        }),
    )?;
    Ok(())
}

fn pipeline(cfg: &Config, resume: bool) -> Result<()> {
    let run = train_test_improve(cfg, Some(&cfg.out_dir), resume)?;
    print!("{}", report::render_text(&run.report));
    println!("wrote {}", cfg.out_dir.display());
    Ok(())
}

fn classify_train(cfg: &Config, dataset: Option<&Path>) -> Result<()> {
    let data = match dataset {
        Some(dir) => classifier::read_dataset(dir)?,
        None => {
            let data = classifier::synthesize_dataset(cfg)?;
            let dir = cfg.out_dir.join("dataset");
            classifier::write_dataset(&dir, &data)?;
            println!("synthesized {} trials into {}", data.len(), dir.display());
            data
        }
    };
    let cc = &cfg.classifier;
    let s = seed::derive(cfg.seed, &[seed::stage::CLASSIFIER_TRAIN, cc.window as u64]);
    let model = classifier::train_classifier(&data, cc, s)?;
    fs::create_dir_all(&cfg.out_dir)?;
    let path = cfg.out_dir.join(format!("classifier_t{}.bin", cc.window));
    model.save(&path)?;
    write_json(&cfg.out_dir.join(format!("classifier_t{}_train.json", cc.window)), &model.info)?;
    let last = model.info.history.last();
    println!(
        "T = {}: {} epochs (best {}), {} train / {} validation windows, best validation loss {:.4}, final lr {:.0e}",
        cc.window,
        model.info.epochs,
        model.info.best_epoch,
        model.info.train_windows,
        model.info.val_windows,
        model.info.best_val_loss,
        last.map_or(cc.lr, |l| l.lr)
    );
    println!("wrote {}", path.display());
    Ok(())
}

fn classify_eval(cfg: &Config, model: &Path, dataset: &Path, itr: bool) -> Result<()> {
    let model = CnnModel::load(model)?;
    let data = classifier::read_dataset(dataset)?;
    let with_itr = itr || cfg.classifier.itr;
    let r = classifier::evaluate_traces(&model, &data, cfg.classifier.eval_stride, with_itr, cfg.classifier.itr_threshold)?;
    fs::create_dir_all(&cfg.out_dir)?;
    let tag = format!("t{}{}", r.window, if with_itr { "_itr" } else { "" });
    write_json(&cfg.out_dir.join(format!("metrics_{tag}.json")), &r)?;
    classifier::write_confusion_csv(&r.metrics, fs::File::create(cfg.out_dir.join(format!("confusion_{tag}.csv")))?)?;
    print!("{}", report::render_eval(&r));
    println!("wrote {}", cfg.out_dir.display());
    Ok(())
}

fn render_report(input: &Path, format: Format) -> Result<()> {
    let value: serde_json::Value = read_json(input)?;
    match format {
        Format::Json => println!("{}", serde_json::to_string_pretty(&value)?),
        Format::Text => {
            if value.get("epochs").is_some() {
                let r: PipelineReport = serde_json::from_value(value)?;
                print!("{}", report::render_text(&r));
            } else {
                let r: classifier::EvalReport = serde_json::from_value(value)?;
                print!("{}", report::render_eval(&r));
            }
        }
    }
    Ok(())
}

fn run(cli: Cli, overrides: Vec<(String, String)>) -> Result<()> {
    if let Command::Report { input, format } = &cli.command {
        return render_report(input, *format);
    }
    let cfg = load_config(&cli, overrides)?;
    if cfg.jobs > 0 {
        rayon::ThreadPoolBuilder::new().num_threads(cfg.jobs).build_global()?;
    }
    if !matches!(cli.command, Command::Pipeline { .. }) {
        // The pipeline writes its own echo after checking it against a resumed run.
        cfg.write_resolved(&cfg.out_dir)?;
    }
    match &cli.command {
        Command::GenTraces { slice, count, duration_s } => gen_traces(&cfg, *slice, *count, *duration_s),
        Command::Episode { users, policy, epsilon, trial } => episode(&cfg, *users, policy, *epsilon, *trial),
        Command::Train { agent, data } => train(&cfg, *agent, data),
        Command::Select { policies, val } => select(&cfg, policies, val),
        Command::Pipeline { resume } => pipeline(&cfg, *resume),
        Command::ClassifyTrain { dataset } => classify_train(&cfg, dataset.as_deref()),
        Command::ClassifyEval { model, dataset, itr } => classify_eval(&cfg, model, dataset, *itr),
        Command::Report { .. } => unreachable!("handled above"),
    }
}

fn main() -> ExitCode {
    let (args, overrides) = match split_overrides(std::env::args().collect()) {
        Ok(v) => v,
        Err(e) => {
            eprintln!("error: {e:#}");
            return ExitCode::from(2);
        }
    };
    let cli = Cli::parse_from(args);
    match run(cli, overrides) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
