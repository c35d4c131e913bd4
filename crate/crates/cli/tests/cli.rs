use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn slicelab(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_slicelab"))
        .args(["--out-dir", dir.to_str().unwrap()])
        .args(args)
        .output()
        .expect("binary runs")
}

fn ok(out: &Output) -> String {
    assert!(
        out.status.success(),
        "exit {:?}\nstdout:\n{}\nstderr:\n{}",
        out.status,
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8_lossy(&out.stdout).into_owned()
}

const SMALL: &[&str] = &[
    "--traffic.traces_per_slice",
    "1",
    "--traffic.trace_s",
    "40",
    "--traffic.chunk_s",
    "20",
    "--pipeline.periods",
    "40",
];

#[test]
fn bad_config_names_the_key() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.toml");
    fs::write(&cfg, "[score]\ngamma_delay = -1\n").unwrap();
    let out = slicelab(dir.path(), &["--config", cfg.to_str().unwrap(), "gen-traces"]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("score.gamma_delay"));

    fs::write(&cfg, "[pipeline]\nepoch = 3\n").unwrap();
    let out = slicelab(dir.path(), &["--config", cfg.to_str().unwrap(), "gen-traces"]);
    assert!(String::from_utf8_lossy(&out.stderr).contains("pipeline.epoch"));

    let out = slicelab(dir.path(), &["--config", dir.path().join("missing.toml").to_str().unwrap(), "gen-traces"]);
    assert!(!out.status.success());
}

#[test]
fn episode_train_select_chain() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let mut args = vec!["episode", "--users", "1,2,3", "--policy", "random"];
    args.extend(SMALL);
    let text = ok(&slicelab(d, &args));
    assert!(text.contains("mean reward"));
    let data = d.join("transitions.jsonl");
    assert_eq!(fs::read_to_string(&data).unwrap().lines().count(), 40);
    assert!(d.join("kpis.csv").exists());
    assert!(d.join("config.resolved.toml").exists());

    let data = data.to_str().unwrap();
    ok(&slicelab(d, &["train", "--agent", "tabular", "--data", data]));
    ok(&slicelab(d, &["train", "--agent", "deepq", "--data", data, "--agents.dqn_steps", "50", "--agents.dqn_hidden", "8"]));
    let tab = d.join("policy_tabular.bin");
    let dqn = d.join("policy_deepq.bin");
    let text = ok(&slicelab(
        d,
        &["select", "--policies", tab.to_str().unwrap(), dqn.to_str().unwrap(), "--val", data],
    ));
    assert!(text.contains("selected"));
    let sel: serde_json::Value = serde_json::from_str(&fs::read_to_string(d.join("selection.json")).unwrap()).unwrap();
    assert_eq!(sel["bellman_errors"].as_array().unwrap().len(), 2);

    let mut args = vec!["episode", "--users", "0,1,2", "--policy", tab.to_str().unwrap()];
    args.extend(SMALL);
    ok(&slicelab(d, &args));
}

#[test]
fn pipeline_and_report() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let mut args = vec![
        "--seed",
        "5",
        "pipeline",
        "--pipeline.epochs",
        "1",
        "--pipeline.trials_per_common",
        "2",
        "--pipeline.extra_tuples",
        "0",
        "--pipeline.topup_cap",
        "0",
        "--pipeline.compare_trials",
        "2",
        "--pipeline.compare_tuples",
        "[\"0,1,2\"]",
        "--agents.dqn_steps",
        "50",
        "--agents.dqn_hidden",
        "8",
    ];
    args.extend(SMALL);
    let text = ok(&slicelab(d, &args));
    assert!(text.contains("Users") && text.contains("Mean") && text.contains("CV") && text.contains("Trials"));
    let report = d.join("report.json");
    let json = ok(&slicelab(d, &["report", report.to_str().unwrap(), "--format", "json"]));
    let a: serde_json::Value = serde_json::from_str(&json).unwrap();
    let b: serde_json::Value = serde_json::from_str(&fs::read_to_string(&report).unwrap()).unwrap();
    assert_eq!(a, b);
    assert_eq!(a["seed"], 5);
    let table = ok(&slicelab(d, &["report", report.to_str().unwrap()]));
    assert_eq!(table, fs::read_to_string(d.join("report.txt")).unwrap());
}

#[test]
fn classifier_train_and_eval() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let tiny = [
        "--classifier.window",
        "4",
        "--classifier.trials_per_class",
        "3",
        "--classifier.hidden",
        "16",
        "--classifier.max_epochs",
        "2",
        "--classifier.train_stride",
        "8",
        "--traffic.chunk_s",
        "20",
    ];
    let mut args = vec!["classify-train"];
    args.extend(tiny);
    ok(&slicelab(d, &args));
    let model = d.join("classifier_t4.bin");
    let dataset = d.join("dataset");
    assert!(dataset.join("labels.csv").exists());
    let mut args = vec!["classify-eval", "--model", model.to_str().unwrap(), "--dataset", dataset.to_str().unwrap(), "--itr"];
    args.extend(tiny);
    let text = ok(&slicelab(d, &args));
    assert!(text.contains("accuracy"));
    let metrics = d.join("metrics_t4_itr.json");
    let m: serde_json::Value = serde_json::from_str(&fs::read_to_string(&metrics).unwrap()).unwrap();
    assert!(m["accuracy"].as_f64().unwrap() >= 0.0);
    assert!(fs::read_to_string(d.join("confusion_t4_itr.csv")).unwrap().starts_with("true\\pred,embb"));
    ok(&slicelab(d, &["report", metrics.to_str().unwrap()]));
}
