use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn run(args: &[&str], out: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_investesg"))
        .args(args)
        .env("INVESTESG_OUT", out)
        .output()
        .expect("binary runs")
}

fn tiny_config(dir: &Path) -> String {
    let path = dir.join("tiny.toml");
    fs::write(
        &path,
        "schema_version = 1\n[env]\nnum_companies = 2\nnum_investors = 1\nepisode_length = 6\n\
         [train]\nnum_envs = 2\nminibatches = 2\nepochs = 1\nhidden_size = 4\ntotal_steps = 24\neval_episodes = 2\n",
    )
    .unwrap();
    path.to_str().unwrap().to_string()
}

#[test]
fn train_writes_artifacts_under_env_out() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = tiny_config(dir.path());
    let out = dir.path().join("runs");
    let o = run(&["train", "--config", &cfg, "--seeds", "0,1", "--alphas", "1,50,70,100"], &out);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    for alpha in ["1", "50", "70", "100"] {
        let cell = out.join(format!("alpha{alpha}_ippo"));
        for seed in ["seed0", "seed1"] {
            assert!(cell.join(seed).join("metrics.csv").exists());
            assert!(cell.join(seed).join("checkpoint.bin").exists());
        }
    }
    let manifest = fs::read_to_string(out.join("run_manifest.json")).unwrap();
    assert!(manifest.contains("\"config_hash\""));
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("runs");
    let bad = dir.path().join("bad.toml");
    fs::write(&bad, "schema_version = 1\n[env]\nnum_companiez = 2\n").unwrap();
    let o = run(&["train", "--config", bad.to_str().unwrap()], &out);
    assert_eq!(o.status.code(), Some(3));

    let cfg = tiny_config(dir.path());
    let o = run(&["sweep", "--config", &cfg], &out);
    assert_eq!(o.status.code(), Some(3), "empty alpha list");

    let o = run(&["summarize"], &dir.path().join("missing"));
    assert_eq!(o.status.code(), Some(4));
}

#[test]
fn analyze_simulate_schelling_summarize() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = tiny_config(dir.path());
    let out = dir.path().join("a");
    let o = run(&["analyze", "--alphas", "0,1,70"], &out);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let text = fs::read_to_string(out.join("thresholds.csv")).unwrap();
    assert_eq!(text.lines().count(), 4);
    assert!(text.lines().nth(1).unwrap().contains("NoDilemmaLow"));

    let out = dir.path().join("s");
    let o = run(&["simulate", "--config", &cfg, "--rates", "0,0.01"], &out);
    assert!(o.status.success());
    assert!(out.join("trajectories.jsonl").exists());
    let o = run(&["schelling", "--config", &cfg, "--seeds", "0,1"], &out);
    assert!(o.status.success());
    assert!(out.join("schelling.csv").exists());

    let out = dir.path().join("w");
    let o = run(&["sweep", "--config", &cfg, "--alphas", "1", "--algorithms", "ippo,adalign", "--parallelism", "2"], &out);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert_eq!(fs::read_to_string(out.join("failures.jsonl")).unwrap(), "");
    let o = run(&["summarize"], &out);
    assert!(o.status.success());
    let agg = fs::read_to_string(out.join("aggregate.csv")).unwrap();
    assert_eq!(agg.lines().count(), 3);
}

#[test]
fn partial_sweep_exit_code() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = tiny_config(dir.path());
    let out = dir.path().join("p");
    fs::create_dir_all(&out).unwrap();
    // A file where one cell's directory should go makes only that cell fail.
    fs::write(out.join("alpha70_ippo"), "").unwrap();
    let o = run(&["sweep", "--config", &cfg, "--alphas", "1,70", "--parallelism", "1"], &out);
    assert_eq!(o.status.code(), Some(5), "{}", String::from_utf8_lossy(&o.stderr));
    let failures = fs::read_to_string(out.join("failures.jsonl")).unwrap();
    assert_eq!(failures.lines().count(), 1);
    assert!(failures.contains("\"alpha\":70.0"));
    assert!(out.join("alpha1_ippo/seed0/summary.json").exists());
}
