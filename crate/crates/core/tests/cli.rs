use std::path::Path;
use std::process::{Command, Output};

fn roadchain(args: &[&str], cwd: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_roadchain"))
        .args(args)
        .current_dir(cwd)
        .env_remove("ROADCHAIN_OUT_DIR")
        .output()
        .expect("binary runs")
}

fn short_run(extra: &[&str], dir: &Path) -> Output {
    let mut args = vec!["run", "--set", "duration_s=600", "-o", "out"];
    args.extend_from_slice(extra);
    roadchain(&args, dir)
}

#[test]
fn run_writes_artifacts() {
    let tmp = tempfile::tempdir().unwrap();
    let out = short_run(&["--dump-reputation"], tmp.path());
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let dir = tmp.path().join("out");
    for file in ["metrics.csv", "consensus.csv", "chain.jsonl", "manifest.json", "reputation.csv"] {
        assert!(dir.join(file).is_file(), "missing {file}");
    }
    let manifest: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["seed"], 1);
    assert_eq!(manifest["blocks"], 10);
    assert_eq!(manifest["config"]["duration_s"], 600);

    let metrics = std::fs::read_to_string(dir.join("metrics.csv")).unwrap();
    let header = metrics.lines().next().unwrap();
    assert!(header.starts_with("time_s,height,attempt,avg_rep_legit,avg_rep_malicious"));
    assert_eq!(metrics.lines().count(), 11);
}

#[test]
fn identical_runs_are_byte_identical() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    for dir in [a.path(), b.path()] {
        let out = short_run(&["--seed", "5", "--set", "attack.kind=random_spam", "--set", "attack.fraction=0.1"], dir);
        assert!(out.status.success());
    }
    for file in ["metrics.csv", "chain.jsonl", "consensus.csv"] {
        let x = std::fs::read(a.path().join("out").join(file)).unwrap();
        let y = std::fs::read(b.path().join("out").join(file)).unwrap();
        assert!(x == y, "{file} differs");
    }
}

#[test]
fn config_file_is_read() {
    let tmp = tempfile::tempdir().unwrap();
    std::fs::write(
        tmp.path().join("s.toml"),
        "duration_s = 300\nseed = 9\n\n[attack]\nkind = \"replay\"\nfraction = 0.1\n",
    )
    .unwrap();
    let out = roadchain(&["run", "--config", "s.toml", "-o", "out"], tmp.path());
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let manifest = std::fs::read_to_string(tmp.path().join("out/manifest.json")).unwrap();
    assert!(manifest.contains("\"replay\""));
    assert!(!serde_json::from_str::<serde_json::Value>(&manifest).unwrap()["attackers"]
        .as_array()
        .unwrap()
        .is_empty());
}

#[test]
fn bad_configuration_exits_2() {
    let tmp = tempfile::tempdir().unwrap();
    for args in [
        vec!["run", "--set", "no_such_key=1"],
        vec!["run", "--set", "threshold"],
        vec!["run", "--set", "variance_weight=2"],
        vec!["run", "--set", "attack.fraction=1.5"],
        vec!["run", "--config", "missing.toml"],
    ] {
        let out = roadchain(&args, tmp.path());
        assert_eq!(out.status.code(), Some(2), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
    }
    std::fs::write(tmp.path().join("bad.toml"), "blocksize = \"big\"\n").unwrap();
    let out = roadchain(&["run", "--config", "bad.toml"], tmp.path());
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn exhausted_election_exits_3_with_partial_output() {
    let tmp = tempfile::tempdir().unwrap();
    // the committee collapses within a few blocks; 11 empty rounds follow
    let out = roadchain(&["run", "--set", "duration_s=1200", "--set", "threshold=2048", "-o", "out"], tmp.path());
    assert_eq!(out.status.code(), Some(3), "{}", String::from_utf8_lossy(&out.stderr));
    let metrics = std::fs::read_to_string(tmp.path().join("out/metrics.csv")).unwrap();
    assert!(metrics.lines().count() >= 2);
    assert!(tmp.path().join("out/chain.jsonl").is_file());
}

#[test]
fn sweep_writes_combined_csv() {
    let tmp = tempfile::tempdir().unwrap();
    let out = roadchain(
        &["sweep", "--set", "duration_s=300", "--param", "n_prev_blocks", "--values", "1,3", "-o", "sw"],
        tmp.path(),
    );
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let csv = std::fs::read_to_string(tmp.path().join("sw/sweep.csv")).unwrap();
    assert!(csv.starts_with("param,value,time_s"));
    assert_eq!(csv.lines().filter(|l| l.starts_with("n_prev_blocks,1,")).count(), 5);
    assert_eq!(csv.lines().filter(|l| l.starts_with("n_prev_blocks,3,")).count(), 5);
    assert!(tmp.path().join("sw/n_prev_blocks=1/chain.jsonl").is_file());

    let bad = roadchain(&["sweep", "--param", "nope", "--values", "1"], tmp.path());
    assert_eq!(bad.status.code(), Some(2));
}

#[test]
fn analyze_and_plot() {
    let tmp = tempfile::tempdir().unwrap();
    let out = roadchain(
        &["analyze-consensus", "--trials", "10000", "--f", "1,2", "-o", "a", "--plot"],
        tmp.path(),
    );
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let csv = std::fs::read_to_string(tmp.path().join("a/fig4.csv")).unwrap();
    assert_eq!(csv.lines().count(), 1 + 2 * 21);
    assert!(tmp.path().join("a/fig4.csv.fig4.gp").is_file());

    let short = roadchain(&["analyze-consensus", "--trials", "100", "-o", "a"], tmp.path());
    assert_eq!(short.status.code(), Some(2));

    // a fig4 table lacks the per-block columns a fig5 plot needs
    let wrong = roadchain(&["plot", "a/fig4.csv", "--figure", "fig5"], tmp.path());
    assert_eq!(wrong.status.code(), Some(2));
}

#[test]
fn default_output_directory_honors_env() {
    let tmp = tempfile::tempdir().unwrap();
    let out = Command::new(env!("CARGO_BIN_EXE_roadchain"))
        .args(["run", "--set", "duration_s=120"])
        .current_dir(tmp.path())
        .env("ROADCHAIN_OUT_DIR", tmp.path().join("envdir"))
        .output()
        .unwrap();
    assert!(out.status.success());
    assert!(tmp.path().join("envdir/metrics.csv").is_file());
}
