use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn sleepnet(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_sleepnet"))
        .current_dir(dir)
        .env_remove("SLEEPNET_DATA")
        .args(args)
        .output()
        .expect("binary runs")
}

fn ok(out: &Output) {
    assert!(
        out.status.success(),
        "status {:?}\nstderr: {}",
        out.status,
        String::from_utf8_lossy(&out.stderr)
    );
}

#[test]
fn training_twice_gives_identical_networks() {
    let dir = tempfile::tempdir().unwrap();
    for out in ["a", "b"] {
        ok(&sleepnet(dir.path(), &["train", "--seed", "3", "-o", out]));
    }
    let a = fs::read(dir.path().join("a/network.bin")).unwrap();
    let b = fs::read(dir.path().join("b/network.bin")).unwrap();
    assert_eq!(a, b);
    assert!(dir.path().join("a/stats.json").exists());
    assert!(dir.path().join("a/manifest.json").exists());
}

#[test]
fn missing_dataset_exits_2_and_names_the_path() {
    let dir = tempfile::tempdir().unwrap();
    let out = sleepnet(
        dir.path(),
        &["--preset", "mnist", "--data-root", "no/such/dir", "train"],
    );
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("no/such/dir"), "stderr: {err}");
}

#[test]
fn sleep_without_stats_is_an_error() {
    let dir = tempfile::tempdir().unwrap();
    ok(&sleepnet(dir.path(), &["train", "-o", "t"]));
    fs::remove_file(dir.path().join("t/stats.json")).unwrap();
    let out = sleepnet(dir.path(), &["sleep", "--network", "t/network.bin", "-o", "s"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("stats.json"));
}

#[test]
fn zero_plasticity_sleep_leaves_network_unchanged() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(
        dir.path().join("frozen.toml"),
        "[sleep]\ninc_factor = 0.0\ndec_factor = 0.0\n",
    )
    .unwrap();
    ok(&sleepnet(dir.path(), &["train", "-o", "t"]));
    ok(&sleepnet(
        dir.path(),
        &["--config", "frozen.toml", "sleep", "--network", "t/network.bin", "-o", "t"],
    ));
    let before = fs::read(dir.path().join("t/network.bin")).unwrap();
    let after = fs::read(dir.path().join("t/network-slept.bin")).unwrap();
    assert_eq!(before, after);
}

#[test]
fn fixed_seed_experiment_is_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    for out in ["a", "b"] {
        ok(&sleepnet(
            dir.path(),
            &["--trials", "1", "--seed", "7", "-o", out, "experiment", "incremental"],
        ));
    }
    let a = fs::read_to_string(dir.path().join("a/accuracy.csv")).unwrap();
    let b = fs::read_to_string(dir.path().join("b/accuracy.csv")).unwrap();
    assert_eq!(a, b);
    assert_eq!(a.lines().count(), 4, "header, two tasks, overall:\n{a}");
}

#[test]
fn bad_config_key_type_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("bad.toml"), "n_trials = \"many\"\n").unwrap();
    let out = sleepnet(dir.path(), &["--config", "bad.toml", "train"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn eval_reports_patches_accuracy() {
    let dir = tempfile::tempdir().unwrap();
    ok(&sleepnet(dir.path(), &["train", "-o", "t"]));
    ok(&sleepnet(
        dir.path(),
        &["eval", "--network", "t/network.bin", "--patches", "t/patches.json", "-o", "e"],
    ));
    let m: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("e/metrics.json")).unwrap()).unwrap();
    let acc = m["accuracy"].as_f64().unwrap();
    assert!((0.0..=1.0).contains(&acc));
}
