//! Command mechanics through the real binary on a tiny world: exit codes
//! with useful messages, stale-artifact refusal, sweep resume off the
//! partial ledger, and override flags.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

const TINY_CONFIG: &str = r#"
seed = 5
out_dir = "replaced-by-flag"

[synth]
n_users = 100
n_items = 60
density = 0.08
mean_degree = 5.0
co_rate = 0.5

[prepare]
k_core = 3

[simulate]
betas = [6.0]
target_d_frac = 0.15
align_sample = 4000
stage2_cells = 4000

[simulate.stage1]
dim = 4
epochs = 30

[simulate.stage2]
dim = 4
epochs = 30

[targets]
ts = [1.0]
group_sizes = [1]
n_items = 2

[train.estimator]
dim = 4
epochs = 60
learning_rate = 1.0
l2_reg = 0.0001
batch_size = 512

[train.ranking]
dim = 4
epochs = 60
learning_rate = 0.2
l2_reg = 0.00001
batch_size = 64

[steer]
k = 4
gamma_grid = [0.0]
methods = ["Oracle", "NIRec"]
"#;

fn nirec(cfg: &Path, out: &Path, cmd: &str) -> Output {
    Command::new(env!("CARGO_BIN_EXE_nirec"))
        .arg("--config")
        .arg(cfg)
        .arg("--out")
        .arg(out)
        .arg(cmd)
        .output()
        .expect("binary spawns")
}

fn write_cfg(dir: &Path, body: &str) -> PathBuf {
    let p = dir.join("run.toml");
    fs::write(&p, body).unwrap();
    p
}

fn stderr_of(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

#[test]
fn missing_config_is_an_input_error() {
    let out = Command::new(env!("CARGO_BIN_EXE_nirec"))
        .args(["--config", "/nonexistent/run.toml", "synth"])
        .output()
        .expect("binary spawns");
    assert_eq!(out.status.code(), Some(2), "stderr: {}", stderr_of(&out));
    assert!(stderr_of(&out).contains("/nonexistent/run.toml"));
}

#[test]
fn unknown_method_tag_is_an_input_error() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_cfg(dir.path(), &TINY_CONFIG.replace("\"NIRec\"", "\"Teleport\""));
    let out = nirec(&cfg, &dir.path().join("out"), "synth");
    assert_eq!(out.status.code(), Some(2), "stderr: {}", stderr_of(&out));
    assert!(stderr_of(&out).contains("Teleport"));
}

#[test]
fn missing_ratings_file_names_the_path() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_cfg(
        dir.path(),
        "seed = 5\nout_dir = \"x\"\n[io]\nratings = \"/nowhere/ratings.txt\"\ntrust = \"/nowhere/trust.txt\"\n",
    );
    let out = nirec(&cfg, &dir.path().join("out"), "prepare");
    assert_eq!(out.status.code(), Some(2), "stderr: {}", stderr_of(&out));
    assert!(stderr_of(&out).contains("/nowhere/ratings.txt"));
}

#[test]
fn stale_upstream_artifacts_are_refused() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_cfg(dir.path(), TINY_CONFIG);
    let out_dir = dir.path().join("out");
    let full = nirec(&cfg, &out_dir, "run");
    assert_eq!(full.status.code(), Some(0), "stderr: {}", stderr_of(&full));
    assert!(out_dir.join("sweep.csv").is_file());
    assert!(out_dir.join("manifest.json").is_file());

    // A simulate-section edit invalidates simulate and everything after it,
    // but leaves prepare reusable.
    write_cfg(dir.path(), &TINY_CONFIG.replace("target_d_frac = 0.15", "target_d_frac = 0.2"));
    for cmd in ["train", "steer"] {
        let refused = nirec(&cfg, &out_dir, cmd);
        assert_eq!(refused.status.code(), Some(2), "{cmd} stderr: {}", stderr_of(&refused));
        assert!(stderr_of(&refused).contains("different config or seed"));
    }
    let prepare = nirec(&cfg, &out_dir, "prepare");
    assert_eq!(prepare.status.code(), Some(0), "stderr: {}", stderr_of(&prepare));
}

#[test]
fn corrupted_artifact_checksum_is_refused() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_cfg(dir.path(), TINY_CONFIG);
    let out_dir = dir.path().join("out");
    let full = nirec(&cfg, &out_dir, "run");
    assert_eq!(full.status.code(), Some(0), "stderr: {}", stderr_of(&full));

    let ds_path = out_dir.join("dataset.json");
    let mut body = fs::read_to_string(&ds_path).unwrap();
    body.push('\n');
    fs::write(&ds_path, body).unwrap();
    let refused = nirec(&cfg, &out_dir, "simulate");
    assert_eq!(refused.status.code(), Some(2), "stderr: {}", stderr_of(&refused));
    assert!(stderr_of(&refused).contains("checksum drifted"));
}

#[test]
fn sweep_resume_consumes_the_partial_ledger() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_cfg(dir.path(), TINY_CONFIG);
    let out_dir = dir.path().join("out");
    let full = nirec(&cfg, &out_dir, "run");
    assert_eq!(full.status.code(), Some(0), "stderr: {}", stderr_of(&full));

    // Poison one finished measurement in the ledger; a re-steer must trust
    // the ledger and carry the poisoned value into sweep.csv untouched.
    let partial_path = out_dir.join("sweep_partial.jsonl");
    let body = fs::read_to_string(&partial_path).unwrap();
    let mut lines: Vec<Value> = body.lines().map(|l| serde_json::from_str(l).unwrap()).collect();
    assert!(!lines.is_empty());
    lines[0]["rows"][0]["ioip"] = Value::from(99.0);
    let rewritten: Vec<String> = lines.iter().map(|l| serde_json::to_string(l).unwrap()).collect();
    fs::write(&partial_path, rewritten.join("\n") + "\n").unwrap();
    fs::remove_file(out_dir.join("sweep.csv")).unwrap();

    let resumed = nirec(&cfg, &out_dir, "steer");
    assert_eq!(resumed.status.code(), Some(0), "stderr: {}", stderr_of(&resumed));
    let sweep = fs::read_to_string(out_dir.join("sweep.csv")).unwrap();
    let has_poison = sweep.lines().skip(1).any(|l| l.split(',').nth(6) == Some("99"));
    assert!(has_poison, "resume recomputed a finished spec:\n{sweep}");

    // A steer-section edit stales the ledger; everything is recomputed and
    // the poison disappears.
    write_cfg(dir.path(), &TINY_CONFIG.replace("gamma_grid = [0.0]", "gamma_grid = [0.0, 0.5]"));
    let fresh = nirec(&cfg, &out_dir, "steer");
    assert_eq!(fresh.status.code(), Some(0), "stderr: {}", stderr_of(&fresh));
    let sweep = fs::read_to_string(out_dir.join("sweep.csv")).unwrap();
    assert!(sweep.lines().skip(1).all(|l| l.split(',').nth(6) != Some("99")), "stale ledger line survived:\n{sweep}");
    assert!(sweep.lines().skip(1).any(|l| l.split(',').nth(5) == Some("0.5")));
}

#[test]
fn seed_override_wins_and_changes_the_corpus() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_cfg(dir.path(), TINY_CONFIG);
    let out_a = dir.path().join("a");
    let out_b = dir.path().join("b");
    let a = nirec(&cfg, &out_a, "synth");
    assert_eq!(a.status.code(), Some(0), "stderr: {}", stderr_of(&a));
    let b = Command::new(env!("CARGO_BIN_EXE_nirec"))
        .arg("--config")
        .arg(&cfg)
        .arg("--out")
        .arg(&out_b)
        .args(["--seed", "6", "synth"])
        .output()
        .expect("binary spawns");
    assert_eq!(b.status.code(), Some(0), "stderr: {}", stderr_of(&b));

    let ratings_a = fs::read(out_a.join("raw/ratings.txt")).unwrap();
    let ratings_b = fs::read(out_b.join("raw/ratings.txt")).unwrap();
    assert_ne!(ratings_a, ratings_b);

    let manifest: Value = serde_json::from_str(&fs::read_to_string(out_b.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["seed"], Value::from(6));
}

#[test]
fn worker_count_does_not_change_results() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_cfg(dir.path(), TINY_CONFIG);
    let out_a = dir.path().join("a");
    let out_b = dir.path().join("b");
    let a = nirec(&cfg, &out_a, "run");
    assert_eq!(a.status.code(), Some(0), "stderr: {}", stderr_of(&a));
    let b = Command::new(env!("CARGO_BIN_EXE_nirec"))
        .arg("--config")
        .arg(&cfg)
        .arg("--out")
        .arg(&out_b)
        .args(["--workers", "1", "run"])
        .output()
        .expect("binary spawns");
    assert_eq!(b.status.code(), Some(0), "stderr: {}", stderr_of(&b));
    assert_eq!(
        fs::read(out_a.join("sweep.csv")).unwrap(),
        fs::read(out_b.join("sweep.csv")).unwrap(),
        "sweep.csv must not depend on the worker count"
    );
}
