use std::path::Path;
use std::process::{Command, Output};

const CSVS: [&str; 5] = [
    "summary.csv",
    "degradation.csv",
    "training_curve.csv",
    "extrapolation.csv",
    "correlation.csv",
];

fn write_config(dir: &Path) -> std::path::PathBuf {
    let path = dir.join("config.in.json");
    let cfg = r#"{
        "environment": { "builtin": "lava5x5" },
        "degradation_rollouts": 40,
        "ranking": { "snippets": { "n_pairs": 2000 } },
        "evaluation": { "rollouts": 30 },
        "seeds": [4]
    }"#;
    std::fs::write(&path, cfg).unwrap();
    path
}

fn drex(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_drex"))
        .args(args)
        .output()
        .unwrap()
}

fn ok(args: &[&str]) -> Output {
    let out = drex(args);
    assert!(
        out.status.success(),
        "{args:?}: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

fn csvs(dir: &Path) -> Vec<Vec<u8>> {
    CSVS.iter()
        .map(|n| std::fs::read(dir.join("seed_4").join(n)).unwrap())
        .collect()
}

#[test]
fn run_all_is_byte_identical_across_runs_and_workers() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path());
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    let out = ok(&[
        "run-all",
        "--config",
        cfg.to_str().unwrap(),
        "--out",
        a.to_str().unwrap(),
    ]);
    ok(&[
        "run-all",
        "--config",
        cfg.to_str().unwrap(),
        "--out",
        b.to_str().unwrap(),
        "--workers",
        "4",
    ]);
    assert_eq!(csvs(&a), csvs(&b));
    let stdout = String::from_utf8(out.stdout).unwrap();
    assert!(stdout.starts_with("method,seed_policy,"));
    assert!(a.join("config.json").exists());
}

#[test]
fn stage_commands_reproduce_run_all() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path());
    let (whole, staged) = (tmp.path().join("whole"), tmp.path().join("staged"));
    ok(&[
        "run-all",
        "--config",
        cfg.to_str().unwrap(),
        "--out",
        whole.to_str().unwrap(),
    ]);
    for stage in [
        "demo-gen",
        "clone",
        "degrade",
        "rank",
        "train-reward",
        "optimize",
        "evaluate",
    ] {
        ok(&[
            stage,
            "--config",
            cfg.to_str().unwrap(),
            "--out",
            staged.to_str().unwrap(),
        ]);
    }
    assert_eq!(csvs(&whole), csvs(&staged));
}

#[test]
fn bad_inputs_exit_non_zero() {
    let tmp = tempfile::tempdir().unwrap();
    let bad = tmp.path().join("bad.json");
    std::fs::write(&bad, r#"{"seeds": []}"#).unwrap();
    let out = drex(&[
        "run-all",
        "--config",
        bad.to_str().unwrap(),
        "--out",
        tmp.path().to_str().unwrap(),
    ]);
    assert!(!out.status.success());
    assert!(!out.stderr.is_empty());
    let out = drex(&[
        "run-all",
        "--env",
        "no-such-env",
        "--out",
        tmp.path().to_str().unwrap(),
    ]);
    assert!(!out.status.success());
    let out = drex(&[
        "rank",
        "--env",
        "lava5x5",
        "--seed",
        "0",
        "--out",
        tmp.path().join("empty").to_str().unwrap(),
    ]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("rank"));
}
