use std::path::Path;

use drex::cloning::NoiseSchedule;
use drex::pipeline::{
    self, report::SUMMARY_HEADER, run_all, run_drex, run_stage, write_run, ExperimentConfig, Stage,
};
use drex::reward::ModelKind;
use drex::DrexError;

fn small_lava() -> ExperimentConfig {
    let mut cfg = ExperimentConfig::for_builtin("lava5x5").unwrap();
    cfg.noise = NoiseSchedule::new(vec![1.0, 0.75, 0.5, 0.25, 0.02], 5).unwrap();
    cfg.degradation_rollouts = 40;
    cfg.ranking.snippets.n_pairs = 2000;
    cfg.evaluation.rollouts = 30;
    cfg
}

fn read(dir: &Path, name: &str) -> Vec<u8> {
    std::fs::read(dir.join(name)).unwrap_or_else(|e| panic!("{}: {e}", dir.join(name).display()))
}

const ARTIFACTS: [&str; 11] = [
    pipeline::DEMOS_FILE,
    pipeline::BC_FILE,
    pipeline::ROLLOUTS_FILE,
    pipeline::DEGRADATION_FILE,
    pipeline::RANKED_FILE,
    pipeline::MODEL_FILE,
    pipeline::TRAINING_FILE,
    pipeline::POLICIES_FILE,
    pipeline::SUMMARY_FILE,
    pipeline::EXTRAPOLATION_FILE,
    pipeline::CORRELATION_FILE,
];

#[test]
fn stage_replay_matches_in_memory_run() {
    let cfg = small_lava();
    let mem = tempfile::tempdir().unwrap();
    let disk = tempfile::tempdir().unwrap();
    write_run(&run_drex(&cfg, 2, 1).unwrap(), mem.path()).unwrap();
    run_all(&cfg, 2, disk.path(), 3).unwrap();
    for name in ARTIFACTS {
        assert_eq!(read(mem.path(), name), read(disk.path(), name), "{name}");
    }
}

#[test]
fn mlp_ensemble_run_is_reproducible() {
    let mut cfg = small_lava();
    cfg.reward_model.kind = ModelKind::Mlp;
    cfg.reward_model.hidden = 8;
    cfg.reward_model.ensemble = 3;
    cfg.ranking.min_gap = 0.3;
    cfg.ranking.noop_trajectories = 2;
    let a = run_drex(&cfg, 1, 1).unwrap();
    let b = run_drex(&cfg, 1, 4).unwrap();
    assert_eq!(a.evaluation, b.evaluation);
    assert_eq!(a.model, b.model);
}

#[test]
fn stage_without_inputs_names_the_stage() {
    let dir = tempfile::tempdir().unwrap();
    let err = run_stage(Stage::Rank, &small_lava(), 0, dir.path(), 1).unwrap_err();
    assert!(err.to_string().contains("rank"), "{err}");
    assert!(matches!(err.root(), DrexError::Io(_)));
    assert!(err.root().to_string().contains(pipeline::ROLLOUTS_FILE));
}

#[test]
fn single_level_fails_at_rank_stage() {
    let mut cfg = small_lava();
    cfg.noise = NoiseSchedule::new(vec![0.5], 5).unwrap();
    let dir = tempfile::tempdir().unwrap();
    for s in [Stage::DemoGen, Stage::Clone, Stage::Degrade] {
        run_stage(s, &cfg, 0, dir.path(), 1).unwrap();
    }
    let err = run_stage(Stage::Rank, &cfg, 0, dir.path(), 1).unwrap_err();
    assert!(
        matches!(err.root(), DrexError::InsufficientLevels { found: 1 }),
        "{err}"
    );
}

#[test]
fn report_is_idempotent_with_fixed_headers() {
    let out = run_drex(&small_lava(), 0, 1).unwrap();
    let dir = tempfile::tempdir().unwrap();
    pipeline::emit_report(&out.evaluation, dir.path()).unwrap();
    let first: Vec<Vec<u8>> = [
        pipeline::SUMMARY_FILE,
        pipeline::EXTRAPOLATION_FILE,
        pipeline::CORRELATION_FILE,
    ]
    .iter()
    .map(|n| read(dir.path(), n))
    .collect();
    pipeline::emit_report(&out.evaluation, dir.path()).unwrap();
    let second: Vec<Vec<u8>> = [
        pipeline::SUMMARY_FILE,
        pipeline::EXTRAPOLATION_FILE,
        pipeline::CORRELATION_FILE,
    ]
    .iter()
    .map(|n| read(dir.path(), n))
    .collect();
    assert_eq!(first, second);
    let summary = String::from_utf8(first[0].clone()).unwrap();
    assert_eq!(summary.lines().next().unwrap(), SUMMARY_HEADER.join(","));
    let extrap = String::from_utf8(first[1].clone()).unwrap();
    assert_eq!(
        extrap.lines().next().unwrap(),
        "set,ground_truth_return,predicted_return,normalized_predicted_return"
    );
    let corr = String::from_utf8(first[2].clone()).unwrap();
    assert_eq!(corr.lines().next().unwrap(), "set,n,pearson,spearman");
    assert!(corr.lines().last().unwrap().starts_with("pooled,"));
}

#[test]
fn report_errors() {
    let out = run_drex(&small_lava(), 0, 1).unwrap();
    let mut empty = out.evaluation.clone();
    empty.summary.clear();
    let dir = tempfile::tempdir().unwrap();
    assert!(matches!(
        pipeline::emit_report(&empty, dir.path()),
        Err(DrexError::EmptyDataset(_))
    ));
    // a regular file where the output directory should be
    let blocker = dir.path().join("blocked");
    std::fs::write(&blocker, b"x").unwrap();
    assert!(pipeline::emit_report(&out.evaluation, &blocker).is_err());
}

#[test]
fn summary_rows_cover_every_method() {
    let out = run_drex(&small_lava(), 0, 1).unwrap();
    let ev = &out.evaluation;
    let keys: Vec<(&str, &str)> = ev
        .summary
        .iter()
        .map(|r| (r.method.as_str(), r.seed_policy.as_str()))
        .collect();
    assert_eq!(
        keys,
        [
            ("demonstrator", "na"),
            ("drex", "0"),
            ("drex", "1"),
            ("drex", "2"),
            ("drex", "best"),
            ("drex", "mean"),
            ("bc", "na"),
            ("livelong", "0"),
            ("livelong", "1"),
            ("livelong", "2"),
            ("livelong", "best"),
            ("livelong", "mean"),
            ("random", "na"),
            ("optimal", "na"),
        ]
    );
    for r in &ev.summary {
        assert!(
            r.worst_return <= r.mean_return + 1e-12 && r.mean_return <= r.best_return + 1e-12,
            "{r:?}"
        );
    }
    let demo = ev.row("demonstrator", "na").unwrap();
    assert!(!demo.beats_demo_avg);
    let optimal = ev.row("optimal", "na").unwrap();
    for r in &ev.summary {
        assert!(
            r.mean_return <= optimal.mean_return + 1e-9 || r.method == "demonstrator",
            "{r:?}"
        );
    }
}

#[test]
fn invalid_configs_are_rejected() {
    let mut cfg = small_lava();
    cfg.seeds.clear();
    assert!(run_drex(&cfg, 0, 1).is_err());
    let mut cfg = small_lava();
    cfg.training.val_fraction = 0.0;
    assert!(cfg.validate().is_err());
    let bad: Result<ExperimentConfig, _> = serde_json::from_str(r#"{"no_such_key": 1}"#);
    assert!(bad.is_err());
    assert!(ExperimentConfig::for_builtin("no-such-env").is_err());
}
