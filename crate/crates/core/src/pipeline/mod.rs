//! Configuration-driven experiment runner.
//!
//! `run_drex` executes every stage in memory. `run_stage` executes one stage
//! against a run directory, reading the previous stage's JSON artifact and
//! writing its own, so a run can be resumed or audited stage by stage.
//!
//! Artifacts in `<out>/seed_<n>/`:
//!
//! | stage | reads | writes |
//! |---|---|---|
//! | `demo-gen` | | `demos.json` |
//! | `clone` | `demos.json` | `bc_policy.json` |
//! | `degrade` | `bc_policy.json` | `rollouts.json`, `degradation.csv` |
//! | `rank` | `rollouts.json` | `ranked.json` |
//! | `train-reward` | `ranked.json` | `reward_model.json`, `training_curve.csv` |
//! | `optimize` | `reward_model.json` | `policies.json` |
//! | `evaluate` | all of the above | `summary.csv`, `extrapolation.csv`, `correlation.csv` |

mod config;
pub mod report;
pub mod stages;

use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

pub use config::{
    AmbiguityConfig, DemonstratorConfig, EnvSpec, EvalConfig, ExperimentConfig, RankingConfig,
    TheoryConfig,
};
pub use stages::{DegradeOutput, DemoSet, Evaluation, PolicySet, RankOutput, SummaryRow};

use crate::cloning::{estimate_beta, ClonedPolicy};
use crate::envs;
use crate::error::{DrexError, Result, StageExt};
use crate::mdp::Mdp;
use crate::reward::{RewardModel, TrainReport};
use crate::rng::{derive_seed, rng_from};
use crate::solvers::{optimal_policy, Policy};
use crate::theory::{self, Ball, HalfspaceConstraint};

pub const DEMOS_FILE: &str = "demos.json";
pub const BC_FILE: &str = "bc_policy.json";
pub const ROLLOUTS_FILE: &str = "rollouts.json";
pub const RANKED_FILE: &str = "ranked.json";
pub const MODEL_FILE: &str = "reward_model.json";
pub const POLICIES_FILE: &str = "policies.json";
pub const SUMMARY_FILE: &str = "summary.csv";
pub const DEGRADATION_FILE: &str = "degradation.csv";
pub const TRAINING_FILE: &str = "training_curve.csv";
pub const EXTRAPOLATION_FILE: &str = "extrapolation.csv";
pub const CORRELATION_FILE: &str = "correlation.csv";
pub const AMBIGUITY_FILE: &str = "ambiguity.csv";
pub const RECURRENCE_FILE: &str = "recurrence.csv";
pub const PROP2_FILE: &str = "prop2.json";
pub const THEORY_FILE: &str = "theory.json";
pub const GAP_FILE: &str = "degradation_bound.csv";

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Stage {
    DemoGen,
    Clone,
    Degrade,
    Rank,
    TrainReward,
    Optimize,
    Evaluate,
}

impl Stage {
    pub const ALL: [Stage; 7] = [
        Stage::DemoGen,
        Stage::Clone,
        Stage::Degrade,
        Stage::Rank,
        Stage::TrainReward,
        Stage::Optimize,
        Stage::Evaluate,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Stage::DemoGen => "demo-gen",
            Stage::Clone => "clone",
            Stage::Degrade => "degrade",
            Stage::Rank => "rank",
            Stage::TrainReward => "train-reward",
            Stage::Optimize => "optimize",
            Stage::Evaluate => "evaluate",
        }
    }
}

/// `<base>/seed_<seed>`.
pub fn seed_dir(base: &Path, seed: u64) -> PathBuf {
    base.join(format!("seed_{seed}"))
}

pub fn save_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let text = serde_json::to_string(value)?;
    std::fs::write(path, text)?;
    Ok(())
}

pub fn load_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path).map_err(|e| {
        DrexError::Io(std::io::Error::new(
            e.kind(),
            format!("{}: {e}", path.display()),
        ))
    })?;
    Ok(serde_json::from_str(&text)?)
}

/// Everything one seeded run produces.
#[derive(Clone, Debug)]
pub struct RunOutput {
    pub seed: u64,
    pub demos: DemoSet,
    pub clone: ClonedPolicy,
    pub degrade: DegradeOutput,
    pub ranked: RankOutput,
    pub model: RewardModel,
    pub train_report: TrainReport,
    pub policies: PolicySet,
    pub evaluation: Evaluation,
}

/// Runs every stage in memory.
pub fn run_drex(cfg: &ExperimentConfig, seed: u64, workers: usize) -> Result<RunOutput> {
    cfg.validate()?;
    let mdp = cfg.environment.load().stage("environment")?;
    let demos = stages::stage_demos(&mdp, cfg, seed)?;
    let clone = stages::stage_clone(&mdp, cfg, &demos)?;
    let degrade = stages::stage_degrade(&mdp, cfg, &clone.policy, seed, workers)?;
    let ranked = stages::stage_rank(&mdp, cfg, &degrade.rollouts, seed)?;
    let (model, train_report) = stages::stage_train(&mdp, cfg, &ranked, seed, workers)?;
    let policies = stages::stage_optimize(&mdp, cfg, &model, seed)?;
    let evaluation = stages::stage_evaluate(
        &mdp,
        cfg,
        &demos,
        &clone.policy,
        &policies,
        &degrade.rollouts,
        &model,
        seed,
        workers,
    )?;
    Ok(RunOutput {
        seed,
        demos,
        clone,
        degrade,
        ranked,
        model,
        train_report,
        policies,
        evaluation,
    })
}

/// Writes every artifact of `out` into `dir`.
pub fn write_run(out: &RunOutput, dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    save_json(&dir.join(DEMOS_FILE), &out.demos)?;
    save_json(&dir.join(BC_FILE), &out.clone.policy)?;
    save_json(&dir.join(ROLLOUTS_FILE), &out.degrade.rollouts)?;
    report::write_degradation(&dir.join(DEGRADATION_FILE), &out.degrade.curve)?;
    save_json(&dir.join(RANKED_FILE), &out.ranked)?;
    save_json(&dir.join(MODEL_FILE), &out.model)?;
    report::write_training_curve(&dir.join(TRAINING_FILE), &out.train_report)?;
    save_json(&dir.join(POLICIES_FILE), &out.policies)?;
    emit_report(&out.evaluation, dir)
}

/// Writes `summary.csv`, `extrapolation.csv` and `correlation.csv`.
pub fn emit_report(eval: &Evaluation, dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    report::write_summary(&dir.join(SUMMARY_FILE), &eval.summary)?;
    report::write_extrapolation(&dir.join(EXTRAPOLATION_FILE), &eval.extrapolation)?;
    report::write_correlation(&dir.join(CORRELATION_FILE), &eval.extrapolation)
}

/// Runs one stage against `dir`, reading its inputs from earlier artifacts.
pub fn run_stage(
    stage: Stage,
    cfg: &ExperimentConfig,
    seed: u64,
    dir: &Path,
    workers: usize,
) -> Result<()> {
    cfg.validate()?;
    std::fs::create_dir_all(dir)?;
    let mdp = cfg.environment.load().stage("environment")?;
    let load = |name: &str| dir.join(name);
    match stage {
        Stage::DemoGen => save_json(&load(DEMOS_FILE), &stages::stage_demos(&mdp, cfg, seed)?),
        Stage::Clone => {
            let demos: DemoSet = load_json(&load(DEMOS_FILE)).stage("clone")?;
            save_json(
                &load(BC_FILE),
                &stages::stage_clone(&mdp, cfg, &demos)?.policy,
            )
        }
        Stage::Degrade => {
            let bc: Policy = load_json(&load(BC_FILE)).stage("degrade")?;
            let out = stages::stage_degrade(&mdp, cfg, &bc, seed, workers)?;
            save_json(&load(ROLLOUTS_FILE), &out.rollouts)?;
            report::write_degradation(&load(DEGRADATION_FILE), &out.curve)
        }
        Stage::Rank => {
            let rollouts: Vec<_> = load_json(&load(ROLLOUTS_FILE)).stage("rank")?;
            save_json(
                &load(RANKED_FILE),
                &stages::stage_rank(&mdp, cfg, &rollouts, seed)?,
            )
        }
        Stage::TrainReward => {
            let ranked: RankOutput = load_json(&load(RANKED_FILE)).stage("train-reward")?;
            let (model, rep) = stages::stage_train(&mdp, cfg, &ranked, seed, workers)?;
            save_json(&load(MODEL_FILE), &model)?;
            report::write_training_curve(&load(TRAINING_FILE), &rep)
        }
        Stage::Optimize => {
            let model: RewardModel = load_json(&load(MODEL_FILE)).stage("optimize")?;
            save_json(
                &load(POLICIES_FILE),
                &stages::stage_optimize(&mdp, cfg, &model, seed)?,
            )
        }
        Stage::Evaluate => {
            let read = || -> Result<_> {
                let demos: DemoSet = load_json(&load(DEMOS_FILE))?;
                let bc: Policy = load_json(&load(BC_FILE))?;
                let rollouts: Vec<_> = load_json(&load(ROLLOUTS_FILE))?;
                let model: RewardModel = load_json(&load(MODEL_FILE))?;
                let policies: PolicySet = load_json(&load(POLICIES_FILE))?;
                Ok((demos, bc, rollouts, model, policies))
            };
            let (demos, bc, rollouts, model, policies) = read().stage("evaluate")?;
            let eval = stages::stage_evaluate(
                &mdp, cfg, &demos, &bc, &policies, &rollouts, &model, seed, workers,
            )?;
            emit_report(&eval, dir)
        }
    }
}

/// Every stage in order through the run directory.
pub fn run_all(cfg: &ExperimentConfig, seed: u64, dir: &Path, workers: usize) -> Result<()> {
    for stage in Stage::ALL {
        run_stage(stage, cfg, seed, dir, workers)?;
    }
    Ok(())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Prop2Case {
    pub mdp: String,
    pub report: theory::Prop2Report,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AmbiguityOutput {
    pub sweep: Vec<theory::SweepRow>,
    pub recurrence: Vec<theory::RecurrenceRow>,
    pub prop2: Vec<Prop2Case>,
}

/// Worst-to-best ranking of four deterministic policies ending in the
/// optimum: the optimum, the worst policy, and two evenly spaced between.
fn four_policy_ranking(mdp: &Mdp) -> Result<Vec<Policy>> {
    let r = mdp.true_reward();
    let h = crate::mdp::Horizon::Infinite;
    let mut scored = Vec::new();
    for acts in crate::solvers::enumerate_deterministic(mdp.n_states(), mdp.n_actions()) {
        let p = Policy::deterministic(&acts, mdp.n_actions(), crate::solvers::Provenance::Learned)?;
        scored.push((crate::mdp::policy_return(mdp, &p, &r, h)?, p));
    }
    scored.sort_by(|a, b| a.0.total_cmp(&b.0));
    let n = scored.len();
    let mut out: Vec<Policy> = [0, n / 3, 2 * n / 3]
        .iter()
        .map(|&i| scored[i].1.clone())
        .collect();
    out.push(optimal_policy(mdp, &r)?);
    Ok(out)
}

/// Volume sweep over random half-spaces, the hypothesis-elimination
/// recurrence, and paired ambiguity comparisons on two small MDPs.
pub fn run_ambiguity(cfg: &ExperimentConfig, seed: u64, workers: usize) -> Result<AmbiguityOutput> {
    let run = || -> Result<AmbiguityOutput> {
        let a = &cfg.ambiguity;
        let mdp = cfg.environment.load()?;
        let dim = mdp.feature_dim();
        let mut rng = rng_from(seed, &[0xA1]);
        let constraints = (0..a.max_constraints)
            .map(|_| {
                HalfspaceConstraint::new(theory::ambiguity::random_direction(dim, &mut rng), true)
            })
            .collect::<Result<Vec<_>>>()?;
        let problem = theory::AmbiguityProblem::new(dim, constraints, a.ball)?;
        let sweep =
            theory::volume_sweep(&problem, a.n_samples, derive_seed(seed, &[0xA2]), workers)?;
        let recurrence = theory::hypothesis_elimination_sim(
            a.hypotheses,
            dim,
            a.elimination_steps,
            derive_seed(seed, &[0xA3]),
            a.trials,
            workers,
        )?;
        let small = envs::random_mdp(&mut rng_from(seed, &[0xA4]), 3, 2, 3, 0.9);
        let p1 = envs::prop1_mdp(10.0);
        let p1_ranking = [envs::PROP1_C, envs::PROP1_B, envs::PROP1_A]
            .iter()
            .map(|&a0| {
                let mut acts = vec![0; p1.n_states()];
                acts[0] = a0;
                Policy::deterministic(&acts, p1.n_actions(), crate::solvers::Provenance::Learned)
            })
            .collect::<Result<Vec<_>>>()?;
        let prop2 = vec![
            Prop2Case {
                mdp: "random-3-state".into(),
                report: theory::prop2_compare(
                    &small,
                    &four_policy_ranking(&small)?,
                    Ball::L2,
                    a.n_samples,
                    derive_seed(seed, &[0xA5]),
                    workers,
                )?,
            },
            Prop2Case {
                mdp: "prop1".into(),
                report: theory::prop2_compare(
                    &p1,
                    &p1_ranking,
                    Ball::L2,
                    a.n_samples,
                    derive_seed(seed, &[0xA6]),
                    workers,
                )?,
            },
        ];
        Ok(AmbiguityOutput {
            sweep,
            recurrence,
            prop2,
        })
    };
    run().stage("ambiguity")
}

pub fn write_ambiguity(out: &AmbiguityOutput, dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    report::write_ambiguity(&dir.join(AMBIGUITY_FILE), &out.sweep)?;
    report::write_recurrence(&dir.join(RECURRENCE_FILE), &out.recurrence)?;
    save_json(&dir.join(PROP2_FILE), &out.prop2)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CorollaryRow {
    pub x_percent: f64,
    pub k: f64,
    pub k_ceil: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TheoryOutput {
    pub theorem1: theory::TheoremOneSuite,
    pub prop1: Vec<theory::Prop1Report>,
    pub corollary1: Vec<CorollaryRow>,
    /// Largest difference between the two routes to the exact `p_ε` over a
    /// grid of `(β, ε, |A|)`.
    pub p_epsilon_max_abs_diff: f64,
    pub worked_bound: theory::DegradationBound,
    /// Visitation-weighted optimal-action agreement of the clone.
    pub clone_beta_hat: f64,
    pub gap_check: Vec<theory::GapCheckRow>,
}

/// Largest `|mixture − closed form|` for the exact `p_ε` over a grid.
pub fn p_epsilon_grid_error() -> f64 {
    let mut worst: f64 = 0.0;
    for bi in 0..=20 {
        for ei in 0..=20 {
            for na in [1usize, 2, 3, 4, 5, 8, 18, 100, 1000] {
                let (beta, eps) = (bi as f64 / 20.0, ei as f64 / 20.0);
                let m = theory::DegradationModel::new(beta, 10, na).expect("grid values in range");
                let diff = (m.p_mixture(eps) - theory::p_epsilon_closed_form(beta, eps, na)).abs();
                worst = worst.max(diff);
            }
        }
    }
    worst
}

/// Theory checks. The clone is read from `bc_policy.json` in `dir` when
/// present and otherwise produced from fresh demonstrations.
pub fn run_theory(
    cfg: &ExperimentConfig,
    seed: u64,
    dir: Option<&Path>,
    workers: usize,
) -> Result<TheoryOutput> {
    let run = || -> Result<TheoryOutput> {
        let mdp = cfg.environment.load()?;
        let bc = match dir.map(|d| d.join(BC_FILE)).filter(|p| p.exists()) {
            Some(p) => load_json::<Policy>(&p)?,
            None => {
                let demos = stages::stage_demos(&mdp, cfg, seed)?;
                stages::stage_clone(&mdp, cfg, &demos)?.policy
            }
        };
        mdp.check_policy(&bc)?;
        let len = cfg.rollout_len(&mdp);
        let theorem1 = theory::theorem1_suite(
            cfg.theory.theorem_instances,
            derive_seed(seed, &[0x7E]),
            workers,
        )?;
        let prop1 = cfg
            .theory
            .prop1_deltas
            .iter()
            .map(|&d| theory::prop1_demo(d))
            .collect::<Result<Vec<_>>>()?;
        let corollary1 = [50.0, 75.0, 87.5, 90.0, 99.0]
            .iter()
            .map(|&x| {
                let (k, k_ceil) = theory::corollary1_k(x)?;
                Ok(CorollaryRow {
                    x_percent: x,
                    k,
                    k_ceil,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(TheoryOutput {
            theorem1,
            prop1,
            corollary1,
            p_epsilon_max_abs_diff: p_epsilon_grid_error(),
            worked_bound: theory::DegradationModel::new(0.8, 10, mdp.n_actions())?.bound(0.5)?,
            clone_beta_hat: estimate_beta(&mdp, &bc, len)?,
            gap_check: theory::clone_gap_check(&mdp, &bc, cfg.noise.levels(), len)?,
        })
    };
    run().stage("theory")
}

pub fn write_theory(out: &TheoryOutput, dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    report::write_gap_check(&dir.join(GAP_FILE), &out.gap_check)?;
    let text = serde_json::to_string_pretty(out)?;
    std::fs::write(dir.join(THEORY_FILE), text)?;
    Ok(())
}
