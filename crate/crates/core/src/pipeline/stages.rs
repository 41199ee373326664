//! The experiment stages as pure functions of their inputs and a run seed.
//! Each stage's output is serialisable, so any stage can be replayed from
//! the artifacts of the previous one.

use serde::{Deserialize, Serialize};

use crate::cloning::{
    behavioral_cloning, degradation_curve, generate_demonstrations, noisy_rollouts,
    noop_trajectories, ClonedPolicy, DegradationRow, LevelRollouts, SeedSharing,
};
use crate::error::{Result, StageExt};
use crate::mdp::{rollout, trajectory_return, Mdp, Trajectory};
use crate::pipeline::ExperimentConfig;
use crate::ranking::{
    build_ranked_dataset, sample_snippet_pairs, train_val_split, RankedDataset, SnippetPair,
    NOOP_RANK_LEVEL,
};
use crate::reward::{
    encode_pairs, extrapolation_report, train_reward, ExtrapolationReport, RewardModel, ScoreMode,
    TrainReport,
};
use crate::rng::{derive_seed, par_map, rng_from};
use crate::solvers::{optimal_policy, optimize_on_learned_reward, optimize_on_reward, Policy};
use crate::stats::mean_std;

const TAG_DEMOS: u64 = 1;
const TAG_DEGRADE: u64 = 2;
const TAG_RANK_ROLLOUTS: u64 = 3;
const TAG_SNIPPETS: u64 = 4;
const TAG_SPLIT: u64 = 5;
const TAG_TRAIN: u64 = 6;
const TAG_POLICY: u64 = 7;
const TAG_EVAL: u64 = 8;
const TAG_HELD_OUT: u64 = 9;
const TAG_NOOP: u64 = 10;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DemoSet {
    pub demonstrator_parameter: f64,
    pub trajectories: Vec<Trajectory>,
    /// True discounted return of each demonstration.
    pub returns: Vec<f64>,
}

impl DemoSet {
    pub fn mean_return(&self) -> f64 {
        mean_std(&self.returns).0
    }

    pub fn best_return(&self) -> f64 {
        self.returns
            .iter()
            .copied()
            .fold(f64::NEG_INFINITY, f64::max)
    }
}

pub fn returns_of(mdp: &Mdp, trajs: &[Trajectory]) -> Result<Vec<f64>> {
    let r = mdp.true_reward();
    trajs
        .iter()
        .map(|t| trajectory_return(t, &r, mdp.discount()))
        .collect()
}

pub fn stage_demos(mdp: &Mdp, cfg: &ExperimentConfig, seed: u64) -> Result<DemoSet> {
    let run = || -> Result<DemoSet> {
        let spec = cfg
            .demonstrator
            .resolve(mdp, derive_seed(seed, &[TAG_DEMOS]))?;
        let trajectories = generate_demonstrations(mdp, &spec, cfg.rollout_len(mdp))?;
        let returns = returns_of(mdp, &trajectories)?;
        Ok(DemoSet {
            demonstrator_parameter: spec.parameter,
            trajectories,
            returns,
        })
    };
    run().stage("demo-gen")
}

pub fn stage_clone(mdp: &Mdp, cfg: &ExperimentConfig, demos: &DemoSet) -> Result<ClonedPolicy> {
    behavioral_cloning(mdp, &demos.trajectories, &cfg.bc).stage("clone")
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DegradeOutput {
    pub curve: Vec<DegradationRow>,
    /// `K` independently seeded rollouts per level, for ranking.
    pub rollouts: Vec<LevelRollouts>,
}

pub fn stage_degrade(
    mdp: &Mdp,
    cfg: &ExperimentConfig,
    bc: &Policy,
    seed: u64,
    workers: usize,
) -> Result<DegradeOutput> {
    let run = || -> Result<DegradeOutput> {
        let len = cfg.rollout_len(mdp);
        let curve = degradation_curve(
            bc,
            mdp,
            &cfg.noise,
            cfg.degradation_rollouts,
            len,
            derive_seed(seed, &[TAG_DEGRADE]),
            workers,
        )?;
        let rollouts = noisy_rollouts(
            bc,
            mdp,
            cfg.noise.levels(),
            cfg.noise.rollouts_per_level(),
            len,
            derive_seed(seed, &[TAG_RANK_ROLLOUTS]),
            SeedSharing::Independent,
            workers,
        )?;
        Ok(DegradeOutput { curve, rollouts })
    };
    run().stage("degrade")
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RankOutput {
    pub dataset: RankedDataset,
    pub train_pairs: Vec<SnippetPair>,
    pub val_pairs: Vec<SnippetPair>,
}

pub fn stage_rank(
    mdp: &Mdp,
    cfg: &ExperimentConfig,
    rollouts: &[LevelRollouts],
    seed: u64,
) -> Result<RankOutput> {
    let run = || -> Result<RankOutput> {
        let mut groups = rollouts.to_vec();
        if cfg.ranking.noop_trajectories > 0 {
            groups.push(LevelRollouts {
                epsilon: NOOP_RANK_LEVEL,
                trajectories: noop_trajectories(
                    mdp,
                    cfg.ranking.noop_trajectories,
                    cfg.rollout_len(mdp),
                    derive_seed(seed, &[TAG_NOOP]),
                    NOOP_RANK_LEVEL,
                ),
            });
        }
        let dataset = build_ranked_dataset(&groups, cfg.ranking.min_gap)?;
        let pairs = sample_snippet_pairs(
            &dataset,
            &cfg.ranking.snippets,
            derive_seed(seed, &[TAG_SNIPPETS]),
        )?;
        let (train_pairs, val_pairs) = train_val_split(
            &pairs,
            cfg.training.val_fraction,
            derive_seed(seed, &[TAG_SPLIT]),
        );
        Ok(RankOutput {
            dataset,
            train_pairs,
            val_pairs,
        })
    };
    run().stage("rank")
}

pub fn stage_train(
    mdp: &Mdp,
    cfg: &ExperimentConfig,
    ranked: &RankOutput,
    seed: u64,
    workers: usize,
) -> Result<(RewardModel, TrainReport)> {
    let train = encode_pairs(&ranked.dataset, &ranked.train_pairs, ScoreMode::Sum);
    let val = encode_pairs(&ranked.dataset, &ranked.val_pairs, ScoreMode::Sum);
    train_reward(
        &train,
        &val,
        mdp.features(),
        &cfg.reward_model,
        &cfg.training,
        derive_seed(seed, &[TAG_TRAIN]),
        workers,
    )
    .stage("train-reward")
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PolicySet {
    /// One policy per policy seed, optimised for the learned reward.
    pub drex: Vec<Policy>,
    /// One policy per policy seed, optimised for a constant +1 reward.
    pub livelong: Vec<Policy>,
    pub warnings: Vec<String>,
}

pub fn stage_optimize(
    mdp: &Mdp,
    cfg: &ExperimentConfig,
    model: &RewardModel,
    seed: u64,
) -> Result<PolicySet> {
    let run = || -> Result<PolicySet> {
        model.validate(mdp.feature_dim())?;
        let mut set = PolicySet {
            drex: Vec::new(),
            livelong: Vec::new(),
            warnings: Vec::new(),
        };
        let ones = vec![1.0; mdp.n_states()];
        for k in 0..cfg.evaluation.policy_seeds {
            let s = derive_seed(seed, &[TAG_POLICY, k as u64]);
            let d = optimize_on_learned_reward(mdp, model, &cfg.rl, s)?;
            if let Some(w) = d.warning {
                set.warnings.push(format!("drex seed {k}: {w}"));
            }
            set.drex.push(d.policy);
            let l = optimize_on_reward(mdp, &ones, &cfg.rl, false, s)?;
            set.livelong.push(l.policy);
        }
        Ok(set)
    };
    run().stage("optimize")
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub method: String,
    pub seed_policy: String,
    pub mean_return: f64,
    pub std_return: f64,
    pub best_return: f64,
    pub worst_return: f64,
    pub beats_demo_avg: bool,
    pub beats_demo_best: bool,
}

impl SummaryRow {
    fn new(method: &str, seed_policy: &str, returns: &[f64], demos: &DemoSet) -> Self {
        let (mean, std) = mean_std(returns);
        SummaryRow {
            method: method.into(),
            seed_policy: seed_policy.into(),
            mean_return: mean,
            std_return: std,
            best_return: returns.iter().copied().fold(f64::NEG_INFINITY, f64::max),
            worst_return: returns.iter().copied().fold(f64::INFINITY, f64::min),
            beats_demo_avg: mean > demos.mean_return(),
            beats_demo_best: mean > demos.best_return(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Evaluation {
    pub summary: Vec<SummaryRow>,
    pub extrapolation: ExtrapolationReport,
}

impl Evaluation {
    pub fn row(&self, method: &str, seed_policy: &str) -> Option<&SummaryRow> {
        self.summary
            .iter()
            .find(|r| r.method == method && r.seed_policy == seed_policy)
    }
}

/// True returns of `n` rollouts; rollout `k` uses the same stream for every
/// policy evaluated in this run.
fn eval_returns(
    mdp: &Mdp,
    policy: &Policy,
    n: usize,
    len: usize,
    seed: u64,
    workers: usize,
) -> Result<Vec<f64>> {
    let r = mdp.true_reward();
    par_map(workers, n, |k| {
        let tau = rollout(mdp, policy, len, &mut rng_from(seed, &[TAG_EVAL, k as u64]));
        trajectory_return(&tau, &r, mdp.discount())
    })
    .into_iter()
    .collect()
}

/// Rows for a family of per-seed policies plus `best` (highest mean) and
/// `mean` (all rollouts pooled) aggregates.
fn seeded_rows(method: &str, per_seed: &[Vec<f64>], demos: &DemoSet) -> Vec<SummaryRow> {
    let mut rows: Vec<SummaryRow> = per_seed
        .iter()
        .enumerate()
        .map(|(k, r)| SummaryRow::new(method, &k.to_string(), r, demos))
        .collect();
    let best = rows.iter().enumerate().fold(0, |b, (i, r)| {
        if r.mean_return > rows[b].mean_return {
            i
        } else {
            b
        }
    });
    let mut best_row = rows[best].clone();
    best_row.seed_policy = "best".into();
    let pooled: Vec<f64> = per_seed.iter().flatten().copied().collect();
    rows.push(best_row);
    rows.push(SummaryRow::new(method, "mean", &pooled, demos));
    rows
}

/// Held-out trajectories better than the average demonstration, drawn from
/// ε-greedy versions of the optimal policy.
pub fn better_than_demo_set(
    mdp: &Mdp,
    cfg: &ExperimentConfig,
    demos: &DemoSet,
    seed: u64,
    workers: usize,
) -> Result<Vec<Trajectory>> {
    let opt = optimal_policy(mdp, &mdp.true_reward())?;
    let levels = &cfg.evaluation.held_out_levels;
    let groups = noisy_rollouts(
        &opt,
        mdp,
        levels,
        cfg.evaluation.held_out_rollouts,
        cfg.rollout_len(mdp),
        derive_seed(seed, &[TAG_HELD_OUT]),
        SeedSharing::Independent,
        workers,
    )?;
    let all: Vec<Trajectory> = groups.into_iter().flat_map(|g| g.trajectories).collect();
    let returns = returns_of(mdp, &all)?;
    let bar = demos.mean_return();
    Ok(all
        .into_iter()
        .zip(returns)
        .filter(|(_, r)| *r > bar)
        .map(|(t, _)| t)
        .collect())
}

#[allow(clippy::too_many_arguments)]
pub fn stage_evaluate(
    mdp: &Mdp,
    cfg: &ExperimentConfig,
    demos: &DemoSet,
    bc: &Policy,
    policies: &PolicySet,
    rollouts: &[LevelRollouts],
    model: &RewardModel,
    seed: u64,
    workers: usize,
) -> Result<Evaluation> {
    let run = || -> Result<Evaluation> {
        let n = cfg.evaluation.rollouts;
        let len = cfg.rollout_len(mdp);
        let eval = |p: &Policy| eval_returns(mdp, p, n, len, seed, workers);
        let mut summary = vec![SummaryRow::new("demonstrator", "na", &demos.returns, demos)];
        let drex = policies.drex.iter().map(eval).collect::<Result<Vec<_>>>()?;
        summary.extend(seeded_rows("drex", &drex, demos));
        summary.push(SummaryRow::new("bc", "na", &eval(bc)?, demos));
        let live = policies
            .livelong
            .iter()
            .map(eval)
            .collect::<Result<Vec<_>>>()?;
        summary.extend(seeded_rows("livelong", &live, demos));
        let uniform = Policy::uniform(mdp.n_states(), mdp.n_actions());
        summary.push(SummaryRow::new("random", "na", &eval(&uniform)?, demos));
        let opt = optimal_policy(mdp, &mdp.true_reward())?;
        summary.push(SummaryRow::new("optimal", "na", &eval(&opt)?, demos));

        let mut sets = vec![
            ("demos".to_string(), demos.trajectories.clone()),
            (
                "synthetic".to_string(),
                rollouts
                    .iter()
                    .flat_map(|g| g.trajectories.iter().cloned())
                    .collect(),
            ),
        ];
        let better = better_than_demo_set(mdp, cfg, demos, seed, workers)?;
        if !better.is_empty() {
            sets.push(("better_than_demo".to_string(), better));
        }
        let extrapolation = extrapolation_report(model, mdp, &sets)?;
        Ok(Evaluation {
            summary,
            extrapolation,
        })
    };
    run().stage("evaluate")
}
