use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::cloning::{BcModel, DemonstratorMode, DemonstratorSpec, NoiseSchedule};
use crate::envs;
use crate::error::{DrexError, Result};
use crate::mdp::Mdp;
use crate::ranking::SnippetConfig;
use crate::reward::{ModelSpec, TrainConfig};
use crate::solvers::{policy_convergence_iterations, RlMethod};
use crate::theory::Ball;

/// Where the MDP comes from.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", deny_unknown_fields)]
pub enum EnvSpec {
    Builtin(String),
    Path(PathBuf),
}

impl EnvSpec {
    pub fn load(&self) -> Result<Mdp> {
        match self {
            EnvSpec::Builtin(name) => envs::builtin(name),
            EnvSpec::Path(p) => Mdp::load(p),
        }
    }
}

/// How the demonstrator is specified in a config file. A truncated-VI
/// parameter may be omitted, meaning half the iterations value iteration
/// needs before its greedy policy stops changing.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DemonstratorConfig {
    pub mode: DemonstratorMode,
    #[serde(default)]
    pub parameter: Option<f64>,
    pub n_demos: usize,
    #[serde(default = "default_retries")]
    pub max_retries: usize,
}

fn default_retries() -> usize {
    10
}

impl DemonstratorConfig {
    pub fn resolve(&self, mdp: &Mdp, seed: u64) -> Result<DemonstratorSpec> {
        let parameter = match (self.parameter, self.mode) {
            (Some(p), _) => p,
            (None, DemonstratorMode::TruncatedVi) => {
                (policy_convergence_iterations(mdp, &mdp.true_reward())? / 2) as f64
            }
            (None, mode) => {
                return Err(DrexError::Precondition(format!(
                    "demonstrator mode {mode:?} needs a parameter"
                )));
            }
        };
        let spec = DemonstratorSpec {
            mode: self.mode,
            parameter,
            n_demos: self.n_demos,
            seed,
            max_retries: self.max_retries,
        };
        spec.validate()?;
        Ok(spec)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RankingConfig {
    pub min_gap: f64,
    pub snippets: SnippetConfig,
    /// Stay-in-place trajectories appended below every noise level.
    pub noop_trajectories: usize,
}

impl Default for RankingConfig {
    fn default() -> Self {
        RankingConfig {
            min_gap: 0.0,
            snippets: SnippetConfig::default(),
            noop_trajectories: 0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalConfig {
    /// Rollouts per evaluated policy.
    pub rollouts: usize,
    /// Independently seeded policy optimisations per learned reward.
    pub policy_seeds: usize,
    /// Rollouts per level of ε-greedy optimal policies feeding the
    /// better-than-demonstrator extrapolation set.
    pub held_out_rollouts: usize,
    pub held_out_levels: Vec<f64>,
}

impl Default for EvalConfig {
    fn default() -> Self {
        EvalConfig {
            rollouts: 100,
            policy_seeds: 3,
            held_out_rollouts: 20,
            held_out_levels: vec![0.0, 0.1, 0.2],
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AmbiguityConfig {
    pub n_samples: usize,
    pub ball: Ball,
    /// Random half-spaces in the volume sweep.
    pub max_constraints: usize,
    pub hypotheses: usize,
    pub elimination_steps: usize,
    pub trials: usize,
}

impl Default for AmbiguityConfig {
    fn default() -> Self {
        AmbiguityConfig {
            n_samples: 100_000,
            ball: Ball::L2,
            max_constraints: 10,
            hypotheses: 1024,
            elimination_steps: 10,
            trials: 200,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TheoryConfig {
    pub theorem_instances: usize,
    pub prop1_deltas: Vec<f64>,
}

impl Default for TheoryConfig {
    fn default() -> Self {
        TheoryConfig {
            theorem_instances: 500,
            prop1_deltas: vec![1.0, 10.0, 100.0],
        }
    }
}

/// Full experiment description. Every field has a default, so `{}` is the
/// terrain-gridworld configuration.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub environment: EnvSpec,
    pub demonstrator: DemonstratorConfig,
    /// Steps per demonstration and per rollout; defaults to the MDP horizon.
    pub rollout_len: Option<usize>,
    pub bc: BcModel,
    pub noise: NoiseSchedule,
    /// Rollouts per level for the degradation curve.
    pub degradation_rollouts: usize,
    pub ranking: RankingConfig,
    pub reward_model: ModelSpec,
    pub training: TrainConfig,
    pub rl: RlMethod,
    pub evaluation: EvalConfig,
    pub ambiguity: AmbiguityConfig,
    pub theory: TheoryConfig,
    pub seeds: Vec<u64>,
    pub workers: usize,
    pub output_dir: PathBuf,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            environment: EnvSpec::Builtin("terrain8x8".into()),
            demonstrator: DemonstratorConfig {
                mode: DemonstratorMode::EpsilonPerturbedOptimal,
                parameter: Some(0.55),
                n_demos: 10,
                max_retries: 10,
            },
            rollout_len: None,
            bc: BcModel::default(),
            noise: NoiseSchedule::evenly_spaced(20, 20).expect("valid default schedule"),
            degradation_rollouts: 200,
            ranking: RankingConfig::default(),
            reward_model: ModelSpec::default(),
            training: TrainConfig::default(),
            rl: RlMethod::default(),
            evaluation: EvalConfig::default(),
            ambiguity: AmbiguityConfig::default(),
            theory: TheoryConfig::default(),
            seeds: vec![0],
            workers: 1,
            output_dir: PathBuf::from("out"),
        }
    }
}

impl ExperimentConfig {
    /// Defaults for a built-in environment.
    pub fn for_builtin(name: &str) -> Result<Self> {
        envs::builtin(name)?;
        Ok(ExperimentConfig {
            environment: EnvSpec::Builtin(name.into()),
            ..ExperimentConfig::default()
        })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let cfg: ExperimentConfig = serde_json::from_str(&text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.seeds.is_empty() {
            return Err(DrexError::Precondition("config lists no seeds".into()));
        }
        if self.demonstrator.n_demos == 0 {
            return Err(DrexError::Precondition("n_demos must be at least 1".into()));
        }
        if self.degradation_rollouts == 0
            || self.evaluation.rollouts == 0
            || self.evaluation.policy_seeds == 0
        {
            return Err(DrexError::Precondition(
                "rollout and seed counts must be positive".into(),
            ));
        }
        if self.rollout_len == Some(0) {
            return Err(DrexError::Precondition(
                "rollout_len must be positive".into(),
            ));
        }
        if !(0.0..1.0).contains(&self.training.val_fraction) || self.training.val_fraction == 0.0 {
            return Err(DrexError::Precondition(
                "val_fraction must lie in (0, 1)".into(),
            ));
        }
        self.reward_model.validate()
    }

    /// Rollout length for this MDP.
    pub fn rollout_len(&self, mdp: &Mdp) -> usize {
        self.rollout_len.or(mdp.horizon()).unwrap_or(100)
    }
}
