//! Exact planning and tabular RL: value iteration, policy evaluation, greedy
//! extraction, Q-learning, and policy optimisation on a learned reward.

mod planning;
mod policy;
mod qlearning;

pub use planning::{
    bellman_backup, enumerate_deterministic, evaluate_policy_finite, evaluate_policy_iterative,
    greedy_policy, optimal_action_sets, optimal_policy, policy_convergence_iterations,
    policy_return_iterative, q_values, sigmoid, sigmoid_normalize, truncated_values,
    value_iteration, value_iteration_detailed, TieBreak, ValueFunction, ViOutcome,
};
pub(crate) use policy::argmax_lowest;
pub use policy::{ActionSampler, Policy, Provenance};
pub use qlearning::{q_learning, QLearningConfig, QLearningOutput};

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::mdp::{policy_return, Horizon, Mdp};
use crate::reward::RewardModel;
use crate::rng::rng_from;

/// Policy optimiser for the last step of the pipeline.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "method", rename_all = "kebab-case")]
pub enum RlMethod {
    /// Value iteration on the raw learned reward.
    ExactVi {
        #[serde(default = "default_vi_tol")]
        tol: f64,
        #[serde(default = "default_vi_iters")]
        max_iters: usize,
    },
    QLearning(QLearningConfig),
}

fn default_vi_tol() -> f64 {
    1e-10
}

fn default_vi_iters() -> usize {
    100_000
}

impl Default for RlMethod {
    fn default() -> Self {
        RlMethod::QLearning(QLearningConfig::default())
    }
}

#[derive(Clone, Debug)]
pub struct OptimizeOutcome {
    pub policy: Policy,
    /// The state reward actually optimised (after any sigmoid).
    pub reward_used: Vec<f64>,
    /// `(J* − J_π) / (J* − J_uniform)` under `reward_used`, infinite horizon.
    pub optimality_gap: f64,
    /// Set when an approximate method finished below its quality gate.
    pub warning: Option<String>,
}

/// Optimises a policy for `R̂ ∘ φ`.
pub fn optimize_on_learned_reward(
    mdp: &Mdp,
    model: &RewardModel,
    method: &RlMethod,
    seed: u64,
) -> Result<OptimizeOutcome> {
    let raw = model.state_rewards(mdp.features());
    let sigmoid = matches!(method, RlMethod::QLearning(c) if c.sigmoid_normalize);
    optimize_on_reward(mdp, &raw, method, sigmoid, seed)
}

/// Optimises a policy for an explicit state reward.
pub fn optimize_on_reward(
    mdp: &Mdp,
    raw: &[f64],
    method: &RlMethod,
    apply_sigmoid: bool,
    seed: u64,
) -> Result<OptimizeOutcome> {
    let reward = if apply_sigmoid {
        sigmoid_normalize(raw)
    } else {
        raw.to_vec()
    };
    let (policy, optimum) = match method {
        RlMethod::ExactVi { tol, max_iters } => {
            let (_, p) = value_iteration(mdp, &reward, *tol, *max_iters)?;
            (p.clone(), p)
        }
        RlMethod::QLearning(cfg) => {
            let mut rng = rng_from(seed, &[0x51]);
            let out = q_learning(mdp, &reward, cfg, &mut rng);
            (out.policy, optimal_policy(mdp, &reward)?)
        }
    };
    let policy = policy.with_provenance(Provenance::Learned);
    let j_opt = policy_return(mdp, &optimum, &reward, Horizon::Infinite)?;
    let j_pi = policy_return(mdp, &policy, &reward, Horizon::Infinite)?;
    let j_uni = policy_return(
        mdp,
        &Policy::uniform(mdp.n_states(), mdp.n_actions()),
        &reward,
        Horizon::Infinite,
    )?;
    let spread = j_opt - j_uni;
    let optimality_gap = if spread.abs() < 1e-12 {
        0.0
    } else {
        ((j_opt - j_pi) / spread).max(0.0)
    };
    let warning = match method {
        RlMethod::QLearning(cfg) if optimality_gap > cfg.quality_fraction => Some(format!(
            "q-learning finished {:.3} of the optimal-uniform gap below optimum (gate {})",
            optimality_gap, cfg.quality_fraction
        )),
        _ => None,
    };
    Ok(OptimizeOutcome {
        policy,
        reward_used: reward,
        optimality_gap,
        warning,
    })
}
