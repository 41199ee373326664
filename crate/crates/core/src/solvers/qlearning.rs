use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::mdp::Mdp;
use crate::rng::{sample_index, Rng};
use crate::solvers::{policy::argmax_lowest, Policy, Provenance};

/// Tabular Q-learning hyperparameters. Defaults are the versioned
/// configuration used by the experiment runner.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct QLearningConfig {
    pub episodes: usize,
    /// Steps per episode; defaults to the MDP horizon (or 100).
    pub episode_len: Option<usize>,
    /// Step size `α = α₀ / (1 + n(s,a))^ω`.
    pub alpha0: f64,
    pub alpha_power: f64,
    /// Linearly decayed ε-exploration.
    pub explore_start: f64,
    pub explore_end: f64,
    /// Start each training episode in a uniformly random state.
    pub exploring_starts: bool,
    /// Start every `Q(s,a)` at `max_s R(s) / (1 − γ)` instead of zero.
    pub optimistic_init: bool,
    pub sigmoid_normalize: bool,
    /// Largest acceptable `(J* − J_q) / (J* − J_uniform)` under the reward
    /// being optimised.
    pub quality_fraction: f64,
}

impl Default for QLearningConfig {
    fn default() -> Self {
        QLearningConfig {
            episodes: 4000,
            episode_len: None,
            alpha0: 1.0,
            alpha_power: 0.6,
            explore_start: 1.0,
            explore_end: 0.05,
            exploring_starts: true,
            optimistic_init: true,
            sigmoid_normalize: true,
            quality_fraction: 0.05,
        }
    }
}

pub struct QLearningOutput {
    pub q: Vec<Vec<f64>>,
    pub policy: Policy,
}

/// Off-policy TD control on a state reward; the returned policy is greedy in
/// `Q` with lowest-index ties.
pub fn q_learning(
    mdp: &Mdp,
    reward: &[f64],
    cfg: &QLearningConfig,
    rng: &mut Rng,
) -> QLearningOutput {
    let (ns, na) = (mdp.n_states(), mdp.n_actions());
    let g = mdp.discount();
    let len = cfg.episode_len.or(mdp.horizon()).unwrap_or(100);
    let q0 = if cfg.optimistic_init {
        reward.iter().copied().fold(f64::NEG_INFINITY, f64::max) / (1.0 - g)
    } else {
        0.0
    };
    let mut q = vec![vec![q0; na]; ns];
    let mut visits = vec![vec![0u32; na]; ns];
    for ep in 0..cfg.episodes {
        let frac = if cfg.episodes > 1 {
            ep as f64 / (cfg.episodes - 1) as f64
        } else {
            1.0
        };
        let explore = cfg.explore_start + (cfg.explore_end - cfg.explore_start) * frac;
        let mut s = if cfg.exploring_starts {
            rng.random_range(0..ns)
        } else {
            sample_index(mdp.initial_distribution(), rng.random())
        };
        for _ in 0..len {
            let a = if rng.random::<f64>() < explore {
                rng.random_range(0..na)
            } else {
                argmax_lowest(&q[s])
            };
            let next = sample_index(mdp.transition(s, a), rng.random());
            let target = reward[s] + g * q[next].iter().copied().fold(f64::NEG_INFINITY, f64::max);
            visits[s][a] += 1;
            let alpha = cfg.alpha0 / (visits[s][a] as f64).powf(cfg.alpha_power);
            q[s][a] += alpha * (target - q[s][a]);
            s = next;
        }
    }
    let actions: Vec<usize> = q.iter().map(|row| argmax_lowest(row)).collect();
    let policy =
        Policy::deterministic(&actions, na, Provenance::Learned).expect("actions in range");
    QLearningOutput { q, policy }
}
