//! The ε-noise degradation model: the chance of a suboptimal action under an
//! ε-greedy clone and the resulting quadratic return-gap bound.

use serde::{Deserialize, Serialize};

use crate::cloning::EpsilonGreedy;
use crate::error::{DrexError, Result};
use crate::mdp::Mdp;
use crate::solvers::Policy;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DegradationModel {
    /// Probability the clone's own action is optimal.
    pub beta: f64,
    pub horizon: usize,
    pub n_actions: usize,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DegradationBound {
    /// `(1−β)(1−ε) + ε(|A|−1)/|A|`.
    pub p_exact: f64,
    /// `1 − β(1−ε)`.
    pub p_large_actions: f64,
    /// `T² (1 − β(1−ε))`.
    pub gap_bound: f64,
}

impl DegradationModel {
    pub fn new(beta: f64, horizon: usize, n_actions: usize) -> Result<Self> {
        if !(0.0..=1.0).contains(&beta) {
            return Err(DrexError::Domain(format!("beta = {beta} outside [0,1]")));
        }
        if n_actions == 0 {
            return Err(DrexError::Domain("need at least one action".into()));
        }
        Ok(DegradationModel {
            beta,
            horizon,
            n_actions,
        })
    }

    /// Suboptimal-action probability built from its two cases: the clone's
    /// action is optimal (noise can only pick a different action) or it is
    /// not (only noise landing on the optimal action helps).
    pub fn p_mixture(&self, eps: f64) -> f64 {
        let na = self.n_actions as f64;
        let p_when_optimal = eps * (na - 1.0) / na;
        let p_when_suboptimal = 1.0 - eps / na;
        self.beta * p_when_optimal + (1.0 - self.beta) * p_when_suboptimal
    }

    pub fn bound(&self, eps: f64) -> Result<DegradationBound> {
        if !(0.0..=1.0).contains(&eps) {
            return Err(DrexError::Domain(format!("epsilon {eps} outside [0,1]")));
        }
        let p_large = 1.0 - self.beta * (1.0 - eps);
        let t = self.horizon as f64;
        Ok(DegradationBound {
            p_exact: self.p_mixture(eps),
            p_large_actions: p_large,
            gap_bound: t * t * p_large,
        })
    }
}

/// Closed form of the exact suboptimal-action probability.
pub fn p_epsilon_closed_form(beta: f64, eps: f64, n_actions: usize) -> f64 {
    let na = n_actions as f64;
    (1.0 - beta) * (1.0 - eps) + eps * (na - 1.0) / na
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GapCheckRow {
    pub epsilon: f64,
    /// Horizon-averaged probability the ε-clone's greedy action is optimal
    /// for the remaining horizon, under its own state visitation.
    pub beta_hat: f64,
    /// `J*_T − J_T(π_ε)` with rewards rescaled to `[0,1]`, undiscounted.
    pub gap: f64,
    pub bound: f64,
    pub within: bool,
}

/// Exact clone-versus-optimal gaps against the `T²(1 − β(1−ε))` bound.
///
/// Rewards are affinely rescaled to `[0,1]` and returns are undiscounted
/// `T`-step sums, the setting in which the bound holds. `β` is measured per
/// noise level against time-dependent optimal action sets.
pub fn clone_gap_check(
    mdp: &Mdp,
    clone: &Policy,
    levels: &[f64],
    horizon: usize,
) -> Result<Vec<GapCheckRow>> {
    mdp.check_policy(clone)?;
    if horizon == 0 {
        return Err(DrexError::Domain("horizon must be positive".into()));
    }
    let (ns, na) = (mdp.n_states(), mdp.n_actions());
    let raw = mdp.true_reward();
    let lo = raw.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = raw.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let r: Vec<f64> = if hi > lo {
        raw.iter().map(|x| (x - lo) / (hi - lo)).collect()
    } else {
        vec![0.0; ns]
    };

    // backward induction: v[t] is the optimal value with horizon − t steps left
    let mut v = vec![vec![0.0; ns]; horizon + 1];
    let mut opt_sets = vec![Vec::new(); horizon];
    for t in (0..horizon).rev() {
        let mut sets = Vec::with_capacity(ns);
        for s in 0..ns {
            let look: Vec<f64> = (0..na)
                .map(|a| mdp.expected_next(s, a, &v[t + 1]))
                .collect();
            let best = look.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let tol = 1e-10 * (1.0 + best.abs());
            sets.push(
                (0..na)
                    .filter(|&a| look[a] >= best - tol)
                    .collect::<Vec<_>>(),
            );
            v[t][s] = r[s] + best;
        }
        opt_sets[t] = sets;
    }
    let j_star: f64 = mdp
        .initial_distribution()
        .iter()
        .zip(&v[0])
        .map(|(p, x)| p * x)
        .sum();

    levels
        .iter()
        .map(|&eps| {
            let sampler = EpsilonGreedy::new(clone, eps)?;
            let greedy = clone.greedy_actions();
            let pi = sampler.to_policy();
            let p = mdp.policy_transition_matrix(&pi);
            let mut dist = mdp.initial_distribution().to_vec();
            let (mut j, mut agree) = (0.0, 0.0);
            for t in 0..horizon {
                for s in 0..ns {
                    j += dist[s] * r[s];
                    if opt_sets[t][s].contains(&greedy[s]) {
                        agree += dist[s];
                    }
                }
                let mut next = vec![0.0; ns];
                for (s, &d) in dist.iter().enumerate() {
                    if d != 0.0 {
                        for (n, &q) in next.iter_mut().zip(&p[s]) {
                            *n += d * q;
                        }
                    }
                }
                dist = next;
            }
            let beta_hat = (agree / horizon as f64).clamp(0.0, 1.0);
            let bound = DegradationModel::new(beta_hat, horizon, na)?
                .bound(eps)?
                .gap_bound;
            let gap = j_star - j;
            Ok(GapCheckRow {
                epsilon: eps,
                beta_hat,
                gap,
                bound,
                within: gap <= bound + 1e-9 * (1.0 + bound),
            })
        })
        .collect()
}
