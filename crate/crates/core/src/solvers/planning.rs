use crate::error::{DrexError, Result};
use crate::mdp::{Horizon, Mdp};
use crate::solvers::{Policy, Provenance};

/// `V[s]` and `Q[s][a]` for a state reward, `Q(s,a) = R(s) + γ (P_a V)(s)`.
#[derive(Clone, Debug, PartialEq)]
pub struct ValueFunction {
    pub v: Vec<f64>,
    pub q: Vec<Vec<f64>>,
}

#[derive(Clone, Debug)]
pub struct ViOutcome {
    pub value: ValueFunction,
    pub policy: Policy,
    pub iterations: usize,
    /// `‖TV − V‖∞` of the returned `V`.
    pub residual: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum TieBreak {
    /// Deterministic: first maximising action.
    Lowest,
    /// Stochastic: uniform over all maximising actions.
    Uniform,
}

fn tie_tol(best: f64) -> f64 {
    1e-10 * (1.0 + best.abs())
}

/// One Bellman optimality sweep, `(TV)(s) = R(s) + γ max_a (P_a V)(s)`.
pub fn bellman_backup(mdp: &Mdp, reward: &[f64], v: &[f64]) -> Vec<f64> {
    let g = mdp.discount();
    (0..mdp.n_states())
        .map(|s| {
            let best = (0..mdp.n_actions())
                .map(|a| mdp.expected_next(s, a, v))
                .fold(f64::NEG_INFINITY, f64::max);
            reward[s] + g * best
        })
        .collect()
}

fn check_reward(mdp: &Mdp, reward: &[f64]) -> Result<()> {
    if reward.len() != mdp.n_states() {
        return Err(DrexError::Precondition(format!(
            "reward has {} entries for {} states",
            reward.len(),
            mdp.n_states()
        )));
    }
    if reward.iter().any(|r| !r.is_finite()) {
        return Err(DrexError::Precondition("reward must be finite".into()));
    }
    Ok(())
}

pub fn q_values(mdp: &Mdp, reward: &[f64], v: &[f64]) -> Vec<Vec<f64>> {
    let g = mdp.discount();
    (0..mdp.n_states())
        .map(|s| {
            (0..mdp.n_actions())
                .map(|a| reward[s] + g * mdp.expected_next(s, a, v))
                .collect()
        })
        .collect()
}

/// Greedy policy w.r.t. the one-step lookahead `(P_a V)(s)`.
///
/// For `γ > 0` this is the argmax of `Q`. With `γ = 0` every `Q(s,·)` equals
/// `R(s)`, and the lookahead still prefers the action with the best next
/// state.
pub fn greedy_policy(mdp: &Mdp, v: &[f64], tie: TieBreak, provenance: Provenance) -> Policy {
    let na = mdp.n_actions();
    let rows = (0..mdp.n_states())
        .map(|s| {
            let look: Vec<f64> = (0..na).map(|a| mdp.expected_next(s, a, v)).collect();
            let best = look.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let tol = tie_tol(best);
            let winners: Vec<usize> = (0..na).filter(|&a| look[a] >= best - tol).collect();
            let mut row = vec![0.0; na];
            match tie {
                TieBreak::Lowest => row[winners[0]] = 1.0,
                TieBreak::Uniform => {
                    for &a in &winners {
                        row[a] = 1.0 / winners.len() as f64;
                    }
                }
            }
            row
        })
        .collect();
    Policy::new(na, rows, provenance).expect("greedy rows are distributions")
}

/// Actions within tie tolerance of the best lookahead at each state.
pub fn optimal_action_sets(mdp: &Mdp, v: &[f64]) -> Vec<Vec<usize>> {
    (0..mdp.n_states())
        .map(|s| {
            let look: Vec<f64> = (0..mdp.n_actions())
                .map(|a| mdp.expected_next(s, a, v))
                .collect();
            let best = look.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let tol = tie_tol(best);
            (0..mdp.n_actions())
                .filter(|&a| look[a] >= best - tol)
                .collect()
        })
        .collect()
}

/// Value iteration from `V = 0` until the sup-norm Bellman residual drops
/// below `tol`. Ties in the greedy policy go to the lowest action index.
pub fn value_iteration(
    mdp: &Mdp,
    reward: &[f64],
    tol: f64,
    max_iters: usize,
) -> Result<(ValueFunction, Policy)> {
    let out = value_iteration_detailed(mdp, reward, tol, max_iters)?;
    Ok((out.value, out.policy))
}

pub fn value_iteration_detailed(
    mdp: &Mdp,
    reward: &[f64],
    tol: f64,
    max_iters: usize,
) -> Result<ViOutcome> {
    if !(tol > 0.0) {
        return Err(DrexError::Precondition(format!(
            "tolerance must be positive, got {tol}"
        )));
    }
    check_reward(mdp, reward)?;
    let mut v = vec![0.0; mdp.n_states()];
    let mut residual = f64::INFINITY;
    for it in 0..=max_iters {
        let tv = bellman_backup(mdp, reward, &v);
        residual = sup_diff(&tv, &v);
        if residual < tol {
            let q = q_values(mdp, reward, &v);
            let policy = greedy_policy(mdp, &v, TieBreak::Lowest, Provenance::Optimal);
            return Ok(ViOutcome {
                value: ValueFunction { v, q },
                policy,
                iterations: it,
                residual,
            });
        }
        v = tv;
    }
    Err(DrexError::Convergence {
        iterations: max_iters,
        residual,
    })
}

/// `V_k` after exactly `iters` Bellman sweeps from zero.
pub fn truncated_values(mdp: &Mdp, reward: &[f64], iters: usize) -> Vec<f64> {
    let mut v = vec![0.0; mdp.n_states()];
    for _ in 0..iters {
        v = bellman_backup(mdp, reward, &v);
    }
    v
}

/// Optimal policy under a reward with tight default tolerances.
pub fn optimal_policy(mdp: &Mdp, reward: &[f64]) -> Result<Policy> {
    Ok(value_iteration(mdp, reward, 1e-10, 100_000)?.1)
}

/// First `k` such that the greedy policy from `V_k` (lowest-index ties)
/// already equals the converged greedy policy.
pub fn policy_convergence_iterations(mdp: &Mdp, reward: &[f64]) -> Result<usize> {
    let target = optimal_policy(mdp, reward)?.greedy_actions();
    let mut v = vec![0.0; mdp.n_states()];
    for k in 0..100_000 {
        if greedy_policy(mdp, &v, TieBreak::Lowest, Provenance::Truncated).greedy_actions()
            == target
        {
            return Ok(k);
        }
        v = bellman_backup(mdp, reward, &v);
    }
    Err(DrexError::Convergence {
        iterations: 100_000,
        residual: f64::NAN,
    })
}

/// Iterative policy evaluation, `V ← R + γ P_π V`, infinite horizon.
///
/// Independent of the linear-solve route in [`crate::mdp::state_occupancy`].
pub fn evaluate_policy_iterative(
    mdp: &Mdp,
    policy: &Policy,
    reward: &[f64],
    tol: f64,
    max_iters: usize,
) -> Result<Vec<f64>> {
    mdp.check_policy(policy)?;
    check_reward(mdp, reward)?;
    let g = mdp.discount();
    let mut v = vec![0.0; mdp.n_states()];
    for _ in 0..max_iters {
        let next: Vec<f64> = (0..mdp.n_states())
            .map(|s| {
                let cont: f64 = policy
                    .probs(s)
                    .iter()
                    .enumerate()
                    .map(|(a, &p)| p * mdp.expected_next(s, a, &v))
                    .sum();
                reward[s] + g * cont
            })
            .collect();
        let diff = sup_diff(&next, &v);
        v = next;
        if diff < tol {
            return Ok(v);
        }
    }
    Err(DrexError::Convergence {
        iterations: max_iters,
        residual: f64::NAN,
    })
}

/// Backward recursion over `horizon` steps; `V_T(s)` is the expected
/// `Σ_{t<T} γ^t R(s_t)` starting at `s`.
pub fn evaluate_policy_finite(
    mdp: &Mdp,
    policy: &Policy,
    reward: &[f64],
    horizon: usize,
    discount: f64,
) -> Vec<f64> {
    let mut v = vec![0.0; mdp.n_states()];
    for _ in 0..horizon {
        v = (0..mdp.n_states())
            .map(|s| {
                let cont: f64 = policy
                    .probs(s)
                    .iter()
                    .enumerate()
                    .map(|(a, &p)| p * mdp.expected_next(s, a, &v))
                    .sum();
                reward[s] + discount * cont
            })
            .collect();
    }
    v
}

/// `J(π|R)` by iterative/backward evaluation, matching `horizon`.
pub fn policy_return_iterative(
    mdp: &Mdp,
    policy: &Policy,
    reward: &[f64],
    horizon: Horizon,
) -> Result<f64> {
    let v = match horizon {
        Horizon::Infinite => evaluate_policy_iterative(mdp, policy, reward, 1e-13, 1_000_000)?,
        Horizon::Finite(t) => evaluate_policy_finite(mdp, policy, reward, t, mdp.discount()),
    };
    Ok(crate::mdp::dot(mdp.initial_distribution(), &v))
}

/// All `|A|^|S|` deterministic policies as action vectors.
pub fn enumerate_deterministic(
    n_states: usize,
    n_actions: usize,
) -> impl Iterator<Item = Vec<usize>> {
    let total = (n_actions as u64)
        .checked_pow(n_states as u32)
        .unwrap_or(u64::MAX);
    (0..total).map(move |mut code| {
        let mut acts = vec![0; n_states];
        for a in acts.iter_mut() {
            *a = (code % n_actions as u64) as usize;
            code /= n_actions as u64;
        }
        acts
    })
}

/// Elementwise logistic transform into (0,1).
pub fn sigmoid_normalize(raw: &[f64]) -> Vec<f64> {
    raw.iter().map(|&x| sigmoid(x)).collect()
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

fn sup_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).fold(0.0, |m, (x, y)| m.max((x - y).abs()))
}
