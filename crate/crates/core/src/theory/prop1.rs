//! The four-state counterexample: optimality of the expert alone leaves two
//! suboptimal policies tied, while rankings over their trajectories separate
//! them.

use serde::{Deserialize, Serialize};

use crate::envs::{prop1_mdp, PROP1_A, PROP1_B, PROP1_C};
use crate::error::{DrexError, Result};
use crate::mdp::{dot, policy_return, Mdp, Trajectory};
use crate::solvers::{enumerate_deterministic, Policy, Provenance};

/// Margin required of every constraint by the ranking-constrained solve.
const MARGIN: f64 = 0.05;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Prop1Report {
    pub delta: f64,
    /// Weights consistent with expert optimality alone.
    pub expert_only_weights: Vec<f64>,
    pub expert_only_feasible: bool,
    /// `J(π₁|R̂) = J(π₂|R̂)` under the expert-only weights.
    pub expert_only_tie: bool,
    /// Weights after adding the ranking `τ* ≻ τ₂ ≻ τ₁`.
    pub ranked_weights: Vec<f64>,
    pub ranked_feasible: bool,
    /// `J(π₁|R̂) < J(π₂|R̂)` under the ranked weights.
    pub ranked_separates: bool,
    /// The expert attains the maximum return under both learned rewards.
    pub expert_optimal_under_both: bool,
    /// `J(π₁|R*) < J(π₂|R*)`, so the ranking agrees with the true reward.
    pub ranking_matches_truth: bool,
    pub subgradient_iterations: usize,
}

impl Prop1Report {
    pub fn all_pass(&self) -> bool {
        self.expert_only_feasible
            && self.expert_only_tie
            && self.ranked_feasible
            && self.ranked_separates
            && self.expert_optimal_under_both
            && self.ranking_matches_truth
    }
}

fn first_action_policy(mdp: &Mdp, a: usize) -> Policy {
    let mut acts = vec![0; mdp.n_states()];
    acts[0] = a;
    Policy::deterministic(&acts, mdp.n_actions(), Provenance::Learned).expect("valid action")
}

fn returns_under(mdp: &Mdp, w: &[f64], policies: &[&Policy]) -> Result<Vec<f64>> {
    let r = mdp.reward_from_weights(w);
    policies
        .iter()
        .map(|p| policy_return(mdp, p, &r, mdp.evaluation_horizon()))
        .collect()
}

/// Whether `expert` attains the maximum return among all deterministic
/// policies under weights `w`.
fn expert_is_argmax(mdp: &Mdp, w: &[f64], expert: &Policy) -> Result<bool> {
    let r = mdp.reward_from_weights(w);
    let h = mdp.evaluation_horizon();
    let je = policy_return(mdp, expert, &r, h)?;
    for acts in enumerate_deterministic(mdp.n_states(), mdp.n_actions()) {
        let p = Policy::deterministic(&acts, mdp.n_actions(), Provenance::Learned)?;
        if policy_return(mdp, &p, &r, h)? > je {
            return Ok(false);
        }
    }
    Ok(true)
}

fn project_l2(w: &mut [f64]) {
    let n = w.iter().map(|x| x * x).sum::<f64>().sqrt();
    if n > 1.0 {
        w.iter_mut().for_each(|x| *x /= n);
    }
}

/// Finds `w` in the unit `ℓ₂` ball with `w·x ≥ margin` for every normal, by
/// projected subgradient descent on the summed hinge violations.
fn solve_margin(
    normals: &[Vec<f64>],
    start: &[f64],
    margin: f64,
    max_iters: usize,
) -> (Vec<f64>, bool, usize) {
    let mut w = start.to_vec();
    for it in 0..max_iters {
        let violated: Vec<&Vec<f64>> = normals.iter().filter(|x| dot(x, &w) < margin).collect();
        if violated.is_empty() {
            return (w, true, it);
        }
        let step = 0.5 / (1.0 + it as f64).sqrt();
        for x in violated {
            for (wi, xi) in w.iter_mut().zip(x.iter()) {
                *wi += step * xi;
            }
        }
        project_l2(&mut w);
    }
    let ok = normals.iter().all(|x| dot(x, &w) >= margin);
    (w, ok, max_iters)
}

/// Runs the counterexample for the given `δ > 0`.
pub fn prop1_demo(delta: f64) -> Result<Prop1Report> {
    if !(delta > 0.0 && delta.is_finite()) {
        return Err(DrexError::Domain(format!(
            "delta = {delta} must be positive"
        )));
    }
    let mdp = prop1_mdp(delta);
    let expert = first_action_policy(&mdp, PROP1_A);
    let pi1 = first_action_policy(&mdp, PROP1_C);
    let pi2 = first_action_policy(&mdp, PROP1_B);
    let h = mdp.evaluation_horizon();
    let phi = |p: &Policy| crate::mdp::policy_feature_expectations(p, &mdp, h);
    let phi_e = phi(&expert)?;

    // expert optimality against every deterministic alternative
    let mut expert_normals = Vec::new();
    for acts in enumerate_deterministic(mdp.n_states(), mdp.n_actions()) {
        let p = Policy::deterministic(&acts, mdp.n_actions(), Provenance::Learned)?;
        let x = phi_e.sub(&phi(&p)?);
        if x.iter().any(|&v| v != 0.0) {
            expert_normals.push(x);
        }
    }

    let w0 = vec![0.0, 1.0, 0.0, 0.0];
    let expert_only_feasible =
        expert_normals.iter().all(|x| dot(x, &w0) >= 0.0) && dot(&w0, &w0) <= 1.0;
    let j0 = returns_under(&mdp, &w0, &[&pi1, &pi2])?;
    let expert_only_tie = j0[0] == j0[1];

    // length-2 trajectories s₀ → s₁ / s₂ / s₃, ranked best to worst
    let tau = |a: usize| Trajectory::new(vec![(0, a), (1 + a, a)]);
    let (t_star, t2, t1) = (tau(PROP1_A), tau(PROP1_B), tau(PROP1_C));
    let g = mdp.discount();
    let counts = |t: &Trajectory| t.feature_counts(&mdp, g);
    let sub =
        |a: Vec<f64>, b: Vec<f64>| -> Vec<f64> { a.iter().zip(&b).map(|(x, y)| x - y).collect() };
    let mut normals = expert_normals.clone();
    normals.push(sub(counts(&t_star), counts(&t2)));
    normals.push(sub(counts(&t2), counts(&t1)));
    let (w1, ranked_feasible, iters) = solve_margin(&normals, &w0, MARGIN, 100_000);
    let j1 = returns_under(&mdp, &w1, &[&pi1, &pi2])?;

    let truth = returns_under(&mdp, mdp.true_weights(), &[&pi1, &pi2])?;
    Ok(Prop1Report {
        delta,
        expert_only_feasible,
        expert_only_tie,
        ranked_feasible,
        ranked_separates: j1[0] < j1[1],
        expert_optimal_under_both: expert_is_argmax(&mdp, &w0, &expert)?
            && expert_is_argmax(&mdp, &w1, &expert)?,
        ranking_matches_truth: truth[0] < truth[1],
        expert_only_weights: w0,
        ranked_weights: w1,
        subgradient_iterations: iters,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn all_checks_pass() {
        for delta in [1.0, 10.0, 100.0] {
            let rep = prop1_demo(delta).unwrap();
            assert!(rep.all_pass(), "{rep:?}");
        }
        assert!(prop1_demo(0.0).is_err());
    }
}
