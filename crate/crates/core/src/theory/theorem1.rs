//! A sufficient condition for a learned-reward policy to beat the
//! demonstrations, checked exactly on tabular instances.

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::envs::random_mdp;
use crate::error::{DrexError, Result};
use crate::mdp::{dataset_return, policy_feature_expectations, rollout, Horizon, Mdp, Trajectory};
use crate::reward::RewardModel;
use crate::rng::{derive_seed, par_map, rng_from};
use crate::solvers::{optimal_policy, Policy};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TheoremOneReport {
    /// `J(π*|R*) − J(D|R*)`.
    pub delta: f64,
    /// `‖Φ_π* − Φ_π̂‖_∞`.
    pub eps_phi: f64,
    /// `max_s |R*(s) − R̂(s)|`.
    pub reward_err_sup: f64,
    /// `ε_Φ + 2‖ε‖_∞ / (1 − γ)`.
    pub bound: f64,
    pub condition_holds: bool,
    /// `J(π̂|R*) > J(D|R*)`.
    pub extrapolated: bool,
    /// `J(π*|R*) − J(π̂|R*)`, which can never exceed `bound`.
    pub gap: f64,
    pub gap_within_bound: bool,
    /// Factor applied to both rewards so that `‖ŵ‖₁ ≤ 1`.
    pub scale: f64,
    pub j_optimal: f64,
    pub j_learned: f64,
    pub j_demos: f64,
}

/// Evaluates the extrapolation condition for a linear learned reward, with
/// exact infinite-horizon discounted feature expectations.
///
/// If `‖ŵ‖₁ > 1` both `R̂` and `R*` are divided by `‖ŵ‖₁`; the extrapolation
/// flag is unaffected by that positive scaling.
pub fn theorem1_check(
    mdp: &Mdp,
    model: &RewardModel,
    pi_hat: &Policy,
    demos: &[Trajectory],
) -> Result<TheoremOneReport> {
    let w_hat = model.as_linear().ok_or(DrexError::TheoremInapplicable(
        "the condition is stated for linear rewards only",
    ))?;
    if w_hat.len() != mdp.feature_dim() {
        return Err(DrexError::Precondition(
            "reward model and MDP feature sizes differ".into(),
        ));
    }
    if demos.is_empty() {
        return Err(DrexError::EmptyDataset("demonstrations"));
    }
    let l1: f64 = w_hat.iter().map(|w| w.abs()).sum();
    let scale = if l1 > 1.0 { 1.0 / l1 } else { 1.0 };
    let r_star: Vec<f64> = mdp.true_reward().iter().map(|r| r * scale).collect();
    let r_hat: Vec<f64> = model
        .state_rewards(mdp.features())
        .iter()
        .map(|r| r * scale)
        .collect();
    let h = Horizon::Infinite;
    let pi_star = optimal_policy(mdp, &r_star)?;
    let phi_star = policy_feature_expectations(&pi_star, mdp, h)?;
    let phi_hat = policy_feature_expectations(pi_hat, mdp, h)?;
    let w_star: Vec<f64> = mdp.true_weights().iter().map(|w| w * scale).collect();
    let j_optimal = phi_star.dot(&w_star);
    let j_learned = phi_hat.dot(&w_star);
    let j_demos = dataset_return(demos, &r_star, mdp.discount())?;
    let eps_phi = phi_star.sup_distance(&phi_hat);
    let reward_err_sup = r_star
        .iter()
        .zip(&r_hat)
        .fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
    let bound = eps_phi + 2.0 * reward_err_sup / (1.0 - mdp.discount());
    let delta = j_optimal - j_demos;
    let gap = j_optimal - j_learned;
    Ok(TheoremOneReport {
        delta,
        eps_phi,
        reward_err_sup,
        bound,
        condition_holds: delta > bound,
        extrapolated: j_learned > j_demos,
        gap,
        gap_within_bound: gap <= bound + 1e-9 * (1.0 + bound.abs()),
        scale,
        j_optimal,
        j_learned,
        j_demos,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TheoremOneSuite {
    pub instances: usize,
    pub condition_true: usize,
    pub extrapolated: usize,
    /// Instances with the condition true but no extrapolation.
    pub counterexamples: usize,
    /// Instances whose optimality gap exceeded the bound.
    pub bound_violations: usize,
}

/// Runs the check on `n` random tabular instances: a random MDP, a learned
/// weight vector at a random distance from the true one, its optimal policy,
/// and demonstrations from a random stochastic policy.
pub fn theorem1_suite(n: usize, seed: u64, workers: usize) -> Result<TheoremOneSuite> {
    let reports = par_map(workers, n, |i| -> Result<TheoremOneReport> {
        let mut rng = rng_from(derive_seed(seed, &[0x71, i as u64]), &[]);
        let ns = rng.random_range(3..=8);
        let na = rng.random_range(2..=4);
        let dim = rng.random_range(2..=5);
        let gamma = rng.random_range(0.5..0.95);
        let mdp = random_mdp(&mut rng, ns, na, dim, gamma);
        let noise = [0.0, 1e-3, 1e-2, 0.05, 0.2, 1.0][i % 6];
        let w: Vec<f64> = mdp
            .true_weights()
            .iter()
            .map(|w| w + noise * rng.random_range(-1.0..1.0))
            .collect();
        let model = RewardModel::linear(w);
        let pi_hat = optimal_policy(&mdp, &model.state_rewards(mdp.features()))?;
        let demo_rows = (0..ns)
            .map(|_| {
                let e: Vec<f64> = (0..na).map(|_| rng.random_range(0.05..1.0)).collect();
                let z: f64 = e.iter().sum();
                e.into_iter().map(|x| x / z).collect()
            })
            .collect();
        let demo_policy = Policy::new(na, demo_rows, crate::solvers::Provenance::Uniform)?;
        let len = (4.0 / (1.0 - gamma)).ceil() as usize;
        let demos: Vec<Trajectory> = (0..5)
            .map(|_| rollout(&mdp, &demo_policy, len, &mut rng))
            .collect();
        theorem1_check(&mdp, &model, &pi_hat, &demos)
    })
    .into_iter()
    .collect::<Result<Vec<_>>>()?;
    Ok(TheoremOneSuite {
        instances: reports.len(),
        condition_true: reports.iter().filter(|r| r.condition_holds).count(),
        extrapolated: reports.iter().filter(|r| r.extrapolated).count(),
        counterexamples: reports
            .iter()
            .filter(|r| r.condition_holds && !r.extrapolated)
            .count(),
        bound_violations: reports.iter().filter(|r| !r.gap_within_bound).count(),
    })
}
