use drex::envs;
use drex::mdp::policy_feature_expectations;
use drex::reward::RewardModel;
use drex::rng::rng_from;
use drex::solvers::{optimal_policy, Policy, Provenance};
use drex::theory::{
    corollary1_k, estimate_volume, hypothesis_elimination_sim, p_epsilon_closed_form, prop1_demo,
    prop2_compare, theorem1_check, AmbiguityProblem, Ball, DegradationModel, HalfspaceConstraint,
};
use drex::DrexError;
use proptest::prelude::*;
use rand::Rng as _;

#[test]
fn survival_fraction_is_one_half() {
    let rows = hypothesis_elimination_sim(1024, 4, 6, 3, 400, 2).unwrap();
    assert_eq!(rows[0].mean_remaining, 1024.0);
    assert!(rows[0].mean_survival_fraction.is_none());
    for row in &rows[1..] {
        let (m, se) = (
            row.mean_survival_fraction.unwrap(),
            row.survival_std_err.unwrap(),
        );
        assert!((m - 0.5).abs() <= 3.0 * se, "step {}: {m} ± {se}", row.k);
    }
    let again = hypothesis_elimination_sim(1024, 4, 6, 3, 400, 1).unwrap();
    assert_eq!(rows, again);
}

#[test]
fn corollary_counts_and_domain() {
    assert_eq!(corollary1_k(50.0).unwrap().1, 1);
    assert_eq!(corollary1_k(75.0).unwrap().1, 2);
    assert_eq!(corollary1_k(87.5).unwrap().1, 3);
    assert_eq!(corollary1_k(0.0).unwrap().1, 0);
    assert!(matches!(corollary1_k(100.0), Err(DrexError::Domain(_))));
    assert!(corollary1_k(-1.0).is_err());
}

#[test]
fn ranked_hypotheses_are_a_subset_of_optimal_ones() {
    let mdp = envs::prop1_mdp(10.0);
    let r = mdp.true_reward();
    let top = optimal_policy(&mdp, &r).unwrap();
    let worse: Vec<Policy> = [envs::PROP1_B, envs::PROP1_C]
        .iter()
        .map(|&a| {
            let mut acts = vec![0; mdp.n_states()];
            acts[0] = a;
            Policy::deterministic(&acts, mdp.n_actions(), Provenance::Learned).unwrap()
        })
        .collect();
    let mut ranking = worse;
    ranking.sort_by(|a, b| {
        let ja = drex::mdp::policy_return(&mdp, a, &r, drex::mdp::Horizon::Infinite).unwrap();
        let jb = drex::mdp::policy_return(&mdp, b, &r, drex::mdp::Horizon::Infinite).unwrap();
        ja.total_cmp(&jb)
    });
    ranking.push(top.clone());
    for ball in [Ball::L2, Ball::L1] {
        let rep = prop2_compare(&mdp, &ranking, ball, 20_000, 1, 2).unwrap();
        assert_eq!(rep.subset_violations, 0);
        assert!(rep.ranked.fraction <= rep.optimal_only.fraction);
        assert!(
            rep.ranked.fraction < rep.optimal_only.fraction,
            "{ball:?}: ranking removed nothing"
        );
    }
    // a suboptimal top element is rejected
    let bad: Vec<Policy> = ranking.iter().rev().cloned().collect();
    assert!(prop2_compare(&mdp, &bad, Ball::L2, 20_000, 1, 1).is_err());
}

#[test]
fn counterexample_report_passes_for_several_gaps() {
    for delta in [0.5, 1.0, 10.0] {
        let rep = prop1_demo(delta).unwrap();
        assert!(rep.all_pass(), "{rep:?}");
    }
}

#[test]
fn extrapolation_condition_needs_a_linear_reward() {
    let mdp = envs::lava_gridworld();
    let pi = optimal_policy(&mdp, &mdp.true_reward()).unwrap();
    let mlp = RewardModel::Mlp(drex::reward::Mlp::random(
        mdp.feature_dim(),
        3,
        0.01,
        &mut rng_from(0, &[]),
    ));
    let demo = drex::mdp::rollout(&mdp, &pi, 10, &mut rng_from(1, &[]));
    assert!(matches!(
        theorem1_check(&mdp, &mlp, &pi, std::slice::from_ref(&demo)),
        Err(DrexError::TheoremInapplicable(_))
    ));
    let exact = RewardModel::linear(mdp.true_weights().to_vec());
    let rep = theorem1_check(&mdp, &exact, &pi, &[demo]).unwrap();
    assert!(rep.eps_phi.abs() < 1e-12 && rep.reward_err_sup < 1e-12);
    assert!(rep.gap.abs() < 1e-9 && rep.gap_within_bound);
}

#[test]
fn optimal_feature_expectations_satisfy_own_constraints() {
    let mdp = envs::prop1_mdp(1.0);
    let top = optimal_policy(&mdp, &mdp.true_reward()).unwrap();
    let cs =
        drex::theory::optimality_constraints(&mdp, &top, drex::mdp::Horizon::Infinite).unwrap();
    let w = mdp.true_weights();
    assert!(!cs.is_empty());
    assert!(cs.iter().all(|c| c.satisfied_by(w)));
    let phi = policy_feature_expectations(&top, &mdp, drex::mdp::Horizon::Infinite).unwrap();
    assert_eq!(phi.0.len(), mdp.feature_dim());
}

fn constraint(v: Vec<f64>) -> HalfspaceConstraint {
    HalfspaceConstraint::new(v, false).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn volume_shrinks_as_constraints_are_added(seed in any::<u64>(), dim in 1usize..5, l1 in any::<bool>()) {
        let mut rng = rng_from(seed, &[]);
        let normals: Vec<Vec<f64>> = (0..6).map(|_| (0..dim).map(|_| rng.random_range(-1.0..1.0)).collect()).collect();
        let ball = if l1 { Ball::L1 } else { Ball::L2 };
        let mut prev = 1.0;
        for k in 0..=normals.len() {
            let cs = normals[..k].iter().cloned().map(constraint).collect();
            let p = AmbiguityProblem::new(dim, cs, ball).unwrap();
            let v = estimate_volume(&p, 2000, seed, 1).unwrap().fraction;
            prop_assert!(v <= prev);
            prev = v;
        }
    }

    #[test]
    fn suboptimal_probability_forms_agree(beta in 0.0f64..=1.0, eps in 0.0f64..=1.0, n_actions in 1usize..20) {
        let m = DegradationModel::new(beta, 10, n_actions).unwrap();
        let b = m.bound(eps).unwrap();
        let closed = p_epsilon_closed_form(beta, eps, n_actions);
        prop_assert!((b.p_exact - closed).abs() < 1e-12);
        let diff = b.p_large_actions - b.p_exact;
        prop_assert!(diff >= -1e-12);
        prop_assert!(diff <= 1.0 / n_actions as f64 + 1e-12);
        prop_assert!((diff - eps / n_actions as f64).abs() < 1e-12);
        prop_assert!((b.gap_bound - 100.0 * b.p_large_actions).abs() < 1e-9);
    }
}
