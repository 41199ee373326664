use drex::envs;
use drex::mdp::Trajectory;
use drex::reward::{
    extrapolation_report, loss_and_gradient, mean_loss, pairwise_loss, predicted_return,
    train_reward, EncodedPair, Mlp, ModelKind, ModelSpec, Optimizer, RewardModel, ScoreMode,
    StateCounts, TrainConfig,
};
use drex::rng::{rng_from, Rng};
use drex::DrexError;
use proptest::prelude::*;
use rand::Rng as _;

fn features(ns: usize, dim: usize, rng: &mut Rng) -> Vec<Vec<f64>> {
    (0..ns)
        .map(|_| (0..dim).map(|_| rng.random_range(-1.0..1.0)).collect())
        .collect()
}

fn random_pair(ns: usize, len: usize, rng: &mut Rng) -> EncodedPair {
    let mut side = || {
        Trajectory::from_states(
            &(0..len)
                .map(|_| rng.random_range(0..ns))
                .collect::<Vec<_>>(),
        )
    };
    let (w, b) = (side(), side());
    EncodedPair::from_trajectories(&w, &b, ScoreMode::Sum)
}

/// Pairs labelled by a planted linear reward.
fn planted(n: usize, ns: usize, w: &[f64], feats: &[Vec<f64>], rng: &mut Rng) -> Vec<EncodedPair> {
    let r: Vec<f64> = feats
        .iter()
        .map(|f| f.iter().zip(w).map(|(a, b)| a * b).sum())
        .collect();
    (0..n)
        .map(|_| {
            let p = random_pair(ns, 10, rng);
            if p.worse.score(&r) > p.better.score(&r) {
                p.swapped()
            } else {
                p
            }
        })
        .collect()
}

#[test]
fn planted_linear_reward_is_recovered() {
    let mut rng = rng_from(5, &[]);
    let (ns, dim) = (30, 4);
    let feats = features(ns, dim, &mut rng);
    let w = [1.0, -0.5, 0.25, 2.0];
    let train = planted(2000, ns, &w, &feats, &mut rng);
    let val = planted(500, ns, &w, &feats, &mut rng);
    let (_, report) = train_reward(
        &train,
        &val,
        &feats,
        &ModelSpec::default(),
        &TrainConfig::default(),
        0,
        1,
    )
    .unwrap();
    assert!(report.val_accuracy >= 0.95, "{}", report.val_accuracy);
}

#[test]
fn fixed_step_descent_does_not_increase_loss() {
    let mut rng = rng_from(6, &[]);
    let (ns, dim) = (12, 3);
    let feats = features(ns, dim, &mut rng);
    let batch: Vec<EncodedPair> = (0..64).map(|_| random_pair(ns, 8, &mut rng)).collect();
    let mut model = RewardModel::linear(vec![0.0; dim]);
    let mut prev = mean_loss(&model, &feats, &batch);
    for _ in 0..200 {
        let (loss, grad) = loss_and_gradient(&model, &feats, &batch);
        assert!((loss - prev).abs() < 1e-12);
        let theta: Vec<f64> = model
            .params()
            .iter()
            .zip(&grad)
            .map(|(t, g)| t - 1e-3 * g)
            .collect();
        model.set_params(&theta);
        let next = mean_loss(&model, &feats, &batch);
        assert!(next <= prev + 1e-15, "{next} > {prev}");
        prev = next;
    }
}

#[test]
fn training_defaults() {
    let cfg = TrainConfig::default();
    assert_eq!(cfg.patience, 6);
    assert_eq!(cfg.batch_size, 32);
    assert_eq!(cfg.optimizer, Optimizer::Sgd { lr: 0.005 });
}

#[test]
fn training_rejects_bad_inputs() {
    let mut rng = rng_from(7, &[]);
    let feats = features(5, 2, &mut rng);
    let pairs: Vec<EncodedPair> = (0..4).map(|_| random_pair(5, 3, &mut rng)).collect();
    let spec = ModelSpec::default();
    let cfg = TrainConfig::default();
    assert!(matches!(
        train_reward(&[], &pairs, &feats, &spec, &cfg, 0, 1),
        Err(DrexError::EmptyDataset(_))
    ));
    assert!(matches!(
        train_reward(&pairs, &[], &feats, &spec, &cfg, 0, 1),
        Err(DrexError::Precondition(_))
    ));
    let zero_batch = TrainConfig {
        batch_size: 0,
        ..TrainConfig::default()
    };
    assert!(train_reward(&pairs, &pairs, &feats, &spec, &zero_batch, 0, 1).is_err());
    let no_members = ModelSpec {
        ensemble: 0,
        ..ModelSpec::default()
    };
    assert!(train_reward(&pairs, &pairs, &feats, &no_members, &cfg, 0, 1).is_err());
    let huge = TrainConfig {
        optimizer: Optimizer::Sgd { lr: f64::INFINITY },
        ..TrainConfig::default()
    };
    assert!(matches!(
        train_reward(&pairs, &pairs, &feats, &spec, &huge, 0, 1),
        Err(DrexError::TrainingDiverged { .. })
    ));
}

#[test]
fn training_is_independent_of_worker_count() {
    let mut rng = rng_from(8, &[]);
    let feats = features(10, 3, &mut rng);
    let train = planted(300, 10, &[1.0, 0.0, -1.0], &feats, &mut rng);
    let val = planted(60, 10, &[1.0, 0.0, -1.0], &feats, &mut rng);
    let spec = ModelSpec {
        kind: ModelKind::Mlp,
        hidden: 6,
        ensemble: 3,
        ..ModelSpec::default()
    };
    let cfg = TrainConfig {
        max_epochs: 5,
        ..TrainConfig::default()
    };
    let a = train_reward(&train, &val, &feats, &spec, &cfg, 4, 1).unwrap();
    let b = train_reward(&train, &val, &feats, &spec, &cfg, 4, 3).unwrap();
    assert_eq!(a, b);
}

#[test]
fn predictions_are_min_max_rescaled_to_truth_range() {
    let mdp = envs::lava_gridworld();
    let model = RewardModel::linear(mdp.true_weights().iter().map(|w| 3.0 * w).collect());
    let sets = vec![
        (
            "a".to_string(),
            vec![
                Trajectory::from_states(&[0, 1, 2]),
                Trajectory::from_states(&[0, 0]),
            ],
        ),
        (
            "b".to_string(),
            vec![Trajectory::from_states(&[5, 6, 7, 8])],
        ),
    ];
    let rep = extrapolation_report(&model, &mdp, &sets).unwrap();
    let g: Vec<f64> = rep.rows.iter().map(|r| r.ground_truth_return).collect();
    let n: Vec<f64> = rep
        .rows
        .iter()
        .map(|r| r.normalized_predicted_return)
        .collect();
    let lo = g.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = g.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    assert!((n.iter().cloned().fold(f64::INFINITY, f64::min) - lo).abs() < 1e-12);
    assert!((n.iter().cloned().fold(f64::NEG_INFINITY, f64::max) - hi).abs() < 1e-12);
    // a positive rescaling of the true reward predicts the truth exactly
    for (a, b) in g.iter().zip(&n) {
        assert!((a - b).abs() < 1e-12);
    }
    assert_eq!(rep.pooled().set, "pooled");
    assert_eq!(rep.pooled().n, 3);
    assert!(extrapolation_report(&model, &mdp, &[]).is_err());
}

fn mlp(dim: usize, rng: &mut Rng) -> RewardModel {
    RewardModel::Mlp(Mlp::random(dim, 5, 0.01, rng))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn swapping_a_pair_mirrors_the_loss(seed in any::<u64>(), use_mlp in any::<bool>()) {
        let mut rng = rng_from(seed, &[]);
        let feats = features(8, 3, &mut rng);
        let model = if use_mlp { mlp(3, &mut rng) } else { RewardModel::linear(vec![rng.random_range(-1.0..1.0); 3]) };
        let p = random_pair(8, 6, &mut rng);
        let r = model.state_rewards(&feats);
        let d = p.better.score(&r) - p.worse.score(&r);
        let (l, ls) = (pairwise_loss(&model, &feats, &p), pairwise_loss(&model, &feats, &p.swapped()));
        // softplus(−d) − softplus(d) = −d
        prop_assert!((ls - l - d).abs() < 1e-9 * (1.0 + d.abs()));
    }

    #[test]
    fn constant_reward_shift_leaves_equal_length_pairs_unchanged(seed in any::<u64>(), c in -5.0f64..5.0) {
        let mut rng = rng_from(seed, &[]);
        let feats = features(8, 3, &mut rng);
        let w: Vec<f64> = (0..3).map(|_| rng.random_range(-1.0..1.0)).collect();
        let shifted: Vec<Vec<f64>> = feats.iter().map(|f| { let mut f = f.clone(); f.push(1.0); f }).collect();
        let mut ws = w.clone();
        ws.push(c);
        let p = random_pair(8, 7, &mut rng);
        let l = pairwise_loss(&RewardModel::linear(w), &feats, &p);
        let l2 = pairwise_loss(&RewardModel::linear(ws), &shifted, &p);
        prop_assert!((l - l2).abs() < 1e-9);
    }

    #[test]
    fn sum_score_is_additive_over_concatenation(
        a in prop::collection::vec(0usize..6, 1..20),
        b in prop::collection::vec(0usize..6, 1..20),
        r in prop::collection::vec(-3.0f64..3.0, 6),
    ) {
        let joined: Vec<usize> = a.iter().chain(&b).copied().collect();
        let score = |s: &[usize]| StateCounts::from_states(s.iter().copied(), ScoreMode::Sum).score(&r);
        prop_assert!((score(&joined) - score(&a) - score(&b)).abs() < 1e-9);
        let mdp_feats: Vec<Vec<f64>> = (0..6).map(|s| vec![r[s]]).collect();
        let model = RewardModel::linear(vec![1.0]);
        let tau = Trajectory::from_states(&joined);
        prop_assert!((predicted_return(&model, &mdp_feats, &tau, ScoreMode::Sum) - score(&joined)).abs() < 1e-9);
    }

    #[test]
    fn linear_loss_is_convex_along_segments(seed in any::<u64>(), t in 0.0f64..1.0) {
        let mut rng = rng_from(seed, &[]);
        let feats = features(8, 3, &mut rng);
        let batch: Vec<EncodedPair> = (0..16).map(|_| random_pair(8, 5, &mut rng)).collect();
        let u: Vec<f64> = (0..3).map(|_| rng.random_range(-2.0..2.0)).collect();
        let v: Vec<f64> = (0..3).map(|_| rng.random_range(-2.0..2.0)).collect();
        let mid: Vec<f64> = u.iter().zip(&v).map(|(a, b)| t * a + (1.0 - t) * b).collect();
        let f = |w: Vec<f64>| mean_loss(&RewardModel::linear(w), &feats, &batch);
        let (fu, fv, fm) = (f(u), f(v), f(mid));
        prop_assert!(fm <= t * fu + (1.0 - t) * fv + 1e-12);
    }
}
