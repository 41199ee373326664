//! Half-space constraints on reward weights and Monte Carlo estimates of the
//! fraction of the unit ball they leave feasible.

use rand::Rng as _;
use rand_distr::{Distribution, Exp1, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{DrexError, Result};
use crate::mdp::{
    dot, policy_feature_expectations, policy_return, FeatureExpectations, Horizon, Mdp,
};
use crate::rng::{derive_seed, par_map, rng_from, Rng};
use crate::solvers::{enumerate_deterministic, optimal_policy, Policy, Provenance};

/// Strict inequalities `w·x > 0` are tested as `w·x ≥ STRICT_MARGIN`.
pub const STRICT_MARGIN: f64 = 1e-9;

/// Samples per independently seeded block.
const BLOCK: usize = 4096;

/// Largest deterministic policy set enumerated for optimality constraints.
const MAX_ENUMERATED: u64 = 1 << 16;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HalfspaceConstraint {
    normal: Vec<f64>,
    strict: bool,
}

impl HalfspaceConstraint {
    pub fn new(normal: Vec<f64>, strict: bool) -> Result<Self> {
        if normal.is_empty() || normal.iter().any(|x| !x.is_finite()) {
            return Err(DrexError::Domain(
                "constraint normal must be finite and non-empty".into(),
            ));
        }
        if normal.iter().all(|&x| x == 0.0) {
            return Err(DrexError::Domain("constraint normal is zero".into()));
        }
        Ok(HalfspaceConstraint { normal, strict })
    }

    pub fn normal(&self) -> &[f64] {
        &self.normal
    }

    pub fn is_strict(&self) -> bool {
        self.strict
    }

    pub fn satisfied_by(&self, w: &[f64]) -> bool {
        let d = dot(&self.normal, w);
        if self.strict {
            d >= STRICT_MARGIN
        } else {
            d >= 0.0
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Ball {
    L2,
    L1,
}

impl Ball {
    /// One point drawn uniformly from the unit ball in `dim` dimensions.
    pub fn sample(self, dim: usize, rng: &mut Rng) -> Vec<f64> {
        match self {
            Ball::L2 => {
                let g: Vec<f64> = (0..dim).map(|_| StandardNormal.sample(rng)).collect();
                let n = g.iter().map(|x| x * x).sum::<f64>().sqrt();
                let r = rng.random::<f64>().powf(1.0 / dim as f64);
                g.into_iter().map(|x| x / n * r).collect()
            }
            Ball::L1 => {
                // d+1 exponentials give a uniform point of the simplex interior
                let e: Vec<f64> = (0..=dim).map(|_| Exp1.sample(rng)).collect();
                let z: f64 = e.iter().sum();
                e[..dim]
                    .iter()
                    .map(|x| if rng.random::<bool>() { x / z } else { -x / z })
                    .collect()
            }
        }
    }
}

/// Uniform direction on the unit sphere.
pub fn random_direction(dim: usize, rng: &mut Rng) -> Vec<f64> {
    let g: Vec<f64> = (0..dim).map(|_| StandardNormal.sample(rng)).collect();
    let n = g.iter().map(|x| x * x).sum::<f64>().sqrt();
    g.into_iter().map(|x| x / n).collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AmbiguityProblem {
    pub dim: usize,
    pub constraints: Vec<HalfspaceConstraint>,
    pub ball: Ball,
}

impl AmbiguityProblem {
    pub fn new(dim: usize, constraints: Vec<HalfspaceConstraint>, ball: Ball) -> Result<Self> {
        if dim == 0 {
            return Err(DrexError::Domain("dimension must be at least 1".into()));
        }
        if let Some(c) = constraints.iter().find(|c| c.normal.len() != dim) {
            return Err(DrexError::Domain(format!(
                "constraint of dimension {} in a {dim}-dimensional problem",
                c.normal.len()
            )));
        }
        Ok(AmbiguityProblem {
            dim,
            constraints,
            ball,
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct VolumeEstimate {
    pub fraction: f64,
    pub std_err: f64,
    pub n_samples: usize,
}

impl VolumeEstimate {
    fn from_count(hits: usize, n: usize) -> Self {
        let p = hits as f64 / n as f64;
        VolumeEstimate {
            fraction: p,
            std_err: (p * (1.0 - p) / n as f64).sqrt(),
            n_samples: n,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RankingPairs {
    Adjacent,
    AllPairs,
}

#[derive(Clone, Debug, PartialEq)]
pub struct RankingConstraints {
    pub constraints: Vec<HalfspaceConstraint>,
    /// One message per pair dropped for identical feature expectations.
    pub warnings: Vec<String>,
}

/// Constraints `w·(Φ_better − Φ_worse) ≥ 0` from items ordered worst to best.
pub fn constraints_from_ranking(
    ranked: &[FeatureExpectations],
    pairs: RankingPairs,
    strict: bool,
) -> Result<RankingConstraints> {
    if ranked.len() < 2 {
        return Err(DrexError::Precondition(
            "a ranking needs at least two items".into(),
        ));
    }
    let mut out = RankingConstraints {
        constraints: Vec::new(),
        warnings: Vec::new(),
    };
    for j in 1..ranked.len() {
        let lower = match pairs {
            RankingPairs::Adjacent => j - 1..j,
            RankingPairs::AllPairs => 0..j,
        };
        for i in lower {
            let normal = ranked[j].sub(&ranked[i]);
            if normal.iter().all(|&x| x == 0.0) {
                out.warnings.push(format!(
                    "items {i} and {j} have identical feature expectations; constraint dropped"
                ));
                continue;
            }
            out.constraints
                .push(HalfspaceConstraint::new(normal, strict)?);
        }
    }
    Ok(out)
}

/// Applies `f` to `n_samples` uniform draws from the ball, in draw order.
///
/// Samples come in fixed blocks seeded by block index, so the result does
/// not depend on `workers`.
fn map_samples<T, F>(
    dim: usize,
    ball: Ball,
    n_samples: usize,
    seed: u64,
    workers: usize,
    f: F,
) -> Vec<T>
where
    T: Send,
    F: Fn(&[f64]) -> T + Sync + Send,
{
    let n_blocks = n_samples.div_ceil(BLOCK);
    par_map(workers, n_blocks, |b| {
        let mut rng = rng_from(seed, &[0xB0, b as u64]);
        let len = BLOCK.min(n_samples - b * BLOCK);
        (0..len)
            .map(|_| f(&ball.sample(dim, &mut rng)))
            .collect::<Vec<_>>()
    })
    .into_iter()
    .flatten()
    .collect()
}

/// Number of leading constraints each sample satisfies.
fn prefix_depths(
    problem: &AmbiguityProblem,
    n_samples: usize,
    seed: u64,
    workers: usize,
) -> Vec<usize> {
    map_samples(problem.dim, problem.ball, n_samples, seed, workers, |w| {
        problem
            .constraints
            .iter()
            .take_while(|c| c.satisfied_by(w))
            .count()
    })
}

/// Monte Carlo fraction of the ball satisfying every constraint, with its
/// binomial standard error.
pub fn estimate_volume(
    problem: &AmbiguityProblem,
    n_samples: usize,
    seed: u64,
    workers: usize,
) -> Result<VolumeEstimate> {
    if n_samples < 1000 {
        return Err(DrexError::Precondition(format!(
            "need at least 1000 samples, got {n_samples}"
        )));
    }
    if problem.constraints.is_empty() {
        return Ok(VolumeEstimate::from_count(n_samples, n_samples));
    }
    let all = problem.constraints.len();
    let hits = prefix_depths(problem, n_samples, seed, workers)
        .into_iter()
        .filter(|&d| d == all)
        .count();
    Ok(VolumeEstimate::from_count(hits, n_samples))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub n_constraints: usize,
    pub volume_fraction: f64,
    pub std_err: f64,
}

/// Volumes of the first `k` constraints for `k = 0..=len`, all estimated
/// from one shared sample set so the sequence is non-increasing exactly.
pub fn volume_sweep(
    problem: &AmbiguityProblem,
    n_samples: usize,
    seed: u64,
    workers: usize,
) -> Result<Vec<SweepRow>> {
    if n_samples < 1000 {
        return Err(DrexError::Precondition(format!(
            "need at least 1000 samples, got {n_samples}"
        )));
    }
    let depths = prefix_depths(problem, n_samples, seed, workers);
    Ok((0..=problem.constraints.len())
        .map(|k| {
            let v =
                VolumeEstimate::from_count(depths.iter().filter(|&&d| d >= k).count(), n_samples);
            SweepRow {
                n_constraints: k,
                volume_fraction: v.fraction,
                std_err: v.std_err,
            }
        })
        .collect())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Prop2Report {
    /// Feasible fraction under optimality of the top policy alone.
    pub optimal_only: VolumeEstimate,
    /// Feasible fraction under optimality plus every ranked pair.
    pub ranked: VolumeEstimate,
    /// Shared samples inside the ranked set but outside the optimality set.
    pub subset_violations: usize,
    pub n_optimality_constraints: usize,
    pub n_ranking_constraints: usize,
    pub warnings: Vec<String>,
}

/// Optimality constraints `w·(Φ_π − Φ_π') ≥ 0` against every deterministic
/// policy `π'`; pairs with identical feature expectations are skipped.
pub fn optimality_constraints(
    mdp: &Mdp,
    top: &Policy,
    horizon: Horizon,
) -> Result<Vec<HalfspaceConstraint>> {
    let count = (mdp.n_actions() as u64).checked_pow(mdp.n_states() as u32);
    if count.is_none_or(|c| c > MAX_ENUMERATED) {
        return Err(DrexError::Precondition(format!(
            "{}^{} deterministic policies are too many to enumerate",
            mdp.n_actions(),
            mdp.n_states()
        )));
    }
    let phi_top = policy_feature_expectations(top, mdp, horizon)?;
    let mut out = Vec::new();
    for acts in enumerate_deterministic(mdp.n_states(), mdp.n_actions()) {
        let p = Policy::deterministic(&acts, mdp.n_actions(), Provenance::Learned)?;
        let normal = phi_top.sub(&policy_feature_expectations(&p, mdp, horizon)?);
        if normal.iter().any(|&x| x != 0.0) {
            out.push(HalfspaceConstraint::new(normal, false)?);
        }
    }
    Ok(out)
}

/// Compares reward ambiguity under "the top policy is optimal" with that
/// under a total ranking whose top element is that policy, using one set of
/// samples for both.
///
/// `ranking` is ordered worst to best and its last element must be optimal
/// for the MDP's true reward.
pub fn prop2_compare(
    mdp: &Mdp,
    ranking: &[Policy],
    ball: Ball,
    n_samples: usize,
    seed: u64,
    workers: usize,
) -> Result<Prop2Report> {
    let top = ranking
        .last()
        .ok_or_else(|| DrexError::Precondition("ranking is empty".into()))?;
    let r = mdp.true_reward();
    let h = Horizon::Infinite;
    let j_opt = policy_return(mdp, &optimal_policy(mdp, &r)?, &r, h)?;
    if policy_return(mdp, top, &r, h)? < j_opt - 1e-9 * (1.0 + j_opt.abs()) {
        return Err(DrexError::Precondition(
            "the top-ranked policy is not optimal".into(),
        ));
    }
    let opt = optimality_constraints(mdp, top, h)?;
    let (rank, warnings) = if ranking.len() >= 2 {
        let phis = ranking
            .iter()
            .map(|p| policy_feature_expectations(p, mdp, h))
            .collect::<Result<Vec<_>>>()?;
        let rc = constraints_from_ranking(&phis, RankingPairs::AllPairs, false)?;
        (rc.constraints, rc.warnings)
    } else {
        (Vec::new(), Vec::new())
    };
    let n_opt = opt.len();
    let n_rank = rank.len();
    if n_samples < 1000 {
        return Err(DrexError::Precondition(format!(
            "need at least 1000 samples, got {n_samples}"
        )));
    }
    // both memberships are evaluated in full on the same draw
    let member = map_samples(mdp.feature_dim(), ball, n_samples, seed, workers, |w| {
        (
            opt.iter().all(|c| c.satisfied_by(w)),
            opt.iter().chain(&rank).all(|c| c.satisfied_by(w)),
        )
    });
    let in_opt: Vec<bool> = member.iter().map(|m| m.0).collect();
    let in_rank: Vec<bool> = member.iter().map(|m| m.1).collect();
    let subset_violations = in_rank
        .iter()
        .zip(&in_opt)
        .filter(|&(&r, &o)| r && !o)
        .count();
    Ok(Prop2Report {
        optimal_only: VolumeEstimate::from_count(in_opt.iter().filter(|&&b| b).count(), n_samples),
        ranked: VolumeEstimate::from_count(in_rank.iter().filter(|&&b| b).count(), n_samples),
        subset_violations,
        n_optimality_constraints: n_opt,
        n_ranking_constraints: n_rank,
        warnings,
    })
}

/// `k = log₂(1 / (1 − x/100))` and its ceiling.
pub fn corollary1_k(x_percent: f64) -> Result<(f64, u64)> {
    if !(0.0..100.0).contains(&x_percent) {
        return Err(DrexError::Domain(format!(
            "x = {x_percent} must lie in [0, 100)"
        )));
    }
    let k = -(1.0 - x_percent / 100.0).log2();
    Ok((k, k.ceil() as u64))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RecurrenceRow {
    pub k: usize,
    pub mean_remaining: f64,
    pub std_err: f64,
    pub predicted_j0_over_2k: f64,
    /// Mean of `|J_k| / |J_{k−1}|` over trials with survivors at `k − 1`.
    pub mean_survival_fraction: Option<f64>,
    pub survival_std_err: Option<f64>,
}

/// Eliminates `j0` uniform hypotheses in the unit `ℓ₂` ball with `k` random
/// half-spaces through the origin, averaging the survivor count over trials.
pub fn hypothesis_elimination_sim(
    j0: usize,
    dim: usize,
    k: usize,
    seed: u64,
    n_trials: usize,
    workers: usize,
) -> Result<Vec<RecurrenceRow>> {
    if j0 < 2 {
        return Err(DrexError::Precondition(
            "need at least two hypotheses".into(),
        ));
    }
    if dim == 0 || n_trials == 0 {
        return Err(DrexError::Precondition(
            "dimension and trial count must be positive".into(),
        ));
    }
    let trials: Vec<Vec<usize>> = par_map(workers, n_trials, |t| {
        let mut rng = rng_from(derive_seed(seed, &[0xE1, t as u64]), &[]);
        let mut alive: Vec<Vec<f64>> = (0..j0).map(|_| Ball::L2.sample(dim, &mut rng)).collect();
        let mut counts = vec![alive.len()];
        for _ in 0..k {
            let x = random_direction(dim, &mut rng);
            alive.retain(|w| dot(w, &x) > 0.0);
            counts.push(alive.len());
        }
        counts
    });
    Ok((0..=k)
        .map(|step| {
            let xs: Vec<f64> = trials.iter().map(|c| c[step] as f64).collect();
            let (mean, std) = crate::stats::mean_std(&xs);
            let fractions: Vec<f64> = if step == 0 {
                Vec::new()
            } else {
                trials
                    .iter()
                    .filter(|c| c[step - 1] > 0)
                    .map(|c| c[step] as f64 / c[step - 1] as f64)
                    .collect()
            };
            let (fm, fs) = crate::stats::mean_std(&fractions);
            RecurrenceRow {
                k: step,
                mean_remaining: mean,
                std_err: std / (n_trials as f64).sqrt(),
                predicted_j0_over_2k: j0 as f64 / 2f64.powi(step as i32),
                mean_survival_fraction: (!fractions.is_empty()).then_some(fm),
                survival_std_err: (!fractions.is_empty())
                    .then(|| fs / (fractions.len() as f64).sqrt()),
            }
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn problem(normals: &[&[f64]]) -> AmbiguityProblem {
        let cs = normals
            .iter()
            .map(|n| HalfspaceConstraint::new(n.to_vec(), true).unwrap())
            .collect();
        AmbiguityProblem::new(normals.first().map_or(2, |n| n.len()), cs, Ball::L2).unwrap()
    }

    #[test]
    fn symmetric_volumes() {
        let half = estimate_volume(&problem(&[&[1.0, 0.0]]), 100_000, 1, 1).unwrap();
        assert!((half.fraction - 0.5).abs() < 0.01, "{half:?}");
        let quarter =
            estimate_volume(&problem(&[&[1.0, 0.0], &[0.0, 1.0]]), 100_000, 2, 1).unwrap();
        assert!((quarter.fraction - 0.25).abs() < 0.01, "{quarter:?}");
        let none = AmbiguityProblem::new(3, vec![], Ball::L1).unwrap();
        assert_eq!(estimate_volume(&none, 1000, 0, 1).unwrap().fraction, 1.0);
        assert!(estimate_volume(&none, 999, 0, 1).is_err());
    }

    #[test]
    fn volume_is_worker_independent() {
        let p = problem(&[&[1.0, 0.3, -0.2], &[0.1, 1.0, 0.4]]);
        let a = estimate_volume(&p, 20_000, 9, 1).unwrap();
        let b = estimate_volume(&p, 20_000, 9, 4).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn l1_samples_stay_in_ball() {
        let mut rng = rng_from(3, &[]);
        for _ in 0..1000 {
            let w = Ball::L1.sample(4, &mut rng);
            assert!(w.iter().map(|x| x.abs()).sum::<f64>() <= 1.0);
        }
    }

    #[test]
    fn ranking_constraints_and_drops() {
        let phis = vec![
            FeatureExpectations(vec![0.0, 1.0]),
            FeatureExpectations(vec![0.0, 1.0]),
            FeatureExpectations(vec![1.0, 0.0]),
        ];
        let adj = constraints_from_ranking(&phis[1..], RankingPairs::Adjacent, true).unwrap();
        assert_eq!(adj.constraints.len(), 1);
        assert_eq!(adj.constraints[0].normal(), &[1.0, -1.0]);
        let all = constraints_from_ranking(&phis, RankingPairs::AllPairs, true).unwrap();
        assert_eq!(all.constraints.len(), 2);
        assert_eq!(all.warnings.len(), 1);
        assert!(HalfspaceConstraint::new(vec![0.0, 0.0], true).is_err());
    }

    #[test]
    fn corollary_counts() {
        assert_eq!(corollary1_k(50.0).unwrap(), (1.0, 1));
        assert_eq!(corollary1_k(75.0).unwrap(), (2.0, 2));
        assert_eq!(corollary1_k(87.5).unwrap(), (3.0, 3));
        assert_eq!(corollary1_k(0.0).unwrap().1, 0);
        assert!(corollary1_k(100.0).is_err());
    }

    #[test]
    fn elimination_keeps_all_at_step_zero() {
        let rows = hypothesis_elimination_sim(64, 3, 2, 0, 10, 1).unwrap();
        assert_eq!(rows[0].mean_remaining, 64.0);
        assert_eq!(rows.len(), 3);
    }
}
