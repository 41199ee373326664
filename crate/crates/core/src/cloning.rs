//! Suboptimal demonstrators, behavioural cloning, and ε-greedy noise
//! injection.

use serde::{Deserialize, Serialize};

use crate::error::{DrexError, Result};
use crate::mdp::{
    dataset_return, policy_return, rollout, state_occupancy_with_discount, trajectory_return,
    Horizon, Mdp, Trajectory,
};
use crate::rng::{derive_seed, par_map, rng_from};
use crate::solvers::{
    argmax_lowest, greedy_policy, optimal_action_sets, optimal_policy, truncated_values,
    value_iteration, ActionSampler, Policy, Provenance, TieBreak,
};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DemonstratorMode {
    /// Greedy w.r.t. `V_k` after `parameter` Bellman sweeps, ties uniform.
    TruncatedVi,
    /// Boltzmann over optimal `Q` with temperature `parameter`.
    SoftmaxTemperature,
    /// ε-greedy around the optimal policy with `ε = parameter`.
    EpsilonPerturbedOptimal,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DemonstratorSpec {
    pub mode: DemonstratorMode,
    pub parameter: f64,
    pub n_demos: usize,
    #[serde(default)]
    pub seed: u64,
    /// Re-seeded attempts allowed when the sampled demos miss the
    /// random/optimal sandwich.
    #[serde(default = "default_retries")]
    pub max_retries: usize,
}

fn default_retries() -> usize {
    10
}

impl DemonstratorSpec {
    pub fn validate(&self) -> Result<()> {
        if self.n_demos == 0 {
            return Err(DrexError::Precondition("n_demos must be at least 1".into()));
        }
        let p = self.parameter;
        let ok = match self.mode {
            DemonstratorMode::TruncatedVi => p >= 0.0 && p.fract() == 0.0,
            DemonstratorMode::SoftmaxTemperature => p > 0.0 && p.is_finite(),
            DemonstratorMode::EpsilonPerturbedOptimal => (0.0..=1.0).contains(&p),
        };
        if !ok {
            return Err(DrexError::Precondition(format!(
                "parameter {p} outside the documented range for {:?}",
                self.mode
            )));
        }
        Ok(())
    }
}

/// The demonstrator's tabular policy.
pub fn demonstrator_policy(mdp: &Mdp, spec: &DemonstratorSpec) -> Result<Policy> {
    spec.validate()?;
    let r = mdp.true_reward();
    match spec.mode {
        DemonstratorMode::TruncatedVi => {
            let v = truncated_values(mdp, &r, spec.parameter as usize);
            Ok(greedy_policy(
                mdp,
                &v,
                TieBreak::Uniform,
                Provenance::Truncated,
            ))
        }
        DemonstratorMode::SoftmaxTemperature => {
            let (vf, _) = value_iteration(mdp, &r, 1e-10, 100_000)?;
            let rows = vf
                .q
                .iter()
                .map(|q| {
                    let m = q.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                    let e: Vec<f64> = q.iter().map(|x| ((x - m) / spec.parameter).exp()).collect();
                    let z: f64 = e.iter().sum();
                    e.into_iter().map(|x| x / z).collect()
                })
                .collect();
            Policy::new(mdp.n_actions(), rows, Provenance::Softmax)
        }
        DemonstratorMode::EpsilonPerturbedOptimal => {
            let opt = optimal_policy(mdp, &r)?;
            epsilon_greedy_wrap(&opt, spec.parameter)
        }
    }
}

/// Rolls out `n_demos` demonstrations of `len` steps and checks that the
/// demonstrator sits strictly between uniform-random and optimal.
///
/// The exact check on the demonstrator policy fails fast. The check on the
/// sampled mean return is retried with fresh seeds up to `max_retries` times.
pub fn generate_demonstrations(
    mdp: &Mdp,
    spec: &DemonstratorSpec,
    len: usize,
) -> Result<Vec<Trajectory>> {
    let pi = demonstrator_policy(mdp, spec)?;
    let r = mdp.true_reward();
    let h = Horizon::Finite(len);
    let j_demo = policy_return(mdp, &pi, &r, h)?;
    let j_rand = policy_return(
        mdp,
        &Policy::uniform(mdp.n_states(), mdp.n_actions()),
        &r,
        h,
    )?;
    let j_opt = policy_return(mdp, &optimal_policy(mdp, &r)?, &r, h)?;
    let tol = 1e-9 * (1.0 + j_opt.abs());
    if !(j_demo > j_rand + tol) {
        return Err(DrexError::DemonstratorDegenerate(format!(
            "exact return {j_demo:.6} does not exceed uniform-random {j_rand:.6}"
        )));
    }
    if !(j_demo < j_opt - tol) {
        return Err(DrexError::DemonstratorDegenerate(format!(
            "exact return {j_demo:.6} is not below optimal {j_opt:.6}"
        )));
    }
    for attempt in 0..=spec.max_retries {
        let demos: Vec<Trajectory> = (0..spec.n_demos)
            .map(|i| {
                let seed = derive_seed(spec.seed, &[attempt as u64, i as u64]);
                let mut rng = rng_from(seed, &[]);
                let mut tau = rollout(mdp, &pi, len, &mut rng);
                tau.seed = Some(seed);
                tau
            })
            .collect();
        let mean = dataset_return(&demos, &r, mdp.discount())?;
        if mean > j_rand && mean < j_opt {
            return Ok(demos);
        }
    }
    Err(DrexError::DemonstratorDegenerate(format!(
        "sampled mean return left ({j_rand:.4}, {j_opt:.4}) in all {} attempts",
        spec.max_retries + 1
    )))
}

/// Strictly decreasing noise levels and rollouts per level.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "NoiseScheduleFile", into = "NoiseScheduleFile")]
pub struct NoiseSchedule {
    levels: Vec<f64>,
    rollouts_per_level: usize,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct NoiseScheduleFile {
    levels: Vec<f64>,
    rollouts_per_level: usize,
}

impl TryFrom<NoiseScheduleFile> for NoiseSchedule {
    type Error = DrexError;
    fn try_from(f: NoiseScheduleFile) -> Result<Self> {
        NoiseSchedule::new(f.levels, f.rollouts_per_level)
    }
}

impl From<NoiseSchedule> for NoiseScheduleFile {
    fn from(s: NoiseSchedule) -> Self {
        NoiseScheduleFile {
            levels: s.levels,
            rollouts_per_level: s.rollouts_per_level,
        }
    }
}

impl NoiseSchedule {
    pub fn new(levels: Vec<f64>, rollouts_per_level: usize) -> Result<Self> {
        if levels.is_empty() {
            return Err(DrexError::Precondition("noise schedule is empty".into()));
        }
        if rollouts_per_level == 0 {
            return Err(DrexError::Precondition(
                "rollouts per level must be at least 1".into(),
            ));
        }
        if let Some(e) = levels.iter().find(|e| !(0.0..=1.0).contains(*e)) {
            return Err(DrexError::Domain(format!("noise level {e} outside [0,1]")));
        }
        if levels.windows(2).any(|w| w[0] <= w[1]) {
            return Err(DrexError::Precondition(
                "noise levels must be strictly decreasing".into(),
            ));
        }
        Ok(NoiseSchedule {
            levels,
            rollouts_per_level,
        })
    }

    /// `n` levels evenly spaced from 1 down to 0 inclusive.
    pub fn evenly_spaced(n: usize, rollouts_per_level: usize) -> Result<Self> {
        let levels = match n {
            0 => vec![],
            1 => vec![1.0],
            _ => (0..n).map(|i| 1.0 - i as f64 / (n - 1) as f64).collect(),
        };
        NoiseSchedule::new(levels, rollouts_per_level)
    }

    pub fn levels(&self) -> &[f64] {
        &self.levels
    }

    pub fn rollouts_per_level(&self) -> usize {
        self.rollouts_per_level
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum BcModel {
    /// Empirical action frequencies with additive smoothing `alpha`.
    Tabular { alpha: f64 },
    /// Multinomial logit over policy features, fitted by gradient ascent on
    /// the log-likelihood.
    SoftmaxLinear {
        features: PolicyFeatures,
        l2: f64,
        tol: f64,
        max_iters: usize,
    },
}

impl Default for BcModel {
    fn default() -> Self {
        BcModel::Tabular { alpha: 1e-3 }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PolicyFeatures {
    /// One-hot state indicator.
    StateIndicator,
    /// The MDP's reward features plus a constant.
    RewardFeatures,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClonedPolicy {
    pub policy: Policy,
    pub final_nll: f64,
    pub iterations: usize,
    /// NLL after every optimisation epoch (one entry for tabular).
    pub nll_history: Vec<f64>,
}

/// Maximum-likelihood behavioural cloning over every `(s,a)` in `demos`.
pub fn behavioral_cloning(
    mdp: &Mdp,
    demos: &[Trajectory],
    model: &BcModel,
) -> Result<ClonedPolicy> {
    if demos.is_empty() {
        return Err(DrexError::EmptyDataset("demonstrations for cloning"));
    }
    let (ns, na) = (mdp.n_states(), mdp.n_actions());
    let mut counts = vec![vec![0.0; na]; ns];
    for tau in demos {
        tau.validate(ns, na)?;
        for &(s, a) in &tau.steps {
            counts[s][a] += 1.0;
        }
    }
    match model {
        BcModel::Tabular { alpha } => {
            if *alpha < 0.0 {
                return Err(DrexError::Domain(format!(
                    "smoothing {alpha} must be non-negative"
                )));
            }
            let rows: Vec<Vec<f64>> = counts
                .iter()
                .map(|c| {
                    let total: f64 = c.iter().sum();
                    if total == 0.0 {
                        vec![1.0 / na as f64; na]
                    } else {
                        let z = total + alpha * na as f64;
                        c.iter().map(|x| (x + alpha) / z).collect()
                    }
                })
                .collect();
            let policy = Policy::new(na, rows, Provenance::Cloned)?;
            let nll = empirical_nll(&counts, &policy);
            Ok(ClonedPolicy {
                policy,
                final_nll: nll,
                iterations: 0,
                nll_history: vec![nll],
            })
        }
        BcModel::SoftmaxLinear {
            features,
            l2,
            tol,
            max_iters,
        } => {
            let psi = policy_feature_table(mdp, *features);
            let data = SoftmaxData::new(&counts, &psi);
            let mut theta = vec![0.0; na * data.dim];
            let (mut nll, mut grad) = data.nll_and_grad(&theta, *l2);
            let mut history = vec![nll];
            let mut step = 1.0;
            let mut iters = 0;
            while iters < *max_iters && norm(&grad) >= *tol {
                let g2: f64 = grad.iter().map(|g| g * g).sum();
                // Armijo backtracking keeps the NLL monotone
                loop {
                    let cand: Vec<f64> =
                        theta.iter().zip(&grad).map(|(t, g)| t - step * g).collect();
                    let (c_nll, c_grad) = data.nll_and_grad(&cand, *l2);
                    if c_nll <= nll - 0.5 * step * g2 || step < 1e-12 {
                        if c_nll <= nll {
                            theta = cand;
                            nll = c_nll;
                            grad = c_grad;
                        }
                        break;
                    }
                    step *= 0.5;
                }
                step = (step * 2.0).min(1e3);
                iters += 1;
                history.push(nll);
                if step < 1e-12 {
                    break;
                }
            }
            let rows = (0..ns).map(|s| data.probs(&theta, &psi[s])).collect();
            Ok(ClonedPolicy {
                policy: Policy::new(na, rows, Provenance::Cloned)?,
                final_nll: nll,
                iterations: iters,
                nll_history: history,
            })
        }
    }
}

fn empirical_nll(counts: &[Vec<f64>], policy: &Policy) -> f64 {
    let mut total = 0.0;
    let mut n = 0.0;
    for (s, c) in counts.iter().enumerate() {
        for (a, &k) in c.iter().enumerate() {
            if k > 0.0 {
                total -= k * policy.probs(s)[a].ln();
                n += k;
            }
        }
    }
    total / n
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

pub fn policy_feature_table(mdp: &Mdp, kind: PolicyFeatures) -> Vec<Vec<f64>> {
    let ns = mdp.n_states();
    match kind {
        PolicyFeatures::StateIndicator => (0..ns)
            .map(|s| {
                let mut e = vec![0.0; ns];
                e[s] = 1.0;
                e
            })
            .collect(),
        PolicyFeatures::RewardFeatures => (0..ns)
            .map(|s| {
                let mut f = mdp.feature(s).to_vec();
                f.push(1.0);
                f
            })
            .collect(),
    }
}

/// Sufficient statistics for the softmax-linear cloning objective.
pub struct SoftmaxData<'a> {
    counts: &'a [Vec<f64>],
    psi: &'a [Vec<f64>],
    n: f64,
    pub dim: usize,
    n_actions: usize,
}

impl<'a> SoftmaxData<'a> {
    pub fn new(counts: &'a [Vec<f64>], psi: &'a [Vec<f64>]) -> Self {
        let n = counts.iter().flatten().sum();
        SoftmaxData {
            counts,
            psi,
            n,
            dim: psi.first().map_or(0, Vec::len),
            n_actions: counts.first().map_or(0, Vec::len),
        }
    }

    fn logits(&self, theta: &[f64], psi: &[f64]) -> Vec<f64> {
        (0..self.n_actions)
            .map(|a| crate::mdp::dot(&theta[a * self.dim..(a + 1) * self.dim], psi))
            .collect()
    }

    pub fn probs(&self, theta: &[f64], psi: &[f64]) -> Vec<f64> {
        let z = self.logits(theta, psi);
        let m = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let e: Vec<f64> = z.iter().map(|x| (x - m).exp()).collect();
        let s: f64 = e.iter().sum();
        e.into_iter().map(|x| x / s).collect()
    }

    /// Mean negative log-likelihood plus `l2/2 ‖θ‖²`, and its gradient.
    pub fn nll_and_grad(&self, theta: &[f64], l2: f64) -> (f64, Vec<f64>) {
        let mut nll = 0.0;
        let mut grad = vec![0.0; theta.len()];
        for (c, psi) in self.counts.iter().zip(self.psi) {
            let total: f64 = c.iter().sum();
            if total == 0.0 {
                continue;
            }
            let z = self.logits(theta, psi);
            let m = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let lse = m + z.iter().map(|x| (x - m).exp()).sum::<f64>().ln();
            for a in 0..self.n_actions {
                nll += c[a] * (lse - z[a]);
                let coef = total * (z[a] - lse).exp() - c[a];
                for (g, x) in grad[a * self.dim..(a + 1) * self.dim].iter_mut().zip(psi) {
                    *g += coef * x;
                }
            }
        }
        let inv = 1.0 / self.n;
        let reg: f64 = theta.iter().map(|t| t * t).sum::<f64>() * 0.5 * l2;
        for (g, t) in grad.iter_mut().zip(theta) {
            *g = *g * inv + l2 * t;
        }
        (nll * inv + reg, grad)
    }
}

/// ε-greedy around a deterministic action map, sampled so that the
/// exploration event `u_noise < ε` is monotone in ε for a shared stream.
#[derive(Clone, Debug, PartialEq)]
pub struct EpsilonGreedy {
    greedy: Vec<usize>,
    n_actions: usize,
    epsilon: f64,
}

impl EpsilonGreedy {
    pub fn new(base: &Policy, epsilon: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&epsilon) {
            return Err(DrexError::Domain(format!(
                "epsilon {epsilon} outside [0,1]"
            )));
        }
        Ok(EpsilonGreedy {
            greedy: base.greedy_actions(),
            n_actions: base.n_actions(),
            epsilon,
        })
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }

    /// Closed-form tabular equivalent.
    pub fn to_policy(&self) -> Policy {
        let na = self.n_actions as f64;
        let rows = self
            .greedy
            .iter()
            .map(|&g| {
                let mut row = vec![self.epsilon / na; self.n_actions];
                row[g] = 1.0 - self.epsilon + self.epsilon / na;
                row
            })
            .collect();
        Policy::new(self.n_actions, rows, Provenance::EpsilonWrapped)
            .expect("closed-form rows sum to one")
    }
}

impl ActionSampler for EpsilonGreedy {
    fn n_actions(&self) -> usize {
        self.n_actions
    }

    fn sample_action(&self, s: usize, u_noise: f64, u_act: f64) -> usize {
        if u_noise < self.epsilon {
            ((u_act * self.n_actions as f64) as usize).min(self.n_actions - 1)
        } else {
            self.greedy[s]
        }
    }
}

/// `π(a*|s) = 1 − ε + ε/|A|`, `π(a|s) = ε/|A|` otherwise, where `a*` is the
/// base policy's most probable action.
pub fn epsilon_greedy_wrap(policy: &Policy, epsilon: f64) -> Result<Policy> {
    Ok(EpsilonGreedy::new(policy, epsilon)?.to_policy())
}

/// Rollouts generated at one noise level.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LevelRollouts {
    pub epsilon: f64,
    pub trajectories: Vec<Trajectory>,
}

/// How rollout seeds relate across noise levels.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SeedSharing {
    /// Every `(level, rollout)` pair has its own stream.
    Independent,
    /// Rollout `k` reuses the same stream at every level.
    CommonRandomNumbers,
}

/// `K` rollouts of `π_BC(·|ε)` per level, ordered by `(level, rollout)`.
pub fn noisy_rollouts(
    bc: &Policy,
    mdp: &Mdp,
    levels: &[f64],
    per_level: usize,
    len: usize,
    seed: u64,
    sharing: SeedSharing,
    workers: usize,
) -> Result<Vec<LevelRollouts>> {
    mdp.check_policy(bc)?;
    let samplers = levels
        .iter()
        .map(|&e| EpsilonGreedy::new(bc, e))
        .collect::<Result<Vec<_>>>()?;
    let flat = par_map(workers, levels.len() * per_level, |idx| {
        let (li, k) = (idx / per_level, idx % per_level);
        let tags: &[u64] = match sharing {
            SeedSharing::Independent => &[li as u64, k as u64],
            SeedSharing::CommonRandomNumbers => &[k as u64],
        };
        let s = derive_seed(seed, tags);
        let mut rng = rng_from(s, &[]);
        let mut tau = rollout(mdp, &samplers[li], len, &mut rng);
        tau.noise_level = Some(levels[li]);
        tau.seed = Some(s);
        tau
    });
    let mut it = flat.into_iter();
    Ok(levels
        .iter()
        .map(|&epsilon| LevelRollouts {
            epsilon,
            trajectories: it.by_ref().take(per_level).collect(),
        })
        .collect())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DegradationRow {
    pub epsilon: f64,
    pub mean_return: f64,
    pub std_return: f64,
    pub n_rollouts: usize,
}

impl DegradationRow {
    pub fn std_err(&self) -> f64 {
        self.std_return / (self.n_rollouts as f64).sqrt()
    }
}

/// Monte Carlo mean and sample standard deviation of the true discounted
/// return per noise level. Rollout `k` shares its random stream across
/// levels, so adjacent means differ mostly by the effect of ε.
pub fn degradation_curve(
    bc: &Policy,
    mdp: &Mdp,
    schedule: &NoiseSchedule,
    rollouts: usize,
    len: usize,
    seed: u64,
    workers: usize,
) -> Result<Vec<DegradationRow>> {
    let groups = noisy_rollouts(
        bc,
        mdp,
        schedule.levels(),
        rollouts,
        len,
        seed,
        SeedSharing::CommonRandomNumbers,
        workers,
    )?;
    let r = mdp.true_reward();
    groups
        .iter()
        .map(|g| {
            let returns = g
                .trajectories
                .iter()
                .map(|t| trajectory_return(t, &r, mdp.discount()))
                .collect::<Result<Vec<_>>>()?;
            let (mean, std) = crate::stats::mean_std(&returns);
            Ok(DegradationRow {
                epsilon: g.epsilon,
                mean_return: mean,
                std_return: std,
                n_rollouts: returns.len(),
            })
        })
        .collect()
}

/// Probability that the clone picks an optimal action, weighted by the
/// clone's own state visitation over `len` steps.
pub fn estimate_beta(mdp: &Mdp, clone: &Policy, len: usize) -> Result<f64> {
    let r = mdp.true_reward();
    let (vf, _) = value_iteration(mdp, &r, 1e-10, 100_000)?;
    let opt = optimal_action_sets(mdp, &vf.v);
    let occ = state_occupancy_with_discount(mdp, clone, Horizon::Finite(len), 1.0)?;
    let total: f64 = occ.iter().sum();
    let agree: f64 = occ
        .iter()
        .enumerate()
        .map(|(s, &d)| d * opt[s].iter().map(|&a| clone.probs(s)[a]).sum::<f64>())
        .sum();
    Ok(agree / total)
}

/// Stay-in-place rollouts: each step takes the action most likely to leave
/// the state unchanged.
pub fn noop_trajectories(
    mdp: &Mdp,
    count: usize,
    len: usize,
    seed: u64,
    rank_level: f64,
) -> Vec<Trajectory> {
    let stay: Vec<usize> = (0..mdp.n_states())
        .map(|s| {
            let p: Vec<f64> = (0..mdp.n_actions())
                .map(|a| mdp.transition(s, a)[s])
                .collect();
            argmax_lowest(&p)
        })
        .collect();
    let pi = Policy::deterministic(&stay, mdp.n_actions(), Provenance::Learned)
        .expect("actions in range");
    (0..count)
        .map(|i| {
            let s = derive_seed(seed, &[i as u64]);
            let mut tau = rollout(mdp, &pi, len, &mut rng_from(s, &[]));
            tau.noise_level = Some(rank_level);
            tau.seed = Some(s);
            tau
        })
        .collect()
}
