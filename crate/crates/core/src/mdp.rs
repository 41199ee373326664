//! Tabular MDP substrate: dynamics, state features, the true linear reward,
//! trajectories, returns, and exact feature expectations.
//!
//! Rewards are per state, `R(s) = w·φ(s)`, and a trajectory's return counts
//! every visited state including `s₀`: `J(τ|R) = Σ_t γ^t R(s_t)`. Actions are
//! recorded for cloning but never enter a return.

use nalgebra::{DMatrix, DVector};
use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::error::{DrexError, Result};
use crate::rng::{sample_index, Rng};
use crate::solvers::{ActionSampler, Policy};

const ROW_SUM_TOL: f64 = 1e-9;

#[derive(Clone, Debug, PartialEq)]
pub struct Mdp {
    n_states: usize,
    n_actions: usize,
    /// Row-major `P[s][a][s']`.
    transitions: Vec<f64>,
    features: Vec<Vec<f64>>,
    true_weights: Vec<f64>,
    /// Factor applied to the supplied weights to bring `‖w*‖₁` to at most 1.
    weight_scale: f64,
    discount: f64,
    horizon: Option<usize>,
    initial_distribution: Vec<f64>,
}

/// How far ahead an exact evaluation looks.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Horizon {
    Infinite,
    Finite(usize),
}

/// On-disk MDP schema.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MdpFile {
    pub states: usize,
    pub actions: usize,
    /// Flattened `P[s][a][s']`, row-major, length `states·actions·states`.
    pub transitions: Vec<f64>,
    /// One feature row per state.
    pub features: Vec<Vec<f64>>,
    pub weights: Vec<f64>,
    pub gamma: f64,
    #[serde(default)]
    pub horizon: Option<usize>,
    pub initial_distribution: Vec<f64>,
}

impl Mdp {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        n_states: usize,
        n_actions: usize,
        transitions: Vec<f64>,
        features: Vec<Vec<f64>>,
        true_weights: Vec<f64>,
        discount: f64,
        horizon: Option<usize>,
        initial_distribution: Vec<f64>,
    ) -> Result<Self> {
        let file = MdpFile {
            states: n_states,
            actions: n_actions,
            transitions,
            features,
            weights: true_weights,
            gamma: discount,
            horizon,
            initial_distribution,
        };
        Mdp::from_file(file, None)
    }

    fn from_file(f: MdpFile, src: Option<&str>) -> Result<Self> {
        let loc = |field: &str, detail: String| -> String {
            match src.and_then(|text| line_of_key(text, field)) {
                Some(line) => format!("line {line} (`{field}`{detail})"),
                None => format!("`{field}`{detail}"),
            }
        };
        if f.states == 0 {
            return Err(DrexError::mdp(
                loc("states", String::new()),
                "must be at least 1",
            ));
        }
        if f.actions == 0 {
            return Err(DrexError::mdp(
                loc("actions", String::new()),
                "must be at least 1",
            ));
        }
        let (ns, na) = (f.states, f.actions);
        if f.transitions.len() != ns * na * ns {
            return Err(DrexError::mdp(
                loc("transitions", String::new()),
                format!(
                    "expected {} entries, found {}",
                    ns * na * ns,
                    f.transitions.len()
                ),
            ));
        }
        for s in 0..ns {
            for a in 0..na {
                let row = &f.transitions[(s * na + a) * ns..(s * na + a + 1) * ns];
                if let Some(p) = row.iter().find(|p| !p.is_finite() || **p < 0.0) {
                    return Err(DrexError::mdp(
                        loc("transitions", format!(", s={s} a={a}")),
                        format!("invalid probability {p}"),
                    ));
                }
                let sum: f64 = row.iter().sum();
                if (sum - 1.0).abs() > ROW_SUM_TOL {
                    return Err(DrexError::mdp(
                        loc("transitions", format!(", s={s} a={a}")),
                        format!("row sums to {sum}, expected 1"),
                    ));
                }
            }
        }
        if f.features.len() != ns {
            return Err(DrexError::mdp(
                loc("features", String::new()),
                format!("expected {ns} rows, found {}", f.features.len()),
            ));
        }
        let d = f.weights.len();
        if d == 0 {
            return Err(DrexError::mdp(
                loc("weights", String::new()),
                "empty weight vector",
            ));
        }
        for (s, row) in f.features.iter().enumerate() {
            if row.len() != d {
                return Err(DrexError::mdp(
                    loc("features", format!(", state {s}")),
                    format!("expected {d} features, found {}", row.len()),
                ));
            }
            if row.iter().any(|x| !x.is_finite()) {
                return Err(DrexError::mdp(
                    loc("features", format!(", state {s}")),
                    "non-finite feature",
                ));
            }
        }
        if f.weights.iter().any(|x| !x.is_finite()) {
            return Err(DrexError::mdp(
                loc("weights", String::new()),
                "non-finite weight",
            ));
        }
        if !(0.0..1.0).contains(&f.gamma) {
            return Err(DrexError::mdp(
                loc("gamma", String::new()),
                format!("discount {} must lie in [0, 1)", f.gamma),
            ));
        }
        if f.horizon == Some(0) {
            return Err(DrexError::mdp(
                loc("horizon", String::new()),
                "horizon must be positive",
            ));
        }
        if f.initial_distribution.len() != ns {
            return Err(DrexError::mdp(
                loc("initial_distribution", String::new()),
                format!(
                    "expected {ns} entries, found {}",
                    f.initial_distribution.len()
                ),
            ));
        }
        if f.initial_distribution
            .iter()
            .any(|p| !p.is_finite() || *p < 0.0)
            || (f.initial_distribution.iter().sum::<f64>() - 1.0).abs() > ROW_SUM_TOL
        {
            return Err(DrexError::mdp(
                loc("initial_distribution", String::new()),
                "must be a probability vector",
            ));
        }

        let l1: f64 = f.weights.iter().map(|w| w.abs()).sum();
        let weight_scale = if l1 > 1.0 { 1.0 / l1 } else { 1.0 };
        Ok(Mdp {
            n_states: ns,
            n_actions: na,
            transitions: f.transitions,
            features: f.features,
            true_weights: f.weights.iter().map(|w| w * weight_scale).collect(),
            weight_scale,
            discount: f.gamma,
            horizon: f.horizon,
            initial_distribution: f.initial_distribution,
        })
    }

    /// Parses and validates the JSON schema, reporting the offending line.
    pub fn from_json_str(text: &str) -> Result<Self> {
        let file: MdpFile = serde_json::from_str(text).map_err(|e| {
            DrexError::mdp(
                format!("line {} column {}", e.line(), e.column()),
                e.to_string(),
            )
        })?;
        Mdp::from_file(file, Some(text))
    }

    pub fn load(path: &std::path::Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Mdp::from_json_str(&text)
    }

    pub fn to_file(&self) -> MdpFile {
        MdpFile {
            states: self.n_states,
            actions: self.n_actions,
            transitions: self.transitions.clone(),
            features: self.features.clone(),
            // the weights as supplied, before normalisation
            weights: self
                .true_weights
                .iter()
                .map(|w| w / self.weight_scale)
                .collect(),
            gamma: self.discount,
            horizon: self.horizon,
            initial_distribution: self.initial_distribution.clone(),
        }
    }

    pub fn to_json_string(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(&self.to_file())?)
    }

    pub fn n_states(&self) -> usize {
        self.n_states
    }

    pub fn n_actions(&self) -> usize {
        self.n_actions
    }

    pub fn feature_dim(&self) -> usize {
        self.true_weights.len()
    }

    pub fn discount(&self) -> f64 {
        self.discount
    }

    pub fn horizon(&self) -> Option<usize> {
        self.horizon
    }

    /// Finite horizon when the MDP declares one, otherwise infinite.
    pub fn evaluation_horizon(&self) -> Horizon {
        self.horizon.map_or(Horizon::Infinite, Horizon::Finite)
    }

    pub fn initial_distribution(&self) -> &[f64] {
        &self.initial_distribution
    }

    pub fn transition(&self, s: usize, a: usize) -> &[f64] {
        let ns = self.n_states;
        let start = (s * self.n_actions + a) * ns;
        &self.transitions[start..start + ns]
    }

    pub fn feature(&self, s: usize) -> &[f64] {
        &self.features[s]
    }

    pub fn features(&self) -> &[Vec<f64>] {
        &self.features
    }

    pub fn true_weights(&self) -> &[f64] {
        &self.true_weights
    }

    pub fn weight_scale(&self) -> f64 {
        self.weight_scale
    }

    /// `R(s) = w·φ(s)` for every state.
    pub fn reward_from_weights(&self, w: &[f64]) -> Vec<f64> {
        self.features.iter().map(|phi| dot(phi, w)).collect()
    }

    pub fn true_reward(&self) -> Vec<f64> {
        self.reward_from_weights(&self.true_weights)
    }

    /// Same dynamics and features with a different true weight vector.
    pub fn with_true_weights(&self, w: Vec<f64>) -> Result<Self> {
        let mut f = self.to_file();
        f.weights = w;
        Mdp::from_file(f, None)
    }

    /// `(P_a V)(s) = Σ_{s'} P(s'|s,a) V(s')`.
    pub fn expected_next(&self, s: usize, a: usize, v: &[f64]) -> f64 {
        dot(self.transition(s, a), v)
    }

    /// State-to-state matrix under `π`, `P_π[s][s'] = Σ_a π(a|s) P(s'|s,a)`.
    pub fn policy_transition_matrix(&self, policy: &Policy) -> Vec<Vec<f64>> {
        let ns = self.n_states;
        (0..ns)
            .map(|s| {
                let mut row = vec![0.0; ns];
                for (a, &pa) in policy.probs(s).iter().enumerate() {
                    if pa == 0.0 {
                        continue;
                    }
                    for (r, &p) in row.iter_mut().zip(self.transition(s, a)) {
                        *r += pa * p;
                    }
                }
                row
            })
            .collect()
    }

    pub fn check_policy(&self, policy: &Policy) -> Result<()> {
        if policy.n_states() != self.n_states || policy.n_actions() != self.n_actions {
            return Err(DrexError::InvalidPolicy(format!(
                "policy is {}x{}, MDP is {}x{}",
                policy.n_states(),
                policy.n_actions(),
                self.n_states,
                self.n_actions
            )));
        }
        Ok(())
    }

    pub fn check_trajectory(&self, tau: &Trajectory) -> Result<()> {
        tau.validate(self.n_states, self.n_actions)?;
        if let Some(h) = self.horizon {
            if tau.len() > h {
                return Err(DrexError::InvalidTrajectory(format!(
                    "length {} exceeds horizon {h}",
                    tau.len()
                )));
            }
        }
        Ok(())
    }
}

fn line_of_key(text: &str, key: &str) -> Option<usize> {
    let needle = format!("\"{key}\"");
    text.lines()
        .position(|l| l.contains(&needle))
        .map(|i| i + 1)
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// A rollout `(s₀,a₀), (s₁,a₁), …` with generation provenance.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub steps: Vec<(usize, usize)>,
    #[serde(default)]
    pub noise_level: Option<f64>,
    #[serde(default)]
    pub seed: Option<u64>,
}

impl Trajectory {
    pub fn new(steps: Vec<(usize, usize)>) -> Self {
        Trajectory {
            steps,
            noise_level: None,
            seed: None,
        }
    }

    /// A trajectory built from states alone; actions are recorded as 0.
    pub fn from_states(states: &[usize]) -> Self {
        Trajectory::new(states.iter().map(|&s| (s, 0)).collect())
    }

    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }

    pub fn states(&self) -> impl Iterator<Item = usize> + '_ {
        self.steps.iter().map(|&(s, _)| s)
    }

    pub fn validate(&self, n_states: usize, n_actions: usize) -> Result<()> {
        if self.steps.is_empty() {
            return Err(DrexError::InvalidTrajectory("empty trajectory".into()));
        }
        if let Some((t, &(s, a))) = self
            .steps
            .iter()
            .enumerate()
            .find(|(_, &(s, a))| s >= n_states || a >= n_actions)
        {
            return Err(DrexError::InvalidTrajectory(format!(
                "step {t}: (state {s}, action {a}) out of range"
            )));
        }
        if let Some(eps) = self.noise_level {
            if !(0.0..=1.0).contains(&eps) && eps != crate::ranking::NOOP_RANK_LEVEL {
                return Err(DrexError::InvalidTrajectory(format!(
                    "noise level {eps} outside [0,1]"
                )));
            }
        }
        Ok(())
    }

    /// Discounted state-feature counts `Σ_t γ^t φ(s_t)` along this trajectory.
    pub fn feature_counts(&self, mdp: &Mdp, discount: f64) -> Vec<f64> {
        let mut out = vec![0.0; mdp.feature_dim()];
        let mut g = 1.0;
        for s in self.states() {
            for (o, &x) in out.iter_mut().zip(mdp.feature(s)) {
                *o += g * x;
            }
            g *= discount;
        }
        out
    }
}

/// `J(τ|R) = Σ_t γ^t R(s_t)`.
pub fn trajectory_return(tau: &Trajectory, reward: &[f64], discount: f64) -> Result<f64> {
    if tau.is_empty() {
        return Err(DrexError::InvalidTrajectory("empty trajectory".into()));
    }
    let mut total = 0.0;
    let mut g = 1.0;
    for (t, s) in tau.states().enumerate() {
        let r = reward.get(s).ok_or_else(|| {
            DrexError::InvalidTrajectory(format!("step {t}: state {s} has no reward entry"))
        })?;
        total += g * r;
        g *= discount;
    }
    Ok(total)
}

/// `J(D|R)`: the mean trajectory return over a demonstration set.
pub fn dataset_return(demos: &[Trajectory], reward: &[f64], discount: f64) -> Result<f64> {
    if demos.is_empty() {
        return Err(DrexError::EmptyDataset("demonstration set"));
    }
    let mut sum = 0.0;
    for tau in demos {
        sum += trajectory_return(tau, reward, discount)?;
    }
    Ok(sum / demos.len() as f64)
}

/// Discounted feature counts `Φ`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FeatureExpectations(pub Vec<f64>);

impl FeatureExpectations {
    pub fn dot(&self, w: &[f64]) -> f64 {
        dot(&self.0, w)
    }

    pub fn sub(&self, other: &FeatureExpectations) -> Vec<f64> {
        self.0.iter().zip(&other.0).map(|(a, b)| a - b).collect()
    }

    pub fn sup_distance(&self, other: &FeatureExpectations) -> f64 {
        self.sub(other).iter().fold(0.0, |m, x| m.max(x.abs()))
    }
}

/// Discounted state occupancy `Σ_t γ^t Pr(s_t = s)` under `π` from the
/// initial distribution.
pub fn state_occupancy(mdp: &Mdp, policy: &Policy, horizon: Horizon) -> Result<Vec<f64>> {
    state_occupancy_with_discount(mdp, policy, horizon, mdp.discount())
}

/// As [`state_occupancy`] with an explicit discount; `discount = 1` is only
/// meaningful for a finite horizon.
pub fn state_occupancy_with_discount(
    mdp: &Mdp,
    policy: &Policy,
    horizon: Horizon,
    discount: f64,
) -> Result<Vec<f64>> {
    mdp.check_policy(policy)?;
    let ns = mdp.n_states();
    let p_pi = mdp.policy_transition_matrix(policy);
    match horizon {
        Horizon::Finite(t_max) => {
            let mut dist = mdp.initial_distribution().to_vec();
            let mut occ = vec![0.0; ns];
            let mut g = 1.0;
            for t in 0..t_max {
                for (o, d) in occ.iter_mut().zip(&dist) {
                    *o += g * d;
                }
                if t + 1 == t_max {
                    break;
                }
                let mut next = vec![0.0; ns];
                for (s, &ds) in dist.iter().enumerate() {
                    if ds == 0.0 {
                        continue;
                    }
                    for (n, &p) in next.iter_mut().zip(&p_pi[s]) {
                        *n += ds * p;
                    }
                }
                dist = next;
                g *= discount;
            }
            Ok(occ)
        }
        Horizon::Infinite => {
            if discount >= 1.0 {
                return Err(DrexError::Domain(
                    "infinite horizon needs discount < 1".into(),
                ));
            }
            // (I - γ P_πᵀ) x = μ₀
            let a = DMatrix::from_fn(ns, ns, |i, j| {
                let id = if i == j { 1.0 } else { 0.0 };
                id - discount * p_pi[j][i]
            });
            let b = DVector::from_column_slice(mdp.initial_distribution());
            let x = a.lu().solve(&b).ok_or(DrexError::SingularSystem)?;
            Ok(x.iter().copied().collect())
        }
    }
}

/// Exact `Φ_π` under the given horizon.
pub fn policy_feature_expectations(
    policy: &Policy,
    mdp: &Mdp,
    horizon: Horizon,
) -> Result<FeatureExpectations> {
    let occ = state_occupancy(mdp, policy, horizon)?;
    Ok(occupancy_features(mdp, &occ))
}

pub(crate) fn occupancy_features(mdp: &Mdp, occ: &[f64]) -> FeatureExpectations {
    let mut phi = vec![0.0; mdp.feature_dim()];
    for (s, &o) in occ.iter().enumerate() {
        for (p, &x) in phi.iter_mut().zip(mdp.feature(s)) {
            *p += o * x;
        }
    }
    FeatureExpectations(phi)
}

/// Exact `J(π|R)` for an arbitrary state reward.
pub fn policy_return(mdp: &Mdp, policy: &Policy, reward: &[f64], horizon: Horizon) -> Result<f64> {
    Ok(dot(&state_occupancy(mdp, policy, horizon)?, reward))
}

/// Samples one trajectory of `len` steps.
///
/// Each step consumes exactly four uniforms (noise, action, transition, and
/// one spare), keeping streams from different samplers aligned step by step.
pub fn rollout<P: ActionSampler + ?Sized>(
    mdp: &Mdp,
    sampler: &P,
    len: usize,
    rng: &mut Rng,
) -> Trajectory {
    let mut s = sample_index(mdp.initial_distribution(), rng.random::<f64>());
    let mut steps = Vec::with_capacity(len);
    for _ in 0..len {
        let u_noise: f64 = rng.random();
        let u_act: f64 = rng.random();
        let u_next: f64 = rng.random();
        let _spare: f64 = rng.random();
        let a = sampler.sample_action(s, u_noise, u_act);
        steps.push((s, a));
        s = sample_index(mdp.transition(s, a), u_next);
    }
    Trajectory::new(steps)
}
