use serde::{Deserialize, Serialize};

use crate::error::{DrexError, Result};
use crate::rng::sample_index;

const ROW_SUM_TOL: f64 = 1e-9;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Provenance {
    Optimal,
    Truncated,
    Softmax,
    Cloned,
    EpsilonWrapped,
    Learned,
    Uniform,
}

/// Tabular stochastic policy `π[s][a]`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "PolicyFile", into = "PolicyFile")]
pub struct Policy {
    n_actions: usize,
    action_probs: Vec<Vec<f64>>,
    provenance: Provenance,
}

#[derive(Serialize, Deserialize)]
struct PolicyFile {
    n_states: usize,
    n_actions: usize,
    provenance: Provenance,
    action_probs: Vec<Vec<f64>>,
}

impl TryFrom<PolicyFile> for Policy {
    type Error = DrexError;

    fn try_from(f: PolicyFile) -> Result<Self> {
        if f.action_probs.len() != f.n_states {
            return Err(DrexError::InvalidPolicy(format!(
                "n_states = {} but {} rows given",
                f.n_states,
                f.action_probs.len()
            )));
        }
        Policy::new(f.n_actions, f.action_probs, f.provenance)
    }
}

impl From<Policy> for PolicyFile {
    fn from(p: Policy) -> Self {
        PolicyFile {
            n_states: p.action_probs.len(),
            n_actions: p.n_actions,
            provenance: p.provenance,
            action_probs: p.action_probs,
        }
    }
}

impl Policy {
    pub fn new(
        n_actions: usize,
        action_probs: Vec<Vec<f64>>,
        provenance: Provenance,
    ) -> Result<Self> {
        if n_actions == 0 {
            return Err(DrexError::InvalidPolicy("no actions".into()));
        }
        for (s, row) in action_probs.iter().enumerate() {
            if row.len() != n_actions {
                return Err(DrexError::InvalidPolicy(format!(
                    "state {s}: expected {n_actions} action probabilities, got {}",
                    row.len()
                )));
            }
            if row.iter().any(|p| !p.is_finite() || *p < 0.0) {
                return Err(DrexError::InvalidPolicy(format!(
                    "state {s}: probabilities must be finite and non-negative"
                )));
            }
            let sum: f64 = row.iter().sum();
            if (sum - 1.0).abs() > ROW_SUM_TOL {
                return Err(DrexError::InvalidPolicy(format!(
                    "state {s}: probabilities sum to {sum}"
                )));
            }
        }
        Ok(Policy {
            n_actions,
            action_probs,
            provenance,
        })
    }

    pub fn deterministic(
        actions: &[usize],
        n_actions: usize,
        provenance: Provenance,
    ) -> Result<Self> {
        let rows = actions
            .iter()
            .enumerate()
            .map(|(s, &a)| {
                if a >= n_actions {
                    return Err(DrexError::InvalidPolicy(format!(
                        "state {s}: action {a} out of range"
                    )));
                }
                let mut row = vec![0.0; n_actions];
                row[a] = 1.0;
                Ok(row)
            })
            .collect::<Result<Vec<_>>>()?;
        Policy::new(n_actions, rows, provenance)
    }

    pub fn uniform(n_states: usize, n_actions: usize) -> Self {
        Policy {
            n_actions,
            action_probs: vec![vec![1.0 / n_actions as f64; n_actions]; n_states],
            provenance: Provenance::Uniform,
        }
    }

    pub fn n_states(&self) -> usize {
        self.action_probs.len()
    }

    pub fn n_actions(&self) -> usize {
        self.n_actions
    }

    pub fn provenance(&self) -> Provenance {
        self.provenance
    }

    pub fn with_provenance(mut self, provenance: Provenance) -> Self {
        self.provenance = provenance;
        self
    }

    pub fn probs(&self, s: usize) -> &[f64] {
        &self.action_probs[s]
    }

    pub fn rows(&self) -> &[Vec<f64>] {
        &self.action_probs
    }

    /// Most probable action, lowest index on ties.
    pub fn greedy_action(&self, s: usize) -> usize {
        argmax_lowest(&self.action_probs[s])
    }

    pub fn greedy_actions(&self) -> Vec<usize> {
        (0..self.n_states())
            .map(|s| self.greedy_action(s))
            .collect()
    }
}

pub(crate) fn argmax_lowest(xs: &[f64]) -> usize {
    let mut best = 0;
    for (i, &x) in xs.iter().enumerate().skip(1) {
        if x > xs[best] {
            best = i;
        }
    }
    best
}

/// Something that picks an action from two uniforms.
///
/// Rollouts always draw the same number of uniforms per step, so two samplers
/// fed the same stream stay aligned in time. `u_noise` is only consumed by
/// samplers that mix in exploration.
pub trait ActionSampler {
    fn n_actions(&self) -> usize;
    fn sample_action(&self, s: usize, u_noise: f64, u_act: f64) -> usize;
}

impl ActionSampler for Policy {
    fn n_actions(&self) -> usize {
        self.n_actions
    }

    fn sample_action(&self, s: usize, _u_noise: f64, u_act: f64) -> usize {
        sample_index(&self.action_probs[s], u_act)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_bad_rows() {
        assert!(Policy::new(2, vec![vec![0.5, 0.6]], Provenance::Learned).is_err());
        assert!(Policy::new(2, vec![vec![-0.1, 1.1]], Provenance::Learned).is_err());
        assert!(Policy::new(2, vec![vec![1.0]], Provenance::Learned).is_err());
        assert!(Policy::deterministic(&[2], 2, Provenance::Optimal).is_err());
    }

    #[test]
    fn json_round_trip_validates() {
        let p = Policy::deterministic(&[1, 0, 1], 2, Provenance::Optimal).unwrap();
        let text = serde_json::to_string(&p).unwrap();
        assert!(text.contains("\"provenance\":\"optimal\""));
        let back: Policy = serde_json::from_str(&text).unwrap();
        assert_eq!(back, p);

        let bad =
            r#"{"n_states":1,"n_actions":2,"provenance":"cloned","action_probs":[[0.9,0.9]]}"#;
        assert!(serde_json::from_str::<Policy>(bad).is_err());
    }

    #[test]
    fn greedy_prefers_lowest_index() {
        let p = Policy::new(3, vec![vec![0.4, 0.4, 0.2]], Provenance::Cloned).unwrap();
        assert_eq!(p.greedy_action(0), 0);
    }
}
