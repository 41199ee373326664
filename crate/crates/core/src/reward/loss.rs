use serde::{Deserialize, Serialize};

use crate::mdp::Trajectory;
use crate::ranking::{RankedDataset, Snippet, SnippetPair};
use crate::reward::RewardModel;
use crate::solvers::sigmoid;

/// How a state sequence is scored.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "kebab-case")]
pub enum ScoreMode {
    /// `Σ_t R̂(s_t)`.
    #[default]
    Sum,
    /// `Σ_t γ^t R̂(s_t)` with `t` counted from the first state of the sequence.
    Discounted { gamma: f64 },
}

/// Sparse state weights `c_s` such that a score is `Σ_s c_s R̂(s)`.
#[derive(Clone, Debug, PartialEq, Default)]
pub struct StateCounts(pub Vec<(usize, f64)>);

impl StateCounts {
    pub fn from_states(states: impl IntoIterator<Item = usize>, mode: ScoreMode) -> Self {
        let mut v: Vec<(usize, f64)> = Vec::new();
        let mut g = 1.0;
        for s in states {
            v.push((s, g));
            if let ScoreMode::Discounted { gamma } = mode {
                g *= gamma;
            }
        }
        v.sort_by_key(|&(s, _)| s);
        let mut merged: Vec<(usize, f64)> = Vec::with_capacity(v.len());
        for (s, c) in v {
            match merged.last_mut() {
                Some((t, acc)) if *t == s => *acc += c,
                _ => merged.push((s, c)),
            }
        }
        StateCounts(merged)
    }

    pub fn score(&self, state_rewards: &[f64]) -> f64 {
        self.0.iter().map(|&(s, c)| c * state_rewards[s]).sum()
    }

    /// `Σ_s c_s φ(s)`.
    pub fn feature_sum(&self, features: &[Vec<f64>]) -> Vec<f64> {
        let mut out = vec![0.0; features.first().map_or(0, Vec::len)];
        for &(s, c) in &self.0 {
            for (o, x) in out.iter_mut().zip(&features[s]) {
                *o += c * x;
            }
        }
        out
    }
}

/// A preference `worse ≺ better` reduced to state weights.
#[derive(Clone, Debug, PartialEq)]
pub struct EncodedPair {
    pub worse: StateCounts,
    pub better: StateCounts,
}

impl EncodedPair {
    pub fn from_trajectories(worse: &Trajectory, better: &Trajectory, mode: ScoreMode) -> Self {
        EncodedPair {
            worse: StateCounts::from_states(worse.states(), mode),
            better: StateCounts::from_states(better.states(), mode),
        }
    }

    pub fn swapped(&self) -> Self {
        EncodedPair {
            worse: self.better.clone(),
            better: self.worse.clone(),
        }
    }
}

fn encode_snippet(ds: &RankedDataset, s: &Snippet, mode: ScoreMode) -> StateCounts {
    StateCounts::from_states(s.states(ds), mode)
}

pub fn encode_pairs(
    ds: &RankedDataset,
    pairs: &[SnippetPair],
    mode: ScoreMode,
) -> Vec<EncodedPair> {
    pairs
        .iter()
        .map(|p| EncodedPair {
            worse: encode_snippet(ds, &p.worse, mode),
            better: encode_snippet(ds, &p.better, mode),
        })
        .collect()
}

/// `log(1 + eˣ)` without overflow.
pub fn softplus(x: f64) -> f64 {
    x.max(0.0) + (-x.abs()).exp().ln_1p()
}

/// `−log( e^{S_better} / (e^{S_worse} + e^{S_better}) )`.
pub fn pair_loss(s_worse: f64, s_better: f64) -> f64 {
    softplus(s_worse - s_better)
}

/// Loss of one pair under `model`.
pub fn pairwise_loss(model: &RewardModel, features: &[Vec<f64>], pair: &EncodedPair) -> f64 {
    let r = model.state_rewards(features);
    pair_loss(pair.worse.score(&r), pair.better.score(&r))
}

/// Mean loss over `pairs`.
pub fn mean_loss(model: &RewardModel, features: &[Vec<f64>], pairs: &[EncodedPair]) -> f64 {
    let r = model.state_rewards(features);
    pairs
        .iter()
        .map(|p| pair_loss(p.worse.score(&r), p.better.score(&r)))
        .sum::<f64>()
        / pairs.len() as f64
}

/// Fraction of pairs scored in the labelled order; ties count one half.
pub fn ranking_accuracy(model: &RewardModel, features: &[Vec<f64>], pairs: &[EncodedPair]) -> f64 {
    let r = model.state_rewards(features);
    pairs
        .iter()
        .map(|p| {
            let (w, b) = (p.worse.score(&r), p.better.score(&r));
            if b > w {
                1.0
            } else if b == w {
                0.5
            } else {
                0.0
            }
        })
        .sum::<f64>()
        / pairs.len() as f64
}

/// Mean loss and its gradient over a non-empty batch.
///
/// Per pair, `∂ℓ/∂θ = σ(S_worse − S_better) (∂S_worse/∂θ − ∂S_better/∂θ)`;
/// the state weights of the whole batch are folded together first so each
/// visited state is back-propagated once.
pub fn loss_and_gradient(
    model: &RewardModel,
    features: &[Vec<f64>],
    batch: &[EncodedPair],
) -> (f64, Vec<f64>) {
    assert!(!batch.is_empty(), "gradient of an empty batch");
    let ns = features.len();
    let mut reward: Vec<Option<f64>> = vec![None; ns];
    let mut r = |s: usize| *reward[s].get_or_insert_with(|| model.eval(&features[s]));
    let mut coef = vec![0.0; ns];
    let mut loss = 0.0;
    for p in batch {
        let sw: f64 = p.worse.0.iter().map(|&(s, c)| c * r(s)).sum();
        let sb: f64 = p.better.0.iter().map(|&(s, c)| c * r(s)).sum();
        loss += pair_loss(sw, sb);
        let w = sigmoid(sw - sb);
        for &(s, c) in &p.worse.0 {
            coef[s] += w * c;
        }
        for &(s, c) in &p.better.0 {
            coef[s] -= w * c;
        }
    }
    let n = batch.len() as f64;
    let mut grad = vec![0.0; model.n_params()];
    for (s, &c) in coef.iter().enumerate() {
        if c != 0.0 {
            model.accumulate_grad(&features[s], c / n, &mut grad);
        }
    }
    (loss / n, grad)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn loss_reference_values() {
        assert!((pair_loss(3.0, 3.0) - std::f64::consts::LN_2).abs() < 1e-15);
        let naive = -(1f64.exp() / (0f64.exp() + 1f64.exp())).ln();
        assert!((pair_loss(0.0, 1.0) - naive).abs() < 1e-15);
        assert!((pair_loss(0.0, 1.0) - 0.313_261_687_518_222_9).abs() < 1e-15);
        assert!(pair_loss(0.0, 50.0) < 1e-20);
        assert!(pair_loss(1e6, 0.0).is_finite());
    }

    #[test]
    fn counts_merge_repeated_states() {
        let c = StateCounts::from_states([2, 0, 2, 2], ScoreMode::Sum);
        assert_eq!(c.0, vec![(0, 1.0), (2, 3.0)]);
        let d = StateCounts::from_states([1, 1], ScoreMode::Discounted { gamma: 0.5 });
        assert_eq!(d.0, vec![(1, 1.5)]);
    }
}
