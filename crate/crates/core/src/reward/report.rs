use serde::{Deserialize, Serialize};

use crate::error::{DrexError, Result};
use crate::mdp::{Mdp, Trajectory};
use crate::reward::{RewardModel, ScoreMode, StateCounts};
use crate::stats::{pearson, spearman};

/// Predicted return of `tau` under `model`.
pub fn predicted_return(
    model: &RewardModel,
    features: &[Vec<f64>],
    tau: &Trajectory,
    mode: ScoreMode,
) -> f64 {
    StateCounts::from_states(tau.states(), mode).score(&model.state_rewards(features))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExtrapolationRow {
    pub set: String,
    pub ground_truth_return: f64,
    pub predicted_return: f64,
    pub normalized_predicted_return: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CorrelationRow {
    /// A set name or `pooled`.
    pub set: String,
    pub n: usize,
    /// `None` when either side is constant.
    pub pearson: Option<f64>,
    pub spearman: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExtrapolationReport {
    pub rows: Vec<ExtrapolationRow>,
    pub correlations: Vec<CorrelationRow>,
}

impl ExtrapolationReport {
    pub fn pooled(&self) -> &CorrelationRow {
        self.correlations
            .last()
            .expect("pooled row is always present")
    }
}

/// Ground-truth versus predicted returns per trajectory set, both as
/// undiscounted sums. Predictions are min-max rescaled onto the pooled
/// ground-truth range before reporting; correlations are per set and pooled.
pub fn extrapolation_report(
    model: &RewardModel,
    mdp: &Mdp,
    sets: &[(String, Vec<Trajectory>)],
) -> Result<ExtrapolationReport> {
    if sets.is_empty() {
        return Err(DrexError::EmptyDataset("extrapolation sets"));
    }
    if sets.iter().any(|(_, t)| t.is_empty()) {
        return Err(DrexError::EmptyDataset("extrapolation trajectory set"));
    }
    let truth = mdp.true_reward();
    let pred = model.state_rewards(mdp.features());
    let mut rows = Vec::new();
    for (name, trajs) in sets {
        for tau in trajs {
            mdp.check_trajectory(tau)?;
            let c = StateCounts::from_states(tau.states(), ScoreMode::Sum);
            rows.push(ExtrapolationRow {
                set: name.clone(),
                ground_truth_return: c.score(&truth),
                predicted_return: c.score(&pred),
                normalized_predicted_return: 0.0,
            });
        }
    }
    let range = |f: fn(&ExtrapolationRow) -> f64| {
        rows.iter()
            .map(f)
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), x| {
                (lo.min(x), hi.max(x))
            })
    };
    let (g_lo, g_hi) = range(|r| r.ground_truth_return);
    let (p_lo, p_hi) = range(|r| r.predicted_return);
    for r in &mut rows {
        r.normalized_predicted_return = if p_hi > p_lo {
            g_lo + (r.predicted_return - p_lo) / (p_hi - p_lo) * (g_hi - g_lo)
        } else {
            (g_lo + g_hi) / 2.0
        };
    }
    let corr = |set: String, sel: &[&ExtrapolationRow]| {
        let g: Vec<f64> = sel.iter().map(|r| r.ground_truth_return).collect();
        let p: Vec<f64> = sel.iter().map(|r| r.normalized_predicted_return).collect();
        CorrelationRow {
            set,
            n: sel.len(),
            pearson: pearson(&g, &p),
            spearman: spearman(&g, &p),
        }
    };
    let mut correlations: Vec<CorrelationRow> = sets
        .iter()
        .map(|(name, _)| {
            let sel: Vec<&ExtrapolationRow> = rows.iter().filter(|r| &r.set == name).collect();
            corr(name.clone(), &sel)
        })
        .collect();
    let all: Vec<&ExtrapolationRow> = rows.iter().collect();
    correlations.push(corr("pooled".into(), &all));
    Ok(ExtrapolationReport { rows, correlations })
}
