//! CSV artifacts. Floats use Rust's shortest round-trip formatting, so equal
//! values always produce identical bytes.

use std::path::Path;

use crate::cloning::DegradationRow;
use crate::error::{DrexError, Result};
use crate::pipeline::stages::SummaryRow;
use crate::reward::{ExtrapolationReport, TrainReport};
use crate::theory::{GapCheckRow, RecurrenceRow, SweepRow};

pub const SUMMARY_HEADER: [&str; 8] = [
    "method",
    "seed_policy",
    "mean_return",
    "std_return",
    "best_return",
    "worst_return",
    "beats_demo_avg",
    "beats_demo_best",
];
pub const DEGRADATION_HEADER: [&str; 4] = ["epsilon", "mean_return", "std_return", "n_rollouts"];
pub const TRAINING_HEADER: [&str; 3] = ["epoch", "train_loss", "val_loss"];
pub const EXTRAPOLATION_HEADER: [&str; 4] = [
    "set",
    "ground_truth_return",
    "predicted_return",
    "normalized_predicted_return",
];
pub const CORRELATION_HEADER: [&str; 4] = ["set", "n", "pearson", "spearman"];
pub const AMBIGUITY_HEADER: [&str; 3] = ["n_constraints", "volume_fraction", "std_err"];
pub const RECURRENCE_HEADER: [&str; 3] = ["k", "mean_remaining", "predicted_J0_over_2k"];
pub const GAP_HEADER: [&str; 5] = ["epsilon", "beta_hat", "gap", "bound", "within"];

fn write_csv<const N: usize>(path: &Path, header: [&str; N], rows: Vec<[String; N]>) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(header)?;
    for r in rows {
        w.write_record(&r)?;
    }
    w.flush()?;
    Ok(())
}

fn f(x: f64) -> String {
    format!("{x}")
}

fn opt(x: Option<f64>) -> String {
    x.map_or_else(|| "undefined".to_string(), f)
}

pub fn write_summary(path: &Path, rows: &[SummaryRow]) -> Result<()> {
    if rows.is_empty() {
        return Err(DrexError::EmptyDataset("summary rows"));
    }
    write_csv(
        path,
        SUMMARY_HEADER,
        rows.iter()
            .map(|r| {
                [
                    r.method.clone(),
                    r.seed_policy.clone(),
                    f(r.mean_return),
                    f(r.std_return),
                    f(r.best_return),
                    f(r.worst_return),
                    r.beats_demo_avg.to_string(),
                    r.beats_demo_best.to_string(),
                ]
            })
            .collect(),
    )
}

pub fn write_degradation(path: &Path, rows: &[DegradationRow]) -> Result<()> {
    write_csv(
        path,
        DEGRADATION_HEADER,
        rows.iter()
            .map(|r| {
                [
                    f(r.epsilon),
                    f(r.mean_return),
                    f(r.std_return),
                    r.n_rollouts.to_string(),
                ]
            })
            .collect(),
    )
}

pub fn write_training_curve(path: &Path, report: &TrainReport) -> Result<()> {
    write_csv(
        path,
        TRAINING_HEADER,
        report
            .curve
            .iter()
            .map(|p| [p.epoch.to_string(), f(p.train_loss), f(p.val_loss)])
            .collect(),
    )
}

pub fn write_extrapolation(path: &Path, report: &ExtrapolationReport) -> Result<()> {
    write_csv(
        path,
        EXTRAPOLATION_HEADER,
        report
            .rows
            .iter()
            .map(|r| {
                [
                    r.set.clone(),
                    f(r.ground_truth_return),
                    f(r.predicted_return),
                    f(r.normalized_predicted_return),
                ]
            })
            .collect(),
    )
}

pub fn write_correlation(path: &Path, report: &ExtrapolationReport) -> Result<()> {
    write_csv(
        path,
        CORRELATION_HEADER,
        report
            .correlations
            .iter()
            .map(|c| {
                [
                    c.set.clone(),
                    c.n.to_string(),
                    opt(c.pearson),
                    opt(c.spearman),
                ]
            })
            .collect(),
    )
}

pub fn write_ambiguity(path: &Path, rows: &[SweepRow]) -> Result<()> {
    write_csv(
        path,
        AMBIGUITY_HEADER,
        rows.iter()
            .map(|r| {
                [
                    r.n_constraints.to_string(),
                    f(r.volume_fraction),
                    f(r.std_err),
                ]
            })
            .collect(),
    )
}

pub fn write_recurrence(path: &Path, rows: &[RecurrenceRow]) -> Result<()> {
    write_csv(
        path,
        RECURRENCE_HEADER,
        rows.iter()
            .map(|r| {
                [
                    r.k.to_string(),
                    f(r.mean_remaining),
                    f(r.predicted_j0_over_2k),
                ]
            })
            .collect(),
    )
}

pub fn write_gap_check(path: &Path, rows: &[GapCheckRow]) -> Result<()> {
    write_csv(
        path,
        GAP_HEADER,
        rows.iter()
            .map(|r| {
                [
                    f(r.epsilon),
                    f(r.beta_hat),
                    f(r.gap),
                    f(r.bound),
                    r.within.to_string(),
                ]
            })
            .collect(),
    )
}
