//! Reward learning from ranked pairs: linear and MLP state rewards, the
//! pairwise logistic ranking loss with analytic gradients, minibatch training
//! with early stopping, and extrapolation reports.

mod loss;
mod model;
mod report;
mod train;

pub use loss::{
    encode_pairs, loss_and_gradient, mean_loss, pair_loss, pairwise_loss, ranking_accuracy,
    softplus, EncodedPair, ScoreMode, StateCounts,
};
pub use model::{Mlp, ModelKind, ModelSpec, RewardModel};
pub use report::{
    extrapolation_report, predicted_return, CorrelationRow, ExtrapolationReport, ExtrapolationRow,
};
pub use train::{train_reward, CurvePoint, Optimizer, TrainConfig, TrainReport};
