use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::error::{DrexError, Result};
use crate::reward::{
    loss_and_gradient, mean_loss, ranking_accuracy, EncodedPair, ModelSpec, RewardModel,
};
use crate::rng::{derive_seed, par_map, rng_from};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum Optimizer {
    Sgd {
        lr: f64,
    },
    Adam {
        lr: f64,
        #[serde(default = "default_beta1")]
        beta1: f64,
        #[serde(default = "default_beta2")]
        beta2: f64,
        #[serde(default = "default_adam_eps")]
        eps: f64,
    },
}

fn default_beta1() -> f64 {
    0.9
}

fn default_beta2() -> f64 {
    0.999
}

fn default_adam_eps() -> f64 {
    1e-8
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub optimizer: Optimizer,
    pub batch_size: usize,
    pub max_epochs: usize,
    /// Validation checks without improvement before stopping.
    pub patience: usize,
    pub weight_decay: f64,
    pub val_fraction: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            optimizer: Optimizer::Sgd { lr: 0.005 },
            batch_size: 32,
            max_epochs: 60,
            patience: 6,
            weight_decay: 0.0,
            val_fraction: 0.2,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_loss: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    /// One point per validation check; epoch 0 is the initial model. For
    /// ensembles this is the first member's curve.
    pub curve: Vec<CurvePoint>,
    /// Epoch whose parameters were returned.
    pub stopping_epoch: usize,
    pub best_val_loss: f64,
    /// Pairwise ranking accuracy of the returned model on validation pairs.
    pub val_accuracy: f64,
    pub updates: usize,
}

/// Minimises the mean pairwise ranking loss by minibatch gradient descent,
/// checking validation loss once per epoch and returning the parameters with
/// the lowest validation loss.
pub fn train_reward(
    train: &[EncodedPair],
    val: &[EncodedPair],
    features: &[Vec<f64>],
    spec: &ModelSpec,
    cfg: &TrainConfig,
    seed: u64,
    workers: usize,
) -> Result<(RewardModel, TrainReport)> {
    if train.is_empty() {
        return Err(DrexError::EmptyDataset("training pairs"));
    }
    if val.is_empty() {
        return Err(DrexError::Precondition("validation set is empty".into()));
    }
    spec.validate()?;
    if cfg.batch_size == 0 {
        return Err(DrexError::Precondition(
            "batch size must be at least 1".into(),
        ));
    }
    let dim = features.first().map_or(0, Vec::len);
    let mut members = par_map(workers, spec.ensemble, |k| {
        let member_seed = derive_seed(seed, &[k as u64]);
        let init = spec.init(dim, &mut rng_from(member_seed, &[0x1417]));
        train_member(init, train, val, features, cfg, member_seed)
    })
    .into_iter()
    .collect::<Result<Vec<_>>>()?;
    if members.len() == 1 {
        return Ok(members.pop().expect("one member"));
    }
    let report = members[0].1.clone();
    let model = RewardModel::Ensemble {
        members: members.into_iter().map(|(m, _)| m).collect(),
    };
    let report = TrainReport {
        best_val_loss: mean_loss(&model, features, val),
        val_accuracy: ranking_accuracy(&model, features, val),
        ..report
    };
    Ok((model, report))
}

struct Adam {
    m: Vec<f64>,
    v: Vec<f64>,
    t: i32,
}

fn train_member(
    mut model: RewardModel,
    train: &[EncodedPair],
    val: &[EncodedPair],
    features: &[Vec<f64>],
    cfg: &TrainConfig,
    seed: u64,
) -> Result<(RewardModel, TrainReport)> {
    let n = model.n_params();
    let mut theta = model.params();
    let mut adam = Adam {
        m: vec![0.0; n],
        v: vec![0.0; n],
        t: 0,
    };
    let mut rng = rng_from(seed, &[0x7A1]);
    let mut order: Vec<usize> = (0..train.len()).collect();
    let mut curve = vec![CurvePoint {
        epoch: 0,
        train_loss: mean_loss(&model, features, train),
        val_loss: mean_loss(&model, features, val),
    }];
    let mut best = (0, curve[0].val_loss, theta.clone());
    let mut stale = 0;
    let mut updates = 0;
    let mut batch = Vec::with_capacity(cfg.batch_size);
    for epoch in 1..=cfg.max_epochs {
        order.shuffle(&mut rng);
        for chunk in order.chunks(cfg.batch_size) {
            batch.clear();
            batch.extend(chunk.iter().map(|&i| train[i].clone()));
            let (loss, mut grad) = loss_and_gradient(&model, features, &batch);
            if !loss.is_finite() || grad.iter().any(|g| !g.is_finite()) {
                return Err(DrexError::TrainingDiverged {
                    update: updates,
                    last_finite: theta,
                });
            }
            for (g, t) in grad.iter_mut().zip(&theta) {
                *g += cfg.weight_decay * t;
            }
            let prev = theta.clone();
            match cfg.optimizer {
                Optimizer::Sgd { lr } => {
                    for (t, g) in theta.iter_mut().zip(&grad) {
                        *t -= lr * g;
                    }
                }
                Optimizer::Adam {
                    lr,
                    beta1,
                    beta2,
                    eps,
                } => {
                    adam.t += 1;
                    let c1 = 1.0 - beta1.powi(adam.t);
                    let c2 = 1.0 - beta2.powi(adam.t);
                    for i in 0..n {
                        adam.m[i] = beta1 * adam.m[i] + (1.0 - beta1) * grad[i];
                        adam.v[i] = beta2 * adam.v[i] + (1.0 - beta2) * grad[i] * grad[i];
                        theta[i] -= lr * (adam.m[i] / c1) / ((adam.v[i] / c2).sqrt() + eps);
                    }
                }
            }
            updates += 1;
            if theta.iter().any(|t| !t.is_finite()) {
                return Err(DrexError::TrainingDiverged {
                    update: updates,
                    last_finite: prev,
                });
            }
            model.set_params(&theta);
        }
        let point = CurvePoint {
            epoch,
            train_loss: mean_loss(&model, features, train),
            val_loss: mean_loss(&model, features, val),
        };
        if !point.train_loss.is_finite() || !point.val_loss.is_finite() {
            return Err(DrexError::TrainingDiverged {
                update: updates,
                last_finite: best.2,
            });
        }
        let improved = point.val_loss < best.1;
        curve.push(point);
        if improved {
            best = (epoch, curve[epoch].val_loss, theta.clone());
            stale = 0;
        } else {
            stale += 1;
            if stale >= cfg.patience {
                break;
            }
        }
    }
    model.set_params(&best.2);
    let report = TrainReport {
        curve,
        stopping_epoch: best.0,
        best_val_loss: best.1,
        val_accuracy: ranking_accuracy(&model, features, val),
        updates,
    };
    Ok((model, report))
}
