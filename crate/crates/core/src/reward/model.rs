use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{DrexError, Result};
use crate::mdp::dot;
use crate::rng::Rng;

/// State reward `R̂(φ(s))`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum RewardModel {
    Linear {
        weights: Vec<f64>,
    },
    Mlp(Mlp),
    /// Mean of independently trained members.
    Ensemble {
        members: Vec<RewardModel>,
    },
}

/// One hidden layer with a leaky rectifier.
///
/// `params` is `W₁` (hidden × input, row-major), `b₁`, `w₂`, `b₂`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "MlpFile", into = "MlpFile")]
pub struct Mlp {
    input_dim: usize,
    hidden: usize,
    slope: f64,
    params: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct MlpFile {
    input_dim: usize,
    hidden: usize,
    slope: f64,
    params: Vec<f64>,
}

impl TryFrom<MlpFile> for Mlp {
    type Error = DrexError;
    fn try_from(f: MlpFile) -> Result<Self> {
        Mlp::from_params(f.input_dim, f.hidden, f.slope, f.params)
    }
}

impl From<Mlp> for MlpFile {
    fn from(m: Mlp) -> Self {
        MlpFile {
            input_dim: m.input_dim,
            hidden: m.hidden,
            slope: m.slope,
            params: m.params,
        }
    }
}

impl Mlp {
    pub fn param_count(input_dim: usize, hidden: usize) -> usize {
        hidden * input_dim + 2 * hidden + 1
    }

    pub fn from_params(
        input_dim: usize,
        hidden: usize,
        slope: f64,
        params: Vec<f64>,
    ) -> Result<Self> {
        if input_dim == 0 || hidden == 0 {
            return Err(DrexError::Precondition(
                "MLP layers must be non-empty".into(),
            ));
        }
        let want = Mlp::param_count(input_dim, hidden);
        if params.len() != want {
            return Err(DrexError::Precondition(format!(
                "MLP {input_dim}→{hidden}→1 needs {want} parameters, got {}",
                params.len()
            )));
        }
        if !slope.is_finite() || params.iter().any(|p| !p.is_finite()) {
            return Err(DrexError::Precondition(
                "MLP parameters must be finite".into(),
            ));
        }
        Ok(Mlp {
            input_dim,
            hidden,
            slope,
            params,
        })
    }

    /// He-style initialisation for the hidden layer, zero biases.
    pub fn random(input_dim: usize, hidden: usize, slope: f64, rng: &mut Rng) -> Self {
        let n1 = Normal::new(0.0, (2.0 / input_dim as f64).sqrt()).expect("positive std");
        let n2 = Normal::new(0.0, (1.0 / hidden as f64).sqrt()).expect("positive std");
        let mut params = Vec::with_capacity(Mlp::param_count(input_dim, hidden));
        params.extend((0..hidden * input_dim).map(|_| n1.sample(rng)));
        params.extend(std::iter::repeat_n(0.0, hidden));
        params.extend((0..hidden).map(|_| n2.sample(rng)));
        params.push(0.0);
        Mlp {
            input_dim,
            hidden,
            slope,
            params,
        }
    }

    pub fn input_dim(&self) -> usize {
        self.input_dim
    }

    pub fn hidden(&self) -> usize {
        self.hidden
    }

    pub fn slope(&self) -> f64 {
        self.slope
    }

    fn pre_activations(&self, x: &[f64]) -> Vec<f64> {
        let (w1, rest) = self.params.split_at(self.hidden * self.input_dim);
        let b1 = &rest[..self.hidden];
        (0..self.hidden)
            .map(|k| dot(&w1[k * self.input_dim..(k + 1) * self.input_dim], x) + b1[k])
            .collect()
    }

    fn leaky(&self, z: f64) -> f64 {
        if z > 0.0 {
            z
        } else {
            self.slope * z
        }
    }

    fn eval(&self, x: &[f64]) -> f64 {
        let off = self.hidden * self.input_dim + self.hidden;
        let w2 = &self.params[off..off + self.hidden];
        let b2 = self.params[off + self.hidden];
        self.pre_activations(x)
            .iter()
            .zip(w2)
            .map(|(&z, w)| w * self.leaky(z))
            .sum::<f64>()
            + b2
    }

    fn accumulate_grad(&self, x: &[f64], coef: f64, grad: &mut [f64]) {
        let (h, d) = (self.hidden, self.input_dim);
        let z = self.pre_activations(x);
        let off = h * d + h;
        for k in 0..h {
            let w2 = self.params[off + k];
            let dz = if z[k] > 0.0 { 1.0 } else { self.slope };
            let back = coef * w2 * dz;
            for (g, xi) in grad[k * d..(k + 1) * d].iter_mut().zip(x) {
                *g += back * xi;
            }
            grad[h * d + k] += back;
            grad[off + k] += coef * self.leaky(z[k]);
        }
        grad[off + h] += coef;
    }
}

impl RewardModel {
    pub fn linear(weights: Vec<f64>) -> Self {
        RewardModel::Linear { weights }
    }

    pub fn input_dim(&self) -> usize {
        match self {
            RewardModel::Linear { weights } => weights.len(),
            RewardModel::Mlp(m) => m.input_dim,
            RewardModel::Ensemble { members } => members.first().map_or(0, RewardModel::input_dim),
        }
    }

    pub fn as_linear(&self) -> Option<&[f64]> {
        match self {
            RewardModel::Linear { weights } => Some(weights),
            _ => None,
        }
    }

    /// `R̂(x)` for one feature vector.
    pub fn eval(&self, x: &[f64]) -> f64 {
        match self {
            RewardModel::Linear { weights } => dot(weights, x),
            RewardModel::Mlp(m) => m.eval(x),
            RewardModel::Ensemble { members } => {
                members.iter().map(|m| m.eval(x)).sum::<f64>() / members.len() as f64
            }
        }
    }

    /// `R̂(φ(s))` for every state.
    pub fn state_rewards(&self, features: &[Vec<f64>]) -> Vec<f64> {
        features.iter().map(|x| self.eval(x)).collect()
    }

    pub fn n_params(&self) -> usize {
        match self {
            RewardModel::Linear { weights } => weights.len(),
            RewardModel::Mlp(m) => m.params.len(),
            RewardModel::Ensemble { members } => members.iter().map(RewardModel::n_params).sum(),
        }
    }

    /// Flattened parameters; ensemble members are concatenated in order.
    pub fn params(&self) -> Vec<f64> {
        match self {
            RewardModel::Linear { weights } => weights.clone(),
            RewardModel::Mlp(m) => m.params.clone(),
            RewardModel::Ensemble { members } => {
                members.iter().flat_map(RewardModel::params).collect()
            }
        }
    }

    pub fn set_params(&mut self, p: &[f64]) {
        assert_eq!(
            p.len(),
            self.n_params(),
            "parameter vector has the wrong length"
        );
        match self {
            RewardModel::Linear { weights } => weights.copy_from_slice(p),
            RewardModel::Mlp(m) => m.params.copy_from_slice(p),
            RewardModel::Ensemble { members } => {
                let mut off = 0;
                for m in members {
                    let n = m.n_params();
                    m.set_params(&p[off..off + n]);
                    off += n;
                }
            }
        }
    }

    /// `grad += coef · ∂R̂(x)/∂θ`.
    pub fn accumulate_grad(&self, x: &[f64], coef: f64, grad: &mut [f64]) {
        match self {
            RewardModel::Linear { .. } => {
                for (g, xi) in grad.iter_mut().zip(x) {
                    *g += coef * xi;
                }
            }
            RewardModel::Mlp(m) => m.accumulate_grad(x, coef, grad),
            RewardModel::Ensemble { members } => {
                let c = coef / members.len() as f64;
                let mut off = 0;
                for m in members {
                    let n = m.n_params();
                    m.accumulate_grad(x, c, &mut grad[off..off + n]);
                    off += n;
                }
            }
        }
    }

    pub fn validate(&self, feature_dim: usize) -> Result<()> {
        if self.params().iter().any(|p| !p.is_finite()) {
            return Err(DrexError::Precondition(
                "reward model has non-finite parameters".into(),
            ));
        }
        if let RewardModel::Ensemble { members } = self {
            if members.is_empty() {
                return Err(DrexError::Precondition("ensemble has no members".into()));
            }
            for m in members {
                m.validate(feature_dim)?;
            }
        }
        if self.input_dim() != feature_dim {
            return Err(DrexError::Precondition(format!(
                "reward model expects {} features, MDP has {feature_dim}",
                self.input_dim()
            )));
        }
        Ok(())
    }

    pub fn to_json_string(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json_str(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ModelKind {
    Linear,
    Mlp,
}

/// Architecture of a fresh reward model.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelSpec {
    pub kind: ModelKind,
    pub hidden: usize,
    pub slope: f64,
    /// Independently seeded members averaged at evaluation.
    pub ensemble: usize,
}

impl Default for ModelSpec {
    fn default() -> Self {
        ModelSpec {
            kind: ModelKind::Linear,
            hidden: 32,
            slope: 0.01,
            ensemble: 1,
        }
    }
}

impl ModelSpec {
    pub fn validate(&self) -> Result<()> {
        if self.ensemble == 0 {
            return Err(DrexError::Precondition(
                "ensemble size must be at least 1".into(),
            ));
        }
        if self.kind == ModelKind::Mlp && self.hidden == 0 {
            return Err(DrexError::Precondition(
                "MLP needs at least one hidden unit".into(),
            ));
        }
        Ok(())
    }

    /// One untrained member. Linear models start at zero.
    pub fn init(&self, input_dim: usize, rng: &mut Rng) -> RewardModel {
        match self.kind {
            ModelKind::Linear => RewardModel::linear(vec![0.0; input_dim]),
            ModelKind::Mlp => {
                RewardModel::Mlp(Mlp::random(input_dim, self.hidden, self.slope, rng))
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn mlp_json_round_trip_and_shape_check() {
        let mut rng = crate::rng::rng_from(0, &[]);
        let m = RewardModel::Mlp(Mlp::random(3, 4, 0.01, &mut rng));
        let back = RewardModel::from_json_str(&m.to_json_string().unwrap()).unwrap();
        assert_eq!(back, m);
        let bad = r#"{"kind":"mlp","input_dim":3,"hidden":4,"slope":0.01,"params":[1.0]}"#;
        assert!(RewardModel::from_json_str(bad).is_err());
    }

    #[test]
    fn ensemble_is_member_mean() {
        let e = RewardModel::Ensemble {
            members: vec![
                RewardModel::linear(vec![1.0, 0.0]),
                RewardModel::linear(vec![0.0, 3.0]),
            ],
        };
        assert_eq!(e.eval(&[2.0, 1.0]), 2.5);
        assert_eq!(e.n_params(), 4);
    }
}
