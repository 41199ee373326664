//! Disturbance-based reward extrapolation on tabular MDPs.
//!
//! A behavioural clone of a suboptimal demonstrator is rolled out under
//! increasing ε-greedy noise. Noise levels rank the rollouts automatically, a
//! reward is learned from those rankings with a pairwise logistic loss, and a
//! policy is optimised for the learned reward. Everything runs on small
//! gridworlds where returns, occupancies and optimal policies are exact, so
//! each stage can be checked against a closed-form oracle.
//!
//! Supporting analysis lives in [`theory`]: reward-ambiguity volumes of
//! half-space constraint sets, a sufficient condition for extrapolation, a
//! counterexample MDP where rankings resolve an ambiguity, and the ε-noise
//! degradation model.

pub mod cloning;
pub mod envs;
pub mod error;
pub mod mdp;
pub mod pipeline;
pub mod ranking;
pub mod reward;
pub mod rng;
pub mod solvers;
pub mod stats;
pub mod theory;

pub use error::{DrexError, Result};
pub use mdp::{Horizon, Mdp, Trajectory};
pub use reward::RewardModel;
pub use solvers::{Policy, Provenance};
