//! Reward-ambiguity geometry and the supporting analysis: half-space
//! constraint volumes, the extrapolation condition, the four-state
//! counterexample, and the ε-noise degradation model.

pub mod ambiguity;
pub mod degradation;
pub mod prop1;
pub mod theorem1;

pub use ambiguity::{
    constraints_from_ranking, corollary1_k, estimate_volume, hypothesis_elimination_sim,
    optimality_constraints, prop2_compare, volume_sweep, AmbiguityProblem, Ball,
    HalfspaceConstraint, Prop2Report, RankingPairs, RecurrenceRow, SweepRow, VolumeEstimate,
    STRICT_MARGIN,
};
pub use degradation::{
    clone_gap_check, p_epsilon_closed_form, DegradationBound, DegradationModel, GapCheckRow,
};
pub use prop1::{prop1_demo, Prop1Report};
pub use theorem1::{theorem1_check, theorem1_suite, TheoremOneReport, TheoremOneSuite};
