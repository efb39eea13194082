//! Second-order Markov multistate models on daily trajectories.
//!
//! - [`model`]: state spaces, trajectories, transition tensors.
//! - [`ck`]: n-step prediction by pair-flow Chapman-Kolmogorov propagation.
//! - [`estimate`]: path counting and the ratio / conditional estimators.
//! - [`mtest`]: wild-bootstrap log-rank test of the first-order assumption.
//! - [`sim`]: deterministic cohort simulation.
//! - [`io`]: file formats.

pub mod ck;
pub mod error;
pub mod estimate;
pub mod fixtures;
pub mod io;
pub mod model;
pub mod mtest;
pub mod rng;
pub mod sim;

pub use ck::{first_order_n_step, n_step_distribution, prediction_curve, propagate, state_occupation, PredictionCurve, Propagation};
pub use error::{Error, Result};
pub use estimate::{
    count_paths, estimate_conditional, estimate_first_order, estimate_initialization, estimate_ratio, estimate_tensor,
    estimate_tensor_with, EstimateOptions, Method, PathCounts, TensorEstimate,
};
pub use model::{
    lift_to_pairs, validate_dataset, ChainInitialization, FirstOrderMatrix, LiftedChain, StateSpace, Trajectory,
    TransitionTensor, ValidationReport, Violation,
};
pub use mtest::{
    logrank_process, summarize_process, wild_bootstrap_test, LogrankProcess, MarkovTestOptions, MarkovTestReport,
    Summary, TestGrid, Weighting,
};
pub use sim::{simulate_cohort, ChainOrder, SimulationConfig};
