//! Learning to search for a near-optimal action in as few trials as
//! possible, from observational trial sequences.
//!
//! The pieces fit together as follows: [`model`] estimates
//! `p(Y(a) | history)`, [`stopping`] turns a model into the stopping rule
//! `ρ(h) ≤ δ/α`, [`solvers`] builds search policies on top of both, [`dgp`]
//! simulates data with known ground truth and [`eval`] scores policies
//! against revealed potential outcomes.

pub mod dgp;
pub mod domain;
pub mod error;
pub mod eval;
pub mod io;
pub mod model;
pub mod rng;
pub mod solvers;
pub mod stopping;

pub use domain::{
    canonicalize, Action, CanonicalKey, Context, Dataset, Decision, History, OutcomeIndex, ProblemSpec, Subject,
    SubjectPanel, Trajectory, TrialRecord,
};
pub use error::{CoreError, DgpError, EvalError, IoError, ModelError, PolicyError, SolverError};
pub use model::OutcomeModel;
pub use solvers::Policy;
pub use stopping::{BoundMode, StoppingConfig};
