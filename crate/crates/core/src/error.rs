use thiserror::Error;

use crate::domain::Action;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum CoreError {
    #[error("action {0} already appears in the history")]
    RepeatedAction(Action),
    #[error("action {action} out of range for k = {k}")]
    ActionOutOfRange { action: Action, k: usize },
    #[error("outcome index {outcome} out of range for {n} outcome values")]
    OutcomeOutOfRange { outcome: usize, n: usize },
    #[error("invalid context: {0}")]
    InvalidContext(String),
    #[error("invalid problem spec: {0}")]
    InvalidSpec(String),
    #[error("malformed canonical key {0:?}")]
    BadKey(String),
}

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("dataset is empty")]
    EmptyData,
    #[error("only one outcome class is present; fitted a point-mass model")]
    DegenerateData(Box<crate::model::LogisticModel>),
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Core(#[from] CoreError),
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SolverError {
    #[error("instance too large for exhaustive enumeration: {0}")]
    InstanceTooLarge(String),
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Core(#[from] CoreError),
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum PolicyError {
    #[error("policy proposed action {0}, which was already tried")]
    RepeatedAction(Action),
    #[error("no decision stored for history {0}")]
    UnknownHistory(String),
    #[error("policy proposed action {0}, which is out of range")]
    InvalidAction(Action),
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum EvalError {
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Solver(#[from] SolverError),
    #[error(transparent)]
    Policy(#[from] PolicyError),
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum DgpError {
    #[error("normalizer for action {0} is zero after repeated resampling")]
    DegenerateScale(Action),
    #[error("invalid parameters: {0}")]
    InvalidParams(String),
    #[error(transparent)]
    Core(#[from] CoreError),
}

#[derive(Debug, Error)]
pub enum IoError {
    #[error("{path}: {source}")]
    File { path: String, source: std::io::Error },
    #[error("line {line}: {message}")]
    Parse { line: u64, message: String },
    #[error("file does not match problem spec: {0}")]
    SpecMismatch(String),
    #[error("subject {subject} repeats action {action}")]
    RepeatedAction { subject: String, action: Action },
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("unsupported format version {found}, expected {expected}")]
    Version { found: u32, expected: u32 },
    #[error(transparent)]
    Core(#[from] CoreError),
}
