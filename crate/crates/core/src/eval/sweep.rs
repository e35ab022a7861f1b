use serde::{Deserialize, Serialize};

use super::{evaluate, EvalConfig, Metrics};
use crate::domain::{Context, Decision, History, ProblemSpec, Subject};
use crate::error::EvalError;
use crate::model::OutcomeModel;
use crate::solvers::{solve, Policy, SolverKind};
use crate::stopping::StoppingConfig;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub parameter: f64,
    pub metrics: Metrics,
    /// First decision of the solved policy in every evaluated context.
    pub root_decisions: Vec<(Context, Decision)>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepResult {
    pub solver: SolverKind,
    /// `delta` for CDP and greedy, `lambda` for NDP.
    pub parameter_name: String,
    pub rows: Vec<SweepRow>,
}

/// Solves once per grid value with a fixed fitted model and evaluates each
/// policy on the same subjects.
pub fn sweep<M: OutcomeModel>(
    model: &M,
    kind: SolverKind,
    base: &StoppingConfig,
    grid: &[f64],
    subjects: &[Subject],
    cfg: &EvalConfig,
) -> Result<SweepResult, EvalError> {
    if grid.is_empty() {
        return Err(EvalError::InvalidConfig("parameter grid is empty".into()));
    }
    let spec: &ProblemSpec = model.spec();
    let mut contexts: Vec<Context> = subjects.iter().map(|s| s.context.clone()).collect();
    contexts.sort();
    contexts.dedup();
    let mut rows = Vec::with_capacity(grid.len());
    for &value in grid {
        let (stopping, lambda) = match kind {
            SolverKind::Ndp => (*base, value),
            _ => (StoppingConfig { delta: value, ..*base }, 0.0),
        };
        let policy = solve(kind, model, &stopping, lambda, &contexts)?;
        let metrics = evaluate(&policy, spec, subjects, cfg)?;
        let mut rng = crate::rng::stream(cfg.seed, crate::rng::StreamPurpose::Rollout, u64::MAX);
        let root_decisions = contexts
            .iter()
            .map(|c| Ok((c.clone(), policy.decide(&History::empty(c.clone(), spec.num_actions()), &mut rng)?)))
            .collect::<Result<_, EvalError>>()?;
        rows.push(SweepRow { parameter: value, metrics, root_decisions });
    }
    let parameter_name = if kind == SolverKind::Ndp { "lambda" } else { "delta" }.to_string();
    Ok(SweepResult { solver: kind, parameter_name, rows })
}
