//! Naive dynamic programming: maximize the best outcome found minus a
//! per-trial penalty `λ`, with no explicit near-optimality constraint.

use std::collections::{BTreeMap, HashMap};

use rand::RngCore;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{histories_by_size, Policy, TIE_TOLERANCE};
use crate::domain::{Action, CanonicalKey, Context, Decision, History, ProblemSpec};
use crate::error::{PolicyError, SolverError};
use crate::model::OutcomeModel;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NdpEntry {
    /// `μ(h) − λ|h|`; absent at the empty history.
    pub q_stop: Option<f64>,
    pub q_actions: Vec<(Action, f64)>,
    pub value: f64,
    pub decision: Decision,
}

#[derive(Debug, Clone, PartialEq)]
pub struct NdpPolicy {
    spec: ProblemSpec,
    lambda: f64,
    table: HashMap<CanonicalKey, NdpEntry>,
}

impl NdpPolicy {
    pub fn from_parts(spec: ProblemSpec, lambda: f64, table: HashMap<CanonicalKey, NdpEntry>) -> Self {
        NdpPolicy { spec, lambda, table }
    }

    pub fn spec(&self) -> &ProblemSpec {
        &self.spec
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn table(&self) -> &HashMap<CanonicalKey, NdpEntry> {
        &self.table
    }

    pub fn entry(&self, h: &History) -> Option<&NdpEntry> {
        self.table.get(&h.key())
    }

    pub fn q(&self, h: &History, action: Action) -> Option<f64> {
        self.entry(h)?.q_actions.iter().find(|(a, _)| *a == action).map(|(_, q)| *q)
    }

    pub fn to_entries(&self) -> BTreeMap<String, NdpEntry> {
        self.table.iter().map(|(k, e)| (k.to_string(), e.clone())).collect()
    }
}

impl Policy for NdpPolicy {
    fn decide(&self, h: &History, _rng: &mut dyn RngCore) -> Result<Decision, PolicyError> {
        self.entry(h).map(|e| e.decision).ok_or_else(|| PolicyError::UnknownHistory(h.key().to_string()))
    }
}

pub fn solve_ndp<M: OutcomeModel + ?Sized>(
    model: &M,
    lambda: f64,
    contexts: &[Context],
) -> Result<NdpPolicy, SolverError> {
    if !(lambda > 0.0 && lambda.is_finite()) {
        return Err(SolverError::InvalidConfig(format!("lambda must be positive, got {lambda}")));
    }
    let spec = model.spec().clone();
    for ctx in contexts {
        spec.check_context(ctx)?;
    }
    let tables: Vec<HashMap<CanonicalKey, NdpEntry>> =
        contexts.par_iter().map(|ctx| solve_context(model, lambda, &spec, ctx)).collect();
    Ok(NdpPolicy { spec, lambda, table: tables.into_iter().flatten().collect() })
}

fn solve_context<M: OutcomeModel + ?Sized>(
    model: &M,
    lambda: f64,
    spec: &ProblemSpec,
    ctx: &Context,
) -> HashMap<CanonicalKey, NdpEntry> {
    let mut table: HashMap<CanonicalKey, NdpEntry> = HashMap::new();
    for level in histories_by_size(ctx, spec.num_actions(), spec.num_outcomes()).iter().rev() {
        for h in level {
            let q_stop = h.best_so_far(spec).map(|mu| mu - lambda * h.len() as f64);
            let q_actions: Vec<(Action, f64)> = h
                .untried()
                .into_iter()
                .map(|a| {
                    let q = model
                        .predict(h, a)
                        .iter()
                        .enumerate()
                        .filter(|(_, &py)| py != 0.0)
                        .map(|(y, &py)| py * table[&h.extend(a, y).expect("untried").key()].value)
                        .sum();
                    (a, q)
                })
                .collect();
            let mut best = q_stop.map(|q| (q, Decision::Stop));
            for &(a, q) in &q_actions {
                if best.is_none_or(|(bq, _)| q > bq + TIE_TOLERANCE) {
                    best = Some((q, Decision::Try(a)));
                }
            }
            let (value, decision) = best.expect("either STOP or an action is available");
            table.insert(h.key(), NdpEntry { q_stop, q_actions, value, decision });
        }
    }
    table
}
