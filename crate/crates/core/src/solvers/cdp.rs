//! Constrained dynamic programming.
//!
//! Every trial costs one unit of reward and stopping is free but only
//! available where γ(h) holds, so `-V(H₀)` is the minimal expected number of
//! trials among policies that only stop when the near-optimality constraint
//! is met.

use std::collections::{BTreeMap, HashMap};

use rand::RngCore;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{histories_by_size, Policy, TIE_TOLERANCE};
use crate::domain::{CanonicalKey, Context, Decision, History, ProblemSpec};
use crate::error::{PolicyError, SolverError};
use crate::model::OutcomeModel;
use crate::stopping::{gamma, StoppingConfig};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CdpEntry {
    /// V(h), the negated expected number of remaining trials.
    pub value: f64,
    pub decision: Decision,
    /// γ(h) at solve time.
    pub stop_allowed: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CdpPolicy {
    spec: ProblemSpec,
    stopping: StoppingConfig,
    table: HashMap<CanonicalKey, CdpEntry>,
}

impl CdpPolicy {
    pub fn from_parts(spec: ProblemSpec, stopping: StoppingConfig, table: HashMap<CanonicalKey, CdpEntry>) -> Self {
        CdpPolicy { spec, stopping, table }
    }

    pub fn spec(&self) -> &ProblemSpec {
        &self.spec
    }

    pub fn stopping(&self) -> &StoppingConfig {
        &self.stopping
    }

    pub fn table(&self) -> &HashMap<CanonicalKey, CdpEntry> {
        &self.table
    }

    pub fn entry(&self, h: &History) -> Option<&CdpEntry> {
        self.table.get(&h.key())
    }

    /// Solved contexts, sorted.
    pub fn contexts(&self) -> Vec<Context> {
        let mut out: Vec<Context> = self
            .table
            .keys()
            .filter(|k| k.slots().iter().all(|&s| s == CanonicalKey::UNTRIED))
            .map(CanonicalKey::context)
            .collect();
        out.sort();
        out
    }

    /// `-V(H₀)` for one context.
    pub fn expected_search_length_for(&self, context: &Context) -> Option<f64> {
        self.entry(&History::empty(context.clone(), self.spec.num_actions())).map(|e| -e.value)
    }

    /// `E_X[-V(H₀)]` under the given context weights (normalized internally).
    pub fn expected_search_length(&self, weights: &[(Context, f64)]) -> Option<f64> {
        let total: f64 = weights.iter().map(|(_, w)| w).sum();
        let mut acc = 0.0;
        for (ctx, w) in weights {
            acc += w * self.expected_search_length_for(ctx)?;
        }
        Some(acc / total)
    }

    /// `E_X[-V(H₀)]` with every solved context weighted equally.
    pub fn mean_expected_search_length(&self) -> f64 {
        let weights: Vec<(Context, f64)> = self.contexts().into_iter().map(|c| (c, 1.0)).collect();
        self.expected_search_length(&weights).unwrap_or(0.0)
    }

    /// Sorted view for persistence.
    pub fn to_entries(&self) -> BTreeMap<String, CdpEntry> {
        self.table.iter().map(|(k, e)| (k.to_string(), *e)).collect()
    }
}

impl Policy for CdpPolicy {
    fn decide(&self, h: &History, _rng: &mut dyn RngCore) -> Result<Decision, PolicyError> {
        self.entry(h).map(|e| e.decision).ok_or_else(|| PolicyError::UnknownHistory(h.key().to_string()))
    }
}

/// Backward induction over every history of each requested context.
pub fn solve_cdp<M: OutcomeModel + ?Sized>(
    model: &M,
    cfg: &StoppingConfig,
    contexts: &[Context],
) -> Result<CdpPolicy, SolverError> {
    cfg.validate().map_err(SolverError::InvalidConfig)?;
    let spec = model.spec().clone();
    for ctx in contexts {
        spec.check_context(ctx)?;
    }
    let tables: Vec<HashMap<CanonicalKey, CdpEntry>> =
        contexts.par_iter().map(|ctx| solve_context(model, cfg, &spec, ctx)).collect();
    let table = tables.into_iter().flatten().collect();
    Ok(CdpPolicy { spec, stopping: *cfg, table })
}

fn solve_context<M: OutcomeModel + ?Sized>(
    model: &M,
    cfg: &StoppingConfig,
    spec: &ProblemSpec,
    ctx: &Context,
) -> HashMap<CanonicalKey, CdpEntry> {
    let levels = histories_by_size(ctx, spec.num_actions(), spec.num_outcomes());
    let mut table: HashMap<CanonicalKey, CdpEntry> = HashMap::new();
    for level in levels.iter().rev() {
        for h in level {
            let stop_allowed = gamma(model, h, cfg);
            let entry = if stop_allowed {
                // Any trial has Q ≤ -1 < 0, so STOP is the maximizer whenever it is available.
                CdpEntry { value: 0.0, decision: Decision::Stop, stop_allowed }
            } else {
                let mut best: Option<(f64, usize)> = None;
                for a in h.untried() {
                    let p = model.predict(h, a);
                    let mut q = -1.0;
                    for (y, &py) in p.iter().enumerate() {
                        if py != 0.0 {
                            q += py * table[&h.extend(a, y).expect("untried").key()].value;
                        }
                    }
                    if best.is_none_or(|(bq, _)| q > bq + TIE_TOLERANCE) {
                        best = Some((q, a));
                    }
                }
                // γ holds at exhausted histories, so some action exists here.
                let (value, a) = best.expect("non-exhausted history has untried actions");
                CdpEntry { value, decision: Decision::Try(a), stop_allowed }
            };
            table.insert(h.key(), entry);
        }
    }
    table
}
