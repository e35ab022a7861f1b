//! Policy optimization over the tree of non-repeating histories.

mod cdp;
mod greedy;
mod ndp;
mod oracle;

pub use cdp::{solve_cdp, CdpEntry, CdpPolicy};
pub use greedy::{decide_greedy, greedy_score, GreedyPolicy};
pub use ndp::{solve_ndp, NdpEntry, NdpPolicy};
pub use oracle::{brute_force_optimal, OracleResult, MAX_ORACLE_POLICIES};

use rand::RngCore;
use serde::{Deserialize, Serialize};

use crate::domain::{Context, Decision, History};
use crate::error::{PolicyError, SolverError};
use crate::model::OutcomeModel;
use crate::stopping::StoppingConfig;

/// Two values closer than this are treated as tied.
pub const TIE_TOLERANCE: f64 = 1e-12;

/// A decision rule over histories. Stochastic policies draw from `rng`;
/// deterministic ones ignore it.
pub trait Policy: Send + Sync {
    fn decide(&self, h: &History, rng: &mut dyn RngCore) -> Result<Decision, PolicyError>;
}

impl<P: Policy + ?Sized> Policy for &P {
    fn decide(&self, h: &History, rng: &mut dyn RngCore) -> Result<Decision, PolicyError> {
        (**self).decide(h, rng)
    }
}

impl<P: Policy + ?Sized> Policy for Box<P> {
    fn decide(&self, h: &History, rng: &mut dyn RngCore) -> Result<Decision, PolicyError> {
        (**self).decide(h, rng)
    }
}

impl<P: Policy + ?Sized> Policy for std::sync::Arc<P> {
    fn decide(&self, h: &History, rng: &mut dyn RngCore) -> Result<Decision, PolicyError> {
        (**self).decide(h, rng)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SolverKind {
    Cdp,
    Greedy,
    Ndp,
}

impl std::str::FromStr for SolverKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "cdp" => Ok(SolverKind::Cdp),
            "greedy" | "cg" => Ok(SolverKind::Greedy),
            "ndp" => Ok(SolverKind::Ndp),
            other => Err(format!("unknown solver {other:?}")),
        }
    }
}

impl std::fmt::Display for SolverKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            SolverKind::Cdp => "cdp",
            SolverKind::Greedy => "greedy",
            SolverKind::Ndp => "ndp",
        })
    }
}

/// Output of any solver, dispatching `decide` to the wrapped policy.
#[derive(Debug, Clone)]
pub enum SolvedPolicy<M> {
    Cdp(CdpPolicy),
    Greedy(GreedyPolicy<M>),
    Ndp(NdpPolicy),
}

impl<M: OutcomeModel> SolvedPolicy<M> {
    pub fn kind(&self) -> SolverKind {
        match self {
            SolvedPolicy::Cdp(_) => SolverKind::Cdp,
            SolvedPolicy::Greedy(_) => SolverKind::Greedy,
            SolvedPolicy::Ndp(_) => SolverKind::Ndp,
        }
    }
}

impl<M: OutcomeModel> Policy for SolvedPolicy<M> {
    fn decide(&self, h: &History, rng: &mut dyn RngCore) -> Result<Decision, PolicyError> {
        match self {
            SolvedPolicy::Cdp(p) => p.decide(h, rng),
            SolvedPolicy::Greedy(p) => p.decide(h, rng),
            SolvedPolicy::Ndp(p) => p.decide(h, rng),
        }
    }
}

/// Runs the chosen solver. `stopping` is ignored by NDP and `lambda` by the others.
pub fn solve<M: OutcomeModel>(
    kind: SolverKind,
    model: M,
    stopping: &StoppingConfig,
    lambda: f64,
    contexts: &[Context],
) -> Result<SolvedPolicy<M>, SolverError> {
    Ok(match kind {
        SolverKind::Cdp => SolvedPolicy::Cdp(solve_cdp(&model, stopping, contexts)?),
        SolverKind::Greedy => {
            SolvedPolicy::Greedy(GreedyPolicy::new(model, *stopping).map_err(SolverError::InvalidConfig)?)
        }
        SolverKind::Ndp => SolvedPolicy::Ndp(solve_ndp(&model, lambda, contexts)?),
    })
}

/// All histories of one context grouped by number of trials.
///
/// Level `s` holds `C(k, s) · n_y^s` histories.
pub fn histories_by_size(context: &Context, num_actions: usize, num_outcomes: usize) -> Vec<Vec<History>> {
    let mut levels = vec![vec![History::empty(context.clone(), num_actions)]];
    for _ in 0..num_actions {
        let prev = levels.last().expect("non-empty");
        let mut next = Vec::new();
        for h in prev {
            // Only extend with actions above the largest tried one so each set appears once.
            let start = h.trials().last().map_or(0, |t| t.action + 1);
            for a in start..num_actions {
                for y in 0..num_outcomes {
                    next.push(h.extend(a, y).expect("fresh action"));
                }
            }
        }
        levels.push(next);
    }
    levels
}
