//! Constrained greedy search: try the action with the largest expected
//! improvement-weighted value until the stopping rule fires.

use rand::RngCore;

use super::{Policy, TIE_TOLERANCE};
use crate::domain::{Action, Decision, History};
use crate::error::{CoreError, PolicyError};
use crate::model::OutcomeModel;
use crate::stopping::{gamma, StoppingConfig};

/// `f(h, a) = Σ_y p(y | h, a) · value(y) · 1[value(y) > best_so_far(h)]`.
pub fn greedy_score<M: OutcomeModel + ?Sized>(model: &M, h: &History, action: Action) -> Result<f64, CoreError> {
    let spec = model.spec();
    if action >= spec.num_actions() {
        return Err(CoreError::ActionOutOfRange { action, k: spec.num_actions() });
    }
    if h.contains(action) {
        return Err(CoreError::RepeatedAction(action));
    }
    let best = h.best_so_far(spec).unwrap_or(f64::NEG_INFINITY);
    let p = model.predict(h, action);
    Ok(p.iter().zip(spec.outcome_values()).filter(|(_, &v)| v > best).map(|(&py, &v)| py * v).sum())
}

pub fn decide_greedy<M: OutcomeModel + ?Sized>(model: &M, cfg: &StoppingConfig, h: &History) -> Decision {
    if gamma(model, h, cfg) {
        return Decision::Stop;
    }
    let mut best: Option<(f64, Action)> = None;
    for a in h.untried() {
        let f = greedy_score(model, h, a).expect("untried action");
        if best.is_none_or(|(bf, _)| f > bf + TIE_TOLERANCE) {
            best = Some((f, a));
        }
    }
    best.map_or(Decision::Stop, |(_, a)| Decision::Try(a))
}

/// Computes decisions on demand from a model.
#[derive(Debug, Clone)]
pub struct GreedyPolicy<M> {
    model: M,
    stopping: StoppingConfig,
}

impl<M: OutcomeModel> GreedyPolicy<M> {
    pub fn new(model: M, stopping: StoppingConfig) -> Result<Self, String> {
        stopping.validate()?;
        Ok(GreedyPolicy { model, stopping })
    }

    pub fn model(&self) -> &M {
        &self.model
    }

    pub fn stopping(&self) -> &StoppingConfig {
        &self.stopping
    }
}

impl<M: OutcomeModel> Policy for GreedyPolicy<M> {
    fn decide(&self, h: &History, _rng: &mut dyn RngCore) -> Result<Decision, PolicyError> {
        Ok(decide_greedy(&self.model, &self.stopping, h))
    }
}
