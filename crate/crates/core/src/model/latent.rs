//! Exact conditionals for generative models with a discrete latent moderator.
//!
//! Given a context, `Z` has a prior and each potential outcome `Y(a)` is drawn
//! independently given `Z`. Conditioning on a history is Bayes' rule over `Z`:
//! `p(z | h) ∝ p(z | x) Π_{(a,y)∈h} p(y | a, z)`.

use std::collections::BTreeMap;

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{normalize, OutcomeModel};
use crate::domain::{Action, Context, History, ProblemSpec, Subject};
use crate::error::CoreError;

/// Latent prior and outcome tables for one context.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LatentContext {
    /// `p(Z = z | x)`.
    pub prior: Vec<f64>,
    /// `outcomes[z][a][y] = p(Y(a) = y | x, z)`.
    pub outcomes: Vec<Vec<Vec<f64>>>,
}

impl LatentContext {
    pub fn posterior(&self, h: &History) -> Vec<f64> {
        let raw: Vec<f64> = self
            .prior
            .iter()
            .enumerate()
            .map(|(z, &pz)| h.trials().iter().fold(pz, |acc, t| acc * self.outcomes[z][t.action][t.outcome]))
            .collect();
        if raw.iter().sum::<f64>() > 0.0 {
            normalize(raw)
        } else {
            // Impossible history under the model; fall back to the prior.
            self.prior.clone()
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LatentModel {
    spec: ProblemSpec,
    contexts: BTreeMap<Context, LatentContext>,
}

impl LatentModel {
    pub fn new(spec: ProblemSpec, contexts: BTreeMap<Context, LatentContext>) -> Result<Self, CoreError> {
        for (ctx, lc) in &contexts {
            spec.check_context(ctx)?;
            let total: f64 = lc.prior.iter().sum();
            if (total - 1.0).abs() > 1e-9 || lc.prior.iter().any(|&p| p < 0.0) {
                return Err(CoreError::InvalidSpec(format!("latent prior for {ctx} is not a distribution")));
            }
            if lc.outcomes.len() != lc.prior.len() {
                return Err(CoreError::InvalidSpec("one outcome table per latent state required".into()));
            }
            for per_z in &lc.outcomes {
                if per_z.len() != spec.num_actions() {
                    return Err(CoreError::InvalidSpec("one outcome row per action required".into()));
                }
                for row in per_z {
                    let s: f64 = row.iter().sum();
                    if row.len() != spec.num_outcomes() || (s - 1.0).abs() > 1e-9 || row.iter().any(|&p| p < 0.0) {
                        return Err(CoreError::InvalidSpec("outcome rows must be distributions".into()));
                    }
                }
            }
        }
        Ok(LatentModel { spec, contexts })
    }

    pub fn context(&self, ctx: &Context) -> Option<&LatentContext> {
        self.contexts.get(ctx)
    }

    pub fn contexts(&self) -> impl Iterator<Item = &Context> {
        self.contexts.keys()
    }

    /// Marginal `p(Y(a) = · | x)` with nothing tried.
    pub fn marginal(&self, ctx: &Context, action: Action) -> Vec<f64> {
        self.predict(&History::empty(ctx.clone(), self.spec.num_actions()), action)
    }

    /// Draws a latent state and then every potential outcome.
    pub fn sample_subject<R: Rng + ?Sized>(&self, ctx: &Context, rng: &mut R) -> Subject {
        let lc = &self.contexts[ctx];
        let z = sample_categorical(&lc.prior, rng);
        let potential_outcomes =
            (0..self.spec.num_actions()).map(|a| sample_categorical(&lc.outcomes[z][a], rng)).collect();
        Subject { context: ctx.clone(), latent: Some(z), potential_outcomes }
    }

    /// Every `(subject, probability)` pair with positive mass for a context.
    pub fn enumerate_subjects(&self, ctx: &Context) -> Vec<(Subject, f64)> {
        let lc = &self.contexts[ctx];
        let k = self.spec.num_actions();
        let mut out = Vec::new();
        for (z, &pz) in lc.prior.iter().enumerate() {
            if pz == 0.0 {
                continue;
            }
            let mut partial: Vec<(Vec<usize>, f64)> = vec![(Vec::with_capacity(k), pz)];
            for a in 0..k {
                partial = partial
                    .into_iter()
                    .flat_map(|(ys, p)| {
                        lc.outcomes[z][a].iter().enumerate().filter(|(_, &q)| q > 0.0).map(move |(y, &q)| {
                            let mut next = ys.clone();
                            next.push(y);
                            (next, p * q)
                        })
                    })
                    .collect();
            }
            out.extend(
                partial
                    .into_iter()
                    .map(|(ys, p)| (Subject { context: ctx.clone(), latent: Some(z), potential_outcomes: ys }, p)),
            );
        }
        out
    }
}

impl OutcomeModel for LatentModel {
    fn spec(&self) -> &ProblemSpec {
        &self.spec
    }

    fn predict(&self, h: &History, action: Action) -> Vec<f64> {
        let Some(lc) = self.contexts.get(h.context()) else {
            return vec![1.0 / self.spec.num_outcomes() as f64; self.spec.num_outcomes()];
        };
        let post = lc.posterior(h);
        let mut out = vec![0.0; self.spec.num_outcomes()];
        for (z, &pz) in post.iter().enumerate() {
            if pz == 0.0 {
                continue;
            }
            out.iter_mut().zip(&lc.outcomes[z][action]).for_each(|(o, &q)| *o += pz * q);
        }
        // Exact zeros must survive so that certain histories give ρ = 0.
        let total: f64 = out.iter().sum();
        out.iter_mut().for_each(|o| *o /= total);
        out
    }
}

pub(crate) fn sample_categorical<R: Rng + ?Sized>(probs: &[f64], rng: &mut R) -> usize {
    let u: f64 = rng.random::<f64>() * probs.iter().sum::<f64>();
    let mut acc = 0.0;
    for (i, &p) in probs.iter().enumerate() {
        acc += p;
        if u < acc {
            return i;
        }
    }
    // Rounding can leave u just above the final cumulative sum.
    probs.iter().rposition(|&p| p > 0.0).unwrap_or(probs.len() - 1)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::TrialRecord;

    fn two_state() -> LatentModel {
        let spec = ProblemSpec::new(2, vec![0.0, 1.0], vec![1]).unwrap();
        let lc = LatentContext {
            prior: vec![0.25, 0.75],
            outcomes: vec![vec![vec![0.0, 1.0], vec![1.0, 0.0]], vec![vec![0.5, 0.5], vec![0.0, 1.0]]],
        };
        LatentModel::new(spec, BTreeMap::from([(Context::new(vec![0]), lc)])).unwrap()
    }

    #[test]
    fn bayes_update() {
        let m = two_state();
        let root = History::empty(Context::new(vec![0]), 2);
        let p = m.predict(&root, 0);
        assert!((p[1] - (0.25 + 0.75 * 0.5)).abs() < 1e-15);
        // Seeing Y(0) = 0 rules out z = 0.
        let h = History::from_trials(Context::new(vec![0]), 2, [TrialRecord::new(0, 0)]).unwrap();
        assert_eq!(m.predict(&h, 1), vec![0.0, 1.0]);
    }

    #[test]
    fn impossible_history_falls_back_to_prior() {
        let m = two_state();
        // z = 0 forces Y(1) = 0 and z = 1 forces Y(1) = 1; seeing Y(0) = 0 and Y(1) = 0 is impossible.
        let h =
            History::from_trials(Context::new(vec![0]), 2, [TrialRecord::new(0, 0), TrialRecord::new(1, 0)]).unwrap();
        let lc = m.context(&Context::new(vec![0])).unwrap();
        assert_eq!(lc.posterior(&h), vec![0.25, 0.75]);
    }

    #[test]
    fn enumerated_subjects_sum_to_one() {
        let m = two_state();
        let subs = m.enumerate_subjects(&Context::new(vec![0]));
        let total: f64 = subs.iter().map(|(_, p)| p).sum();
        assert!((total - 1.0).abs() < 1e-12);
        assert_eq!(subs.len(), 3);
    }

    #[test]
    fn rejects_non_distribution() {
        let spec = ProblemSpec::new(1, vec![0.0, 1.0], vec![1]).unwrap();
        let lc = LatentContext { prior: vec![0.5], outcomes: vec![vec![vec![0.5, 0.5]]] };
        assert!(LatentModel::new(spec, BTreeMap::from([(Context::new(vec![0]), lc)])).is_err());
    }
}
