//! Two small analytic instances with known optimal searches.

use std::collections::BTreeMap;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::domain::{Context, ProblemSpec, Subject};
use crate::error::DgpError;
use crate::model::{LatentContext, LatentModel};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ToyKind {
    /// Three binary-outcome actions driven by a four-state moderator.
    Example1,
    /// Two independent actions; the parameter shifts the sure action's outcome above 0.5.
    A6(f64),
}

#[derive(Debug, Clone, PartialEq)]
pub struct ToyInstance {
    pub kind: ToyKind,
    pub model: LatentModel,
}

impl ToyInstance {
    pub fn spec(&self) -> &ProblemSpec {
        crate::model::OutcomeModel::spec(&self.model)
    }

    /// The single context both toys live in.
    pub fn context(&self) -> Context {
        Context::new(vec![0])
    }

    /// Every subject with positive probability, weighted.
    pub fn subjects(&self) -> Vec<(Subject, f64)> {
        self.model.enumerate_subjects(&self.context())
    }

    pub fn sample_subject<R: Rng + ?Sized>(&self, rng: &mut R) -> Subject {
        self.model.sample_subject(&self.context(), rng)
    }
}

pub fn build_toy(kind: ToyKind) -> Result<ToyInstance, DgpError> {
    match kind {
        ToyKind::Example1 => Ok(example1()),
        ToyKind::A6(eps) => a6(eps),
    }
}

pub fn example1() -> ToyInstance {
    let spec = ProblemSpec::with_integer_outcomes(3, 2, vec![1]).expect("static spec");
    // success[z][a]
    let success = [[1, 0, 1], [0, 1, 0], [1, 0, 0], [0, 1, 1]];
    let outcomes = success
        .iter()
        .map(|row| row.iter().map(|&c| if c == 1 { vec![0.0, 1.0] } else { vec![1.0, 0.0] }).collect())
        .collect();
    let lc = LatentContext { prior: vec![0.20, 0.15, 0.20, 0.45], outcomes };
    let model = LatentModel::new(spec, BTreeMap::from([(Context::new(vec![0]), lc)])).expect("static model");
    ToyInstance { kind: ToyKind::Example1, model }
}

/// Outcome grid `{0.5, 0.5 + ε, 1.0}`; action 0 is a coin flip between 0.5
/// and 1.0, action 1 always yields `0.5 + ε`.
pub fn a6(eps: f64) -> Result<ToyInstance, DgpError> {
    if !(eps > 0.0 && eps < 0.25) {
        return Err(DgpError::InvalidParams(format!("instance epsilon must lie in (0, 0.25), got {eps}")));
    }
    let spec = ProblemSpec::new(2, vec![0.5, 0.5 + eps, 1.0], vec![1])?;
    let lc = LatentContext { prior: vec![1.0], outcomes: vec![vec![vec![0.5, 0.0, 0.5], vec![0.0, 1.0, 0.0]]] };
    let model = LatentModel::new(spec, BTreeMap::from([(Context::new(vec![0]), lc)]))?;
    Ok(ToyInstance { kind: ToyKind::A6(eps), model })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn example1_marginals() {
        let toy = example1();
        let got: Vec<f64> = (0..3).map(|a| toy.model.marginal(&toy.context(), a)[1]).collect();
        for (g, want) in got.iter().zip([0.4, 0.6, 0.65]) {
            assert!((g - want).abs() < 1e-12, "{got:?}");
        }
        assert_eq!(toy.subjects().len(), 4);
    }

    #[test]
    fn a6_grid() {
        let toy = a6(0.1).unwrap();
        assert_eq!(toy.spec().outcome_values(), &[0.5, 0.6, 1.0]);
        assert_eq!(toy.model.marginal(&toy.context(), 0), vec![0.5, 0.0, 0.5]);
        assert_eq!(toy.model.marginal(&toy.context(), 1), vec![0.0, 1.0, 0.0]);
        assert!(a6(0.3).is_err());
        assert!(a6(0.0).is_err());
    }
}
