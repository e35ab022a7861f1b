//! The near-optimality statistic ρ(h) and the stop indicator γ(h).
//!
//! ρ(h) is the probability that some untried action beats the best outcome
//! seen so far by more than ε. The exact form chains model conditionals over a
//! future ordering of the untried actions; the union bound (UPPER) and the
//! single-best-action bound (LOWER) only need one-step conditionals.
//!
//! γ(h) allows stopping when ρ(h) ≤ δ/α, where α ≥ 1 accounts for bounded
//! unmeasured confounding of future action propensities.

use serde::{Deserialize, Serialize};

use crate::domain::{Action, History};
use crate::model::OutcomeModel;

/// Slack for comparing ρ against δ/α, absorbing float round-off in sums of
/// probabilities that are mathematically equal to the threshold.
pub const THRESHOLD_TOLERANCE: f64 = 1e-12;

/// Largest untried set for which permutation averaging is allowed.
pub const MAX_PERMUTATION_ACTIONS: usize = 5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BoundMode {
    Exact,
    Upper,
    Lower,
}

impl std::str::FromStr for BoundMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "exact" => Ok(BoundMode::Exact),
            "upper" => Ok(BoundMode::Upper),
            "lower" => Ok(BoundMode::Lower),
            other => Err(format!("unknown bound mode {other:?}")),
        }
    }
}

impl std::fmt::Display for BoundMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            BoundMode::Exact => "exact",
            BoundMode::Upper => "upper",
            BoundMode::Lower => "lower",
        })
    }
}

/// How EXACT mode orders the hypothetical future actions.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExactOrdering {
    /// Ascending action id.
    #[default]
    Canonical,
    /// Mean over every ordering of the untried actions (at most
    /// [`MAX_PERMUTATION_ACTIONS`] of them; larger sets use the canonical order).
    PermutationAverage,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StoppingConfig {
    pub epsilon: f64,
    pub delta: f64,
    pub alpha: f64,
    pub bound: BoundMode,
    #[serde(default)]
    pub ordering: ExactOrdering,
}

impl Default for StoppingConfig {
    fn default() -> Self {
        StoppingConfig {
            epsilon: 0.0,
            delta: 0.0,
            alpha: 1.0,
            bound: BoundMode::Exact,
            ordering: ExactOrdering::Canonical,
        }
    }
}

impl StoppingConfig {
    pub fn new(epsilon: f64, delta: f64, alpha: f64, bound: BoundMode) -> Result<Self, String> {
        let cfg = StoppingConfig { epsilon, delta, alpha, bound, ordering: ExactOrdering::Canonical };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), String> {
        if !(self.epsilon >= 0.0) {
            return Err(format!("epsilon must be >= 0, got {}", self.epsilon));
        }
        if !(self.delta >= 0.0 && self.delta.is_finite()) {
            return Err(format!("delta must be >= 0, got {}", self.delta));
        }
        if !(self.alpha >= 1.0) {
            return Err(format!("alpha must be >= 1, got {}", self.alpha));
        }
        Ok(())
    }

    /// The effective stopping threshold δ/α.
    pub fn threshold(&self) -> f64 {
        self.delta / self.alpha
    }
}

/// ρ(h) under `mode`, using the canonical future ordering for EXACT.
pub fn rho<M: OutcomeModel + ?Sized>(model: &M, h: &History, epsilon: f64, mode: BoundMode) -> f64 {
    rho_with_ordering(model, h, epsilon, mode, ExactOrdering::Canonical)
}

pub fn rho_with_ordering<M: OutcomeModel + ?Sized>(
    model: &M,
    h: &History,
    epsilon: f64,
    mode: BoundMode,
    ordering: ExactOrdering,
) -> f64 {
    let untried = h.untried();
    if untried.is_empty() {
        return 0.0;
    }
    let spec = model.spec();
    let bar = h.best_so_far(spec).map(|m| m + epsilon);
    // Nothing can strictly exceed the bar once it reaches the top of the grid.
    if let Some(b) = bar {
        if b >= spec.max_outcome_value() {
            return 0.0;
        }
    }
    let exceeds = |y: usize| bar.is_none_or(|b| spec.outcome_value(y) > b);
    match mode {
        BoundMode::Upper => untried.iter().map(|&a| mass_above(&model.predict(h, a), &exceeds)).sum::<f64>().min(1.0),
        BoundMode::Lower => untried.iter().map(|&a| mass_above(&model.predict(h, a), &exceeds)).fold(0.0, f64::max),
        BoundMode::Exact => match ordering {
            ExactOrdering::PermutationAverage if untried.len() <= MAX_PERMUTATION_ACTIONS => {
                let perms = permutations(&untried);
                let n = perms.len() as f64;
                perms.iter().map(|order| chain_mass(model, h, order, &exceeds)).sum::<f64>() / n
            }
            _ => chain_mass(model, h, &untried, &exceeds),
        },
    }
}

fn mass_above(p: &[f64], exceeds: &impl Fn(usize) -> bool) -> f64 {
    p.iter().enumerate().filter(|(y, _)| exceeds(*y)).map(|(_, q)| q).sum()
}

/// Probability that some action in `order` exceeds the bar, chaining
/// `p(Y_r | A_r, H_{r-1})` along the hypothetical continuation.
fn chain_mass<M: OutcomeModel + ?Sized>(
    model: &M,
    h: &History,
    order: &[Action],
    exceeds: &impl Fn(usize) -> bool,
) -> f64 {
    let Some((&a, rest)) = order.split_first() else {
        return 0.0;
    };
    let p = model.predict(h, a);
    let mut total = 0.0;
    for (y, &py) in p.iter().enumerate() {
        if py == 0.0 {
            continue;
        }
        if exceeds(y) {
            // Every continuation of this branch already exceeds the bar.
            total += py;
        } else {
            let next = h.extend(a, y).expect("untried action");
            total += py * chain_mass(model, &next, rest, exceeds);
        }
    }
    total
}

pub(crate) fn permutations(items: &[Action]) -> Vec<Vec<Action>> {
    if items.len() <= 1 {
        return vec![items.to_vec()];
    }
    let mut out = Vec::new();
    for i in 0..items.len() {
        let mut rest = items.to_vec();
        let head = rest.remove(i);
        for mut tail in permutations(&rest) {
            tail.insert(0, head);
            out.push(tail);
        }
    }
    out
}

/// `true` when `rho` is within the δ/α budget.
pub fn within_threshold(rho: f64, cfg: &StoppingConfig) -> bool {
    rho <= cfg.threshold() + THRESHOLD_TOLERANCE
}

/// γ(h): whether stopping at `h` satisfies the near-optimality constraint.
pub fn gamma<M: OutcomeModel + ?Sized>(model: &M, h: &History, cfg: &StoppingConfig) -> bool {
    if h.is_exhausted() {
        return true;
    }
    within_threshold(rho_with_ordering(model, h, cfg.epsilon, cfg.bound, cfg.ordering), cfg)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::{Context, ProblemSpec, TrialRecord};
    use crate::model::{LatentContext, LatentModel};
    use std::collections::BTreeMap;

    /// A model whose one-step conditionals are fixed regardless of history.
    struct Fixed {
        spec: ProblemSpec,
        p: Vec<Vec<f64>>,
    }

    impl OutcomeModel for Fixed {
        fn spec(&self) -> &ProblemSpec {
            &self.spec
        }
        fn predict(&self, _h: &History, a: Action) -> Vec<f64> {
            self.p[a].clone()
        }
    }

    fn fixed(p: Vec<Vec<f64>>) -> Fixed {
        let spec = ProblemSpec::new(p.len(), vec![0.0, 1.0, 2.0], vec![1]).unwrap();
        Fixed { spec, p }
    }

    fn root(k: usize) -> History {
        History::empty(Context::new(vec![0]), k)
    }

    #[test]
    fn empty_history_exact_rho_is_one() {
        let m = fixed(vec![vec![0.2, 0.3, 0.5], vec![1.0, 0.0, 0.0]]);
        assert_eq!(rho(&m, &root(2), 0.0, BoundMode::Exact), 1.0);
    }

    #[test]
    fn exhausted_history_has_zero_rho() {
        let m = fixed(vec![vec![0.2, 0.3, 0.5]]);
        let h = root(1).extend(0, 0).unwrap();
        for mode in [BoundMode::Exact, BoundMode::Upper, BoundMode::Lower] {
            assert_eq!(rho(&m, &h, 0.0, mode), 0.0);
        }
    }

    #[test]
    fn independent_actions_exact_matches_product_formula() {
        let m = fixed(vec![vec![0.2, 0.3, 0.5], vec![0.1, 0.6, 0.3], vec![0.7, 0.2, 0.1]]);
        let h = root(3).extend(0, 1).unwrap();
        // P(max(Y1, Y2) > 1) = 1 - P(Y1 <= 1) P(Y2 <= 1)
        let expected = 1.0 - 0.7 * 0.9;
        assert!((rho(&m, &h, 0.0, BoundMode::Exact) - expected).abs() < 1e-12);
        assert!((rho(&m, &h, 0.0, BoundMode::Upper) - 0.4).abs() < 1e-12);
        assert!((rho(&m, &h, 0.0, BoundMode::Lower) - 0.3).abs() < 1e-12);
    }

    #[test]
    fn upper_bound_is_clamped() {
        let m = fixed(vec![vec![0.0, 0.0, 1.0], vec![0.0, 0.0, 1.0], vec![0.0, 0.0, 1.0]]);
        let h = root(3).extend(0, 0).unwrap();
        assert_eq!(rho(&m, &h, 0.0, BoundMode::Upper), 1.0);
    }

    #[test]
    fn epsilon_shifts_the_bar() {
        let m = fixed(vec![vec![0.2, 0.3, 0.5], vec![0.1, 0.6, 0.3]]);
        let h = root(2).extend(0, 0).unwrap();
        assert!((rho(&m, &h, 0.0, BoundMode::Exact) - 0.9).abs() < 1e-12);
        assert!((rho(&m, &h, 1.0, BoundMode::Exact) - 0.3).abs() < 1e-12);
        assert_eq!(rho(&m, &h, 2.0, BoundMode::Exact), 0.0);
    }

    #[test]
    fn gamma_threshold_arithmetic() {
        let cfg = |delta, alpha| StoppingConfig::new(0.0, delta, alpha, BoundMode::Exact).unwrap();
        assert!(!within_threshold(1.0, &cfg(0.4, 1.0)));
        assert!(!within_threshold(0.3, &cfg(0.4, 2.0)));
        assert!(within_threshold(0.3, &cfg(0.4, 1.0)));
        assert!(within_threshold(0.3, &cfg(0.7, 2.0)));
        assert!(!within_threshold(0.3, &cfg(0.5, 2.0)));
    }

    #[test]
    fn gamma_true_when_all_tried() {
        let m = fixed(vec![vec![0.0, 0.0, 1.0]]);
        let h = root(1).extend(0, 0).unwrap();
        let cfg = StoppingConfig::new(0.0, 0.0, 1.0, BoundMode::Exact).unwrap();
        assert!(gamma(&m, &h, &cfg));
    }

    #[test]
    fn permutation_average_equals_canonical_for_consistent_model() {
        let spec = ProblemSpec::new(3, vec![0.0, 1.0], vec![1]).unwrap();
        let lc = LatentContext {
            prior: vec![0.3, 0.7],
            outcomes: vec![
                vec![vec![0.9, 0.1], vec![0.2, 0.8], vec![0.5, 0.5]],
                vec![vec![0.1, 0.9], vec![0.6, 0.4], vec![0.7, 0.3]],
            ],
        };
        let m = LatentModel::new(spec, BTreeMap::from([(Context::new(vec![0]), lc)])).unwrap();
        let h = History::from_trials(Context::new(vec![0]), 3, [TrialRecord::new(1, 0)]).unwrap();
        let a = rho_with_ordering(&m, &h, 0.0, BoundMode::Exact, ExactOrdering::Canonical);
        let b = rho_with_ordering(&m, &h, 0.0, BoundMode::Exact, ExactOrdering::PermutationAverage);
        assert!((a - b).abs() < 1e-12);
    }

    #[test]
    fn config_validation() {
        assert!(StoppingConfig::new(-0.1, 0.1, 1.0, BoundMode::Exact).is_err());
        assert!(StoppingConfig::new(0.0, -0.1, 1.0, BoundMode::Exact).is_err());
        assert!(StoppingConfig::new(0.0, 0.1, 0.5, BoundMode::Exact).is_err());
        assert!(StoppingConfig::new(0.0, 1.5, 1.0, BoundMode::Exact).is_ok());
    }

    #[test]
    fn permutations_count() {
        assert_eq!(permutations(&[0, 1, 2, 3]).len(), 24);
        assert_eq!(permutations(&[]).len(), 1);
    }
}
