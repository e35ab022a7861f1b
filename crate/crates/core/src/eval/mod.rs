//! Scoring policies against subjects whose full potential-outcome vectors
//! are known.

mod behavior;
mod sweep;

pub use behavior::{fit_emulated_behavior, EmulatedBehaviorPolicy};
pub use sweep::{sweep, SweepResult, SweepRow};

use rand::RngCore;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::domain::{Context, Decision, History, ProblemSpec, Subject, Trajectory, TrialRecord};
use crate::error::{EvalError, PolicyError};
use crate::model::OutcomeModel;
use crate::rng::{stream, StreamPurpose};
use crate::solvers::Policy;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EvalConfig {
    /// Efficacy tolerance in outcome units.
    pub epsilon: f64,
    /// Defaults to `k`.
    pub max_steps: Option<usize>,
    /// Seeds the rollout streams of stochastic policies.
    pub seed: u64,
}

impl Default for EvalConfig {
    fn default() -> Self {
        EvalConfig { epsilon: 0.0, max_steps: None, seed: 0 }
    }
}

impl EvalConfig {
    pub fn validate(&self) -> Result<(), EvalError> {
        if !(self.epsilon >= 0.0 && self.epsilon.is_finite()) {
            return Err(EvalError::InvalidConfig(format!("epsilon must be >= 0, got {}", self.epsilon)));
        }
        Ok(())
    }
}

/// Runs `policy` on one subject, revealing its potential outcomes as actions
/// are taken. `terminal` is false only when `max_steps` cut the search short.
pub fn rollout<P: Policy + ?Sized>(
    policy: &P,
    subject: &Subject,
    num_actions: usize,
    max_steps: usize,
    rng: &mut dyn RngCore,
) -> Result<Trajectory, PolicyError> {
    let mut h = History::empty(subject.context.clone(), num_actions);
    // chronological; `h` keeps trials sorted by action
    let mut steps = Vec::new();
    loop {
        if h.len() >= max_steps {
            return Ok(Trajectory::new(subject.context.clone(), steps, false));
        }
        match policy.decide(&h, rng)? {
            Decision::Stop => return Ok(Trajectory::new(subject.context.clone(), steps, true)),
            Decision::Try(a) if a >= num_actions => return Err(PolicyError::InvalidAction(a)),
            Decision::Try(a) if h.contains(a) => return Err(PolicyError::RepeatedAction(a)),
            Decision::Try(a) => {
                h = h.extend(a, subject.outcome(a)).expect("checked above");
                steps.push(TrialRecord::new(a, subject.outcome(a)));
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub n_subjects: usize,
    pub efficacy: f64,
    pub efficacy_se: f64,
    pub mean_search_time: f64,
    pub search_time_se: f64,
    pub worst_search_time: usize,
    /// Mean best outcome value after `1..=max_steps` trials; stopped subjects
    /// keep their best at termination.
    pub best_so_far_curve: Vec<f64>,
}

struct Scored {
    steps: usize,
    success: bool,
    curve: Vec<f64>,
}

fn score(spec: &ProblemSpec, subject: &Subject, traj: &Trajectory, epsilon: f64, curve_len: usize) -> Scored {
    let target = spec.outcome_value(subject.best_outcome()) - epsilon;
    let floor = spec.outcome_values()[0];
    let mut best: Option<f64> = None;
    let mut curve = Vec::with_capacity(curve_len);
    for t in 0..curve_len {
        if let Some(trial) = traj.trials.get(t) {
            let v = spec.outcome_value(trial.outcome);
            best = Some(best.map_or(v, |b| b.max(v)));
        }
        curve.push(best.unwrap_or(floor));
    }
    let success = best.is_some_and(|b| b >= target);
    Scored { steps: traj.len(), success, curve }
}

fn summarize(scored: &[(Scored, f64)], curve_len: usize) -> Metrics {
    let n = scored.len();
    let total_w: f64 = scored.iter().map(|(_, w)| w).sum();
    let mean = |f: &dyn Fn(&Scored) -> f64| scored.iter().map(|(s, w)| w * f(s)).sum::<f64>() / total_w;
    let se = |f: &dyn Fn(&Scored) -> f64, m: f64| {
        if n < 2 {
            return 0.0;
        }
        let var = scored.iter().map(|(s, w)| w * (f(s) - m).powi(2)).sum::<f64>() / total_w;
        (var * n as f64 / (n as f64 - 1.0) / n as f64).sqrt()
    };
    let eff = |s: &Scored| f64::from(u8::from(s.success));
    let time = |s: &Scored| s.steps as f64;
    let efficacy = mean(&eff);
    let mean_search_time = mean(&time);
    let best_so_far_curve = (0..curve_len).map(|t| mean(&|s: &Scored| s.curve[t])).collect();
    Metrics {
        n_subjects: n,
        efficacy,
        efficacy_se: se(&eff, efficacy),
        mean_search_time,
        search_time_se: se(&time, mean_search_time),
        worst_search_time: scored.iter().map(|(s, _)| s.steps).max().unwrap_or(0),
        best_so_far_curve,
    }
}

/// Weighted evaluation, e.g. over an exactly enumerated subject distribution.
///
/// Subjects are put in canonical order before rollout streams are assigned,
/// so the result does not depend on the input order.
pub fn evaluate_weighted<P: Policy + ?Sized>(
    policy: &P,
    spec: &ProblemSpec,
    subjects: &[(Subject, f64)],
    cfg: &EvalConfig,
) -> Result<Metrics, EvalError> {
    cfg.validate()?;
    let k = spec.num_actions();
    let max_steps = cfg.max_steps.unwrap_or(k).min(k);
    let mut order: Vec<&(Subject, f64)> = subjects.iter().collect();
    order.sort_by(|a, b| {
        (&a.0.context, &a.0.potential_outcomes).cmp(&(&b.0.context, &b.0.potential_outcomes)).then(a.1.total_cmp(&b.1))
    });
    let scored: Vec<(Scored, f64)> = order
        .par_iter()
        .enumerate()
        .map(|(i, (subject, w))| {
            let mut rng = stream(cfg.seed, StreamPurpose::Rollout, i as u64);
            let traj = rollout(policy, subject, k, max_steps, &mut rng)?;
            Ok((score(spec, subject, &traj, cfg.epsilon, max_steps), *w))
        })
        .collect::<Result<_, PolicyError>>()?;
    Ok(summarize(&scored, max_steps))
}

pub fn evaluate<P: Policy + ?Sized>(
    policy: &P,
    spec: &ProblemSpec,
    subjects: &[Subject],
    cfg: &EvalConfig,
) -> Result<Metrics, EvalError> {
    let weighted: Vec<(Subject, f64)> = subjects.iter().map(|s| (s.clone(), 1.0)).collect();
    evaluate_weighted(policy, spec, &weighted, cfg)
}

/// Mean and across-seed standard error of per-seed metrics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeedSummary {
    pub n_seeds: usize,
    pub efficacy: f64,
    pub efficacy_se: f64,
    pub mean_search_time: f64,
    pub search_time_se: f64,
}

pub fn summarize_seeds(runs: &[Metrics]) -> SeedSummary {
    let m = runs.len() as f64;
    let stat = |f: fn(&Metrics) -> f64| {
        let mean = runs.iter().map(f).sum::<f64>() / m;
        let se = if runs.len() < 2 {
            0.0
        } else {
            (runs.iter().map(|r| (f(r) - mean).powi(2)).sum::<f64>() / (m - 1.0) / m).sqrt()
        };
        (mean, se)
    };
    let (efficacy, efficacy_se) = stat(|r| r.efficacy);
    let (mean_search_time, search_time_se) = stat(|r| r.mean_search_time);
    SeedSummary { n_seeds: runs.len(), efficacy, efficacy_se, mean_search_time, search_time_se }
}

/// Standard error of a difference of two independent estimates.
pub fn pooled_se(se_a: f64, se_b: f64) -> f64 {
    (se_a * se_a + se_b * se_b).sqrt()
}

/// Expected and worst-case number of trials of a deterministic policy when
/// outcomes follow `model`, by walking the policy tree.
pub fn policy_tree_stats<P: Policy + ?Sized, M: OutcomeModel + ?Sized>(
    policy: &P,
    model: &M,
    context: &Context,
) -> Result<(f64, usize), PolicyError> {
    fn walk<P: Policy + ?Sized, M: OutcomeModel + ?Sized>(
        policy: &P,
        model: &M,
        h: &History,
        rng: &mut dyn RngCore,
    ) -> Result<(f64, usize), PolicyError> {
        match policy.decide(h, rng)? {
            Decision::Stop => Ok((0.0, 0)),
            Decision::Try(a) if a >= h.num_actions() => Err(PolicyError::InvalidAction(a)),
            Decision::Try(a) if h.contains(a) => Err(PolicyError::RepeatedAction(a)),
            Decision::Try(a) => {
                let (mut expected, mut worst) = (1.0, 1);
                for (y, p) in model.predict(h, a).into_iter().enumerate() {
                    if p > 0.0 {
                        let (e, w) = walk(policy, model, &h.extend(a, y).expect("checked above"), rng)?;
                        expected += p * e;
                        worst = worst.max(1 + w);
                    }
                }
                Ok((expected, worst))
            }
        }
    }
    let mut rng = stream(0, StreamPurpose::Rollout, 0);
    walk(policy, model, &History::empty(context.clone(), model.spec().num_actions()), &mut rng)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dgp::toy::example1;
    use crate::solvers::{solve_cdp, GreedyPolicy};
    use crate::stopping::{BoundMode, StoppingConfig};

    struct Exhaustive;
    impl Policy for Exhaustive {
        fn decide(&self, h: &History, _: &mut dyn RngCore) -> Result<Decision, PolicyError> {
            Ok(h.untried().first().map_or(Decision::Stop, |&a| Decision::Try(a)))
        }
    }

    struct StopNow;
    impl Policy for StopNow {
        fn decide(&self, _: &History, _: &mut dyn RngCore) -> Result<Decision, PolicyError> {
            Ok(Decision::Stop)
        }
    }

    struct Stubborn;
    impl Policy for Stubborn {
        fn decide(&self, _: &History, _: &mut dyn RngCore) -> Result<Decision, PolicyError> {
            Ok(Decision::Try(0))
        }
    }

    fn exact(delta: f64) -> StoppingConfig {
        StoppingConfig::new(0.0, delta, 1.0, BoundMode::Exact).unwrap()
    }

    #[test]
    fn exhaustive_and_immediate_stop() {
        let toy = example1();
        let subjects = toy.subjects();
        let m = evaluate_weighted(&Exhaustive, toy.spec(), &subjects, &EvalConfig::default()).unwrap();
        assert_eq!(m.efficacy, 1.0);
        assert!((m.mean_search_time - 3.0).abs() < 1e-12);
        let m = evaluate_weighted(&StopNow, toy.spec(), &subjects, &EvalConfig::default()).unwrap();
        assert_eq!(m.efficacy, 0.0);
        assert_eq!(m.mean_search_time, 0.0);
        assert_eq!(m.best_so_far_curve, vec![0.0; 3]);
        // A tolerance spanning the whole grid counts even an empty search as a failure.
        let wide = EvalConfig { epsilon: 5.0, ..EvalConfig::default() };
        assert_eq!(evaluate_weighted(&StopNow, toy.spec(), &subjects, &wide).unwrap().efficacy, 0.0);
    }

    #[test]
    fn repeated_action_surfaces() {
        let toy = example1();
        let s = &toy.subjects()[0].0;
        let mut rng = stream(0, StreamPurpose::Rollout, 0);
        assert_eq!(rollout(&Stubborn, s, 3, 3, &mut rng), Err(PolicyError::RepeatedAction(0)));
    }

    #[test]
    fn example1_cdp_metrics() {
        let toy = example1();
        let policy = solve_cdp(&toy.model, &exact(0.0), &[toy.context()]).unwrap();
        let m = evaluate_weighted(&policy, toy.spec(), &toy.subjects(), &EvalConfig::default()).unwrap();
        assert_eq!(m.efficacy, 1.0);
        assert!((m.mean_search_time - 1.4).abs() < 1e-12);
        assert_eq!(m.worst_search_time, 2);
        assert_eq!(policy_tree_stats(&policy, &toy.model, &toy.context()).unwrap().1, 2);
    }

    #[test]
    fn example1_greedy_branches() {
        let toy = example1();
        let policy = GreedyPolicy::new(&toy.model, exact(0.0)).unwrap();
        let mut by_len = [0.0; 4];
        for (s, w) in toy.subjects() {
            let mut rng = stream(0, StreamPurpose::Rollout, 0);
            by_len[rollout(&policy, &s, 3, 3, &mut rng).unwrap().len()] += w;
        }
        let want = [0.0, 0.65, 0.35 * 4.0 / 7.0, 0.35 * 3.0 / 7.0];
        for (g, w) in by_len.iter().zip(want) {
            assert!((g - w).abs() < 1e-12, "{by_len:?}");
        }
        let (e, worst) = policy_tree_stats(&policy, &toy.model, &toy.context()).unwrap();
        assert!((e - 1.5).abs() < 1e-12);
        assert_eq!(worst, 3);
    }

    #[test]
    fn rollout_keeps_step_order() {
        let toy = example1();
        let policy = GreedyPolicy::new(&toy.model, exact(0.0)).unwrap();
        let s = Subject::new(toy.context(), vec![0, 0, 0]);
        let traj = rollout(&policy, &s, 3, 3, &mut stream(0, StreamPurpose::Rollout, 0)).unwrap();
        let actions: Vec<usize> = traj.trials.iter().map(|t| t.action).collect();
        assert_eq!(actions, vec![2, 0, 1]);
    }

    #[test]
    fn order_invariance() {
        let toy = example1();
        let mut subjects = toy.subjects();
        let policy = solve_cdp(&toy.model, &exact(0.3), &[toy.context()]).unwrap();
        let a = evaluate_weighted(&policy, toy.spec(), &subjects, &EvalConfig::default()).unwrap();
        subjects.reverse();
        let b = evaluate_weighted(&policy, toy.spec(), &subjects, &EvalConfig::default()).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn seed_summary() {
        let mk = |e: f64| Metrics {
            n_subjects: 1,
            efficacy: e,
            efficacy_se: 0.0,
            mean_search_time: 1.0,
            search_time_se: 0.0,
            worst_search_time: 1,
            best_so_far_curve: vec![],
        };
        let s = summarize_seeds(&[mk(0.2), mk(0.4)]);
        assert!((s.efficacy - 0.3).abs() < 1e-12);
        assert!((s.efficacy_se - 0.1).abs() < 1e-12);
        assert_eq!(s.search_time_se, 0.0);
        assert_eq!(pooled_se(3.0, 4.0), 5.0);
    }
}
