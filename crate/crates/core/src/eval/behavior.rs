use std::collections::HashMap;

use rand::RngCore;
use serde::{Deserialize, Serialize};

use crate::domain::{CanonicalKey, Dataset, Decision, History};
use crate::error::{ModelError, PolicyError};
use crate::model::sample_categorical;
use crate::solvers::Policy;

/// Tabular estimate of the policy that produced a dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmulatedBehaviorPolicy {
    counts: HashMap<CanonicalKey, Vec<(Decision, u64)>>,
    /// Share of STOP among decisions taken after at least one trial.
    stop_rate: f64,
}

pub fn fit_emulated_behavior(dataset: &Dataset) -> Result<EmulatedBehaviorPolicy, ModelError> {
    if dataset.is_empty() {
        return Err(ModelError::EmptyData);
    }
    let k = dataset.spec.num_actions();
    let mut counts: HashMap<CanonicalKey, HashMap<Decision, u64>> = HashMap::new();
    let (mut stops, mut later) = (0u64, 0u64);
    for traj in &dataset.trajectories {
        for (h, trial) in traj.steps(k)? {
            *counts.entry(h.key()).or_default().entry(Decision::Try(trial.action)).or_default() += 1;
            if !h.is_empty() {
                later += 1;
            }
        }
        if traj.terminal {
            let h = traj.final_history(k)?;
            *counts.entry(h.key()).or_default().entry(Decision::Stop).or_default() += 1;
            if !h.is_empty() {
                stops += 1;
                later += 1;
            }
        }
    }
    let counts = counts
        .into_iter()
        .map(|(key, m)| {
            let mut v: Vec<(Decision, u64)> = m.into_iter().collect();
            v.sort_by_key(|(d, _)| d.action().map_or(0, |a| a + 1));
            (key, v)
        })
        .collect();
    let stop_rate = if later == 0 { 0.0 } else { stops as f64 / later as f64 };
    Ok(EmulatedBehaviorPolicy { counts, stop_rate })
}

impl EmulatedBehaviorPolicy {
    pub fn stop_rate(&self) -> f64 {
        self.stop_rate
    }

    /// Estimated next-step distribution at `h`.
    pub fn probabilities(&self, h: &History) -> Vec<(Decision, f64)> {
        if h.is_exhausted() {
            return vec![(Decision::Stop, 1.0)];
        }
        if let Some(row) = self.counts.get(&h.key()) {
            let total: u64 = row.iter().map(|(_, c)| c).sum();
            return row.iter().map(|&(d, c)| (d, c as f64 / total as f64)).collect();
        }
        let untried = h.untried();
        let p_stop = if h.is_empty() { 0.0 } else { self.stop_rate };
        let each = (1.0 - p_stop) / untried.len() as f64;
        let mut out = Vec::with_capacity(untried.len() + 1);
        if p_stop > 0.0 {
            out.push((Decision::Stop, p_stop));
        }
        out.extend(untried.into_iter().map(|a| (Decision::Try(a), each)));
        out
    }
}

impl Policy for EmulatedBehaviorPolicy {
    fn decide(&self, h: &History, rng: &mut dyn RngCore) -> Result<Decision, PolicyError> {
        let dist = self.probabilities(h);
        let probs: Vec<f64> = dist.iter().map(|(_, p)| *p).collect();
        Ok(dist[sample_categorical(&probs, rng)].0)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::{Context, ProblemSpec, Trajectory, TrialRecord};
    use crate::rng::{stream, StreamPurpose};

    fn spec() -> ProblemSpec {
        ProblemSpec::with_integer_outcomes(3, 2, vec![1]).unwrap()
    }

    #[test]
    fn single_trajectory_stops_where_it_stopped() {
        let ctx = Context::new(vec![0]);
        let traj = Trajectory::new(ctx.clone(), vec![TrialRecord::new(2, 1)], true);
        let data = Dataset::new(spec(), vec![traj]).unwrap();
        let policy = fit_emulated_behavior(&data).unwrap();
        let h = History::empty(ctx.clone(), 3).extend(2, 1).unwrap();
        assert_eq!(policy.probabilities(&h), vec![(Decision::Stop, 1.0)]);
        assert_eq!(policy.probabilities(&History::empty(ctx, 3)), vec![(Decision::Try(2), 1.0)]);
    }

    #[test]
    fn first_action_frequencies() {
        let ctx = Context::new(vec![0]);
        let trajs = vec![
            Trajectory::new(ctx.clone(), vec![TrialRecord::new(0, 0)], true),
            Trajectory::new(ctx.clone(), vec![TrialRecord::new(0, 1), TrialRecord::new(1, 0)], true),
            Trajectory::new(ctx.clone(), vec![TrialRecord::new(2, 0)], true),
        ];
        let policy = fit_emulated_behavior(&Dataset::new(spec(), trajs).unwrap()).unwrap();
        let p = policy.probabilities(&History::empty(ctx, 3));
        assert_eq!(p, vec![(Decision::Try(0), 2.0 / 3.0), (Decision::Try(2), 1.0 / 3.0)]);
        // Three stops among four decisions after the first trial.
        assert!((policy.stop_rate() - 0.75).abs() < 1e-12);
    }

    #[test]
    fn never_repeats_on_unseen_histories() {
        let ctx = Context::new(vec![0]);
        let trajs = vec![Trajectory::new(ctx.clone(), vec![TrialRecord::new(0, 0)], true)];
        let policy = fit_emulated_behavior(&Dataset::new(spec(), trajs).unwrap()).unwrap();
        let h = History::empty(ctx, 3).extend(1, 1).unwrap();
        let mut rng = stream(1, StreamPurpose::Rollout, 0);
        for _ in 0..200 {
            assert_ne!(policy.decide(&h, &mut rng).unwrap(), Decision::Try(1));
        }
    }

    #[test]
    fn empty_dataset_is_rejected() {
        assert!(fit_emulated_behavior(&Dataset::new(spec(), vec![]).unwrap()).is_err());
    }
}
