//! Synthetic observational data with a binary latent moderator and a
//! history-dependent behavior policy.
//!
//! `Z ∈ {0,1}^d` is hidden, `X ∈ {0,1}^v` is the observed context, and each
//! potential outcome `Y(a)` is a discretized Cauchy draw whose location and
//! scale are affine in `[1; x; z]`.

pub mod toy;

use std::collections::BTreeMap;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::domain::{
    Action, Context, Dataset, Decision, History, ProblemSpec, Subject, SubjectPanel, Trajectory, TrialRecord,
};
use crate::error::DgpError;
use crate::model::sample_categorical;
use crate::model::{LatentContext, LatentModel};
use crate::rng::{stream, StreamPurpose};

pub use toy::{build_toy, ToyInstance, ToyKind};

const MIN_SCALE: f64 = 0.05;
const X_PROB_CLIP: (f64, f64) = (0.02, 0.98);
const MAX_RESAMPLES: usize = 100;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DgpParams {
    pub num_actions: usize,
    pub num_outcomes: usize,
    /// `d`, the number of binary moderators.
    pub moderator_dims: usize,
    /// `v`, the number of binary context covariates.
    pub context_dims: usize,
    pub w_x: f64,
    pub p_stop: f64,
    pub seed: u64,
}

impl Default for DgpParams {
    fn default() -> Self {
        DgpParams {
            num_actions: 5,
            num_outcomes: 3,
            moderator_dims: 3,
            context_dims: 1,
            w_x: 1.0,
            p_stop: 0.1,
            seed: 0,
        }
    }
}

impl DgpParams {
    pub fn validate(&self) -> Result<(), DgpError> {
        let bad = |m: &str| Err(DgpError::InvalidParams(m.into()));
        if self.num_actions == 0 || self.moderator_dims == 0 || self.context_dims == 0 {
            return bad("k, d and v must be at least 1");
        }
        if self.num_outcomes < 2 {
            return bad("n_y must be at least 2");
        }
        if !(0.0..=1.0).contains(&self.p_stop) {
            return bad("p_stop must lie in [0, 1]");
        }
        if !self.w_x.is_finite() {
            return bad("w_x must be finite");
        }
        // The latent enumeration is exponential in d and v.
        if self.moderator_dims > 16 || self.context_dims > 16 {
            return bad("d and v are limited to 16");
        }
        Ok(())
    }
}

/// Drawn parameters and the tables derived from them.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DgpInstance {
    pub params: DgpParams,
    /// `P(Z_i = 1)`, length `d`.
    pub alpha: Vec<f64>,
    /// `v × d`.
    pub beta: Vec<Vec<f64>>,
    /// `k × (1+v+d)`, context columns scaled by `w_x`.
    pub u1: Vec<Vec<f64>>,
    /// `k × (1+v+d)`, non-negative.
    pub u2: Vec<Vec<f64>>,
    /// `k × (1+v+k)`.
    pub eta: Vec<Vec<f64>>,
    pub u1_neg: Vec<f64>,
    pub u1_pos: Vec<f64>,
    pub u2_neg: Vec<f64>,
    pub u2_pos: Vec<f64>,
    /// `k × k`, squared distances between action rows.
    pub delta: Vec<Vec<f64>>,
    /// `outcome_tables[x][z][a][y]` with `x`, `z` as little-endian bit indices.
    pub outcome_tables: Vec<Vec<Vec<Vec<f64>>>>,
}

fn bits(index: usize, len: usize) -> Vec<usize> {
    (0..len).map(|i| (index >> i) & 1).collect()
}

fn bit_index(bits: &[usize]) -> usize {
    bits.iter().enumerate().map(|(i, &b)| b << i).sum()
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn cauchy_pdf(y: f64, location: f64, scale: f64) -> f64 {
    let t = (y - location) / scale;
    1.0 / (std::f64::consts::PI * scale * (1.0 + t * t))
}

fn std_normal_row<R: Rng + ?Sized>(len: usize, rng: &mut R) -> Vec<f64> {
    (0..len).map(|_| rng.sample::<f64, _>(rand_distr::StandardNormal)).collect()
}

fn neg_pos(row: &[f64]) -> (f64, f64) {
    let neg = row.iter().filter(|&&u| u < 0.0).sum();
    let pos = row.iter().filter(|&&u| u > 0.0).sum();
    (neg, pos)
}

pub fn build_instance(params: &DgpParams) -> Result<DgpInstance, DgpError> {
    params.validate()?;
    let DgpParams { num_actions: k, num_outcomes: n_y, moderator_dims: d, context_dims: v, w_x, .. } = *params;
    let mut rng = stream(params.seed, StreamPurpose::Instance, 0);
    let alpha: Vec<f64> = (0..d).map(|_| rng.random::<f64>()).collect();
    let beta: Vec<Vec<f64>> = (0..v).map(|_| (0..d).map(|_| rng.random::<f64>()).collect()).collect();

    let width = 1 + v + d;
    let scale_context = |row: &mut Vec<f64>| row[1..=v].iter_mut().for_each(|u| *u *= w_x);
    let mut u1 = Vec::with_capacity(k);
    let mut u2 = Vec::with_capacity(k);
    for a in 0..k {
        let mut attempts = 0;
        loop {
            let mut r1 = std_normal_row(width, &mut rng);
            let mut r2: Vec<f64> = std_normal_row(width, &mut rng).into_iter().map(f64::abs).collect();
            scale_context(&mut r1);
            scale_context(&mut r2);
            let (n1, p1) = neg_pos(&r1);
            let (n2, p2) = neg_pos(&r2);
            if p1 - n1 > 0.0 && p2 - n2 > 0.0 {
                u1.push(r1);
                u2.push(r2);
                break;
            }
            attempts += 1;
            if attempts >= MAX_RESAMPLES {
                return Err(DgpError::DegenerateScale(a));
            }
        }
    }
    let eta: Vec<Vec<f64>> = (0..k).map(|_| std_normal_row(1 + v + k, &mut rng)).collect();
    let (u1_neg, u1_pos): (Vec<f64>, Vec<f64>) = u1.iter().map(|r| neg_pos(r)).unzip();
    let (u2_neg, u2_pos): (Vec<f64>, Vec<f64>) = u2.iter().map(|r| neg_pos(r)).unzip();

    let sq_dist =
        |m: &[Vec<f64>], a: usize, b: usize| -> f64 { m[a].iter().zip(&m[b]).map(|(x, y)| (x - y) * (x - y)).sum() };
    let delta: Vec<Vec<f64>> =
        (0..k).map(|a| (0..k).map(|b| sq_dist(&u1, a, b) + sq_dist(&u2, a, b)).collect()).collect();

    let mut inst = DgpInstance {
        params: *params,
        alpha,
        beta,
        u1,
        u2,
        eta,
        u1_neg,
        u1_pos,
        u2_neg,
        u2_pos,
        delta,
        outcome_tables: Vec::new(),
    };
    inst.outcome_tables = (0..1usize << v)
        .map(|x| {
            (0..1usize << d)
                .map(|z| {
                    (0..k)
                        .map(|a| {
                            let (loc, scale) = inst.location_scale(x, z, a);
                            let raw: Vec<f64> = (0..n_y).map(|y| cauchy_pdf(y as f64, loc, scale)).collect();
                            let total: f64 = raw.iter().sum();
                            raw.into_iter().map(|p| p / total).collect()
                        })
                        .collect()
                })
                .collect()
        })
        .collect();
    Ok(inst)
}

impl DgpInstance {
    pub fn spec(&self) -> ProblemSpec {
        ProblemSpec::with_integer_outcomes(
            self.params.num_actions,
            self.params.num_outcomes,
            vec![2; self.params.context_dims],
        )
        .expect("validated params")
    }

    fn features(&self, x: usize, z: usize) -> Vec<f64> {
        let mut f = vec![1.0];
        f.extend(bits(x, self.params.context_dims).into_iter().map(|b| b as f64));
        f.extend(bits(z, self.params.moderator_dims).into_iter().map(|b| b as f64));
        f
    }

    /// Location in `[0, n_y − 1]` and scale in `[0.05, 1]` for one cell.
    pub fn location_scale(&self, x: usize, z: usize, a: Action) -> (f64, f64) {
        let f = self.features(x, z);
        let n_y = self.params.num_outcomes as f64;
        let loc = (n_y - 1.0) * (dot(&self.u1[a], &f) - self.u1_neg[a]) / (self.u1_pos[a] - self.u1_neg[a]);
        let scale = (dot(&self.u2[a], &f) - self.u2_neg[a]) / (self.u2_pos[a] - self.u2_neg[a]);
        (loc, scale.max(MIN_SCALE))
    }

    pub fn num_latent_states(&self) -> usize {
        1 << self.params.moderator_dims
    }

    pub fn prob_z(&self, z: usize) -> f64 {
        bits(z, self.params.moderator_dims)
            .iter()
            .zip(&self.alpha)
            .map(|(&b, &p)| if b == 1 { p } else { 1.0 - p })
            .product()
    }

    fn x_probs(&self, z: usize) -> Vec<f64> {
        let zb: Vec<f64> = bits(z, self.params.moderator_dims).into_iter().map(|b| b as f64).collect();
        self.beta.iter().map(|row| dot(row, &zb).clamp(X_PROB_CLIP.0, X_PROB_CLIP.1)).collect()
    }

    pub fn prob_x_given_z(&self, x: usize, z: usize) -> f64 {
        bits(x, self.params.context_dims)
            .iter()
            .zip(self.x_probs(z))
            .map(|(&b, p)| if b == 1 { p } else { 1.0 - p })
            .product()
    }

    /// `p(x)` for every context, in bit-index order.
    pub fn context_distribution(&self) -> Vec<(Context, f64)> {
        (0..1usize << self.params.context_dims)
            .map(|x| {
                let p = (0..self.num_latent_states()).map(|z| self.prob_z(z) * self.prob_x_given_z(x, z)).sum();
                (Context::new(bits(x, self.params.context_dims)), p)
            })
            .collect()
    }

    pub fn outcome_distribution(&self, context: &Context, z: usize, a: Action) -> &[f64] {
        &self.outcome_tables[bit_index(context.coords())][z][a]
    }

    /// Closed-form `p(Y(a) = ·)` marginalized over `x` and `z`.
    pub fn outcome_marginal(&self, a: Action) -> Vec<f64> {
        let mut out = vec![0.0; self.params.num_outcomes];
        for x in 0..1usize << self.params.context_dims {
            for z in 0..self.num_latent_states() {
                let w = self.prob_z(z) * self.prob_x_given_z(x, z);
                out.iter_mut().zip(&self.outcome_tables[x][z][a]).for_each(|(o, p)| *o += w * p);
            }
        }
        out
    }

    /// Ground-truth outcome model `p(Y(a) | h)` obtained by enumerating `Z`.
    pub fn true_model(&self) -> LatentModel {
        let contexts: BTreeMap<Context, LatentContext> = (0..1usize << self.params.context_dims)
            .map(|x| {
                let joint: Vec<f64> =
                    (0..self.num_latent_states()).map(|z| self.prob_z(z) * self.prob_x_given_z(x, z)).collect();
                let total: f64 = joint.iter().sum();
                let lc = LatentContext {
                    prior: joint.into_iter().map(|p| p / total).collect(),
                    outcomes: self.outcome_tables[x].clone(),
                };
                (Context::new(bits(x, self.params.context_dims)), lc)
            })
            .collect();
        LatentModel::new(self.spec(), contexts).expect("instance tables are distributions")
    }

    /// Next-step distribution of the behavior policy, STOP included.
    pub fn behavior_distribution(&self, h: &History) -> Vec<(Decision, f64)> {
        if h.is_exhausted() {
            return vec![(Decision::Stop, 1.0)];
        }
        let k = self.params.num_actions;
        let mut state = vec![1.0];
        state.extend(h.context().coords().iter().map(|&b| b as f64));
        state.extend((0..k).map(|a| if h.contains(a) { 1.0 } else { 0.0 }));
        let weights: Vec<(Action, f64)> = h
            .untried()
            .into_iter()
            .map(|a| {
                let w = h.trials().iter().fold(dot(&self.eta[a], &state).exp(), |acc, t| acc * self.delta[a][t.action]);
                (a, w)
            })
            .collect();
        let total: f64 = weights.iter().map(|(_, w)| w).sum();
        let p_stop = if h.is_empty() { 0.0 } else { self.params.p_stop };
        let mut out = Vec::with_capacity(weights.len() + 1);
        if p_stop > 0.0 {
            out.push((Decision::Stop, p_stop));
        }
        out.extend(weights.into_iter().map(|(a, w)| (Decision::Try(a), (1.0 - p_stop) * w / total)));
        out
    }

    pub fn behavior_next_action<R: Rng + ?Sized>(&self, h: &History, rng: &mut R) -> Decision {
        let dist = self.behavior_distribution(h);
        let probs: Vec<f64> = dist.iter().map(|(_, p)| *p).collect();
        dist[sample_categorical(&probs, rng)].0
    }

    pub fn sample_subject<R: Rng + ?Sized>(&self, rng: &mut R) -> Subject {
        let zb: Vec<usize> = self.alpha.iter().map(|&p| usize::from(rng.random::<f64>() < p)).collect();
        let z = bit_index(&zb);
        let xb: Vec<usize> = self.x_probs(z).into_iter().map(|p| usize::from(rng.random::<f64>() < p)).collect();
        let x = bit_index(&xb);
        let potential_outcomes = self.outcome_tables[x][z].iter().map(|row| sample_categorical(row, rng)).collect();
        Subject { context: Context::new(xb), latent: Some(z), potential_outcomes }
    }

    pub fn sample_trajectory<R: Rng + ?Sized>(&self, subject: &Subject, rng: &mut R) -> Trajectory {
        let k = self.params.num_actions;
        let mut h = History::empty(subject.context.clone(), k);
        let mut steps = Vec::new();
        loop {
            match self.behavior_next_action(&h, rng) {
                Decision::Stop => break,
                Decision::Try(a) => {
                    h = h.extend(a, subject.outcome(a)).expect("behavior proposes untried actions");
                    steps.push(TrialRecord::new(a, subject.outcome(a)));
                }
            }
        }
        Trajectory::new(subject.context.clone(), steps, true)
    }

    /// Subject `i` of a panel seeded by `seed`; independent of how many others are drawn.
    pub fn subject_at(&self, seed: u64, i: u64) -> Subject {
        self.sample_subject(&mut stream(seed, StreamPurpose::Subject, i))
    }

    /// `n` behavior trajectories and the full potential-outcome panels of the same subjects.
    pub fn generate(&self, n: usize, seed: u64) -> (Dataset, SubjectPanel) {
        let pairs: Vec<(Trajectory, Subject)> = (0..n as u64)
            .into_par_iter()
            .map(|i| {
                let subject = self.subject_at(seed, i);
                let traj = self.sample_trajectory(&subject, &mut stream(seed, StreamPurpose::Trajectory, i));
                (traj, subject)
            })
            .collect();
        let (trajectories, subjects): (Vec<_>, Vec<_>) = pairs.into_iter().unzip();
        let spec = self.spec();
        (
            Dataset::new(spec.clone(), trajectories).expect("generated trajectories are valid"),
            SubjectPanel::new(spec, subjects).expect("generated subjects are valid"),
        )
    }

    /// `n` ground-truth subjects.
    pub fn sample_panel(&self, n: usize, seed: u64) -> SubjectPanel {
        let subjects = (0..n as u64).into_par_iter().map(|i| self.subject_at(seed, i)).collect();
        SubjectPanel::new(self.spec(), subjects).expect("generated subjects are valid")
    }
}

/// A random latent-moderator model on a small grid, for cross-checking
/// solvers. Roughly a third of the outcome rows are deterministic so that
/// exact zeros, and hence certain histories, occur.
pub fn random_latent_model<R: Rng + ?Sized>(
    num_actions: usize,
    num_outcomes: usize,
    num_contexts: usize,
    num_latent: usize,
    rng: &mut R,
) -> Result<LatentModel, DgpError> {
    if num_latent == 0 || num_contexts == 0 {
        return Err(DgpError::InvalidParams("need at least one context and one latent state".into()));
    }
    let spec = ProblemSpec::with_integer_outcomes(num_actions, num_outcomes, vec![num_contexts])?;
    let random_dist = |n: usize, rng: &mut R| -> Vec<f64> {
        let w: Vec<f64> = (0..n).map(|_| rng.random::<f64>() + 1e-3).collect();
        let t: f64 = w.iter().sum();
        w.into_iter().map(|x| x / t).collect()
    };
    let contexts = (0..num_contexts)
        .map(|x| {
            let prior = random_dist(num_latent, rng);
            let outcomes = (0..num_latent)
                .map(|_| {
                    (0..num_actions)
                        .map(|_| {
                            if rng.random::<f64>() < 1.0 / 3.0 {
                                let mut row = vec![0.0; num_outcomes];
                                row[rng.random_range(0..num_outcomes)] = 1.0;
                                row
                            } else {
                                random_dist(num_outcomes, rng)
                            }
                        })
                        .collect()
                })
                .collect();
            (Context::new(vec![x]), LatentContext { prior, outcomes })
        })
        .collect();
    Ok(LatentModel::new(spec, contexts)?)
}

/// `E[T]` of the behavior policy: geometric stopping after the first trial, truncated at `k`.
pub fn expected_behavior_length(num_actions: usize, p_stop: f64) -> f64 {
    (0..num_actions).map(|t| (1.0 - p_stop).powi(t as i32)).sum()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn inst(seed: u64) -> DgpInstance {
        build_instance(&DgpParams { seed, ..DgpParams::default() }).unwrap()
    }

    #[test]
    fn tables_are_distributions_with_bounded_parameters() {
        let inst = inst(3);
        let n_y = inst.params.num_outcomes as f64;
        for x in 0..2 {
            for z in 0..8 {
                for a in 0..5 {
                    let row = &inst.outcome_tables[x][z][a];
                    assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-9);
                    let (loc, scale) = inst.location_scale(x, z, a);
                    assert!((-1e-12..=n_y - 1.0 + 1e-12).contains(&loc), "{loc}");
                    assert!((MIN_SCALE..=1.0 + 1e-12).contains(&scale), "{scale}");
                }
            }
        }
        let px: f64 = inst.context_distribution().iter().map(|(_, p)| p).sum();
        assert!((px - 1.0).abs() < 1e-12);
    }

    #[test]
    fn delta_is_symmetric_with_zero_diagonal() {
        let inst = inst(1);
        for a in 0..5 {
            assert_eq!(inst.delta[a][a], 0.0);
            for b in 0..5 {
                assert_eq!(inst.delta[a][b], inst.delta[b][a]);
            }
        }
    }

    #[test]
    fn seeded_determinism() {
        assert_eq!(inst(9), inst(9));
        assert_ne!(inst(9).u1, inst(10).u1);
        let a = inst(2).generate(20, 5);
        let b = inst(2).generate(20, 5);
        assert_eq!(a, b);
    }

    #[test]
    fn behavior_rules() {
        let inst = inst(4);
        let root = History::empty(Context::new(vec![1]), 5);
        assert!(inst.behavior_distribution(&root).iter().all(|(d, _)| *d != Decision::Stop));
        let mut h = root.clone();
        for a in 0..5 {
            h = h.extend(a, 0).unwrap();
        }
        assert_eq!(inst.behavior_distribution(&h), vec![(Decision::Stop, 1.0)]);
        let h1 = root.extend(3, 1).unwrap();
        let dist = inst.behavior_distribution(&h1);
        assert!((dist.iter().map(|(_, p)| p).sum::<f64>() - 1.0).abs() < 1e-12);
        assert!(dist.iter().all(|(d, _)| *d != Decision::Try(3)));
    }

    #[test]
    fn trajectories_are_consistent() {
        let inst = inst(6);
        let (data, panel) = inst.generate(200, 1);
        for (traj, subj) in data.trajectories.iter().zip(&panel.subjects) {
            assert!((1..=5).contains(&traj.len()));
            assert!(traj.terminal);
            for t in &traj.trials {
                assert_eq!(t.outcome, subj.outcome(t.action));
            }
            traj.validate(&data.spec).unwrap();
        }
        // Steps are chronological, not sorted by action id.
        assert!(data.trajectories.iter().any(|t| t.trials.windows(2).any(|w| w[0].action > w[1].action)));
    }

    #[test]
    fn truncated_geometric_mean() {
        assert!((expected_behavior_length(5, 0.1) - 4.0951).abs() < 1e-12);
        assert_eq!(expected_behavior_length(3, 1.0), 1.0);
    }

    #[test]
    fn true_model_prior_matches_bayes() {
        let inst = inst(8);
        let model = inst.true_model();
        let ctx = Context::new(vec![0]);
        let lc = model.context(&ctx).unwrap();
        let px0 = inst.context_distribution()[0].1;
        for z in 0..8 {
            let want = inst.prob_z(z) * inst.prob_x_given_z(0, z) / px0;
            assert!((lc.prior[z] - want).abs() < 1e-12);
        }
    }

    #[test]
    fn rejects_bad_params() {
        assert!(build_instance(&DgpParams { p_stop: 1.5, ..DgpParams::default() }).is_err());
        assert!(build_instance(&DgpParams { num_outcomes: 1, ..DgpParams::default() }).is_err());
    }
}
