//! Multinomial logistic regression over a permutation-invariant history encoding.

use std::collections::HashMap;

use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::OutcomeModel;
use crate::domain::{Action, CanonicalKey, Dataset, History, ProblemSpec};
use crate::error::ModelError;
use crate::rng::{stream, StreamPurpose};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LogisticModelConfig {
    pub learning_rate: f64,
    pub epochs: usize,
    pub l2_penalty: f64,
    pub seed: u64,
}

impl Default for LogisticModelConfig {
    fn default() -> Self {
        LogisticModelConfig { learning_rate: 0.5, epochs: 2000, l2_penalty: 1e-4, seed: 0 }
    }
}

impl LogisticModelConfig {
    pub fn validate(&self) -> Result<(), ModelError> {
        if !(self.learning_rate > 0.0) {
            return Err(ModelError::InvalidConfig("learning_rate must be positive".into()));
        }
        if self.epochs == 0 {
            return Err(ModelError::InvalidConfig("epochs must be at least 1".into()));
        }
        if !(self.l2_penalty >= 0.0) {
            return Err(ModelError::InvalidConfig("l2_penalty must be nonnegative".into()));
        }
        Ok(())
    }
}

pub fn feature_dim(spec: &ProblemSpec) -> usize {
    let k = spec.num_actions();
    1 + spec.context_dims().iter().sum::<usize>() + k + k * spec.num_outcomes() + k
}

/// `[1; one-hot context; tried indicators; per-action outcome one-hots; one-hot action]`.
pub fn featurize(spec: &ProblemSpec, h: &History, action: Action) -> Vec<f64> {
    let k = spec.num_actions();
    let ny = spec.num_outcomes();
    let mut phi = vec![0.0; feature_dim(spec)];
    phi[0] = 1.0;
    let mut offset = 1;
    for (&c, &dim) in h.context().coords().iter().zip(spec.context_dims()) {
        phi[offset + c] = 1.0;
        offset += dim;
    }
    let tried = offset;
    let outcomes = tried + k;
    for t in h.trials() {
        phi[tried + t.action] = 1.0;
        phi[outcomes + t.action * ny + t.outcome] = 1.0;
    }
    phi[outcomes + k * ny + action] = 1.0;
    phi
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogisticModel {
    spec: ProblemSpec,
    /// `weights[y]` is the coefficient row for outcome class `y`.
    weights: Vec<Vec<f64>>,
    #[serde(default)]
    loss_history: Vec<f64>,
    #[serde(default)]
    degenerate: bool,
}

impl LogisticModel {
    pub fn from_weights(spec: ProblemSpec, weights: Vec<Vec<f64>>) -> Result<Self, ModelError> {
        let dim = feature_dim(&spec);
        if weights.len() != spec.num_outcomes() || weights.iter().any(|w| w.len() != dim) {
            return Err(ModelError::InvalidConfig(format!("expected {} x {} weights", spec.num_outcomes(), dim)));
        }
        Ok(LogisticModel { spec, weights, loss_history: Vec::new(), degenerate: false })
    }

    pub fn weights(&self) -> &[Vec<f64>] {
        &self.weights
    }

    /// Mean penalized training loss recorded before each epoch's update, plus the final loss.
    pub fn loss_history(&self) -> &[f64] {
        &self.loss_history
    }

    pub fn is_degenerate(&self) -> bool {
        self.degenerate
    }

    fn probabilities(&self, phi: &[f64]) -> Vec<f64> {
        let logits: Vec<f64> = self.weights.iter().map(|w| w.iter().zip(phi).map(|(a, b)| a * b).sum()).collect();
        softmax(&logits)
    }
}

impl OutcomeModel for LogisticModel {
    fn spec(&self) -> &ProblemSpec {
        &self.spec
    }

    fn predict(&self, h: &History, action: Action) -> Vec<f64> {
        self.probabilities(&featurize(&self.spec, h, action))
    }
}

fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|l| (l - max).exp()).collect();
    let total: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / total).collect()
}

/// Fits by full-batch gradient descent on mean cross-entropy plus `l2/2 · ‖W‖²`
/// over every `(prefix history, action, outcome)` step in the dataset.
///
/// Identical `(history, action)` cells are merged into weighted rows before
/// training, which leaves the objective unchanged.
pub fn fit_logistic(dataset: &Dataset, cfg: &LogisticModelConfig) -> Result<LogisticModel, ModelError> {
    cfg.validate()?;
    let spec = &dataset.spec;
    let k = spec.num_actions();
    let ny = spec.num_outcomes();

    let mut cells: HashMap<(CanonicalKey, Action), (History, Vec<f64>)> = HashMap::new();
    for traj in &dataset.trajectories {
        for (prefix, t) in traj.steps(k)? {
            let entry = cells.entry((prefix.key(), t.action)).or_insert_with(|| (prefix.clone(), vec![0.0; ny]));
            entry.1[t.outcome] += 1.0;
        }
    }
    if cells.is_empty() {
        return Err(ModelError::EmptyData);
    }
    // Sort for a deterministic summation order.
    let mut cells: Vec<_> = cells.into_iter().collect();
    cells.sort_by(|a, b| a.0.cmp(&b.0));
    let rows: Vec<(Vec<f64>, Vec<f64>)> =
        cells.into_iter().map(|((_, a), (h, counts))| (featurize(spec, &h, a), counts)).collect();
    let n: f64 = rows.iter().map(|(_, c)| c.iter().sum::<f64>()).sum();

    let mut class_totals = vec![0.0; ny];
    for (_, c) in &rows {
        class_totals.iter_mut().zip(c).for_each(|(t, x)| *t += x);
    }
    let present: Vec<usize> = (0..ny).filter(|&y| class_totals[y] > 0.0).collect();
    if present.len() == 1 {
        let dim = feature_dim(spec);
        let mut weights = vec![vec![0.0; dim]; ny];
        // A large bias gap puts essentially all mass on the observed class.
        for (y, w) in weights.iter_mut().enumerate() {
            w[0] = if y == present[0] { 0.0 } else { -50.0 };
        }
        let mut model = LogisticModel::from_weights(spec.clone(), weights)?;
        model.degenerate = true;
        return Err(ModelError::DegenerateData(Box::new(model)));
    }

    let dim = feature_dim(spec);
    let mut rng = stream(cfg.seed, StreamPurpose::Training, 0);
    let init = Normal::new(0.0, 0.01).expect("valid normal");
    let mut weights: Vec<Vec<f64>> = (0..ny).map(|_| (0..dim).map(|_| init.sample(&mut rng)).collect()).collect();

    let objective = |weights: &[Vec<f64>], grad: Option<&mut Vec<Vec<f64>>>| -> f64 {
        let mut loss = 0.0;
        let mut grad = grad;
        if let Some(g) = grad.as_deref_mut() {
            g.iter_mut().for_each(|row| row.iter_mut().for_each(|x| *x = 0.0));
        }
        for (phi, counts) in &rows {
            let logits: Vec<f64> = weights.iter().map(|w| w.iter().zip(phi).map(|(a, b)| a * b).sum()).collect();
            let p = softmax(&logits);
            let total: f64 = counts.iter().sum();
            for y in 0..ny {
                if counts[y] > 0.0 {
                    loss -= counts[y] * p[y].max(1e-300).ln();
                }
            }
            if let Some(g) = grad.as_deref_mut() {
                for y in 0..ny {
                    let resid = (total * p[y] - counts[y]) / n;
                    if resid != 0.0 {
                        for (gj, &xj) in g[y].iter_mut().zip(phi) {
                            *gj += resid * xj;
                        }
                    }
                }
            }
        }
        let sq: f64 = weights.iter().flatten().map(|w| w * w).sum();
        if let Some(g) = grad {
            for (grow, wrow) in g.iter_mut().zip(weights) {
                for (gj, wj) in grow.iter_mut().zip(wrow) {
                    *gj += cfg.l2_penalty * wj;
                }
            }
        }
        loss / n + 0.5 * cfg.l2_penalty * sq
    };

    let mut grad = vec![vec![0.0; dim]; ny];
    let mut history = Vec::with_capacity(cfg.epochs + 1);
    for _ in 0..cfg.epochs {
        history.push(objective(&weights, Some(&mut grad)));
        for (wrow, grow) in weights.iter_mut().zip(&grad) {
            for (w, g) in wrow.iter_mut().zip(grow) {
                *w -= cfg.learning_rate * g;
            }
        }
    }
    history.push(objective(&weights, None));

    Ok(LogisticModel { spec: spec.clone(), weights, loss_history: history, degenerate: false })
}
