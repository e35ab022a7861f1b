//! Count tables with Dirichlet smoothing.
//!
//! The posterior mean for cell `(h, a)` is `(n_y + β_y) / Σ (n_y' + β_y')`.
//! The uninformed prior puts `β₀` on every outcome. The historical prior is a
//! similarity-weighted average of posteriors at every strict sub-history of
//! `h`, rescaled to the same total mass `β₀ · n_y`, and bottoms out at the
//! empty history with the uninformed prior.

use std::collections::{BTreeMap, HashMap};

use serde::{Deserialize, Serialize};

use super::OutcomeModel;
use crate::domain::{Action, CanonicalKey, Dataset, History, ProblemSpec};
use crate::error::{CoreError, ModelError};

/// Per-cell outcome counts `n_y(a, h)`, keyed by canonical prefix history.
#[derive(Debug, Clone, PartialEq)]
pub struct CountTable {
    spec: ProblemSpec,
    counts: HashMap<(CanonicalKey, Action), Vec<u64>>,
}

impl CountTable {
    pub fn new(spec: ProblemSpec) -> Self {
        CountTable { spec, counts: HashMap::new() }
    }

    pub fn spec(&self) -> &ProblemSpec {
        &self.spec
    }

    pub fn record(&mut self, h: &History, action: Action, outcome: usize) {
        let ny = self.spec.num_outcomes();
        self.counts.entry((h.key(), action)).or_insert_with(|| vec![0; ny])[outcome] += 1;
    }

    pub fn get(&self, key: &CanonicalKey, action: Action) -> Option<&[u64]> {
        // HashMap lookups on a tuple need an owned key.
        self.counts.get(&(key.clone(), action)).map(Vec::as_slice)
    }

    pub fn counts(&self, h: &History, action: Action) -> Option<&[u64]> {
        self.get(&h.key(), action)
    }

    /// Number of non-empty `(h, a)` cells.
    pub fn len(&self) -> usize {
        self.counts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.counts.is_empty()
    }

    pub fn total(&self) -> u64 {
        self.counts.values().flatten().sum()
    }

    /// Sorted `key → action → counts` view used for persistence.
    pub fn to_entries(&self) -> BTreeMap<String, BTreeMap<Action, Vec<u64>>> {
        let mut out: BTreeMap<String, BTreeMap<Action, Vec<u64>>> = BTreeMap::new();
        for ((key, a), c) in &self.counts {
            out.entry(key.to_string()).or_default().insert(*a, c.clone());
        }
        out
    }

    pub fn from_entries(
        spec: ProblemSpec,
        entries: BTreeMap<String, BTreeMap<Action, Vec<u64>>>,
    ) -> Result<Self, CoreError> {
        let mut table = CountTable::new(spec);
        for (key, per_action) in entries {
            let key: CanonicalKey = key.parse()?;
            table.spec.check_context(&key.context())?;
            if key.slots().len() != table.spec.num_actions() {
                return Err(CoreError::BadKey(key.to_string()));
            }
            for (a, c) in per_action {
                if a >= table.spec.num_actions() {
                    return Err(CoreError::ActionOutOfRange { action: a, k: table.spec.num_actions() });
                }
                if c.len() != table.spec.num_outcomes() {
                    return Err(CoreError::InvalidSpec(format!("count vector for {key} has length {}", c.len())));
                }
                table.counts.insert((key.clone(), a), c);
            }
        }
        Ok(table)
    }
}

/// Pools every step of every trajectory into the cell of its (unordered)
/// prefix history.
pub fn fit_counts(dataset: &Dataset) -> Result<CountTable, ModelError> {
    let k = dataset.spec.num_actions();
    let mut table = CountTable::new(dataset.spec.clone());
    for traj in &dataset.trajectories {
        for (prefix, trial) in traj.steps(k)? {
            table.record(&prefix, trial.action, trial.outcome);
        }
    }
    Ok(table)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PriorKind {
    Uninformed,
    Historical,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SmoothingConfig {
    pub prior: PriorKind,
    /// Uninformed pseudo-count `β₀` per outcome.
    pub pseudocount: f64,
}

impl Default for SmoothingConfig {
    fn default() -> Self {
        SmoothingConfig { prior: PriorKind::Uninformed, pseudocount: 0.1 }
    }
}

impl SmoothingConfig {
    pub fn uninformed(pseudocount: f64) -> Self {
        SmoothingConfig { prior: PriorKind::Uninformed, pseudocount }
    }

    pub fn historical(pseudocount: f64) -> Self {
        SmoothingConfig { prior: PriorKind::Historical, pseudocount }
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        if !(self.pseudocount > 0.0 && self.pseudocount.is_finite()) {
            return Err(ModelError::InvalidConfig(format!("pseudocount must be positive, got {}", self.pseudocount)));
        }
        Ok(())
    }
}

/// Kernel weight of a sub-history of length `len_sub` inside a history of
/// length `len_h`: `exp(-(d - 1)²) / (len_h · 2^(d - 1))` with `d = len_h - len_sub`.
pub fn historical_weight(len_h: usize, len_sub: usize) -> f64 {
    assert!(len_sub < len_h, "sub-history must be strictly shorter");
    let gap = (len_h - len_sub - 1) as f64;
    (-gap * gap).exp() / (len_h as f64 * 2f64.powf(gap))
}

/// Dirichlet posterior mean of `p(Y(a) = · | h)`.
pub fn posterior_distribution(table: &CountTable, cfg: &SmoothingConfig, h: &History, action: Action) -> Vec<f64> {
    let mut memo = HashMap::new();
    posterior_memo(table, cfg, h, action, &mut memo)
}

fn posterior_memo(
    table: &CountTable,
    cfg: &SmoothingConfig,
    h: &History,
    action: Action,
    memo: &mut HashMap<CanonicalKey, Vec<f64>>,
) -> Vec<f64> {
    let key = h.key();
    if let Some(p) = memo.get(&key) {
        return p.clone();
    }
    let ny = table.spec.num_outcomes();
    let mass = cfg.pseudocount * ny as f64;
    let prior = match cfg.prior {
        PriorKind::Historical if !h.is_empty() => {
            let mut beta = vec![0.0; ny];
            for sub in h.strict_subhistories() {
                let w = historical_weight(h.len(), sub.len());
                let p = posterior_memo(table, cfg, &sub, action, memo);
                beta.iter_mut().zip(&p).for_each(|(b, q)| *b += w * q);
            }
            let total: f64 = beta.iter().sum();
            beta.iter_mut().for_each(|b| *b *= mass / total);
            beta
        }
        _ => vec![cfg.pseudocount; ny],
    };
    let mut post = prior;
    if let Some(counts) = table.get(&key, action) {
        post.iter_mut().zip(counts).for_each(|(p, &n)| *p += n as f64);
    }
    let total: f64 = post.iter().sum();
    post.iter_mut().for_each(|p| *p /= total);
    memo.insert(key, post.clone());
    post
}

/// A count table paired with a smoothing prior.
#[derive(Debug, Clone, PartialEq)]
pub struct TabularModel {
    table: CountTable,
    smoothing: SmoothingConfig,
}

impl TabularModel {
    pub fn new(table: CountTable, smoothing: SmoothingConfig) -> Result<Self, ModelError> {
        smoothing.validate()?;
        Ok(TabularModel { table, smoothing })
    }

    pub fn fit(dataset: &Dataset, smoothing: SmoothingConfig) -> Result<Self, ModelError> {
        Self::new(fit_counts(dataset)?, smoothing)
    }

    pub fn table(&self) -> &CountTable {
        &self.table
    }

    pub fn smoothing(&self) -> &SmoothingConfig {
        &self.smoothing
    }
}

impl OutcomeModel for TabularModel {
    fn spec(&self) -> &ProblemSpec {
        &self.table.spec
    }

    fn predict(&self, h: &History, action: Action) -> Vec<f64> {
        posterior_distribution(&self.table, &self.smoothing, h, action)
    }
}
