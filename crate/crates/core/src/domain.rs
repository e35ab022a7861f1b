//! Problem description, histories and trajectories.
//!
//! A [`History`] is a context plus a *set* of trials. Trials are kept sorted
//! by action id, so two histories built from the same trials in different
//! orders are equal values and share one [`CanonicalKey`].

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::CoreError;

/// Action identifier in `[0, k)`.
pub type Action = usize;

/// Index into [`ProblemSpec::outcome_values`].
pub type OutcomeIndex = usize;

/// Sizes of the action, outcome and context spaces.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawSpec", into = "RawSpec")]
pub struct ProblemSpec {
    num_actions: usize,
    outcome_values: Vec<f64>,
    context_dims: Vec<usize>,
}

#[derive(Serialize, Deserialize)]
struct RawSpec {
    num_actions: usize,
    outcome_values: Vec<f64>,
    context_dims: Vec<usize>,
}

impl TryFrom<RawSpec> for ProblemSpec {
    type Error = CoreError;

    fn try_from(raw: RawSpec) -> Result<Self, Self::Error> {
        ProblemSpec::new(raw.num_actions, raw.outcome_values, raw.context_dims)
    }
}

impl From<ProblemSpec> for RawSpec {
    fn from(spec: ProblemSpec) -> Self {
        RawSpec { num_actions: spec.num_actions, outcome_values: spec.outcome_values, context_dims: spec.context_dims }
    }
}

impl ProblemSpec {
    pub fn new(num_actions: usize, outcome_values: Vec<f64>, context_dims: Vec<usize>) -> Result<Self, CoreError> {
        if num_actions == 0 {
            return Err(CoreError::InvalidSpec("num_actions must be at least 1".into()));
        }
        if outcome_values.len() < 2 {
            return Err(CoreError::InvalidSpec("at least two outcome values are required".into()));
        }
        if outcome_values.iter().any(|v| !v.is_finite()) {
            return Err(CoreError::InvalidSpec("outcome values must be finite".into()));
        }
        if outcome_values.windows(2).any(|w| w[0] >= w[1]) {
            return Err(CoreError::InvalidSpec("outcome values must be strictly increasing".into()));
        }
        if context_dims.contains(&0) {
            return Err(CoreError::InvalidSpec("context cardinalities must be at least 1".into()));
        }
        Ok(ProblemSpec { num_actions, outcome_values, context_dims })
    }

    /// Outcome grid `0, 1, ..., n_y - 1`.
    pub fn with_integer_outcomes(
        num_actions: usize,
        num_outcomes: usize,
        context_dims: Vec<usize>,
    ) -> Result<Self, CoreError> {
        Self::new(num_actions, (0..num_outcomes).map(|y| y as f64).collect(), context_dims)
    }

    pub fn num_actions(&self) -> usize {
        self.num_actions
    }

    pub fn num_outcomes(&self) -> usize {
        self.outcome_values.len()
    }

    pub fn outcome_values(&self) -> &[f64] {
        &self.outcome_values
    }

    pub fn outcome_value(&self, y: OutcomeIndex) -> f64 {
        self.outcome_values[y]
    }

    pub fn max_outcome_value(&self) -> f64 {
        *self.outcome_values.last().expect("spec has outcomes")
    }

    pub fn context_dims(&self) -> &[usize] {
        &self.context_dims
    }

    /// Number of points in the context product space.
    pub fn num_contexts(&self) -> usize {
        self.context_dims.iter().product()
    }

    /// Every context in the product space, in lexicographic order.
    pub fn all_contexts(&self) -> Vec<Context> {
        let mut out = vec![Vec::with_capacity(self.context_dims.len())];
        for &dim in &self.context_dims {
            out = out
                .into_iter()
                .flat_map(|prefix| {
                    (0..dim).map(move |c| {
                        let mut next = prefix.clone();
                        next.push(c);
                        next
                    })
                })
                .collect();
        }
        out.into_iter().map(Context).collect()
    }

    pub fn check_context(&self, context: &Context) -> Result<(), CoreError> {
        if context.0.len() != self.context_dims.len() {
            return Err(CoreError::InvalidContext(format!(
                "expected {} coordinates, got {}",
                self.context_dims.len(),
                context.0.len()
            )));
        }
        for (i, (&c, &dim)) in context.0.iter().zip(&self.context_dims).enumerate() {
            if c >= dim {
                return Err(CoreError::InvalidContext(format!("coordinate {i} is {c}, cardinality is {dim}")));
            }
        }
        Ok(())
    }

    pub fn check_trial(&self, trial: TrialRecord) -> Result<(), CoreError> {
        if trial.action >= self.num_actions {
            return Err(CoreError::ActionOutOfRange { action: trial.action, k: self.num_actions });
        }
        if trial.outcome >= self.num_outcomes() {
            return Err(CoreError::OutcomeOutOfRange { outcome: trial.outcome, n: self.num_outcomes() });
        }
        Ok(())
    }

    /// The empty history for `context`.
    pub fn root(&self, context: Context) -> Result<History, CoreError> {
        self.check_context(&context)?;
        Ok(History::empty(context, self.num_actions))
    }
}

/// Discrete baseline covariates, one category index per context dimension.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Context(pub Vec<usize>);

impl Context {
    pub fn new(coords: Vec<usize>) -> Self {
        Context(coords)
    }

    pub fn coords(&self) -> &[usize] {
        &self.0
    }
}

impl fmt::Display for Context {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = self.0.iter().map(|c| c.to_string()).collect();
        write!(f, "({})", parts.join(","))
    }
}

/// One tried action and its revealed outcome.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct TrialRecord {
    pub action: Action,
    pub outcome: OutcomeIndex,
}

impl TrialRecord {
    pub fn new(action: Action, outcome: OutcomeIndex) -> Self {
        TrialRecord { action, outcome }
    }
}

/// What a policy does next.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Decision {
    Stop,
    Try(Action),
}

impl Decision {
    pub fn action(self) -> Option<Action> {
        match self {
            Decision::Stop => None,
            Decision::Try(a) => Some(a),
        }
    }
}

impl fmt::Display for Decision {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Decision::Stop => write!(f, "STOP"),
            Decision::Try(a) => write!(f, "{a}"),
        }
    }
}

/// A context and an unordered set of trials with distinct actions.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct History {
    context: Context,
    num_actions: usize,
    // sorted by action
    trials: Vec<TrialRecord>,
}

impl History {
    pub fn empty(context: Context, num_actions: usize) -> Self {
        History { context, num_actions, trials: Vec::new() }
    }

    /// Builds a history from trials given in any order.
    pub fn from_trials(
        context: Context,
        num_actions: usize,
        trials: impl IntoIterator<Item = TrialRecord>,
    ) -> Result<Self, CoreError> {
        let mut h = History::empty(context, num_actions);
        for t in trials {
            h.push(t)?;
        }
        Ok(h)
    }

    fn push(&mut self, trial: TrialRecord) -> Result<(), CoreError> {
        if trial.action >= self.num_actions {
            return Err(CoreError::ActionOutOfRange { action: trial.action, k: self.num_actions });
        }
        match self.trials.binary_search_by_key(&trial.action, |t| t.action) {
            Ok(_) => Err(CoreError::RepeatedAction(trial.action)),
            Err(pos) => {
                self.trials.insert(pos, trial);
                Ok(())
            }
        }
    }

    /// `h ∪ {(a, y)}`; `self` is left untouched.
    pub fn extend(&self, action: Action, outcome: OutcomeIndex) -> Result<History, CoreError> {
        let mut next = self.clone();
        next.push(TrialRecord::new(action, outcome))?;
        Ok(next)
    }

    pub fn context(&self) -> &Context {
        &self.context
    }

    pub fn num_actions(&self) -> usize {
        self.num_actions
    }

    /// Trials in ascending action order.
    pub fn trials(&self) -> &[TrialRecord] {
        &self.trials
    }

    pub fn len(&self) -> usize {
        self.trials.len()
    }

    pub fn is_empty(&self) -> bool {
        self.trials.is_empty()
    }

    pub fn is_exhausted(&self) -> bool {
        self.trials.len() == self.num_actions
    }

    pub fn contains(&self, action: Action) -> bool {
        self.outcome_of(action).is_some()
    }

    pub fn outcome_of(&self, action: Action) -> Option<OutcomeIndex> {
        self.trials.binary_search_by_key(&action, |t| t.action).ok().map(|i| self.trials[i].outcome)
    }

    /// Actions not yet tried, ascending.
    pub fn untried(&self) -> Vec<Action> {
        (0..self.num_actions).filter(|&a| !self.contains(a)).collect()
    }

    /// Highest outcome index among the trials; `None` for the empty history.
    ///
    /// Outcome grids are strictly increasing, so the largest index is also
    /// the largest value.
    pub fn best_outcome(&self) -> Option<OutcomeIndex> {
        self.trials.iter().map(|t| t.outcome).max()
    }

    /// Best outcome value so far; `None` stands for `-inf`.
    pub fn best_so_far(&self, spec: &ProblemSpec) -> Option<f64> {
        self.best_outcome().map(|y| spec.outcome_value(y))
    }

    pub fn key(&self) -> CanonicalKey {
        canonicalize(self)
    }

    /// All histories obtained by dropping a non-empty subset of trials.
    pub fn strict_subhistories(&self) -> Vec<History> {
        let n = self.trials.len();
        let full: usize = (1usize << n) - 1;
        (0..full)
            .map(|mask| History {
                context: self.context.clone(),
                num_actions: self.num_actions,
                trials: (0..n).filter(|i| mask & (1 << i) != 0).map(|i| self.trials[i]).collect(),
            })
            .collect()
    }
}

/// Permutation-invariant encoding of a history: context coordinates followed
/// by one slot per action holding its outcome index or [`CanonicalKey::UNTRIED`].
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct CanonicalKey {
    context: Vec<usize>,
    slots: Vec<i32>,
}

impl CanonicalKey {
    pub const UNTRIED: i32 = -1;

    /// Context coordinates followed by the action slots.
    pub fn to_tuple(&self) -> Vec<i64> {
        self.context.iter().map(|&c| c as i64).chain(self.slots.iter().map(|&s| s as i64)).collect()
    }

    pub fn slots(&self) -> &[i32] {
        &self.slots
    }

    pub fn context(&self) -> Context {
        Context(self.context.clone())
    }

    pub fn to_history(&self) -> History {
        History {
            context: self.context(),
            num_actions: self.slots.len(),
            trials: self
                .slots
                .iter()
                .enumerate()
                .filter(|(_, &s)| s != Self::UNTRIED)
                .map(|(a, &s)| TrialRecord::new(a, s as usize))
                .collect(),
        }
    }
}

/// Renders as `"<context coords>|<slots>"`, e.g. `"0,1|-1,2,-1"`.
impl fmt::Display for CanonicalKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let ctx: Vec<String> = self.context.iter().map(|c| c.to_string()).collect();
        let slots: Vec<String> = self.slots.iter().map(|s| s.to_string()).collect();
        write!(f, "{}|{}", ctx.join(","), slots.join(","))
    }
}

impl FromStr for CanonicalKey {
    type Err = CoreError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let bad = || CoreError::BadKey(s.to_string());
        let (ctx, slots) = s.split_once('|').ok_or_else(bad)?;
        let context = if ctx.is_empty() {
            Vec::new()
        } else {
            ctx.split(',').map(|c| c.parse::<usize>().map_err(|_| bad())).collect::<Result<_, _>>()?
        };
        let slots: Vec<i32> = if slots.is_empty() {
            Vec::new()
        } else {
            slots.split(',').map(|c| c.parse::<i32>().map_err(|_| bad())).collect::<Result<_, _>>()?
        };
        if slots.iter().any(|&v| v < Self::UNTRIED) {
            return Err(bad());
        }
        Ok(CanonicalKey { context, slots })
    }
}

impl Serialize for CanonicalKey {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for CanonicalKey {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

pub fn canonicalize(h: &History) -> CanonicalKey {
    let mut slots = vec![CanonicalKey::UNTRIED; h.num_actions];
    for t in &h.trials {
        slots[t.action] = t.outcome as i32;
    }
    CanonicalKey { context: h.context.0.clone(), slots }
}

/// An observed sequence of trials in the order they happened.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Trajectory {
    pub context: Context,
    pub trials: Vec<TrialRecord>,
    /// `true` if the sequence ended with an explicit stop, `false` if censored.
    pub terminal: bool,
}

impl Trajectory {
    pub fn new(context: Context, trials: Vec<TrialRecord>, terminal: bool) -> Self {
        Trajectory { context, trials, terminal }
    }

    pub fn len(&self) -> usize {
        self.trials.len()
    }

    pub fn is_empty(&self) -> bool {
        self.trials.is_empty()
    }

    /// `(h_{s-1}, (a_s, y_s))` for every step `s`.
    pub fn steps(&self, num_actions: usize) -> Result<Vec<(History, TrialRecord)>, CoreError> {
        let mut h = History::empty(self.context.clone(), num_actions);
        let mut out = Vec::with_capacity(self.trials.len());
        for &t in &self.trials {
            let next = h.extend(t.action, t.outcome)?;
            out.push((h, t));
            h = next;
        }
        Ok(out)
    }

    /// The unordered history after the last trial.
    pub fn final_history(&self, num_actions: usize) -> Result<History, CoreError> {
        History::from_trials(self.context.clone(), num_actions, self.trials.iter().copied())
    }

    pub fn validate(&self, spec: &ProblemSpec) -> Result<(), CoreError> {
        spec.check_context(&self.context)?;
        for &t in &self.trials {
            spec.check_trial(t)?;
        }
        self.final_history(spec.num_actions()).map(|_| ())
    }
}

/// A ground-truth evaluation record: context plus every potential outcome.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Subject {
    pub context: Context,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub latent: Option<usize>,
    /// `potential_outcomes[a]` is the outcome index of action `a`.
    pub potential_outcomes: Vec<OutcomeIndex>,
}

impl Subject {
    pub fn new(context: Context, potential_outcomes: Vec<OutcomeIndex>) -> Self {
        Subject { context, latent: None, potential_outcomes }
    }

    pub fn outcome(&self, action: Action) -> OutcomeIndex {
        self.potential_outcomes[action]
    }

    pub fn best_outcome(&self) -> OutcomeIndex {
        self.potential_outcomes.iter().copied().max().unwrap_or(0)
    }

    pub fn validate(&self, spec: &ProblemSpec) -> Result<(), CoreError> {
        spec.check_context(&self.context)?;
        if self.potential_outcomes.len() != spec.num_actions() {
            return Err(CoreError::InvalidSpec(format!(
                "subject has {} potential outcomes, expected {}",
                self.potential_outcomes.len(),
                spec.num_actions()
            )));
        }
        for (a, &y) in self.potential_outcomes.iter().enumerate() {
            spec.check_trial(TrialRecord::new(a, y))?;
        }
        Ok(())
    }
}

/// Observational trajectories under a shared problem spec.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    pub spec: ProblemSpec,
    pub trajectories: Vec<Trajectory>,
}

impl Dataset {
    pub fn new(spec: ProblemSpec, trajectories: Vec<Trajectory>) -> Result<Self, CoreError> {
        for t in &trajectories {
            t.validate(&spec)?;
        }
        Ok(Dataset { spec, trajectories })
    }

    pub fn len(&self) -> usize {
        self.trajectories.len()
    }

    pub fn is_empty(&self) -> bool {
        self.trajectories.is_empty()
    }
}

/// Ground-truth subjects under a shared problem spec.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubjectPanel {
    pub spec: ProblemSpec,
    pub subjects: Vec<Subject>,
}

impl SubjectPanel {
    pub fn new(spec: ProblemSpec, subjects: Vec<Subject>) -> Result<Self, CoreError> {
        for s in &subjects {
            s.validate(&spec)?;
        }
        Ok(SubjectPanel { spec, subjects })
    }
}
