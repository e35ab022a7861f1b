//! Exhaustive enumeration of feasible decision trees, used to cross-check
//! the dynamic program on small instances.

use std::collections::HashMap;
use std::rc::Rc;

use super::TIE_TOLERANCE;
use crate::domain::{Action, CanonicalKey, Context, Decision, History};
use crate::error::SolverError;
use crate::model::OutcomeModel;
use crate::stopping::{gamma, StoppingConfig};

pub const MAX_ORACLE_ACTIONS: usize = 4;
pub const MAX_ORACLE_OUTCOMES: usize = 3;
pub const MAX_ORACLE_POLICIES: u128 = 2_000_000;

#[derive(Debug, Clone, PartialEq)]
pub struct OracleResult {
    pub expected_length: f64,
    /// First decisions of every tree attaining the minimum, sorted.
    pub optimal_first: Vec<Decision>,
    pub policies_enumerated: usize,
}

enum Tree {
    Stop,
    Node(Action, Vec<Rc<Tree>>),
}

struct Enumerator<'a, M: ?Sized> {
    model: &'a M,
    cfg: &'a StoppingConfig,
    gammas: HashMap<CanonicalKey, bool>,
    predictions: HashMap<(CanonicalKey, Action), Vec<f64>>,
    trees: HashMap<CanonicalKey, Rc<Vec<Rc<Tree>>>>,
}

impl<M: OutcomeModel + ?Sized> Enumerator<'_, M> {
    fn gamma(&mut self, h: &History) -> bool {
        let (model, cfg) = (self.model, self.cfg);
        *self.gammas.entry(h.key()).or_insert_with(|| gamma(model, h, cfg))
    }

    fn predict(&mut self, h: &History, a: Action) -> Vec<f64> {
        let model = self.model;
        self.predictions.entry((h.key(), a)).or_insert_with(|| model.predict(h, a)).clone()
    }

    fn count(&mut self, h: &History, memo: &mut HashMap<CanonicalKey, u128>) -> u128 {
        if let Some(&c) = memo.get(&h.key()) {
            return c;
        }
        let n_y = self.model.spec().num_outcomes();
        let mut total = u128::from(self.gamma(h));
        for a in h.untried() {
            let mut prod: u128 = 1;
            for y in 0..n_y {
                prod = prod.saturating_mul(self.count(&h.extend(a, y).expect("untried"), memo));
            }
            total = total.saturating_add(prod);
        }
        memo.insert(h.key(), total);
        total
    }

    fn trees(&mut self, h: &History) -> Rc<Vec<Rc<Tree>>> {
        if let Some(t) = self.trees.get(&h.key()) {
            return Rc::clone(t);
        }
        let n_y = self.model.spec().num_outcomes();
        let mut out: Vec<Rc<Tree>> = Vec::new();
        if self.gamma(h) {
            out.push(Rc::new(Tree::Stop));
        }
        for a in h.untried() {
            let children: Vec<Rc<Vec<Rc<Tree>>>> =
                (0..n_y).map(|y| self.trees(&h.extend(a, y).expect("untried"))).collect();
            // Cartesian product over the subtree chosen for each outcome.
            let mut combos: Vec<Vec<Rc<Tree>>> = vec![Vec::with_capacity(n_y)];
            for options in &children {
                combos = combos
                    .into_iter()
                    .flat_map(|prefix| {
                        options.iter().map(move |t| {
                            let mut next = prefix.clone();
                            next.push(Rc::clone(t));
                            next
                        })
                    })
                    .collect();
            }
            out.extend(combos.into_iter().map(|c| Rc::new(Tree::Node(a, c))));
        }
        let out = Rc::new(out);
        self.trees.insert(h.key(), Rc::clone(&out));
        out
    }

    fn expected_length(&mut self, tree: &Tree, h: &History) -> f64 {
        match tree {
            Tree::Stop => 0.0,
            Tree::Node(a, children) => {
                let p = self.predict(h, *a);
                let mut e = 1.0;
                for (y, child) in children.iter().enumerate() {
                    if p[y] != 0.0 {
                        e += p[y] * self.expected_length(child, &h.extend(*a, y).expect("untried"));
                    }
                }
                e
            }
        }
    }
}

/// Minimal expected search length over every non-repeating tree policy that
/// only stops where γ holds.
pub fn brute_force_optimal<M: OutcomeModel + ?Sized>(
    model: &M,
    cfg: &StoppingConfig,
    context: &Context,
) -> Result<OracleResult, SolverError> {
    cfg.validate().map_err(SolverError::InvalidConfig)?;
    let spec = model.spec();
    spec.check_context(context)?;
    if spec.num_actions() > MAX_ORACLE_ACTIONS || spec.num_outcomes() > MAX_ORACLE_OUTCOMES {
        return Err(SolverError::InstanceTooLarge(format!(
            "k = {}, n_y = {} (limits {MAX_ORACLE_ACTIONS}, {MAX_ORACLE_OUTCOMES})",
            spec.num_actions(),
            spec.num_outcomes()
        )));
    }
    let mut en = Enumerator { model, cfg, gammas: HashMap::new(), predictions: HashMap::new(), trees: HashMap::new() };
    let root = History::empty(context.clone(), spec.num_actions());
    let count = en.count(&root, &mut HashMap::new());
    if count > MAX_ORACLE_POLICIES {
        return Err(SolverError::InstanceTooLarge(format!("{count} feasible policies")));
    }
    let trees = en.trees(&root);
    let lengths: Vec<(f64, Decision)> = trees
        .iter()
        .map(|t| {
            let first = match t.as_ref() {
                Tree::Stop => Decision::Stop,
                Tree::Node(a, _) => Decision::Try(*a),
            };
            (en.expected_length(t, &root), first)
        })
        .collect();
    let best = lengths.iter().map(|(e, _)| *e).fold(f64::INFINITY, f64::min);
    let mut optimal_first: Vec<Decision> =
        lengths.iter().filter(|(e, _)| *e <= best + TIE_TOLERANCE).map(|(_, d)| *d).collect();
    optimal_first.sort_by_key(|d| d.action().map_or(0, |a| a + 1));
    optimal_first.dedup();
    Ok(OracleResult { expected_length: best, optimal_first, policies_enumerated: lengths.len() })
}
