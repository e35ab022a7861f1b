use std::sync::Arc;

use pyo3::exceptions::{PyIOError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;

use trialsearch::dgp::{build_instance, build_toy, DgpInstance, DgpParams, ToyKind};
use trialsearch::eval::{evaluate_weighted, EvalConfig, Metrics};
use trialsearch::io::{load_model, read_panels, read_trajectories, save_model, write_panel, write_trajectories};
use trialsearch::model::{fit_estimator, Estimator, FittedModel, LogisticModelConfig};
use trialsearch::rng::{stream, StreamPurpose};
use trialsearch::solvers::{brute_force_optimal, solve, SolvedPolicy, SolverKind};
use trialsearch::stopping::rho;
use trialsearch::{
    BoundMode, Context, Dataset as CoreDataset, Decision, History, OutcomeModel, Policy as _, StoppingConfig,
    SubjectPanel, TrialRecord,
};

fn value_err(e: impl std::fmt::Display) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn io_err(e: impl std::fmt::Display) -> PyErr {
    PyIOError::new_err(e.to_string())
}

fn history(model: &FittedModel, context: Vec<usize>, trials: Vec<(usize, usize)>) -> PyResult<History> {
    let spec = model.spec();
    let ctx = Context::new(context);
    spec.check_context(&ctx).map_err(value_err)?;
    for &(a, y) in &trials {
        spec.check_trial(TrialRecord::new(a, y)).map_err(value_err)?;
    }
    History::from_trials(ctx, spec.num_actions(), trials.into_iter().map(|(a, y)| TrialRecord::new(a, y)))
        .map_err(value_err)
}

fn stopping(epsilon: f64, delta: f64, alpha: f64, bound: &str) -> PyResult<StoppingConfig> {
    let bound: BoundMode = bound.parse().map_err(value_err)?;
    StoppingConfig::new(epsilon, delta, alpha, bound).map_err(value_err)
}

type Trajectories = Vec<(Vec<usize>, Vec<(usize, usize)>)>;

/// Logged trajectories.
#[pyclass(frozen)]
struct Dataset {
    inner: CoreDataset,
}

#[pymethods]
impl Dataset {
    fn __len__(&self) -> usize {
        self.inner.len()
    }

    /// List of (context, [(action, outcome), ...]) in step order.
    fn trajectories(&self) -> Trajectories {
        self.inner
            .trajectories
            .iter()
            .map(|t| (t.context.coords().to_vec(), t.trials.iter().map(|r| (r.action, r.outcome)).collect()))
            .collect()
    }

    fn to_csv(&self, path: &str) -> PyResult<()> {
        write_trajectories(path, &self.inner).map_err(io_err)
    }

    /// Reads a trajectory CSV whose layout matches `like`.
    #[staticmethod]
    fn from_csv(path: &str, like: &Model) -> PyResult<Self> {
        Ok(Dataset { inner: read_trajectories(path, like.inner.spec()).map_err(io_err)? })
    }
}

/// Ground-truth subjects with every potential outcome.
#[pyclass(frozen)]
struct Panel {
    inner: SubjectPanel,
}

#[pymethods]
impl Panel {
    fn __len__(&self) -> usize {
        self.inner.subjects.len()
    }

    /// List of (context, potential outcome indices).
    fn subjects(&self) -> Vec<(Vec<usize>, Vec<usize>)> {
        self.inner.subjects.iter().map(|s| (s.context.coords().to_vec(), s.potential_outcomes.clone())).collect()
    }

    fn to_csv(&self, path: &str) -> PyResult<()> {
        write_panel(path, &self.inner).map_err(io_err)
    }

    #[staticmethod]
    fn from_csv(path: &str, like: &Model) -> PyResult<Self> {
        Ok(Panel { inner: read_panels(path, like.inner.spec()).map_err(io_err)? })
    }
}

/// Synthetic data-generating instance.
#[pyclass(frozen)]
struct Instance {
    inner: DgpInstance,
}

#[pymethods]
impl Instance {
    #[new]
    #[pyo3(signature = (seed=0, num_actions=5, num_outcomes=3, moderator_dims=3, context_dims=1, w_x=1.0, p_stop=0.1))]
    fn new(
        seed: u64,
        num_actions: usize,
        num_outcomes: usize,
        moderator_dims: usize,
        context_dims: usize,
        w_x: f64,
        p_stop: f64,
    ) -> PyResult<Self> {
        let params = DgpParams { num_actions, num_outcomes, moderator_dims, context_dims, w_x, p_stop, seed };
        Ok(Instance { inner: build_instance(&params).map_err(value_err)? })
    }

    fn generate(&self, n: usize, seed: u64) -> (Dataset, Panel) {
        let (d, p) = self.inner.generate(n, seed);
        (Dataset { inner: d }, Panel { inner: p })
    }

    fn sample_panel(&self, n: usize, seed: u64) -> Panel {
        Panel { inner: self.inner.sample_panel(n, seed) }
    }

    fn true_model(&self) -> Model {
        Model { inner: Arc::new(FittedModel::Latent(self.inner.true_model())) }
    }

    fn context_distribution(&self) -> Vec<(Vec<usize>, f64)> {
        self.inner.context_distribution().into_iter().map(|(c, p)| (c.coords().to_vec(), p)).collect()
    }
}

/// Outcome model p(Y(a) | h).
#[pyclass(frozen)]
struct Model {
    inner: Arc<FittedModel>,
}

#[pymethods]
impl Model {
    #[staticmethod]
    #[pyo3(signature = (dataset, estimator="historical", pseudocount=0.1, epochs=2000, learning_rate=0.5, l2=1e-4, seed=0))]
    fn fit(
        dataset: &Dataset,
        estimator: &str,
        pseudocount: f64,
        epochs: usize,
        learning_rate: f64,
        l2: f64,
        seed: u64,
    ) -> PyResult<Self> {
        let est: Estimator = estimator.parse().map_err(value_err)?;
        let lcfg = LogisticModelConfig { learning_rate, epochs, l2_penalty: l2, seed };
        let m = fit_estimator(&dataset.inner, est, pseudocount, &lcfg).map_err(value_err)?;
        Ok(Model { inner: Arc::new(m) })
    }

    /// Built-in toy problems: "example1" or "a6".
    #[staticmethod]
    #[pyo3(signature = (name, epsilon=0.1))]
    fn toy(name: &str, epsilon: f64) -> PyResult<Self> {
        let kind = match name {
            "example1" => ToyKind::Example1,
            "a6" => ToyKind::A6(epsilon),
            _ => return Err(PyValueError::new_err(format!("unknown toy {name:?}"))),
        };
        let toy = build_toy(kind).map_err(value_err)?;
        Ok(Model { inner: Arc::new(FittedModel::Latent(toy.model)) })
    }

    #[staticmethod]
    fn load(path: &str) -> PyResult<Self> {
        Ok(Model { inner: Arc::new(load_model(path).map_err(io_err)?) })
    }

    fn save(&self, path: &str) -> PyResult<()> {
        save_model(path, &self.inner).map_err(io_err)
    }

    #[getter]
    fn num_actions(&self) -> usize {
        self.inner.spec().num_actions()
    }

    #[getter]
    fn outcome_values(&self) -> Vec<f64> {
        self.inner.spec().outcome_values().to_vec()
    }

    fn contexts(&self) -> Vec<Vec<usize>> {
        self.inner.spec().all_contexts().into_iter().map(|c| c.coords().to_vec()).collect()
    }

    fn predict(&self, context: Vec<usize>, trials: Vec<(usize, usize)>, action: usize) -> PyResult<Vec<f64>> {
        let h = history(&self.inner, context, trials)?;
        if action >= h.num_actions() || h.contains(action) {
            return Err(PyValueError::new_err(format!("action {action} is out of range or already tried")));
        }
        Ok(self.inner.predict(&h, action))
    }

    #[pyo3(signature = (context, trials, epsilon=0.0, bound="exact"))]
    fn rho(&self, context: Vec<usize>, trials: Vec<(usize, usize)>, epsilon: f64, bound: &str) -> PyResult<f64> {
        let h = history(&self.inner, context, trials)?;
        let mode: BoundMode = bound.parse().map_err(value_err)?;
        Ok(rho(self.inner.as_ref(), &h, epsilon, mode))
    }

    /// Optimal expected search length by exhaustive enumeration; small instances only.
    #[pyo3(signature = (context, delta=0.0, epsilon=0.0, alpha=1.0, bound="exact"))]
    fn oracle(&self, context: Vec<usize>, delta: f64, epsilon: f64, alpha: f64, bound: &str) -> PyResult<f64> {
        let cfg = stopping(epsilon, delta, alpha, bound)?;
        let r = brute_force_optimal(self.inner.as_ref(), &cfg, &Context::new(context)).map_err(value_err)?;
        Ok(r.expected_length)
    }
}

/// A solved search policy.
#[pyclass(frozen)]
struct Policy {
    inner: SolvedPolicy<Arc<FittedModel>>,
    model: Arc<FittedModel>,
}

fn metrics_dict<'py>(py: Python<'py>, m: &Metrics) -> PyResult<Bound<'py, PyDict>> {
    let d = PyDict::new(py);
    d.set_item("n_subjects", m.n_subjects)?;
    d.set_item("efficacy", m.efficacy)?;
    d.set_item("efficacy_se", m.efficacy_se)?;
    d.set_item("mean_search_time", m.mean_search_time)?;
    d.set_item("search_time_se", m.search_time_se)?;
    d.set_item("worst_search_time", m.worst_search_time)?;
    d.set_item("best_so_far_curve", m.best_so_far_curve.clone())?;
    Ok(d)
}

#[pymethods]
impl Policy {
    #[staticmethod]
    #[pyo3(signature = (model, solver="cdp", delta=0.0, epsilon=0.0, alpha=1.0, bound="exact", lam=0.35))]
    fn solve(
        model: &Model,
        solver: &str,
        delta: f64,
        epsilon: f64,
        alpha: f64,
        bound: &str,
        lam: f64,
    ) -> PyResult<Self> {
        let kind: SolverKind = solver.parse().map_err(value_err)?;
        let cfg = stopping(epsilon, delta, alpha, bound)?;
        let contexts = model.inner.spec().all_contexts();
        let inner = solve(kind, model.inner.clone(), &cfg, lam, &contexts).map_err(value_err)?;
        Ok(Policy { inner, model: model.inner.clone() })
    }

    #[getter]
    fn kind(&self) -> String {
        self.inner.kind().to_string()
    }

    /// Next action, or None to stop.
    fn decide(&self, context: Vec<usize>, trials: Vec<(usize, usize)>) -> PyResult<Option<usize>> {
        let h = history(&self.model, context, trials)?;
        let d = self.inner.decide(&h, &mut stream(0, StreamPurpose::Rollout, 0)).map_err(value_err)?;
        Ok(match d {
            Decision::Stop => None,
            Decision::Try(a) => Some(a),
        })
    }

    /// Model-predicted expected number of trials from the empty history.
    fn expected_search_length(&self, context: Vec<usize>) -> PyResult<f64> {
        let ctx = Context::new(context);
        trialsearch::eval::policy_tree_stats(&self.inner, self.model.as_ref(), &ctx).map(|(e, _)| e).map_err(value_err)
    }

    #[pyo3(signature = (panel, epsilon=0.0, seed=0))]
    fn evaluate<'py>(&self, py: Python<'py>, panel: &Panel, epsilon: f64, seed: u64) -> PyResult<Bound<'py, PyDict>> {
        let subjects: Vec<_> = panel.inner.subjects.iter().map(|s| (s.clone(), 1.0)).collect();
        let cfg = EvalConfig { epsilon, max_steps: None, seed };
        let m = evaluate_weighted(&self.inner, self.model.spec(), &subjects, &cfg).map_err(value_err)?;
        metrics_dict(py, &m)
    }
}

#[pymodule]
fn trialsearch_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<Dataset>()?;
    m.add_class::<Panel>()?;
    m.add_class::<Instance>()?;
    m.add_class::<Model>()?;
    m.add_class::<Policy>()?;
    Ok(())
}
