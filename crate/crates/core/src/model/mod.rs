//! Conditional outcome models `p(Y(a) = y | h)`.

mod latent;
mod logistic;
mod tabular;

pub(crate) use latent::sample_categorical;
pub use latent::{LatentContext, LatentModel};
pub use logistic::{feature_dim, featurize, fit_logistic, LogisticModel, LogisticModelConfig};
pub use tabular::{
    fit_counts, historical_weight, posterior_distribution, CountTable, PriorKind, SmoothingConfig, TabularModel,
};

use crate::domain::{Action, Dataset, History, ProblemSpec};
use crate::error::ModelError;

/// Anything that answers `p(Y(a) = · | h)` over the outcome grid.
///
/// Implementations must return a nonnegative vector summing to one and must
/// not depend on the order in which the trials of `h` were observed.
pub trait OutcomeModel: Send + Sync {
    fn spec(&self) -> &ProblemSpec;

    fn predict(&self, h: &History, action: Action) -> Vec<f64>;
}

impl<M: OutcomeModel + ?Sized> OutcomeModel for &M {
    fn spec(&self) -> &ProblemSpec {
        (**self).spec()
    }

    fn predict(&self, h: &History, action: Action) -> Vec<f64> {
        (**self).predict(h, action)
    }
}

impl<M: OutcomeModel + ?Sized> OutcomeModel for std::sync::Arc<M> {
    fn spec(&self) -> &ProblemSpec {
        (**self).spec()
    }

    fn predict(&self, h: &History, action: Action) -> Vec<f64> {
        (**self).predict(h, action)
    }
}

impl<M: OutcomeModel + ?Sized> OutcomeModel for Box<M> {
    fn spec(&self) -> &ProblemSpec {
        (**self).spec()
    }

    fn predict(&self, h: &History, action: Action) -> Vec<f64> {
        (**self).predict(h, action)
    }
}

/// Which estimator to fit from trajectories.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Estimator {
    /// Counts with the uninformed Dirichlet prior.
    Tabular,
    /// Counts with the prior pooled from sub-histories.
    Historical,
    Logistic,
}

impl std::str::FromStr for Estimator {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "tabular" => Ok(Estimator::Tabular),
            "historical" => Ok(Estimator::Historical),
            "logistic" => Ok(Estimator::Logistic),
            other => Err(format!("unknown estimator {other:?}")),
        }
    }
}

impl std::fmt::Display for Estimator {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Estimator::Tabular => "tabular",
            Estimator::Historical => "historical",
            Estimator::Logistic => "logistic",
        })
    }
}

/// Any of the supported models behind one type.
#[derive(Debug, Clone, PartialEq)]
pub enum FittedModel {
    Tabular(TabularModel),
    Logistic(LogisticModel),
    Latent(LatentModel),
}

impl OutcomeModel for FittedModel {
    fn spec(&self) -> &ProblemSpec {
        match self {
            FittedModel::Tabular(m) => m.spec(),
            FittedModel::Logistic(m) => m.spec(),
            FittedModel::Latent(m) => m.spec(),
        }
    }

    fn predict(&self, h: &History, action: Action) -> Vec<f64> {
        match self {
            FittedModel::Tabular(m) => m.predict(h, action),
            FittedModel::Logistic(m) => m.predict(h, action),
            FittedModel::Latent(m) => m.predict(h, action),
        }
    }
}

/// Fits `estimator` on `dataset`. A logistic fit on single-class data
/// returns the point-mass model rather than an error.
pub fn fit_estimator(
    dataset: &Dataset,
    estimator: Estimator,
    pseudocount: f64,
    logistic: &LogisticModelConfig,
) -> Result<FittedModel, ModelError> {
    match estimator {
        Estimator::Tabular => {
            Ok(FittedModel::Tabular(TabularModel::fit(dataset, SmoothingConfig::uninformed(pseudocount))?))
        }
        Estimator::Historical => {
            Ok(FittedModel::Tabular(TabularModel::fit(dataset, SmoothingConfig::historical(pseudocount))?))
        }
        Estimator::Logistic => match fit_logistic(dataset, logistic) {
            Ok(m) => Ok(FittedModel::Logistic(m)),
            Err(ModelError::DegenerateData(m)) => Ok(FittedModel::Logistic(*m)),
            Err(e) => Err(e),
        },
    }
}

/// Divides by the total, or returns uniform if the total is not positive.
pub(crate) fn normalize(mut v: Vec<f64>) -> Vec<f64> {
    let total: f64 = v.iter().sum();
    if total > 0.0 && total.is_finite() {
        v.iter_mut().for_each(|p| *p /= total);
    } else {
        let n = v.len() as f64;
        v.iter_mut().for_each(|p| *p = 1.0 / n);
    }
    v
}
