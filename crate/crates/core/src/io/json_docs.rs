//! Versioned JSON documents for specs, models, policies, DGP instances and
//! run configurations.

use std::collections::{BTreeMap, HashMap};
use std::fs;
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::dgp::{DgpInstance, DgpParams};
use crate::domain::{Action, CanonicalKey, Context, ProblemSpec};
use crate::error::IoError;
use crate::eval::EvalConfig;
use crate::model::{
    CountTable, Estimator, FittedModel, LatentContext, LatentModel, LogisticModel, LogisticModelConfig, OutcomeModel,
    SmoothingConfig, TabularModel,
};
use crate::solvers::{CdpEntry, CdpPolicy, NdpEntry, NdpPolicy, SolverKind};
use crate::stopping::StoppingConfig;

pub const FORMAT_VERSION: u32 = 1;

fn check_version(found: u32) -> Result<(), IoError> {
    if found != FORMAT_VERSION {
        return Err(IoError::Version { found, expected: FORMAT_VERSION });
    }
    Ok(())
}

fn default_version() -> u32 {
    FORMAT_VERSION
}

pub fn write_json<T: Serialize>(path: impl AsRef<Path>, value: &T) -> Result<(), IoError> {
    let path = path.as_ref();
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text).map_err(|source| IoError::File { path: path.display().to_string(), source })
}

pub fn read_json<T: DeserializeOwned>(path: impl AsRef<Path>) -> Result<T, IoError> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|source| IoError::File { path: path.display().to_string(), source })?;
    Ok(serde_json::from_str(&text)?)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpecDoc {
    pub format_version: u32,
    pub spec: ProblemSpec,
}

impl SpecDoc {
    pub fn new(spec: ProblemSpec) -> Self {
        SpecDoc { format_version: FORMAT_VERSION, spec }
    }

    pub fn into_spec(self) -> Result<ProblemSpec, IoError> {
        check_version(self.format_version)?;
        Ok(self.spec)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    Tabular,
    Logistic,
    Latent,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelDoc {
    pub format_version: u32,
    pub kind: ModelKind,
    pub spec: ProblemSpec,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub smoothing: Option<SmoothingConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub counts: Option<BTreeMap<String, BTreeMap<Action, Vec<u64>>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub logistic: Option<LogisticModel>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub latent: Option<Vec<(Context, LatentContext)>>,
}

impl ModelDoc {
    pub fn from_model(model: &FittedModel) -> Self {
        let mut doc = ModelDoc {
            format_version: FORMAT_VERSION,
            kind: ModelKind::Tabular,
            spec: model.spec().clone(),
            smoothing: None,
            counts: None,
            logistic: None,
            latent: None,
        };
        match model {
            FittedModel::Tabular(m) => {
                doc.smoothing = Some(*m.smoothing());
                doc.counts = Some(m.table().to_entries());
            }
            FittedModel::Logistic(m) => {
                doc.kind = ModelKind::Logistic;
                doc.logistic = Some(m.clone());
            }
            FittedModel::Latent(m) => {
                doc.kind = ModelKind::Latent;
                doc.latent = Some(m.contexts().map(|c| (c.clone(), m.context(c).expect("listed").clone())).collect());
            }
        }
        doc
    }

    pub fn into_model(self) -> Result<FittedModel, IoError> {
        check_version(self.format_version)?;
        let missing = |what: &str| IoError::SpecMismatch(format!("{:?} model document lacks {what}", self.kind));
        match self.kind {
            ModelKind::Tabular => {
                let smoothing = self.smoothing.ok_or_else(|| missing("smoothing"))?;
                let counts = self.counts.clone().ok_or_else(|| missing("counts"))?;
                let table = CountTable::from_entries(self.spec, counts)?;
                let model = TabularModel::new(table, smoothing).map_err(|e| IoError::SpecMismatch(e.to_string()))?;
                Ok(FittedModel::Tabular(model))
            }
            ModelKind::Logistic => {
                let m = self.logistic.clone().ok_or_else(|| missing("logistic weights"))?;
                if m.spec() != &self.spec {
                    return Err(IoError::SpecMismatch("logistic model spec differs from document spec".into()));
                }
                Ok(FittedModel::Logistic(m))
            }
            ModelKind::Latent => {
                let contexts = self.latent.clone().ok_or_else(|| missing("latent tables"))?;
                Ok(FittedModel::Latent(LatentModel::new(self.spec, contexts.into_iter().collect())?))
            }
        }
    }
}

pub fn save_model(path: impl AsRef<Path>, model: &FittedModel) -> Result<(), IoError> {
    write_json(path, &ModelDoc::from_model(model))
}

pub fn load_model(path: impl AsRef<Path>) -> Result<FittedModel, IoError> {
    read_json::<ModelDoc>(path)?.into_model()
}

/// A solved policy in storable form. Greedy policies only keep their
/// stopping rule and need the model again when loaded.
#[derive(Debug, Clone, PartialEq)]
pub enum StoredPolicy {
    Cdp(CdpPolicy),
    Ndp(NdpPolicy),
    Greedy { spec: ProblemSpec, stopping: StoppingConfig },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolicyDoc {
    pub format_version: u32,
    pub kind: SolverKind,
    pub spec: ProblemSpec,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub stopping: Option<StoppingConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lambda: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cdp_table: Option<BTreeMap<String, CdpEntry>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ndp_table: Option<BTreeMap<String, NdpEntry>>,
}

fn parse_keys<E>(spec: &ProblemSpec, table: BTreeMap<String, E>) -> Result<HashMap<CanonicalKey, E>, IoError> {
    table
        .into_iter()
        .map(|(k, e)| {
            let key: CanonicalKey = k.parse()?;
            spec.check_context(&key.context())?;
            if key.slots().len() != spec.num_actions() {
                return Err(IoError::SpecMismatch(format!("key {key} does not have {} slots", spec.num_actions())));
            }
            Ok((key, e))
        })
        .collect()
}

impl PolicyDoc {
    pub fn from_policy(policy: &StoredPolicy) -> Self {
        let base = |kind, spec: &ProblemSpec| PolicyDoc {
            format_version: FORMAT_VERSION,
            kind,
            spec: spec.clone(),
            stopping: None,
            lambda: None,
            cdp_table: None,
            ndp_table: None,
        };
        match policy {
            StoredPolicy::Cdp(p) => PolicyDoc {
                stopping: Some(*p.stopping()),
                cdp_table: Some(p.to_entries()),
                ..base(SolverKind::Cdp, p.spec())
            },
            StoredPolicy::Ndp(p) => PolicyDoc {
                lambda: Some(p.lambda()),
                ndp_table: Some(p.to_entries()),
                ..base(SolverKind::Ndp, p.spec())
            },
            StoredPolicy::Greedy { spec, stopping } => {
                PolicyDoc { stopping: Some(*stopping), ..base(SolverKind::Greedy, spec) }
            }
        }
    }

    pub fn into_policy(self) -> Result<StoredPolicy, IoError> {
        check_version(self.format_version)?;
        let missing = |what: &str| IoError::SpecMismatch(format!("{} policy document lacks {what}", self.kind));
        match self.kind {
            SolverKind::Cdp => {
                let stopping = self.stopping.ok_or_else(|| missing("stopping"))?;
                let table = self.cdp_table.clone().ok_or_else(|| missing("cdp_table"))?;
                let table = parse_keys(&self.spec, table)?;
                Ok(StoredPolicy::Cdp(CdpPolicy::from_parts(self.spec, stopping, table)))
            }
            SolverKind::Ndp => {
                let lambda = self.lambda.ok_or_else(|| missing("lambda"))?;
                let table = self.ndp_table.clone().ok_or_else(|| missing("ndp_table"))?;
                let table = parse_keys(&self.spec, table)?;
                Ok(StoredPolicy::Ndp(NdpPolicy::from_parts(self.spec, lambda, table)))
            }
            SolverKind::Greedy => {
                let stopping = self.stopping.ok_or_else(|| missing("stopping"))?;
                Ok(StoredPolicy::Greedy { spec: self.spec, stopping })
            }
        }
    }
}

pub fn save_policy(path: impl AsRef<Path>, policy: &StoredPolicy) -> Result<(), IoError> {
    write_json(path, &PolicyDoc::from_policy(policy))
}

pub fn load_policy(path: impl AsRef<Path>) -> Result<StoredPolicy, IoError> {
    read_json::<PolicyDoc>(path)?.into_policy()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InstanceDoc {
    pub format_version: u32,
    pub instance: DgpInstance,
}

pub fn save_instance(path: impl AsRef<Path>, instance: &DgpInstance) -> Result<(), IoError> {
    write_json(path, &InstanceDoc { format_version: FORMAT_VERSION, instance: instance.clone() })
}

pub fn load_instance(path: impl AsRef<Path>) -> Result<DgpInstance, IoError> {
    let doc: InstanceDoc = read_json(path)?;
    check_version(doc.format_version)?;
    Ok(doc.instance)
}

/// One JSON file configuring a run. Every field is optional; command-line
/// flags take precedence.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default = "default_version")]
    pub format_version: u32,
    pub spec: Option<ProblemSpec>,
    pub dgp: Option<DgpParams>,
    pub estimator: Option<Estimator>,
    pub smoothing: Option<SmoothingConfig>,
    pub logistic: Option<LogisticModelConfig>,
    pub stopping: Option<StoppingConfig>,
    pub solver: Option<SolverKind>,
    pub lambda: Option<f64>,
    pub eval: Option<EvalConfig>,
    pub seeds: Option<Vec<u64>>,
    pub paths: BTreeMap<String, String>,
}

pub fn load_config(path: impl AsRef<Path>) -> Result<RunConfig, IoError> {
    let cfg: RunConfig = read_json(path)?;
    check_version(cfg.format_version)?;
    Ok(cfg)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dgp::{build_instance, toy::example1};
    use crate::domain::{Dataset, Trajectory, TrialRecord};
    use crate::model::{fit_estimator, PriorKind};
    use crate::solvers::{solve_cdp, solve_ndp};

    fn roundtrip<T: Serialize + DeserializeOwned>(v: &T) -> T {
        serde_json::from_str(&serde_json::to_string(v).unwrap()).unwrap()
    }

    fn dataset() -> Dataset {
        let spec = ProblemSpec::with_integer_outcomes(3, 2, vec![2]).unwrap();
        let ctx = |x| Context::new(vec![x]);
        let trajs = vec![
            Trajectory::new(ctx(0), vec![TrialRecord::new(0, 0), TrialRecord::new(1, 1)], true),
            Trajectory::new(ctx(1), vec![TrialRecord::new(2, 1)], true),
            Trajectory::new(ctx(1), vec![TrialRecord::new(2, 0), TrialRecord::new(0, 1)], true),
        ];
        Dataset::new(spec, trajs).unwrap()
    }

    #[test]
    fn models_round_trip() {
        let data = dataset();
        let lcfg = LogisticModelConfig { epochs: 50, ..LogisticModelConfig::default() };
        for est in [Estimator::Tabular, Estimator::Historical, Estimator::Logistic] {
            let m = fit_estimator(&data, est, 0.1, &lcfg).unwrap();
            let back = roundtrip(&ModelDoc::from_model(&m)).into_model().unwrap();
            assert_eq!(back, m, "{est}");
        }
        let latent = FittedModel::Latent(example1().model);
        assert_eq!(roundtrip(&ModelDoc::from_model(&latent)).into_model().unwrap(), latent);
        if let FittedModel::Tabular(t) = fit_estimator(&data, Estimator::Historical, 0.1, &lcfg).unwrap() {
            assert_eq!(t.smoothing().prior, PriorKind::Historical);
        }
    }

    #[test]
    fn policies_round_trip() {
        let toy = example1();
        let cdp = solve_cdp(&toy.model, &StoppingConfig::default(), &[toy.context()]).unwrap();
        let stored = StoredPolicy::Cdp(cdp);
        assert_eq!(roundtrip(&PolicyDoc::from_policy(&stored)).into_policy().unwrap(), stored);
        let ndp = StoredPolicy::Ndp(solve_ndp(&toy.model, 0.3, &[toy.context()]).unwrap());
        assert_eq!(roundtrip(&PolicyDoc::from_policy(&ndp)).into_policy().unwrap(), ndp);
    }

    #[test]
    fn instance_round_trip_is_bit_exact() {
        let inst = build_instance(&DgpParams::default()).unwrap();
        let doc = InstanceDoc { format_version: FORMAT_VERSION, instance: inst.clone() };
        assert_eq!(roundtrip(&doc).instance, inst);
    }

    #[test]
    fn wrong_version_is_rejected() {
        let mut doc = SpecDoc::new(ProblemSpec::with_integer_outcomes(2, 2, vec![1]).unwrap());
        doc.format_version = 99;
        assert!(matches!(doc.into_spec(), Err(IoError::Version { found: 99, .. })));
    }

    #[test]
    fn config_defaults() {
        let cfg: RunConfig = serde_json::from_str(r#"{"lambda": 0.35, "seeds": [1, 2]}"#).unwrap();
        assert_eq!(cfg.format_version, FORMAT_VERSION);
        assert_eq!(cfg.lambda, Some(0.35));
        assert!(serde_json::from_str::<RunConfig>(r#"{"lamda": 1}"#).is_err());
    }
}
