use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use trialsearch::model::Estimator;
use trialsearch::solvers::SolverKind;
use trialsearch::BoundMode;

#[derive(Debug, Parser)]
#[command(
    name = "trialsearch",
    version,
    about = "Learn and evaluate policies that search for a near-optimal action in few trials"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Draw a synthetic instance and write trajectories, panels, spec and instance files.
    Generate(GenerateArgs),
    /// Fit an outcome model to a trajectory file.
    Fit(FitArgs),
    /// Solve for a policy and report its predicted expected search length.
    Solve(SolveArgs),
    /// Evaluate a policy against ground-truth subjects.
    Eval(EvalArgs),
    /// Solve and evaluate over a grid of delta (cdp, greedy) or lambda (ndp).
    Sweep(SweepArgs),
    /// Compare the dynamic program with brute-force enumeration on random small instances.
    OracleCheck(OracleArgs),
    /// Interactive session: recommends the next action and reads observed outcomes.
    Step(StepArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ToyArg {
    Example1,
    A6,
}

#[derive(Debug, Clone, Args)]
pub struct ConfigArg {
    /// JSON run configuration; explicit flags win.
    #[arg(long, value_name = "PATH")]
    pub config: Option<PathBuf>,
}

/// Where the outcome model comes from. Exactly one is required.
#[derive(Debug, Clone, Args)]
pub struct ModelSource {
    #[arg(long, value_enum)]
    pub toy: Option<ToyArg>,
    /// Outcome-grid offset of the a6 toy.
    #[arg(long, default_value_t = 0.1)]
    pub toy_epsilon: f64,
    /// Fitted model JSON.
    #[arg(long, value_name = "PATH")]
    pub model: Option<PathBuf>,
    /// DGP instance JSON; its true model is used.
    #[arg(long, value_name = "PATH")]
    pub instance: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
pub struct StopArgs {
    #[arg(long)]
    pub solver: Option<SolverKind>,
    #[arg(long)]
    pub delta: Option<f64>,
    #[arg(long)]
    pub epsilon: Option<f64>,
    #[arg(long)]
    pub alpha: Option<f64>,
    #[arg(long)]
    pub bound: Option<BoundMode>,
    #[arg(long)]
    pub lambda: Option<f64>,
}

/// Ground-truth subjects for evaluation. Toys use their exact subject
/// distribution when no panel is given; instances are sampled.
#[derive(Debug, Clone, Args)]
pub struct SubjectArgs {
    /// Panel CSV with every potential outcome.
    #[arg(long, value_name = "PATH")]
    pub panel: Option<PathBuf>,
    /// Subjects to sample from an instance.
    #[arg(long, default_value_t = 10_000)]
    pub n: usize,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Efficacy tolerance in outcome units.
    #[arg(long)]
    pub eval_epsilon: Option<f64>,
    /// Results CSV.
    #[arg(long, value_name = "PATH")]
    pub out: Option<PathBuf>,
    /// Long-format best-so-far curve CSV.
    #[arg(long, value_name = "PATH")]
    pub curves_out: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
pub struct GenerateArgs {
    #[command(flatten)]
    pub config: ConfigArg,
    /// Seed for the instance parameters.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Seed for subjects and trajectories; defaults to the instance seed.
    #[arg(long)]
    pub data_seed: Option<u64>,
    /// Number of training subjects.
    #[arg(long, default_value_t = 1000)]
    pub n: usize,
    /// Number of held-out subjects.
    #[arg(long, default_value_t = 0)]
    pub test_n: usize,
    #[arg(long)]
    pub k: Option<usize>,
    #[arg(long)]
    pub ny: Option<usize>,
    /// Number of binary moderators.
    #[arg(long)]
    pub d: Option<usize>,
    /// Number of binary context covariates.
    #[arg(long)]
    pub v: Option<usize>,
    #[arg(long)]
    pub w_x: Option<f64>,
    #[arg(long)]
    pub p_stop: Option<f64>,
    /// Output directory.
    #[arg(long, value_name = "DIR")]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Args)]
pub struct FitArgs {
    #[command(flatten)]
    pub config: ConfigArg,
    /// Trajectory CSV.
    #[arg(long = "in", value_name = "PATH")]
    pub input: Option<PathBuf>,
    /// Spec JSON describing the trajectory file.
    #[arg(long, value_name = "PATH")]
    pub spec: Option<PathBuf>,
    #[arg(long)]
    pub estimator: Option<Estimator>,
    /// Dirichlet pseudo-count per outcome.
    #[arg(long)]
    pub pseudocount: Option<f64>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub learning_rate: Option<f64>,
    #[arg(long)]
    pub l2: Option<f64>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long, value_name = "PATH")]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
pub struct SolveArgs {
    #[command(flatten)]
    pub config: ConfigArg,
    #[command(flatten)]
    pub source: ModelSource,
    #[command(flatten)]
    pub stop: StopArgs,
    /// Policy JSON.
    #[arg(long, value_name = "PATH")]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
pub struct EvalArgs {
    #[command(flatten)]
    pub config: ConfigArg,
    #[command(flatten)]
    pub source: ModelSource,
    #[command(flatten)]
    pub stop: StopArgs,
    /// Previously solved policy JSON; otherwise the policy is solved here.
    #[arg(long, value_name = "PATH")]
    pub policy: Option<PathBuf>,
    #[command(flatten)]
    pub subjects: SubjectArgs,
}

#[derive(Debug, Clone, Args)]
pub struct SweepArgs {
    #[command(flatten)]
    pub config: ConfigArg,
    #[command(flatten)]
    pub source: ModelSource,
    #[command(flatten)]
    pub stop: StopArgs,
    /// Comma-separated parameter values.
    #[arg(long, value_delimiter = ',', num_args = 1..)]
    pub grid: Vec<f64>,
    #[command(flatten)]
    pub subjects: SubjectArgs,
}

#[derive(Debug, Clone, Args)]
pub struct OracleArgs {
    #[arg(long, default_value_t = 50)]
    pub instances: usize,
    #[arg(long, default_value_t = 3)]
    pub k: usize,
    #[arg(long, default_value_t = 2)]
    pub ny: usize,
    /// Largest number of contexts per instance.
    #[arg(long, default_value_t = 2)]
    pub max_contexts: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Debug, Clone, Args)]
pub struct StepArgs {
    #[command(flatten)]
    pub config: ConfigArg,
    #[command(flatten)]
    pub source: ModelSource,
    #[command(flatten)]
    pub stop: StopArgs,
    /// Context coordinates, comma-separated.
    #[arg(long, value_delimiter = ',')]
    pub context: Vec<usize>,
}
