use std::fs;
use std::io::{BufRead, Write};
use std::path::PathBuf;

use rand::Rng;

use trialsearch::dgp::{build_instance, build_toy, random_latent_model, DgpInstance, DgpParams, ToyInstance, ToyKind};
use trialsearch::eval::{evaluate_weighted, policy_tree_stats, sweep, EvalConfig, Metrics};
use trialsearch::io::{
    load_config, load_instance, load_model, load_policy, read_json, read_panels, read_trajectories, save_instance,
    save_model, save_policy, write_curves, write_json, write_panel, write_results, write_trajectories, ResultRow,
    RunConfig, SpecDoc, StoredPolicy,
};
use trialsearch::model::{fit_estimator, Estimator, FittedModel, LogisticModelConfig, SmoothingConfig};
use trialsearch::rng::{stream, StreamPurpose};
use trialsearch::solvers::{brute_force_optimal, solve, solve_cdp, GreedyPolicy, Policy, SolvedPolicy, SolverKind};
use trialsearch::stopping::rho_with_ordering;
use trialsearch::{Context, Decision, History, OutcomeModel, ProblemSpec, StoppingConfig, Subject};

use crate::args::{
    Command, ConfigArg, EvalArgs, FitArgs, GenerateArgs, ModelSource, OracleArgs, SolveArgs, StepArgs, StopArgs,
    SubjectArgs, SweepArgs, ToyArg,
};
use crate::CliError;

const DEFAULT_LAMBDA: f64 = 0.35;

pub fn run(command: Command) -> Result<(), CliError> {
    match command {
        Command::Generate(a) => generate(a),
        Command::Fit(a) => fit(a),
        Command::Solve(a) => solve_cmd(a),
        Command::Eval(a) => eval_cmd(a),
        Command::Sweep(a) => sweep_cmd(a),
        Command::OracleCheck(a) => oracle_check(a),
        Command::Step(a) => step(a),
    }
}

/// Trims a float to at most nine decimals without trailing zeros.
fn num(x: f64) -> String {
    let s = format!("{x:.9}");
    let s = s.trim_end_matches('0').trim_end_matches('.');
    if s == "-0" {
        "0".into()
    } else {
        s.into()
    }
}

fn load_cfg(arg: &ConfigArg) -> Result<RunConfig, CliError> {
    match &arg.config {
        Some(p) => load_config(p).map_err(CliError::data),
        None => Ok(RunConfig::default()),
    }
}

fn cfg_path(cfg: &RunConfig, flag: &Option<PathBuf>, key: &str) -> Option<PathBuf> {
    flag.clone().or_else(|| cfg.paths.get(key).map(PathBuf::from))
}

fn stopping(stop: &StopArgs, cfg: &RunConfig) -> Result<StoppingConfig, CliError> {
    let base = cfg.stopping.unwrap_or_default();
    let s = StoppingConfig {
        epsilon: stop.epsilon.unwrap_or(base.epsilon),
        delta: stop.delta.unwrap_or(base.delta),
        alpha: stop.alpha.unwrap_or(base.alpha),
        bound: stop.bound.unwrap_or(base.bound),
        ordering: base.ordering,
    };
    s.validate().map_err(CliError::Usage)?;
    Ok(s)
}

fn solver_kind(stop: &StopArgs, cfg: &RunConfig) -> SolverKind {
    stop.solver.or(cfg.solver).unwrap_or(SolverKind::Cdp)
}

fn lambda(stop: &StopArgs, cfg: &RunConfig) -> Result<f64, CliError> {
    let l = stop.lambda.or(cfg.lambda).unwrap_or(DEFAULT_LAMBDA);
    if !(l > 0.0 && l.is_finite()) {
        return Err(CliError::Usage(format!("--lambda must be positive, got {l}")));
    }
    Ok(l)
}

struct Loaded {
    model: FittedModel,
    label: String,
    /// Context weights for averaging over contexts.
    weights: Vec<(Context, f64)>,
    toy: Option<ToyInstance>,
    instance: Option<DgpInstance>,
}

fn load_source(src: &ModelSource, cfg: &RunConfig) -> Result<Loaded, CliError> {
    let model_path = cfg_path(cfg, &src.model, "model");
    let instance_path = cfg_path(cfg, &src.instance, "instance");
    let given =
        usize::from(src.toy.is_some()) + usize::from(model_path.is_some()) + usize::from(instance_path.is_some());
    if given != 1 {
        return Err(CliError::Usage("give exactly one of --toy, --model, --instance".into()));
    }
    if let Some(toy) = src.toy {
        let kind = match toy {
            ToyArg::Example1 => ToyKind::Example1,
            ToyArg::A6 => ToyKind::A6(src.toy_epsilon),
        };
        let toy = build_toy(kind).map_err(|e| CliError::Usage(e.to_string()))?;
        return Ok(Loaded {
            model: FittedModel::Latent(toy.model.clone()),
            label: format!("toy:{}", if toy.kind == ToyKind::Example1 { "example1" } else { "a6" }),
            weights: vec![(toy.context(), 1.0)],
            toy: Some(toy),
            instance: None,
        });
    }
    if let Some(p) = instance_path {
        let inst = load_instance(&p).map_err(CliError::data)?;
        return Ok(Loaded {
            model: FittedModel::Latent(inst.true_model()),
            label: "true".into(),
            weights: inst.context_distribution(),
            toy: None,
            instance: Some(inst),
        });
    }
    let p = model_path.expect("counted above");
    let model = load_model(&p).map_err(CliError::data)?;
    let label = match &model {
        FittedModel::Tabular(m) => {
            if m.smoothing().prior == trialsearch::model::PriorKind::Historical {
                "historical"
            } else {
                "tabular"
            }
        }
        FittedModel::Logistic(_) => "logistic",
        FittedModel::Latent(_) => "latent",
    }
    .to_string();
    let weights = model.spec().all_contexts().into_iter().map(|c| (c, 1.0)).collect();
    Ok(Loaded { model, label, weights, toy: None, instance: None })
}

fn contexts_of(loaded: &Loaded) -> Vec<Context> {
    loaded.weights.iter().map(|(c, _)| c.clone()).collect()
}

fn generate(a: GenerateArgs) -> Result<(), CliError> {
    let cfg = load_cfg(&a.config)?;
    let base = cfg.dgp.unwrap_or_default();
    let params = DgpParams {
        num_actions: a.k.unwrap_or(base.num_actions),
        num_outcomes: a.ny.unwrap_or(base.num_outcomes),
        moderator_dims: a.d.unwrap_or(base.moderator_dims),
        context_dims: a.v.unwrap_or(base.context_dims),
        w_x: a.w_x.unwrap_or(base.w_x),
        p_stop: a.p_stop.unwrap_or(base.p_stop),
        seed: a.seed.unwrap_or(base.seed),
    };
    params.validate().map_err(|e| CliError::Usage(e.to_string()))?;
    let inst = build_instance(&params).map_err(CliError::data)?;
    let data_seed = a.data_seed.unwrap_or(params.seed);
    fs::create_dir_all(&a.out).map_err(|e| CliError::Data(format!("{}: {e}", a.out.display())))?;
    let (data, panel) = inst.generate(a.n, data_seed);
    let out = |name: &str| a.out.join(name);
    write_trajectories(out("trajectories.csv"), &data).map_err(CliError::data)?;
    write_panel(out("panel.csv"), &panel).map_err(CliError::data)?;
    if a.test_n > 0 {
        // Held-out subjects come from a seed stream disjoint from the training one.
        let test = inst.sample_panel(a.test_n, data_seed ^ 0x7e57_7e57_7e57_7e57);
        write_panel(out("test_panel.csv"), &test).map_err(CliError::data)?;
    }
    write_json(out("spec.json"), &SpecDoc::new(inst.spec())).map_err(CliError::data)?;
    save_instance(out("instance.json"), &inst).map_err(CliError::data)?;
    println!("wrote {} trajectories to {}", data.len(), a.out.display());
    Ok(())
}

fn fit(a: FitArgs) -> Result<(), CliError> {
    let cfg = load_cfg(&a.config)?;
    let input = cfg_path(&cfg, &a.input, "in").ok_or_else(|| CliError::Usage("--in is required".into()))?;
    let spec_path = cfg_path(&cfg, &a.spec, "spec");
    let out = cfg_path(&cfg, &a.out, "out").ok_or_else(|| CliError::Usage("--out is required".into()))?;
    let spec: ProblemSpec = match (spec_path, &cfg.spec) {
        (Some(p), _) => read_json::<SpecDoc>(p).and_then(SpecDoc::into_spec).map_err(CliError::data)?,
        (None, Some(s)) => s.clone(),
        (None, None) => return Err(CliError::Usage("--spec is required".into())),
    };
    let data = read_trajectories(&input, &spec).map_err(CliError::data)?;
    let estimator = a.estimator.or(cfg.estimator).unwrap_or(Estimator::Historical);
    let pseudocount =
        a.pseudocount.or(cfg.smoothing.map(|s| s.pseudocount)).unwrap_or(SmoothingConfig::default().pseudocount);
    let lbase = cfg.logistic.unwrap_or_default();
    let lcfg = LogisticModelConfig {
        learning_rate: a.learning_rate.unwrap_or(lbase.learning_rate),
        epochs: a.epochs.unwrap_or(lbase.epochs),
        l2_penalty: a.l2.unwrap_or(lbase.l2_penalty),
        seed: a.seed.unwrap_or(lbase.seed),
    };
    let model = fit_estimator(&data, estimator, pseudocount, &lcfg).map_err(CliError::data)?;
    save_model(&out, &model).map_err(CliError::data)?;
    println!("fitted {estimator} model on {} trajectories; wrote {}", data.len(), out.display());
    Ok(())
}

fn solve_cmd(a: SolveArgs) -> Result<(), CliError> {
    let cfg = load_cfg(&a.config)?;
    let loaded = load_source(&a.source, &cfg)?;
    let kind = solver_kind(&a.stop, &cfg);
    let stop = stopping(&a.stop, &cfg)?;
    let lam = lambda(&a.stop, &cfg)?;
    let contexts = contexts_of(&loaded);
    let policy = solve(kind, &loaded.model, &stop, lam, &contexts).map_err(CliError::data)?;
    println!("solver: {kind}");
    match kind {
        SolverKind::Ndp => println!("lambda: {}", num(lam)),
        _ => println!(
            "threshold: {} (delta {}, alpha {}, epsilon {}, bound {})",
            num(stop.threshold()),
            num(stop.delta),
            num(stop.alpha),
            num(stop.epsilon),
            stop.bound
        ),
    }
    let total: f64 = loaded.weights.iter().map(|(_, w)| w).sum();
    let mut expected = 0.0;
    for (ctx, w) in &loaded.weights {
        let (e, worst) = policy_tree_stats(&policy, &loaded.model, ctx).map_err(CliError::data)?;
        let root = History::empty(ctx.clone(), loaded.model.spec().num_actions());
        let first = policy.decide(&root, &mut stream(0, StreamPurpose::Rollout, 0)).map_err(CliError::data)?;
        let first = match first {
            Decision::Stop => "stop".to_string(),
            Decision::Try(a) => a.to_string(),
        };
        println!("context {ctx}: first action {first}, expected search length {}, worst case {worst}", num(e));
        expected += w * e;
    }
    if let SolvedPolicy::Cdp(p) = &policy {
        let predicted = p.expected_search_length(&loaded.weights).expect("all contexts solved");
        println!("expected search length: {}", num(predicted));
    } else {
        println!("expected search length: {}", num(expected / total));
    }
    if let Some(out) = cfg_path(&cfg, &a.out, "out") {
        let stored = match policy {
            SolvedPolicy::Cdp(p) => StoredPolicy::Cdp(p),
            SolvedPolicy::Ndp(p) => StoredPolicy::Ndp(p),
            SolvedPolicy::Greedy(_) => StoredPolicy::Greedy { spec: loaded.model.spec().clone(), stopping: stop },
        };
        save_policy(&out, &stored).map_err(CliError::data)?;
        println!("wrote {}", out.display());
    }
    Ok(())
}

fn eval_config(s: &SubjectArgs, cfg: &RunConfig) -> EvalConfig {
    let base = cfg.eval.unwrap_or_default();
    EvalConfig {
        epsilon: s.eval_epsilon.unwrap_or(base.epsilon),
        max_steps: base.max_steps,
        seed: s.seed.unwrap_or(base.seed),
    }
}

fn subjects(loaded: &Loaded, s: &SubjectArgs, cfg: &RunConfig) -> Result<Vec<(Subject, f64)>, CliError> {
    if let Some(p) = cfg_path(cfg, &s.panel, "panel") {
        let panel = read_panels(&p, loaded.model.spec()).map_err(CliError::data)?;
        return Ok(panel.subjects.into_iter().map(|s| (s, 1.0)).collect());
    }
    if let Some(toy) = &loaded.toy {
        return Ok(toy.subjects());
    }
    if let Some(inst) = &loaded.instance {
        let seed = s.seed.or(cfg.seeds.as_ref().and_then(|v| v.first().copied())).unwrap_or(0);
        return Ok(inst.sample_panel(s.n, seed).subjects.into_iter().map(|s| (s, 1.0)).collect());
    }
    Err(CliError::Usage("--panel is required when evaluating a fitted model".into()))
}

fn print_metrics(m: &Metrics) {
    println!("subjects: {}", m.n_subjects);
    println!("efficacy: {} (se {})", num(m.efficacy), num(m.efficacy_se));
    println!("mean search time: {} (se {})", num(m.mean_search_time), num(m.search_time_se));
    println!("worst search time: {}", m.worst_search_time);
    let curve: Vec<String> = m.best_so_far_curve.iter().map(|&v| num(v)).collect();
    println!("best-so-far curve: {}", curve.join(" "));
}

fn write_rows(s: &SubjectArgs, cfg: &RunConfig, rows: &[ResultRow]) -> Result<(), CliError> {
    if let Some(out) = cfg_path(cfg, &s.out, "out") {
        write_results(&out, rows).map_err(CliError::data)?;
    }
    if let Some(out) = cfg_path(cfg, &s.curves_out, "curves_out") {
        write_curves(&out, rows).map_err(CliError::data)?;
    }
    Ok(())
}

fn eval_cmd(a: EvalArgs) -> Result<(), CliError> {
    let cfg = load_cfg(&a.config)?;
    let loaded = load_source(&a.source, &cfg)?;
    let ecfg = eval_config(&a.subjects, &cfg);
    let subs = subjects(&loaded, &a.subjects, &cfg)?;
    let spec = loaded.model.spec().clone();
    let (metrics, kind, parameter) = match cfg_path(&cfg, &a.policy, "policy") {
        Some(p) => match load_policy(&p).map_err(CliError::data)? {
            StoredPolicy::Cdp(pol) => {
                let delta = pol.stopping().delta;
                (evaluate_weighted(&pol, &spec, &subs, &ecfg), SolverKind::Cdp, delta)
            }
            StoredPolicy::Ndp(pol) => {
                let l = pol.lambda();
                (evaluate_weighted(&pol, &spec, &subs, &ecfg), SolverKind::Ndp, l)
            }
            StoredPolicy::Greedy { stopping, .. } => {
                let pol = GreedyPolicy::new(&loaded.model, stopping).map_err(CliError::Usage)?;
                (evaluate_weighted(&pol, &spec, &subs, &ecfg), SolverKind::Greedy, stopping.delta)
            }
        },
        None => {
            let kind = solver_kind(&a.stop, &cfg);
            let stop = stopping(&a.stop, &cfg)?;
            let lam = lambda(&a.stop, &cfg)?;
            let pol = solve(kind, &loaded.model, &stop, lam, &contexts_of(&loaded)).map_err(CliError::data)?;
            let param = if kind == SolverKind::Ndp { lam } else { stop.delta };
            (evaluate_weighted(&pol, &spec, &subs, &ecfg), kind, param)
        }
    };
    let metrics = metrics.map_err(CliError::data)?;
    println!("solver: {kind}");
    print_metrics(&metrics);
    let row = ResultRow { solver: kind.to_string(), estimator: loaded.label, parameter, seed: ecfg.seed, metrics };
    write_rows(&a.subjects, &cfg, &[row])
}

fn sweep_cmd(a: SweepArgs) -> Result<(), CliError> {
    let cfg = load_cfg(&a.config)?;
    if a.grid.is_empty() {
        return Err(CliError::Usage("--grid needs at least one value".into()));
    }
    let loaded = load_source(&a.source, &cfg)?;
    let kind = solver_kind(&a.stop, &cfg);
    let stop = stopping(&a.stop, &cfg)?;
    let ecfg = eval_config(&a.subjects, &cfg);
    let subs = subjects(&loaded, &a.subjects, &cfg)?;
    if subs.iter().any(|(_, w)| *w != 1.0) {
        // Exact toy distributions are weighted; expand nothing, evaluate row by row instead.
        let mut rows = Vec::new();
        for &value in &a.grid {
            let (s, l) =
                if kind == SolverKind::Ndp { (stop, value) } else { (StoppingConfig { delta: value, ..stop }, 1.0) };
            let pol = solve(kind, &loaded.model, &s, l, &contexts_of(&loaded)).map_err(CliError::data)?;
            let m = evaluate_weighted(&pol, loaded.model.spec(), &subs, &ecfg).map_err(CliError::data)?;
            rows.push((value, m));
        }
        return finish_sweep(&a, &cfg, kind, &loaded.label, ecfg.seed, rows);
    }
    let plain: Vec<Subject> = subs.into_iter().map(|(s, _)| s).collect();
    let res = sweep(&loaded.model, kind, &stop, &a.grid, &plain, &ecfg).map_err(CliError::data)?;
    let rows = res.rows.into_iter().map(|r| (r.parameter, r.metrics)).collect();
    finish_sweep(&a, &cfg, kind, &loaded.label, ecfg.seed, rows)
}

fn finish_sweep(
    a: &SweepArgs,
    cfg: &RunConfig,
    kind: SolverKind,
    label: &str,
    seed: u64,
    rows: Vec<(f64, Metrics)>,
) -> Result<(), CliError> {
    let name = if kind == SolverKind::Ndp { "lambda" } else { "delta" };
    println!("{name},efficacy,mean_search_time,worst_search_time");
    for (p, m) in &rows {
        println!("{},{},{},{}", num(*p), num(m.efficacy), num(m.mean_search_time), m.worst_search_time);
    }
    let rows: Vec<ResultRow> = rows
        .into_iter()
        .map(|(parameter, metrics)| ResultRow {
            solver: kind.to_string(),
            estimator: label.to_string(),
            parameter,
            seed,
            metrics,
        })
        .collect();
    write_rows(&a.subjects, cfg, &rows)
}

fn oracle_check(a: OracleArgs) -> Result<(), CliError> {
    if a.max_contexts == 0 {
        return Err(CliError::Usage("--max-contexts must be at least 1".into()));
    }
    let deltas = [0.0, 0.2, 0.5];
    let mut matches = 0;
    let mut max_diff: f64 = 0.0;
    for i in 0..a.instances {
        let mut rng = stream(a.seed, StreamPurpose::Instance, i as u64);
        let n_ctx = rng.random_range(1..=a.max_contexts);
        let n_latent = rng.random_range(2..=3);
        let delta = deltas[rng.random_range(0..deltas.len())];
        let model =
            random_latent_model(a.k, a.ny, n_ctx, n_latent, &mut rng).map_err(|e| CliError::Usage(e.to_string()))?;
        let cfg = StoppingConfig { delta, ..StoppingConfig::default() };
        let contexts: Vec<Context> = model.contexts().cloned().collect();
        let policy = solve_cdp(&model, &cfg, &contexts).map_err(CliError::data)?;
        let mut ok = true;
        for ctx in &contexts {
            let oracle = brute_force_optimal(&model, &cfg, ctx).map_err(|e| CliError::Usage(e.to_string()))?;
            let dp = policy.expected_search_length_for(ctx).expect("solved");
            let diff = (dp - oracle.expected_length).abs();
            max_diff = max_diff.max(diff);
            ok &= diff <= 1e-9;
        }
        if ok {
            matches += 1;
        } else {
            println!("instance {i}: mismatch (delta {})", num(delta));
        }
    }
    println!("oracle check: {matches}/{} instances match (max abs difference {max_diff:.3e})", a.instances);
    if matches == a.instances {
        Ok(())
    } else {
        Err(CliError::Data(format!("{} instances disagree with the brute-force oracle", a.instances - matches)))
    }
}

fn step(a: StepArgs) -> Result<(), CliError> {
    let cfg = load_cfg(&a.config)?;
    let loaded = load_source(&a.source, &cfg)?;
    let spec = loaded.model.spec().clone();
    let context = if a.context.is_empty() {
        loaded.weights.first().map(|(c, _)| c.clone()).ok_or_else(|| CliError::Usage("no context".into()))?
    } else {
        Context::new(a.context.clone())
    };
    spec.check_context(&context).map_err(|e| CliError::Usage(e.to_string()))?;
    let kind = solver_kind(&a.stop, &cfg);
    let stop = stopping(&a.stop, &cfg)?;
    let lam = lambda(&a.stop, &cfg)?;
    let policy = solve(kind, &loaded.model, &stop, lam, std::slice::from_ref(&context)).map_err(CliError::data)?;
    let stdin = std::io::stdin();
    let mut out = std::io::stdout();
    run_session(&policy, &loaded.model, &stop, kind, context, &mut stdin.lock(), &mut out).map_err(CliError::data)
}

fn run_session<P: Policy, M: OutcomeModel>(
    policy: &P,
    model: &M,
    stop: &StoppingConfig,
    kind: SolverKind,
    context: Context,
    input: &mut dyn BufRead,
    out: &mut dyn Write,
) -> std::io::Result<()> {
    let spec = model.spec();
    let k = spec.num_actions();
    writeln!(
        out,
        "solver {kind}; stopping threshold delta/alpha = {} (delta {}, alpha {}), epsilon {}, bound {}",
        num(stop.threshold()),
        num(stop.delta),
        num(stop.alpha),
        num(stop.epsilon),
        stop.bound
    )?;
    writeln!(out, "context {context}; actions 0..{}; outcome indices 0..{}", k - 1, spec.num_outcomes() - 1)?;
    writeln!(out, "enter the outcome index of the recommended action, or `<action> <outcome>`, or q to quit")?;
    let mut h = History::empty(context, k);
    let mut rng = stream(0, StreamPurpose::Rollout, 0);
    loop {
        let r = rho_with_ordering(model, &h, stop.epsilon, stop.bound, stop.ordering);
        let decision = policy.decide(&h, &mut rng).map_err(std::io::Error::other)?;
        let recommended = match decision {
            Decision::Stop => {
                writeln!(out, "recommend: STOP (rho = {})", num(r))?;
                return Ok(());
            }
            Decision::Try(a) => {
                writeln!(out, "recommend: try action {a} (rho = {})", num(r))?;
                a
            }
        };
        loop {
            write!(out, "> ")?;
            out.flush()?;
            let mut line = String::new();
            if input.read_line(&mut line)? == 0 {
                writeln!(out)?;
                return Ok(());
            }
            let parts: Vec<&str> = line.split_whitespace().collect();
            let parsed: Option<(usize, usize)> = match parts.as_slice() {
                ["q"] | ["quit"] => return Ok(()),
                [y] => y.parse().ok().map(|y| (recommended, y)),
                [a, y] => a.parse().ok().zip(y.parse().ok()),
                _ => None,
            };
            let Some((action, outcome)) = parsed else {
                writeln!(out, "could not parse {:?}", line.trim())?;
                continue;
            };
            match h.extend(action, outcome).and_then(|next| {
                spec.check_trial(trialsearch::TrialRecord::new(action, outcome))?;
                Ok(next)
            }) {
                Ok(next) => {
                    h = next;
                    break;
                }
                Err(e) => writeln!(out, "rejected: {e}")?,
            }
        }
    }
}
