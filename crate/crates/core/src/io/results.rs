//! Evaluation results as CSV: one wide row per run and a long-format file
//! for best-so-far curves.

use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::IoError;
use crate::eval::Metrics;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultRow {
    pub solver: String,
    pub estimator: String,
    pub parameter: f64,
    pub seed: u64,
    pub metrics: Metrics,
}

#[derive(Serialize)]
struct FlatRow<'a> {
    solver: &'a str,
    estimator: &'a str,
    parameter: f64,
    seed: u64,
    n_subjects: usize,
    efficacy: f64,
    efficacy_se: f64,
    mean_search_time: f64,
    search_time_se: f64,
    worst_search_time: usize,
}

#[derive(Serialize)]
struct CurveRow<'a> {
    solver: &'a str,
    estimator: &'a str,
    parameter: f64,
    seed: u64,
    trial: usize,
    best_so_far: f64,
}

/// Rows are written sorted by (solver, estimator, parameter, seed).
pub fn write_results_to<W: Write>(writer: W, rows: &[ResultRow]) -> Result<(), IoError> {
    let mut w = csv::Writer::from_writer(writer);
    for r in sorted(rows) {
        let m = &r.metrics;
        w.serialize(FlatRow {
            solver: &r.solver,
            estimator: &r.estimator,
            parameter: r.parameter,
            seed: r.seed,
            n_subjects: m.n_subjects,
            efficacy: m.efficacy,
            efficacy_se: m.efficacy_se,
            mean_search_time: m.mean_search_time,
            search_time_se: m.search_time_se,
            worst_search_time: m.worst_search_time,
        })?;
    }
    w.flush().map_err(|source| IoError::File { path: "<writer>".into(), source })?;
    Ok(())
}

pub fn write_curves_to<W: Write>(writer: W, rows: &[ResultRow]) -> Result<(), IoError> {
    let mut w = csv::Writer::from_writer(writer);
    for r in sorted(rows) {
        for (t, &v) in r.metrics.best_so_far_curve.iter().enumerate() {
            w.serialize(CurveRow {
                solver: &r.solver,
                estimator: &r.estimator,
                parameter: r.parameter,
                seed: r.seed,
                trial: t + 1,
                best_so_far: v,
            })?;
        }
    }
    w.flush().map_err(|source| IoError::File { path: "<writer>".into(), source })?;
    Ok(())
}

fn sorted(rows: &[ResultRow]) -> Vec<&ResultRow> {
    let mut out: Vec<&ResultRow> = rows.iter().collect();
    out.sort_by(|a, b| {
        (&a.solver, &a.estimator)
            .cmp(&(&b.solver, &b.estimator))
            .then(a.parameter.total_cmp(&b.parameter))
            .then(a.seed.cmp(&b.seed))
    });
    out
}

fn create(path: &Path) -> Result<std::fs::File, IoError> {
    std::fs::File::create(path).map_err(|source| IoError::File { path: path.display().to_string(), source })
}

pub fn write_results(path: impl AsRef<Path>, rows: &[ResultRow]) -> Result<(), IoError> {
    write_results_to(create(path.as_ref())?, rows)
}

pub fn write_curves(path: impl AsRef<Path>, rows: &[ResultRow]) -> Result<(), IoError> {
    write_curves_to(create(path.as_ref())?, rows)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn row(solver: &str, seed: u64) -> ResultRow {
        ResultRow {
            solver: solver.into(),
            estimator: "true".into(),
            parameter: 0.4,
            seed,
            metrics: Metrics {
                n_subjects: 2,
                efficacy: 0.5,
                efficacy_se: 0.5,
                mean_search_time: 1.5,
                search_time_se: 0.5,
                worst_search_time: 2,
                best_so_far_curve: vec![1.0, 2.0],
            },
        }
    }

    #[test]
    fn sorted_wide_and_long_output() {
        let rows = vec![row("greedy", 1), row("cdp", 2), row("cdp", 1)];
        let mut buf = Vec::new();
        write_results_to(&mut buf, &rows).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(
            lines[0],
            "solver,estimator,parameter,seed,n_subjects,efficacy,efficacy_se,mean_search_time,search_time_se,worst_search_time"
        );
        assert!(lines[1].starts_with("cdp,true,0.4,1,"));
        assert!(lines[3].starts_with("greedy,"));
        let mut buf = Vec::new();
        write_curves_to(&mut buf, &rows).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap().lines().count(), 1 + 6);
    }
}
