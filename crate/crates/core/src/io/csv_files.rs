//! Trajectory and panel CSV files. Outcomes are stored as indices into the
//! spec's outcome grid.

use std::collections::HashMap;
use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;

use crate::domain::{Context, Dataset, ProblemSpec, Subject, SubjectPanel, Trajectory, TrialRecord};
use crate::error::IoError;

const LATENT_COLUMN: &str = "latent";

fn open(path: &Path) -> Result<File, IoError> {
    File::open(path).map_err(|source| IoError::File { path: path.display().to_string(), source })
}

fn create(path: &Path) -> Result<File, IoError> {
    File::create(path).map_err(|source| IoError::File { path: path.display().to_string(), source })
}

fn context_columns(spec: &ProblemSpec) -> Vec<String> {
    (0..spec.context_dims().len()).map(|i| format!("x{i}")).collect()
}

pub fn trajectory_header(spec: &ProblemSpec) -> Vec<String> {
    let mut h = vec!["subject_id".to_string()];
    h.extend(context_columns(spec));
    h.extend(["step", "action", "outcome_index", "terminal"].map(String::from));
    h
}

pub fn panel_header(spec: &ProblemSpec) -> Vec<String> {
    let mut h = vec!["subject_id".to_string()];
    h.extend(context_columns(spec));
    h.extend((0..spec.num_actions()).map(|a| format!("y{a}")));
    h
}

fn check_header(found: &csv::StringRecord, expected: &[String]) -> Result<(), IoError> {
    let found: Vec<&str> = found.iter().collect();
    if found != expected {
        return Err(IoError::SpecMismatch(format!("header {found:?}, expected {expected:?}")));
    }
    Ok(())
}

fn line_of(record: &csv::StringRecord) -> u64 {
    record.position().map_or(0, |p| p.line())
}

fn field<T: std::str::FromStr>(record: &csv::StringRecord, idx: usize, name: &str) -> Result<T, IoError> {
    let raw = record.get(idx).unwrap_or("");
    raw.trim()
        .parse()
        .map_err(|_| IoError::Parse { line: line_of(record), message: format!("column {name}: cannot parse {raw:?}") })
}

fn context_of(record: &csv::StringRecord, spec: &ProblemSpec) -> Result<Context, IoError> {
    let coords = (0..spec.context_dims().len())
        .map(|i| field::<usize>(record, 1 + i, &format!("x{i}")))
        .collect::<Result<Vec<_>, _>>()?;
    let ctx = Context::new(coords);
    spec.check_context(&ctx).map_err(|e| IoError::Parse { line: line_of(record), message: e.to_string() })?;
    Ok(ctx)
}

pub fn write_trajectories_to<W: Write>(writer: W, dataset: &Dataset) -> Result<(), IoError> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(trajectory_header(&dataset.spec))?;
    for (i, traj) in dataset.trajectories.iter().enumerate() {
        let base: Vec<String> =
            std::iter::once(i.to_string()).chain(traj.context.coords().iter().map(usize::to_string)).collect();
        if traj.trials.is_empty() {
            // An empty search still gets one row so the subject is not lost.
            let mut row = base.clone();
            row.extend(["0".into(), String::new(), String::new(), u8::from(traj.terminal).to_string()]);
            w.write_record(&row)?;
        }
        for (s, t) in traj.trials.iter().enumerate() {
            let last = s + 1 == traj.trials.len();
            let mut row = base.clone();
            row.extend([
                (s + 1).to_string(),
                t.action.to_string(),
                t.outcome.to_string(),
                u8::from(last && traj.terminal).to_string(),
            ]);
            w.write_record(&row)?;
        }
    }
    w.flush().map_err(|source| IoError::File { path: "<writer>".into(), source })?;
    Ok(())
}

pub fn read_trajectories_from<R: Read>(reader: R, spec: &ProblemSpec) -> Result<Dataset, IoError> {
    let mut r = csv::ReaderBuilder::new().has_headers(true).from_reader(reader);
    let header = trajectory_header(spec);
    check_header(r.headers()?, &header)?;
    let v = spec.context_dims().len();
    let mut order: Vec<String> = Vec::new();
    let mut by_subject: HashMap<String, Trajectory> = HashMap::new();
    for record in r.records() {
        let record = record?;
        let line = line_of(&record);
        let parse_err = |message: String| IoError::Parse { line, message };
        let id = record.get(0).unwrap_or("").to_string();
        let ctx = context_of(&record, spec)?;
        let step: usize = field(&record, 1 + v, "step")?;
        let terminal = match record.get(4 + v).map(str::trim) {
            Some("1") | Some("true") => true,
            Some("0") | Some("false") => false,
            other => return Err(parse_err(format!("column terminal: cannot parse {other:?}"))),
        };
        let traj = by_subject.entry(id.clone()).or_insert_with(|| {
            order.push(id.clone());
            Trajectory::new(ctx.clone(), Vec::new(), false)
        });
        if traj.terminal {
            return Err(parse_err(format!("subject {id} has rows after its terminal row")));
        }
        if traj.context != ctx {
            return Err(parse_err(format!("subject {id} changes context")));
        }
        if step == 0 {
            if !traj.trials.is_empty() || !record.get(2 + v).unwrap_or("").trim().is_empty() {
                return Err(parse_err(format!("subject {id}: step 0 marks an empty search and must stand alone")));
            }
            traj.terminal = terminal;
            continue;
        }
        if step != traj.trials.len() + 1 {
            return Err(parse_err(format!("subject {id}: expected step {}, found {step}", traj.trials.len() + 1)));
        }
        let action: usize = field(&record, 2 + v, "action")?;
        let outcome: usize = field(&record, 3 + v, "outcome_index")?;
        let trial = TrialRecord::new(action, outcome);
        spec.check_trial(trial).map_err(|e| parse_err(e.to_string()))?;
        if traj.trials.iter().any(|t| t.action == action) {
            return Err(IoError::RepeatedAction { subject: id, action });
        }
        traj.trials.push(trial);
        traj.terminal = terminal;
    }
    let trajectories = order.into_iter().map(|id| by_subject.remove(&id).expect("recorded")).collect();
    Ok(Dataset::new(spec.clone(), trajectories)?)
}

pub fn write_panel_to<W: Write>(writer: W, panel: &SubjectPanel) -> Result<(), IoError> {
    let mut w = csv::Writer::from_writer(writer);
    // Simulated panels also carry the latent state; it is optional on read.
    let with_latent = panel.subjects.iter().any(|s| s.latent.is_some());
    let mut header = panel_header(&panel.spec);
    if with_latent {
        header.push(LATENT_COLUMN.into());
    }
    w.write_record(&header)?;
    for (i, s) in panel.subjects.iter().enumerate() {
        let mut row: Vec<String> = std::iter::once(i.to_string())
            .chain(s.context.coords().iter().map(usize::to_string))
            .chain(s.potential_outcomes.iter().map(usize::to_string))
            .collect();
        if with_latent {
            row.push(s.latent.map_or(String::new(), |z| z.to_string()));
        }
        w.write_record(&row)?;
    }
    w.flush().map_err(|source| IoError::File { path: "<writer>".into(), source })?;
    Ok(())
}

pub fn read_panel_from<R: Read>(reader: R, spec: &ProblemSpec) -> Result<SubjectPanel, IoError> {
    let mut r = csv::ReaderBuilder::new().has_headers(true).from_reader(reader);
    let mut header = panel_header(spec);
    let with_latent = r.headers()?.len() == header.len() + 1;
    if with_latent {
        header.push(LATENT_COLUMN.into());
    }
    check_header(r.headers()?, &header)?;
    let v = spec.context_dims().len();
    let mut subjects = Vec::new();
    for record in r.records() {
        let record = record?;
        let context = context_of(&record, spec)?;
        let potential_outcomes = (0..spec.num_actions())
            .map(|a| {
                let y: usize = field(&record, 1 + v + a, &format!("y{a}"))?;
                if y >= spec.num_outcomes() {
                    return Err(IoError::Parse {
                        line: line_of(&record),
                        message: format!("outcome index {y} out of range"),
                    });
                }
                Ok(y)
            })
            .collect::<Result<Vec<_>, _>>()?;
        let latent = match record.get(1 + v + spec.num_actions()).map(str::trim) {
            Some(z) if with_latent && !z.is_empty() => Some(field(&record, 1 + v + spec.num_actions(), LATENT_COLUMN)?),
            _ => None,
        };
        subjects.push(Subject { context, latent, potential_outcomes });
    }
    Ok(SubjectPanel::new(spec.clone(), subjects)?)
}

pub fn write_trajectories(path: impl AsRef<Path>, dataset: &Dataset) -> Result<(), IoError> {
    write_trajectories_to(create(path.as_ref())?, dataset)
}

pub fn read_trajectories(path: impl AsRef<Path>, spec: &ProblemSpec) -> Result<Dataset, IoError> {
    read_trajectories_from(open(path.as_ref())?, spec)
}

pub fn write_panel(path: impl AsRef<Path>, panel: &SubjectPanel) -> Result<(), IoError> {
    write_panel_to(create(path.as_ref())?, panel)
}

pub fn read_panels(path: impl AsRef<Path>, spec: &ProblemSpec) -> Result<SubjectPanel, IoError> {
    read_panel_from(open(path.as_ref())?, spec)
}
