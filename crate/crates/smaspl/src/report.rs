//! CSV series and a text summary derived from an episode log.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use smaspl_core::constraints::{ConstraintTable, Scope};
use thiserror::Error;

use crate::log::EpisodeLog;

pub const CONSTRAINTS_FILE: &str = "constraints.csv";
pub const MOVING_AVERAGE: usize = 10;

#[derive(Debug, Error)]
pub enum ReportError {
    #[error("{path}: {source}")]
    Csv { path: PathBuf, source: csv::Error },
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("log and constraint table disagree: {0}")]
    Mismatch(String),
}

/// One line of `constraints.csv`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConstraintEntry {
    pub id: usize,
    pub label: String,
    /// `global` or `mg<k>`.
    pub scope: String,
    pub kind: String,
    pub sense: String,
    pub target: usize,
    pub step_bound: f64,
    pub bound: f64,
    pub active: bool,
    /// Return under the final policies, when known.
    #[serde(rename = "return")]
    pub value: Option<f64>,
}

pub fn constraint_entries(table: &ConstraintTable, returns: Option<&[f64]>) -> Vec<ConstraintEntry> {
    table
        .rows()
        .iter()
        .map(|r| ConstraintEntry {
            id: r.id,
            label: r.label(),
            scope: match r.scope {
                Scope::Global => "global".into(),
                Scope::Local(m) => format!("mg{m}"),
            },
            kind: r.kind.name().into(),
            sense: r.sense.name().into(),
            target: r.target,
            step_bound: r.step_bound,
            bound: r.bound,
            active: table.is_active(r.id),
            value: returns.map(|v| v[r.id]),
        })
        .collect()
}

fn csv_err(path: &Path) -> impl Fn(csv::Error) -> ReportError + '_ {
    move |source| ReportError::Csv { path: path.into(), source }
}

pub fn write_constraints(entries: &[ConstraintEntry], path: &Path) -> Result<(), ReportError> {
    let mut w = csv::Writer::from_path(path).map_err(csv_err(path))?;
    for e in entries {
        w.serialize(e).map_err(csv_err(path))?;
    }
    w.flush().map_err(|source| ReportError::Io { path: path.into(), source })
}

pub fn read_constraints(path: &Path) -> Result<Vec<ConstraintEntry>, ReportError> {
    let mut r = csv::Reader::from_path(path).map_err(csv_err(path))?;
    r.deserialize().collect::<Result<_, _>>().map_err(csv_err(path))
}

fn write_rows(path: &Path, header: Vec<String>, rows: impl IntoIterator<Item = Vec<String>>) -> Result<(), ReportError> {
    let mut w = csv::Writer::from_path(path).map_err(csv_err(path))?;
    w.write_record(&header).map_err(csv_err(path))?;
    for row in rows {
        w.write_record(&row).map_err(csv_err(path))?;
    }
    w.flush().map_err(|source| ReportError::Io { path: path.into(), source })
}

fn nums(values: &[f64]) -> impl Iterator<Item = String> + '_ {
    values.iter().map(f64::to_string)
}

/// Trailing mean over the last `window` values at each position.
pub fn moving_average(values: &[f64], window: usize) -> Vec<f64> {
    let window = window.max(1);
    (0..values.len())
        .map(|i| {
            let s = &values[(i + 1).saturating_sub(window)..=i];
            s.iter().sum::<f64>() / s.len() as f64
        })
        .collect()
}

/// Files written by [`write_report`].
pub const REPORT_FILES: [&str; 5] = ["reward.csv", "returns.csv", "lambda.csv", "theta_change.csv", "summary.txt"];

pub fn write_report(logs: &[EpisodeLog], constraints: &[ConstraintEntry], dir: &Path) -> Result<(), ReportError> {
    let n_rows = constraints.len();
    let global: Vec<&ConstraintEntry> = constraints.iter().filter(|c| c.scope == "global").collect();
    if let Some(bad) = logs.iter().find(|l| l.returns.len() != n_rows || l.lambda.iter().any(|v| v.len() != global.len())) {
        return Err(ReportError::Mismatch(format!("episode {} has {} returns for {n_rows} rows", bad.episode, bad.returns.len())));
    }
    let agents = logs.first().map_or(0, |l| l.rewards.len());

    let totals: Vec<f64> = logs.iter().map(EpisodeLog::total_reward).collect();
    let avg = moving_average(&totals, MOVING_AVERAGE);
    let mut header = vec!["episode".to_owned()];
    header.extend((0..agents).map(|a| format!("mg{a}")));
    header.extend(["total".to_owned(), format!("moving_average_{MOVING_AVERAGE}")]);
    write_rows(
        &dir.join("reward.csv"),
        header,
        logs.iter().zip(&avg).map(|(l, a)| {
            let mut row = vec![l.episode.to_string()];
            row.extend(nums(&l.rewards));
            row.extend([l.total_reward().to_string(), a.to_string()]);
            row
        }),
    )?;

    let mut header = vec!["episode".to_owned()];
    header.extend(constraints.iter().map(|c| c.label.clone()));
    write_rows(
        &dir.join("returns.csv"),
        header,
        logs.iter().map(|l| core::iter::once(l.episode.to_string()).chain(nums(&l.returns)).collect()),
    )?;

    let mut header = vec!["episode".to_owned(), "iteration".to_owned(), "agent".to_owned()];
    header.extend(global.iter().map(|c| c.label.clone()));
    let lambda_rows = logs.iter().flat_map(|l| {
        let last = l.iterations.to_string();
        let finals = l.lambda.iter().enumerate().map(move |(a, v)| (last.clone(), a, v));
        let traced = l.lambda_trace.iter().enumerate().flat_map(|(k, step)| step.iter().enumerate().map(move |(a, v)| ((k + 1).to_string(), a, v)));
        let rows: Vec<_> = if l.lambda_trace.is_empty() { finals.collect() } else { traced.collect() };
        rows.into_iter().map(move |(k, a, v)| [l.episode.to_string(), k, a.to_string()].into_iter().chain(nums(v)).collect())
    });
    write_rows(&dir.join("lambda.csv"), header, lambda_rows)?;

    let mut header = vec!["episode".to_owned()];
    header.extend((0..agents).map(|a| format!("mg{a}")));
    header.extend((0..agents).map(|a| format!("trust_mg{a}")));
    write_rows(
        &dir.join("theta_change.csv"),
        header,
        logs.iter().map(|l| core::iter::once(l.episode.to_string()).chain(nums(&l.theta_change)).chain(nums(&l.trust)).collect()),
    )?;

    let path = dir.join("summary.txt");
    std::fs::write(&path, summary(logs, constraints)).map_err(|source| ReportError::Io { path, source })
}

pub fn summary(logs: &[EpisodeLog], constraints: &[ConstraintEntry]) -> String {
    let mut s = String::new();
    let w = &mut s;
    let Some(last) = logs.last() else {
        return "no episodes\n".into();
    };
    let totals: Vec<f64> = logs.iter().map(EpisodeLog::total_reward).collect();
    let tail = &totals[totals.len().saturating_sub(MOVING_AVERAGE)..];
    let _ = writeln!(w, "episodes                 {}", logs.len());
    let _ = writeln!(w, "final total reward       {:.4}", last.total_reward());
    let _ = writeln!(w, "mean of last {:<2} rewards  {:.4}", tail.len(), tail.iter().sum::<f64>() / tail.len() as f64);
    let _ = writeln!(w, "inner loops converged    {}/{}", logs.iter().filter(|l| l.converged).count(), logs.len());
    let _ = writeln!(w, "episodes with violations {}", logs.iter().filter(|l| !l.violated.is_empty()).count());
    let _ = writeln!(w, "backtracking rounds      {}", logs.iter().map(|l| l.backtrack_rounds).sum::<usize>());
    let _ = writeln!(w, "discarded samples        {}", logs.iter().map(|l| l.discarded).sum::<usize>());
    let _ = writeln!(w);
    let _ = writeln!(w, "{:<28} {:>14} {:>14} {:>8}", "row", "final return", "bound", "status");
    for c in constraints {
        let ret = last.returns[c.id];
        let status = if !c.active {
            "off"
        } else if ret > c.bound + 1e-6 {
            "VIOLATED"
        } else {
            "ok"
        };
        if c.scope != "global" || status == "VIOLATED" {
            let _ = writeln!(w, "{:<28} {:>14.6} {:>14.6} {:>8}", c.label, ret, c.bound, status);
        }
    }
    let _ = writeln!(w, "(network rows are listed only when violated)");
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn moving_average_warms_up() {
        assert_eq!(moving_average(&[1.0, 3.0, 5.0, 7.0], 2), vec![1.0, 2.0, 4.0, 6.0]);
        assert!(moving_average(&[], 3).is_empty());
    }
}
