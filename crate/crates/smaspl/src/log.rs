//! Line-delimited JSON episode log, one record per episode.
//!
//! Records hold only quantities that are a pure function of the scenario
//! and seed, so two runs with the same inputs produce byte-identical logs.
//! Wall-clock timings go to a separate file with the same line structure.

use std::io::{BufRead, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use smaspl_core::trainer::EpisodeRecord;
use thiserror::Error;

pub const LOG_FILE: &str = "episodes.jsonl";
pub const TIMINGS_FILE: &str = "timings.jsonl";

/// Field order here is the on-disk order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeLog {
    pub episode: usize,
    /// First profile step of the episode window.
    pub start_step: usize,
    /// Window reward of the updated mean actions, per agent.
    pub rewards: Vec<f64>,
    /// Batch-average reward of the sampled actions, per agent.
    pub sample_rewards: Vec<f64>,
    /// Constraint return of every row, indexed by row id.
    pub returns: Vec<f64>,
    /// Bounds used in the final update round, indexed by row id.
    pub bounds: Vec<f64>,
    pub violated: Vec<usize>,
    /// Final multipliers `[agent][global row]`.
    pub lambda: Vec<Vec<f64>>,
    /// `[iteration][agent][global row]`; empty unless tracing is enabled.
    pub lambda_trace: Vec<Vec<Vec<f64>>>,
    pub theta_change: Vec<f64>,
    pub trust: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
    pub backtrack_rounds: usize,
    pub backtrack_failed: bool,
    pub discarded: usize,
    pub infeasible_projections: usize,
}

impl EpisodeLog {
    pub fn from_record(rec: &EpisodeRecord, start_step: usize) -> Self {
        Self {
            episode: rec.episode,
            start_step,
            rewards: rec.rewards.clone(),
            sample_rewards: rec.sample_rewards.clone(),
            returns: rec.returns.clone(),
            bounds: rec.bounds.clone(),
            violated: rec.violated.clone(),
            lambda: rec.lambda.clone(),
            lambda_trace: rec.lambda_trace.clone(),
            theta_change: rec.theta_change.clone(),
            trust: rec.trust.clone(),
            iterations: rec.iterations,
            converged: rec.converged,
            backtrack_rounds: rec.backtrack_rounds,
            backtrack_failed: rec.backtrack_failed,
            discarded: rec.discarded,
            infeasible_projections: rec.infeasible_projections,
        }
    }

    pub fn total_reward(&self) -> f64 {
        self.rewards.iter().sum()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeTiming {
    pub episode: usize,
    pub seconds: f64,
}

#[derive(Debug, Error)]
pub enum LogError {
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{path}, line {line}: {source}")]
    Json { path: PathBuf, line: usize, source: serde_json::Error },
}

/// Appends records, flushing after each so a crash loses at most one line.
pub struct LogWriter<W: Write> {
    inner: W,
}

impl<W: Write> LogWriter<W> {
    pub fn new(inner: W) -> Self {
        Self { inner }
    }

    pub fn append<T: Serialize>(&mut self, record: &T) -> std::io::Result<()> {
        serde_json::to_writer(&mut self.inner, record)?;
        self.inner.write_all(b"\n")?;
        self.inner.flush()
    }

    pub fn into_inner(self) -> W {
        self.inner
    }
}

pub fn read_log<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<Vec<T>, LogError> {
    let file = std::fs::File::open(path).map_err(|source| LogError::Io { path: path.into(), source })?;
    let mut out = Vec::new();
    for (i, line) in std::io::BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|source| LogError::Io { path: path.into(), source })?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line).map_err(|source| LogError::Json { path: path.into(), line: i + 1, source })?);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> EpisodeLog {
        EpisodeLog {
            episode: 3,
            start_step: 12,
            rewards: vec![-1.5, 0.1 + 0.2],
            sample_rewards: vec![-2.0, 0.25],
            returns: vec![1.0, -0.5, 1e-300],
            bounds: vec![1.05, -0.95, 2.0],
            violated: vec![],
            lambda: vec![vec![0.0, 0.125]; 2],
            lambda_trace: vec![],
            theta_change: vec![1e-3, 2e-3],
            trust: vec![1e-3, 9.99e-4],
            iterations: 17,
            converged: true,
            backtrack_rounds: 0,
            backtrack_failed: false,
            discarded: 0,
            infeasible_projections: 0,
        }
    }

    #[test]
    fn jsonl_round_trip_is_exact() {
        let mut w = LogWriter::new(Vec::new());
        w.append(&sample()).unwrap();
        w.append(&sample()).unwrap();
        let bytes = w.into_inner();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join(LOG_FILE);
        std::fs::write(&path, &bytes).unwrap();
        let back: Vec<EpisodeLog> = read_log(&path).unwrap();
        assert_eq!(back, vec![sample(), sample()]);
        let text = String::from_utf8(bytes).unwrap();
        assert!(text.starts_with("{\"episode\":3,\"start_step\":12,\"rewards\":"));
    }
}
