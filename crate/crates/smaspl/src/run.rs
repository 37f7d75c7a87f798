//! Training, dispatch and oracle runs driven by a scenario.

use std::fs::File;
use std::io::BufWriter;
use std::path::Path;
use std::time::Instant;

use smaspl_core::env::Environment;
use smaspl_core::exec::{stream_seed, Executor};
use smaspl_core::mg::{ActionVector, Control, CONTROLS_PER_STEP};
use smaspl_core::oracle::{brute_force_opf, OracleResult};
use smaspl_core::policy::GaussianPolicy;
use smaspl_core::scenario::{forecast_with_error, perturb_network};
use smaspl_core::trainer::{Dispatch, EpisodeInput, PfeVerdict, Trainer};

use crate::checkpoint::{self, checkpoint_path};
use crate::error::RunError;
use crate::log::{EpisodeLog, EpisodeTiming, LogWriter, LOG_FILE, TIMINGS_FILE};
use crate::report::{constraint_entries, write_constraints, write_report, CONSTRAINTS_FILE};
use crate::scenario::Scenario;

const TAG_FORECAST: u64 = 0x10;
const TAG_NETWORK_NOISE: u64 = 0x11;
const TAG_DISPATCH_FORECAST: u64 = 0x12;

/// Network the trainer sees: exact, or with the configured R/X noise.
pub fn training_environment(sc: &Scenario) -> Result<Environment, RunError> {
    let mut env = sc.environment()?;
    let noise = sc.training().network_noise;
    if noise > 0.0 {
        env.grid = perturb_network(&sc.grid, noise, stream_seed(sc.seed(), &[TAG_NETWORK_NOISE]))?;
    }
    Ok(env)
}

pub fn build_trainer(sc: &Scenario, policies: Option<Vec<GaussianPolicy>>) -> Result<Trainer, RunError> {
    let env = training_environment(sc)?;
    let config = sc.trainer_config();
    let policies =
        policies.unwrap_or_else(|| Trainer::policies_for(&env, &sc.profiles.peak_load_kw(), &config.policy, sc.seed()));
    Ok(Trainer::new(env, policies, sc.graph()?, config, sc.mode(), sc.seed())?)
}

/// First profile step of episode `t`.
pub fn episode_start(sc: &Scenario, t: usize) -> usize {
    let tr = sc.training();
    let offset = if tr.fixed_window { 0 } else { t * tr.stride };
    (tr.start_step + offset) % sc.profiles.len()
}

/// Realised window plus forecast states, with forecast noise drawn from the
/// stream `tag`.
pub fn window_input(sc: &Scenario, start: usize, prev_dg: Vec<f64>, tag: &[u64]) -> EpisodeInput {
    let steps = sc.training().steps;
    EpisodeInput {
        window: sc.profiles.window(start, steps),
        states: forecast_with_error(&sc.profiles, start, steps, &sc.forecast, stream_seed(sc.seed(), tag)),
        prev_dg,
    }
}

pub struct TrainOutcome {
    pub trainer: Trainer,
    pub logs: Vec<EpisodeLog>,
}

/// Runs every episode. With `out`, writes the log, timings, checkpoints,
/// constraint table and report files there.
pub fn train<E: Executor>(sc: &Scenario, out: Option<&Path>, exec: &E) -> Result<TrainOutcome, RunError> {
    let mut trainer = build_trainer(sc, None)?;
    let tr = sc.training();
    let mut writers = match out {
        Some(dir) => {
            std::fs::create_dir_all(dir).map_err(RunError::io(dir))?;
            let open = |name: &str| {
                let path = dir.join(name);
                File::create(&path).map(|f| LogWriter::new(BufWriter::new(f))).map_err(RunError::io(path))
            };
            Some((open(LOG_FILE)?, open(TIMINGS_FILE)?))
        }
        None => None,
    };
    let mut prev_dg = vec![tr.initial_dg_kw; sc.specs.len()];
    let mut logs = Vec::with_capacity(tr.episodes);
    for t in 0..tr.episodes {
        let start = episode_start(sc, t);
        let input = window_input(sc, start, prev_dg.clone(), &[TAG_FORECAST, t as u64]);
        let clock = Instant::now();
        let rec = trainer.train_episode(&input, exec)?;
        let seconds = clock.elapsed().as_secs_f64();
        let log = EpisodeLog::from_record(&rec, start);
        if let (Some((log_w, time_w)), Some(dir)) = (writers.as_mut(), out) {
            log_w.append(&log).map_err(RunError::io(dir.join(LOG_FILE)))?;
            time_w.append(&EpisodeTiming { episode: t, seconds }).map_err(RunError::io(dir.join(TIMINGS_FILE)))?;
        }
        logs.push(log);
        if !tr.fixed_window {
            let means = trainer.mean_actions(&input.states)?;
            let k = tr.stride.clamp(1, tr.steps) - 1;
            prev_dg = means.iter().map(|a| a.get(k, Control::PDg)).collect();
        }
    }
    if let Some(dir) = out {
        for (a, p) in trainer.policies().iter().enumerate() {
            checkpoint::save(p, &checkpoint_path(dir, a))?;
        }
        let entries = constraint_entries(&trainer.env().table, logs.last().map(|l| l.returns.as_slice()));
        write_constraints(&entries, &dir.join(CONSTRAINTS_FILE))?;
        write_report(&logs, &entries, dir)?;
    }
    Ok(TrainOutcome { trainer, logs })
}

pub fn load_policies(dir: &Path, agents: usize) -> Result<Vec<GaussianPolicy>, RunError> {
    (0..agents).map(|a| Ok(checkpoint::load(&checkpoint_path(dir, a))?)).collect()
}

pub struct DispatchOutcome {
    pub start: usize,
    pub dispatch: Dispatch,
    pub trainer: Trainer,
}

/// Online dispatch for the window starting at profile step `start`.
pub fn dispatch<E: Executor>(
    sc: &Scenario,
    policies: Vec<GaussianPolicy>,
    start: usize,
    prev_dg: Option<Vec<f64>>,
    exec: &E,
) -> Result<DispatchOutcome, RunError> {
    if policies.len() != sc.specs.len() {
        return Err(RunError::Usage(format!("{} checkpoints for {} microgrids", policies.len(), sc.specs.len())));
    }
    let mut trainer = build_trainer(sc, Some(policies))?;
    let prev = prev_dg.unwrap_or_else(|| vec![sc.training().initial_dg_kw; sc.specs.len()]);
    let start = start % sc.profiles.len();
    let input = window_input(sc, start, prev, &[TAG_DISPATCH_FORECAST, start as u64]);
    let dispatch = trainer.dispatch(&input, exec)?;
    Ok(DispatchOutcome { start, dispatch, trainer })
}

pub fn verdict_label(v: &PfeVerdict) -> String {
    match v {
        PfeVerdict::Clean => "clean".into(),
        PfeVerdict::Repaired { rounds } => format!("repaired after {rounds} backtracking round(s)"),
        PfeVerdict::Violated { rows, rounds } => format!("violated rows {rows:?} after {rounds} round(s)"),
    }
}

pub fn write_actions(actions: &[ActionVector], start: usize, path: &Path) -> Result<(), RunError> {
    let csv_err = |e: csv::Error| RunError::Io { path: path.into(), source: e.into() };
    let mut w = csv::Writer::from_path(path).map_err(csv_err)?;
    let mut header = vec!["mg".to_owned(), "step".to_owned()];
    header.extend(Control::ALL.iter().map(|c| format!("{}{}", c.name(), if c.index() < 3 { "_kw" } else { "_kvar" })));
    w.write_record(&header).map_err(csv_err)?;
    for (m, a) in actions.iter().enumerate() {
        for k in 0..a.steps() {
            let mut row = vec![m.to_string(), (start + k).to_string()];
            row.extend(a.as_slice()[k * CONTROLS_PER_STEP..(k + 1) * CONTROLS_PER_STEP].iter().map(f64::to_string));
            w.write_record(&row).map_err(csv_err)?;
        }
    }
    w.flush().map_err(RunError::io(path))
}

/// Exhaustive search on the realised window at `start` (one step), using
/// the exact network and every active row.
pub fn oracle<E: Executor>(
    sc: &Scenario,
    start: usize,
    points: [usize; CONTROLS_PER_STEP],
    exec: &E,
) -> Result<OracleResult, RunError> {
    let env = sc.environment()?;
    let window = sc.profiles.window(start % sc.profiles.len(), env.steps);
    let prev = vec![sc.training().initial_dg_kw; sc.specs.len()];
    Ok(brute_force_opf(&env, &window, &prev, points, exec)?)
}
