use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use smaspl::error::RunError;
use smaspl::executor::{Workers, THREADS_VAR};
use smaspl::log::{read_log, EpisodeLog, LOG_FILE};
use smaspl::report::{read_constraints, summary, write_report, CONSTRAINTS_FILE};
use smaspl::run;
use smaspl::scenario::{load_scenario_with, ModeEntry, Overrides};
use smaspl::verify::{run_audit, AuditOptions, Mutation};
use smaspl_core::mg::CONTROLS_PER_STEP;
use smaspl_core::trainer::PfeVerdict;

#[derive(Parser)]
#[command(name = "smaspl", version, about = "Safe multi-agent policy learning for networked microgrids")]
struct Cli {
    /// Worker threads; 0 runs sequentially. Defaults to the available cores.
    #[arg(long, global = true, env = THREADS_VAR)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train one policy per microgrid and write logs, checkpoints and a report.
    Train {
        #[command(flatten)]
        scenario: ScenarioArgs,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run the online stage for one window from saved checkpoints.
    Dispatch {
        #[command(flatten)]
        scenario: ScenarioArgs,
        /// Directory holding policy-<k>.txt files.
        #[arg(long)]
        checkpoints: PathBuf,
        /// First profile step of the window.
        #[arg(long, default_value_t = 0)]
        start: usize,
        /// DG output before the window, kW, one value per microgrid.
        #[arg(long, value_delimiter = ',')]
        prev_dg: Option<Vec<f64>>,
        /// Where to write the dispatched actions as CSV.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Compare every analytic derivative with finite differences.
    VerifyGradients {
        #[arg(long, default_value_t = 60)]
        trials: usize,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        /// TOML file naming an injection-Jacobian entry to corrupt.
        #[arg(long)]
        mutation: Option<PathBuf>,
        /// Write every compared entry to this CSV file.
        #[arg(long)]
        dump: Option<PathBuf>,
    },
    /// Rebuild the report files of a finished training run.
    Report {
        /// Output directory of `train`.
        #[arg(long)]
        run: PathBuf,
    },
    /// Exhaustive search over a one-step window.
    Oracle {
        #[command(flatten)]
        scenario: ScenarioArgs,
        #[arg(long, default_value_t = 0)]
        start: usize,
        /// Grid points per control: p_dg,p_ch,p_dis,q_dg,q_pv,q_ess.
        #[arg(long, value_delimiter = ',', num_args = CONTROLS_PER_STEP, default_values_t = [9, 3, 3, 3, 3, 3])]
        points: Vec<usize>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum ModeArg {
    SmasPl,
    UPl,
}

#[derive(Args)]
struct ScenarioArgs {
    #[arg(long)]
    scenario: PathBuf,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, value_enum)]
    mode: Option<ModeArg>,
    #[arg(long)]
    episodes: Option<usize>,
    /// Comma-separated rows to drop, e.g. `dg-p@1,branch-current`.
    #[arg(long, value_delimiter = ',')]
    remove_constraints: Option<Vec<String>>,
    #[arg(long)]
    no_backtracking: bool,
    /// Relative variance of the R/X noise applied to the training network.
    #[arg(long)]
    network_noise: Option<f64>,
}

impl ScenarioArgs {
    fn load(&self) -> Result<smaspl::scenario::Scenario, RunError> {
        let overrides = Overrides {
            seed: self.seed,
            mode: self.mode.map(|m| match m {
                ModeArg::SmasPl => ModeEntry::SmasPl,
                ModeArg::UPl => ModeEntry::UPl,
            }),
            episodes: self.episodes,
            remove_constraints: self.remove_constraints.clone(),
            no_backtracking: self.no_backtracking,
            network_noise: self.network_noise,
        };
        Ok(load_scenario_with(&self.scenario, &overrides)?)
    }
}

fn execute(cli: Cli) -> Result<(), RunError> {
    let workers = match cli.threads {
        Some(n) => Workers::with_threads(n),
        None => Workers::from_env().map_err(RunError::Usage)?,
    };
    match cli.command {
        Command::Train { scenario, out } => {
            let sc = scenario.load()?;
            let outcome = run::train(&sc, Some(&out), &workers)?;
            let last = outcome.logs.last();
            println!(
                "trained {} episode(s); final total reward {:.4}; output in {}",
                outcome.logs.len(),
                last.map_or(0.0, EpisodeLog::total_reward),
                out.display()
            );
        }
        Command::Dispatch { scenario, checkpoints, start, prev_dg, out } => {
            let sc = scenario.load()?;
            let policies = run::load_policies(&checkpoints, sc.specs.len())?;
            let d = run::dispatch(&sc, policies, start, prev_dg, &workers)?;
            if let Some(path) = &out {
                run::write_actions(&d.dispatch.actions, d.start, path)?;
            }
            println!("window at step {}: {}", d.start, run::verdict_label(&d.dispatch.verdict));
            if let PfeVerdict::Violated { .. } = d.dispatch.verdict {
                return Err(RunError::Unsafe(run::verdict_label(&d.dispatch.verdict)));
            }
        }
        Command::VerifyGradients { trials, seed, mutation, dump } => {
            let mutation = mutation.as_deref().map(Mutation::load).transpose()?;
            let report = run_audit(&AuditOptions { trials, seed, mutation, dump: dump.is_some() });
            print!("{}", report.table());
            if let Some(path) = &dump {
                report.write_dump(path)?;
            }
            let failed: Vec<&str> = report.failures().iter().map(|f| f.family).collect();
            if !failed.is_empty() {
                return Err(RunError::Audit(failed.join(", ")));
            }
        }
        Command::Report { run: dir } => {
            let logs: Vec<EpisodeLog> = read_log(&dir.join(LOG_FILE))?;
            let constraints = read_constraints(&dir.join(CONSTRAINTS_FILE))?;
            write_report(&logs, &constraints, &dir)?;
            print!("{}", summary(&logs, &constraints));
        }
        Command::Oracle { scenario, start, points, out } => {
            let sc = scenario.load()?;
            let points: [usize; CONTROLS_PER_STEP] = points.try_into().map_err(|_| RunError::Usage("six point counts expected".into()))?;
            let r = run::oracle(&sc, start, points, &workers)?;
            println!("best cost {:.6} over {} candidates ({} feasible)", r.cost, r.evaluated, r.feasible);
            if let Some(path) = &out {
                run::write_actions(&r.actions, start, path)?;
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match execute(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
