//! Episode-level training: sample, build gradient bundles, run the consensus
//! primal-dual inner loop, then check the result with a power flow and
//! tighten violated bounds if needed.

use alloc::vec;
use alloc::vec::Vec;

#[allow(unused_imports)]
use num_traits::Float;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::consensus::{consensus_average_all, dual_step, primal_step, AgentChannelGraph, DualRow, StepError};
use crate::constraints::{ConstraintKind, RowFilter};
use crate::env::{EnvError, Environment, Window};
use crate::exec::{stream_seed, Executor};
use crate::gradient::{BundleAccumulator, GradientBundle};
use crate::linalg::{norm2, Matrix};
use crate::mg::{ActionVector, Control, StateVector};
use crate::policy::{sample_diag, FisherFactor, GaussianPolicy, PolicyConfig, PolicyError, PolicyOutput};
use crate::projection::{project_local, LinearRow, ProjectionError, ProjectionOptions};

const TAG_INIT: u64 = 1;
const TAG_SAMPLE: u64 = 2;
const TAG_DISPATCH: u64 = 3;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    SmasPl,
    /// Every constraint row dropped; plain batched policy-gradient ascent
    /// inside the trust region.
    UPl,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainerConfig {
    pub gamma: f64,
    pub delta: f64,
    pub k_max: usize,
    pub rho1: f64,
    pub rho2: f64,
    pub delta_theta: f64,
    /// `τ ≥ 1` disables backtracking.
    pub tau: f64,
    pub max_backtrack_rounds: usize,
    pub batch: usize,
    pub ridge: f64,
    pub online_samples: usize,
    /// Slack allowed before a row counts as violated.
    pub violation_tolerance: f64,
    pub projection: ProjectionOptions,
    pub policy: PolicyConfig,
    pub trace_lambda: bool,
}

impl Default for TrainerConfig {
    fn default() -> Self {
        Self {
            gamma: 0.99,
            delta: 1e-3,
            k_max: 200,
            rho1: 0.01,
            rho2: 0.01,
            delta_theta: 1e-4,
            tau: 0.9,
            max_backtrack_rounds: 3,
            batch: 128,
            ridge: 1e-8,
            online_samples: 100,
            violation_tolerance: 1e-6,
            projection: ProjectionOptions::default(),
            policy: PolicyConfig::default(),
            trace_lambda: false,
        }
    }
}

impl TrainerConfig {
    pub fn backtracking(&self) -> bool {
        self.tau < 1.0 && self.max_backtrack_rounds > 0
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum TrainError {
    #[error("invalid trainer setup: {0}")]
    Config(&'static str),
    #[error(transparent)]
    Policy(#[from] PolicyError),
    #[error(transparent)]
    Step(#[from] StepError),
    #[error("episode {episode}: {discarded} of {batch} sampled actions failed the power flow")]
    TooManyDiscards { episode: usize, discarded: usize, batch: usize },
    #[error("episode {episode}: mean actions: {source}")]
    Anchor { episode: usize, source: EnvError },
    #[error("dispatch refused: {0}")]
    DispatchRefused(EnvError),
}

/// Inputs for one window: realised data for the power flow, forecast states
/// for the policies, and each DG's output just before the window.
#[derive(Debug, Clone, PartialEq)]
pub struct EpisodeInput {
    pub window: Window,
    pub states: Vec<StateVector>,
    pub prev_dg: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpisodeRecord {
    pub episode: usize,
    /// Window reward of the updated mean actions, per agent.
    pub rewards: Vec<f64>,
    /// Batch-average window reward of the samples drawn at the anchor.
    pub sample_rewards: Vec<f64>,
    /// Every row's return under the updated mean actions.
    pub returns: Vec<f64>,
    /// Bounds in force during the last update round.
    pub bounds: Vec<f64>,
    pub violated: Vec<usize>,
    /// Final multipliers per agent, indexed like `ConstraintTable::global`.
    pub lambda: Vec<Vec<f64>>,
    /// `[iteration][agent][global row]`, only when tracing is enabled.
    pub lambda_trace: Vec<Vec<Vec<f64>>>,
    pub iterations: usize,
    pub converged: bool,
    /// `‖θ - θ⁰‖` per agent.
    pub theta_change: Vec<f64>,
    /// `½ (θ - θ⁰)ᵀ H (θ - θ⁰)` per agent.
    pub trust: Vec<f64>,
    pub backtrack_rounds: usize,
    pub backtrack_failed: bool,
    pub discarded: usize,
    pub infeasible_projections: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub enum PfeVerdict {
    Clean,
    Repaired { rounds: usize },
    Violated { rows: Vec<usize>, rounds: usize },
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dispatch {
    pub actions: Vec<ActionVector>,
    pub returns: Vec<f64>,
    pub verdict: PfeVerdict,
}

/// Per-agent data fixed for the whole inner loop.
struct AgentProblem {
    theta0: Vec<f64>,
    bundle: GradientBundle,
    /// The global rows of `bundle.b`.
    b_global: Matrix,
    fisher: FisherFactor,
}

struct InnerOutcome {
    thetas: Vec<Vec<f64>>,
    lambdas: Vec<Vec<f64>>,
    trace: Vec<Vec<Vec<f64>>>,
    iterations: usize,
    converged: bool,
    infeasible: usize,
}

pub struct Trainer {
    env: Environment,
    config: TrainerConfig,
    graph: AgentChannelGraph,
    policies: Vec<GaussianPolicy>,
    seed: u64,
    episode: usize,
}

impl Trainer {
    pub fn new(
        mut env: Environment,
        policies: Vec<GaussianPolicy>,
        graph: AgentChannelGraph,
        config: TrainerConfig,
        mode: Mode,
        seed: u64,
    ) -> Result<Self, TrainError> {
        let n = env.n_agents();
        if policies.len() != n || graph.n_agents() != n {
            return Err(TrainError::Config("one policy and one graph node per microgrid"));
        }
        if policies.iter().any(|p| p.steps() != env.steps) {
            return Err(TrainError::Config("policy window length differs from the environment"));
        }
        if !(config.delta > 0.0) || config.rho1 < 0.0 || config.rho2 < 0.0 || config.batch == 0 || config.k_max == 0 {
            return Err(TrainError::Config("need δ > 0, ρ1, ρ2 ≥ 0, batch ≥ 1, k_max ≥ 1"));
        }
        if mode == Mode::UPl {
            for kind in ConstraintKind::ALL {
                env.table.deactivate(RowFilter { kind, mg: None });
            }
        }
        Ok(Self { env, config, graph, policies, seed, episode: 0 })
    }

    /// Builds and randomly initialises one policy per microgrid.
    pub fn policies_for(env: &Environment, load_scale_kw: &[f64], config: &PolicyConfig, seed: u64) -> Vec<GaussianPolicy> {
        env.specs
            .iter()
            .zip(load_scale_kw)
            .map(|(spec, &scale)| {
                let mut p = GaussianPolicy::for_microgrid(spec, env.steps, scale, config);
                let mut rng = ChaCha8Rng::seed_from_u64(stream_seed(seed, &[TAG_INIT, spec.id as u64]));
                p.initialize(config, &mut rng);
                p
            })
            .collect()
    }

    pub fn env(&self) -> &Environment {
        &self.env
    }

    pub fn config(&self) -> &TrainerConfig {
        &self.config
    }

    pub fn config_mut(&mut self) -> &mut TrainerConfig {
        &mut self.config
    }

    pub fn policies(&self) -> &[GaussianPolicy] {
        &self.policies
    }

    pub fn episode(&self) -> usize {
        self.episode
    }

    /// Replaces the network (e.g. with perturbed impedances) keeping rows
    /// and their active flags.
    pub fn set_grid(&mut self, grid: crate::grid::GridModel) {
        self.env.grid = grid;
    }

    pub fn mean_actions(&self, states: &[StateVector]) -> Result<Vec<ActionVector>, TrainError> {
        self.policies
            .iter()
            .zip(states)
            .map(|(p, s)| Ok(ActionVector::new(p.forward_mean(s)?).expect("policy output is a whole number of steps")))
            .collect()
    }

    fn active_violations(&self, returns: &[f64]) -> Vec<usize> {
        let table = &self.env.table;
        table
            .rows()
            .iter()
            .filter(|r| table.is_active(r.id) && returns[r.id] > r.bound + self.config.violation_tolerance)
            .map(|r| r.id)
            .collect()
    }

    fn table_bounds(&self) -> Vec<f64> {
        self.env.table.rows().iter().map(|r| r.bound).collect()
    }

    /// One training episode. Updates the policies in place.
    pub fn train_episode<E: Executor>(&mut self, input: &EpisodeInput, exec: &E) -> Result<EpisodeRecord, TrainError> {
        let bounds = self.table_bounds();
        let rec = self.update(input, exec, bounds, TAG_SAMPLE)?;
        self.episode += 1;
        Ok(rec)
    }

    fn update<E: Executor>(
        &mut self,
        input: &EpisodeInput,
        exec: &E,
        mut bounds: Vec<f64>,
        tag: u64,
    ) -> Result<EpisodeRecord, TrainError> {
        let episode = self.episode;
        let outs: Vec<PolicyOutput> =
            self.policies.iter().zip(&input.states).map(|(p, s)| p.evaluate(s)).collect::<Result<_, _>>()?;
        let (bundles, sample_rewards, discarded) = self.collect_bundles(&outs, input, exec, tag)?;
        let means: Vec<ActionVector> =
            outs.iter().map(|o| ActionVector::new(o.mean.clone()).expect("whole steps")).collect();
        let anchor = self
            .env
            .evaluate(&means, &input.window, &input.prev_dg, false)
            .map_err(|source| TrainError::Anchor { episode, source })?;
        let problems: Vec<AgentProblem> = bundles
            .into_iter()
            .zip(&outs)
            .zip(&self.policies)
            .map(|((bundle, out), p)| {
                let g = self.env.table.global().len();
                let b_global = Matrix::from_fn(g, bundle.b.cols(), |r, c| bundle.b[(r, c)]);
                AgentProblem { theta0: p.params(), bundle, b_global, fisher: FisherFactor::new(out, self.config.ridge) }
            })
            .collect();

        let mut rounds = 0;
        let (inner, post, violated) = loop {
            let inner = self.inner_loop(&problems, &anchor.returns, &bounds, exec)?;
            for (p, t) in self.policies.iter_mut().zip(&inner.thetas) {
                p.set_params(t)?;
            }
            let post = self
                .env
                .evaluate(&self.mean_actions(&input.states)?, &input.window, &input.prev_dg, false)
                .map_err(|source| TrainError::Anchor { episode, source })?;
            let violated = self.active_violations(&post.returns);
            if violated.is_empty() || !self.config.backtracking() || rounds == self.config.max_backtrack_rounds {
                break (inner, post, violated);
            }
            for &id in &violated {
                bounds[id] = tighten(bounds[id], self.config.tau);
            }
            rounds += 1;
        };

        let theta_change = problems.iter().zip(&inner.thetas).map(|(pr, t)| distance(t, &pr.theta0)).collect();
        let trust = problems
            .iter()
            .zip(&inner.thetas)
            .map(|(pr, t)| {
                let d: Vec<f64> = t.iter().zip(&pr.theta0).map(|(a, b)| a - b).collect();
                0.5 * pr.fisher.quad(&d)
            })
            .collect();
        Ok(EpisodeRecord {
            episode,
            rewards: post.rewards,
            sample_rewards,
            returns: post.returns,
            bounds,
            backtrack_failed: !violated.is_empty() && self.config.backtracking(),
            violated,
            lambda: inner.lambdas,
            lambda_trace: inner.trace,
            iterations: inner.iterations,
            converged: inner.converged,
            theta_change,
            trust,
            backtrack_rounds: rounds,
            discarded,
            infeasible_projections: inner.infeasible,
        })
    }

    /// Draws joint actions from per-agent streams, evaluates them in
    /// parallel and folds the accepted ones into each agent's bundle in
    /// draw order. Failed power flows are replaced by fresh draws.
    fn collect_bundles<E: Executor>(
        &self,
        outs: &[PolicyOutput],
        input: &EpisodeInput,
        exec: &E,
        tag: u64,
    ) -> Result<(Vec<GradientBundle>, Vec<f64>, usize), TrainError> {
        let n = self.env.n_agents();
        let batch = self.config.batch;
        let mut rngs: Vec<ChaCha8Rng> = (0..n)
            .map(|a| ChaCha8Rng::seed_from_u64(stream_seed(self.seed, &[tag, self.episode as u64, a as u64])))
            .collect();
        let mut accs: Vec<BundleAccumulator> =
            (0..n).map(|a| BundleAccumulator::new(self.env.agent_rows(a), outs[a].mean.len())).collect();
        let mut reward_sum = vec![0.0; n];
        let (mut accepted, mut discarded) = (0, 0);
        while accepted < batch {
            let need = batch - accepted;
            let draws: Vec<Vec<ActionVector>> = (0..need)
                .map(|_| outs.iter().zip(rngs.iter_mut()).map(|(o, r)| sample_diag(&o.mean, &o.var, r)).collect())
                .collect();
            let results = exec.map(need, |i| self.env.evaluate(&draws[i], &input.window, &input.prev_dg, true));
            for (draw, res) in draws.iter().zip(results) {
                match res {
                    Ok(ev) => {
                        let grads = ev.gradients.expect("requested");
                        for a in 0..n {
                            accs[a].add(&outs[a], &draw[a], &grads[a]);
                            reward_sum[a] += ev.rewards[a];
                        }
                        accepted += 1;
                    }
                    Err(_) => discarded += 1,
                }
            }
            if 2 * discarded > batch {
                return Err(TrainError::TooManyDiscards { episode: self.episode, discarded, batch });
            }
        }
        let bundles = accs.into_iter().zip(outs).map(|(acc, o)| acc.finish(o)).collect();
        let rewards = reward_sum.iter().map(|r| r / batch as f64).collect();
        Ok((bundles, rewards, discarded))
    }

    /// Consensus, primal step, projection and dual step, repeated until no
    /// agent's parameters or multipliers move by more than `delta_theta` in one round.
    fn inner_loop<E: Executor>(
        &self,
        problems: &[AgentProblem],
        anchor: &[f64],
        bounds: &[f64],
        exec: &E,
    ) -> Result<InnerOutcome, TrainError> {
        let n = problems.len();
        let table = &self.env.table;
        let global = table.global();
        let active_global: Vec<bool> = global.iter().map(|&id| table.is_active(id)).collect();
        let share = 1.0 / n as f64;
        let cfg = &self.config;

        let mut thetas: Vec<Vec<f64>> = problems.iter().map(|p| p.theta0.clone()).collect();
        let mut lambdas = vec![vec![0.0; global.len()]; n];
        let mut warm: Vec<Option<Vec<f64>>> = vec![None; n];
        let mut trace = Vec::new();
        let mut infeasible = 0;
        let mut converged = false;
        let mut iterations = 0;
        while iterations < cfg.k_max {
            iterations += 1;
            let averaged = consensus_average_all(&self.graph, &lambdas);
            let results = exec.map(n, |a| {
                let pr = &problems[a];
                let lambda_bar = &averaged[a];
                let theta_bar = primal_step(&thetas[a], &pr.bundle.g, &pr.b_global, lambda_bar, cfg.rho1)?;
                let local: Vec<LinearRow<'_>> = pr
                    .bundle
                    .rows
                    .iter()
                    .enumerate()
                    .skip(global.len())
                    .filter(|(_, &id)| table.is_active(id))
                    .map(|(r, &id)| LinearRow { value: anchor[id], gradient: pr.bundle.b.row(r), bound: bounds[id] })
                    .collect();
                let (theta, duals, failed) = match project_local(
                    &theta_bar,
                    &pr.theta0,
                    &local,
                    &pr.fisher,
                    cfg.delta,
                    warm[a].as_deref(),
                    &cfg.projection,
                ) {
                    Ok(p) => (p.theta, Some(p.duals), false),
                    Err(ProjectionError::Infeasible { recovery, .. }) => (recovery, None, true),
                    Err(ProjectionError::Dimension) => return Err(TrainError::Config("projection dimensions")),
                };
                let rows: Vec<DualRow<'_>> = global
                    .iter()
                    .enumerate()
                    .map(|(g, &id)| DualRow { value: anchor[id], gradient: pr.bundle.b.row(g), bound: bounds[id] })
                    .collect();
                let mut lambda = dual_step(lambda_bar, &rows, &theta, &pr.theta0, cfg.rho2, share);
                lambda.iter_mut().zip(&active_global).filter(|(_, a)| !**a).for_each(|(l, _)| *l = 0.0);
                let change = distance(&theta, &thetas[a]);
                let dual_change = lambda.iter().zip(&lambdas[a]).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);
                Ok((theta, lambda, duals, failed, change.max(dual_change)))
            });
            let mut worst: f64 = 0.0;
            for (a, r) in results.into_iter().enumerate() {
                let (theta, lambda, duals, failed, change) = r?;
                thetas[a] = theta;
                lambdas[a] = lambda;
                warm[a] = duals;
                infeasible += usize::from(failed);
                worst = worst.max(change);
            }
            if cfg.trace_lambda {
                trace.push(lambdas.clone());
            }
            if worst <= cfg.delta_theta {
                converged = true;
                break;
            }
        }
        Ok(InnerOutcome { thetas, lambdas, trace, iterations, converged, infeasible })
    }

    /// Online action selection with the power-flow gate. Violations trigger
    /// bound tightening and a fresh update on this window, at most
    /// `max_backtrack_rounds` times.
    pub fn dispatch<E: Executor>(&mut self, input: &EpisodeInput, exec: &E) -> Result<Dispatch, TrainError> {
        let mut bounds = self.table_bounds();
        let mut rounds = 0;
        loop {
            let seed = stream_seed(self.seed, &[TAG_DISPATCH, self.episode as u64, rounds as u64]);
            let actions = select_actions_online(&self.policies, &input.states, self.config.online_samples, seed)?;
            let ev = self
                .env
                .evaluate(&actions, &input.window, &input.prev_dg, false)
                .map_err(TrainError::DispatchRefused)?;
            let violated = self.active_violations(&ev.returns);
            let verdict = if violated.is_empty() {
                if rounds == 0 {
                    PfeVerdict::Clean
                } else {
                    PfeVerdict::Repaired { rounds }
                }
            } else if !self.config.backtracking() || rounds == self.config.max_backtrack_rounds {
                PfeVerdict::Violated { rows: violated, rounds }
            } else {
                for &id in &violated {
                    bounds[id] = tighten(bounds[id], self.config.tau);
                }
                rounds += 1;
                self.update(input, exec, bounds.clone(), TAG_DISPATCH)?;
                continue;
            };
            return Ok(Dispatch { actions, returns: ev.returns, verdict });
        }
    }
}

/// `d* = d - (1 - τ)|d|`: the bound moves `(1 - τ)` of its magnitude
/// towards the feasible side, which is `τ d` for positive bounds.
pub fn tighten(bound: f64, tau: f64) -> f64 {
    bound - (1.0 - tau) * bound.abs()
}

/// Tightens only the listed rows.
pub fn backtrack(bounds: &[f64], violated: &[usize], tau: f64) -> Vec<f64> {
    let mut out = bounds.to_vec();
    for &id in violated {
        out[id] = tighten(out[id], tau);
    }
    out
}

/// Mean of `samples` draws per agent, with the smaller of charge and
/// discharge zeroed in every step.
pub fn select_actions_online(
    policies: &[GaussianPolicy],
    states: &[StateVector],
    samples: usize,
    seed: u64,
) -> Result<Vec<ActionVector>, PolicyError> {
    policies
        .iter()
        .zip(states)
        .enumerate()
        .map(|(a, (p, s))| {
            let mut rng = ChaCha8Rng::seed_from_u64(stream_seed(seed, &[a as u64]));
            let draws = p.sample_actions(s, samples.max(1), &mut rng)?;
            let mut mean = vec![0.0; p.action_dim()];
            for d in &draws {
                mean.iter_mut().zip(d.as_slice()).for_each(|(m, x)| *m += x);
            }
            mean.iter_mut().for_each(|m| *m /= draws.len() as f64);
            let mut action = ActionVector::new(mean).expect("whole steps");
            for k in 0..action.steps() {
                let (ch, dis) = (action.get(k, Control::PCh), action.get(k, Control::PDis));
                if ch < dis {
                    action.set(k, Control::PCh, 0.0);
                } else {
                    action.set(k, Control::PDis, 0.0);
                }
            }
            Ok(action)
        })
        .collect()
}

fn distance(a: &[f64], b: &[f64]) -> f64 {
    let d: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
    norm2(&d)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tightening() {
        assert!((tighten(1.0, 0.9) - 0.9).abs() < 1e-15);
        assert!((tighten(-1.0, 0.9) + 1.1).abs() < 1e-15);
        assert_eq!(tighten(2.0, 1.0), 2.0);
        let b = backtrack(&[1.0, 1.0, 1.0], &[1], 0.9);
        assert_eq!(b[0], 1.0);
        assert!((b[1] - 0.9).abs() < 1e-15);
        assert_eq!(backtrack(&[1.0], &[], 0.9), vec![1.0]);
    }
}
