//! Evaluation of joint dispatch decisions over a window: power flow per step,
//! rewards, constraint returns and their action gradients.

use alloc::vec;
use alloc::vec::Vec;

#[allow(unused_imports)]
use num_traits::Float;
use thiserror::Error;

use crate::constraints::{constraint_returns, ConstraintKind, ConstraintRow, ConstraintTable, Scope, StepObservation};
use crate::grid::GridModel;
use crate::linalg::Matrix;
use crate::mg::{
    actions_to_injections, discount_weights, index, stage_reward, ActionVector, Control, DomainError, MicrogridSpec,
    CONTROLS_PER_STEP, DT_HOURS,
};
use crate::powerflow::{branch_current_magnitudes, solve_power_flow, PowerFlowError, PowerFlowOptions, PowerFlowSolution};
use crate::sensitivity::{pcc_power, step_sensitivities, SensitivityError, StepSensitivities};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum EnvError {
    #[error("step {step}: {source}")]
    PowerFlow { step: usize, source: PowerFlowError },
    #[error("step {step}: {source}")]
    Sensitivity { step: usize, source: SensitivityError },
    #[error(transparent)]
    Domain(#[from] DomainError),
    #[error("microgrids must be listed with ids 0..n in order")]
    MicrogridOrder,
    #[error("window covers {got} steps, expected {expected}")]
    WindowLength { expected: usize, got: usize },
}

/// Realised demand and irradiance, `[mg][step]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Window {
    pub load_kw: Vec<Vec<f64>>,
    pub irradiance: Vec<Vec<f64>>,
}

impl Window {
    pub fn steps(&self) -> usize {
        self.load_kw.first().map_or(0, |l| l.len())
    }
}

#[derive(Debug, Clone)]
pub struct Environment {
    pub grid: GridModel,
    pub specs: Vec<MicrogridSpec>,
    pub table: ConstraintTable,
    pub steps: usize,
    pub gamma: f64,
    pub pf: PowerFlowOptions,
}

/// Action gradients seen by one agent: its reward and every row it must
/// account for (all global rows, then its own local rows).
#[derive(Debug, Clone, PartialEq)]
pub struct AgentGradients {
    pub reward: Vec<f64>,
    pub rows: Vec<usize>,
    /// `R x 6T`, aligned with `rows`.
    pub row_grads: Matrix,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Evaluation {
    pub rewards: Vec<f64>,
    pub returns: Vec<f64>,
    pub observations: Vec<StepObservation>,
    pub gradients: Option<Vec<AgentGradients>>,
}

impl Environment {
    pub fn new(grid: GridModel, specs: Vec<MicrogridSpec>, steps: usize, gamma: f64) -> Result<Self, EnvError> {
        if specs.iter().enumerate().any(|(k, s)| s.id != k) {
            return Err(EnvError::MicrogridOrder);
        }
        for s in &specs {
            s.validate(&grid)?;
        }
        let table = ConstraintTable::build(&grid, &specs, steps, gamma);
        Ok(Self { grid, specs, table, steps, gamma, pf: PowerFlowOptions::default() })
    }

    /// Same environment on a different network (e.g. perturbed impedances).
    pub fn with_grid(&self, grid: GridModel) -> Self {
        Self { grid, ..self.clone() }
    }

    pub fn n_agents(&self) -> usize {
        self.specs.len()
    }

    pub fn agent_rows(&self, agent: usize) -> Vec<usize> {
        self.table.global().iter().chain(self.table.local(agent)).copied().collect()
    }

    pub fn solve_step(&self, actions: &[ActionVector], window: &Window, step: usize) -> Result<PowerFlowSolution, EnvError> {
        let load: Vec<f64> = window.load_kw.iter().map(|l| l[step]).collect();
        let irr: Vec<f64> = window.irradiance.iter().map(|l| l[step]).collect();
        let (p, q) = actions_to_injections(&self.grid, &self.specs, actions, &load, &irr, step);
        solve_power_flow(&self.grid, &p, &q, &self.pf).map_err(|source| EnvError::PowerFlow { step, source })
    }

    pub fn evaluate(
        &self,
        actions: &[ActionVector],
        window: &Window,
        prev_dg: &[f64],
        with_gradients: bool,
    ) -> Result<Evaluation, EnvError> {
        if window.steps() != self.steps {
            return Err(EnvError::WindowLength { expected: self.steps, got: window.steps() });
        }
        let mut observations = Vec::with_capacity(self.steps);
        let mut sens = Vec::new();
        for k in 0..self.steps {
            let sol = self.solve_step(actions, window, k)?;
            let (pcc_p_kw, pcc_q_kvar) = pcc_power(&self.grid, &sol, &self.specs);
            observations.push(StepObservation {
                v_mag: sol.voltage_magnitudes(),
                i_mag: branch_current_magnitudes(&self.grid, &sol),
                pcc_p_kw,
                pcc_q_kvar,
            });
            if with_gradients {
                sens.push(
                    step_sensitivities(&self.grid, &sol, &self.specs)
                        .map_err(|source| EnvError::Sensitivity { step: k, source })?,
                );
            }
        }
        let w = discount_weights(self.steps, self.gamma);
        let rewards = self
            .specs
            .iter()
            .map(|s| {
                (0..self.steps)
                    .map(|k| w[k] * stage_reward(s, actions[s.id].get(k, Control::PDg), observations[k].pcc_p_kw[s.id]))
                    .sum()
            })
            .collect();
        let returns = constraint_returns(&self.table, &observations, actions, &self.specs, prev_dg, self.gamma);
        let gradients = with_gradients.then(|| {
            (0..self.n_agents()).map(|n| self.agent_gradients(n, actions, &sens, &w, prev_dg[n])).collect()
        });
        Ok(Evaluation { rewards, returns, observations, gradients })
    }

    fn agent_gradients(
        &self,
        agent: usize,
        actions: &[ActionVector],
        sens: &[StepSensitivities],
        w: &[f64],
        prev_dg: f64,
    ) -> AgentGradients {
        let spec = &self.specs[agent];
        let dim = CONTROLS_PER_STEP * self.steps;
        let col = |c: Control| CONTROLS_PER_STEP * agent + c.index();
        let mut reward = vec![0.0; dim];
        for (k, s) in sens.iter().enumerate() {
            for c in Control::ALL {
                let mut g = spec.pcc.price * s.dpcc_p[(agent, col(c))];
                if c == Control::PDg {
                    g -= spec.dg.fuel_price * spec.dg.fuel_rate_slope(actions[agent].get(k, c));
                }
                reward[index(k, c)] = w[k] * DT_HOURS * g;
            }
        }
        let rows = self.agent_rows(agent);
        let mut row_grads = Matrix::zeros(rows.len(), dim);
        for (r, &id) in rows.iter().enumerate() {
            let row = &self.table.rows()[id];
            let out = row_grads.row_mut(r);
            let sign = row.sense.sign();
            let network: Option<(fn(&StepSensitivities) -> &Matrix, usize)> = match row.kind {
                ConstraintKind::Voltage => Some((|s| &s.dv_mag, row.target)),
                ConstraintKind::BranchCurrent => Some((|s| &s.di_mag, row.target)),
                ConstraintKind::PccP => Some((|s| &s.dpcc_p, agent)),
                ConstraintKind::PccQ => Some((|s| &s.dpcc_q, agent)),
                _ => None,
            };
            match network {
                Some((pick, target)) => {
                    for (k, s) in sens.iter().enumerate() {
                        let m = pick(s);
                        for c in Control::ALL {
                            out[index(k, c)] = sign * w[k] * m[(target, col(c))];
                        }
                    }
                }
                None => {
                    let g = local_action_gradient(row, spec, &actions[agent], w, prev_dg);
                    out.copy_from_slice(&g);
                }
            }
        }
        AgentGradients { reward, rows, row_grads }
    }
}

/// Gradient of a device-only local row with respect to the owner's actions.
/// Network rows (voltage, current, PCC) give zeros here.
pub fn local_action_gradient(
    row: &ConstraintRow,
    spec: &MicrogridSpec,
    actions: &ActionVector,
    w: &[f64],
    prev_dg: f64,
) -> Vec<f64> {
    let steps = actions.steps();
    let mut g = vec![0.0; CONTROLS_PER_STEP * steps];
    if row.scope != Scope::Local(spec.id) {
        return g;
    }
    let sign = row.sense.sign();
    let mut unit = |c: Control| (0..steps).for_each(|k| g[index(k, c)] = sign * w[k]);
    match row.kind {
        ConstraintKind::DgP => unit(Control::PDg),
        ConstraintKind::DgQ => unit(Control::QDg),
        ConstraintKind::PvQ => unit(Control::QPv),
        ConstraintKind::EssCh => unit(Control::PCh),
        ConstraintKind::EssDis => unit(Control::PDis),
        ConstraintKind::EssQ => unit(Control::QEss),
        ConstraintKind::DgRamp => {
            for k in 0..steps {
                let prev = if k == 0 { prev_dg } else { actions.get(k - 1, Control::PDg) };
                let s = sign * w[k] * signum(actions.get(k, Control::PDg) - prev);
                g[index(k, Control::PDg)] += s;
                if k > 0 {
                    g[index(k - 1, Control::PDg)] -= s;
                }
            }
        }
        ConstraintKind::Soc => {
            let (kc, kd) = spec.ess.soc_coefficients();
            let mut tail = 0.0;
            for j in (0..steps).rev() {
                tail += w[j];
                g[index(j, Control::PCh)] = sign * tail * kc;
                g[index(j, Control::PDis)] = sign * tail * kd;
            }
        }
        ConstraintKind::EssComplementarity => {
            for k in 0..steps {
                g[index(k, Control::PCh)] = sign * w[k] * actions.get(k, Control::PDis);
                g[index(k, Control::PDis)] = sign * w[k] * actions.get(k, Control::PCh);
            }
        }
        ConstraintKind::Voltage | ConstraintKind::BranchCurrent | ConstraintKind::PccP | ConstraintKind::PccQ => {}
    }
    g
}

fn signum(x: f64) -> f64 {
    if x > 0.0 {
        1.0
    } else if x < 0.0 {
        -1.0
    } else {
        0.0
    }
}
