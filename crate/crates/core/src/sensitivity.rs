//! Sensitivities of bus voltages, branch currents and PCC power flows to the
//! dispatch decisions, at a converged power-flow point.
//!
//! Action columns are ordered microgrid-major: column `6 m + c` is control
//! `c` of microgrid `m`, in kW or kvar.

use alloc::vec::Vec;

#[allow(unused_imports)]
use num_traits::Float;
use thiserror::Error;

use crate::grid::GridModel;
use crate::linalg::{Lu, Matrix};
use crate::mg::{Control, MicrogridSpec, CONTROLS_PER_STEP};
use crate::powerflow::{modified_admittance, PowerFlowSolution};

/// Branch currents below this magnitude get a zero magnitude derivative.
pub const ZERO_CURRENT: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SensitivityError {
    #[error("modified admittance matrix is singular (condition estimate {condition:.3e})")]
    Singular { condition: f64 },
}

/// `∂I/∂a` of the load current at each bus, per unit current per unit power.
#[derive(Debug, Clone, PartialEq)]
pub struct InjectionJacobian {
    pub re: Vec<[f64; CONTROLS_PER_STEP]>,
    pub im: Vec<[f64; CONTROLS_PER_STEP]>,
}

/// Load current `(p V_re + q V_im + j(p V_im - q V_re)) / |V|²` differentiated
/// with respect to each device, where devices enter the net load as
/// `p = ... - P_dg + P_ch - P_dis` and `q = ... - Q_dg - Q_pv + Q_ess`.
pub fn injection_jacobian(sol: &PowerFlowSolution) -> InjectionJacobian {
    let (re, im) = sol
        .v_re
        .iter()
        .zip(&sol.v_im)
        .map(|(&vr, &vi)| {
            let m2 = vr * vr + vi * vi;
            let (a, b) = (vr / m2, vi / m2);
            ([-a, a, -a, -b, -b, b], [-b, b, -b, a, a, -a])
        })
        .unzip();
    InjectionJacobian { re, im }
}

/// Voltage sensitivities `[∂V_re; ∂V_im]`, `2n x 6M`, per kW.
pub fn voltage_sensitivities(
    grid: &GridModel,
    sol: &PowerFlowSolution,
    specs: &[MicrogridSpec],
) -> Result<(Matrix, Matrix), SensitivityError> {
    voltage_sensitivities_with(grid, sol, specs, &injection_jacobian(sol))
}

/// As [`voltage_sensitivities`], with the injection Jacobian supplied by the
/// caller (the derivative audit uses this to plant faults).
pub fn voltage_sensitivities_with(
    grid: &GridModel,
    sol: &PowerFlowSolution,
    specs: &[MicrogridSpec],
    jac: &InjectionJacobian,
) -> Result<(Matrix, Matrix), SensitivityError> {
    let n = grid.n_bus();
    let m = modified_admittance(grid, &sol.v_re, &sol.v_im, &sol.p_pu, &sol.q_pu);
    let lu = Lu::factor(&m).map_err(|e| SensitivityError::Singular { condition: e.condition })?;
    let cols = CONTROLS_PER_STEP * specs.len();
    let mut rhs = Matrix::zeros(2 * n, cols);
    let per_kw = 1.0 / grid.base_power_kva();
    for (k, spec) in specs.iter().enumerate() {
        for c in Control::ALL {
            let bus = spec.bus_of(c);
            if bus == grid.slack() {
                continue;
            }
            let col = CONTROLS_PER_STEP * k + c.index();
            rhs[(bus, col)] = -jac.re[bus][c.index()] * per_kw;
            rhs[(n + bus, col)] = -jac.im[bus][c.index()] * per_kw;
        }
    }
    let x = lu.solve_matrix(&rhs);
    let dvr = Matrix::from_fn(n, cols, |i, j| x[(i, j)]);
    let dvi = Matrix::from_fn(n, cols, |i, j| x[(n + i, j)]);
    Ok((dvr, dvi))
}

/// Everything the gradient assembly needs from one power-flow step.
#[derive(Debug, Clone, PartialEq)]
pub struct StepSensitivities {
    pub dv_re: Matrix,
    pub dv_im: Matrix,
    /// `∂|V|/∂a`, `n x 6M`.
    pub dv_mag: Matrix,
    /// `∂|I|/∂a` per branch, per unit current per kW.
    pub di_mag: Matrix,
    /// `∂P_pcc/∂a` per microgrid, kW per kW.
    pub dpcc_p: Matrix,
    pub dpcc_q: Matrix,
}

pub fn step_sensitivities(
    grid: &GridModel,
    sol: &PowerFlowSolution,
    specs: &[MicrogridSpec],
) -> Result<StepSensitivities, SensitivityError> {
    step_sensitivities_with(grid, sol, specs, &injection_jacobian(sol))
}

pub fn step_sensitivities_with(
    grid: &GridModel,
    sol: &PowerFlowSolution,
    specs: &[MicrogridSpec],
    jac: &InjectionJacobian,
) -> Result<StepSensitivities, SensitivityError> {
    let (dv_re, dv_im) = voltage_sensitivities_with(grid, sol, specs, jac)?;
    let cols = dv_re.cols();
    let v_mag = sol.voltage_magnitudes();
    let dv_mag = Matrix::from_fn(grid.n_bus(), cols, |i, j| {
        (sol.v_re[i] * dv_re[(i, j)] + sol.v_im[i] * dv_im[(i, j)]) / v_mag[i]
    });
    let (ir, ii) = sol.branch_currents(grid);
    let branches = grid.branches();
    let mut dir = Matrix::zeros(branches.len(), cols);
    let mut dii = Matrix::zeros(branches.len(), cols);
    for (b, br) in branches.iter().enumerate() {
        for j in 0..cols {
            let dr = dv_re[(br.from, j)] - dv_re[(br.to, j)];
            let di = dv_im[(br.from, j)] - dv_im[(br.to, j)];
            dir[(b, j)] = br.y_re * dr - br.y_im * di;
            dii[(b, j)] = br.y_re * di + br.y_im * dr;
        }
    }
    let di_mag = Matrix::from_fn(branches.len(), cols, |b, j| {
        let mag = ir[b].hypot(ii[b]);
        if mag < ZERO_CURRENT {
            0.0
        } else {
            (ir[b] * dir[(b, j)] + ii[b] * dii[(b, j)]) / mag
        }
    });
    let s = grid.base_power_kva();
    let mut dpcc_p = Matrix::zeros(specs.len(), cols);
    let mut dpcc_q = Matrix::zeros(specs.len(), cols);
    for (k, spec) in specs.iter().enumerate() {
        for &b in &spec.buses.pcc_branches {
            let f = branches[b].from;
            let (vr, vi) = (sol.v_re[f], sol.v_im[f]);
            for j in 0..cols {
                let (dvr, dvi) = (dv_re[(f, j)], dv_im[(f, j)]);
                dpcc_p[(k, j)] += s * (dvr * ir[b] + vr * dir[(b, j)] + dvi * ii[b] + vi * dii[(b, j)]);
                dpcc_q[(k, j)] += s * (dvi * ir[b] + vi * dir[(b, j)] - dvr * ii[b] - vr * dii[(b, j)]);
            }
        }
    }
    Ok(StepSensitivities { dv_re, dv_im, dv_mag, di_mag, dpcc_p, dpcc_q })
}

/// Power leaving each microgrid through its PCC branches, kW and kvar.
pub fn pcc_power(grid: &GridModel, sol: &PowerFlowSolution, specs: &[MicrogridSpec]) -> (Vec<f64>, Vec<f64>) {
    let (ir, ii) = sol.branch_currents(grid);
    let s = grid.base_power_kva();
    specs
        .iter()
        .map(|spec| {
            spec.buses.pcc_branches.iter().fold((0.0, 0.0), |(p, q), &b| {
                let f = grid.branches()[b].from;
                let (vr, vi) = (sol.v_re[f], sol.v_im[f]);
                (p + s * (vr * ir[b] + vi * ii[b]), q + s * (vi * ir[b] - vr * ii[b]))
            })
        })
        .unzip()
}
