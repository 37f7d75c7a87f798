//! Newton-Raphson power flow in rectangular coordinates.
//!
//! Unknowns are stacked as `[V_re(0..n), V_im(0..n)]`. Each non-slack bus
//! satisfies `(Y V)_i + I_i(V) = 0`, where `I_i` is the current drawn by the
//! constant-power net load at that bus. Slack rows pin `V = 1 + j0`.

use alloc::vec;
use alloc::vec::Vec;

#[allow(unused_imports)]
use num_traits::Float;
use thiserror::Error;

use crate::grid::GridModel;
use crate::linalg::{Lu, Matrix, SingularMatrix};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum PowerFlowError {
    #[error("power flow did not converge in {} iterations (last mismatch {:.3e})", .residuals.len().saturating_sub(1), .residuals.last().copied().unwrap_or(f64::NAN))]
    NonConvergence { residuals: Vec<f64> },
    #[error("power-flow Jacobian is singular at iteration {iteration}: {source}")]
    SingularJacobian { iteration: usize, source: SingularMatrix },
    #[error("injection vectors have length {got}, grid has {expected} buses")]
    Dimension { expected: usize, got: usize },
    #[error("non-finite injection at bus {0}")]
    NonFinite(usize),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PowerFlowOptions {
    /// Convergence threshold on the largest per-unit power mismatch.
    pub tolerance: f64,
    pub max_iterations: usize,
}

impl Default for PowerFlowOptions {
    fn default() -> Self {
        Self { tolerance: 1e-8, max_iterations: 50 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PowerFlowSolution {
    pub v_re: Vec<f64>,
    pub v_im: Vec<f64>,
    /// Net load used for the solve, per unit.
    pub p_pu: Vec<f64>,
    pub q_pu: Vec<f64>,
    pub iterations: usize,
    pub mismatch: f64,
}

impl PowerFlowSolution {
    pub fn n_bus(&self) -> usize {
        self.v_re.len()
    }

    pub fn voltage_magnitudes(&self) -> Vec<f64> {
        self.v_re.iter().zip(&self.v_im).map(|(r, i)| r.hypot(*i)).collect()
    }

    /// Branch currents `y (V_from - V_to)`, per unit.
    pub fn branch_currents(&self, grid: &GridModel) -> (Vec<f64>, Vec<f64>) {
        grid.branches()
            .iter()
            .map(|br| {
                let dr = self.v_re[br.from] - self.v_re[br.to];
                let di = self.v_im[br.from] - self.v_im[br.to];
                (br.y_re * dr - br.y_im * di, br.y_re * di + br.y_im * dr)
            })
            .unzip()
    }

    /// Network injection currents `Y V`, per unit.
    pub fn injection_currents(&self, grid: &GridModel) -> (Vec<f64>, Vec<f64>) {
        let (yr, yi) = (grid.y_re(), grid.y_im());
        let a = yr.mul_vec(&self.v_re);
        let b = yi.mul_vec(&self.v_im);
        let c = yi.mul_vec(&self.v_re);
        let d = yr.mul_vec(&self.v_im);
        (a.iter().zip(&b).map(|(x, y)| x - y).collect(), c.iter().zip(&d).map(|(x, y)| x + y).collect())
    }
}

pub fn branch_current_magnitudes(grid: &GridModel, sol: &PowerFlowSolution) -> Vec<f64> {
    let (re, im) = sol.branch_currents(grid);
    re.iter().zip(&im).map(|(r, i)| r.hypot(*i)).collect()
}

/// Load current `conj(S / V)` and its partials with respect to `V_re`, `V_im`.
#[derive(Debug, Clone, Copy)]
pub(crate) struct LoadCurrent {
    pub re: f64,
    pub im: f64,
    pub dre_dvr: f64,
    pub dre_dvi: f64,
    pub dim_dvr: f64,
    pub dim_dvi: f64,
}

pub(crate) fn load_current(p: f64, q: f64, vr: f64, vi: f64) -> LoadCurrent {
    let m2 = vr * vr + vi * vi;
    let m4 = m2 * m2;
    let cross = vr * vr - vi * vi;
    let dre_dvr = (-p * cross - 2.0 * q * vr * vi) / m4;
    let dre_dvi = (q * cross - 2.0 * p * vr * vi) / m4;
    LoadCurrent {
        re: (p * vr + q * vi) / m2,
        im: (p * vi - q * vr) / m2,
        dre_dvr,
        dre_dvi,
        dim_dvr: dre_dvi,
        dim_dvi: -dre_dvr,
    }
}

/// Jacobian of the current balance, `[Y + Y_D]` in block form, with slack
/// rows replaced by identity rows.
pub fn modified_admittance(grid: &GridModel, v_re: &[f64], v_im: &[f64], p_pu: &[f64], q_pu: &[f64]) -> Matrix {
    let n = grid.n_bus();
    let (yr, yi) = (grid.y_re(), grid.y_im());
    let mut m = Matrix::zeros(2 * n, 2 * n);
    for i in 0..n {
        if i == grid.slack() {
            m[(i, i)] = 1.0;
            m[(n + i, n + i)] = 1.0;
            continue;
        }
        for j in 0..n {
            m[(i, j)] = yr[(i, j)];
            m[(i, n + j)] = -yi[(i, j)];
            m[(n + i, j)] = yi[(i, j)];
            m[(n + i, n + j)] = yr[(i, j)];
        }
        let lc = load_current(p_pu[i], q_pu[i], v_re[i], v_im[i]);
        m[(i, i)] += lc.dre_dvr;
        m[(i, n + i)] += lc.dre_dvi;
        m[(n + i, i)] += lc.dim_dvr;
        m[(n + i, n + i)] += lc.dim_dvi;
    }
    m
}

fn current_residual(grid: &GridModel, v_re: &[f64], v_im: &[f64], p: &[f64], q: &[f64]) -> Vec<f64> {
    let n = grid.n_bus();
    let (yr, yi) = (grid.y_re(), grid.y_im());
    let mut f = vec![0.0; 2 * n];
    for i in 0..n {
        if i == grid.slack() {
            f[i] = v_re[i] - 1.0;
            f[n + i] = v_im[i];
            continue;
        }
        let (mut ir, mut ii) = (0.0, 0.0);
        for j in 0..n {
            ir += yr[(i, j)] * v_re[j] - yi[(i, j)] * v_im[j];
            ii += yi[(i, j)] * v_re[j] + yr[(i, j)] * v_im[j];
        }
        let lc = load_current(p[i], q[i], v_re[i], v_im[i]);
        f[i] = ir + lc.re;
        f[n + i] = ii + lc.im;
    }
    f
}

fn power_mismatch(grid: &GridModel, v_re: &[f64], v_im: &[f64], p: &[f64], q: &[f64]) -> f64 {
    let n = grid.n_bus();
    let (yr, yi) = (grid.y_re(), grid.y_im());
    (0..n)
        .filter(|&i| i != grid.slack())
        .map(|i| {
            let (mut ir, mut ii) = (0.0, 0.0);
            for j in 0..n {
                ir += yr[(i, j)] * v_re[j] - yi[(i, j)] * v_im[j];
                ii += yi[(i, j)] * v_re[j] + yr[(i, j)] * v_im[j];
            }
            // injected S = V conj(I); balance is S_inj + S_load = 0
            let s_re = v_re[i] * ir + v_im[i] * ii + p[i];
            let s_im = v_im[i] * ir - v_re[i] * ii + q[i];
            s_re.abs().max(s_im.abs())
        })
        .fold(0.0, f64::max)
}

/// Solves for bus voltages given per-bus net load in kW / kvar (positive = consumption).
/// Slack entries are ignored.
pub fn solve_power_flow(
    grid: &GridModel,
    p_kw: &[f64],
    q_kvar: &[f64],
    opts: &PowerFlowOptions,
) -> Result<PowerFlowSolution, PowerFlowError> {
    let n = grid.n_bus();
    for len in [p_kw.len(), q_kvar.len()] {
        if len != n {
            return Err(PowerFlowError::Dimension { expected: n, got: len });
        }
    }
    if let Some(i) = (0..n).find(|&i| !(p_kw[i].is_finite() && q_kvar[i].is_finite())) {
        return Err(PowerFlowError::NonFinite(i));
    }
    let s = grid.base_power_kva();
    let p: Vec<f64> = p_kw.iter().map(|v| v / s).collect();
    let q: Vec<f64> = q_kvar.iter().map(|v| v / s).collect();
    solve_power_flow_pu(grid, p, q, opts)
}

pub fn solve_power_flow_pu(
    grid: &GridModel,
    p: Vec<f64>,
    q: Vec<f64>,
    opts: &PowerFlowOptions,
) -> Result<PowerFlowSolution, PowerFlowError> {
    let n = grid.n_bus();
    let mut v_re = vec![1.0; n];
    let mut v_im = vec![0.0; n];
    let mut residuals = Vec::with_capacity(opts.max_iterations + 1);
    for iteration in 0..=opts.max_iterations {
        let mismatch = power_mismatch(grid, &v_re, &v_im, &p, &q);
        residuals.push(mismatch);
        if mismatch <= opts.tolerance {
            return Ok(PowerFlowSolution { v_re, v_im, p_pu: p, q_pu: q, iterations: iteration, mismatch });
        }
        if !mismatch.is_finite() || iteration == opts.max_iterations {
            break;
        }
        let jac = modified_admittance(grid, &v_re, &v_im, &p, &q);
        let lu = Lu::factor(&jac).map_err(|source| PowerFlowError::SingularJacobian { iteration, source })?;
        let f = current_residual(grid, &v_re, &v_im, &p, &q);
        let dx = lu.solve(&f);
        for i in 0..n {
            v_re[i] -= dx[i];
            v_im[i] -= dx[n + i];
        }
    }
    Err(PowerFlowError::NonConvergence { residuals })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{Branch, Bus};
    use alloc::vec;

    fn two_bus(r: f64, x: f64) -> GridModel {
        GridModel::new(vec![Bus::slack(0), Bus::load(1)], vec![Branch::from_impedance(0, 1, r, x, 10.0)], 100.0, vec![12.66])
            .unwrap()
    }

    #[test]
    fn zero_load_converges_immediately() {
        let g = two_bus(0.01, 0.01);
        let sol = solve_power_flow(&g, &[0.0, 0.0], &[0.0, 0.0], &PowerFlowOptions::default()).unwrap();
        assert_eq!(sol.iterations, 0);
        assert_eq!(sol.v_re, vec![1.0, 1.0]);
    }

    #[test]
    fn impossible_load_reports_history() {
        let g = two_bus(0.5, 0.5);
        let err = solve_power_flow(&g, &[0.0, 500.0], &[0.0, 200.0], &PowerFlowOptions::default()).unwrap_err();
        match err {
            PowerFlowError::NonConvergence { residuals } => assert!(!residuals.is_empty()),
            PowerFlowError::SingularJacobian { .. } => {}
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn load_current_partials_match_differences() {
        let (p, q, vr, vi) = (0.7, -0.3, 0.97, -0.04);
        let lc = load_current(p, q, vr, vi);
        let h = 1e-7;
        let a = load_current(p, q, vr + h, vi);
        let b = load_current(p, q, vr - h, vi);
        assert!(((a.re - b.re) / (2.0 * h) - lc.dre_dvr).abs() < 1e-7);
        assert!(((a.im - b.im) / (2.0 * h) - lc.dim_dvr).abs() < 1e-7);
        let a = load_current(p, q, vr, vi + h);
        let b = load_current(p, q, vr, vi - h);
        assert!(((a.re - b.re) / (2.0 * h) - lc.dre_dvi).abs() < 1e-7);
        assert!(((a.im - b.im) / (2.0 * h) - lc.dim_dvi).abs() < 1e-7);
    }
}
