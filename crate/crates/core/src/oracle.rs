//! Exhaustive grid search over dispatch decisions on tiny systems, used as a
//! reference optimum.

use alloc::vec;
use alloc::vec::Vec;

use thiserror::Error;

use crate::env::{Environment, Window};
use crate::exec::Executor;
use crate::mg::{ActionVector, Control, CONTROLS_PER_STEP};

pub const MAX_MICROGRIDS: usize = 2;
pub const MAX_BUSES: usize = 5;
pub const MAX_POINTS: usize = 9;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum OracleError {
    #[error("oracle handles at most {MAX_MICROGRIDS} microgrids, {MAX_BUSES} buses and one step")]
    TooLarge,
    #[error("each control needs 1..={MAX_POINTS} grid points")]
    Points,
    #[error("no grid point satisfies every active constraint ({evaluated} evaluated, {failed} power-flow failures)")]
    Infeasible { evaluated: usize, failed: usize },
}

#[derive(Debug, Clone, PartialEq)]
pub struct OracleResult {
    pub actions: Vec<ActionVector>,
    /// `-Σ rewards`: fuel cost minus export revenue.
    pub cost: f64,
    pub evaluated: usize,
    pub feasible: usize,
}

/// Grid values for one control: `points` evenly spaced values across the
/// device limits (the midpoint when `points == 1`).
pub fn control_grid(lo: f64, hi: f64, points: usize) -> Vec<f64> {
    if points == 1 {
        return vec![0.5 * (lo + hi)];
    }
    (0..points).map(|i| lo + (hi - lo) * i as f64 / (points - 1) as f64).collect()
}

/// Minimum-cost point of the grid that passes the power flow and every
/// active row. `points[c]` is the grid size for control `c`, shared by all
/// microgrids.
pub fn brute_force_opf<E: Executor>(
    env: &Environment,
    window: &Window,
    prev_dg: &[f64],
    points: [usize; CONTROLS_PER_STEP],
    exec: &E,
) -> Result<OracleResult, OracleError> {
    let n = env.n_agents();
    if n > MAX_MICROGRIDS || env.grid.n_bus() > MAX_BUSES || env.steps != 1 {
        return Err(OracleError::TooLarge);
    }
    if points.iter().any(|p| *p == 0 || *p > MAX_POINTS) {
        return Err(OracleError::Points);
    }
    let grids: Vec<Vec<f64>> = env
        .specs
        .iter()
        .flat_map(|s| {
            Control::ALL.into_iter().map(move |c| {
                let (lo, hi) = s.limit(c);
                control_grid(lo, hi, points[c.index()])
            })
        })
        .collect();
    let total: usize = grids.iter().map(Vec::len).product();
    let decode = |mut i: usize| -> Vec<ActionVector> {
        let mut out = vec![ActionVector::zeros(1); n];
        for (j, g) in grids.iter().enumerate() {
            out[j / CONTROLS_PER_STEP].set(0, Control::ALL[j % CONTROLS_PER_STEP], g[i % g.len()]);
            i /= g.len();
        }
        out
    };
    let table = &env.table;
    let results = exec.map(total, |i| {
        let actions = decode(i);
        let ev = env.evaluate(&actions, window, prev_dg, false).ok()?;
        let feasible = table.rows().iter().all(|r| !table.is_active(r.id) || ev.returns[r.id] <= r.bound + 1e-9);
        Some(feasible.then(|| -ev.rewards.iter().sum::<f64>()))
    });
    let failed = results.iter().filter(|r| r.is_none()).count();
    let feasible = results.iter().filter(|r| matches!(r, Some(Some(_)))).count();
    let best = results
        .iter()
        .enumerate()
        .filter_map(|(i, r)| r.flatten().map(|c| (i, c)))
        .fold(None, |acc: Option<(usize, f64)>, (i, c)| match acc {
            Some((_, b)) if b <= c => acc,
            _ => Some((i, c)),
        });
    match best {
        Some((i, cost)) => Ok(OracleResult { actions: decode(i), cost, evaluated: total, feasible }),
        None => Err(OracleError::Infeasible { evaluated: total, failed }),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grid_endpoints() {
        assert_eq!(control_grid(0.0, 60.0, 4), vec![0.0, 20.0, 40.0, 60.0]);
        assert_eq!(control_grid(-4.0, 4.0, 1), vec![0.0]);
    }
}
