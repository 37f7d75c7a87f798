//! Projection onto an agent's linearised local constraints intersected with
//! the Fisher trust region `(θ - θ⁰)ᵀ H (θ - θ⁰) ≤ 2δ`.

use alloc::vec;
use alloc::vec::Vec;

#[allow(unused_imports)]
use num_traits::Float;
use thiserror::Error;

use crate::linalg::{axpy, dot};
use crate::policy::FisherFactor;

/// `value + gradientᵀ(θ - θ⁰) ≤ bound`
#[derive(Debug, Clone, Copy)]
pub struct LinearRow<'a> {
    pub value: f64,
    pub gradient: &'a [f64],
    pub bound: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProjectionOptions {
    /// Largest allowed KKT residual, measured as a distance in parameter space.
    pub tolerance: f64,
    pub max_sweeps: usize,
}

impl Default for ProjectionOptions {
    fn default() -> Self {
        Self { tolerance: 1e-6, max_sweeps: 500 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Projection {
    pub theta: Vec<f64>,
    pub sweeps: usize,
    pub residual: f64,
    /// Dual variables of the half-space rows, usable as a warm start.
    pub duals: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ProjectionError {
    /// The linearised rows cannot be met inside the trust region. `recovery`
    /// moves from the anchor towards the closest point of the half-space
    /// polytope, as far as the trust region allows.
    #[error("local constraints cannot be met inside the trust region (needs {needed:.3e}, radius {radius:.3e})")]
    Infeasible { recovery: Vec<f64>, needed: f64, radius: f64 },
    #[error("parameter dimensions disagree")]
    Dimension,
}

/// Euclidean projection onto `{x : g_iᵀ x ≤ h_i}` by Hildreth's cyclic dual
/// coordinate ascent.
pub fn hildreth(y: &[f64], rows: &[(&[f64], f64)], warm: Option<&[f64]>, opts: &ProjectionOptions) -> Projection {
    let norms: Vec<f64> = rows.iter().map(|(g, _)| dot(g, g)).collect();
    let mut mu = match warm {
        Some(w) if w.len() == rows.len() => w.to_vec(),
        _ => vec![0.0; rows.len()],
    };
    let mut x = y.to_vec();
    for ((g, _), m) in rows.iter().zip(&mu) {
        if *m != 0.0 {
            axpy(-m, g, &mut x);
        }
    }
    let mut sweeps = 0;
    let mut residual = kkt_residual(&x, rows, &norms, &mu);
    while residual > opts.tolerance && sweeps < opts.max_sweeps {
        for (i, (g, h)) in rows.iter().enumerate() {
            if norms[i] <= f64::MIN_POSITIVE {
                continue;
            }
            let next = (mu[i] + (dot(g, &x) - h) / norms[i]).max(0.0);
            let d = next - mu[i];
            if d != 0.0 {
                axpy(-d, g, &mut x);
                mu[i] = next;
            }
        }
        sweeps += 1;
        residual = kkt_residual(&x, rows, &norms, &mu);
    }
    Projection { theta: x, sweeps, residual, duals: mu }
}

fn kkt_residual(x: &[f64], rows: &[(&[f64], f64)], norms: &[f64], mu: &[f64]) -> f64 {
    rows.iter()
        .zip(norms)
        .zip(mu)
        .filter(|((_, n), _)| **n > f64::MIN_POSITIVE)
        .map(|(((g, h), n), m)| {
            let slack = (dot(g, x) - h) / n.sqrt();
            // primal violation, or a positive multiplier on an inactive row
            slack.max(0.0).max(if *m > 0.0 { (-slack) * (m * n.sqrt()).min(1.0) } else { 0.0 })
        })
        .fold(0.0, f64::max)
}

/// Projects `theta_bar` onto the local half-spaces, then pulls it back along
/// the segment towards a feasible centre until it lies in the trust region.
/// The centre is the anchor when the anchor is feasible, otherwise the
/// polytope point closest to the anchor.
pub fn project_local(
    theta_bar: &[f64],
    anchor: &[f64],
    rows: &[LinearRow<'_>],
    fisher: &FisherFactor,
    delta: f64,
    warm: Option<&[f64]>,
    opts: &ProjectionOptions,
) -> Result<Projection, ProjectionError> {
    let p = anchor.len();
    if theta_bar.len() != p || fisher.dim() != p || rows.iter().any(|r| r.gradient.len() != p) {
        return Err(ProjectionError::Dimension);
    }
    let radius = 2.0 * delta;
    // In absolute coordinates: gᵀθ ≤ bound - value + gᵀθ⁰.
    let abs_rows: Vec<(&[f64], f64)> =
        rows.iter().map(|r| (r.gradient, r.bound - r.value + dot(r.gradient, anchor))).collect();
    let anchor_feasible = rows.iter().all(|r| r.value <= r.bound || dot(r.gradient, r.gradient) <= f64::MIN_POSITIVE);
    let centre = if anchor_feasible {
        anchor.to_vec()
    } else {
        let c = hildreth(anchor, &abs_rows, None, opts).theta;
        let e: Vec<f64> = c.iter().zip(anchor).map(|(c, a)| c - a).collect();
        let needed = fisher.quad(&e);
        if needed > radius {
            let s = (radius / needed).sqrt();
            let recovery = anchor.iter().zip(&e).map(|(a, e)| a + s * e).collect();
            return Err(ProjectionError::Infeasible { recovery, needed, radius });
        }
        c
    };
    let mut proj = hildreth(theta_bar, &abs_rows, warm, opts);
    let step: Vec<f64> = proj.theta.iter().zip(anchor).map(|(x, a)| x - a).collect();
    if fisher.quad(&step) > radius {
        let e: Vec<f64> = centre.iter().zip(anchor).map(|(c, a)| c - a).collect();
        let d: Vec<f64> = proj.theta.iter().zip(&centre).map(|(x, c)| x - c).collect();
        let he = fisher.apply(&e);
        let a = fisher.quad(&d);
        let b = dot(&he, &d);
        let c = fisher.quad(&e) - radius;
        let t = if a > 0.0 { ((-b + (b * b - a * c).max(0.0).sqrt()) / a).clamp(0.0, 1.0) } else { 0.0 };
        proj.theta = centre.iter().zip(&d).map(|(c, d)| c + t * d).collect();
    }
    Ok(proj)
}
