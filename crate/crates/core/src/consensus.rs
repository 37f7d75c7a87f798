//! Agent communication graph, multiplier averaging and the primal/dual steps.

use alloc::vec;
use alloc::vec::Vec;

#[allow(unused_imports)]
use num_traits::Float;
use thiserror::Error;

use crate::linalg::Matrix;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum GraphError {
    #[error("graph needs at least one agent")]
    Empty,
    #[error("edge ({0}, {1}) references a missing agent or is a self-loop")]
    BadEdge(usize, usize),
    #[error("communication graph is disconnected")]
    Disconnected,
    #[error("weights are not symmetric and doubly stochastic")]
    NotDoublyStochastic,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum StepError {
    #[error("dimension mismatch: {0}")]
    Dimension(&'static str),
}

/// Symmetric, doubly stochastic mixing weights over a connected graph.
#[derive(Debug, Clone, PartialEq)]
pub struct AgentChannelGraph {
    weights: Matrix,
}

impl AgentChannelGraph {
    pub fn complete(n: usize) -> Result<Self, GraphError> {
        let edges: Vec<(usize, usize)> = (0..n).flat_map(|i| (i + 1..n).map(move |j| (i, j))).collect();
        Self::from_edges(n, &edges)
    }

    /// Metropolis-Hastings weights `w_ij = 1 / (1 + max(d_i, d_j))`.
    pub fn from_edges(n: usize, edges: &[(usize, usize)]) -> Result<Self, GraphError> {
        if n == 0 {
            return Err(GraphError::Empty);
        }
        let mut adj = vec![vec![false; n]; n];
        for &(i, j) in edges {
            if i >= n || j >= n || i == j {
                return Err(GraphError::BadEdge(i, j));
            }
            adj[i][j] = true;
            adj[j][i] = true;
        }
        let deg: Vec<usize> = adj.iter().map(|r| r.iter().filter(|x| **x).count()).collect();
        let mut w = Matrix::zeros(n, n);
        for i in 0..n {
            for j in 0..n {
                if adj[i][j] {
                    w[(i, j)] = 1.0 / (1 + deg[i].max(deg[j])) as f64;
                }
            }
            let off: f64 = w.row(i).iter().sum();
            w[(i, i)] = 1.0 - off;
        }
        Self::from_weights(w)
    }

    pub fn from_weights(weights: Matrix) -> Result<Self, GraphError> {
        let n = weights.rows();
        if n == 0 {
            return Err(GraphError::Empty);
        }
        let stochastic = (0..n).all(|i| (weights.row(i).iter().sum::<f64>() - 1.0).abs() < 1e-12)
            && weights.as_slice().iter().all(|w| *w >= 0.0);
        if weights.cols() != n || !weights.is_symmetric(1e-14) || !stochastic {
            return Err(GraphError::NotDoublyStochastic);
        }
        let mut seen = vec![false; n];
        let mut stack = vec![0];
        seen[0] = true;
        while let Some(i) = stack.pop() {
            for j in 0..n {
                if !seen[j] && weights[(i, j)] > 0.0 {
                    seen[j] = true;
                    stack.push(j);
                }
            }
        }
        if seen.iter().any(|s| !s) {
            return Err(GraphError::Disconnected);
        }
        Ok(Self { weights })
    }

    pub fn n_agents(&self) -> usize {
        self.weights.rows()
    }

    pub fn weights(&self) -> &Matrix {
        &self.weights
    }

    pub fn neighbours(&self, agent: usize) -> impl Iterator<Item = usize> + '_ {
        (0..self.n_agents()).filter(move |&j| j != agent && self.weights[(agent, j)] > 0.0)
    }
}

/// The only thing agents exchange: their current multiplier vector.
#[derive(Debug, Clone, PartialEq)]
pub struct LambdaMessage {
    pub from: usize,
    pub round: usize,
    pub lambda: Vec<f64>,
}

/// `λ̄_n = Σ_j w_nj λ_j`, reading only messages from neighbours and self.
pub fn consensus_average(graph: &AgentChannelGraph, agent: usize, own: &[f64], inbox: &[LambdaMessage]) -> Vec<f64> {
    let w = graph.weights();
    let mut out: Vec<f64> = own.iter().map(|l| w[(agent, agent)] * l).collect();
    for msg in inbox {
        let wj = w[(agent, msg.from)];
        if msg.from != agent && wj > 0.0 {
            out.iter_mut().zip(&msg.lambda).for_each(|(o, l)| *o += wj * l);
        }
    }
    out
}

/// Averages every agent's multipliers at once.
pub fn consensus_average_all(graph: &AgentChannelGraph, lambdas: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let inbox: Vec<LambdaMessage> =
        lambdas.iter().enumerate().map(|(from, l)| LambdaMessage { from, round: 0, lambda: l.clone() }).collect();
    (0..lambdas.len()).map(|n| consensus_average(graph, n, &lambdas[n], &inbox)).collect()
}

/// `θ̄ = θ - ρ1 (-g + Bᵀ λ̄)`, where `B` holds the global-row gradients.
pub fn primal_step(theta: &[f64], g: &[f64], b: &Matrix, lambda_bar: &[f64], rho1: f64) -> Result<Vec<f64>, StepError> {
    if g.len() != theta.len() || b.cols() != theta.len() {
        return Err(StepError::Dimension("gradient and parameter lengths differ"));
    }
    if b.rows() != lambda_bar.len() {
        return Err(StepError::Dimension("multiplier and constraint counts differ"));
    }
    let bl = b.tr_mul_vec(lambda_bar);
    Ok(theta.iter().zip(g).zip(&bl).map(|((t, g), bl)| t - rho1 * (-g + bl)).collect())
}

/// One global row as seen by one agent: the anchor value, this agent's
/// gradient and the bound.
#[derive(Debug, Clone, Copy)]
pub struct DualRow<'a> {
    pub value: f64,
    pub gradient: &'a [f64],
    pub bound: f64,
}

/// `λ = [λ̄ + ρ2 (share (J(θ⁰) - d) + bᵀ(θ - θ⁰))]⁺`.
///
/// With `share = 1` this is the single-agent update; with `N` agents each
/// carries `1/N` of the anchor residual and its own linear term.
pub fn dual_step(lambda_bar: &[f64], rows: &[DualRow<'_>], theta: &[f64], anchor: &[f64], rho2: f64, share: f64) -> Vec<f64> {
    let step: Vec<f64> = theta.iter().zip(anchor).map(|(t, a)| t - a).collect();
    lambda_bar
        .iter()
        .zip(rows)
        .map(|(l, r)| {
            let lin: f64 = r.gradient.iter().zip(&step).map(|(b, s)| b * s).sum();
            (l + rho2 * (share * (r.value - r.bound) + lin)).max(0.0)
        })
        .collect()
}
