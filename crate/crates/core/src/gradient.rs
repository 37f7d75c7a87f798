//! Policy-parameter gradients of the reward and constraint returns, averaged
//! over a sample batch.

use alloc::vec;
use alloc::vec::Vec;

use crate::env::AgentGradients;
use crate::gaussian::DiagGaussian;
use crate::linalg::Matrix;
use crate::mg::ActionVector;
use crate::policy::PolicyOutput;

/// Per-agent first-order model of the window returns around `θ⁰`.
#[derive(Debug, Clone, PartialEq)]
pub struct GradientBundle {
    /// `∂J_R/∂θ`
    pub g: Vec<f64>,
    /// Row ids matching the rows of `b`.
    pub rows: Vec<usize>,
    /// `∂J_C/∂θ`, one row per constraint.
    pub b: Matrix,
    pub samples: usize,
}

/// Accumulates `∂J/∂a · ∂a/∂(μ, Σ)` over samples, then maps through the
/// network Jacobians once.
#[derive(Debug, Clone)]
pub struct BundleAccumulator {
    rows: Vec<usize>,
    /// Row 0 is the reward, rows `1..` the constraints.
    w_mean: Matrix,
    w_var: Matrix,
    samples: usize,
}

impl BundleAccumulator {
    pub fn new(rows: Vec<usize>, action_dim: usize) -> Self {
        let r = rows.len() + 1;
        Self { rows, w_mean: Matrix::zeros(r, action_dim), w_var: Matrix::zeros(r, action_dim), samples: 0 }
    }

    pub fn add(&mut self, out: &PolicyOutput, action: &ActionVector, grads: &AgentGradients) {
        debug_assert_eq!(grads.rows, self.rows);
        let dist = DiagGaussian { mean: &out.mean, var: &out.var };
        let (fm, fv) = dist.chain_factors(action.as_slice());
        let mut accumulate = |r: usize, g: &[f64]| {
            for (d, gd) in g.iter().enumerate() {
                self.w_mean[(r, d)] += gd * fm[d];
                self.w_var[(r, d)] += gd * fv[d];
            }
        };
        accumulate(0, &grads.reward);
        for r in 0..self.rows.len() {
            accumulate(r + 1, grads.row_grads.row(r));
        }
        self.samples += 1;
    }

    pub fn finish(self, out: &PolicyOutput) -> GradientBundle {
        let n = self.samples.max(1) as f64;
        let (pm, pv) = (out.jac_mean.cols(), out.jac_var.cols());
        let bm = self.w_mean.matmul(&out.jac_mean);
        let bv = self.w_var.matmul(&out.jac_var);
        let full = Matrix::from_fn(self.rows.len() + 1, pm + pv, |r, j| {
            if j < pm {
                bm[(r, j)] / n
            } else {
                bv[(r, j - pm)] / n
            }
        });
        let g = full.row(0).to_vec();
        let b = Matrix::from_fn(self.rows.len(), pm + pv, |r, j| full[(r + 1, j)]);
        GradientBundle { g, rows: self.rows, b, samples: self.samples }
    }
}

/// Batch-mean gradient bundle for one agent.
pub fn assemble_gradient_bundle(out: &PolicyOutput, samples: &[(ActionVector, AgentGradients)]) -> GradientBundle {
    let rows = samples.first().map_or_else(Vec::new, |(_, g)| g.rows.clone());
    let mut acc = BundleAccumulator::new(rows, out.mean.len());
    for (a, g) in samples {
        acc.add(out, a, g);
    }
    acc.finish(out)
}

impl GradientBundle {
    pub fn row_index(&self, id: usize) -> Option<usize> {
        self.rows.iter().position(|r| *r == id)
    }

    pub fn zeros(rows: Vec<usize>, params: usize) -> Self {
        Self { g: vec![0.0; params], b: Matrix::zeros(rows.len(), params), rows, samples: 0 }
    }
}
