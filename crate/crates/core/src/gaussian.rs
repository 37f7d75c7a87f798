//! Multivariate normal density and its partial derivatives.

use alloc::vec::Vec;
use core::f64::consts::PI;

#[allow(unused_imports)]
use num_traits::Float;
use thiserror::Error;

use crate::linalg::Matrix;

/// Relative clamp on `|a - μ|` before inverting `∂π/∂a`.
pub const ACTION_CLAMP: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum GaussianError {
    #[error("covariance is not positive definite (pivot {0})")]
    NotPositiveDefinite(usize),
    #[error("dimension mismatch")]
    Dimension,
}

struct Cholesky {
    l: Matrix,
}

impl Cholesky {
    fn factor(a: &Matrix) -> Result<Self, GaussianError> {
        let n = a.rows();
        if a.cols() != n {
            return Err(GaussianError::Dimension);
        }
        let mut l = Matrix::zeros(n, n);
        for j in 0..n {
            let s: f64 = (0..j).map(|k| l[(j, k)] * l[(j, k)]).sum();
            let d = a[(j, j)] - s;
            if !(d > 0.0) {
                return Err(GaussianError::NotPositiveDefinite(j));
            }
            l[(j, j)] = d.sqrt();
            for i in j + 1..n {
                let s: f64 = (0..j).map(|k| l[(i, k)] * l[(j, k)]).sum();
                l[(i, j)] = (a[(i, j)] - s) / l[(j, j)];
            }
        }
        Ok(Self { l })
    }

    fn log_det(&self) -> f64 {
        (0..self.l.rows()).map(|i| 2.0 * self.l[(i, i)].ln()).sum()
    }

    fn solve(&self, b: &[f64]) -> Vec<f64> {
        let n = b.len();
        let mut y = b.to_vec();
        for i in 0..n {
            let s: f64 = (0..i).map(|k| self.l[(i, k)] * y[k]).sum();
            y[i] = (y[i] - s) / self.l[(i, i)];
        }
        for i in (0..n).rev() {
            let s: f64 = (i + 1..n).map(|k| self.l[(k, i)] * y[k]).sum();
            y[i] = (y[i] - s) / self.l[(i, i)];
        }
        y
    }

    fn inverse(&self) -> Matrix {
        let n = self.l.rows();
        let mut inv = Matrix::zeros(n, n);
        for j in 0..n {
            let mut e = alloc::vec![0.0; n];
            e[j] = 1.0;
            for (i, v) in self.solve(&e).into_iter().enumerate() {
                inv[(i, j)] = v;
            }
        }
        inv
    }
}

struct Prepared {
    chol: Cholesky,
    /// `Σ⁻¹ (x - μ)`
    z: Vec<f64>,
    pdf: f64,
}

fn prepare(mean: &[f64], cov: &Matrix, x: &[f64]) -> Result<Prepared, GaussianError> {
    if mean.len() != x.len() || cov.rows() != x.len() {
        return Err(GaussianError::Dimension);
    }
    let chol = Cholesky::factor(cov)?;
    let d: Vec<f64> = x.iter().zip(mean).map(|(a, m)| a - m).collect();
    let z = chol.solve(&d);
    let quad: f64 = d.iter().zip(&z).map(|(a, b)| a * b).sum();
    let n = x.len() as f64;
    let pdf = (-0.5 * (quad + chol.log_det() + n * (2.0 * PI).ln())).exp();
    Ok(Prepared { chol, z, pdf })
}

pub fn pdf(mean: &[f64], cov: &Matrix, x: &[f64]) -> Result<f64, GaussianError> {
    prepare(mean, cov, x).map(|p| p.pdf)
}

/// `∂π/∂μ = π Σ⁻¹ (x - μ)`
pub fn grad_mean(mean: &[f64], cov: &Matrix, x: &[f64]) -> Result<Vec<f64>, GaussianError> {
    let p = prepare(mean, cov, x)?;
    Ok(p.z.iter().map(|z| p.pdf * z).collect())
}

/// `∂π/∂Σ = -π/2 (Σ⁻¹ - Σ⁻¹(x-μ)(x-μ)ᵀΣ⁻¹)`, treating entries as independent.
pub fn grad_cov(mean: &[f64], cov: &Matrix, x: &[f64]) -> Result<Matrix, GaussianError> {
    let p = prepare(mean, cov, x)?;
    let inv = p.chol.inverse();
    let n = x.len();
    Ok(Matrix::from_fn(n, n, |i, j| -0.5 * p.pdf * (inv[(i, j)] - p.z[i] * p.z[j])))
}

/// `∂π/∂x = -π Σ⁻¹ (x - μ)`
pub fn grad_action(mean: &[f64], cov: &Matrix, x: &[f64]) -> Result<Vec<f64>, GaussianError> {
    Ok(grad_mean(mean, cov, x)?.into_iter().map(|g| -g).collect())
}

/// Normal density with diagonal covariance `var`.
#[derive(Debug, Clone, Copy)]
pub struct DiagGaussian<'a> {
    pub mean: &'a [f64],
    pub var: &'a [f64],
}

impl DiagGaussian<'_> {
    pub fn log_pdf(&self, x: &[f64]) -> f64 {
        self.mean
            .iter()
            .zip(self.var)
            .zip(x)
            .map(|((m, s), a)| -0.5 * ((a - m) * (a - m) / s + (2.0 * PI * s).ln()))
            .sum()
    }

    pub fn pdf(&self, x: &[f64]) -> f64 {
        self.log_pdf(x).exp()
    }

    pub fn grad_mean(&self, x: &[f64]) -> Vec<f64> {
        let f = self.pdf(x);
        self.map(x, |d, s| f * d / s)
    }

    /// Diagonal of `∂π/∂Σ`.
    pub fn grad_var(&self, x: &[f64]) -> Vec<f64> {
        let f = self.pdf(x);
        self.map(x, |d, s| -0.5 * f * (1.0 / s - d * d / (s * s)))
    }

    pub fn grad_action(&self, x: &[f64]) -> Vec<f64> {
        let f = self.pdf(x);
        self.map(x, |d, s| -f * d / s)
    }

    /// Elementwise `(∂π/∂a)⁻¹` with `|a - μ|` clamped to at least `ACTION_CLAMP σ`.
    pub fn action_sensitivity(&self, x: &[f64]) -> Vec<f64> {
        let f = self.pdf(x);
        self.map(x, |d, s| -s / (f * clamp(d, s)))
    }

    /// Sensitivities of the sampled action to the mean and variance through
    /// the implicit relation `∂a/∂· = -(∂π/∂a)⁻¹ ∂π/∂·`. The density cancels,
    /// so these are evaluated without it.
    pub fn chain_factors(&self, x: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let mean = self.map(x, |d, s| d / clamp(d, s));
        let var = self.map(x, |d, s| (d * d / s - 1.0) / (2.0 * clamp(d, s)));
        (mean, var)
    }

    fn map(&self, x: &[f64], f: impl Fn(f64, f64) -> f64) -> Vec<f64> {
        self.mean.iter().zip(self.var).zip(x).map(|((m, s), a)| f(a - m, *s)).collect()
    }
}

fn clamp(d: f64, var: f64) -> f64 {
    let floor = ACTION_CLAMP * var.sqrt();
    if d.abs() >= floor {
        d
    } else if d < 0.0 {
        -floor
    } else {
        floor
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn standard_normal_at_one() {
        let v = pdf(&[0.0], &Matrix::identity(1), &[1.0]).unwrap();
        assert_relative_eq!(v, 0.24197072451914337, epsilon = 1e-15);
    }

    #[test]
    fn rejects_indefinite_covariance() {
        let c = Matrix::from_rows(&[&[1.0, 2.0], &[2.0, 1.0]]);
        assert!(matches!(pdf(&[0.0, 0.0], &c, &[0.1, 0.2]), Err(GaussianError::NotPositiveDefinite(_))));
    }

    #[test]
    fn diagonal_matches_dense() {
        let mean = [0.3, -1.0, 2.0];
        let var = [0.5, 2.0, 0.1];
        let x = [0.1, 0.4, 2.2];
        let g = DiagGaussian { mean: &mean, var: &var };
        let cov = Matrix::diagonal(&var);
        assert_relative_eq!(g.pdf(&x), pdf(&mean, &cov, &x).unwrap(), max_relative = 1e-13);
        let dense = grad_cov(&mean, &cov, &x).unwrap();
        for (i, v) in g.grad_var(&x).iter().enumerate() {
            assert_relative_eq!(*v, dense[(i, i)], max_relative = 1e-12);
        }
    }

    #[test]
    fn chain_factors_equal_literal_products() {
        let mean = [0.3, -1.0];
        let var = [0.5, 2.0];
        let x = [0.9, -1.7];
        let g = DiagGaussian { mean: &mean, var: &var };
        let (fm, fv) = g.chain_factors(&x);
        let inv = g.action_sensitivity(&x);
        let (gm, gv) = (g.grad_mean(&x), g.grad_var(&x));
        for d in 0..2 {
            assert_relative_eq!(fm[d], -inv[d] * gm[d], max_relative = 1e-12);
            assert_relative_eq!(fv[d], -inv[d] * gv[d], max_relative = 1e-12);
        }
    }
}
