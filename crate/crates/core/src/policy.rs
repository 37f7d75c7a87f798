//! Gaussian dispatch policy: one network for the mean, one for the diagonal
//! covariance, and the closed-form Fisher information of the pair.

use alloc::vec;
use alloc::vec::Vec;

#[allow(unused_imports)]
use num_traits::Float;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal, Uniform};
use thiserror::Error;

use crate::linalg::{dot, Matrix};
use crate::mg::{ActionVector, Control, MicrogridSpec, StateVector, CONTROLS_PER_STEP, STATES_PER_STEP};
use crate::net::FeedforwardNet;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum PolicyError {
    #[error("state has {got} entries, policy expects {expected}")]
    StateLength { expected: usize, got: usize },
    #[error("parameter vector has {got} entries, policy expects {expected}")]
    ParamLength { expected: usize, got: usize },
    #[error("inconsistent policy layout: {0}")]
    Layout(&'static str),
}

#[derive(Debug, Clone, PartialEq)]
pub struct PolicyConfig {
    pub hidden: Vec<usize>,
    pub sigma_floor: f64,
    /// Spread of the standard deviation as a fraction of each action range.
    pub sigma_fraction: f64,
    pub mean_init: (f64, f64),
    pub cov_init: (f64, f64),
}

impl Default for PolicyConfig {
    fn default() -> Self {
        Self { hidden: vec![10, 10, 10], sigma_floor: 1e-2, sigma_fraction: 0.25, mean_init: (0.0, 0.2), cov_init: (-0.03, 0.03) }
    }
}

/// Output scaling shared by both networks.
#[derive(Debug, Clone, PartialEq)]
pub struct PolicyScaling {
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
    pub sigma_scale: Vec<f64>,
    pub sigma_floor: f64,
    /// Multiplies each state entry before the networks see it.
    pub input_scale: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GaussianPolicy {
    mean_net: FeedforwardNet,
    cov_net: FeedforwardNet,
    scaling: PolicyScaling,
}

/// Mean, variance and their parameter Jacobians at one state.
#[derive(Debug, Clone, PartialEq)]
pub struct PolicyOutput {
    pub mean: Vec<f64>,
    pub var: Vec<f64>,
    /// `∂μ/∂θ_μ`, `D x P_μ`.
    pub jac_mean: Matrix,
    /// `∂diag(Σ)/∂θ_Σ`, `D x P_Σ`.
    pub jac_var: Matrix,
}

impl GaussianPolicy {
    pub fn for_microgrid(spec: &MicrogridSpec, steps: usize, load_scale_kw: f64, config: &PolicyConfig) -> Self {
        let (mut lo, mut hi) = (Vec::new(), Vec::new());
        for _ in 0..steps {
            for c in Control::ALL {
                let (l, h) = spec.action_box(c);
                lo.push(l);
                hi.push(h);
            }
        }
        let sigma_scale = lo.iter().zip(&hi).map(|(l, h)| config.sigma_fraction * (h - l)).collect();
        let input_scale = (0..steps).flat_map(|_| [1.0, 1.0 / load_scale_kw]).collect();
        let scaling = PolicyScaling { lo, hi, sigma_scale, sigma_floor: config.sigma_floor, input_scale };
        Self::with_scaling(steps, &config.hidden, scaling)
    }

    pub fn with_scaling(steps: usize, hidden: &[usize], scaling: PolicyScaling) -> Self {
        let mut sizes = vec![STATES_PER_STEP * steps];
        sizes.extend_from_slice(hidden);
        sizes.push(CONTROLS_PER_STEP * steps);
        Self { mean_net: FeedforwardNet::new(sizes.clone()), cov_net: FeedforwardNet::new(sizes), scaling }
    }

    pub fn from_parts(mean_net: FeedforwardNet, cov_net: FeedforwardNet, scaling: PolicyScaling) -> Result<Self, PolicyError> {
        let d = mean_net.output_dim();
        if mean_net.sizes() != cov_net.sizes() {
            return Err(PolicyError::Layout("mean and covariance networks differ in shape"));
        }
        if [scaling.lo.len(), scaling.hi.len(), scaling.sigma_scale.len()].iter().any(|l| *l != d)
            || scaling.input_scale.len() != mean_net.input_dim()
        {
            return Err(PolicyError::Layout("scaling vectors do not match the network widths"));
        }
        Ok(Self { mean_net, cov_net, scaling })
    }

    /// `θ_μ ~ U(mean_init)`, `θ_Σ ~ U(cov_init)`.
    pub fn initialize<R: Rng + ?Sized>(&mut self, config: &PolicyConfig, rng: &mut R) {
        let um = Uniform::new(config.mean_init.0, config.mean_init.1).expect("valid range");
        let uc = Uniform::new(config.cov_init.0, config.cov_init.1).expect("valid range");
        self.mean_net.params_mut().iter_mut().for_each(|p| *p = um.sample(rng));
        self.cov_net.params_mut().iter_mut().for_each(|p| *p = uc.sample(rng));
    }

    pub fn mean_net(&self) -> &FeedforwardNet {
        &self.mean_net
    }

    pub fn cov_net(&self) -> &FeedforwardNet {
        &self.cov_net
    }

    pub fn scaling(&self) -> &PolicyScaling {
        &self.scaling
    }

    pub fn steps(&self) -> usize {
        self.action_dim() / CONTROLS_PER_STEP
    }

    pub fn action_dim(&self) -> usize {
        self.mean_net.output_dim()
    }

    pub fn mean_param_count(&self) -> usize {
        self.mean_net.param_count()
    }

    pub fn param_count(&self) -> usize {
        self.mean_net.param_count() + self.cov_net.param_count()
    }

    /// `θ = [θ_μ, θ_Σ]`
    pub fn params(&self) -> Vec<f64> {
        let mut v = self.mean_net.params().to_vec();
        v.extend_from_slice(self.cov_net.params());
        v
    }

    pub fn set_params(&mut self, theta: &[f64]) -> Result<(), PolicyError> {
        if theta.len() != self.param_count() {
            return Err(PolicyError::ParamLength { expected: self.param_count(), got: theta.len() });
        }
        let (m, c) = theta.split_at(self.mean_param_count());
        self.mean_net.params_mut().copy_from_slice(m);
        self.cov_net.params_mut().copy_from_slice(c);
        Ok(())
    }

    fn inputs(&self, state: &StateVector) -> Result<Vec<f64>, PolicyError> {
        let s = state.as_slice();
        if s.len() != self.mean_net.input_dim() {
            return Err(PolicyError::StateLength { expected: self.mean_net.input_dim(), got: s.len() });
        }
        Ok(s.iter().zip(&self.scaling.input_scale).map(|(x, k)| x * k).collect())
    }

    pub fn forward_mean(&self, state: &StateVector) -> Result<Vec<f64>, PolicyError> {
        let y = self.mean_net.forward(&self.inputs(state)?);
        Ok(self.map_mean(&y))
    }

    /// Diagonal of `Σ`.
    pub fn forward_cov(&self, state: &StateVector) -> Result<Vec<f64>, PolicyError> {
        let y = self.cov_net.forward(&self.inputs(state)?);
        Ok(self.map_std(&y).iter().map(|s| s * s).collect())
    }

    fn map_mean(&self, y: &[f64]) -> Vec<f64> {
        let s = &self.scaling;
        y.iter().zip(s.lo.iter().zip(&s.hi)).map(|(y, (l, h))| l + (h - l) * 0.5 * (y + 1.0)).collect()
    }

    fn map_std(&self, y: &[f64]) -> Vec<f64> {
        let s = &self.scaling;
        y.iter().zip(&s.sigma_scale).map(|(y, k)| s.sigma_floor + k * 0.5 * (y + 1.0)).collect()
    }

    pub fn evaluate(&self, state: &StateVector) -> Result<PolicyOutput, PolicyError> {
        let x = self.inputs(state)?;
        let ym = self.mean_net.forward(&x);
        let yc = self.cov_net.forward(&x);
        let mut jac_mean = self.mean_net.jacobian(&x);
        let mut jac_var = self.cov_net.jacobian(&x);
        let s = &self.scaling;
        let std = self.map_std(&yc);
        for d in 0..self.action_dim() {
            let km = 0.5 * (s.hi[d] - s.lo[d]);
            jac_mean.row_mut(d).iter_mut().for_each(|v| *v *= km);
            // d(σ²)/dy = 2σ · k/2
            let kv = std[d] * s.sigma_scale[d];
            jac_var.row_mut(d).iter_mut().for_each(|v| *v *= kv);
        }
        Ok(PolicyOutput { mean: self.map_mean(&ym), var: std.iter().map(|s| s * s).collect(), jac_mean, jac_var })
    }

    pub fn sample_actions<R: Rng + ?Sized>(&self, state: &StateVector, count: usize, rng: &mut R) -> Result<Vec<ActionVector>, PolicyError> {
        let mean = self.forward_mean(state)?;
        let var = self.forward_cov(state)?;
        Ok((0..count).map(|_| sample_diag(&mean, &var, rng)).collect())
    }
}

pub fn sample_diag<R: Rng + ?Sized>(mean: &[f64], var: &[f64], rng: &mut R) -> ActionVector {
    let v = mean
        .iter()
        .zip(var)
        .map(|(m, s)| {
            let z: f64 = StandardNormal.sample(rng);
            m + s.sqrt() * z
        })
        .collect();
    ActionVector::new(v).expect("policy output is a whole number of steps")
}

/// Fisher information `H = RᵀR + ridge I`, kept in factored form.
///
/// The mean block contributes `2 J_μᵀ Σ⁻¹ J_μ` and the covariance block
/// `Tr(Σ⁻¹ ∂Σ Σ⁻¹ ∂Σ)`; the two parameter groups do not interact.
#[derive(Debug, Clone, PartialEq)]
pub struct FisherFactor {
    rows: Matrix,
    ridge: f64,
}

impl FisherFactor {
    pub fn new(out: &PolicyOutput, ridge: f64) -> Self {
        let d = out.mean.len();
        let (pm, pc) = (out.jac_mean.cols(), out.jac_var.cols());
        let mut rows = Matrix::zeros(2 * d, pm + pc);
        for k in 0..d {
            let a = (2.0 / out.var[k]).sqrt();
            for (dst, src) in rows.row_mut(k)[..pm].iter_mut().zip(out.jac_mean.row(k)) {
                *dst = a * src;
            }
            let b = 1.0 / out.var[k];
            for (dst, src) in rows.row_mut(d + k)[pm..].iter_mut().zip(out.jac_var.row(k)) {
                *dst = b * src;
            }
        }
        Self { rows, ridge }
    }

    pub fn dim(&self) -> usize {
        self.rows.cols()
    }

    pub fn ridge(&self) -> f64 {
        self.ridge
    }

    /// `vᵀ H v`
    pub fn quad(&self, v: &[f64]) -> f64 {
        let r = self.rows.mul_vec(v);
        dot(&r, &r) + self.ridge * dot(v, v)
    }

    /// `H v`
    pub fn apply(&self, v: &[f64]) -> Vec<f64> {
        let mut out = self.rows.tr_mul_vec(&self.rows.mul_vec(v));
        out.iter_mut().zip(v).for_each(|(o, v)| *o += self.ridge * v);
        out
    }

    pub fn to_dense(&self) -> Matrix {
        let mut h = self.rows.transpose().matmul(&self.rows);
        for i in 0..h.rows() {
            h[(i, i)] += self.ridge;
        }
        h
    }
}

/// Dense Fisher matrix without regularisation.
pub fn fisher_matrix(out: &PolicyOutput) -> Matrix {
    FisherFactor::new(out, 0.0).to_dense()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mg::tests::spec;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn policy() -> GaussianPolicy {
        let mut p = GaussianPolicy::for_microgrid(&spec(0), 2, 50.0, &PolicyConfig::default());
        p.initialize(&PolicyConfig::default(), &mut ChaCha8Rng::seed_from_u64(3));
        p
    }

    fn state() -> StateVector {
        StateVector::from_series(&[0.4, 0.6], &[30.0, 35.0])
    }

    #[test]
    fn zero_network_gives_box_midpoint_and_floor_plus_half_spread() {
        let p = GaussianPolicy::for_microgrid(&spec(0), 1, 50.0, &PolicyConfig::default());
        let mean = p.forward_mean(&StateVector::from_series(&[0.5], &[20.0])).unwrap();
        let (lo, hi) = spec(0).action_box(Control::QPv);
        assert_eq!(mean[Control::QPv.index()], 0.5 * (lo + hi));
        let var = p.forward_cov(&StateVector::from_series(&[0.5], &[20.0])).unwrap();
        let s = p.scaling();
        assert!((var[0].sqrt() - (s.sigma_floor + 0.5 * s.sigma_scale[0])).abs() < 1e-12);
    }

    #[test]
    fn param_layout() {
        let p = policy();
        // 4 -> 10 -> 10 -> 10 -> 12, twice
        assert_eq!(p.mean_param_count(), 10 * 5 + 10 * 11 * 2 + 12 * 11);
        let mut q = p.clone();
        q.set_params(&p.params()).unwrap();
        assert_eq!(p, q);
        assert!(q.set_params(&[0.0]).is_err());
    }

    #[test]
    fn sampling_is_seeded() {
        let p = policy();
        let a = p.sample_actions(&state(), 5, &mut ChaCha8Rng::seed_from_u64(9)).unwrap();
        let b = p.sample_actions(&state(), 5, &mut ChaCha8Rng::seed_from_u64(9)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn fisher_factor_is_consistent() {
        let p = policy();
        let out = p.evaluate(&state()).unwrap();
        let f = FisherFactor::new(&out, 1e-8);
        let h = f.to_dense();
        assert!(h.is_symmetric(1e-12));
        let v: Vec<f64> = (0..f.dim()).map(|k| ((k as f64) * 0.13).cos()).collect();
        let hv = h.mul_vec(&v);
        let applied = f.apply(&v);
        for (a, b) in hv.iter().zip(&applied) {
            assert!((a - b).abs() <= 1e-9 * (1.0 + a.abs()));
        }
        assert!((dot(&v, &hv) - f.quad(&v)).abs() <= 1e-9 * f.quad(&v));
    }
}
