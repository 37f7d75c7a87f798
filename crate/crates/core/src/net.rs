//! Fully connected tanh network with hand-written parameter Jacobians.

use alloc::vec;
use alloc::vec::Vec;

#[allow(unused_imports)]
use num_traits::Float;

use crate::linalg::Matrix;

/// Every layer, the output layer included, applies `tanh`.
///
/// Parameters are stored layer by layer: the `out x in` weight matrix in
/// row-major order followed by the `out` biases.
#[derive(Debug, Clone, PartialEq)]
pub struct FeedforwardNet {
    sizes: Vec<usize>,
    params: Vec<f64>,
}

impl FeedforwardNet {
    /// `sizes` lists the input width, every hidden width and the output width.
    pub fn new(sizes: Vec<usize>) -> Self {
        assert!(sizes.len() >= 2 && sizes.iter().all(|s| *s > 0), "need at least an input and an output layer");
        let n = Self::count(&sizes);
        Self { sizes, params: vec![0.0; n] }
    }

    pub fn with_params(sizes: Vec<usize>, params: Vec<f64>) -> Option<Self> {
        (sizes.len() >= 2 && Self::count(&sizes) == params.len()).then_some(Self { sizes, params })
    }

    fn count(sizes: &[usize]) -> usize {
        sizes.windows(2).map(|w| w[1] * (w[0] + 1)).sum()
    }

    pub fn sizes(&self) -> &[usize] {
        &self.sizes
    }

    pub fn input_dim(&self) -> usize {
        self.sizes[0]
    }

    pub fn output_dim(&self) -> usize {
        *self.sizes.last().unwrap()
    }

    pub fn param_count(&self) -> usize {
        self.params.len()
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    fn layers(&self) -> impl Iterator<Item = (usize, usize, usize)> + '_ {
        self.sizes.windows(2).scan(0, |off, w| {
            let start = *off;
            *off += w[1] * (w[0] + 1);
            Some((start, w[0], w[1]))
        })
    }

    /// Activations of every layer, input first.
    pub fn trace(&self, x: &[f64]) -> Vec<Vec<f64>> {
        assert_eq!(x.len(), self.input_dim());
        let mut acts = vec![x.to_vec()];
        for (off, n_in, n_out) in self.layers() {
            let a = acts.last().unwrap();
            let w = &self.params[off..off + n_in * n_out];
            let b = &self.params[off + n_in * n_out..off + n_in * n_out + n_out];
            let next = (0..n_out)
                .map(|j| (b[j] + w[j * n_in..(j + 1) * n_in].iter().zip(a).map(|(w, a)| w * a).sum::<f64>()).tanh())
                .collect();
            acts.push(next);
        }
        acts
    }

    pub fn forward(&self, x: &[f64]) -> Vec<f64> {
        self.trace(x).pop().unwrap()
    }

    /// `∂ output / ∂ params`, one row per output.
    pub fn jacobian(&self, x: &[f64]) -> Matrix {
        let acts = self.trace(x);
        let layers: Vec<_> = self.layers().collect();
        let n_out = self.output_dim();
        let mut jac = Matrix::zeros(n_out, self.param_count());
        for o in 0..n_out {
            let y = &acts[layers.len()];
            let mut delta: Vec<f64> = (0..n_out).map(|j| if j == o { 1.0 - y[j] * y[j] } else { 0.0 }).collect();
            let row = jac.row_mut(o);
            for (l, &(off, n_in, n_units)) in layers.iter().enumerate().rev() {
                let a_in = &acts[l];
                for j in 0..n_units {
                    if delta[j] == 0.0 {
                        continue;
                    }
                    for i in 0..n_in {
                        row[off + j * n_in + i] = delta[j] * a_in[i];
                    }
                    row[off + n_in * n_units + j] = delta[j];
                }
                if l > 0 {
                    let w = &self.params[off..off + n_in * n_units];
                    delta = (0..n_in)
                        .map(|i| {
                            let s: f64 = (0..n_units).map(|j| delta[j] * w[j * n_in + i]).sum();
                            s * (1.0 - a_in[i] * a_in[i])
                        })
                        .collect();
                }
            }
        }
        jac
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_net_outputs_zero() {
        let net = FeedforwardNet::new(vec![3, 4, 2]);
        assert_eq!(net.param_count(), 4 * 4 + 2 * 5);
        assert_eq!(net.forward(&[1.0, -2.0, 0.5]), vec![0.0, 0.0]);
    }

    #[test]
    fn jacobian_matches_central_differences() {
        let mut net = FeedforwardNet::new(vec![2, 3, 3, 2]);
        for (k, p) in net.params_mut().iter_mut().enumerate() {
            *p = ((k as f64) * 0.37).sin() * 0.8;
        }
        let x = [0.3, -0.7];
        let jac = net.jacobian(&x);
        let h = 1e-6;
        for k in 0..net.param_count() {
            let mut plus = net.clone();
            plus.params_mut()[k] += h;
            let mut minus = net.clone();
            minus.params_mut()[k] -= h;
            let (fp, fm) = (plus.forward(&x), minus.forward(&x));
            for o in 0..2 {
                let fd = (fp[o] - fm[o]) / (2.0 * h);
                assert!((fd - jac[(o, k)]).abs() < 1e-8, "param {k} output {o}");
            }
        }
    }
}
