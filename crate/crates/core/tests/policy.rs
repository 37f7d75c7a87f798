use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use smaspl_core::env::AgentGradients;
use smaspl_core::gradient::assemble_gradient_bundle;
use smaspl_core::linalg::{symmetric_eigenvalues, Matrix};
use smaspl_core::mg::{ActionVector, StateVector};
use smaspl_core::networks::chain_with_microgrids;
use smaspl_core::policy::{fisher_matrix, FisherFactor, GaussianPolicy, PolicyConfig, PolicyOutput};

fn small_policy(hidden: Vec<usize>, seed: u64) -> GaussianPolicy {
    let sys = chain_with_microgrids(1, (0.01, 0.01), 2.0, (0.005, 0.01)).unwrap();
    let config = PolicyConfig { hidden, ..PolicyConfig::default() };
    let mut p = GaussianPolicy::for_microgrid(&sys.specs[0], 1, 50.0, &config);
    p.initialize(&config, &mut ChaCha8Rng::seed_from_u64(seed));
    p
}

fn state() -> StateVector {
    StateVector::from_series(&[0.55], &[37.0])
}

fn rel_err(a: &Matrix, f: &Matrix) -> f64 {
    let scale = f.max_abs().max(1e-12);
    a.as_slice().iter().zip(f.as_slice()).fold(0.0f64, |m, (x, y)| m.max((x - y).abs())) / scale
}

#[test]
fn policy_jacobians_match_central_differences() {
    let p = small_policy(vec![10, 10, 10], 5);
    let out = p.evaluate(&state()).unwrap();
    let theta = p.params();
    let pm = p.mean_param_count();
    let h = 1e-6;
    let d = out.mean.len();
    let mut fd_mean = Matrix::zeros(d, pm);
    let mut fd_var = Matrix::zeros(d, theta.len() - pm);
    for j in 0..theta.len() {
        let at = |s: f64| {
            let mut q = p.clone();
            let mut t = theta.clone();
            t[j] += s;
            q.set_params(&t).unwrap();
            q.evaluate(&state()).unwrap()
        };
        let (plus, minus) = (at(h), at(-h));
        for i in 0..d {
            if j < pm {
                fd_mean[(i, j)] = (plus.mean[i] - minus.mean[i]) / (2.0 * h);
            } else {
                fd_var[(i, j - pm)] = (plus.var[i] - minus.var[i]) / (2.0 * h);
            }
        }
    }
    assert!(rel_err(&out.jac_mean, &fd_mean) <= 1e-5, "mean {}", rel_err(&out.jac_mean, &fd_mean));
    assert!(rel_err(&out.jac_var, &fd_var) <= 1e-5, "var {}", rel_err(&out.jac_var, &fd_var));
}

#[test]
fn fisher_is_symmetric_and_positive_semidefinite() {
    let p = small_policy(vec![6, 6], 2);
    let h = fisher_matrix(&p.evaluate(&state()).unwrap());
    assert!(h.is_symmetric(1e-12));
    let min = symmetric_eigenvalues(&h).into_iter().fold(f64::INFINITY, f64::min);
    assert!(min >= -1e-8, "{min}");
}

/// Sampled `E[s sᵀ]` of the log-density score over the policy parameters.
fn sampled_fisher(out: &PolicyOutput, n: usize) -> Matrix {
    let (pm, pv) = (out.jac_mean.cols(), out.jac_var.cols());
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    let mut f = Matrix::zeros(pm + pv, pm + pv);
    for _ in 0..n {
        let mut s = vec![0.0; pm + pv];
        for (d, v) in out.var.iter().enumerate() {
            let z: f64 = StandardNormal.sample(&mut rng);
            let (dm, dv) = (z / v.sqrt(), (z * z - 1.0) / (2.0 * v));
            for j in 0..pm {
                s[j] += out.jac_mean[(d, j)] * dm;
            }
            for j in 0..pv {
                s[pm + j] += out.jac_var[(d, j)] * dv;
            }
        }
        for i in 0..pm + pv {
            for j in 0..pm + pv {
                f[(i, j)] += s[i] * s[j];
            }
        }
    }
    f.scale(1.0 / n as f64);
    f
}

#[test]
fn half_fisher_matches_sampled_score_covariance() {
    let p = small_policy(vec![3], 4);
    let out = p.evaluate(&state()).unwrap();
    let mut h = fisher_matrix(&out);
    h.scale(0.5);
    let mc = sampled_fisher(&out, 40_000);
    let num: f64 = h.as_slice().iter().zip(mc.as_slice()).map(|(a, b)| (a - b) * (a - b)).sum();
    let den: f64 = h.as_slice().iter().map(|a| a * a).sum();
    assert!((num / den).sqrt() < 0.05, "{}", (num / den).sqrt());
}

#[test]
fn pathwise_mean_gradient_is_exact_for_linear_rewards() {
    let p = small_policy(vec![4], 8);
    let out = p.evaluate(&state()).unwrap();
    let c: Vec<f64> = (0..out.mean.len()).map(|i| 0.3 * i as f64 - 0.7).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let samples: Vec<(ActionVector, AgentGradients)> = (0..20)
        .map(|_| {
            let a = smaspl_core::policy::sample_diag(&out.mean, &out.var, &mut rng);
            (a, AgentGradients { reward: c.clone(), rows: vec![], row_grads: Matrix::zeros(0, c.len()) })
        })
        .collect();
    let bundle = assemble_gradient_bundle(&out, &samples);
    let expected = out.jac_mean.tr_mul_vec(&c);
    for (g, e) in bundle.g.iter().zip(&expected) {
        assert!((g - e).abs() <= 1e-10 * (1.0 + e.abs()), "{g} vs {e}");
    }
    assert_eq!(bundle.samples, 20);
}

proptest! {
    #[test]
    fn factored_quadratic_form_matches_dense(seed in 0u64..200, v in prop::collection::vec(-1.0f64..1.0, 1..4)) {
        let p = small_policy(vec![2], seed);
        let out = p.evaluate(&state()).unwrap();
        let f = FisherFactor::new(&out, 1e-8);
        let dense = f.to_dense();
        let mut x = vec![0.0; f.dim()];
        for (i, vi) in v.iter().enumerate() {
            x[(i * 7 + seed as usize) % f.dim()] += vi;
        }
        let hx = dense.mul_vec(&x);
        let q: f64 = hx.iter().zip(&x).map(|(a, b)| a * b).sum();
        prop_assert!((f.quad(&x) - q).abs() <= 1e-9 * (1.0 + q.abs()));
        for (a, b) in f.apply(&x).iter().zip(&hx) {
            prop_assert!((a - b).abs() <= 1e-9 * (1.0 + b.abs()));
        }
    }
}
