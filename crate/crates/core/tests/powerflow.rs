use proptest::prelude::*;
use smaspl_core::grid::{Branch, Bus, GridModel};
use smaspl_core::networks::feeder98;
use smaspl_core::powerflow::{solve_power_flow, solve_power_flow_pu, PowerFlowOptions};

/// Receiving-end voltage of a two-bus system from the quartic in |V₂|:
/// `v⁴ + (2(PR + QX) - 1) v² + |z|²|S|² = 0`, taking the high-voltage root.
fn two_bus_oracle(r: f64, x: f64, p: f64, q: f64) -> (f64, f64) {
    let b = 2.0 * (p * r + q * x) - 1.0;
    let c = (r * r + x * x) * (p * p + q * q);
    let f = |u: f64| u * u + b * u + c;
    let (mut lo, mut hi) = (-b / 2.0, 1.0);
    assert!(f(lo) <= 0.0 && f(hi) >= 0.0);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if f(mid) > 0.0 {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    let v2 = 0.5 * (lo + hi);
    // V₁ = V₂ + z conj(S / V₂) with V₁ = 1∠0; rotate so that V₁ is real.
    let vm = v2.sqrt();
    let (ir, ii) = (p / vm, -q / vm);
    let (v1r, v1i) = (vm + r * ir - x * ii, r * ii + x * ir);
    let ang = -v1i.atan2(v1r);
    (vm * ang.cos(), vm * ang.sin())
}

fn two_bus(r: f64, x: f64) -> GridModel {
    GridModel::new(vec![Bus::slack(0), Bus::load(1)], vec![Branch::from_impedance(0, 1, r, x, 10.0)], 100.0, vec![12.66])
        .unwrap()
}

#[test]
fn two_bus_matches_scalar_oracle() {
    let g = two_bus(0.01, 0.01);
    let sol = solve_power_flow_pu(&g, vec![0.0, 0.5], vec![0.0, 0.2], &PowerFlowOptions::default()).unwrap();
    let (vr, vi) = two_bus_oracle(0.01, 0.01, 0.5, 0.2);
    assert!((sol.v_re[1] - vr).abs() <= 1e-8, "{} vs {}", sol.v_re[1], vr);
    assert!((sol.v_im[1] - vi).abs() <= 1e-8, "{} vs {}", sol.v_im[1], vi);
}

#[test]
fn feeder98_converges_to_tolerance() {
    let sys = feeder98((0.01, 0.02)).unwrap();
    let p: Vec<f64> = sys.grid.buses().iter().map(|b| b.p_load_kw).collect();
    let q: Vec<f64> = sys.grid.buses().iter().map(|b| b.q_load_kvar).collect();
    let sol = solve_power_flow(&sys.grid, &p, &q, &PowerFlowOptions::default()).unwrap();
    assert!(sol.mismatch <= 1e-8);
    assert!(sol.iterations <= 10);
    let vmin = sol.voltage_magnitudes().into_iter().fold(f64::INFINITY, f64::min);
    assert!(vmin > 0.88 && vmin < 0.95, "{vmin}");
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]
    #[test]
    fn slack_supplies_load_plus_losses(p in 0.0..0.8f64, q in -0.3..0.4f64, r in 0.001..0.05f64, x in 0.001..0.05f64) {
        let g = two_bus(r, x);
        let sol = solve_power_flow_pu(&g, vec![0.0, p], vec![0.0, q], &PowerFlowOptions::default()).unwrap();
        let (ir, ii) = sol.injection_currents(&g);
        let p_slack = sol.v_re[0] * ir[0] + sol.v_im[0] * ii[0];
        let loss = p_slack - p;
        prop_assert!(loss >= -1e-10);
        let (bi_r, bi_i) = sol.branch_currents(&g);
        let expected = r * (bi_r[0] * bi_r[0] + bi_i[0] * bi_i[0]);
        // mismatch tolerance bounds the accuracy of the computed loss
        prop_assert!((loss - expected).abs() <= 1e-7);
    }
}
