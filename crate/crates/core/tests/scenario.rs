use smaspl_core::networks::feeder98;
use smaspl_core::scenario::{forecast_with_error, perturbation_factors, synth_profiles, ForecastError, SynthParams};

const DAY: usize = 96;

#[test]
fn generator_is_seeded() {
    let p = SynthParams::default();
    assert_eq!(synth_profiles(5, 2, 3, &p), synth_profiles(5, 2, 3, &p));
    assert_ne!(synth_profiles(5, 2, 3, &p), synth_profiles(6, 2, 3, &p));
}

#[test]
fn nights_are_dark_and_days_stay_in_band() {
    let p = SynthParams::default();
    let s = synth_profiles(1, 3, 2, &p);
    let (lo, hi) = p.daily_energy_band();
    for mg in 0..2 {
        for day in 0..3 {
            let irr = &s.irradiance(mg)[day * DAY..(day + 1) * DAY];
            assert_eq!(irr[0], 0.0);
            assert_eq!(irr[DAY - 1], 0.0);
            assert!(irr[DAY / 2] > 0.0);
            let kwh: f64 = s.load_kw(mg)[day * DAY..(day + 1) * DAY].iter().map(|l| l * 0.25).sum();
            assert!(kwh >= lo && kwh <= hi, "{kwh} outside [{lo}, {hi}]");
        }
    }
}

#[test]
fn forecast_errors_are_unbiased() {
    let truth = synth_profiles(2, 1, 1, &SynthParams::default());
    let err = ForecastError::default();
    let k = 52; // 13:00
    let n = 4000;
    let (i0, l0) = (truth.irradiance(0)[k], truth.load_kw(0)[k]);
    let (mut si, mut sl) = (0.0, 0.0);
    for seed in 0..n {
        let f = &forecast_with_error(&truth, k, 1, &err, seed)[0];
        si += f.irradiance(0) - i0;
        sl += f.load_kw(0) - l0;
    }
    let (mi, ml) = (si / n as f64, sl / n as f64);
    // Beta(2, 2) has variance 1/20
    let se_i = err.irradiance_scale * (0.05f64).sqrt() / (n as f64).sqrt();
    let se_l = err.load_sigma * l0 / (n as f64).sqrt();
    assert!(mi.abs() <= 3.0 * se_i, "{mi} vs {se_i}");
    assert!(ml.abs() <= 3.0 * se_l, "{ml} vs {se_l}");
}

#[test]
fn zero_error_forecast_is_the_truth() {
    let truth = synth_profiles(3, 1, 2, &SynthParams::default());
    let none = ForecastError { irradiance_scale: 0.0, load_sigma: 0.0, ..ForecastError::default() };
    let f = forecast_with_error(&truth, 40, 4, &none, 9);
    for mg in 0..2 {
        for k in 0..4 {
            assert_eq!(f[mg].irradiance(k), truth.irradiance(mg)[40 + k]);
            assert_eq!(f[mg].load_kw(k), truth.load_kw(mg)[40 + k]);
        }
    }
}

#[test]
fn network_noise_has_the_requested_variance() {
    let sys = feeder98((0.01, 0.02)).unwrap();
    let factors: Vec<f64> = (0..10).flat_map(|s| perturbation_factors(&sys.grid, 0.1, s).unwrap()).collect();
    let n = factors.len() as f64;
    let mean = factors.iter().sum::<f64>() / n;
    let var = factors.iter().map(|f| (f - 1.0) * (f - 1.0)).sum::<f64>() / n;
    assert!((mean - 1.0).abs() < 0.03, "{mean}");
    assert!((var - 0.1).abs() < 0.015, "{var}");
    assert!(factors.iter().all(|f| *f > 0.0));
}
