//! Demand and irradiance series, forecasts with sampled errors, and noisy
//! copies of the network. Everything here is a pure function of its seed.

use alloc::vec::Vec;
use core::f64::consts::PI;

#[allow(unused_imports)]
use num_traits::Float;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Beta, Distribution, Normal, StandardNormal};
use thiserror::Error;

use crate::env::Window;
use crate::exec::stream_seed;
use crate::grid::{Branch, GridError, GridModel};
use crate::mg::StateVector;

pub const STEP_MINUTES: i64 = 15;
pub const STEPS_PER_DAY: usize = 96;
pub const IRRADIANCE_MAX: f64 = 1.2;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ProfileError {
    #[error("series is empty")]
    Empty,
    #[error("row {index}: expected a {STEP_MINUTES}-minute step, found {minutes} minutes")]
    Gap { index: usize, minutes: i64 },
    #[error("row {index}: microgrid {mg} load {value} kW is negative")]
    NegativeLoad { index: usize, mg: usize, value: f64 },
    #[error("row {index}: microgrid {mg} irradiance {value} outside [0, {IRRADIANCE_MAX}]")]
    Irradiance { index: usize, mg: usize, value: f64 },
    #[error("column lengths disagree")]
    Ragged,
}

/// Uniform 15-minute series; `time` holds minutes since the Unix epoch.
#[derive(Debug, Clone, PartialEq)]
pub struct ProfileSeries {
    time: Vec<i64>,
    load_kw: Vec<Vec<f64>>,
    irradiance: Vec<Vec<f64>>,
}

impl ProfileSeries {
    pub fn new(time: Vec<i64>, load_kw: Vec<Vec<f64>>, irradiance: Vec<Vec<f64>>) -> Result<Self, ProfileError> {
        if time.is_empty() || load_kw.is_empty() {
            return Err(ProfileError::Empty);
        }
        let n = time.len();
        if load_kw.len() != irradiance.len() || load_kw.iter().chain(&irradiance).any(|c| c.len() != n) {
            return Err(ProfileError::Ragged);
        }
        if let Some(index) = time.windows(2).position(|w| w[1] - w[0] != STEP_MINUTES) {
            return Err(ProfileError::Gap { index: index + 1, minutes: time[index + 1] - time[index] });
        }
        for (mg, (load, irr)) in load_kw.iter().zip(&irradiance).enumerate() {
            if let Some(index) = load.iter().position(|v| !(*v >= 0.0)) {
                return Err(ProfileError::NegativeLoad { index, mg, value: load[index] });
            }
            if let Some(index) = irr.iter().position(|v| !(0.0..=IRRADIANCE_MAX).contains(v)) {
                return Err(ProfileError::Irradiance { index, mg, value: irr[index] });
            }
        }
        Ok(Self { time, load_kw, irradiance })
    }

    pub fn len(&self) -> usize {
        self.time.len()
    }

    pub fn is_empty(&self) -> bool {
        self.time.is_empty()
    }

    pub fn mg_count(&self) -> usize {
        self.load_kw.len()
    }

    pub fn time(&self) -> &[i64] {
        &self.time
    }

    pub fn load_kw(&self, mg: usize) -> &[f64] {
        &self.load_kw[mg]
    }

    pub fn irradiance(&self, mg: usize) -> &[f64] {
        &self.irradiance[mg]
    }

    /// Steps `start..start + steps`, wrapping around the end of the series.
    pub fn window(&self, start: usize, steps: usize) -> Window {
        let pick = |col: &Vec<f64>| (0..steps).map(|k| col[(start + k) % self.len()]).collect();
        Window { load_kw: self.load_kw.iter().map(pick).collect(), irradiance: self.irradiance.iter().map(pick).collect() }
    }

    /// Largest load of each microgrid, used to scale policy inputs.
    pub fn peak_load_kw(&self) -> Vec<f64> {
        self.load_kw.iter().map(|l| l.iter().copied().fold(0.0, f64::max)).collect()
    }
}

/// Shape parameters of the synthetic generator.
#[derive(Debug, Clone, PartialEq)]
pub struct SynthParams {
    /// Mean demand of a microgrid of unit scale, kW.
    pub base_load_kw: f64,
    /// Per-microgrid scale drawn from this range.
    pub mg_scale: (f64, f64),
    /// Relative per-step load noise, uniform in `±load_noise`.
    pub load_noise: f64,
    /// Daily clear-sky factor range.
    pub clear_sky: (f64, f64),
    pub sunrise_hour: f64,
    pub sunset_hour: f64,
    /// First day at 00:00, minutes since the epoch.
    pub start_minutes: i64,
}

impl Default for SynthParams {
    fn default() -> Self {
        Self {
            base_load_kw: 40.0,
            mg_scale: (0.8, 1.2),
            load_noise: 0.03,
            clear_sky: (0.6, 1.1),
            sunrise_hour: 6.0,
            sunset_hour: 18.0,
            start_minutes: 28_401_120, // 2024-01-01T00:00
        }
    }
}

/// Daily load shape, mean 1 over the day: a morning shoulder and an
/// evening peak on a flat base.
pub fn load_shape(hour: f64) -> f64 {
    let bump = |c: f64, w: f64| (-(hour - c) * (hour - c) / (2.0 * w * w)).exp();
    (0.6 + 0.25 * bump(8.0, 1.5) + 0.6 * bump(19.0, 1.5)) / LOAD_SHAPE_MEAN
}

/// Mean of the unnormalised shape over 96 quarter-hour samples.
const LOAD_SHAPE_MEAN: f64 = 0.733_111_099_467_435_6;

impl SynthParams {
    /// Bounds on any microgrid's daily energy, kWh.
    pub fn daily_energy_band(&self) -> (f64, f64) {
        let e = self.base_load_kw * 24.0;
        (e * self.mg_scale.0 * (1.0 - self.load_noise), e * self.mg_scale.1 * (1.0 + self.load_noise))
    }

    fn irradiance(&self, hour: f64, clear: f64) -> f64 {
        if hour <= self.sunrise_hour || hour >= self.sunset_hour {
            return 0.0;
        }
        let x = (hour - self.sunrise_hour) / (self.sunset_hour - self.sunrise_hour);
        (clear * (PI * x).sin().powf(1.5)).clamp(0.0, IRRADIANCE_MAX)
    }
}

pub fn synth_profiles(seed: u64, days: usize, mg_count: usize, params: &SynthParams) -> ProfileSeries {
    let n = days * STEPS_PER_DAY;
    let time = (0..n as i64).map(|k| params.start_minutes + k * STEP_MINUTES).collect();
    let mut load_kw = Vec::with_capacity(mg_count);
    let mut irradiance = Vec::with_capacity(mg_count);
    for mg in 0..mg_count {
        let mut rng = ChaCha8Rng::seed_from_u64(stream_seed(seed, &[mg as u64]));
        let scale = rng.random_range(params.mg_scale.0..=params.mg_scale.1);
        let mut load = Vec::with_capacity(n);
        let mut irr = Vec::with_capacity(n);
        for _ in 0..days {
            let clear = rng.random_range(params.clear_sky.0..=params.clear_sky.1);
            for k in 0..STEPS_PER_DAY {
                let hour = k as f64 * STEP_MINUTES as f64 / 60.0;
                let noise = rng.random_range(-params.load_noise..=params.load_noise);
                load.push(params.base_load_kw * scale * load_shape(hour) * (1.0 + noise));
                irr.push(params.irradiance(hour, clear));
            }
        }
        load_kw.push(load);
        irradiance.push(irr);
    }
    ProfileSeries::new(time, load_kw, irradiance).expect("generator output is valid")
}

/// Zero-mean forecast errors: a recentred `Beta(a, b)` scaled by
/// `irradiance_scale` for irradiance, relative Gaussian noise for load.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ForecastError {
    pub beta_a: f64,
    pub beta_b: f64,
    pub irradiance_scale: f64,
    pub load_sigma: f64,
}

impl Default for ForecastError {
    fn default() -> Self {
        Self { beta_a: 2.0, beta_b: 2.0, irradiance_scale: 0.2, load_sigma: 0.02 }
    }
}

/// Forecast states for the window `start..start + steps`, one per
/// microgrid. Night steps stay dark.
pub fn forecast_with_error(
    truth: &ProfileSeries,
    start: usize,
    steps: usize,
    err: &ForecastError,
    seed: u64,
) -> Vec<StateVector> {
    let window = truth.window(start, steps);
    let beta = Beta::new(err.beta_a, err.beta_b).expect("positive beta parameters");
    let beta_mean = err.beta_a / (err.beta_a + err.beta_b);
    (0..truth.mg_count())
        .map(|mg| {
            let mut rng = ChaCha8Rng::seed_from_u64(stream_seed(seed, &[mg as u64]));
            let mut irr = Vec::with_capacity(steps);
            let mut load = Vec::with_capacity(steps);
            for k in 0..steps {
                let e_irr = err.irradiance_scale * (beta.sample(&mut rng) - beta_mean);
                let z: f64 = StandardNormal.sample(&mut rng);
                let i = window.irradiance[mg][k];
                irr.push(if i > 0.0 { (i + e_irr).clamp(0.0, IRRADIANCE_MAX) } else { 0.0 });
                load.push((window.load_kw[mg][k] * (1.0 + err.load_sigma * z)).max(0.0));
            }
            StateVector::from_series(&irr, &load)
        })
        .collect()
}

/// Multiplies each branch's r and x by `1 + e`, `e ~ N(0, variance)`,
/// redrawing any factor that would make them non-positive.
pub fn perturb_network(grid: &GridModel, variance: f64, seed: u64) -> Result<GridModel, GridError> {
    if variance <= 0.0 {
        return Ok(grid.clone());
    }
    let normal = Normal::new(0.0, variance.sqrt()).expect("finite variance");
    let mut rng = ChaCha8Rng::seed_from_u64(stream_seed(seed, &[0x6e_6f69_7365]));
    let mut factor = || loop {
        let f = 1.0 + normal.sample(&mut rng);
        if f > 0.0 {
            break f;
        }
    };
    let branches = grid
        .branches()
        .iter()
        .map(|b| {
            let (r, x) = b.impedance();
            Branch::from_impedance(b.from, b.to, r * factor(), x * factor(), b.i_max)
        })
        .collect();
    grid.with_branches(branches)
}

/// Every factor drawn by `perturb_network`, for moment checks.
pub fn perturbation_factors(grid: &GridModel, variance: f64, seed: u64) -> Result<Vec<f64>, GridError> {
    let noisy = perturb_network(grid, variance, seed)?;
    Ok(grid
        .branches()
        .iter()
        .zip(noisy.branches())
        .flat_map(|(a, b)| {
            let ((r0, x0), (r1, x1)) = (a.impedance(), b.impedance());
            [r1 / r0, x1 / x0]
        })
        .collect())
}

/// Start step of episode `t` when windows advance by `stride` steps.
pub fn episode_start(t: usize, stride: usize, len: usize) -> usize {
    (t * stride) % len.max(1)
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    #[test]
    fn load_shape_has_unit_mean() {
        let m: f64 = (0..STEPS_PER_DAY).map(|k| load_shape(k as f64 / 4.0)).sum::<f64>() / STEPS_PER_DAY as f64;
        assert!((m - 1.0).abs() < 1e-12, "{m}");
    }

    #[test]
    fn gap_is_reported() {
        let err = ProfileSeries::new(vec![0, 15, 45], vec![vec![1.0; 3]], vec![vec![0.0; 3]]).unwrap_err();
        assert_eq!(err, ProfileError::Gap { index: 2, minutes: 30 });
    }

    #[test]
    fn window_wraps() {
        let s = ProfileSeries::new(vec![0, 15, 30], vec![vec![1.0, 2.0, 3.0]], vec![vec![0.0; 3]]).unwrap();
        assert_eq!(s.window(2, 2).load_kw[0], vec![3.0, 1.0]);
    }
}
