//! Microgrid devices, action and state layouts, fuel cost, reward and SOC.

use alloc::vec;
use alloc::vec::Vec;
use core::fmt;

#[allow(unused_imports)]
use num_traits::Float;
use thiserror::Error;

use crate::grid::GridModel;

/// Dispatch interval in hours.
pub const DT_HOURS: f64 = 0.25;
/// Slack allowed on the charge/discharge product.
pub const COMPLEMENTARITY_EPS: f64 = 1e-3;
pub const CONTROLS_PER_STEP: usize = 6;
pub const STATES_PER_STEP: usize = 2;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum DomainError {
    #[error("DG output must be non-negative, got {0}")]
    NegativeDgOutput(f64),
    #[error("microgrid {mg}: {what}")]
    Invalid { mg: usize, what: &'static str },
    #[error("microgrid {mg}: bus {bus} is not part of the grid or not owned by it")]
    ForeignBus { mg: usize, bus: usize },
    #[error("microgrid {mg}: PCC branch {branch} must leave the microgrid from its `from` bus")]
    BadPcc { mg: usize, branch: usize },
    #[error("action vector has {got} entries, expected {expected}")]
    ActionLength { expected: usize, got: usize },
    #[error("unknown constraint id {0}")]
    UnknownConstraint(usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Control {
    PDg,
    PCh,
    PDis,
    QDg,
    QPv,
    QEss,
}

impl Control {
    pub const ALL: [Control; CONTROLS_PER_STEP] =
        [Control::PDg, Control::PCh, Control::PDis, Control::QDg, Control::QPv, Control::QEss];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn name(self) -> &'static str {
        match self {
            Control::PDg => "p_dg",
            Control::PCh => "p_ch",
            Control::PDis => "p_dis",
            Control::QDg => "q_dg",
            Control::QPv => "q_pv",
            Control::QEss => "q_ess",
        }
    }
}

impl fmt::Display for Control {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DgSpec {
    pub p_max_kw: f64,
    pub q_max_kvar: f64,
    pub ramp_kw: f64,
    /// Price per unit of fuel.
    pub fuel_price: f64,
    pub a: f64,
    pub b: f64,
    pub c: f64,
}

impl DgSpec {
    /// Quadratic fuel curve `a p^2 + b p + c`.
    pub fn fuel_consumption(&self, p_kw: f64) -> Result<f64, DomainError> {
        if p_kw < 0.0 {
            return Err(DomainError::NegativeDgOutput(p_kw));
        }
        Ok(self.a * p_kw * p_kw + self.b * p_kw + self.c)
    }

    /// Fuel burnt per hour; zero while the unit is off.
    pub fn fuel_rate(&self, p_kw: f64) -> f64 {
        if p_kw > 0.0 {
            self.a * p_kw * p_kw + self.b * p_kw + self.c
        } else {
            0.0
        }
    }

    pub fn fuel_rate_slope(&self, p_kw: f64) -> f64 {
        if p_kw > 0.0 {
            2.0 * self.a * p_kw + self.b
        } else {
            0.0
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EssSpec {
    pub capacity_kwh: f64,
    pub p_ch_max_kw: f64,
    pub p_dis_max_kw: f64,
    pub eta_ch: f64,
    pub eta_dis: f64,
    pub soc_min: f64,
    pub soc_max: f64,
    pub soc_init: f64,
    pub q_max_kvar: f64,
}

impl EssSpec {
    /// SOC change per kWh-hour of charge and discharge power.
    pub fn soc_coefficients(&self) -> (f64, f64) {
        (DT_HOURS * self.eta_ch / self.capacity_kwh, -DT_HOURS / (self.eta_dis * self.capacity_kwh))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PvSpec {
    pub rating_kw: f64,
    pub q_max_kvar: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PccSpec {
    pub p_max_kw: f64,
    pub q_max_kvar: f64,
    /// Price paid for exported energy (and charged for imports).
    pub price: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BusMap {
    pub dg: usize,
    pub ess: usize,
    pub pv: usize,
    /// Buses carrying the aggregate load and their shares (summing to 1).
    pub loads: Vec<(usize, f64)>,
    /// Branches whose `from` bus sits inside the microgrid.
    pub pcc_branches: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MicrogridSpec {
    pub id: usize,
    pub dg: DgSpec,
    pub ess: EssSpec,
    pub pv: PvSpec,
    pub pcc: PccSpec,
    pub buses: BusMap,
    pub load_power_factor: f64,
    /// Ratio of the policy action box to the device limits.
    pub action_headroom: f64,
}

impl MicrogridSpec {
    pub fn validate(&self, grid: &GridModel) -> Result<(), DomainError> {
        let mg = self.id;
        let invalid = |what| Err(DomainError::Invalid { mg, what });
        let positive = [
            self.dg.p_max_kw,
            self.dg.q_max_kvar,
            self.dg.ramp_kw,
            self.ess.capacity_kwh,
            self.ess.p_ch_max_kw,
            self.ess.p_dis_max_kw,
            self.ess.q_max_kvar,
            self.pv.rating_kw,
            self.pv.q_max_kvar,
            self.pcc.p_max_kw,
            self.pcc.q_max_kvar,
        ];
        if positive.iter().any(|v| !(*v > 0.0 && v.is_finite())) {
            return invalid("device limits must be positive");
        }
        if [self.dg.a, self.dg.b, self.dg.c, self.dg.fuel_price, self.pcc.price].iter().any(|v| !(*v >= 0.0)) {
            return invalid("cost coefficients must be non-negative");
        }
        let e = &self.ess;
        if !(e.eta_ch > 0.0 && e.eta_ch <= 1.0 && e.eta_dis > 0.0 && e.eta_dis <= 1.0) {
            return invalid("ESS efficiencies must lie in (0, 1]");
        }
        if !(0.0 <= e.soc_min && e.soc_min < e.soc_max && e.soc_max <= 1.0) {
            return invalid("SOC limits must satisfy 0 <= min < max <= 1");
        }
        if !(e.soc_min..=e.soc_max).contains(&e.soc_init) {
            return invalid("initial SOC outside its limits");
        }
        if !(self.load_power_factor > 0.0 && self.load_power_factor <= 1.0) {
            return invalid("load power factor must lie in (0, 1]");
        }
        if !(self.action_headroom >= 1.0) {
            return invalid("action headroom must be at least 1");
        }
        if self.buses.loads.is_empty() {
            return invalid("at least one load bus is required");
        }
        let share: f64 = self.buses.loads.iter().map(|(_, s)| s).sum();
        if (share - 1.0).abs() > 1e-9 || self.buses.loads.iter().any(|(_, s)| *s < 0.0) {
            return invalid("load shares must be non-negative and sum to 1");
        }
        let owned = |bus: usize| grid.buses().get(bus).is_some_and(|b| b.mg_owner == Some(mg));
        let devices = [self.buses.dg, self.buses.ess, self.buses.pv];
        for bus in devices.into_iter().chain(self.buses.loads.iter().map(|(b, _)| *b)) {
            if !owned(bus) {
                return Err(DomainError::ForeignBus { mg, bus });
            }
        }
        if self.buses.pcc_branches.is_empty() {
            return invalid("at least one PCC branch is required");
        }
        for &branch in &self.buses.pcc_branches {
            match grid.branches().get(branch) {
                Some(br) if owned(br.from) && !owned(br.to) => {}
                _ => return Err(DomainError::BadPcc { mg, branch }),
            }
        }
        Ok(())
    }

    pub fn limit(&self, control: Control) -> (f64, f64) {
        match control {
            Control::PDg => (0.0, self.dg.p_max_kw),
            Control::PCh => (0.0, self.ess.p_ch_max_kw),
            Control::PDis => (0.0, self.ess.p_dis_max_kw),
            Control::QDg => (0.0, self.dg.q_max_kvar),
            Control::QPv => (-self.pv.q_max_kvar, self.pv.q_max_kvar),
            Control::QEss => (-self.ess.q_max_kvar, self.ess.q_max_kvar),
        }
    }

    /// Range the policy mean can reach: the device range widened about its
    /// centre by the headroom factor, so both limits are interior.
    pub fn action_box(&self, control: Control) -> (f64, f64) {
        let (lo, hi) = self.limit(control);
        let (mid, half) = (0.5 * (lo + hi), 0.5 * (hi - lo) * self.action_headroom);
        (mid - half, mid + half)
    }

    pub fn bus_of(&self, control: Control) -> usize {
        match control {
            Control::PDg | Control::QDg => self.buses.dg,
            Control::PCh | Control::PDis | Control::QEss => self.buses.ess,
            Control::QPv => self.buses.pv,
        }
    }

    pub fn reactive_ratio(&self) -> f64 {
        let pf = self.load_power_factor;
        (1.0 - pf * pf).sqrt() / pf
    }
}

/// Flattened `6 T` dispatch decisions, step-major.
#[derive(Debug, Clone, PartialEq)]
pub struct ActionVector(Vec<f64>);

impl ActionVector {
    pub fn zeros(steps: usize) -> Self {
        Self(vec![0.0; steps * CONTROLS_PER_STEP])
    }

    pub fn new(values: Vec<f64>) -> Result<Self, DomainError> {
        if values.is_empty() || values.len() % CONTROLS_PER_STEP != 0 {
            let expected = values.len().div_ceil(CONTROLS_PER_STEP).max(1) * CONTROLS_PER_STEP;
            return Err(DomainError::ActionLength { expected, got: values.len() });
        }
        Ok(Self(values))
    }

    pub fn steps(&self) -> usize {
        self.0.len() / CONTROLS_PER_STEP
    }

    pub fn get(&self, step: usize, control: Control) -> f64 {
        self.0[index(step, control)]
    }

    pub fn set(&mut self, step: usize, control: Control, value: f64) {
        self.0[index(step, control)] = value;
    }

    pub fn series(&self, control: Control) -> impl Iterator<Item = f64> + '_ {
        (0..self.steps()).map(move |k| self.get(k, control))
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }
}

pub fn index(step: usize, control: Control) -> usize {
    step * CONTROLS_PER_STEP + control.index()
}

/// Flattened `2 T` forecasts, `[irradiance_k, load_kw_k]` per step.
#[derive(Debug, Clone, PartialEq)]
pub struct StateVector(Vec<f64>);

impl StateVector {
    pub fn from_series(irradiance: &[f64], load_kw: &[f64]) -> Self {
        assert_eq!(irradiance.len(), load_kw.len());
        Self(irradiance.iter().zip(load_kw).flat_map(|(i, l)| [*i, *l]).collect())
    }

    pub fn steps(&self) -> usize {
        self.0.len() / STATES_PER_STEP
    }

    pub fn irradiance(&self, step: usize) -> f64 {
        self.0[STATES_PER_STEP * step]
    }

    pub fn load_kw(&self, step: usize) -> f64 {
        self.0[STATES_PER_STEP * step + 1]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }
}

/// `γ^k` for `k = 0..steps`.
pub fn discount_weights(steps: usize, gamma: f64) -> Vec<f64> {
    core::iter::successors(Some(1.0), |w| Some(w * gamma)).take(steps).collect()
}

/// Discounted revenue from PCC export minus fuel cost.
pub fn reward_return(spec: &MicrogridSpec, actions: &ActionVector, pcc_kw: &[f64], gamma: f64) -> f64 {
    discount_weights(actions.steps(), gamma)
        .iter()
        .enumerate()
        .map(|(k, w)| w * stage_reward(spec, actions.get(k, Control::PDg), pcc_kw[k]))
        .sum()
}

pub fn stage_reward(spec: &MicrogridSpec, p_dg: f64, pcc_kw: f64) -> f64 {
    (spec.pcc.price * pcc_kw - spec.dg.fuel_price * spec.dg.fuel_rate(p_dg)) * DT_HOURS
}

/// State of charge at the end of each step.
pub fn soc_trajectory(ess: &EssSpec, p_ch: impl IntoIterator<Item = f64>, p_dis: impl IntoIterator<Item = f64>) -> Vec<f64> {
    let (kc, kd) = ess.soc_coefficients();
    p_ch.into_iter()
        .zip(p_dis)
        .scan(ess.soc_init, |soc, (c, d)| {
            *soc += kc * c + kd * d;
            Some(*soc)
        })
        .collect()
}

/// Net bus load (kW, kvar) for one step: background plus every microgrid's
/// demand minus its generation.
pub fn actions_to_injections(
    grid: &GridModel,
    specs: &[MicrogridSpec],
    actions: &[ActionVector],
    load_kw: &[f64],
    irradiance: &[f64],
    step: usize,
) -> (Vec<f64>, Vec<f64>) {
    let mut p: Vec<f64> = grid.buses().iter().map(|b| b.p_load_kw).collect();
    let mut q: Vec<f64> = grid.buses().iter().map(|b| b.q_load_kvar).collect();
    for ((spec, a), (&load, &irr)) in specs.iter().zip(actions).zip(load_kw.iter().zip(irradiance)) {
        let tan = spec.reactive_ratio();
        for &(bus, share) in &spec.buses.loads {
            p[bus] += share * load;
            q[bus] += share * load * tan;
        }
        let b = &spec.buses;
        p[b.dg] -= a.get(step, Control::PDg);
        q[b.dg] -= a.get(step, Control::QDg);
        p[b.pv] -= irr * spec.pv.rating_kw;
        q[b.pv] -= a.get(step, Control::QPv);
        p[b.ess] += a.get(step, Control::PCh) - a.get(step, Control::PDis);
        q[b.ess] += a.get(step, Control::QEss);
    }
    (p, q)
}
