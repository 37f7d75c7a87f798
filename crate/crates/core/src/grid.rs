//! Buses, branches and the bus admittance matrix.

use alloc::collections::BTreeSet;
use alloc::vec;
use alloc::vec::Vec;

#[allow(unused_imports)]
use num_traits::Float;
use thiserror::Error;

use crate::linalg::Matrix;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum GridError {
    #[error("bus ids must be 0..n in order; found id {found} at position {position}")]
    BusOrder { position: usize, found: usize },
    #[error("expected exactly one slack bus, found {0}")]
    SlackCount(usize),
    #[error("branch {branch} references unknown bus {bus}")]
    UnknownBus { branch: usize, bus: usize },
    #[error("branch {0} connects a bus to itself")]
    SelfLoop(usize),
    #[error("branch {0} has zero or non-finite impedance")]
    BadImpedance(usize),
    #[error("branch {0} has a non-positive current limit")]
    BadCurrentLimit(usize),
    #[error("bus {0} has inconsistent voltage limits")]
    BadVoltageLimits(usize),
    #[error("bus {bus} uses voltage zone {zone} but only {zones} base voltages are given")]
    UnknownZone { bus: usize, zone: usize, zones: usize },
    #[error("base quantities must be positive")]
    BadBase,
    #[error("network is disconnected; buses {isolated:?} are not reachable from bus 0")]
    Disconnected { isolated: Vec<usize> },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BusKind {
    Slack,
    Load,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Bus {
    pub id: usize,
    pub kind: BusKind,
    pub v_min: f64,
    pub v_max: f64,
    /// Index into the grid's base voltages.
    pub zone: usize,
    pub mg_owner: Option<usize>,
    /// Fixed background demand, kW.
    pub p_load_kw: f64,
    /// Fixed background demand, kvar.
    pub q_load_kvar: f64,
}

impl Bus {
    pub fn load(id: usize) -> Self {
        Self {
            id,
            kind: BusKind::Load,
            v_min: 0.95,
            v_max: 1.05,
            zone: 0,
            mg_owner: None,
            p_load_kw: 0.0,
            q_load_kvar: 0.0,
        }
    }

    pub fn slack(id: usize) -> Self {
        Self { kind: BusKind::Slack, ..Self::load(id) }
    }
}

/// Series branch in per unit. Current is oriented `from -> to`.
#[derive(Debug, Clone, PartialEq)]
pub struct Branch {
    pub from: usize,
    pub to: usize,
    pub y_re: f64,
    pub y_im: f64,
    /// Current limit in per unit.
    pub i_max: f64,
}

impl Branch {
    pub fn from_impedance(from: usize, to: usize, r: f64, x: f64, i_max: f64) -> Self {
        let d = r * r + x * x;
        Self { from, to, y_re: r / d, y_im: -x / d, i_max }
    }

    pub fn impedance(&self) -> (f64, f64) {
        let d = self.y_re * self.y_re + self.y_im * self.y_im;
        (self.y_re / d, -self.y_im / d)
    }
}

/// Builds the dense bus admittance matrix `Y = Y_re + j Y_im`.
pub fn build_admittance(n_bus: usize, branches: &[Branch]) -> Result<(Matrix, Matrix), GridError> {
    let mut y_re = Matrix::zeros(n_bus, n_bus);
    let mut y_im = Matrix::zeros(n_bus, n_bus);
    for (k, br) in branches.iter().enumerate() {
        for bus in [br.from, br.to] {
            if bus >= n_bus {
                return Err(GridError::UnknownBus { branch: k, bus });
            }
        }
        if br.from == br.to {
            return Err(GridError::SelfLoop(k));
        }
        if !(br.y_re.is_finite() && br.y_im.is_finite()) || (br.y_re == 0.0 && br.y_im == 0.0) {
            return Err(GridError::BadImpedance(k));
        }
        let (i, j) = (br.from, br.to);
        y_re[(i, i)] += br.y_re;
        y_re[(j, j)] += br.y_re;
        y_re[(i, j)] -= br.y_re;
        y_re[(j, i)] -= br.y_re;
        y_im[(i, i)] += br.y_im;
        y_im[(j, j)] += br.y_im;
        y_im[(i, j)] -= br.y_im;
        y_im[(j, i)] -= br.y_im;
    }
    let isolated = unreachable_from_first(n_bus, branches);
    if !isolated.is_empty() {
        return Err(GridError::Disconnected { isolated });
    }
    Ok((y_re, y_im))
}

fn unreachable_from_first(n_bus: usize, branches: &[Branch]) -> Vec<usize> {
    if n_bus == 0 {
        return Vec::new();
    }
    let mut adj = vec![Vec::new(); n_bus];
    for br in branches {
        adj[br.from].push(br.to);
        adj[br.to].push(br.from);
    }
    let mut seen = BTreeSet::from([0usize]);
    let mut stack = vec![0usize];
    while let Some(b) = stack.pop() {
        for &nb in &adj[b] {
            if seen.insert(nb) {
                stack.push(nb);
            }
        }
    }
    (0..n_bus).filter(|b| !seen.contains(b)).collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct GridModel {
    buses: Vec<Bus>,
    branches: Vec<Branch>,
    y_re: Matrix,
    y_im: Matrix,
    base_power_kva: f64,
    base_voltages_kv: Vec<f64>,
    slack: usize,
}

impl GridModel {
    pub fn new(
        buses: Vec<Bus>,
        branches: Vec<Branch>,
        base_power_kva: f64,
        base_voltages_kv: Vec<f64>,
    ) -> Result<Self, GridError> {
        if !(base_power_kva > 0.0) || base_voltages_kv.is_empty() || base_voltages_kv.iter().any(|v| !(*v > 0.0)) {
            return Err(GridError::BadBase);
        }
        for (position, bus) in buses.iter().enumerate() {
            if bus.id != position {
                return Err(GridError::BusOrder { position, found: bus.id });
            }
            if !(bus.v_min > 0.0 && bus.v_min < bus.v_max) {
                return Err(GridError::BadVoltageLimits(bus.id));
            }
            if bus.zone >= base_voltages_kv.len() {
                return Err(GridError::UnknownZone { bus: bus.id, zone: bus.zone, zones: base_voltages_kv.len() });
            }
        }
        let slacks: Vec<usize> = buses.iter().filter(|b| b.kind == BusKind::Slack).map(|b| b.id).collect();
        if slacks.len() != 1 {
            return Err(GridError::SlackCount(slacks.len()));
        }
        if let Some(k) = branches.iter().position(|b| !(b.i_max > 0.0)) {
            return Err(GridError::BadCurrentLimit(k));
        }
        let (y_re, y_im) = build_admittance(buses.len(), &branches)?;
        Ok(Self { slack: slacks[0], buses, branches, y_re, y_im, base_power_kva, base_voltages_kv })
    }

    pub fn buses(&self) -> &[Bus] {
        &self.buses
    }

    pub fn branches(&self) -> &[Branch] {
        &self.branches
    }

    pub fn n_bus(&self) -> usize {
        self.buses.len()
    }

    pub fn slack(&self) -> usize {
        self.slack
    }

    pub fn y_re(&self) -> &Matrix {
        &self.y_re
    }

    pub fn y_im(&self) -> &Matrix {
        &self.y_im
    }

    pub fn base_power_kva(&self) -> f64 {
        self.base_power_kva
    }

    pub fn base_voltages_kv(&self) -> &[f64] {
        &self.base_voltages_kv
    }

    /// Line-to-line base voltage gives `I_base = S_base / (sqrt(3) V_base)`, in amperes.
    pub fn base_current_amps(&self, zone: usize) -> f64 {
        self.base_power_kva / (3.0f64.sqrt() * self.base_voltages_kv[zone])
    }

    /// Same topology and limits with new branch impedances.
    pub fn with_branches(&self, branches: Vec<Branch>) -> Result<Self, GridError> {
        Self::new(self.buses.clone(), branches, self.base_power_kva, self.base_voltages_kv.clone())
    }

    pub fn background_load_pu(&self) -> (Vec<f64>, Vec<f64>) {
        let s = self.base_power_kva;
        (
            self.buses.iter().map(|b| b.p_load_kw / s).collect(),
            self.buses.iter().map(|b| b.q_load_kvar / s).collect(),
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn two_bus_admittance() {
        let br = Branch { from: 0, to: 1, y_re: 1.0, y_im: -2.0, i_max: 1.0 };
        let (yr, yi) = build_admittance(2, &[br]).unwrap();
        assert_eq!(yr, Matrix::from_rows(&[&[1.0, -1.0], &[-1.0, 1.0]]));
        assert_eq!(yi, Matrix::from_rows(&[&[-2.0, 2.0], &[2.0, -2.0]]));
    }

    #[test]
    fn single_bus_has_zero_admittance() {
        let (yr, yi) = build_admittance(1, &[]).unwrap();
        assert_eq!(yr, Matrix::zeros(1, 1));
        assert_eq!(yi, Matrix::zeros(1, 1));
    }

    #[test]
    fn disconnected_names_isolated_buses() {
        let br = Branch::from_impedance(0, 1, 0.1, 0.1, 1.0);
        let err = build_admittance(4, &[br]).unwrap_err();
        assert_eq!(err, GridError::Disconnected { isolated: vec![2, 3] });
    }

    #[test]
    fn rejects_two_slacks() {
        let buses = vec![Bus::slack(0), Bus::slack(1)];
        let br = vec![Branch::from_impedance(0, 1, 0.1, 0.1, 1.0)];
        assert_eq!(GridModel::new(buses, br, 100.0, vec![12.66]).unwrap_err(), GridError::SlackCount(2));
    }

    #[test]
    fn impedance_round_trip() {
        let br = Branch::from_impedance(0, 1, 0.3, 0.7, 1.0);
        let (r, x) = br.impedance();
        assert!((r - 0.3).abs() < 1e-15 && (x - 0.7).abs() < 1e-15);
    }
}
