//! Constraint rows expressed as discounted window returns `J = Σ γ^k C_k ≤ d`.

use alloc::vec::Vec;
use core::fmt;

#[allow(unused_imports)]
use num_traits::Float;

use crate::grid::{BusKind, GridModel};
use crate::mg::{discount_weights, soc_trajectory, ActionVector, Control, DomainError, MicrogridSpec, COMPLEMENTARITY_EPS};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum ConstraintKind {
    Voltage,
    BranchCurrent,
    DgP,
    DgQ,
    DgRamp,
    PvQ,
    PccP,
    PccQ,
    Soc,
    EssCh,
    EssDis,
    EssComplementarity,
    EssQ,
}

impl ConstraintKind {
    pub const ALL: [ConstraintKind; 13] = [
        ConstraintKind::Voltage,
        ConstraintKind::BranchCurrent,
        ConstraintKind::DgP,
        ConstraintKind::DgQ,
        ConstraintKind::DgRamp,
        ConstraintKind::PvQ,
        ConstraintKind::PccP,
        ConstraintKind::PccQ,
        ConstraintKind::Soc,
        ConstraintKind::EssCh,
        ConstraintKind::EssDis,
        ConstraintKind::EssComplementarity,
        ConstraintKind::EssQ,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ConstraintKind::Voltage => "voltage",
            ConstraintKind::BranchCurrent => "branch-current",
            ConstraintKind::DgP => "dg-p",
            ConstraintKind::DgQ => "dg-q",
            ConstraintKind::DgRamp => "dg-ramp",
            ConstraintKind::PvQ => "pv-q",
            ConstraintKind::PccP => "pcc-p",
            ConstraintKind::PccQ => "pcc-q",
            ConstraintKind::Soc => "soc",
            ConstraintKind::EssCh => "ess-ch",
            ConstraintKind::EssDis => "ess-dis",
            ConstraintKind::EssComplementarity => "ess-complementarity",
            ConstraintKind::EssQ => "ess-q",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|k| k.name() == s)
    }

    pub fn is_global(self) -> bool {
        matches!(self, ConstraintKind::Voltage | ConstraintKind::BranchCurrent)
    }
}

impl fmt::Display for ConstraintKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// `Upper` rows constrain `+x`, `Lower` rows constrain `-x`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Sense {
    Upper,
    Lower,
}

impl Sense {
    pub fn sign(self) -> f64 {
        match self {
            Sense::Upper => 1.0,
            Sense::Lower => -1.0,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Sense::Upper => "upper",
            Sense::Lower => "lower",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Scope {
    Global,
    Local(usize),
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConstraintRow {
    pub id: usize,
    pub kind: ConstraintKind,
    pub sense: Sense,
    pub scope: Scope,
    /// Bus for voltage rows, branch for current rows, microgrid otherwise.
    pub target: usize,
    /// Limit on the signed per-step quantity.
    pub step_bound: f64,
    /// Limit on the discounted return.
    pub bound: f64,
}

impl ConstraintRow {
    pub fn label(&self) -> alloc::string::String {
        alloc::format!("{}-{}@{}", self.kind, self.sense.name(), self.target)
    }
}

/// Selects rows to drop from training, e.g. for the unconstrained baseline.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RowFilter {
    pub kind: ConstraintKind,
    pub mg: Option<usize>,
}

impl RowFilter {
    pub fn matches(&self, row: &ConstraintRow) -> bool {
        row.kind == self.kind
            && match (self.mg, row.scope) {
                (None, _) => true,
                (Some(m), Scope::Local(n)) => m == n,
                (Some(_), Scope::Global) => false,
            }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConstraintTable {
    rows: Vec<ConstraintRow>,
    active: Vec<bool>,
    global: Vec<usize>,
    local: Vec<Vec<usize>>,
}

impl ConstraintTable {
    pub fn build(grid: &GridModel, specs: &[MicrogridSpec], steps: usize, gamma: f64) -> Self {
        let w: f64 = discount_weights(steps, gamma).iter().sum();
        let mut rows: Vec<ConstraintRow> = Vec::new();
        let mut push = |kind, sense, scope, target, step_bound: f64| {
            let id = rows.len();
            rows.push(ConstraintRow { id, kind, sense, scope, target, step_bound, bound: step_bound * w });
            id
        };
        let mut global = Vec::new();
        for bus in grid.buses().iter().filter(|b| b.kind != BusKind::Slack) {
            global.push(push(ConstraintKind::Voltage, Sense::Upper, Scope::Global, bus.id, bus.v_max));
            global.push(push(ConstraintKind::Voltage, Sense::Lower, Scope::Global, bus.id, -bus.v_min));
        }
        for (k, br) in grid.branches().iter().enumerate() {
            global.push(push(ConstraintKind::BranchCurrent, Sense::Upper, Scope::Global, k, br.i_max));
        }
        let mut local = Vec::new();
        for s in specs {
            let scope = Scope::Local(s.id);
            let limits = [
                (ConstraintKind::DgP, Some(0.0), s.dg.p_max_kw),
                (ConstraintKind::DgQ, Some(0.0), s.dg.q_max_kvar),
                (ConstraintKind::DgRamp, None, s.dg.ramp_kw),
                (ConstraintKind::PvQ, Some(-s.pv.q_max_kvar), s.pv.q_max_kvar),
                (ConstraintKind::PccP, Some(-s.pcc.p_max_kw), s.pcc.p_max_kw),
                (ConstraintKind::PccQ, Some(-s.pcc.q_max_kvar), s.pcc.q_max_kvar),
                (ConstraintKind::Soc, Some(s.ess.soc_min), s.ess.soc_max),
                (ConstraintKind::EssCh, Some(0.0), s.ess.p_ch_max_kw),
                (ConstraintKind::EssDis, Some(0.0), s.ess.p_dis_max_kw),
                (ConstraintKind::EssComplementarity, Some(-COMPLEMENTARITY_EPS), COMPLEMENTARITY_EPS),
                (ConstraintKind::EssQ, Some(-s.ess.q_max_kvar), s.ess.q_max_kvar),
            ];
            let mut ids = Vec::new();
            for (kind, lo, hi) in limits {
                ids.push(push(kind, Sense::Upper, scope, s.id, hi));
                if let Some(lo) = lo {
                    ids.push(push(kind, Sense::Lower, scope, s.id, -lo));
                }
            }
            local.push(ids);
        }
        let active = alloc::vec![true; rows.len()];
        Self { rows, active, global, local }
    }

    pub fn rows(&self) -> &[ConstraintRow] {
        &self.rows
    }

    pub fn row(&self, id: usize) -> Result<&ConstraintRow, DomainError> {
        self.rows.get(id).ok_or(DomainError::UnknownConstraint(id))
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    /// Ids of global rows; a row's position here is its multiplier index.
    pub fn global(&self) -> &[usize] {
        &self.global
    }

    pub fn local(&self, mg: usize) -> &[usize] {
        &self.local[mg]
    }

    pub fn is_active(&self, id: usize) -> bool {
        self.active[id]
    }

    pub fn deactivate(&mut self, filter: RowFilter) -> usize {
        let mut n = 0;
        for (row, a) in self.rows.iter().zip(self.active.iter_mut()) {
            if *a && filter.matches(row) {
                *a = false;
                n += 1;
            }
        }
        n
    }

    pub fn find(&self, kind: ConstraintKind, sense: Sense, target: usize) -> Option<&ConstraintRow> {
        self.rows.iter().find(|r| r.kind == kind && r.sense == sense && r.target == target)
    }
}

/// Network quantities observed in one dispatch step.
#[derive(Debug, Clone, PartialEq)]
pub struct StepObservation {
    pub v_mag: Vec<f64>,
    pub i_mag: Vec<f64>,
    /// Per microgrid, kW exported through the PCC.
    pub pcc_p_kw: Vec<f64>,
    pub pcc_q_kvar: Vec<f64>,
}

/// Per-step signed quantity `C_k` of every row, unweighted.
pub fn step_values(
    table: &ConstraintTable,
    observations: &[StepObservation],
    actions: &[ActionVector],
    specs: &[MicrogridSpec],
    prev_dg: &[f64],
) -> Vec<Vec<f64>> {
    let socs: Vec<Vec<f64>> = specs
        .iter()
        .zip(actions)
        .map(|(s, a)| soc_trajectory(&s.ess, a.series(Control::PCh), a.series(Control::PDis)))
        .collect();
    table
        .rows
        .iter()
        .map(|row| {
            let sign = row.sense.sign();
            observations
                .iter()
                .enumerate()
                .map(|(k, obs)| {
                    let m = row.target;
                    let a = |c| actions[m].get(k, c);
                    let x = match row.kind {
                        ConstraintKind::Voltage => obs.v_mag[m],
                        ConstraintKind::BranchCurrent => obs.i_mag[m],
                        ConstraintKind::DgP => a(Control::PDg),
                        ConstraintKind::DgQ => a(Control::QDg),
                        ConstraintKind::DgRamp => {
                            let prev = if k == 0 { prev_dg[m] } else { actions[m].get(k - 1, Control::PDg) };
                            (a(Control::PDg) - prev).abs()
                        }
                        ConstraintKind::PvQ => a(Control::QPv),
                        ConstraintKind::PccP => obs.pcc_p_kw[m],
                        ConstraintKind::PccQ => obs.pcc_q_kvar[m],
                        ConstraintKind::Soc => socs[m][k],
                        ConstraintKind::EssCh => a(Control::PCh),
                        ConstraintKind::EssDis => a(Control::PDis),
                        ConstraintKind::EssComplementarity => a(Control::PCh) * a(Control::PDis),
                        ConstraintKind::EssQ => a(Control::QEss),
                    };
                    sign * x
                })
                .collect()
        })
        .collect()
}

/// Discounted return of every row, indexed by row id.
pub fn constraint_returns(
    table: &ConstraintTable,
    observations: &[StepObservation],
    actions: &[ActionVector],
    specs: &[MicrogridSpec],
    prev_dg: &[f64],
    gamma: f64,
) -> Vec<f64> {
    let w = discount_weights(observations.len(), gamma);
    step_values(table, observations, actions, specs, prev_dg)
        .into_iter()
        .map(|c| c.iter().zip(&w).map(|(c, w)| c * w).sum())
        .collect()
}
