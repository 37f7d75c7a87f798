//! Finite-difference audit of every analytic derivative family.
//!
//! Power-flow families are checked against full re-solves on random
//! networks of at most five buses. The density, network and policy
//! families use random dense instances.

use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use smaspl_core::exec::stream_seed;
use smaspl_core::gaussian;
use smaspl_core::grid::{Branch, Bus, GridModel};
use smaspl_core::linalg::Matrix;
use smaspl_core::mg::{actions_to_injections, ActionVector, BusMap, Control, MicrogridSpec, StateVector, CONTROLS_PER_STEP};
use smaspl_core::net::FeedforwardNet;
use smaspl_core::networks::{default_microgrid, BASE_POWER_KVA, HOST_KV};
use smaspl_core::policy::{GaussianPolicy, PolicyConfig};
use smaspl_core::powerflow::{branch_current_magnitudes, solve_power_flow, PowerFlowOptions, PowerFlowSolution};
use smaspl_core::sensitivity::{injection_jacobian, pcc_power, step_sensitivities_with, InjectionJacobian};

use crate::error::RunError;

pub const POWER_FLOW_TOLERANCE: f64 = 1e-4;
pub const INJECTION_TOLERANCE: f64 = 1e-8;
pub const DENSE_TOLERANCE: f64 = 1e-5;

const SOLVE: PowerFlowOptions = PowerFlowOptions { tolerance: 1e-11, max_iterations: 50 };

/// A planted sign error in one column of the injection Jacobian.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Mutation {
    pub part: Part,
    pub control: ControlName,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Part {
    Re,
    Im,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ControlName {
    PDg,
    PCh,
    PDis,
    QDg,
    QPv,
    QEss,
}

impl ControlName {
    fn control(self) -> Control {
        match self {
            ControlName::PDg => Control::PDg,
            ControlName::PCh => Control::PCh,
            ControlName::PDis => Control::PDis,
            ControlName::QDg => Control::QDg,
            ControlName::QPv => Control::QPv,
            ControlName::QEss => Control::QEss,
        }
    }
}

impl Mutation {
    pub fn load(path: &Path) -> Result<Self, RunError> {
        let text = std::fs::read_to_string(path).map_err(RunError::io(path))?;
        toml::from_str(&text).map_err(|e| RunError::Usage(format!("{}: {e}", path.display())))
    }

    fn apply(&self, jac: &mut InjectionJacobian) {
        let c = self.control.control().index();
        let rows = match self.part {
            Part::Re => &mut jac.re,
            Part::Im => &mut jac.im,
        };
        rows.iter_mut().for_each(|r| r[c] = -r[c]);
    }
}

#[derive(Debug, Clone)]
pub struct AuditOptions {
    pub trials: usize,
    pub seed: u64,
    pub mutation: Option<Mutation>,
    pub dump: bool,
}

impl Default for AuditOptions {
    fn default() -> Self {
        Self { trials: 60, seed: 1, mutation: None, dump: false }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FamilyResult {
    pub family: &'static str,
    pub trials: usize,
    pub max_rel_error: f64,
    pub tolerance: f64,
}

impl FamilyResult {
    pub fn passed(&self) -> bool {
        self.max_rel_error <= self.tolerance
    }
}

/// One compared entry, for the optional dump.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DumpRow {
    pub quantity: &'static str,
    pub index: String,
    pub analytic: f64,
    pub finite_difference: f64,
    pub rel_error: f64,
}

#[derive(Debug, Clone, Default)]
pub struct AuditReport {
    pub families: Vec<FamilyResult>,
    pub dump: Vec<DumpRow>,
}

impl AuditReport {
    pub fn passed(&self) -> bool {
        self.families.iter().all(FamilyResult::passed)
    }

    pub fn failures(&self) -> Vec<&FamilyResult> {
        self.families.iter().filter(|f| !f.passed()).collect()
    }

    pub fn table(&self) -> String {
        let mut s = format!("{:<26} {:>7} {:>14} {:>10}  result\n", "family", "trials", "max rel err", "tolerance");
        for f in &self.families {
            s += &format!(
                "{:<26} {:>7} {:>14.3e} {:>10.0e}  {}\n",
                f.family,
                f.trials,
                f.max_rel_error,
                f.tolerance,
                if f.passed() { "ok" } else { "FAIL" }
            );
        }
        s
    }

    pub fn write_dump(&self, path: &Path) -> Result<(), RunError> {
        let mut w = csv::Writer::from_path(path).map_err(|e| RunError::Io { path: path.into(), source: e.into() })?;
        for row in &self.dump {
            w.serialize(row).map_err(|e| RunError::Io { path: path.into(), source: e.into() })?;
        }
        w.flush().map_err(RunError::io(path))
    }

    fn family(&mut self, family: &'static str, tolerance: f64) -> usize {
        match self.families.iter().position(|f| f.family == family) {
            Some(i) => i,
            None => {
                self.families.push(FamilyResult { family, trials: 0, max_rel_error: 0.0, tolerance });
                self.families.len() - 1
            }
        }
    }

    /// Normwise relative error `max|a - f| / max|f|` of one trial.
    fn record(&mut self, family: &'static str, tolerance: f64, trial: usize, analytic: &[f64], fd: &[f64], keep: bool) {
        let scale = fd.iter().fold(0.0f64, |m, v| m.max(v.abs())).max(1e-12);
        let err = analytic.iter().zip(fd).fold(0.0f64, |m, (a, f)| m.max((a - f).abs())) / scale;
        let i = self.family(family, tolerance);
        let f = &mut self.families[i];
        f.trials += 1;
        f.max_rel_error = f.max_rel_error.max(err);
        if keep {
            self.dump.extend(analytic.iter().zip(fd).enumerate().map(|(j, (a, fd))| DumpRow {
                quantity: family,
                index: format!("{trial}:{j}"),
                analytic: *a,
                finite_difference: *fd,
                rel_error: (a - fd).abs() / scale,
            }));
        }
    }
}

pub fn run_audit(opts: &AuditOptions) -> AuditReport {
    let mut report = AuditReport::default();
    for trial in 0..opts.trials {
        let mut rng = ChaCha8Rng::seed_from_u64(stream_seed(opts.seed, &[trial as u64]));
        let case = PfCase::random(&mut rng);
        power_flow_families(&case, opts, trial, &mut report);
        gaussian_families(&mut rng, trial, opts.dump, &mut report);
        network_family(&mut rng, trial, opts.dump, &mut report);
        policy_families(&mut rng, trial, opts.dump, &mut report);
    }
    report
}

/// Slack, one or two trunk buses, and a two-bus microgrid hung off the last
/// trunk bus.
struct PfCase {
    grid: GridModel,
    specs: Vec<MicrogridSpec>,
    actions: Vec<ActionVector>,
    load: Vec<f64>,
    irr: Vec<f64>,
}

impl PfCase {
    fn random(rng: &mut ChaCha8Rng) -> Self {
        let trunk = rng.random_range(1..=2usize);
        let mut buses: Vec<Bus> = (0..=trunk).map(Bus::load).collect();
        buses[0] = Bus::slack(0);
        for b in &mut buses[1..] {
            b.p_load_kw = rng.random_range(0.0..60.0);
            b.q_load_kvar = rng.random_range(0.0..20.0);
        }
        let mut z = || (rng.random_range(0.002..0.03), rng.random_range(0.002..0.03));
        let mut branches: Vec<Branch> = (0..trunk)
            .map(|k| {
                let (r, x) = z();
                Branch::from_impedance(k, k + 1, r, x, 10.0)
            })
            .collect();
        let head = buses.len();
        for id in [head, head + 1] {
            let mut b = Bus::load(id);
            b.mg_owner = Some(0);
            buses.push(b);
        }
        let (r, x) = z();
        branches.push(Branch::from_impedance(head, head + 1, r, x, 10.0));
        let (r, x) = z();
        branches.push(Branch::from_impedance(head, trunk, r, x, 10.0));
        let dev = head + 1;
        let spec = default_microgrid(
            0,
            BusMap { dg: dev, ess: dev, pv: dev, loads: vec![(dev, 1.0)], pcc_branches: vec![branches.len() - 1] },
        );
        let grid = GridModel::new(buses, branches, BASE_POWER_KVA, vec![HOST_KV]).expect("generated grid is valid");
        let mut a = ActionVector::zeros(1);
        for c in Control::ALL {
            let (lo, hi) = spec.limit(c);
            a.set(0, c, rng.random_range(lo..=hi));
        }
        let load = vec![rng.random_range(10.0..60.0)];
        let irr = vec![rng.random_range(0.0..1.0)];
        Self { grid, specs: vec![spec], actions: vec![a], load, irr }
    }

    fn solve(&self, actions: &[ActionVector]) -> Option<PowerFlowSolution> {
        let (p, q) = actions_to_injections(&self.grid, &self.specs, actions, &self.load, &self.irr, 0);
        solve_power_flow(&self.grid, &p, &q, &SOLVE).ok()
    }

    /// `[|V|, |I|, P_pcc, Q_pcc]`
    fn observe(&self, actions: &[ActionVector]) -> Option<[Vec<f64>; 4]> {
        let sol = self.solve(actions)?;
        let (pp, pq) = pcc_power(&self.grid, &sol, &self.specs);
        Some([sol.voltage_magnitudes(), branch_current_magnitudes(&self.grid, &sol), pp, pq])
    }
}

const PF_FAMILIES: [&str; 4] = ["pf-voltage-magnitude", "pf-branch-current", "pf-pcc-p", "pf-pcc-q"];

fn power_flow_families(case: &PfCase, opts: &AuditOptions, trial: usize, report: &mut AuditReport) {
    let Some(sol) = case.solve(&case.actions) else {
        return;
    };
    let mut jac = injection_jacobian(&sol);
    if let Some(m) = &opts.mutation {
        m.apply(&mut jac);
    }
    injection_family(case, &sol, &jac, trial, opts.dump, report);
    let Ok(sens) = step_sensitivities_with(&case.grid, &sol, &case.specs, &jac) else {
        report.record(PF_FAMILIES[0], POWER_FLOW_TOLERANCE, trial, &[f64::INFINITY], &[1.0], false);
        return;
    };
    let analytic: [&Matrix; 4] = [&sens.dv_mag, &sens.di_mag, &sens.dpcc_p, &sens.dpcc_q];
    let h = 1e-4 * case.grid.base_power_kva();
    let mut an: [Vec<f64>; 4] = Default::default();
    let mut fd: [Vec<f64>; 4] = Default::default();
    for c in Control::ALL {
        let shifted = |s: f64| {
            let mut a = case.actions.clone();
            a[0].set(0, c, case.actions[0].get(0, c) + s);
            case.observe(&a)
        };
        let (Some(plus), Some(minus)) = (shifted(h), shifted(-h)) else {
            return;
        };
        for f in 0..4 {
            fd[f].extend(plus[f].iter().zip(&minus[f]).map(|(p, m)| (p - m) / (2.0 * h)));
            an[f].extend(analytic[f].column(c.index()));
        }
    }
    for f in 0..4 {
        report.record(PF_FAMILIES[f], POWER_FLOW_TOLERANCE, trial, &an[f], &fd[f], opts.dump);
    }
}

/// Load current `conj(S / V)` at fixed voltage, with devices entering the
/// net load as `p = load - P_dg + P_ch - P_dis`, `q = load - Q_dg - Q_pv + Q_ess`.
fn load_current(p: f64, q: f64, vr: f64, vi: f64) -> (f64, f64) {
    let m2 = vr * vr + vi * vi;
    ((p * vr + q * vi) / m2, (p * vi - q * vr) / m2)
}

fn device_injection(c: Control, s: f64) -> (f64, f64) {
    match c {
        Control::PDg => (-s, 0.0),
        Control::PCh => (s, 0.0),
        Control::PDis => (-s, 0.0),
        Control::QDg | Control::QPv => (0.0, -s),
        Control::QEss => (0.0, s),
    }
}

fn injection_family(case: &PfCase, sol: &PowerFlowSolution, jac: &InjectionJacobian, trial: usize, dump: bool, report: &mut AuditReport) {
    let h = 1e-4;
    let mut an = Vec::new();
    let mut fd = Vec::new();
    for bus in 0..case.grid.n_bus() {
        let (vr, vi) = (sol.v_re[bus], sol.v_im[bus]);
        let (p0, q0) = (sol.p_pu[bus], sol.q_pu[bus]);
        for c in Control::ALL {
            let (dp, dq) = device_injection(c, h);
            let plus = load_current(p0 + dp, q0 + dq, vr, vi);
            let minus = load_current(p0 - dp, q0 - dq, vr, vi);
            fd.push((plus.0 - minus.0) / (2.0 * h));
            fd.push((plus.1 - minus.1) / (2.0 * h));
            an.push(jac.re[bus][c.index()]);
            an.push(jac.im[bus][c.index()]);
        }
    }
    report.record("injection-jacobian", INJECTION_TOLERANCE, trial, &an, &fd, dump);
}

fn normal_vec(rng: &mut ChaCha8Rng, n: usize, scale: f64) -> Vec<f64> {
    (0..n).map(|_| scale * rng.sample::<f64, _>(StandardNormal)).collect()
}

fn gaussian_families(rng: &mut ChaCha8Rng, trial: usize, dump: bool, report: &mut AuditReport) {
    let n = 3;
    let a = Matrix::from_fn(n, n, |_, _| rng.sample::<f64, _>(StandardNormal) * 0.5);
    let cov = Matrix::from_fn(n, n, |i, j| (0..n).map(|k| a[(i, k)] * a[(j, k)]).sum::<f64>() + if i == j { 0.5 } else { 0.0 });
    let mean = normal_vec(rng, n, 1.0);
    let x: Vec<f64> = mean.iter().zip(normal_vec(rng, n, 0.7)).map(|(m, e)| m + e).collect();
    let h = 1e-5;
    let pdf = |m: &[f64], c: &Matrix, x: &[f64]| gaussian::pdf(m, c, x).expect("positive definite");
    let fd_vec = |f: &dyn Fn(&[f64]) -> f64, at: &[f64]| -> Vec<f64> {
        (0..at.len())
            .map(|i| {
                let mut p = at.to_vec();
                let mut m = at.to_vec();
                p[i] += h;
                m[i] -= h;
                (f(&p) - f(&m)) / (2.0 * h)
            })
            .collect()
    };

    let an = gaussian::grad_mean(&mean, &cov, &x).expect("positive definite");
    let fd = fd_vec(&|m| pdf(m, &cov, &x), &mean);
    report.record("gaussian-pdf-mean", DENSE_TOLERANCE, trial, &an, &fd, dump);

    let an = gaussian::grad_action(&mean, &cov, &x).expect("positive definite");
    let fd = fd_vec(&|x| pdf(&mean, &cov, x), &x);
    report.record("gaussian-pdf-action", DENSE_TOLERANCE, trial, &an, &fd, dump);

    // Symmetric perturbation of (i, j) and (j, i) moves both entries.
    let g = gaussian::grad_cov(&mean, &cov, &x).expect("positive definite");
    let (mut an, mut fd) = (Vec::new(), Vec::new());
    for i in 0..n {
        for j in 0..=i {
            let shifted = |s: f64| {
                let mut c = cov.clone();
                c[(i, j)] += s;
                if i != j {
                    c[(j, i)] += s;
                }
                pdf(&mean, &c, &x)
            };
            fd.push((shifted(h) - shifted(-h)) / (2.0 * h));
            an.push(if i == j { g[(i, i)] } else { g[(i, j)] + g[(j, i)] });
        }
    }
    report.record("gaussian-pdf-covariance", DENSE_TOLERANCE, trial, &an, &fd, dump);
}

fn network_family(rng: &mut ChaCha8Rng, trial: usize, dump: bool, report: &mut AuditReport) {
    let sizes = vec![3, rng.random_range(2..6), rng.random_range(2..6), 2];
    let count = FeedforwardNet::new(sizes.clone()).param_count();
    let net = FeedforwardNet::with_params(sizes, normal_vec(rng, count, 0.5)).expect("matching length");
    let x = normal_vec(rng, 3, 1.0);
    let jac = net.jacobian(&x);
    let h = 1e-5;
    let mut an = Vec::new();
    let mut fd = Vec::new();
    for p in 0..count {
        let shifted = |s: f64| {
            let mut n = net.clone();
            n.params_mut()[p] += s;
            n.forward(&x)
        };
        let (plus, minus) = (shifted(h), shifted(-h));
        for o in 0..plus.len() {
            fd.push((plus[o] - minus[o]) / (2.0 * h));
            an.push(jac[(o, p)]);
        }
    }
    report.record("dnn-jacobian", DENSE_TOLERANCE, trial, &an, &fd, dump);
}

fn policy_families(rng: &mut ChaCha8Rng, trial: usize, dump: bool, report: &mut AuditReport) {
    let spec = default_microgrid(0, BusMap { dg: 0, ess: 0, pv: 0, loads: vec![(0, 1.0)], pcc_branches: vec![0] });
    let config = PolicyConfig { hidden: vec![4], ..PolicyConfig::default() };
    let mut policy = GaussianPolicy::for_microgrid(&spec, 1, 50.0, &config);
    let theta = normal_vec(rng, policy.param_count(), 0.3);
    policy.set_params(&theta).expect("matching length");
    let state = StateVector::from_series(&[rng.random_range(0.0..1.0)], &[rng.random_range(10.0..60.0)]);
    let out = policy.evaluate(&state).expect("state fits");
    let pm = policy.mean_param_count();
    let h = 1e-6;
    let (mut an_m, mut fd_m, mut an_v, mut fd_v) = (Vec::new(), Vec::new(), Vec::new(), Vec::new());
    for p in 0..theta.len() {
        let shifted = |s: f64| {
            let mut q = policy.clone();
            let mut t = theta.clone();
            t[p] += s;
            q.set_params(&t).expect("matching length");
            (q.forward_mean(&state).expect("state fits"), q.forward_cov(&state).expect("state fits"))
        };
        let ((mp, vp), (mm, vm)) = (shifted(h), shifted(-h));
        for d in 0..CONTROLS_PER_STEP {
            if p < pm {
                fd_m.push((mp[d] - mm[d]) / (2.0 * h));
                an_m.push(out.jac_mean[(d, p)]);
            } else {
                fd_v.push((vp[d] - vm[d]) / (2.0 * h));
                an_v.push(out.jac_var[(d, p - pm)]);
            }
        }
    }
    report.record("policy-mean-jacobian", DENSE_TOLERANCE, trial, &an_m, &fd_m, dump);
    report.record("policy-variance-jacobian", DENSE_TOLERANCE, trial, &an_v, &fd_v, dump);
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn mutation_fixture_parses() {
        let m: Mutation = toml::from_str("part = \"im\"\ncontrol = \"q_dg\"\n").unwrap();
        assert_eq!(m, Mutation { part: Part::Im, control: ControlName::QDg });
    }

    #[test]
    fn small_audit_lists_every_family() {
        let r = run_audit(&AuditOptions { trials: 2, ..AuditOptions::default() });
        assert_eq!(r.families.len(), 11);
        assert!(r.passed(), "{}", r.table());
    }
}
