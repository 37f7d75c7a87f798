//! Built-in test systems.
//!
//! `feeder98` is the 33-bus radial distribution feeder (12.66 kV) with five
//! 13-bus microgrids (4.16 kV) hung off it through PCC branches. The small
//! systems are used by the test suites and the examples.

use alloc::vec;
use alloc::vec::Vec;

#[allow(unused_imports)]
use num_traits::Float;

use crate::grid::{Branch, Bus, GridError, GridModel};
use crate::mg::{BusMap, DgSpec, EssSpec, MicrogridSpec, PccSpec, PvSpec};

pub const BASE_POWER_KVA: f64 = 100.0;
pub const HOST_KV: f64 = 12.66;
pub const MG_KV: f64 = 4.16;
const FEET_PER_MILE: f64 = 5280.0;

/// (from, to, r Ω, x Ω, P kW, Q kvar at `to`), 1-based bus numbers.
const FEEDER33: [(usize, usize, f64, f64, f64, f64); 32] = [
    (1, 2, 0.0922, 0.0470, 100.0, 60.0),
    (2, 3, 0.4930, 0.2511, 90.0, 40.0),
    (3, 4, 0.3660, 0.1864, 120.0, 80.0),
    (4, 5, 0.3811, 0.1941, 60.0, 30.0),
    (5, 6, 0.8190, 0.7070, 60.0, 20.0),
    (6, 7, 0.1872, 0.6188, 200.0, 100.0),
    (7, 8, 0.7114, 0.2351, 200.0, 100.0),
    (8, 9, 1.0300, 0.7400, 60.0, 20.0),
    (9, 10, 1.0440, 0.7400, 60.0, 20.0),
    (10, 11, 0.1966, 0.0650, 45.0, 30.0),
    (11, 12, 0.3744, 0.1238, 60.0, 35.0),
    (12, 13, 1.4680, 1.1550, 60.0, 35.0),
    (13, 14, 0.5416, 0.7129, 120.0, 80.0),
    (14, 15, 0.5910, 0.5260, 60.0, 10.0),
    (15, 16, 0.7463, 0.5450, 60.0, 20.0),
    (16, 17, 1.2890, 1.7210, 60.0, 20.0),
    (17, 18, 0.7320, 0.5740, 90.0, 40.0),
    (2, 19, 0.1640, 0.1565, 90.0, 40.0),
    (19, 20, 1.5042, 1.3554, 90.0, 40.0),
    (20, 21, 0.4095, 0.4784, 90.0, 40.0),
    (21, 22, 0.7089, 0.9373, 90.0, 40.0),
    (3, 23, 0.4512, 0.3083, 90.0, 50.0),
    (23, 24, 0.8980, 0.7091, 420.0, 200.0),
    (24, 25, 0.8960, 0.7011, 420.0, 200.0),
    (6, 26, 0.2030, 0.1034, 60.0, 25.0),
    (26, 27, 0.2842, 0.1447, 60.0, 25.0),
    (27, 28, 1.0590, 0.9337, 60.0, 20.0),
    (28, 29, 0.8042, 0.7006, 120.0, 70.0),
    (29, 30, 0.5075, 0.2585, 200.0, 600.0),
    (30, 31, 0.9744, 0.9630, 150.0, 70.0),
    (31, 32, 0.3105, 0.3619, 210.0, 100.0),
    (32, 33, 0.3410, 0.5302, 60.0, 40.0),
];

/// Host buses (1-based) receiving microgrids 0..5.
pub const FEEDER98_PCC_HOSTS: [usize; 5] = [18, 22, 25, 33, 14];

/// Microgrid bus names in local index order.
pub const MG13_BUSES: [&str; 13] = ["650", "632", "633", "634", "645", "646", "671", "692", "675", "684", "611", "652", "680"];

/// (from, to, r Ω/mile, x Ω/mile, length ft) on local indices; a zero length
/// means the impedance is given in ohms directly.
const MG13_LINES: [(usize, usize, f64, f64, f64); 12] = [
    (0, 1, 0.1859, 0.5968, 2000.0),
    (1, 4, 1.3292, 1.3475, 500.0),
    (4, 5, 1.3292, 1.3475, 300.0),
    (1, 2, 0.7526, 1.1814, 500.0),
    (2, 3, 0.381, 0.692, 0.0),
    (1, 6, 0.1859, 0.5968, 2000.0),
    (6, 9, 1.3292, 1.3475, 300.0),
    (9, 10, 1.3292, 1.3475, 300.0),
    (9, 11, 1.3425, 0.5124, 800.0),
    (6, 7, 0.001, 0.001, 0.0),
    (7, 8, 0.7982, 0.4463, 500.0),
    (6, 12, 0.1859, 0.5968, 1000.0),
];

/// Load share per local bus, from the original spot loads.
const MG13_LOAD_SHARES: [(usize, f64); 8] =
    [(3, 400.0), (4, 170.0), (5, 230.0), (6, 1155.0), (7, 170.0), (8, 843.0), (10, 170.0), (11, 128.0)];

const MG_DG_BUS: usize = 6;
const MG_ESS_BUS: usize = 8;
const MG_PV_BUS: usize = 3;

pub fn default_dg() -> DgSpec {
    DgSpec { p_max_kw: 60.0, q_max_kvar: 30.0, ramp_kw: 20.0, fuel_price: 0.57, a: 0.0001773, b: 0.1709, c: 14.67 }
}

pub fn default_ess() -> EssSpec {
    EssSpec {
        capacity_kwh: 20.0,
        p_ch_max_kw: 4.0,
        p_dis_max_kw: 4.0,
        eta_ch: 0.95,
        eta_dis: 0.9,
        soc_min: 0.1,
        soc_max: 0.9,
        soc_init: 0.5,
        q_max_kvar: 4.0,
    }
}

/// Device set used for every microgrid unless a scenario overrides it.
pub fn default_microgrid(id: usize, buses: BusMap) -> MicrogridSpec {
    MicrogridSpec {
        id,
        dg: default_dg(),
        ess: default_ess(),
        pv: PvSpec { rating_kw: 30.0, q_max_kvar: 15.0 },
        pcc: PccSpec { p_max_kw: 150.0, q_max_kvar: 150.0, price: 0.046 },
        buses,
        load_power_factor: 0.95,
        action_headroom: 1.2,
    }
}

fn ohms_to_pu(r: f64, x: f64, kv: f64) -> (f64, f64) {
    let z_base = kv * kv * 1000.0 / BASE_POWER_KVA;
    (r / z_base, x / z_base)
}

fn amps_to_pu(amps: f64, kv: f64) -> f64 {
    amps / (BASE_POWER_KVA / (3.0f64.sqrt() * kv))
}

pub struct System {
    pub grid: GridModel,
    pub specs: Vec<MicrogridSpec>,
}

/// 33-bus host feeder plus five 13-bus microgrids. `pcc` is the per-unit
/// impedance of each PCC branch.
pub fn feeder98(pcc: (f64, f64)) -> Result<System, GridError> {
    let mut buses: Vec<Bus> = (0..33).map(Bus::load).collect();
    buses[0] = Bus::slack(0);
    let mut branches = Vec::new();
    for &(f, t, r, x, p, q) in &FEEDER33 {
        let (rp, xp) = ohms_to_pu(r, x, HOST_KV);
        branches.push(Branch::from_impedance(f - 1, t - 1, rp, xp, amps_to_pu(400.0, HOST_KV)));
        let b = &mut buses[t - 1];
        b.p_load_kw = p;
        b.q_load_kvar = q;
    }
    for b in buses.iter_mut() {
        b.v_min = 0.9;
        b.v_max = 1.1;
    }
    let mut specs = Vec::new();
    for (m, &host) in FEEDER98_PCC_HOSTS.iter().enumerate() {
        let off = buses.len();
        for _ in 0..MG13_BUSES.len() {
            let mut b = Bus::load(buses.len());
            b.zone = 1;
            b.mg_owner = Some(m);
            buses.push(b);
        }
        for &(f, t, r, x, len) in &MG13_LINES {
            let scale = if len > 0.0 { len / FEET_PER_MILE } else { 1.0 };
            let (rp, xp) = ohms_to_pu(r * scale, x * scale, MG_KV);
            branches.push(Branch::from_impedance(off + f, off + t, rp, xp, amps_to_pu(60.0, MG_KV)));
        }
        let pcc_branch = branches.len();
        branches.push(Branch::from_impedance(off, host - 1, pcc.0, pcc.1, 2.0));
        let total: f64 = MG13_LOAD_SHARES.iter().map(|(_, s)| s).sum();
        let loads = MG13_LOAD_SHARES.iter().map(|&(b, s)| (off + b, s / total)).collect();
        specs.push(default_microgrid(
            m,
            BusMap {
                dg: off + MG_DG_BUS,
                ess: off + MG_ESS_BUS,
                pv: off + MG_PV_BUS,
                loads,
                pcc_branches: vec![pcc_branch],
            },
        ));
    }
    let grid = GridModel::new(buses, branches, BASE_POWER_KVA, vec![HOST_KV, MG_KV])?;
    Ok(System { grid, specs })
}

/// Radial chain `0 - 1 - ... - (hosts)` with one two-bus microgrid per host.
///
/// Each microgrid has a head bus tied to its host by the PCC branch and a
/// device bus carrying DG, ESS, PV and load. `trunk_i_max` limits the chain
/// branches (per unit).
pub fn chain_with_microgrids(n_mg: usize, trunk: (f64, f64), trunk_i_max: f64, pcc: (f64, f64)) -> Result<System, GridError> {
    let mut buses: Vec<Bus> = (0..=n_mg).map(Bus::load).collect();
    buses[0] = Bus::slack(0);
    let mut branches: Vec<Branch> =
        (0..n_mg).map(|k| Branch::from_impedance(k, k + 1, trunk.0, trunk.1, trunk_i_max)).collect();
    let mut specs = Vec::new();
    for m in 0..n_mg {
        let head = buses.len();
        for id in [head, head + 1] {
            let mut b = Bus::load(id);
            b.mg_owner = Some(m);
            buses.push(b);
        }
        branches.push(Branch::from_impedance(head, head + 1, 0.002, 0.004, 10.0));
        let pcc_branch = branches.len();
        branches.push(Branch::from_impedance(head, m + 1, pcc.0, pcc.1, 10.0));
        let dev = head + 1;
        specs.push(default_microgrid(
            m,
            BusMap { dg: dev, ess: dev, pv: dev, loads: vec![(dev, 1.0)], pcc_branches: vec![pcc_branch] },
        ));
    }
    let grid = GridModel::new(buses, branches, BASE_POWER_KVA, vec![HOST_KV])?;
    Ok(System { grid, specs })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn feeder98_has_98_buses() {
        let sys = feeder98((0.01, 0.02)).unwrap();
        assert_eq!(sys.grid.n_bus(), 98);
        assert_eq!(sys.specs.len(), 5);
        for s in &sys.specs {
            s.validate(&sys.grid).unwrap();
        }
        let p: f64 = sys.grid.buses().iter().map(|b| b.p_load_kw).sum();
        assert!((p - 3715.0).abs() < 1e-9);
    }

    #[test]
    fn chain_fixture_is_valid() {
        let sys = chain_with_microgrids(2, (0.01, 0.01), 5.0, (0.005, 0.01)).unwrap();
        assert_eq!(sys.grid.n_bus(), 3 + 4);
        for s in &sys.specs {
            s.validate(&sys.grid).unwrap();
        }
    }
}
