//! TOML scenario files: network, microgrid devices, profile source and
//! training settings. All quantities are in kW, kvar, kV, ohms and amperes;
//! per-unit conversion happens here and nowhere else.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use smaspl_core::consensus::{AgentChannelGraph, GraphError};
use smaspl_core::constraints::{ConstraintKind, RowFilter};
use smaspl_core::env::{EnvError, Environment};
use smaspl_core::grid::{Branch, Bus, GridError, GridModel};
use smaspl_core::mg::{BusMap, DgSpec, EssSpec, MicrogridSpec, PccSpec, PvSpec};
use smaspl_core::networks::{self, BASE_POWER_KVA, HOST_KV};
use smaspl_core::policy::PolicyConfig;
use smaspl_core::scenario::{synth_profiles, ForecastError, ProfileSeries, SynthParams};
use smaspl_core::trainer::{Mode, TrainerConfig};
use thiserror::Error;

use crate::profiles::{load_profiles, parse_timestamp, ProfileFileError};

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{path}: {source}")]
    Toml { path: PathBuf, source: Box<toml::de::Error> },
    #[error("invalid scenario: {0}")]
    Invalid(String),
    #[error(transparent)]
    Grid(#[from] GridError),
    #[error(transparent)]
    Env(#[from] EnvError),
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error(transparent)]
    Profiles(#[from] ProfileFileError),
}

fn invalid<T>(msg: impl Into<String>) -> Result<T, ScenarioError> {
    Err(ScenarioError::Invalid(msg.into()))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioFile {
    pub seed: u64,
    pub grid: GridSection,
    #[serde(default)]
    pub mgs: Vec<MgSection>,
    pub profiles: ProfileSection,
    #[serde(default)]
    pub training: TrainingSection,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum GridSection {
    /// Radial trunk with one two-bus microgrid per trunk bus, at 12.66 kV.
    Chain {
        microgrids: usize,
        trunk_r_ohm: f64,
        trunk_x_ohm: f64,
        trunk_i_max_a: f64,
        pcc_r_ohm: f64,
        pcc_x_ohm: f64,
    },
    /// 33-bus feeder with five 13-bus microgrids.
    Feeder98 { pcc_r_ohm: f64, pcc_x_ohm: f64 },
    Custom {
        base_kva: f64,
        /// Base voltage of each zone, kV.
        zones_kv: Vec<f64>,
        buses: Vec<BusEntry>,
        branches: Vec<BranchEntry>,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BusEntry {
    pub id: usize,
    #[serde(default)]
    pub slack: bool,
    #[serde(default)]
    pub zone: usize,
    #[serde(default = "default_v_min")]
    pub v_min: f64,
    #[serde(default = "default_v_max")]
    pub v_max: f64,
    #[serde(default)]
    pub p_load_kw: f64,
    #[serde(default)]
    pub q_load_kvar: f64,
    pub mg: Option<usize>,
}

fn default_v_min() -> f64 {
    0.95
}

fn default_v_max() -> f64 {
    1.05
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BranchEntry {
    pub from: usize,
    pub to: usize,
    pub r_ohm: f64,
    pub x_ohm: f64,
    pub i_max_a: f64,
}

/// Device overrides for one microgrid; anything left out keeps the default.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MgSection {
    pub id: usize,
    #[serde(default)]
    pub dg: DgEntry,
    #[serde(default)]
    pub ess: EssEntry,
    #[serde(default)]
    pub pv: PvEntry,
    #[serde(default)]
    pub pcc: PccEntry,
    pub load_power_factor: Option<f64>,
    pub action_headroom: Option<f64>,
    /// Required for custom grids, ignored otherwise.
    pub buses: Option<BusEntryMap>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DgEntry {
    pub p_max_kw: Option<f64>,
    pub q_max_kvar: Option<f64>,
    pub ramp_kw: Option<f64>,
    pub fuel_price: Option<f64>,
    pub a: Option<f64>,
    pub b: Option<f64>,
    pub c: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EssEntry {
    pub capacity_kwh: Option<f64>,
    pub p_ch_max_kw: Option<f64>,
    pub p_dis_max_kw: Option<f64>,
    pub eta_ch: Option<f64>,
    pub eta_dis: Option<f64>,
    pub soc_min: Option<f64>,
    pub soc_max: Option<f64>,
    pub soc_init: Option<f64>,
    pub q_max_kvar: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PvEntry {
    pub rating_kw: Option<f64>,
    pub q_max_kvar: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PccEntry {
    pub p_max_kw: Option<f64>,
    pub q_max_kvar: Option<f64>,
    pub price: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BusEntryMap {
    pub dg: usize,
    pub ess: usize,
    pub pv: usize,
    /// `[bus, share]` pairs.
    pub loads: Vec<(usize, f64)>,
    /// Branch indices, counted from 0 in the order listed under `grid`.
    pub pcc_branches: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "source", rename_all = "kebab-case", deny_unknown_fields)]
pub enum ProfileSection {
    Synthetic {
        days: usize,
        #[serde(default)]
        shape: SynthEntry,
        #[serde(default)]
        forecast: ForecastEntry,
    },
    Csv {
        /// Relative paths are resolved against the scenario file.
        path: PathBuf,
        #[serde(default)]
        forecast: ForecastEntry,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthEntry {
    pub base_load_kw: f64,
    pub mg_scale: (f64, f64),
    pub load_noise: f64,
    pub clear_sky: (f64, f64),
    pub sunrise_hour: f64,
    pub sunset_hour: f64,
    pub start: String,
}

impl Default for SynthEntry {
    fn default() -> Self {
        let p = SynthParams::default();
        Self {
            base_load_kw: p.base_load_kw,
            mg_scale: p.mg_scale,
            load_noise: p.load_noise,
            clear_sky: p.clear_sky,
            sunrise_hour: p.sunrise_hour,
            sunset_hour: p.sunset_hour,
            start: crate::profiles::format_timestamp(p.start_minutes),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ForecastEntry {
    pub beta_a: f64,
    pub beta_b: f64,
    pub irradiance_scale: f64,
    pub load_sigma: f64,
}

impl Default for ForecastEntry {
    fn default() -> Self {
        let e = ForecastError::default();
        Self { beta_a: e.beta_a, beta_b: e.beta_b, irradiance_scale: e.irradiance_scale, load_sigma: e.load_sigma }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ModeEntry {
    SmasPl,
    UPl,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum GraphEntry {
    /// `"complete"`
    Named(String),
    Edges { edges: Vec<(usize, usize)> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainingSection {
    pub steps: usize,
    pub episodes: usize,
    /// First profile step of episode 0.
    pub start_step: usize,
    /// Profile steps between consecutive episode windows.
    pub stride: usize,
    /// When true every episode reuses the window at `start_step`.
    pub fixed_window: bool,
    pub initial_dg_kw: f64,
    pub gamma: f64,
    pub delta: f64,
    pub k_max: usize,
    pub rho1: f64,
    pub rho2: f64,
    pub delta_theta: f64,
    pub tau: f64,
    pub max_backtrack_rounds: usize,
    pub backtracking: bool,
    pub batch: usize,
    pub ridge: f64,
    pub online_samples: usize,
    pub hidden: Vec<usize>,
    pub sigma_floor: f64,
    pub sigma_fraction: f64,
    pub mode: ModeEntry,
    /// Row kinds to drop, optionally for one microgrid: `"dg-p"`, `"dg-p@1"`.
    pub remove_constraints: Vec<String>,
    /// Variance of the multiplicative R/X error; 0 leaves the network exact.
    pub network_noise: f64,
    pub graph: GraphEntry,
    pub trace_lambda: bool,
}

impl Default for TrainingSection {
    fn default() -> Self {
        let t = TrainerConfig::default();
        let p = PolicyConfig::default();
        Self {
            steps: 4,
            episodes: 50,
            start_step: 0,
            stride: 4,
            fixed_window: false,
            initial_dg_kw: 0.0,
            gamma: t.gamma,
            delta: t.delta,
            k_max: t.k_max,
            rho1: t.rho1,
            rho2: t.rho2,
            delta_theta: t.delta_theta,
            tau: t.tau,
            max_backtrack_rounds: t.max_backtrack_rounds,
            backtracking: true,
            batch: t.batch,
            ridge: t.ridge,
            online_samples: t.online_samples,
            hidden: p.hidden,
            sigma_floor: p.sigma_floor,
            sigma_fraction: p.sigma_fraction,
            mode: ModeEntry::SmasPl,
            remove_constraints: Vec::new(),
            network_noise: 0.0,
            graph: GraphEntry::Named("complete".into()),
            trace_lambda: false,
        }
    }
}

/// A validated scenario with everything converted to model units.
#[derive(Debug, Clone)]
pub struct Scenario {
    pub file: ScenarioFile,
    pub grid: GridModel,
    pub specs: Vec<MicrogridSpec>,
    pub profiles: ProfileSeries,
    pub forecast: ForecastError,
}

impl ScenarioFile {
    pub fn parse(text: &str, path: &Path) -> Result<Self, ScenarioError> {
        toml::from_str(text).map_err(|e| ScenarioError::Toml { path: path.into(), source: Box::new(e) })
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("scenario serialises")
    }
}

pub fn load_scenario(path: &Path) -> Result<Scenario, ScenarioError> {
    load_scenario_with(path, &Overrides::default())
}

/// Command-line replacements for scenario fields, applied before the
/// scenario is built so that the seed also reaches the synthetic profiles.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub mode: Option<ModeEntry>,
    pub episodes: Option<usize>,
    pub remove_constraints: Option<Vec<String>>,
    pub no_backtracking: bool,
    pub network_noise: Option<f64>,
}

impl Overrides {
    pub fn apply(&self, file: &mut ScenarioFile) {
        let tr = &mut file.training;
        if let Some(seed) = self.seed {
            file.seed = seed;
        }
        if let Some(mode) = &self.mode {
            tr.mode = mode.clone();
        }
        if let Some(n) = self.episodes {
            tr.episodes = n;
        }
        if let Some(rows) = &self.remove_constraints {
            tr.remove_constraints = rows.clone();
        }
        if self.no_backtracking {
            tr.backtracking = false;
        }
        if let Some(v) = self.network_noise {
            tr.network_noise = v;
        }
    }
}

pub fn load_scenario_with(path: &Path, overrides: &Overrides) -> Result<Scenario, ScenarioError> {
    let text = std::fs::read_to_string(path).map_err(|source| ScenarioError::Io { path: path.into(), source })?;
    let mut file = ScenarioFile::parse(&text, path)?;
    overrides.apply(&mut file);
    Scenario::build(file, path.parent().unwrap_or(Path::new(".")))
}

fn ohms_to_pu(ohm: f64, kv: f64, base_kva: f64) -> f64 {
    ohm / (kv * kv * 1000.0 / base_kva)
}

fn amps_to_pu(amps: f64, kv: f64, base_kva: f64) -> f64 {
    amps / (base_kva / (3.0f64.sqrt() * kv))
}

impl Scenario {
    /// `base_dir` resolves relative profile paths.
    pub fn build(file: ScenarioFile, base_dir: &Path) -> Result<Self, ScenarioError> {
        let (grid, mut specs) = build_network(&file)?;
        for mg in &file.mgs {
            let Some(spec) = specs.get_mut(mg.id) else {
                return invalid(format!("[[mgs]] id {} does not exist", mg.id));
            };
            apply_overrides(spec, mg);
        }
        for s in &specs {
            s.validate(&grid).map_err(|e| ScenarioError::Invalid(e.to_string()))?;
        }
        let t = &file.training;
        if t.steps == 0 || t.batch == 0 || t.k_max == 0 || t.hidden.is_empty() {
            return invalid("training.steps, batch, k_max must be positive and hidden non-empty");
        }
        if !(t.network_noise >= 0.0) {
            return invalid("training.network_noise must be non-negative");
        }
        let (profiles, fc) = match &file.profiles {
            ProfileSection::Synthetic { days, shape, forecast } => {
                if *days == 0 {
                    return invalid("profiles.days must be at least 1");
                }
                let start_minutes =
                    parse_timestamp(&shape.start).ok_or_else(|| ScenarioError::Invalid(format!("bad profiles.shape.start {:?}", shape.start)))?;
                let params = SynthParams {
                    base_load_kw: shape.base_load_kw,
                    mg_scale: shape.mg_scale,
                    load_noise: shape.load_noise,
                    clear_sky: shape.clear_sky,
                    sunrise_hour: shape.sunrise_hour,
                    sunset_hour: shape.sunset_hour,
                    start_minutes,
                };
                (synth_profiles(file.seed, *days, specs.len(), &params), forecast)
            }
            ProfileSection::Csv { path, forecast } => (load_profiles(&base_dir.join(path))?, forecast),
        };
        if profiles.mg_count() != specs.len() {
            return invalid(format!("profiles cover {} microgrids, the network has {}", profiles.mg_count(), specs.len()));
        }
        if [fc.beta_a, fc.beta_b].iter().any(|v| !(*v > 0.0)) || fc.irradiance_scale < 0.0 || fc.load_sigma < 0.0 {
            return invalid("forecast beta parameters must be positive and error scales non-negative");
        }
        let forecast =
            ForecastError { beta_a: fc.beta_a, beta_b: fc.beta_b, irradiance_scale: fc.irradiance_scale, load_sigma: fc.load_sigma };
        Ok(Self { file, grid, specs, profiles, forecast })
    }

    pub fn seed(&self) -> u64 {
        self.file.seed
    }

    pub fn training(&self) -> &TrainingSection {
        &self.file.training
    }

    pub fn mode(&self) -> Mode {
        match self.file.training.mode {
            ModeEntry::SmasPl => Mode::SmasPl,
            ModeEntry::UPl => Mode::UPl,
        }
    }

    /// Environment on the exact network with the requested rows removed.
    pub fn environment(&self) -> Result<Environment, ScenarioError> {
        let t = &self.file.training;
        let mut env = Environment::new(self.grid.clone(), self.specs.clone(), t.steps, t.gamma)?;
        for f in parse_row_filters(&t.remove_constraints)? {
            if f.mg.is_some_and(|m| m >= self.specs.len()) {
                return invalid(format!("remove_constraints names microgrid {}", f.mg.unwrap_or_default()));
            }
            env.table.deactivate(f);
        }
        Ok(env)
    }

    pub fn graph(&self) -> Result<AgentChannelGraph, ScenarioError> {
        let n = self.specs.len();
        match &self.file.training.graph {
            GraphEntry::Named(name) if name == "complete" => Ok(AgentChannelGraph::complete(n)?),
            GraphEntry::Named(name) => invalid(format!("unknown graph {name:?}; use \"complete\" or {{ edges = [...] }}")),
            GraphEntry::Edges { edges } => Ok(AgentChannelGraph::from_edges(n, edges)?),
        }
    }

    pub fn trainer_config(&self) -> TrainerConfig {
        let t = &self.file.training;
        TrainerConfig {
            gamma: t.gamma,
            delta: t.delta,
            k_max: t.k_max,
            rho1: t.rho1,
            rho2: t.rho2,
            delta_theta: t.delta_theta,
            tau: if t.backtracking { t.tau } else { 1.0 },
            max_backtrack_rounds: t.max_backtrack_rounds,
            batch: t.batch,
            ridge: t.ridge,
            online_samples: t.online_samples,
            trace_lambda: t.trace_lambda,
            policy: PolicyConfig {
                hidden: t.hidden.clone(),
                sigma_floor: t.sigma_floor,
                sigma_fraction: t.sigma_fraction,
                ..PolicyConfig::default()
            },
            ..TrainerConfig::default()
        }
    }
}

/// `"dg-p"` drops the kind everywhere, `"dg-p@1"` only for microgrid 1.
pub fn parse_row_filters(items: &[String]) -> Result<Vec<RowFilter>, ScenarioError> {
    items
        .iter()
        .map(|s| {
            let (kind, mg) = match s.split_once('@') {
                Some((k, m)) => (k, Some(m.parse::<usize>().map_err(|_| ScenarioError::Invalid(format!("bad microgrid in {s:?}")))?)),
                None => (s.as_str(), None),
            };
            let kind = ConstraintKind::parse(kind).ok_or_else(|| {
                let names: Vec<&str> = ConstraintKind::ALL.iter().map(|k| k.name()).collect();
                ScenarioError::Invalid(format!("unknown constraint kind {kind:?}; expected one of {}", names.join(", ")))
            })?;
            if mg.is_some() && kind.is_global() {
                return invalid(format!("{s:?}: network rows are not owned by a microgrid"));
            }
            Ok(RowFilter { kind, mg })
        })
        .collect()
}

fn build_network(file: &ScenarioFile) -> Result<(GridModel, Vec<MicrogridSpec>), ScenarioError> {
    let pu = |ohm| ohms_to_pu(ohm, HOST_KV, BASE_POWER_KVA);
    match &file.grid {
        GridSection::Chain { microgrids, trunk_r_ohm, trunk_x_ohm, trunk_i_max_a, pcc_r_ohm, pcc_x_ohm } => {
            if *microgrids == 0 {
                return invalid("grid.microgrids must be at least 1");
            }
            let sys = networks::chain_with_microgrids(
                *microgrids,
                (pu(*trunk_r_ohm), pu(*trunk_x_ohm)),
                amps_to_pu(*trunk_i_max_a, HOST_KV, BASE_POWER_KVA),
                (pu(*pcc_r_ohm), pu(*pcc_x_ohm)),
            )?;
            Ok((sys.grid, sys.specs))
        }
        GridSection::Feeder98 { pcc_r_ohm, pcc_x_ohm } => {
            let sys = networks::feeder98((pu(*pcc_r_ohm), pu(*pcc_x_ohm)))?;
            Ok((sys.grid, sys.specs))
        }
        GridSection::Custom { base_kva, zones_kv, buses, branches } => {
            let kv = |zone: usize| {
                zones_kv.get(zone).copied().ok_or_else(|| ScenarioError::Invalid(format!("zone {zone} has no base voltage")))
            };
            let mut model_buses = Vec::with_capacity(buses.len());
            for (k, b) in buses.iter().enumerate() {
                if b.id != k {
                    return invalid(format!("grid.buses must be listed with ids 0, 1, ...; found {} at position {k}", b.id));
                }
                kv(b.zone)?;
                let mut bus = if b.slack { Bus::slack(k) } else { Bus::load(k) };
                bus.zone = b.zone;
                bus.v_min = b.v_min;
                bus.v_max = b.v_max;
                bus.p_load_kw = b.p_load_kw;
                bus.q_load_kvar = b.q_load_kvar;
                bus.mg_owner = b.mg;
                model_buses.push(bus);
            }
            let mut model_branches = Vec::with_capacity(branches.len());
            for br in branches {
                let zone = buses.get(br.from).map_or(0, |b| b.zone);
                let v = kv(zone)?;
                model_branches.push(Branch::from_impedance(
                    br.from,
                    br.to,
                    ohms_to_pu(br.r_ohm, v, *base_kva),
                    ohms_to_pu(br.x_ohm, v, *base_kva),
                    amps_to_pu(br.i_max_a, v, *base_kva),
                ));
            }
            let grid = GridModel::new(model_buses, model_branches, *base_kva, zones_kv.clone())?;
            let n_mg = buses.iter().filter_map(|b| b.mg).max().map_or(0, |m| m + 1);
            let mut specs = Vec::with_capacity(n_mg);
            for id in 0..n_mg {
                let Some(map) = file.mgs.iter().find(|m| m.id == id).and_then(|m| m.buses.as_ref()) else {
                    return invalid(format!("custom grid: microgrid {id} needs [mgs.buses]"));
                };
                specs.push(networks::default_microgrid(
                    id,
                    BusMap {
                        dg: map.dg,
                        ess: map.ess,
                        pv: map.pv,
                        loads: map.loads.clone(),
                        pcc_branches: map.pcc_branches.clone(),
                    },
                ));
            }
            Ok((grid, specs))
        }
    }
}

fn apply_overrides(spec: &mut MicrogridSpec, mg: &MgSection) {
    fn set(slot: &mut f64, v: Option<f64>) {
        if let Some(v) = v {
            *slot = v;
        }
    }
    let DgSpec { p_max_kw, q_max_kvar, ramp_kw, fuel_price, a, b, c } = &mut spec.dg;
    set(p_max_kw, mg.dg.p_max_kw);
    set(q_max_kvar, mg.dg.q_max_kvar);
    set(ramp_kw, mg.dg.ramp_kw);
    set(fuel_price, mg.dg.fuel_price);
    set(a, mg.dg.a);
    set(b, mg.dg.b);
    set(c, mg.dg.c);
    let EssSpec { capacity_kwh, p_ch_max_kw, p_dis_max_kw, eta_ch, eta_dis, soc_min, soc_max, soc_init, q_max_kvar } =
        &mut spec.ess;
    set(capacity_kwh, mg.ess.capacity_kwh);
    set(p_ch_max_kw, mg.ess.p_ch_max_kw);
    set(p_dis_max_kw, mg.ess.p_dis_max_kw);
    set(eta_ch, mg.ess.eta_ch);
    set(eta_dis, mg.ess.eta_dis);
    set(soc_min, mg.ess.soc_min);
    set(soc_max, mg.ess.soc_max);
    set(soc_init, mg.ess.soc_init);
    set(q_max_kvar, mg.ess.q_max_kvar);
    let PvSpec { rating_kw, q_max_kvar } = &mut spec.pv;
    set(rating_kw, mg.pv.rating_kw);
    set(q_max_kvar, mg.pv.q_max_kvar);
    let PccSpec { p_max_kw, q_max_kvar, price } = &mut spec.pcc;
    set(p_max_kw, mg.pcc.p_max_kw);
    set(q_max_kvar, mg.pcc.q_max_kvar);
    set(price, mg.pcc.price);
    set(&mut spec.load_power_factor, mg.load_power_factor);
    set(&mut spec.action_headroom, mg.action_headroom);
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"
seed = 3

[grid]
kind = "chain"
microgrids = 2
trunk_r_ohm = 16.0
trunk_x_ohm = 16.0
trunk_i_max_a = 25.0
pcc_r_ohm = 8.0
pcc_x_ohm = 16.0

[[mgs]]
id = 1
pcc = { price = 0.3 }

[profiles]
source = "synthetic"
days = 1
"#;

    #[test]
    fn minimal_chain_scenario() {
        let file = ScenarioFile::parse(MINIMAL, Path::new("mem.toml")).unwrap();
        let sc = Scenario::build(file, Path::new(".")).unwrap();
        assert_eq!(sc.specs.len(), 2);
        assert_eq!(sc.specs[1].pcc.price, 0.3);
        assert_eq!(sc.specs[0].pcc.price, 0.046);
        assert_eq!(sc.profiles.len(), 96);
        assert_eq!(sc.training().steps, 4);
        let z_base = HOST_KV * HOST_KV * 1000.0 / BASE_POWER_KVA;
        let (r, _) = sc.grid.branches()[0].impedance();
        assert!((r - 16.0 / z_base).abs() < 1e-15);
    }

    #[test]
    fn serialised_file_parses_back() {
        let file = ScenarioFile::parse(MINIMAL, Path::new("mem.toml")).unwrap();
        let again = ScenarioFile::parse(&file.to_toml(), Path::new("mem.toml")).unwrap();
        assert_eq!(again, file);
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let text = MINIMAL.replace("days = 1", "days = 1\nweather = \"api\"");
        assert!(matches!(ScenarioFile::parse(&text, Path::new("x.toml")), Err(ScenarioError::Toml { .. })));
    }

    #[test]
    fn row_filters() {
        let f = parse_row_filters(&["dg-p@1".into(), "voltage".into()]).unwrap();
        assert_eq!(f[0], RowFilter { kind: ConstraintKind::DgP, mg: Some(1) });
        assert_eq!(f[1].mg, None);
        assert!(parse_row_filters(&["voltage@0".into()]).is_err());
        assert!(parse_row_filters(&["fuel".into()]).is_err());
    }
}
