//! Scenario configuration, the four presets and run orchestration.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::energy::{PhyState, Power, PowerProfile};
use crate::engine::{EngineError, SimDuration, SimTime};
use crate::mme::{PolicyKind, RandomOffSchedule};
use crate::mobility::{place_uniform, MobilitySpec, Position, Rect};
use crate::node::{BsId, UeId};
use crate::rng::{RandomSource, Stream};
use crate::traffic::{FlowSpec, ServiceModel};
use crate::world::{RunOutcome, Simulation, WorldError, WorldSpec};

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("unknown preset {0:?} (expected default, random, ue_aware or data_aware)")]
    UnknownPreset(String),
    #[error("invalid scenario: {0}")]
    Invalid(String),
    #[error("reading {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("parsing {path}: {source}")]
    Parse {
        path: String,
        #[source]
        source: toml::de::Error,
    },
    #[error("building the network: {0}")]
    Build(#[source] WorldError),
    #[error("simulation failed: {0}")]
    Run(#[source] EngineError<WorldError>),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Preset {
    Default,
    Random,
    UeAware,
    DataAware,
}

impl Preset {
    pub const ALL: [Preset; 4] = [Preset::Default, Preset::Random, Preset::UeAware, Preset::DataAware];

    pub fn as_str(self) -> &'static str {
        match self {
            Preset::Default => "default",
            Preset::Random => "random",
            Preset::UeAware => "ue_aware",
            Preset::DataAware => "data_aware",
        }
    }

    pub fn policy(self) -> PolicyKind {
        match self {
            Preset::Default => PolicyKind::AlwaysOn,
            Preset::Random => PolicyKind::RandomOff,
            Preset::UeAware => PolicyKind::UeAware,
            Preset::DataAware => PolicyKind::UeDataAware,
        }
    }
}

impl fmt::Display for Preset {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Preset {
    type Err = ScenarioError;

    fn from_str(s: &str) -> Result<Self, ScenarioError> {
        Preset::ALL.into_iter().find(|p| p.as_str() == s).ok_or_else(|| ScenarioError::UnknownPreset(s.to_string()))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum MobilityConfig {
    ConstantPosition,
    RandomWalk2d { speed_mps: f64, heading_change_s: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BsConfig {
    pub id: u32,
    /// Drawn uniformly over the area when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub position: Option<Position>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct UeConfig {
    pub id: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub position: Option<Position>,
    pub mobility: MobilityConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FlowConfig {
    pub ue: u32,
    pub packet_bytes: u32,
    pub interval_s: f64,
    pub start_s: f64,
    pub stop_s: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ServiceConfig {
    pub data_rate_bps: u64,
    pub ctrl_overhead_s: f64,
}

impl Default for ServiceConfig {
    fn default() -> Self {
        ServiceConfig { data_rate_bps: 100_000_000, ctrl_overhead_s: 200e-6 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Thresholds {
    pub deep_sleep_s: f64,
    pub idle_off_s: f64,
    pub tick_s: f64,
    pub ho_ctrl_s: f64,
    pub mobility_step_s: f64,
    pub off_window_s: f64,
}

impl Default for Thresholds {
    fn default() -> Self {
        Thresholds {
            deep_sleep_s: 1.0,
            idle_off_s: 1.0,
            tick_s: 0.1,
            ho_ctrl_s: 0.005,
            mobility_step_s: 0.1,
            off_window_s: 2.0,
        }
    }
}

/// State name to watts. States left out keep their default draw.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PowerConfig {
    pub ue: BTreeMap<String, f64>,
    pub bs: BTreeMap<String, f64>,
}

fn profile_watts(p: &PowerProfile, states: &[PhyState]) -> BTreeMap<String, f64> {
    states.iter().map(|s| (s.as_str().to_ascii_lowercase(), p.power(*s).as_watts())).collect()
}

impl Default for PowerConfig {
    fn default() -> Self {
        PowerConfig {
            ue: profile_watts(&PowerProfile::default_ue(), &PhyState::UE_STATES),
            bs: profile_watts(&PowerProfile::default_bs(), &PhyState::ALL),
        }
    }
}

fn build_profile(
    mut base: PowerProfile,
    entries: &BTreeMap<String, f64>,
    who: &str,
    allowed: &[PhyState],
) -> Result<PowerProfile, ScenarioError> {
    for (name, &w) in entries {
        let s: PhyState = name.parse().map_err(|e| ScenarioError::Invalid(format!("power.{who}: {e}")))?;
        if !allowed.contains(&s) {
            return Err(ScenarioError::Invalid(format!("power.{who}: {s} not a {who} state")));
        }
        let p =
            Power::from_watts(w).ok_or_else(|| ScenarioError::Invalid(format!("power.{who}.{name}: bad draw {w}")))?;
        base.set(s, p);
    }
    Ok(base)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OffWindow {
    pub bs: u32,
    pub start_s: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub policy: PolicyKind,
    pub seed: u64,
    pub duration_s: f64,
    pub area: Rect,
    #[serde(default)]
    pub thresholds: Thresholds,
    #[serde(default)]
    pub service: ServiceConfig,
    #[serde(default)]
    pub power: PowerConfig,
    #[serde(default)]
    pub bss: Vec<BsConfig>,
    #[serde(default)]
    pub ues: Vec<UeConfig>,
    #[serde(default)]
    pub flows: Vec<FlowConfig>,
    /// Fixed off-window starts for `random_off`; drawn from the seed when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub off_windows: Option<Vec<OffWindow>>,
}

pub const DEFAULT_DURATION_S: f64 = 11.24;
const AREA_SIDE: f64 = 1000.0;
const NODES: u32 = 10;
const WALK_SPEED: f64 = 5.0;
const FLOW_BYTES: u32 = 1000;
const FLOW_INTERVAL_S: f64 = 0.02;

fn walk() -> MobilityConfig {
    MobilityConfig::RandomWalk2d { speed_mps: WALK_SPEED, heading_change_s: 1.0 }
}

fn cbr(ue: u32, duration_s: f64) -> FlowConfig {
    FlowConfig { ue, packet_bytes: FLOW_BYTES, interval_s: FLOW_INTERVAL_S, start_s: 0.0, stop_s: duration_s }
}

/// Point uniformly inside a disc, at least `min_r` from its centre.
fn near(c: Position, min_r: f64, max_r: f64, rng: &mut RandomSource) -> Position {
    let r = rng.uniform(min_r, max_r);
    let a = rng.uniform(0.0, std::f64::consts::TAU);
    Position::new(c.x + r * a.cos(), c.y + r * a.sin())
}

pub fn preset(which: Preset, seed: u64) -> ScenarioConfig {
    let area = Rect::square(AREA_SIDE);
    let base = ScenarioConfig {
        policy: which.policy(),
        seed,
        duration_s: DEFAULT_DURATION_S,
        area,
        thresholds: Thresholds::default(),
        service: ServiceConfig::default(),
        power: PowerConfig::default(),
        bss: Vec::new(),
        ues: Vec::new(),
        flows: Vec::new(),
        off_windows: None,
    };
    if which != Preset::DataAware {
        return ScenarioConfig {
            bss: (1..=NODES).map(|id| BsConfig { id, position: None }).collect(),
            ues: (1..=NODES).map(|id| UeConfig { id, position: None, mobility: walk() }).collect(),
            flows: (1..=NODES).map(|ue| cbr(ue, DEFAULT_DURATION_S)).collect(),
            ..base
        };
    }

    // One lone BS with four app-less UEs around it, nine BSs on a grid in
    // the far half carrying six app-bearing UEs.
    let mut rng = RandomSource::new(seed, Stream::Topology);
    let lone = Position::new(100.0, 100.0);
    let grid: Vec<Position> =
        [600.0, 750.0, 900.0].iter().flat_map(|&y| [600.0, 750.0, 900.0].map(|x| Position::new(x, y))).collect();
    let mut bss = vec![BsConfig { id: 1, position: Some(lone) }];
    bss.extend(grid.iter().enumerate().map(|(i, p)| BsConfig { id: i as u32 + 2, position: Some(*p) }));
    let still = MobilityConfig::ConstantPosition;
    let mut ues: Vec<UeConfig> =
        (1..=4).map(|id| UeConfig { id, position: Some(near(lone, 5.0, 30.0, &mut rng)), mobility: still }).collect();
    for id in 5..=10 {
        let host = grid[rng.below(grid.len() as u32) as usize];
        ues.push(UeConfig { id, position: Some(near(host, 5.0, 30.0, &mut rng)), mobility: still });
    }
    ScenarioConfig { bss, ues, flows: (5..=10).map(|ue| cbr(ue, DEFAULT_DURATION_S)).collect(), ..base }
}

fn secs_time(s: f64) -> SimTime {
    SimTime::from_secs_f64(s)
}

fn secs_span(s: f64) -> SimDuration {
    SimDuration::from_secs_f64(s)
}

impl ScenarioConfig {
    pub fn from_toml_str(text: &str, origin: &str) -> Result<Self, ScenarioError> {
        toml::from_str(text).map_err(|source| ScenarioError::Parse { path: origin.to_string(), source })
    }

    pub fn load(path: &Path) -> Result<Self, ScenarioError> {
        let text = std::fs::read_to_string(path)
            .map_err(|source| ScenarioError::Io { path: path.display().to_string(), source })?;
        Self::from_toml_str(&text, &path.display().to_string())
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config is always representable")
    }

    /// Clears every flow.
    pub fn without_traffic(mut self) -> Self {
        self.flows.clear();
        self
    }

    pub fn validate(&self) -> Result<(), ScenarioError> {
        let bad = |m: String| Err(ScenarioError::Invalid(m));
        if !(self.duration_s.is_finite() && self.duration_s > 0.0) {
            return bad(format!("duration must be > 0 (got {})", self.duration_s));
        }
        if !self.area.is_valid() {
            return bad("area bounds are not a valid rectangle".into());
        }
        let t = &self.thresholds;
        for (name, v, strict) in [
            ("deep_sleep_s", t.deep_sleep_s, true),
            ("idle_off_s", t.idle_off_s, false),
            ("tick_s", t.tick_s, true),
            ("ho_ctrl_s", t.ho_ctrl_s, false),
            ("mobility_step_s", t.mobility_step_s, true),
            ("off_window_s", t.off_window_s, false),
        ] {
            if !v.is_finite() || v < 0.0 || (strict && secs_span(v).is_zero()) {
                return bad(format!("thresholds.{name} out of range: {v}"));
            }
        }
        if self.service.data_rate_bps == 0 {
            return bad("service.data_rate_bps must be > 0".into());
        }
        if !(self.service.ctrl_overhead_s.is_finite() && self.service.ctrl_overhead_s >= 0.0) {
            return bad("service.ctrl_overhead_s must be >= 0".into());
        }
        let mut bs_ids = BTreeSet::new();
        for b in &self.bss {
            if !bs_ids.insert(b.id) {
                return bad(format!("duplicate bs id {}", b.id));
            }
            if let Some(p) = b.position {
                if !self.area.contains(&p) {
                    return bad(format!("bs {} placed outside the area", b.id));
                }
            }
        }
        let mut ue_ids = BTreeSet::new();
        for u in &self.ues {
            if !ue_ids.insert(u.id) {
                return bad(format!("duplicate ue id {}", u.id));
            }
            if let Some(p) = u.position {
                if !self.area.contains(&p) {
                    return bad(format!("ue {} placed outside the area", u.id));
                }
            }
            self.mobility_spec(&u.mobility)
                .validate()
                .map_err(|e| ScenarioError::Invalid(format!("ue {}: {e}", u.id)))?;
        }
        if !self.ues.is_empty() && self.bss.is_empty() {
            return bad("UEs configured but no base stations".into());
        }
        for f in &self.flows {
            if !ue_ids.contains(&f.ue) {
                return bad(format!("flow references unknown ue {}", f.ue));
            }
            if !(f.interval_s.is_finite() && f.start_s.is_finite() && f.stop_s.is_finite() && f.start_s >= 0.0) {
                return bad(format!("flow for ue {}: times must be finite and non-negative", f.ue));
            }
            self.flow_spec(f).validate().map_err(|e| ScenarioError::Invalid(e.to_string()))?;
        }
        if let Some(ws) = &self.off_windows {
            for w in ws {
                if !bs_ids.contains(&w.bs) {
                    return bad(format!("off window for unknown bs {}", w.bs));
                }
            }
        }
        self.profiles()?;
        Ok(())
    }

    fn mobility_spec(&self, m: &MobilityConfig) -> MobilitySpec {
        match *m {
            MobilityConfig::ConstantPosition => MobilitySpec::constant(self.area),
            MobilityConfig::RandomWalk2d { speed_mps, heading_change_s } => {
                MobilitySpec::random_walk(speed_mps, secs_span(heading_change_s), self.area)
            }
        }
    }

    fn flow_spec(&self, f: &FlowConfig) -> FlowSpec {
        FlowSpec {
            ue: UeId(f.ue),
            packet_size: f.packet_bytes,
            interval: secs_span(f.interval_s),
            start: secs_time(f.start_s),
            stop: secs_time(f.stop_s),
        }
    }

    fn profiles(&self) -> Result<(PowerProfile, PowerProfile), ScenarioError> {
        let ue = build_profile(PowerProfile::default_ue(), &self.power.ue, "ue", &PhyState::UE_STATES)?;
        let bs = build_profile(PowerProfile::default_bs(), &self.power.bs, "bs", &PhyState::ALL)?;
        Ok((ue, bs))
    }

    /// Resolves automatic placements (BSs first, then UEs, in list order)
    /// from the topology stream and converts to simulator units.
    pub fn world_spec(&self, record_events: bool) -> Result<WorldSpec, ScenarioError> {
        self.validate()?;
        let mut rng = RandomSource::new(self.seed, Stream::Topology);
        let mut resolve = |p: Option<Position>| p.unwrap_or_else(|| place_uniform(1, &self.area, &mut rng)[0]);
        let bss: Vec<(BsId, Position)> = self.bss.iter().map(|b| (BsId(b.id), resolve(b.position))).collect();
        let ues = self.ues.iter().map(|u| (UeId(u.id), resolve(u.position), self.mobility_spec(&u.mobility))).collect();
        let (ue_profile, bs_profile) = self.profiles()?;
        let t = &self.thresholds;
        let random_schedule = self.off_windows.as_ref().map(|ws| RandomOffSchedule {
            windows: ws.iter().map(|w| (BsId(w.bs), SimTime::from_secs(u64::from(w.start_s)))).collect(),
            length: secs_span(t.off_window_s),
        });
        Ok(WorldSpec {
            policy: self.policy,
            seed: self.seed,
            end: secs_time(self.duration_s),
            bss,
            ues,
            flows: self.flows.iter().map(|f| self.flow_spec(f)).collect(),
            ue_profile,
            bs_profile,
            service: ServiceModel {
                data_rate_bps: self.service.data_rate_bps,
                ctrl_overhead: secs_span(self.service.ctrl_overhead_s),
            },
            deep_sleep_after: secs_span(t.deep_sleep_s),
            idle_off: secs_span(t.idle_off_s),
            tick: secs_span(t.tick_s),
            ho_ctrl: secs_span(t.ho_ctrl_s),
            mobility_step: secs_span(t.mobility_step_s),
            off_window: secs_span(t.off_window_s),
            random_schedule,
            record_events,
        })
    }
}

impl MobilityConfig {
    pub fn is_static(&self) -> bool {
        matches!(self, MobilityConfig::ConstantPosition)
    }
}

pub fn run(config: &ScenarioConfig) -> Result<RunOutcome, ScenarioError> {
    run_with(config, false)
}

/// Like [`run`], optionally keeping the engine's event log.
pub fn run_with(config: &ScenarioConfig, record_events: bool) -> Result<RunOutcome, ScenarioError> {
    let spec = config.world_spec(record_events)?;
    let sim = Simulation::new(spec).map_err(ScenarioError::Build)?;
    sim.run().map_err(ScenarioError::Run)
}
