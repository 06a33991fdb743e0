//! Scenario files.
//!
//! Line oriented, UTF-8:
//!
//! ```text
//! # comment
//! [traffic]
//! v_kmh = 80
//! [mac]
//! cw_min = 64
//! ```
//!
//! Units are part of the key names. Every key has a default, so an empty
//! file is a complete scenario. Unknown sections or keys, repeated keys and
//! malformed lines are errors. [`Scenario::echo`] writes the fully resolved
//! scenario back out in the same format.

use std::fmt::Write as _;
use std::path::Path;

use sha2::{Digest, Sha256};

use crate::dcf::{MacParams, DEFAULT_TOLERANCE};
use crate::error::{Error, Result};
use crate::optimize::{OptimizationRequest, DEFAULT_DELAY_BOUND};
use crate::pipeline::{DelayMetric, Model, PopulationMode};
use crate::queue::QueueParams;
use crate::sim::SimConfig;
use crate::traffic::{self, FlowRegime, TrafficParams, KMH_TO_MS};

/// How the vehicle speed is specified.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SpeedSpec {
    Speed { v_kmh: f64 },
    /// Flow rate in veh/s; the speed is the matching root of the
    /// flow-speed parabola.
    Flow { veh_s: f64 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrafficSection {
    pub k_jam_veh_km: f64,
    pub v_f_kmh: f64,
    pub l_cov_m: f64,
    pub speed: SpeedSpec,
    pub flow_regime: FlowRegime,
    /// Forces the station count instead of deriving it from traffic.
    pub n_stations: Option<u32>,
    pub population: PopulationMode,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MacSection {
    pub cw_min: u32,
    pub m: u32,
    pub m_min: u32,
    pub m_max: u32,
    pub slot_us: f64,
    pub sifs_us: f64,
    pub difs_us: f64,
    pub ack_us: f64,
    pub header_bits: f64,
    pub prop_delay_us: f64,
    pub rate_bps: f64,
    pub payload_bytes: f64,
    pub solver_tolerance: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct QueueSection {
    pub capacity_k: u32,
    pub lambda_pkt_s: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepSection {
    /// `section.key` of the swept setting.
    pub variable: Option<String>,
    pub from: f64,
    pub to: f64,
    pub step: f64,
    /// Explicit values; when non-empty they replace `from`/`to`/`step`.
    pub values: Vec<f64>,
    /// Pick the best retry limit at every sweep point.
    pub optimize_m: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct OptimizeSection {
    pub delay_bound_s: f64,
    pub delay_metric: DelayMetric,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimSection {
    pub horizon_slots: u64,
    pub seed: u64,
    pub replications: u32,
    pub tolerance_pct: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub traffic: TrafficSection,
    pub mac: MacSection,
    pub queue: QueueSection,
    pub sweep: SweepSection,
    pub optimize: OptimizeSection,
    pub sim: SimSection,
}

impl Default for Scenario {
    fn default() -> Self {
        let mac = MacParams::default();
        let queue = QueueParams::default();
        Scenario {
            traffic: TrafficSection {
                k_jam_veh_km: 120.0,
                v_f_kmh: 160.0,
                l_cov_m: 1000.0,
                speed: SpeedSpec::Speed { v_kmh: 80.0 },
                flow_regime: FlowRegime::Uncongested,
                n_stations: None,
                population: PopulationMode::Point,
            },
            mac: MacSection {
                cw_min: mac.cw_min,
                m: mac.max_stage,
                m_min: 0,
                m_max: 10,
                slot_us: 50.0,
                sifs_us: 10.0,
                difs_us: 50.0,
                ack_us: 50.0,
                header_bits: mac.header_bits,
                prop_delay_us: 1.0,
                rate_bps: mac.channel_rate,
                payload_bytes: 1000.0,
                solver_tolerance: DEFAULT_TOLERANCE,
            },
            queue: QueueSection {
                capacity_k: queue.capacity,
                lambda_pkt_s: queue.arrival_rate,
            },
            sweep: SweepSection {
                variable: None,
                from: 0.0,
                to: 0.0,
                step: 1.0,
                values: Vec::new(),
                optimize_m: false,
            },
            optimize: OptimizeSection {
                delay_bound_s: DEFAULT_DELAY_BOUND,
                delay_metric: DelayMetric::Weighted,
            },
            sim: SimSection {
                horizon_slots: 1_000_000,
                seed: 1,
                replications: 10,
                tolerance_pct: 5.0,
            },
        }
    }
}

const SECTIONS: [&str; 6] = ["traffic", "mac", "queue", "sweep", "optimize", "sim"];

fn parse_f64(v: &str) -> std::result::Result<f64, String> {
    let x: f64 = v.parse().map_err(|_| format!("expected a number, got `{v}`"))?;
    if x.is_finite() {
        Ok(x)
    } else {
        Err(format!("expected a finite number, got `{v}`"))
    }
}

fn parse_int<T: std::str::FromStr>(v: &str) -> std::result::Result<T, String> {
    v.parse()
        .map_err(|_| format!("expected a non-negative integer, got `{v}`"))
}

fn parse_bool(v: &str) -> std::result::Result<bool, String> {
    match v {
        "true" => Ok(true),
        "false" => Ok(false),
        _ => Err(format!("expected true or false, got `{v}`")),
    }
}

fn parse_list(v: &str) -> std::result::Result<Vec<f64>, String> {
    v.split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(parse_f64)
        .collect()
}

fn fmt_list(xs: &[f64]) -> String {
    xs.iter().map(f64::to_string).collect::<Vec<_>>().join(", ")
}

fn regime_name(r: FlowRegime) -> &'static str {
    match r {
        FlowRegime::Uncongested => "uncongested",
        FlowRegime::Congested => "congested",
    }
}

fn population_name(p: PopulationMode) -> &'static str {
    match p {
        PopulationMode::Point => "point",
        PopulationMode::Mixture => "mixture",
    }
}

fn delay_metric_name(d: DelayMetric) -> &'static str {
    match d {
        DelayMetric::Raw => "raw",
        DelayMetric::Weighted => "weighted",
    }
}

/// Result of applying one key.
enum SetError {
    UnknownKey,
    Invalid(String),
}

impl From<String> for SetError {
    fn from(s: String) -> Self {
        SetError::Invalid(s)
    }
}

impl Scenario {
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
        Self::parse(&text)
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut sc = Scenario::default();
        let mut section: Option<&str> = None;
        let mut seen: Vec<(String, String)> = Vec::new();
        for (idx, raw) in text.lines().enumerate() {
            let line = idx + 1;
            let content = raw.split('#').next().unwrap_or("").trim();
            if content.is_empty() {
                continue;
            }
            if let Some(name) = content.strip_prefix('[') {
                let name = name.strip_suffix(']').ok_or_else(|| Error::Parse {
                    line,
                    msg: format!("malformed section header `{content}`"),
                })?;
                let name = name.trim();
                section = Some(SECTIONS.iter().copied().find(|s| *s == name).ok_or_else(
                    || Error::Parse {
                        line,
                        msg: format!("unknown section [{name}]"),
                    },
                )?);
                continue;
            }
            let (key, value) = content.split_once('=').ok_or_else(|| Error::Parse {
                line,
                msg: format!("expected `key = value`, got `{content}`"),
            })?;
            let (key, value) = (key.trim(), value.trim());
            let sec = section.ok_or_else(|| Error::Parse {
                line,
                msg: format!("key `{key}` appears before any [section]"),
            })?;
            if seen.iter().any(|(s, k)| s == sec && k == key) {
                return Err(Error::Parse {
                    line,
                    msg: format!("duplicate key `{key}` in [{sec}]"),
                });
            }
            if sec == "traffic"
                && ((key == "v_kmh" && seen.iter().any(|(_, k)| k == "lambda_tag_veh_s"))
                    || (key == "lambda_tag_veh_s" && seen.iter().any(|(_, k)| k == "v_kmh")))
            {
                return Err(Error::Parse {
                    line,
                    msg: "set either v_kmh or lambda_tag_veh_s, not both".into(),
                });
            }
            match sc.apply(sec, key, value) {
                Ok(()) => {}
                Err(SetError::UnknownKey) => {
                    return Err(Error::UnknownKey {
                        section: sec.to_string(),
                        key: key.to_string(),
                    })
                }
                Err(SetError::Invalid(msg)) => return Err(Error::Parse { line, msg }),
            }
            seen.push((sec.to_string(), key.to_string()));
        }
        sc.validate()?;
        Ok(sc)
    }

    /// Sets one key, as if it had appeared in a file. `target` is
    /// `section.key`.
    pub fn set(&mut self, target: &str, value: &str) -> Result<()> {
        let (sec, key) = target.split_once('.').ok_or_else(|| Error::Parse {
            line: 0,
            msg: format!("setting must be `section.key`, got `{target}`"),
        })?;
        match self.apply(sec, key, value) {
            Ok(()) => self.validate(),
            Err(SetError::UnknownKey) => Err(Error::UnknownKey {
                section: sec.to_string(),
                key: key.to_string(),
            }),
            Err(SetError::Invalid(msg)) => Err(Error::Parse { line: 0, msg }),
        }
    }

    fn apply(&mut self, section: &str, key: &str, v: &str) -> std::result::Result<(), SetError> {
        match (section, key) {
            ("traffic", "k_jam_veh_km") => self.traffic.k_jam_veh_km = parse_f64(v)?,
            ("traffic", "v_f_kmh") => self.traffic.v_f_kmh = parse_f64(v)?,
            ("traffic", "l_cov_m") => self.traffic.l_cov_m = parse_f64(v)?,
            ("traffic", "v_kmh") => self.traffic.speed = SpeedSpec::Speed { v_kmh: parse_f64(v)? },
            ("traffic", "lambda_tag_veh_s") => {
                self.traffic.speed = SpeedSpec::Flow { veh_s: parse_f64(v)? }
            }
            ("traffic", "flow_regime") => {
                self.traffic.flow_regime = match v {
                    "uncongested" => FlowRegime::Uncongested,
                    "congested" => FlowRegime::Congested,
                    _ => return Err(format!("expected uncongested or congested, got `{v}`").into()),
                }
            }
            ("traffic", "n_stations") => {
                self.traffic.n_stations = match v {
                    "auto" => None,
                    _ => Some(parse_int(v)?),
                }
            }
            ("traffic", "population") => {
                self.traffic.population = match v {
                    "point" => PopulationMode::Point,
                    "mixture" => PopulationMode::Mixture,
                    _ => return Err(format!("expected point or mixture, got `{v}`").into()),
                }
            }
            ("mac", "cw_min") => self.mac.cw_min = parse_int(v)?,
            ("mac", "m") => self.mac.m = parse_int(v)?,
            ("mac", "m_min") => self.mac.m_min = parse_int(v)?,
            ("mac", "m_max") => self.mac.m_max = parse_int(v)?,
            ("mac", "slot_us") => self.mac.slot_us = parse_f64(v)?,
            ("mac", "sifs_us") => self.mac.sifs_us = parse_f64(v)?,
            ("mac", "difs_us") => self.mac.difs_us = parse_f64(v)?,
            ("mac", "ack_us") => self.mac.ack_us = parse_f64(v)?,
            ("mac", "header_bits") => self.mac.header_bits = parse_f64(v)?,
            ("mac", "prop_delay_us") => self.mac.prop_delay_us = parse_f64(v)?,
            ("mac", "rate_bps") => self.mac.rate_bps = parse_f64(v)?,
            ("mac", "payload_bytes") => self.mac.payload_bytes = parse_f64(v)?,
            ("mac", "solver_tolerance") => self.mac.solver_tolerance = parse_f64(v)?,
            ("queue", "capacity_k") => self.queue.capacity_k = parse_int(v)?,
            ("queue", "lambda_pkt_s") => self.queue.lambda_pkt_s = parse_f64(v)?,
            ("sweep", "variable") => {
                self.sweep.variable = match v {
                    "none" => None,
                    _ => Some(v.to_string()),
                }
            }
            ("sweep", "from") => self.sweep.from = parse_f64(v)?,
            ("sweep", "to") => self.sweep.to = parse_f64(v)?,
            ("sweep", "step") => self.sweep.step = parse_f64(v)?,
            ("sweep", "values") => self.sweep.values = parse_list(v)?,
            ("sweep", "optimize_m") => self.sweep.optimize_m = parse_bool(v)?,
            ("optimize", "delay_bound_s") => self.optimize.delay_bound_s = parse_f64(v)?,
            ("optimize", "delay_metric") => {
                self.optimize.delay_metric = match v {
                    "raw" => DelayMetric::Raw,
                    "weighted" => DelayMetric::Weighted,
                    _ => return Err(format!("expected raw or weighted, got `{v}`").into()),
                }
            }
            ("sim", "horizon_slots") => self.sim.horizon_slots = parse_int(v)?,
            ("sim", "seed") => self.sim.seed = parse_int(v)?,
            ("sim", "replications") => self.sim.replications = parse_int(v)?,
            ("sim", "tolerance_pct") => self.sim.tolerance_pct = parse_f64(v)?,
            _ => return Err(SetError::UnknownKey),
        }
        Ok(())
    }

    /// Range and consistency checks on the resolved values.
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::UnitViolation(msg));
        let t = &self.traffic;
        for (name, x) in [("k_jam_veh_km", t.k_jam_veh_km), ("v_f_kmh", t.v_f_kmh), ("l_cov_m", t.l_cov_m)] {
            if x <= 0.0 {
                return bad(format!("{name} must be > 0, got {x}"));
            }
        }
        match t.speed {
            SpeedSpec::Speed { v_kmh } => {
                if v_kmh <= 0.0 || v_kmh > t.v_f_kmh {
                    return bad(format!("v_kmh = {v_kmh} must lie in (0, v_f_kmh = {}]", t.v_f_kmh));
                }
            }
            SpeedSpec::Flow { veh_s } => {
                let max = t.k_jam_veh_km / 1000.0 * t.v_f_kmh * KMH_TO_MS / 4.0;
                if veh_s <= 0.0 || veh_s > max {
                    return bad(format!(
                        "lambda_tag_veh_s = {veh_s} must lie in (0, {max}] for this road"
                    ));
                }
            }
        }
        if t.n_stations == Some(0) {
            return bad("n_stations must be >= 1".into());
        }
        let m = &self.mac;
        if m.cw_min < 2 {
            return bad(format!("cw_min must be >= 2, got {}", m.cw_min));
        }
        if m.m > crate::optimize::MAX_RETRY_LIMIT {
            return bad(format!("m must be <= {}, got {}", crate::optimize::MAX_RETRY_LIMIT, m.m));
        }
        if m.m_min > m.m_max || m.m_max > crate::optimize::MAX_RETRY_LIMIT {
            return bad(format!(
                "need m_min <= m_max <= {}, got {}..{}",
                crate::optimize::MAX_RETRY_LIMIT,
                m.m_min,
                m.m_max
            ));
        }
        for (name, x) in [
            ("slot_us", m.slot_us),
            ("sifs_us", m.sifs_us),
            ("difs_us", m.difs_us),
            ("ack_us", m.ack_us),
            ("header_bits", m.header_bits),
            ("prop_delay_us", m.prop_delay_us),
        ] {
            if x < 0.0 {
                return bad(format!("{name} must be >= 0, got {x}"));
            }
        }
        for (name, x) in [
            ("rate_bps", m.rate_bps),
            ("payload_bytes", m.payload_bytes),
            ("solver_tolerance", m.solver_tolerance),
        ] {
            if x <= 0.0 {
                return bad(format!("{name} must be > 0, got {x}"));
            }
        }
        if self.queue.capacity_k < 1 {
            return bad("capacity_k must be >= 1".into());
        }
        if self.queue.lambda_pkt_s < 0.0 {
            return bad(format!("lambda_pkt_s must be >= 0, got {}", self.queue.lambda_pkt_s));
        }
        let s = &self.sweep;
        if s.variable.is_some() && s.values.is_empty() {
            if s.step <= 0.0 {
                return bad(format!("sweep step must be > 0, got {}", s.step));
            }
            if s.to < s.from {
                return bad(format!("sweep needs from <= to, got {}..{}", s.from, s.to));
            }
        }
        if self.optimize.delay_bound_s <= 0.0 {
            return bad(format!("delay_bound_s must be > 0, got {}", self.optimize.delay_bound_s));
        }
        if self.sim.horizon_slots < crate::sim::MIN_HORIZON {
            return bad(format!(
                "horizon_slots must be >= {}, got {}",
                crate::sim::MIN_HORIZON,
                self.sim.horizon_slots
            ));
        }
        if self.sim.replications < 1 {
            return bad("replications must be >= 1".into());
        }
        if self.sim.tolerance_pct <= 0.0 {
            return bad(format!("tolerance_pct must be > 0, got {}", self.sim.tolerance_pct));
        }
        Ok(())
    }

    /// The resolved scenario in file form. Parsing it yields `self`.
    pub fn echo(&self) -> String {
        let t = &self.traffic;
        let m = &self.mac;
        let s = &self.sweep;
        let speed = match t.speed {
            SpeedSpec::Speed { v_kmh } => ("v_kmh", v_kmh.to_string()),
            SpeedSpec::Flow { veh_s } => ("lambda_tag_veh_s", veh_s.to_string()),
        };
        let sections: [(&str, Vec<(&str, String)>); 6] = [
            (
                "traffic",
                vec![
                    ("k_jam_veh_km", t.k_jam_veh_km.to_string()),
                    ("v_f_kmh", t.v_f_kmh.to_string()),
                    ("l_cov_m", t.l_cov_m.to_string()),
                    speed,
                    ("flow_regime", regime_name(t.flow_regime).into()),
                    ("n_stations", t.n_stations.map_or("auto".into(), |n| n.to_string())),
                    ("population", population_name(t.population).into()),
                ],
            ),
            (
                "mac",
                vec![
                    ("cw_min", m.cw_min.to_string()),
                    ("m", m.m.to_string()),
                    ("m_min", m.m_min.to_string()),
                    ("m_max", m.m_max.to_string()),
                    ("slot_us", m.slot_us.to_string()),
                    ("sifs_us", m.sifs_us.to_string()),
                    ("difs_us", m.difs_us.to_string()),
                    ("ack_us", m.ack_us.to_string()),
                    ("header_bits", m.header_bits.to_string()),
                    ("prop_delay_us", m.prop_delay_us.to_string()),
                    ("rate_bps", m.rate_bps.to_string()),
                    ("payload_bytes", m.payload_bytes.to_string()),
                    ("solver_tolerance", m.solver_tolerance.to_string()),
                ],
            ),
            (
                "queue",
                vec![
                    ("capacity_k", self.queue.capacity_k.to_string()),
                    ("lambda_pkt_s", self.queue.lambda_pkt_s.to_string()),
                ],
            ),
            (
                "sweep",
                vec![
                    ("variable", s.variable.clone().unwrap_or_else(|| "none".into())),
                    ("from", s.from.to_string()),
                    ("to", s.to.to_string()),
                    ("step", s.step.to_string()),
                    ("values", fmt_list(&s.values)),
                    ("optimize_m", s.optimize_m.to_string()),
                ],
            ),
            (
                "optimize",
                vec![
                    ("delay_bound_s", self.optimize.delay_bound_s.to_string()),
                    ("delay_metric", delay_metric_name(self.optimize.delay_metric).into()),
                ],
            ),
            (
                "sim",
                vec![
                    ("horizon_slots", self.sim.horizon_slots.to_string()),
                    ("seed", self.sim.seed.to_string()),
                    ("replications", self.sim.replications.to_string()),
                    ("tolerance_pct", self.sim.tolerance_pct.to_string()),
                ],
            ),
        ];
        let mut out = String::new();
        for (name, keys) in sections {
            writeln!(out, "[{name}]").unwrap();
            for (k, v) in keys {
                writeln!(out, "{k} = {v}").unwrap();
            }
        }
        out
    }

    /// First 16 hex digits of the SHA-256 of [`Scenario::echo`].
    pub fn hash(&self) -> String {
        let digest = Sha256::digest(self.echo().as_bytes());
        digest[..8].iter().map(|b| format!("{b:02x}")).collect()
    }

    pub fn traffic_params(&self) -> Result<TrafficParams> {
        let t = &self.traffic;
        TrafficParams::from_road_units(t.k_jam_veh_km, t.v_f_kmh, t.l_cov_m)
    }

    pub fn speed_ms(&self) -> Result<f64> {
        match self.traffic.speed {
            SpeedSpec::Speed { v_kmh } => Ok(v_kmh * KMH_TO_MS),
            SpeedSpec::Flow { veh_s } => {
                traffic::speed_for_flow(&self.traffic_params()?, veh_s, self.traffic.flow_regime)
            }
        }
    }

    pub fn mac_params(&self) -> MacParams {
        let m = &self.mac;
        MacParams {
            cw_min: m.cw_min,
            max_stage: m.m,
            slot: m.slot_us / 1e6,
            sifs: m.sifs_us / 1e6,
            difs: m.difs_us / 1e6,
            ack: m.ack_us / 1e6,
            header_bits: m.header_bits,
            prop_delay: m.prop_delay_us / 1e6,
            channel_rate: m.rate_bps,
            payload_bits: m.payload_bytes * 8.0,
        }
    }

    pub fn model(&self) -> Result<Model> {
        Ok(Model {
            traffic: self.traffic_params()?,
            speed: self.speed_ms()?,
            mac: self.mac_params(),
            queue: QueueParams {
                capacity: self.queue.capacity_k,
                arrival_rate: self.queue.lambda_pkt_s,
            },
            stations: self.traffic.n_stations,
            mode: self.traffic.population,
            tolerance: self.mac.solver_tolerance,
        })
    }

    pub fn optimization_request(&self) -> Result<OptimizationRequest> {
        Ok(OptimizationRequest {
            model: self.model()?,
            m_lo: self.mac.m_min,
            m_hi: self.mac.m_max,
            delay_bound: self.optimize.delay_bound_s,
            delay_metric: self.optimize.delay_metric,
        })
    }

    /// Simulation of the point-mode station count.
    pub fn sim_config(&self) -> Result<SimConfig> {
        Ok(SimConfig {
            n: self.model()?.stations()?,
            mac: self.mac_params(),
            horizon_slots: self.sim.horizon_slots,
            seed: self.sim.seed,
            replications: self.sim.replications,
        })
    }

    /// Sweep points in order. Empty when no sweep variable is set.
    pub fn sweep_values(&self) -> Vec<f64> {
        let s = &self.sweep;
        if s.variable.is_none() {
            return Vec::new();
        }
        if !s.values.is_empty() {
            return s.values.clone();
        }
        let count = ((s.to - s.from) / s.step + 1e-9).floor() as usize + 1;
        (0..count).map(|i| s.from + i as f64 * s.step).collect()
    }

    /// Copy of this scenario with the sweep variable set to `value`.
    pub fn at_sweep_value(&self, value: f64) -> Result<Scenario> {
        let var = self
            .sweep
            .variable
            .as_deref()
            .ok_or_else(|| Error::UnitViolation("no sweep variable set".into()))?;
        if var.starts_with("sweep.") {
            return Err(Error::UnitViolation(format!("cannot sweep `{var}`")));
        }
        let mut sc = self.clone();
        sc.set(var, &value.to_string())?;
        Ok(sc)
    }
}
