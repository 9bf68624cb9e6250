//! Simulator configuration: defaults, named presets and a flat
//! `key = value` text format.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::cachemem::Geometry;
use crate::consistency::MemoryModel;
use crate::directory::MAX_CORES;
use crate::engine::fabric::LatencyParams;
use crate::engine::network::NetworkParams;
use crate::livelock::DetectorParams;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Protocol {
    Tardis,
    Directory,
}

impl fmt::Display for Protocol {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Protocol::Tardis => "tardis",
            Protocol::Directory => "directory",
        })
    }
}

impl FromStr for Protocol {
    type Err = ConfigError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "tardis" => Ok(Protocol::Tardis),
            "directory" | "dir" => Ok(Protocol::Directory),
            _ => Err(ConfigError::Value {
                key: "protocol".into(),
                value: s.into(),
            }),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ScheduleMode {
    /// Round robin from a rotating start with seeded random skips.
    Interleave,
    /// Round robin in core order, no skips.
    Lockstep,
    /// Each core runs to completion before the next starts.
    Sequential,
}

impl fmt::Display for ScheduleMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ScheduleMode::Interleave => "interleave",
            ScheduleMode::Lockstep => "lockstep",
            ScheduleMode::Sequential => "sequential",
        })
    }
}

impl FromStr for ScheduleMode {
    type Err = ConfigError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "interleave" => Ok(ScheduleMode::Interleave),
            "lockstep" => Ok(ScheduleMode::Lockstep),
            "sequential" => Ok(ScheduleMode::Sequential),
            _ => Err(ConfigError::Value {
                key: "schedule".into(),
                value: s.into(),
            }),
        }
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum ConfigError {
    #[error("unknown config key `{0}`")]
    UnknownKey(String),
    #[error("bad value `{value}` for `{key}`")]
    Value { key: String, value: String },
    #[error("line {line}: expected `key = value`")]
    Syntax { line: usize },
    #[error("unknown preset `{0}`")]
    UnknownPreset(String),
    #[error("invalid configuration: {0}")]
    Invalid(String),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    pub cores: usize,
    pub model: MemoryModel,
    pub protocol: Protocol,
    pub mesi: bool,
    pub static_lease: u64,
    pub lease_predictor: bool,
    pub livelock_detector: bool,
    pub detector: DetectorParams,
    /// Loads+stores between forced clock increments; `None` picks the
    /// default for the detector setting, 0 disables.
    pub self_increment_period: Option<u64>,
    pub l1: Geometry,
    pub llc: Geometry,
    /// Store buffer entries; 0 makes every store commit in place. Ignored
    /// under SC.
    pub store_buffer: usize,
    pub skip_prob: f64,
    pub schedule: ScheduleMode,
    pub max_cycles: u64,
    pub check_invariants: bool,
    pub record_events: bool,
    pub latency: LatencyParams,
    pub net: NetworkParams,
}

impl Default for SimConfig {
    fn default() -> Self {
        SimConfig {
            cores: 4,
            model: MemoryModel::Tso,
            protocol: Protocol::Tardis,
            mesi: true,
            static_lease: 8,
            lease_predictor: false,
            livelock_detector: false,
            detector: DetectorParams::default(),
            self_increment_period: None,
            l1: Geometry {
                size_bytes: 32 * 1024,
                ways: 4,
                line_bytes: 64,
            },
            llc: Geometry {
                size_bytes: 256 * 1024,
                ways: 8,
                line_bytes: 64,
            },
            store_buffer: 8,
            skip_prob: 0.25,
            schedule: ScheduleMode::Interleave,
            max_cycles: 50_000_000,
            check_invariants: false,
            record_events: false,
            latency: LatencyParams::default(),
            net: NetworkParams::default(),
        }
    }
}

fn parse_bool(key: &str, v: &str) -> Result<bool, ConfigError> {
    match v.to_ascii_lowercase().as_str() {
        "on" | "true" | "yes" | "1" => Ok(true),
        "off" | "false" | "no" | "0" => Ok(false),
        _ => Err(ConfigError::Value {
            key: key.into(),
            value: v.into(),
        }),
    }
}

fn parse_num<T: FromStr>(key: &str, v: &str) -> Result<T, ConfigError> {
    v.parse().map_err(|_| ConfigError::Value {
        key: key.into(),
        value: v.into(),
    })
}

fn on_off(b: bool) -> &'static str {
    if b {
        "on"
    } else {
        "off"
    }
}

pub const PRESETS: &[&str] = &["directory", "tardis-base", "tardis-live", "tardis-opt", "fig1", "fig2"];

impl SimConfig {
    /// Named starting points. The `tardis-*` family adds optimizations in
    /// order: base, livelock detector, detector plus lease predictor.
    pub fn preset(name: &str) -> Result<SimConfig, ConfigError> {
        let d = SimConfig::default();
        Ok(match name {
            "directory" => SimConfig {
                protocol: Protocol::Directory,
                ..d
            },
            "tardis-base" => d,
            "tardis-live" => SimConfig {
                livelock_detector: true,
                ..d
            },
            "tardis-opt" => SimConfig {
                livelock_detector: true,
                lease_predictor: true,
                ..d
            },
            "fig1" | "fig2" => SimConfig {
                cores: 2,
                model: if name == "fig1" {
                    MemoryModel::Sc
                } else {
                    MemoryModel::Tso
                },
                mesi: false,
                static_lease: 10,
                self_increment_period: Some(0),
                store_buffer: 0,
                schedule: ScheduleMode::Sequential,
                ..d
            },
            _ => return Err(ConfigError::UnknownPreset(name.into())),
        })
    }

    pub fn effective_self_increment(&self) -> u64 {
        self.self_increment_period
            .unwrap_or(if self.livelock_detector { 1000 } else { 100 })
    }

    pub fn effective_store_buffer(&self) -> usize {
        if self.model == MemoryModel::Sc {
            0
        } else {
            self.store_buffer
        }
    }

    pub fn set(&mut self, key: &str, v: &str) -> Result<(), ConfigError> {
        let v = v.trim();
        match key {
            "preset" => *self = SimConfig::preset(v)?,
            "cores" => self.cores = parse_num(key, v)?,
            "model" => {
                self.model = v.parse().map_err(|_| ConfigError::Value {
                    key: key.into(),
                    value: v.into(),
                })?
            }
            "protocol" => self.protocol = v.parse()?,
            "mesi" => self.mesi = parse_bool(key, v)?,
            "static_lease" => self.static_lease = parse_num(key, v)?,
            "lease_predictor" => self.lease_predictor = parse_bool(key, v)?,
            "livelock_detector" => self.livelock_detector = parse_bool(key, v)?,
            "ahb_entries" => self.detector.ahb_entries = parse_num(key, v)?,
            "thresh_min" => self.detector.min_count = parse_num(key, v)?,
            "thresh_max" => self.detector.max_count = parse_num(key, v)?,
            "check_thresh" => self.detector.check_thresh = parse_num(key, v)?,
            "self_increment_period" => {
                self.self_increment_period = if v == "default" {
                    None
                } else {
                    Some(parse_num(key, v)?)
                }
            }
            "l1_kb" => self.l1.size_bytes = parse_num::<usize>(key, v)? * 1024,
            "l1_ways" => self.l1.ways = parse_num(key, v)?,
            "llc_kb" => self.llc.size_bytes = parse_num::<usize>(key, v)? * 1024,
            "llc_ways" => self.llc.ways = parse_num(key, v)?,
            "line_bytes" => {
                let b: usize = parse_num(key, v)?;
                self.l1.line_bytes = b;
                self.llc.line_bytes = b;
                self.net.line_bytes = b as u64;
            }
            "store_buffer" => self.store_buffer = parse_num(key, v)?,
            "skip_prob" => self.skip_prob = parse_num(key, v)?,
            "schedule" => self.schedule = v.parse()?,
            "max_cycles" => self.max_cycles = parse_num(key, v)?,
            "check_invariants" => self.check_invariants = parse_bool(key, v)?,
            "record_events" => self.record_events = parse_bool(key, v)?,
            "dram_latency" => self.latency.dram = parse_num(key, v)?,
            "llc_latency" => self.latency.llc_access = parse_num(key, v)?,
            "l1_latency" => self.latency.l1_hit = parse_num(key, v)?,
            "hop_latency" => self.net.hop_latency = parse_num(key, v)?,
            "flit_bits" => self.net.flit_bits = parse_num(key, v)?,
            _ => return Err(ConfigError::UnknownKey(key.into())),
        }
        Ok(())
    }

    /// Parse `key = value` lines (`#` comments) on top of the defaults. A
    /// `preset` line resets everything set before it.
    pub fn parse(text: &str) -> Result<SimConfig, ConfigError> {
        let mut c = SimConfig::default();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line.split_once('=').ok_or(ConfigError::Syntax { line: i + 1 })?;
            c.set(k.trim(), v)?;
        }
        c.validate()?;
        Ok(c)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let bad = |m: String| Err(ConfigError::Invalid(m));
        if self.cores == 0 || self.cores > MAX_CORES {
            return bad(format!("cores must be in 1..={MAX_CORES}"));
        }
        self.l1.validate().map_err(ConfigError::Invalid)?;
        self.llc.validate().map_err(ConfigError::Invalid)?;
        if self.static_lease == 0 {
            return bad("static_lease must be positive".into());
        }
        if !(0.0..1.0).contains(&self.skip_prob) {
            return bad("skip_prob must lie in [0, 1)".into());
        }
        let d = &self.detector;
        if d.min_count == 0 || d.min_count > d.max_count || d.check_thresh == 0 {
            return bad("detector thresholds need 0 < thresh_min <= thresh_max and check_thresh > 0".into());
        }
        if self.net.flit_bits == 0 || self.net.line_bytes == 0 {
            return bad("network sizes must be positive".into());
        }
        Ok(())
    }

    /// Compact identity used in reports: protocol, model and options.
    pub fn label(&self) -> String {
        let mut s = format!("{}-{}", self.protocol, self.model.name());
        if self.protocol == Protocol::Tardis {
            s.push_str(if self.mesi { "-mesi" } else { "-msi" });
            if self.livelock_detector {
                s.push_str("-live");
            }
            if self.lease_predictor {
                s.push_str("-lp");
            }
        } else if !self.mesi {
            s.push_str("-msi");
        }
        s
    }

    /// Render in the text format accepted by [`SimConfig::parse`].
    pub fn to_text(&self) -> String {
        let sip = match self.self_increment_period {
            None => "default".to_string(),
            Some(p) => p.to_string(),
        };
        let rows: Vec<(&str, String)> = vec![
            ("cores", self.cores.to_string()),
            ("model", self.model.name().to_string()),
            ("protocol", self.protocol.to_string()),
            ("mesi", on_off(self.mesi).into()),
            ("static_lease", self.static_lease.to_string()),
            ("lease_predictor", on_off(self.lease_predictor).into()),
            ("livelock_detector", on_off(self.livelock_detector).into()),
            ("ahb_entries", self.detector.ahb_entries.to_string()),
            ("thresh_min", self.detector.min_count.to_string()),
            ("thresh_max", self.detector.max_count.to_string()),
            ("check_thresh", self.detector.check_thresh.to_string()),
            ("self_increment_period", sip),
            ("l1_kb", (self.l1.size_bytes / 1024).to_string()),
            ("l1_ways", self.l1.ways.to_string()),
            ("llc_kb", (self.llc.size_bytes / 1024).to_string()),
            ("llc_ways", self.llc.ways.to_string()),
            ("line_bytes", self.l1.line_bytes.to_string()),
            ("store_buffer", self.store_buffer.to_string()),
            ("skip_prob", self.skip_prob.to_string()),
            ("schedule", self.schedule.to_string()),
            ("max_cycles", self.max_cycles.to_string()),
            ("check_invariants", on_off(self.check_invariants).into()),
            ("record_events", on_off(self.record_events).into()),
            ("l1_latency", self.latency.l1_hit.to_string()),
            ("llc_latency", self.latency.llc_access.to_string()),
            ("dram_latency", self.latency.dram.to_string()),
            ("hop_latency", self.net.hop_latency.to_string()),
            ("flit_bits", self.net.flit_bits.to_string()),
        ];
        rows.into_iter().map(|(k, v)| format!("{k} = {v}\n")).collect()
    }
}
