//! Scenario config files.
//!
//! Configs are TOML. Every table rejects unknown keys, and every key other
//! than the ONU and traffic declarations has a default (see
//! `docs/config.md`).

use std::fs;
use std::path::Path;

use serde::Deserialize;
use thiserror::Error;

use crate::codec::{AllocId, TcontClass, DEFAULT_FRAME_CAPACITY_BYTES};
use crate::dba::{ClassWeights, DbaConfig};
use crate::intercept::{InterceptPolicy, DEFAULT_STORE_CAPACITY};
use crate::latency::{LatencyParams, Mode, Preset};
use crate::sim::{ArrivalProcess, OnuSpec, Scenario, TrafficStream};

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("{0}")]
    Parse(String),
    #[error("key `{key}`: {message}")]
    Invalid { key: String, message: String },
}

fn invalid(key: impl Into<String>, message: impl Into<String>) -> ConfigError {
    ConfigError::Invalid {
        key: key.into(),
        message: message.into(),
    }
}

#[derive(Clone, Debug, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct ConfigFile {
    #[serde(default = "defaults::seed")]
    pub seed: u64,
    #[serde(default = "defaults::duration_frames")]
    pub duration_frames: u32,
    #[serde(default = "defaults::mode")]
    pub mode: Mode,
    #[serde(default)]
    pub pin_variance: bool,
    #[serde(default)]
    pub queue_limit_bytes: Option<u32>,
    #[serde(default = "defaults::store_capacity")]
    pub store_capacity: usize,
    #[serde(default = "defaults::drain_frames")]
    pub drain_frames: u32,
    #[serde(default)]
    pub params: ParamsSection,
    #[serde(default)]
    pub dba: DbaSection,
    #[serde(default)]
    pub policy: PolicySection,
    #[serde(default)]
    pub output: OutputSection,
    #[serde(default, rename = "onu")]
    pub onus: Vec<OnuSection>,
    #[serde(default)]
    pub traffic: Vec<TrafficSection>,
}

mod defaults {
    use crate::latency::Mode;

    pub fn seed() -> u64 {
        1
    }
    pub fn duration_frames() -> u32 {
        10_000
    }
    pub fn mode() -> Mode {
        Mode::FastIntercept
    }
    pub fn store_capacity() -> usize {
        crate::intercept::DEFAULT_STORE_CAPACITY
    }
    pub fn drain_frames() -> u32 {
        1000
    }
    pub fn yes() -> bool {
        true
    }
}

/// A preset plus optional per-field overrides, all in µs.
#[derive(Clone, Debug, Default, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct ParamsSection {
    pub preset: Option<String>,
    pub frame_period: Option<f64>,
    pub piggyback_wait_mean: Option<f64>,
    pub fiber_one_way: Option<f64>,
    pub nic_cpu_one_way: Option<f64>,
    pub dba_window_mean: Option<f64>,
    pub dba_compute: Option<f64>,
    pub bwmap_wait_mean: Option<f64>,
    pub fast_dba_compute: Option<f64>,
    pub fast_head_start: Option<f64>,
    pub bwmap_modify: Option<f64>,
    pub grant_offset_mean: Option<f64>,
}

impl ParamsSection {
    pub fn resolve(&self) -> Result<LatencyParams, ConfigError> {
        let preset = match &self.preset {
            Some(name) => {
                Preset::from_name(name).map_err(|e| invalid("params.preset", e.to_string()))?
            }
            None => Preset::S2Budget,
        };
        let mut p = preset.params();
        let overrides = [
            (&mut p.frame_period, self.frame_period),
            (&mut p.piggyback_wait_mean, self.piggyback_wait_mean),
            (&mut p.fiber_one_way, self.fiber_one_way),
            (&mut p.nic_cpu_one_way, self.nic_cpu_one_way),
            (&mut p.dba_window_mean, self.dba_window_mean),
            (&mut p.dba_compute, self.dba_compute),
            (&mut p.bwmap_wait_mean, self.bwmap_wait_mean),
            (&mut p.fast_dba_compute, self.fast_dba_compute),
            (&mut p.fast_head_start, self.fast_head_start),
            (&mut p.bwmap_modify, self.bwmap_modify),
            (&mut p.grant_offset_mean, self.grant_offset_mean),
        ];
        for (slot, value) in overrides {
            if let Some(v) = value {
                *slot = v;
            }
        }
        p.validate().map_err(|e| invalid("params", e.to_string()))?;
        Ok(p)
    }
}

#[derive(Clone, Debug, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct WeightsSection {
    #[serde(default = "WeightsSection::low_latency")]
    pub low_latency: f64,
    #[serde(default = "WeightsSection::assured")]
    pub assured: f64,
    #[serde(default = "WeightsSection::best_effort")]
    pub best_effort: f64,
}

impl WeightsSection {
    fn low_latency() -> f64 {
        ClassWeights::default().low_latency
    }
    fn assured() -> f64 {
        ClassWeights::default().assured
    }
    fn best_effort() -> f64 {
        ClassWeights::default().best_effort
    }
}

impl Default for WeightsSection {
    fn default() -> Self {
        let w = ClassWeights::default();
        Self {
            low_latency: w.low_latency,
            assured: w.assured,
            best_effort: w.best_effort,
        }
    }
}

#[derive(Clone, Debug, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct DbaSection {
    #[serde(default = "DbaSection::frame_capacity_bytes")]
    pub frame_capacity_bytes: u32,
    #[serde(default = "DbaSection::reserved_fraction")]
    pub reserved_fraction: f64,
    #[serde(default = "DbaSection::service_interval_frames")]
    pub service_interval_frames: u32,
    #[serde(default = "defaults::yes")]
    pub strict_priority: bool,
    #[serde(default)]
    pub weights: WeightsSection,
}

impl DbaSection {
    fn frame_capacity_bytes() -> u32 {
        DEFAULT_FRAME_CAPACITY_BYTES
    }
    fn reserved_fraction() -> f64 {
        DbaConfig::default().reserved_fraction
    }
    fn service_interval_frames() -> u32 {
        1
    }
}

impl Default for DbaSection {
    fn default() -> Self {
        Self {
            frame_capacity_bytes: Self::frame_capacity_bytes(),
            reserved_fraction: Self::reserved_fraction(),
            service_interval_frames: Self::service_interval_frames(),
            strict_priority: true,
            weights: WeightsSection::default(),
        }
    }
}

#[derive(Clone, Debug, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct PolicySection {
    #[serde(default = "defaults::yes")]
    pub spare_fill: bool,
    #[serde(default = "defaults::yes")]
    pub preempt: bool,
    #[serde(default = "PolicySection::max_preempt_fraction")]
    pub max_preempt_fraction: f64,
}

impl PolicySection {
    fn max_preempt_fraction() -> f64 {
        InterceptPolicy::default().max_preempt_fraction
    }
}

impl Default for PolicySection {
    fn default() -> Self {
        Self {
            spare_fill: true,
            preempt: true,
            max_preempt_fraction: Self::max_preempt_fraction(),
        }
    }
}

#[derive(Clone, Debug, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct OutputSection {
    /// Write an ISO-8601 `# generated_at=` line at the top of each CSV.
    #[serde(default = "defaults::yes")]
    pub timestamp: bool,
}

impl Default for OutputSection {
    fn default() -> Self {
        Self { timestamp: true }
    }
}

#[derive(Clone, Debug, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct OnuSection {
    pub id: u16,
    pub allocs: Vec<AllocSection>,
}

#[derive(Clone, Debug, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct AllocSection {
    pub id: AllocId,
    pub class: TcontClass,
}

#[derive(Clone, Copy, Debug, Deserialize, PartialEq, Eq)]
#[serde(rename_all = "snake_case")]
pub enum TrafficKind {
    Poisson,
    Periodic,
}

#[derive(Clone, Debug, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct TrafficSection {
    pub alloc_id: AllocId,
    pub kind: TrafficKind,
    pub packet_bytes: u32,
    /// Poisson only.
    pub rate_pps: Option<f64>,
    /// Periodic only.
    pub period_us: Option<f64>,
    /// Periodic only, default 0.
    pub start_us: Option<f64>,
    pub max_packets: Option<u64>,
}

impl TrafficSection {
    fn to_stream(&self, idx: usize) -> Result<TrafficStream, ConfigError> {
        let key = |field: &str| format!("traffic[{idx}].{field}");
        let process = match self.kind {
            TrafficKind::Poisson => {
                if self.period_us.is_some() || self.start_us.is_some() {
                    return Err(invalid(
                        key("kind"),
                        "poisson traffic takes rate_pps, not period_us/start_us",
                    ));
                }
                ArrivalProcess::Poisson {
                    rate_pps: self
                        .rate_pps
                        .ok_or_else(|| invalid(key("rate_pps"), "required for poisson traffic"))?,
                    packet_bytes: self.packet_bytes,
                }
            }
            TrafficKind::Periodic => {
                if self.rate_pps.is_some() {
                    return Err(invalid(key("rate_pps"), "periodic traffic takes period_us"));
                }
                ArrivalProcess::Periodic {
                    period_us: self.period_us.ok_or_else(|| {
                        invalid(key("period_us"), "required for periodic traffic")
                    })?,
                    start_us: self.start_us.unwrap_or(0.0),
                    packet_bytes: self.packet_bytes,
                }
            }
        };
        Ok(TrafficStream {
            alloc_id: self.alloc_id,
            process,
            max_packets: self.max_packets,
        })
    }
}

impl ConfigFile {
    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        toml::from_str(text).map_err(|e| ConfigError::Parse(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::parse(&text).map_err(|e| match e {
            ConfigError::Parse(msg) => ConfigError::Parse(format!("{}: {msg}", path.display())),
            other => other,
        })
    }

    pub fn to_scenario(&self) -> Result<Scenario, ConfigError> {
        let params = self.params.resolve()?;
        let dba = DbaConfig {
            frame_capacity_bytes: self.dba.frame_capacity_bytes,
            reserved_fraction: self.dba.reserved_fraction,
            service_interval_frames: self.dba.service_interval_frames,
            weights: ClassWeights {
                low_latency: self.dba.weights.low_latency,
                assured: self.dba.weights.assured,
                best_effort: self.dba.weights.best_effort,
            },
            strict_priority: self.dba.strict_priority,
            exclude_low_latency: true,
        };
        let policy = InterceptPolicy {
            spare_fill_enabled: self.policy.spare_fill,
            preempt_enabled: self.policy.preempt,
            max_preempt_fraction: self.policy.max_preempt_fraction,
        };
        let onus = self
            .onus
            .iter()
            .map(|o| OnuSpec {
                onu_id: o.id,
                allocs: o.allocs.iter().map(|a| (a.id, a.class)).collect(),
            })
            .collect();
        let traffic = self
            .traffic
            .iter()
            .enumerate()
            .map(|(i, t)| t.to_stream(i))
            .collect::<Result<Vec<_>, _>>()?;
        let scenario = Scenario {
            seed: self.seed,
            duration_frames: self.duration_frames,
            onus,
            traffic,
            dba,
            policy,
            params,
            mode: self.mode,
            pin_variance: self.pin_variance,
            queue_limit_bytes: self.queue_limit_bytes,
            store_capacity: if self.store_capacity == 0 {
                DEFAULT_STORE_CAPACITY
            } else {
                self.store_capacity
            },
            drain_frames: self.drain_frames,
        };
        scenario
            .validate()
            .map_err(|e| invalid("scenario", e.to_string()))?;
        Ok(scenario)
    }
}
