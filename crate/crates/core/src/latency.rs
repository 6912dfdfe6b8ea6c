//! Upstream latency budgets for the three deployment modes.
//!
//! A packet's latency, from arrival at the ONU queue until the ONU may
//! transmit it, is a chain of stages:
//!
//! | stage | meaning                                   | classical | virtual | fast |
//! |-------|-------------------------------------------|:---------:|:-------:|:----:|
//! | a     | wait for a DBRu piggy-back opportunity    | x         | x       | x    |
//! | b     | upstream fiber propagation                | x         | x       | x    |
//! | c     | NIC to CPU transfer                       |           | x       |      |
//! | d     | DBA collection window                     | x         | x       |      |
//! | e     | DBA computation                           | x         | x       |      |
//! | f     | wait for the next downstream BWMAP        | x         | x       | x    |
//! | f1    | fast computation not hidden by head start |           |         | x    |
//! | f2    | in-NIC BWMAP modification                 |           |         | x    |
//! | g     | CPU to NIC transfer                       |           | x       |      |
//! | h     | downstream fiber propagation              | x         | x       | x    |
//! | i     | offset of the grant within the frame      | x         | x       | x    |
//!
//! Stages a, d, f and i are uniform on `[0, 2 * mean]`; the rest are fixed.

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Host and NIC timings measured on the reference testbed, in µs. They are
/// inputs to the model, not outputs.
pub mod measured {
    /// DBRu to CPU, DBA, and BWMAP back to NIC through the Linux netdev stack.
    pub const NETDEV_PATH_US: f64 = 393.0;
    /// The same path through the DPDK poll-mode driver.
    pub const DPDK_PATH_US: f64 = 119.51;
    /// NIC to CPU round trip with DPDK.
    pub const NIC_CPU_RTT_US: f64 = 41.96;
    /// DPDK path minus round trip.
    pub const DBA_COMPUTE_US: f64 = 77.55;
    /// eNF grant calculation plus BWMAP update.
    pub const ENF_TOTAL_US: f64 = 7.47;
    /// How early the eNF can start, knowing the TDM schedule.
    pub const ENF_HEAD_START_US: f64 = 8.0;
    /// BWMAP modification, the only serial delay the eNF adds.
    pub const BWMAP_MODIFY_US: f64 = 2.5;
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum LatencyError {
    #[error("latency parameter {name} must be finite and non-negative, got {value}")]
    InvalidParam { name: &'static str, value: f64 },
    #[error("unknown preset '{0}', expected one of: s2, s3")]
    UnknownPreset(String),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    ClassicalOem,
    VirtualPon,
    FastIntercept,
}

impl Mode {
    pub const ALL: [Mode; 3] = [Self::ClassicalOem, Self::VirtualPon, Self::FastIntercept];

    pub fn as_str(self) -> &'static str {
        match self {
            Self::ClassicalOem => "classical_oem",
            Self::VirtualPon => "virtual_pon",
            Self::FastIntercept => "fast_intercept",
        }
    }

    pub fn stages(self) -> &'static [Stage] {
        use Stage::*;
        match self {
            Self::ClassicalOem => &[
                PiggybackWait,
                FiberUp,
                DbaWindow,
                DbaCompute,
                BwmapWait,
                FiberDown,
                GrantOffset,
            ],
            Self::VirtualPon => &[
                PiggybackWait,
                FiberUp,
                NicToCpu,
                DbaWindow,
                DbaCompute,
                BwmapWait,
                CpuToNic,
                FiberDown,
                GrantOffset,
            ],
            Self::FastIntercept => &[
                PiggybackWait,
                FiberUp,
                BwmapWait,
                FastComputeExcess,
                BwmapModify,
                FiberDown,
                GrantOffset,
            ],
        }
    }
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Stage {
    PiggybackWait,
    FiberUp,
    NicToCpu,
    DbaWindow,
    DbaCompute,
    BwmapWait,
    FastComputeExcess,
    BwmapModify,
    CpuToNic,
    FiberDown,
    GrantOffset,
    /// Extra whole frames a request waited because capacity ran out or the
    /// next polling frame was later. Only produced by the simulator.
    Deferral,
}

impl Stage {
    pub const ALL: [Stage; 12] = [
        Self::PiggybackWait,
        Self::FiberUp,
        Self::NicToCpu,
        Self::DbaWindow,
        Self::DbaCompute,
        Self::BwmapWait,
        Self::FastComputeExcess,
        Self::BwmapModify,
        Self::CpuToNic,
        Self::FiberDown,
        Self::GrantOffset,
        Self::Deferral,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    /// Column name used in reports.
    pub fn label(self) -> &'static str {
        match self {
            Self::PiggybackWait => "a_piggyback_wait",
            Self::FiberUp => "b_fiber_up",
            Self::NicToCpu => "c_nic_to_cpu",
            Self::DbaWindow => "d_dba_window",
            Self::DbaCompute => "e_dba_compute",
            Self::BwmapWait => "f_bwmap_wait",
            Self::FastComputeExcess => "f1_fast_compute_excess",
            Self::BwmapModify => "f2_bwmap_modify",
            Self::CpuToNic => "g_cpu_to_nic",
            Self::FiberDown => "h_fiber_down",
            Self::GrantOffset => "i_grant_offset",
            Self::Deferral => "x_deferral",
        }
    }

    pub fn is_stochastic(self) -> bool {
        matches!(
            self,
            Self::PiggybackWait | Self::DbaWindow | Self::BwmapWait | Self::GrantOffset
        )
    }
}

/// Per-stage durations in µs.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LatencyParams {
    pub frame_period: f64,
    pub piggyback_wait_mean: f64,
    pub fiber_one_way: f64,
    pub nic_cpu_one_way: f64,
    pub dba_window_mean: f64,
    pub dba_compute: f64,
    pub bwmap_wait_mean: f64,
    pub fast_dba_compute: f64,
    pub fast_head_start: f64,
    pub bwmap_modify: f64,
    pub grant_offset_mean: f64,
}

impl Default for LatencyParams {
    fn default() -> Self {
        Preset::S2Budget.params()
    }
}

impl LatencyParams {
    pub fn validate(&self) -> Result<(), LatencyError> {
        let fields = [
            ("frame_period", self.frame_period),
            ("piggyback_wait_mean", self.piggyback_wait_mean),
            ("fiber_one_way", self.fiber_one_way),
            ("nic_cpu_one_way", self.nic_cpu_one_way),
            ("dba_window_mean", self.dba_window_mean),
            ("dba_compute", self.dba_compute),
            ("bwmap_wait_mean", self.bwmap_wait_mean),
            ("fast_dba_compute", self.fast_dba_compute),
            ("fast_head_start", self.fast_head_start),
            ("bwmap_modify", self.bwmap_modify),
            ("grant_offset_mean", self.grant_offset_mean),
        ];
        for (name, value) in fields {
            if !(value.is_finite() && value >= 0.0) {
                return Err(LatencyError::InvalidParam { name, value });
            }
        }
        if self.frame_period == 0.0 {
            return Err(LatencyError::InvalidParam {
                name: "frame_period",
                value: 0.0,
            });
        }
        Ok(())
    }

    /// The eNF figure includes the BWMAP update, so only the calculation
    /// part can run ahead; whatever the head start does not cover lands on
    /// the critical path before the modification.
    pub fn fast_compute_excess(&self) -> f64 {
        (self.fast_dba_compute - self.bwmap_modify - self.fast_head_start).max(0.0)
    }

    /// Mean duration of `stage`. Deferral has no analytic mean and is zero.
    pub fn stage_mean(&self, stage: Stage) -> f64 {
        match stage {
            Stage::PiggybackWait => self.piggyback_wait_mean,
            Stage::FiberUp | Stage::FiberDown => self.fiber_one_way,
            Stage::NicToCpu | Stage::CpuToNic => self.nic_cpu_one_way,
            Stage::DbaWindow => self.dba_window_mean,
            Stage::DbaCompute => self.dba_compute,
            Stage::BwmapWait => self.bwmap_wait_mean,
            Stage::FastComputeExcess => self.fast_compute_excess(),
            Stage::BwmapModify => self.bwmap_modify,
            Stage::GrantOffset => self.grant_offset_mean,
            Stage::Deferral => 0.0,
        }
    }
}

/// Named parameter sets.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Preset {
    /// Rounded figures of the worked end-to-end budget: 77 µs DBA, 22 µs
    /// NIC-CPU hop, 7.55 µs fast computation.
    #[serde(rename = "s2")]
    S2Budget,
    /// Testbed measurements: 77.55 µs DBA, half of the 41.96 µs round trip,
    /// 7.47 µs eNF.
    #[serde(rename = "s3")]
    S3Measured,
}

impl Preset {
    pub const ALL: [Preset; 2] = [Self::S2Budget, Self::S3Measured];

    pub fn name(self) -> &'static str {
        match self {
            Self::S2Budget => "s2",
            Self::S3Measured => "s3",
        }
    }

    pub fn from_name(name: &str) -> Result<Self, LatencyError> {
        Self::ALL
            .into_iter()
            .find(|p| p.name() == name)
            .ok_or_else(|| LatencyError::UnknownPreset(name.to_string()))
    }

    pub fn params(self) -> LatencyParams {
        let common = LatencyParams {
            frame_period: 125.0,
            piggyback_wait_mean: 62.5,
            fiber_one_way: 50.0,
            nic_cpu_one_way: 0.0,
            dba_window_mean: 62.5,
            dba_compute: 0.0,
            bwmap_wait_mean: 62.5,
            fast_dba_compute: 0.0,
            fast_head_start: measured::ENF_HEAD_START_US,
            bwmap_modify: measured::BWMAP_MODIFY_US,
            grant_offset_mean: 10.0,
        };
        match self {
            Self::S2Budget => LatencyParams {
                nic_cpu_one_way: 22.0,
                dba_compute: 77.0,
                fast_dba_compute: 7.55,
                ..common
            },
            Self::S3Measured => LatencyParams {
                nic_cpu_one_way: measured::NIC_CPU_RTT_US / 2.0,
                dba_compute: measured::DBA_COMPUTE_US,
                fast_dba_compute: measured::ENF_TOTAL_US,
                ..common
            },
        }
    }
}

impl fmt::Display for Preset {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct LatencyBudget {
    pub mode: Mode,
    pub stages: Vec<(Stage, f64)>,
    pub total_us: f64,
}

impl LatencyBudget {
    pub fn stage(&self, stage: Stage) -> Option<f64> {
        self.stages
            .iter()
            .find(|(s, _)| *s == stage)
            .map(|&(_, v)| v)
    }
}

pub fn compute_budget(params: &LatencyParams, mode: Mode) -> LatencyBudget {
    let stages: Vec<(Stage, f64)> = mode
        .stages()
        .iter()
        .map(|&s| (s, params.stage_mean(s)))
        .collect();
    let total_us = stages.iter().map(|&(_, v)| v).sum();
    LatencyBudget {
        mode,
        stages,
        total_us,
    }
}

/// Percentage by which `improved` undercuts `baseline`.
pub fn reduction_percent(baseline: &LatencyBudget, improved: &LatencyBudget) -> f64 {
    reduction_between(baseline.total_us, improved.total_us)
}

pub fn reduction_between(baseline_us: f64, improved_us: f64) -> f64 {
    100.0 * (1.0 - improved_us / baseline_us)
}

/// Reported form of a reduction: nearest whole percent.
pub fn rounded_percent(value: f64) -> i64 {
    value.round() as i64
}
