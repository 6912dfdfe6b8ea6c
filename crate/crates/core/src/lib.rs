//! Dual-path dynamic bandwidth allocation for virtualised PONs.
//!
//! A standard DBA running on the CPU ([`dba`]) leaves the head of every
//! bandwidth map unallocated. An in-NIC function ([`intercept`]) watches
//! DBRus on their way to the CPU and, when the next map comes back down,
//! writes low-latency grants into that reserved window. [`latency`] holds
//! the analytic per-stage budgets and [`sim`] a frame-synchronous simulator
//! that exercises both schedulers end to end.

pub mod codec;
pub mod config;
pub mod dba;
pub mod intercept;
pub mod latency;
pub mod report;
pub mod sim;

pub use codec::{AllocId, Allocation, Bwmap, Dbru, Origin, TcontClass, UpstreamBurst, Window};
pub use latency::{compute_budget, reduction_percent, LatencyBudget, LatencyParams, Mode, Preset};
pub use sim::{run, sweep, RunResult, Scenario};
