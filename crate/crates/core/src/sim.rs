//! Frame-synchronous simulator of the upstream grant pipeline.
//!
//! Packets carry continuous timestamps; scheduling happens once per 125 µs
//! cycle. Each packet draws its stochastic stage delays (a, d, f, i) at
//! arrival and derives from them the cycle in which its report reaches the
//! scheduler (the NIC for the fast path, the CPU otherwise). The scheduler
//! of the following cycle is expected to grant it. If contention pushes the
//! grant to a later cycle, the extra whole frames are charged to the
//! deferral stage, so a sample's latency is always the sum of its stages.
//!
//! Per cycle `n`:
//! 1. the CPU DBA computes BWMAP `n` from its ledger;
//! 2. in fast-intercept mode the eNF rewrites it from its register store;
//! 3. grants are applied to the ONU queues, completing packets;
//! 4. ONUs report the residual of every Alloc-ID touched, and the bursts go
//!    through the eNF (read-only) to the CPU ledger.
//!
//! Bandwidth maps and bursts are round-tripped through the wire codec every
//! cycle.

use std::collections::{BTreeMap, VecDeque};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp};
use rayon::prelude::*;
use thiserror::Error;

use crate::codec::{
    decode_burst, decode_bwmap_with, encode_burst, encode_bwmap_with, AllocId, AllocRegistry,
    Bwmap, Dbru, Origin, TcontClass, UpstreamBurst, MIN_GRANT_BYTES,
};
use crate::dba::{compute_bwmap, DbaConfig, DemandLedger};
use crate::intercept::{Enf, InterceptPolicy, DEFAULT_STORE_CAPACITY};
use crate::latency::{LatencyParams, Mode, Stage};

pub const MIN_DURATION_FRAMES: u32 = 10;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SimError {
    #[error("config error: {0}")]
    Config(String),
    #[error("internal invariant failure: {0}")]
    Invariant(String),
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum ArrivalProcess {
    Poisson {
        rate_pps: f64,
        packet_bytes: u32,
    },
    Periodic {
        period_us: f64,
        start_us: f64,
        packet_bytes: u32,
    },
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrafficStream {
    pub alloc_id: AllocId,
    pub process: ArrivalProcess,
    /// Stop generating after this many packets.
    pub max_packets: Option<u64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct OnuSpec {
    pub onu_id: u16,
    pub allocs: Vec<(AllocId, TcontClass)>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Scenario {
    pub seed: u64,
    pub duration_frames: u32,
    pub onus: Vec<OnuSpec>,
    pub traffic: Vec<TrafficStream>,
    pub dba: DbaConfig,
    pub policy: InterceptPolicy,
    pub params: LatencyParams,
    pub mode: Mode,
    /// Pin stochastic stages at their means.
    pub pin_variance: bool,
    /// Per-Alloc-ID queue depth; `None` is unbounded.
    pub queue_limit_bytes: Option<u32>,
    pub store_capacity: usize,
    /// Extra cycles, after arrivals stop, to let queues empty.
    pub drain_frames: u32,
}

impl Default for Scenario {
    fn default() -> Self {
        Self {
            seed: 1,
            duration_frames: 1000,
            onus: Vec::new(),
            traffic: Vec::new(),
            dba: DbaConfig::default(),
            policy: InterceptPolicy::default(),
            params: LatencyParams::default(),
            mode: Mode::FastIntercept,
            pin_variance: false,
            queue_limit_bytes: None,
            store_capacity: DEFAULT_STORE_CAPACITY,
            drain_frames: 1000,
        }
    }
}

impl Scenario {
    pub fn registry(&self) -> Result<AllocRegistry, SimError> {
        let mut reg = AllocRegistry::new();
        for onu in &self.onus {
            for &(alloc_id, class) in &onu.allocs {
                if reg.contains(alloc_id) {
                    return Err(SimError::Config(format!(
                        "alloc id {alloc_id} declared more than once"
                    )));
                }
                reg.register(alloc_id, onu.onu_id, class)
                    .map_err(|e| SimError::Config(e.to_string()))?;
            }
        }
        Ok(reg)
    }

    pub fn validate(&self) -> Result<(), SimError> {
        let config = |msg: String| Err(SimError::Config(msg));
        if self.duration_frames < MIN_DURATION_FRAMES {
            return config(format!(
                "duration_frames {} below minimum {MIN_DURATION_FRAMES}",
                self.duration_frames
            ));
        }
        let reg = self.registry()?;
        self.dba
            .validate()
            .map_err(|e| SimError::Config(e.to_string()))?;
        self.policy
            .validate()
            .map_err(|e| SimError::Config(e.to_string()))?;
        self.params
            .validate()
            .map_err(|e| SimError::Config(e.to_string()))?;
        let polls = u64::from(MIN_GRANT_BYTES) * reg.len() as u64;
        let outside = u64::from(self.dba.frame_capacity_bytes)
            - u64::from(self.dba.reserved_window().length_bytes);
        if polls > outside {
            return config(format!(
                "{} alloc ids need {polls} polling bytes but only {outside} lie outside the reserve",
                reg.len()
            ));
        }
        for stream in &self.traffic {
            if !reg.contains(stream.alloc_id) {
                return config(format!(
                    "traffic references undeclared alloc id {}",
                    stream.alloc_id
                ));
            }
            let (ok, bytes) = match stream.process {
                ArrivalProcess::Poisson {
                    rate_pps,
                    packet_bytes,
                } => (rate_pps.is_finite() && rate_pps > 0.0, packet_bytes),
                ArrivalProcess::Periodic {
                    period_us,
                    start_us,
                    packet_bytes,
                } => (
                    period_us.is_finite()
                        && period_us > 0.0
                        && start_us.is_finite()
                        && start_us >= 0.0,
                    packet_bytes,
                ),
            };
            if !ok {
                return config(format!(
                    "traffic for alloc id {} has a non-positive rate or period",
                    stream.alloc_id
                ));
            }
            if bytes == 0 {
                return config(format!(
                    "traffic for alloc id {} has zero-byte packets",
                    stream.alloc_id
                ));
            }
        }
        Ok(())
    }

    /// Whether low-latency traffic takes the in-NIC path in this scenario.
    /// Without a reserve or preemption there is nowhere to put fast grants,
    /// so low-latency requests fall back to the CPU DBA.
    pub fn fast_path_active(&self) -> bool {
        self.mode == Mode::FastIntercept
            && (self.dba.reserved_window().length_bytes > 0 || self.policy.preempt_enabled)
    }

    fn effective_dba(&self) -> DbaConfig {
        match self.mode {
            Mode::ClassicalOem | Mode::VirtualPon => DbaConfig {
                reserved_fraction: 0.0,
                exclude_low_latency: false,
                ..self.dba.clone()
            },
            Mode::FastIntercept => DbaConfig {
                exclude_low_latency: self.fast_path_active(),
                ..self.dba.clone()
            },
        }
    }
}

/// Stage durations of one packet, indexed by [`Stage::index`].
pub type StageBreakdown = [f64; Stage::ALL.len()];

#[derive(Clone, Debug, PartialEq)]
pub struct Sample {
    pub alloc_id: AllocId,
    pub class: TcontClass,
    pub arrival_us: f64,
    pub transmit_us: f64,
    pub stages: StageBreakdown,
}

impl Sample {
    pub fn latency_us(&self) -> f64 {
        self.stages.iter().sum()
    }

    pub fn stage(&self, stage: Stage) -> f64 {
        self.stages[stage.index()]
    }
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Counters {
    pub frames: u64,
    pub packets_generated: u64,
    pub packets_dropped: u64,
    pub packets_unfinished: u64,
    pub store_full_drops: u64,
    pub preempted_bytes: u64,
    pub low_latency_reports: u64,
    pub low_latency_reports_granted_next_frame: u64,
    pub double_grant_violations: u64,
    pub over_grant_violations: u64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ClassSummary {
    pub class: TcontClass,
    pub count: usize,
    pub mean_us: f64,
    pub p50_us: f64,
    pub p99_us: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct RunResult {
    pub mode: Mode,
    pub fast_path_active: bool,
    pub samples: Vec<Sample>,
    pub counters: Counters,
    pub summary: Vec<ClassSummary>,
}

impl RunResult {
    pub fn class_summary(&self, class: TcontClass) -> Option<&ClassSummary> {
        self.summary.iter().find(|s| s.class == class)
    }

    pub fn samples_of(&self, class: TcontClass) -> impl Iterator<Item = &Sample> + '_ {
        self.samples.iter().filter(move |s| s.class == class)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Route {
    /// Through the eNF register store and the reserved window.
    Fast,
    /// Through the CPU DBA ledger.
    Standard,
}

struct Packet {
    alloc_id: AllocId,
    class: TcontClass,
    arrival_us: f64,
    bytes: u32,
    stages: StageBreakdown,
    report_cycle: u64,
}

struct Arrival {
    time_us: f64,
    stream: usize,
    bytes: u32,
}

#[derive(Default)]
struct AllocQueue {
    /// Reported packets: (packet index, bytes still to send).
    reported: VecDeque<(usize, u32)>,
    reported_bytes: u64,
    queued_bytes: u64,
    last_reported: u64,
}

fn stream_rng(seed: u64, salt: u64, stream: usize) -> ChaCha8Rng {
    let mix = (stream as u64 + 1).wrapping_mul(0x9E37_79B9_7F4A_7C15) ^ salt;
    ChaCha8Rng::seed_from_u64(seed ^ mix)
}

fn generate_arrivals(scenario: &Scenario) -> Vec<Arrival> {
    let horizon = f64::from(scenario.duration_frames) * scenario.params.frame_period;
    let mut arrivals = Vec::new();
    for (idx, stream) in scenario.traffic.iter().enumerate() {
        let cap = stream.max_packets.unwrap_or(u64::MAX);
        let mut count = 0u64;
        match stream.process {
            ArrivalProcess::Poisson {
                rate_pps,
                packet_bytes,
            } => {
                let mut rng = stream_rng(scenario.seed, 0xA11, idx);
                let gap = Exp::new(rate_pps / 1e6).expect("validated positive rate");
                let mut t = gap.sample(&mut rng);
                while t < horizon && count < cap {
                    arrivals.push(Arrival {
                        time_us: t,
                        stream: idx,
                        bytes: packet_bytes,
                    });
                    count += 1;
                    t += gap.sample(&mut rng);
                }
            }
            ArrivalProcess::Periodic {
                period_us,
                start_us,
                packet_bytes,
            } => {
                let mut t = start_us;
                while t < horizon && count < cap {
                    arrivals.push(Arrival {
                        time_us: t,
                        stream: idx,
                        bytes: packet_bytes,
                    });
                    count += 1;
                    t = start_us + period_us * count as f64;
                }
            }
        }
    }
    arrivals.sort_by(|a, b| {
        a.time_us
            .total_cmp(&b.time_us)
            .then(a.stream.cmp(&b.stream))
    });
    arrivals
}

/// Runs one scenario to completion.
pub fn run(scenario: &Scenario) -> Result<RunResult, SimError> {
    scenario.validate()?;
    Simulation::new(scenario)?.execute()
}

/// Runs every scenario, possibly in parallel. Results line up with inputs and
/// do not depend on the degree of parallelism.
pub fn sweep(scenarios: &[Scenario]) -> Vec<Result<RunResult, SimError>> {
    scenarios.par_iter().map(run).collect()
}

struct Simulation<'a> {
    scenario: &'a Scenario,
    registry: AllocRegistry,
    dba_cfg: DbaConfig,
    ledger: DemandLedger,
    enf: Option<Enf>,
    fast_active: bool,
    frame_us: f64,
    packets: Vec<Packet>,
    queues: BTreeMap<AllocId, AllocQueue>,
    pending_reports: BTreeMap<u64, Vec<usize>>,
    samples: Vec<Sample>,
    counters: Counters,
}

impl<'a> Simulation<'a> {
    fn new(scenario: &'a Scenario) -> Result<Self, SimError> {
        let registry = scenario.registry()?;
        let dba_cfg = scenario.effective_dba();
        let fast_active = scenario.fast_path_active();
        let enf = (scenario.mode == Mode::FastIntercept).then(|| {
            Enf::new(
                registry.clone(),
                scenario.policy,
                scenario.store_capacity,
                dba_cfg.frame_capacity_bytes,
            )
        });
        let queues = registry
            .iter()
            .map(|(id, _, _)| (id, AllocQueue::default()))
            .collect();
        Ok(Self {
            scenario,
            ledger: DemandLedger::new(registry.clone()),
            registry,
            dba_cfg,
            enf,
            fast_active,
            frame_us: scenario.params.frame_period,
            packets: Vec::new(),
            queues,
            pending_reports: BTreeMap::new(),
            samples: Vec::new(),
            counters: Counters::default(),
        })
    }

    fn route_of(&self, class: TcontClass) -> Route {
        if self.fast_active && class == TcontClass::LowLatency {
            Route::Fast
        } else {
            Route::Standard
        }
    }

    fn stage_set(&self, route: Route) -> &'static [Stage] {
        match (route, self.scenario.mode) {
            (Route::Fast, _) => Mode::FastIntercept.stages(),
            (Route::Standard, Mode::ClassicalOem) => Mode::ClassicalOem.stages(),
            (Route::Standard, _) => Mode::VirtualPon.stages(),
        }
    }

    fn execute(mut self) -> Result<RunResult, SimError> {
        let arrivals = generate_arrivals(self.scenario);
        self.counters.packets_generated = arrivals.len() as u64;
        let mut stage_rngs: Vec<ChaCha8Rng> = (0..self.scenario.traffic.len())
            .map(|i| stream_rng(self.scenario.seed, 0x57A6E, i))
            .collect();

        let horizon = u64::from(self.scenario.duration_frames);
        let limit = horizon + u64::from(self.scenario.drain_frames);
        let mut next_arrival = 0usize;
        let mut in_flight = 0usize;
        let mut prompt_watch: Vec<AllocId> = Vec::new();
        let mut cycle = 0u64;

        while cycle < horizon || (in_flight > 0 && cycle < limit) {
            // Admit arrivals of this frame.
            let frame_end = (cycle + 1) as f64 * self.frame_us;
            while next_arrival < arrivals.len() && arrivals[next_arrival].time_us < frame_end {
                let arrival = &arrivals[next_arrival];
                next_arrival += 1;
                let draws = self.draw_stochastic(&mut stage_rngs[arrival.stream]);
                if self.admit(arrival, draws) {
                    in_flight += 1;
                }
            }

            // Downstream: CPU map, optional rewrite, wire round trip.
            let sn = cycle as u32;
            let cpu_map = compute_bwmap(&self.ledger, &self.dba_cfg, sn)
                .map_err(|e| SimError::Invariant(e.to_string()))?;
            self.ledger.apply_grants(&cpu_map);
            let map = match self.enf.as_mut() {
                Some(enf) => enf
                    .process_bwmap(&cpu_map)
                    .map_err(|e| SimError::Invariant(e.to_string()))?,
                None => cpu_map,
            };
            let map = self.wire_bwmap(&map)?;
            self.check_grants(&map, &prompt_watch);

            // Grants reach the ONUs.
            let sent = self.apply_grants(&map, cycle, &mut in_flight);

            // Upstream reports.
            prompt_watch.clear();
            if let Some(due) = self.pending_reports.remove(&cycle) {
                for idx in due {
                    let p = &self.packets[idx];
                    let q = self.queues.get_mut(&p.alloc_id).expect("registered");
                    q.reported.push_back((idx, p.bytes));
                    q.reported_bytes += u64::from(p.bytes);
                }
            }
            if self.dba_cfg.is_polling_frame(sn) {
                for burst in self.build_bursts(sn, &sent) {
                    let burst = wire_burst(&burst)?;
                    let burst = match self.enf.as_mut() {
                        Some(enf) => enf.intercept_burst(&burst),
                        None => &burst,
                    };
                    for dbru in &burst.dbrus {
                        self.ledger
                            .ingest_dbru(dbru, sn)
                            .map_err(|e| SimError::Invariant(e.to_string()))?;
                        if dbru.low_latency && dbru.occupancy_bytes > 0 && self.fast_active {
                            self.counters.low_latency_reports += 1;
                            prompt_watch.push(dbru.alloc_id);
                        }
                    }
                }
            }
            cycle += 1;
        }

        self.counters.frames = cycle;
        self.counters.packets_unfinished = in_flight as u64;
        if let Some(enf) = &self.enf {
            self.counters.store_full_drops = enf.store().dropped();
            self.counters.preempted_bytes = enf.preempted_bytes();
        }
        let summary = summarize(&self.samples);
        Ok(RunResult {
            mode: self.scenario.mode,
            fast_path_active: self.fast_active,
            samples: self.samples,
            counters: self.counters,
            summary,
        })
    }

    /// Draws a, d, f, i for every packet regardless of mode, so runs that
    /// differ only in mode see the same random stream.
    fn draw_stochastic(&self, rng: &mut ChaCha8Rng) -> [f64; 4] {
        let p = &self.scenario.params;
        let means = [
            p.piggyback_wait_mean,
            p.dba_window_mean,
            p.bwmap_wait_mean,
            p.grant_offset_mean,
        ];
        let mut out = [0.0; 4];
        for (slot, mean) in out.iter_mut().zip(means) {
            let u: f64 = rng.random();
            *slot = if self.scenario.pin_variance {
                mean
            } else {
                u * 2.0 * mean
            };
        }
        out
    }

    fn admit(&mut self, arrival: &Arrival, draws: [f64; 4]) -> bool {
        let stream = &self.scenario.traffic[arrival.stream];
        let alloc_id = stream.alloc_id;
        let class = self.registry.class_of(alloc_id).expect("validated");

        let q = self.queues.get_mut(&alloc_id).expect("registered");
        if let Some(limit) = self.scenario.queue_limit_bytes {
            if q.queued_bytes + u64::from(arrival.bytes) > u64::from(limit) {
                self.counters.packets_dropped += 1;
                return false;
            }
        }
        q.queued_bytes += u64::from(arrival.bytes);

        let params = &self.scenario.params;
        let route = self.route_of(class);
        let mut stages: StageBreakdown = [0.0; Stage::ALL.len()];
        for &stage in self.stage_set(route) {
            stages[stage.index()] = match stage {
                Stage::PiggybackWait => draws[0],
                Stage::DbaWindow => draws[1],
                Stage::BwmapWait => draws[2],
                Stage::GrantOffset => draws[3],
                other => params.stage_mean(other),
            };
        }

        let mut report_at =
            arrival.time_us + stages[Stage::PiggybackWait.index()] + stages[Stage::FiberUp.index()];
        if route == Route::Standard {
            report_at += stages[Stage::NicToCpu.index()];
        }
        let raw = (report_at / self.frame_us).floor() as u64;
        let interval = u64::from(self.dba_cfg.service_interval_frames.max(1));
        let report_cycle = raw.div_ceil(interval) * interval;
        stages[Stage::Deferral.index()] = (report_cycle - raw) as f64 * self.frame_us;

        let idx = self.packets.len();
        self.packets.push(Packet {
            alloc_id,
            class,
            arrival_us: arrival.time_us,
            bytes: arrival.bytes,
            stages,
            report_cycle,
        });
        self.pending_reports
            .entry(report_cycle)
            .or_default()
            .push(idx);
        true
    }

    fn wire_bwmap(&self, map: &Bwmap) -> Result<Bwmap, SimError> {
        let capacity = self.dba_cfg.frame_capacity_bytes;
        let bytes =
            encode_bwmap_with(map, capacity).map_err(|e| SimError::Invariant(e.to_string()))?;
        decode_bwmap_with(&bytes, capacity).map_err(|e| SimError::Invariant(e.to_string()))
    }

    fn check_grants(&mut self, map: &Bwmap, prompt_watch: &[AllocId]) {
        let mut fast_ids: Vec<AllocId> = map
            .allocations
            .iter()
            .filter(|a| matches!(a.origin, Origin::FastIntercept | Origin::Preempting))
            .map(|a| a.alloc_id)
            .collect();
        fast_ids.sort();
        fast_ids.dedup();

        for alloc in &map.allocations {
            if alloc.origin == Origin::StandardDba
                && fast_ids.binary_search(&alloc.alloc_id).is_ok()
                && alloc.grant_size_bytes > MIN_GRANT_BYTES
            {
                self.counters.double_grant_violations += 1;
            }
        }
        for id in prompt_watch {
            if fast_ids.binary_search(id).is_ok() {
                self.counters.low_latency_reports_granted_next_frame += 1;
            }
        }

        // Every granted byte beyond per-grant padding must match reported demand.
        let mut per_alloc: BTreeMap<AllocId, (u64, u64)> = BTreeMap::new();
        for alloc in &map.allocations {
            let e = per_alloc.entry(alloc.alloc_id).or_default();
            e.0 += u64::from(alloc.grant_size_bytes);
            e.1 += 1;
        }
        for (id, (granted, count)) in per_alloc {
            let reported = self.queues.get(&id).map_or(0, |q| q.reported_bytes);
            if granted > reported + count * u64::from(MIN_GRANT_BYTES) {
                self.counters.over_grant_violations += 1;
            }
        }
    }

    /// Serves reported packets in report order. Returns data bytes sent per ONU.
    fn apply_grants(
        &mut self,
        map: &Bwmap,
        cycle: u64,
        in_flight: &mut usize,
    ) -> BTreeMap<u16, u64> {
        let mut sent: BTreeMap<u16, u64> = BTreeMap::new();
        for alloc in &map.allocations {
            let Some(q) = self.queues.get_mut(&alloc.alloc_id) else {
                continue;
            };
            let mut budget = alloc.grant_size_bytes;
            let mut used = 0u64;
            while budget > 0 {
                let Some((idx, remaining)) = q.reported.front_mut() else {
                    break;
                };
                let take = (*remaining).min(budget);
                *remaining -= take;
                budget -= take;
                used += u64::from(take);
                if *remaining == 0 {
                    let idx = *idx;
                    q.reported.pop_front();
                    let p = &mut self.packets[idx];
                    let expected = p.report_cycle + 1;
                    p.stages[Stage::Deferral.index()] += (cycle - expected) as f64 * self.frame_us;
                    let latency: f64 = p.stages.iter().sum();
                    self.samples.push(Sample {
                        alloc_id: p.alloc_id,
                        class: p.class,
                        arrival_us: p.arrival_us,
                        transmit_us: p.arrival_us + latency,
                        stages: p.stages,
                    });
                    *in_flight -= 1;
                }
            }
            q.reported_bytes -= used;
            q.queued_bytes -= used;
            if let Some(onu) = self.registry.onu_of(alloc.alloc_id) {
                *sent.entry(onu).or_default() += used;
            }
        }
        sent
    }

    fn build_bursts(&mut self, sn: u32, sent: &BTreeMap<u16, u64>) -> Vec<UpstreamBurst> {
        let mut bursts: BTreeMap<u16, UpstreamBurst> = BTreeMap::new();
        for (alloc_id, onu, class) in self.registry.iter() {
            let q = self.queues.get_mut(&alloc_id).expect("registered");
            let residual = q.reported_bytes;
            // A drained queue reports zero once, then stays silent.
            if residual == 0 && q.last_reported == 0 {
                continue;
            }
            q.last_reported = residual;
            bursts
                .entry(onu)
                .or_insert_with(|| UpstreamBurst {
                    frame_sn: sn,
                    onu_id: onu,
                    dbrus: Vec::new(),
                    payload_bytes: sent
                        .get(&onu)
                        .copied()
                        .unwrap_or(0)
                        .min(u64::from(u32::MAX)) as u32,
                })
                .dbrus
                .push(Dbru {
                    alloc_id,
                    occupancy_bytes: residual.min(u64::from(u32::MAX)) as u32,
                    low_latency: class == TcontClass::LowLatency,
                });
        }
        bursts.into_values().collect()
    }
}

fn wire_burst(burst: &UpstreamBurst) -> Result<UpstreamBurst, SimError> {
    let bytes = encode_burst(burst).map_err(|e| SimError::Invariant(e.to_string()))?;
    decode_burst(&bytes).map_err(|e| SimError::Invariant(e.to_string()))
}

/// Nearest-rank percentile of an ascending slice.
pub fn percentile(sorted: &[f64], p: f64) -> f64 {
    if sorted.is_empty() {
        return f64::NAN;
    }
    let rank = (p / 100.0 * sorted.len() as f64).ceil() as usize;
    sorted[rank.clamp(1, sorted.len()) - 1]
}

pub fn summarize(samples: &[Sample]) -> Vec<ClassSummary> {
    TcontClass::ALL
        .into_iter()
        .filter_map(|class| {
            let mut lat: Vec<f64> = samples
                .iter()
                .filter(|s| s.class == class)
                .map(Sample::latency_us)
                .collect();
            if lat.is_empty() {
                return None;
            }
            lat.sort_by(f64::total_cmp);
            Some(ClassSummary {
                class,
                count: lat.len(),
                mean_us: lat.iter().sum::<f64>() / lat.len() as f64,
                p50_us: percentile(&lat, 50.0),
                p99_us: percentile(&lat, 99.0),
            })
        })
        .collect()
}
