//! In-NIC fast intercept.
//!
//! Upstream, every DBRu passing through the NIC is copied into a small
//! register store while the burst itself continues untouched to the CPU DBA.
//! Downstream, when the CPU's bandwidth map arrives, low-latency requests in
//! the store are packed into the map's reserved window. Leftover reserve can
//! be spare-filled with ordinary requests, and low-latency demand that does
//! not fit can preempt part of the best-effort grants.

use std::collections::BTreeMap;

use thiserror::Error;

use crate::codec::{
    AllocId, AllocRegistry, Allocation, Bwmap, CodecError, Origin, TcontClass, UpstreamBurst,
    Window, MIN_GRANT_BYTES,
};

pub const DEFAULT_STORE_CAPACITY: usize = 64;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum InterceptError {
    #[error("register store full, dropped report for alloc id {0}")]
    StoreFull(AllocId),
    #[error("invariant violation: {0}")]
    InvariantViolation(String),
}

impl From<CodecError> for InterceptError {
    fn from(err: CodecError) -> Self {
        Self::InvariantViolation(err.to_string())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct StoreEntry {
    pub occupancy_bytes: u32,
    /// Diagnostics only; service order does not depend on it.
    pub arrival_frame_sn: u32,
    pub low_latency: bool,
}

/// Fast-memory snapshot of in-transit DBRus, at most one entry per Alloc-ID.
#[derive(Clone, Debug)]
pub struct RegisterStore {
    pending: BTreeMap<AllocId, StoreEntry>,
    capacity: usize,
    dropped: u64,
}

impl Default for RegisterStore {
    fn default() -> Self {
        Self::new(DEFAULT_STORE_CAPACITY)
    }
}

impl RegisterStore {
    pub fn new(capacity: usize) -> Self {
        Self {
            pending: BTreeMap::new(),
            capacity,
            dropped: 0,
        }
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn len(&self) -> usize {
        self.pending.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pending.is_empty()
    }

    /// Reports refused because the store was full.
    pub fn dropped(&self) -> u64 {
        self.dropped
    }

    pub fn get(&self, alloc_id: AllocId) -> Option<&StoreEntry> {
        self.pending.get(&alloc_id)
    }

    pub fn iter(&self) -> impl Iterator<Item = (AllocId, &StoreEntry)> + '_ {
        self.pending.iter().map(|(&id, e)| (id, e))
    }

    /// Inserts or overwrites the entry for `alloc_id`. A zero occupancy
    /// clears the entry. A new Alloc-ID arriving at a full store is dropped
    /// and counted.
    pub fn record(&mut self, alloc_id: AllocId, entry: StoreEntry) -> Result<(), InterceptError> {
        if entry.occupancy_bytes == 0 {
            self.pending.remove(&alloc_id);
            return Ok(());
        }
        if !self.pending.contains_key(&alloc_id) && self.pending.len() >= self.capacity {
            self.dropped += 1;
            return Err(InterceptError::StoreFull(alloc_id));
        }
        self.pending.insert(alloc_id, entry);
        Ok(())
    }

    fn consume(&mut self, alloc_id: AllocId, bytes: u32) {
        if let Some(entry) = self.pending.get_mut(&alloc_id) {
            entry.occupancy_bytes = entry.occupancy_bytes.saturating_sub(bytes);
            if entry.occupancy_bytes == 0 {
                self.pending.remove(&alloc_id);
            }
        }
    }

    /// Subtracts the standard DBA's grants in `map` from ordinary entries,
    /// so spare-fill only covers demand the CPU left unserved.
    pub fn discount_standard_grants(&mut self, map: &Bwmap) {
        for alloc in map
            .allocations
            .iter()
            .filter(|a| a.origin == Origin::StandardDba)
        {
            if self
                .pending
                .get(&alloc.alloc_id)
                .is_some_and(|e| !e.low_latency)
            {
                self.consume(alloc.alloc_id, alloc.grant_size_bytes);
            }
        }
    }

    /// Total low-latency bytes still waiting for a grant.
    pub fn low_latency_backlog(&self) -> u64 {
        self.pending
            .values()
            .filter(|e| e.low_latency)
            .map(|e| u64::from(e.occupancy_bytes))
            .sum()
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct InterceptPolicy {
    pub spare_fill_enabled: bool,
    pub preempt_enabled: bool,
    /// Share of the map's best-effort bytes that may be reclaimed per frame.
    pub max_preempt_fraction: f64,
}

impl Default for InterceptPolicy {
    fn default() -> Self {
        Self {
            spare_fill_enabled: true,
            preempt_enabled: true,
            max_preempt_fraction: 0.5,
        }
    }
}

impl InterceptPolicy {
    pub fn validate(&self) -> Result<(), InterceptError> {
        if !(0.0..=1.0).contains(&self.max_preempt_fraction) {
            return Err(InterceptError::InvariantViolation(format!(
                "max_preempt_fraction {} outside [0, 1]",
                self.max_preempt_fraction
            )));
        }
        Ok(())
    }
}

/// Copies every DBRu of `burst` into the store and hands the burst back
/// untouched. Store overflow is counted on the store, not surfaced.
pub fn intercept_burst<'a>(
    store: &mut RegisterStore,
    burst: &'a UpstreamBurst,
) -> &'a UpstreamBurst {
    for dbru in &burst.dbrus {
        // StoreFull is non-fatal: the report still reaches the CPU DBA.
        let _ = store.record(
            dbru.alloc_id,
            StoreEntry {
                occupancy_bytes: dbru.occupancy_bytes,
                arrival_frame_sn: burst.frame_sn,
                low_latency: dbru.low_latency,
            },
        );
    }
    burst
}

/// Packs store entries into `reserved_window`: low-latency entries first,
/// then (with spare-fill) ordinary entries, each class in ascending
/// Alloc-ID order. Served bytes are removed from the store.
pub fn plan_fast_grants(
    store: &mut RegisterStore,
    reserved_window: Window,
    policy: &InterceptPolicy,
) -> Vec<Allocation> {
    let mut grants = Vec::new();
    let end = reserved_window.end();
    let mut cursor = u64::from(reserved_window.offset_bytes);

    let passes: &[(bool, Origin)] = if policy.spare_fill_enabled {
        &[(true, Origin::FastIntercept), (false, Origin::SpareFill)]
    } else {
        &[(true, Origin::FastIntercept)]
    };

    'passes: for &(low_latency, origin) in passes {
        let candidates: Vec<(AllocId, u32)> = store
            .iter()
            .filter(|(_, e)| e.low_latency == low_latency)
            .map(|(id, e)| (id, e.occupancy_bytes))
            .collect();
        for (alloc_id, occupancy) in candidates {
            let room = end - cursor;
            if room < u64::from(MIN_GRANT_BYTES) {
                break 'passes;
            }
            let size = u64::from(occupancy)
                .min(room)
                .max(u64::from(MIN_GRANT_BYTES)) as u32;
            grants.push(Allocation {
                alloc_id,
                start_time_bytes: cursor as u32,
                grant_size_bytes: size,
                dbru_requested: false,
                origin,
            });
            store.consume(alloc_id, size);
            cursor += u64::from(size);
        }
    }
    grants
}

/// The embedded network function: register store plus the context needed to
/// rewrite bandwidth maps. Every method takes `&mut self`, so each operation
/// is atomic with respect to the store.
#[derive(Clone, Debug)]
pub struct Enf {
    store: RegisterStore,
    policy: InterceptPolicy,
    registry: AllocRegistry,
    frame_capacity_bytes: u32,
    preempted_bytes: u64,
}

impl Enf {
    pub fn new(
        registry: AllocRegistry,
        policy: InterceptPolicy,
        store_capacity: usize,
        frame_capacity_bytes: u32,
    ) -> Self {
        Self {
            store: RegisterStore::new(store_capacity),
            policy,
            registry,
            frame_capacity_bytes,
            preempted_bytes: 0,
        }
    }

    pub fn store(&self) -> &RegisterStore {
        &self.store
    }

    pub fn store_mut(&mut self) -> &mut RegisterStore {
        &mut self.store
    }

    pub fn policy(&self) -> &InterceptPolicy {
        &self.policy
    }

    /// Bytes reclaimed from best-effort grants so far.
    pub fn preempted_bytes(&self) -> u64 {
        self.preempted_bytes
    }

    pub fn intercept_burst<'a>(&mut self, burst: &'a UpstreamBurst) -> &'a UpstreamBurst {
        intercept_burst(&mut self.store, burst)
    }

    pub fn plan_fast_grants(&mut self, reserved_window: Window) -> Vec<Allocation> {
        plan_fast_grants(&mut self.store, reserved_window, &self.policy)
    }

    /// Inserts `grants` into `map` and, if enabled, preempts best-effort
    /// space for low-latency demand still left in the store.
    ///
    /// Best-effort StandardDba grants are shrunk largest first (ties by
    /// ascending Alloc-ID), never below the minimum grant, and in total by
    /// at most `max_preempt_fraction` of the map's best-effort bytes. The
    /// reclaimed head of each shrunk grant is re-granted with origin
    /// `Preempting`; the shrunk grant keeps its `dbru_requested` flag.
    pub fn rewrite_bwmap(
        &mut self,
        map: &Bwmap,
        grants: &[Allocation],
    ) -> Result<Bwmap, InterceptError> {
        let window = map.reserved_window;
        let mut sorted: Vec<Allocation> = grants.to_vec();
        sorted.sort_by_key(|a| a.start_time_bytes);
        let mut prev_end = u64::from(window.offset_bytes);
        for g in &sorted {
            if !window.contains(g) {
                return Err(InterceptError::InvariantViolation(format!(
                    "grant for alloc id {} at {}+{} outside reserved window",
                    g.alloc_id, g.start_time_bytes, g.grant_size_bytes
                )));
            }
            if u64::from(g.start_time_bytes) < prev_end {
                return Err(InterceptError::InvariantViolation(format!(
                    "grant for alloc id {} overlaps a previous grant",
                    g.alloc_id
                )));
            }
            prev_end = g.end();
        }

        let mut out = map.clone();
        if self.policy.preempt_enabled {
            self.preempt(&mut out)?;
        }
        out.allocations.extend(sorted);
        out.allocations.sort_by_key(|a| a.start_time_bytes);
        out.validate(self.frame_capacity_bytes)?;
        Ok(out)
    }

    fn preempt(&mut self, out: &mut Bwmap) -> Result<(), InterceptError> {
        let mut overflow: Vec<(AllocId, u32)> = self
            .store
            .iter()
            .filter(|(_, e)| e.low_latency)
            .map(|(id, e)| (id, e.occupancy_bytes))
            .collect();
        if overflow.is_empty() {
            return Ok(());
        }

        let victims: Vec<usize> = {
            let mut v: Vec<usize> = out
                .allocations
                .iter()
                .enumerate()
                .filter(|(_, a)| {
                    a.origin == Origin::StandardDba
                        && self.registry.class_of(a.alloc_id) == Some(TcontClass::BestEffort)
                })
                .map(|(i, _)| i)
                .collect();
            v.sort_by(|&a, &b| {
                let (x, y) = (&out.allocations[a], &out.allocations[b]);
                y.grant_size_bytes
                    .cmp(&x.grant_size_bytes)
                    .then(x.alloc_id.cmp(&y.alloc_id))
            });
            v
        };
        let best_effort_total: u64 = victims
            .iter()
            .map(|&i| u64::from(out.allocations[i].grant_size_bytes))
            .sum();
        let mut budget =
            (self.policy.max_preempt_fraction * best_effort_total as f64).floor() as u64;
        let min_grant = u64::from(MIN_GRANT_BYTES);

        let mut next_demand = 0usize;
        let mut inserted = Vec::new();
        for i in victims {
            if next_demand >= overflow.len() {
                break;
            }
            let victim = out.allocations[i];
            let mut room = (u64::from(victim.grant_size_bytes) - min_grant).min(budget);
            let mut cursor = u64::from(victim.start_time_bytes);
            while next_demand < overflow.len() && room >= min_grant {
                let (alloc_id, demand) = &mut overflow[next_demand];
                let piece = u64::from(*demand).min(room).max(min_grant);
                inserted.push(Allocation {
                    alloc_id: *alloc_id,
                    start_time_bytes: cursor as u32,
                    grant_size_bytes: piece as u32,
                    dbru_requested: false,
                    origin: Origin::Preempting,
                });
                cursor += piece;
                room -= piece;
                budget -= piece;
                *demand = demand.saturating_sub(piece as u32);
                if *demand == 0 {
                    next_demand += 1;
                }
            }
            let taken = cursor - u64::from(victim.start_time_bytes);
            let shrunk = &mut out.allocations[i];
            shrunk.start_time_bytes = cursor as u32;
            shrunk.grant_size_bytes -= taken as u32;
        }

        for g in &inserted {
            self.store.consume(g.alloc_id, g.grant_size_bytes);
            self.preempted_bytes += u64::from(g.grant_size_bytes);
        }
        out.allocations.extend(inserted);
        Ok(())
    }

    /// Full downstream step: discount CPU grants, plan fast grants for the
    /// map's reserve, and rewrite the map.
    pub fn process_bwmap(&mut self, map: &Bwmap) -> Result<Bwmap, InterceptError> {
        self.store.discount_standard_grants(map);
        let grants = self.plan_fast_grants(map.reserved_window);
        self.rewrite_bwmap(map, &grants)
    }
}
