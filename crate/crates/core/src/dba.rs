//! CPU-side standard DBA.
//!
//! The scheduler is status-reporting: each DBRu overwrites the outstanding
//! demand of its Alloc-ID. Every service interval each registered Alloc-ID
//! receives a minimum-size polling grant so it can piggy-back its next
//! report; the rest of the non-reserved capacity is water-filled over the
//! remaining demand. The head of the frame, `reserved_fraction` of capacity,
//! is left unallocated for the fast intercept path.

use std::collections::BTreeMap;

use thiserror::Error;

use crate::codec::{
    AllocId, AllocRegistry, Allocation, Bwmap, Dbru, Origin, TcontClass, Window,
    DEFAULT_FRAME_CAPACITY_BYTES, MIN_GRANT_BYTES,
};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum DbaError {
    #[error("alloc id {0} is not registered")]
    UnknownAllocId(AllocId),
    #[error("polling grants need {required} bytes but only {available} are outside the reserve")]
    CapacityExhausted { required: u64, available: u64 },
    #[error("invalid DBA config: {0}")]
    InvalidConfig(String),
}

/// Per-class scheduling weights.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ClassWeights {
    pub low_latency: f64,
    pub assured: f64,
    pub best_effort: f64,
}

impl ClassWeights {
    pub fn of(&self, class: TcontClass) -> f64 {
        match class {
            TcontClass::LowLatency => self.low_latency,
            TcontClass::Assured => self.assured,
            TcontClass::BestEffort => self.best_effort,
        }
    }
}

impl Default for ClassWeights {
    fn default() -> Self {
        Self {
            low_latency: 4.0,
            assured: 2.0,
            best_effort: 1.0,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct DbaConfig {
    pub frame_capacity_bytes: u32,
    /// Share of the frame, from offset 0, left unallocated.
    pub reserved_fraction: f64,
    /// Polling grants are issued on frames where `frame_sn % interval == 0`.
    pub service_interval_frames: u32,
    pub weights: ClassWeights,
    /// Serve classes in strict rank order. When false all classes share the
    /// capacity in proportion to their weights.
    pub strict_priority: bool,
    /// Withhold data grants from low-latency Alloc-IDs (they only get polls),
    /// leaving them to the fast intercept path.
    pub exclude_low_latency: bool,
}

impl Default for DbaConfig {
    fn default() -> Self {
        Self {
            frame_capacity_bytes: DEFAULT_FRAME_CAPACITY_BYTES,
            reserved_fraction: 0.1,
            service_interval_frames: 1,
            weights: ClassWeights::default(),
            strict_priority: true,
            exclude_low_latency: true,
        }
    }
}

impl DbaConfig {
    pub fn validate(&self) -> Result<(), DbaError> {
        let invalid = |msg: String| Err(DbaError::InvalidConfig(msg));
        if self.frame_capacity_bytes < MIN_GRANT_BYTES {
            return invalid(format!(
                "frame capacity {} below minimum grant",
                self.frame_capacity_bytes
            ));
        }
        if !(0.0..=1.0).contains(&self.reserved_fraction) {
            return invalid(format!(
                "reserved_fraction {} outside [0, 1]",
                self.reserved_fraction
            ));
        }
        if self.reserved_fraction > 0.0 && self.reserved_window().length_bytes < MIN_GRANT_BYTES {
            return invalid(format!(
                "reserved_fraction {} leaves a reserve smaller than the minimum grant",
                self.reserved_fraction
            ));
        }
        if self.service_interval_frames == 0 {
            return invalid("service_interval_frames must be at least 1".into());
        }
        for class in TcontClass::ALL {
            let w = self.weights.of(class);
            if !(w.is_finite() && w > 0.0) {
                return invalid(format!("weight for {class} must be positive, got {w}"));
            }
        }
        Ok(())
    }

    /// The reserve always sits at the start of the frame.
    pub fn reserved_window(&self) -> Window {
        let length = (self.reserved_fraction * f64::from(self.frame_capacity_bytes)).floor();
        Window::new(0, length as u32)
    }

    pub fn is_polling_frame(&self, frame_sn: u32) -> bool {
        frame_sn.is_multiple_of(self.service_interval_frames.max(1))
    }
}

/// Outstanding demand per registered Alloc-ID, as last reported.
#[derive(Clone, Debug)]
pub struct DemandLedger {
    registry: AllocRegistry,
    demand: BTreeMap<AllocId, u32>,
    last_update: BTreeMap<AllocId, u32>,
}

impl DemandLedger {
    pub fn new(registry: AllocRegistry) -> Self {
        Self {
            registry,
            demand: BTreeMap::new(),
            last_update: BTreeMap::new(),
        }
    }

    pub fn registry(&self) -> &AllocRegistry {
        &self.registry
    }

    /// Reports carry absolute occupancy, so the newest one replaces the old value.
    pub fn ingest_dbru(&mut self, dbru: &Dbru, frame_sn: u32) -> Result<(), DbaError> {
        if !self.registry.contains(dbru.alloc_id) {
            return Err(DbaError::UnknownAllocId(dbru.alloc_id));
        }
        self.demand.insert(dbru.alloc_id, dbru.occupancy_bytes);
        self.last_update.insert(dbru.alloc_id, frame_sn);
        Ok(())
    }

    pub fn demand(&self, alloc_id: AllocId) -> u32 {
        self.demand.get(&alloc_id).copied().unwrap_or(0)
    }

    pub fn last_update(&self, alloc_id: AllocId) -> Option<u32> {
        self.last_update.get(&alloc_id).copied()
    }

    /// Non-zero demands, ascending by Alloc-ID.
    pub fn outstanding(&self) -> impl Iterator<Item = (AllocId, u32)> + '_ {
        self.demand
            .iter()
            .filter(|(_, &d)| d > 0)
            .map(|(&id, &d)| (id, d))
    }

    /// Decrements demand by every StandardDba grant in `map`, floored at zero.
    pub fn apply_grants(&mut self, map: &Bwmap) {
        for alloc in map
            .allocations
            .iter()
            .filter(|a| a.origin == Origin::StandardDba)
        {
            if let Some(d) = self.demand.get_mut(&alloc.alloc_id) {
                *d = d.saturating_sub(alloc.grant_size_bytes);
            }
        }
    }
}

/// One participant of a water-fill.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FillEntry {
    pub alloc_id: AllocId,
    pub rank: u8,
    pub weight: f64,
    pub demand: u64,
}

/// Weighted max-min fair split of `capacity` bytes.
///
/// The result is byte-exact with handing out single bytes one at a time,
/// each to the unsatisfied entry whose next byte has the smallest virtual
/// finish time `(granted + 1) / weight`, ties broken by `(rank, alloc_id)`.
pub fn weighted_water_fill(entries: &[FillEntry], capacity: u64) -> Vec<u64> {
    let total: u64 = entries.iter().map(|e| e.demand).sum();
    if total <= capacity {
        return entries.iter().map(|e| e.demand).collect();
    }

    let mut order: Vec<usize> = (0..entries.len())
        .filter(|&i| entries[i].demand > 0)
        .collect();
    order.sort_by(|&a, &b| {
        let ra = entries[a].demand as f64 / entries[a].weight;
        let rb = entries[b].demand as f64 / entries[b].weight;
        ra.total_cmp(&rb)
    });

    let mut grants = vec![0u64; entries.len()];
    let mut cap_left = capacity as f64;
    let mut weight_left: f64 = order.iter().map(|&i| entries[i].weight).sum();
    let mut level = 0.0;
    for (pos, &i) in order.iter().enumerate() {
        let e = &entries[i];
        if (e.demand as f64 / e.weight) * weight_left <= cap_left {
            grants[i] = e.demand;
            cap_left -= e.demand as f64;
            weight_left -= e.weight;
        } else {
            level = cap_left / weight_left;
            // Undershoot slightly; the byte loop below tops up exactly.
            let level = level * (1.0 - 1e-12);
            for &j in &order[pos..] {
                let share = (level * entries[j].weight).floor().max(0.0) as u64;
                grants[j] = share.min(entries[j].demand);
            }
            break;
        }
    }
    debug_assert!(level >= 0.0);

    let mut leftover = capacity - grants.iter().sum::<u64>().min(capacity);
    while leftover > 0 {
        let next = (0..entries.len())
            .filter(|&i| grants[i] < entries[i].demand)
            .min_by(|&a, &b| {
                let ka = (grants[a] + 1) as f64 / entries[a].weight;
                let kb = (grants[b] + 1) as f64 / entries[b].weight;
                ka.total_cmp(&kb)
                    .then(entries[a].rank.cmp(&entries[b].rank))
                    .then(entries[a].alloc_id.cmp(&entries[b].alloc_id))
            });
        match next {
            Some(i) => {
                grants[i] += 1;
                leftover -= 1;
            }
            None => break,
        }
    }
    grants
}

/// Builds the bandwidth map for `frame_sn` from the ledger's current demand.
pub fn compute_bwmap(
    ledger: &DemandLedger,
    cfg: &DbaConfig,
    frame_sn: u32,
) -> Result<Bwmap, DbaError> {
    cfg.validate()?;
    let reserved_window = cfg.reserved_window();
    let available = u64::from(cfg.frame_capacity_bytes) - u64::from(reserved_window.length_bytes);
    let polling = cfg.is_polling_frame(frame_sn);
    let min_grant = u64::from(MIN_GRANT_BYTES);

    struct Slot {
        alloc_id: AllocId,
        class: TcontClass,
        floor: u64,
        residual: u64,
    }

    let mut slots: Vec<Slot> = ledger
        .registry
        .iter()
        .map(|(alloc_id, _, class)| {
            let eligible = !(cfg.exclude_low_latency && class == TcontClass::LowLatency);
            let demand = if eligible {
                u64::from(ledger.demand(alloc_id))
            } else {
                0
            };
            Slot {
                alloc_id,
                class,
                floor: 0,
                residual: demand,
            }
        })
        .collect();

    let mut used = 0u64;
    if polling {
        let required = min_grant * slots.len() as u64;
        if required > available {
            return Err(DbaError::CapacityExhausted {
                required,
                available,
            });
        }
        for slot in &mut slots {
            slot.floor = min_grant;
            slot.residual = slot.residual.saturating_sub(min_grant);
        }
        used = required;
    } else {
        // Outside polling frames only Alloc-IDs with demand get a grant, and it
        // still has to reach the minimum size.
        let mut by_priority: Vec<usize> = (0..slots.len())
            .filter(|&i| slots[i].residual > 0)
            .collect();
        by_priority.sort_by_key(|&i| (slots[i].class.rank(), slots[i].alloc_id));
        for i in by_priority {
            if used + min_grant <= available {
                slots[i].floor = min_grant;
                slots[i].residual = slots[i].residual.saturating_sub(min_grant);
                used += min_grant;
            } else {
                slots[i].residual = 0;
            }
        }
    }

    let mut remaining = available - used;
    let entries: Vec<FillEntry> = slots
        .iter()
        .map(|s| FillEntry {
            alloc_id: s.alloc_id,
            rank: s.class.rank(),
            weight: cfg.weights.of(s.class),
            demand: s.residual,
        })
        .collect();
    let mut shares = vec![0u64; slots.len()];
    if cfg.strict_priority {
        for class in TcontClass::ALL {
            let idx: Vec<usize> = (0..slots.len())
                .filter(|&i| slots[i].class == class)
                .collect();
            let group: Vec<FillEntry> = idx.iter().map(|&i| entries[i]).collect();
            let split = weighted_water_fill(&group, remaining);
            for (&i, share) in idx.iter().zip(split) {
                shares[i] = share;
                remaining -= share;
            }
        }
    } else {
        shares = weighted_water_fill(&entries, remaining);
    }

    let mut cursor = reserved_window.end();
    let mut allocations = Vec::new();
    for (slot, share) in slots.iter().zip(shares) {
        let size = slot.floor + share;
        if size == 0 {
            continue;
        }
        allocations.push(Allocation {
            alloc_id: slot.alloc_id,
            start_time_bytes: cursor as u32,
            grant_size_bytes: size as u32,
            dbru_requested: polling,
            origin: Origin::StandardDba,
        });
        cursor += size;
    }

    let map = Bwmap {
        frame_sn,
        reserved_window,
        allocations,
    };
    debug_assert!(map.validate(cfg.frame_capacity_bytes).is_ok());
    Ok(map)
}
