//! Fast-path planning oracle and random map/store instances.

use std::collections::BTreeMap;

use proptest::prelude::*;
use proptest::test_runner::TestCaseError;
use vpon_dba::codec::{
    AllocRegistry, Allocation, Bwmap, Origin, TcontClass, Window, DEFAULT_FRAME_CAPACITY_BYTES,
    MIN_GRANT_BYTES,
};
use vpon_dba::intercept::{plan_fast_grants, Enf, InterceptPolicy, RegisterStore, StoreEntry};

use super::id;

pub fn entry(occupancy: u32, low_latency: bool) -> StoreEntry {
    StoreEntry {
        occupancy_bytes: occupancy,
        arrival_frame_sn: 0,
        low_latency,
    }
}

pub fn grant(a: u16, start: u32, size: u32, dbru: bool, origin: Origin) -> Allocation {
    Allocation {
        alloc_id: id(a),
        start_time_bytes: start,
        grant_size_bytes: size,
        dbru_requested: dbru,
        origin,
    }
}

pub fn enf(reg: AllocRegistry, policy: InterceptPolicy) -> Enf {
    Enf::new(reg, policy, 64, DEFAULT_FRAME_CAPACITY_BYTES)
}

/// Packs `order` greedily into `window` with the same per-grant rule:
/// min(occupancy, room), padded to the minimum, stop once room < minimum.
pub fn pack(order: &[(u16, u32, bool)], window: Window) -> Vec<(u16, u32, u32)> {
    let min = u64::from(MIN_GRANT_BYTES);
    let mut cursor = u64::from(window.offset_bytes);
    let mut out = Vec::new();
    for &(a, occ, _) in order {
        let room = window.end() - cursor;
        if room < min {
            break;
        }
        let size = u64::from(occ).min(room).max(min);
        out.push((a, cursor as u32, size as u32));
        cursor += size;
    }
    out
}

pub fn permutations(items: &[(u16, u32, bool)]) -> Vec<Vec<(u16, u32, bool)>> {
    if items.len() <= 1 {
        return vec![items.to_vec()];
    }
    let mut out = Vec::new();
    for i in 0..items.len() {
        let mut rest = items.to_vec();
        let head = rest.remove(i);
        for mut tail in permutations(&rest) {
            tail.insert(0, head);
            out.push(tail);
        }
    }
    out
}

/// Among every service order, the one whose grant vector (indexed by
/// low-latency-first, then ascending id) is lexicographically largest.
pub fn oracle_plan(
    entries: &[(u16, u32, bool)],
    window: Window,
    spare_fill: bool,
) -> Vec<(u16, u32, u32)> {
    let eligible: Vec<(u16, u32, bool)> = entries
        .iter()
        .copied()
        .filter(|&(_, _, ll)| ll || spare_fill)
        .collect();
    let mut keys: Vec<(bool, u16)> = eligible.iter().map(|&(a, _, ll)| (!ll, a)).collect();
    keys.sort_unstable();

    // Equal grant vectors are told apart by the order itself: the one that
    // lays keys out in priority order wins.
    type Best = (Vec<u32>, Vec<(bool, u16)>, Vec<(u16, u32, u32)>);
    let mut best: Option<Best> = None;
    for order in permutations(&eligible) {
        let layout = pack(&order, window);
        let served: BTreeMap<u16, u32> = layout.iter().map(|&(a, _, s)| (a, s)).collect();
        let vector: Vec<u32> = keys
            .iter()
            .map(|(_, a)| served.get(a).copied().unwrap_or(0))
            .collect();
        let sequence: Vec<(bool, u16)> = order.iter().map(|&(a, _, ll)| (!ll, a)).collect();
        let better = best
            .as_ref()
            .is_none_or(|(v, seq, _)| vector > *v || (vector == *v && sequence < *seq));
        if better {
            best = Some((vector, sequence, layout));
        }
    }
    best.map(|(_, _, layout)| layout).unwrap_or_default()
}

pub fn store_of(entries: &[(u16, u32, bool)]) -> RegisterStore {
    let mut store = RegisterStore::new(64);
    for &(a, occ, ll) in entries {
        store.record(id(a), entry(occ, ll)).unwrap();
    }
    store
}

pub fn arb_store_entries() -> impl Strategy<Value = Vec<(u16, u32, bool)>> {
    prop::collection::btree_map(0u16..40, (1u32..1200, any::<bool>()), 0..=5).prop_map(|m| {
        m.into_iter()
            .map(|(a, (occ, ll))| (a, occ, ll))
            .collect::<Vec<_>>()
    })
}

#[derive(Clone, Debug)]
pub struct PlanCase {
    pub entries: Vec<(u16, u32, bool)>,
    pub window: Window,
    pub spare_fill: bool,
}

pub fn arb_plan_case() -> impl Strategy<Value = PlanCase> {
    (arb_store_entries(), 0u32..5000, 0u32..2500, any::<bool>()).prop_map(
        |(entries, offset, length, spare_fill)| PlanCase {
            entries,
            window: Window::new(offset, length),
            spare_fill,
        },
    )
}

pub fn check_plan(case: &PlanCase) -> Result<(), TestCaseError> {
    let policy = InterceptPolicy {
        spare_fill_enabled: case.spare_fill,
        ..InterceptPolicy::default()
    };
    let mut store = store_of(&case.entries);
    let grants = plan_fast_grants(&mut store, case.window, &policy);

    let expected = oracle_plan(&case.entries, case.window, case.spare_fill);
    let got: Vec<(u16, u32, u32)> = grants
        .iter()
        .map(|g| (g.alloc_id.get(), g.start_time_bytes, g.grant_size_bytes))
        .collect();
    prop_assert_eq!(&got, &expected);

    let ll: BTreeMap<u16, bool> = case.entries.iter().map(|&(a, _, l)| (a, l)).collect();
    for g in &grants {
        prop_assert!(case.window.contains(g));
        prop_assert!(!g.dbru_requested);
        let want = if ll[&g.alloc_id.get()] {
            Origin::FastIntercept
        } else {
            Origin::SpareFill
        };
        prop_assert_eq!(g.origin, want);
    }
    for &(a, occ, _) in &case.entries {
        let served = expected.iter().find(|g| g.0 == a).map_or(0, |g| g.2);
        let residual = occ.saturating_sub(served);
        prop_assert_eq!(store.get(id(a)).map_or(0, |e| e.occupancy_bytes), residual);
    }
    Ok(())
}

#[derive(Clone, Debug)]
pub struct Instance {
    pub reserve: u32,
    /// (class is best-effort, size) of standard grants packed after the reserve.
    pub standard: Vec<(bool, u32)>,
    /// (occupancy, low-latency) of store entries, ids 1000.. ascending.
    pub store: Vec<(u32, bool)>,
    pub fraction: f64,
}

pub fn arb_instance() -> impl Strategy<Value = Instance> {
    (
        0u32..3000,
        prop::collection::vec((any::<bool>(), MIN_GRANT_BYTES..4000), 0..8),
        prop::collection::vec((1u32..5000, any::<bool>()), 0..6),
        0.0f64..=1.0,
    )
        .prop_map(|(reserve, standard, store, fraction)| Instance {
            reserve: if reserve < MIN_GRANT_BYTES {
                0
            } else {
                reserve
            },
            standard,
            store,
            fraction,
        })
}

pub fn build(inst: &Instance, fraction: f64) -> (Enf, Bwmap) {
    let mut reg = AllocRegistry::new();
    let mut allocations = Vec::new();
    let mut cursor = inst.reserve;
    for (i, &(best_effort, size)) in inst.standard.iter().enumerate() {
        let a = id(i as u16 + 1);
        let class = if best_effort {
            TcontClass::BestEffort
        } else {
            TcontClass::Assured
        };
        reg.register(a, a.get(), class).unwrap();
        allocations.push(grant(
            a.get(),
            cursor,
            size,
            i % 2 == 0,
            Origin::StandardDba,
        ));
        cursor += size;
    }
    for (i, &(_, ll)) in inst.store.iter().enumerate() {
        let class = if ll {
            TcontClass::LowLatency
        } else {
            TcontClass::Assured
        };
        reg.register(id(1000 + i as u16), 1000, class).unwrap();
    }
    let policy = InterceptPolicy {
        max_preempt_fraction: fraction,
        ..InterceptPolicy::default()
    };
    let mut e = enf(reg, policy);
    for (i, &(occ, ll)) in inst.store.iter().enumerate() {
        e.store_mut()
            .record(id(1000 + i as u16), entry(occ, ll))
            .unwrap();
    }
    let map = Bwmap {
        frame_sn: 17,
        reserved_window: Window::new(0, inst.reserve),
        allocations,
    };
    (e, map)
}

pub fn low_latency_bytes(out: &Bwmap, inst: &Instance) -> u64 {
    out.allocations
        .iter()
        .filter(|a| {
            let i = a.alloc_id.get();
            i >= 1000 && inst.store[usize::from(i - 1000)].1
        })
        .map(|a| u64::from(a.grant_size_bytes))
        .sum()
}

/// Containment of every fast-path grant and byte conservation across the
/// rewrite, including preemption.
pub fn check_rewrite(inst: &Instance) -> Result<(), TestCaseError> {
    let (mut e, map) = build(inst, inst.fraction);
    let grants = e.plan_fast_grants(map.reserved_window);
    let out = e
        .rewrite_bwmap(&map, &grants)
        .map_err(|err| TestCaseError::fail(err.to_string()))?;
    prop_assert_eq!(out.frame_sn, map.frame_sn);
    prop_assert!(out.validate(DEFAULT_FRAME_CAPACITY_BYTES).is_ok());

    let sum = |origin: Origin| -> u64 {
        out.allocations
            .iter()
            .filter(|a| a.origin == origin)
            .map(|a| u64::from(a.grant_size_bytes))
            .sum()
    };
    let fast = sum(Origin::FastIntercept);
    let spare = sum(Origin::SpareFill);
    let preempting = sum(Origin::Preempting);
    let planned: u64 = grants.iter().map(|g| u64::from(g.grant_size_bytes)).sum();
    prop_assert_eq!(fast + spare, planned);
    prop_assert_eq!(sum(Origin::StandardDba) + preempting, map.granted_bytes());
    prop_assert_eq!(out.granted_bytes(), map.granted_bytes() + planned);

    let be_total: u64 = inst
        .standard
        .iter()
        .filter(|s| s.0)
        .map(|s| u64::from(s.1))
        .sum();
    prop_assert!(preempting as f64 <= (inst.fraction * be_total as f64).floor());

    for a in &out.allocations {
        match a.origin {
            Origin::FastIntercept | Origin::SpareFill => {
                prop_assert!(map.reserved_window.contains(a));
            }
            Origin::Preempting => {
                let host = map.allocations.iter().find(|s| {
                    inst.standard[usize::from(s.alloc_id.get() - 1)].0
                        && s.start_time_bytes <= a.start_time_bytes
                        && a.end() <= s.end()
                });
                prop_assert!(host.is_some(), "preempting grant outside vacated space");
                prop_assert!(inst.store[usize::from(a.alloc_id.get() - 1000)].1);
            }
            Origin::StandardDba => {
                let orig = map
                    .allocations
                    .iter()
                    .find(|s| s.alloc_id == a.alloc_id)
                    .unwrap();
                prop_assert_eq!(a.dbru_requested, orig.dbru_requested);
                prop_assert_eq!(a.end(), orig.end());
                prop_assert!(a.grant_size_bytes >= MIN_GRANT_BYTES);
                if a.grant_size_bytes != orig.grant_size_bytes {
                    prop_assert!(inst.standard[usize::from(a.alloc_id.get() - 1)].0);
                }
            }
        }
    }
    Ok(())
}

pub fn arb_monotone_case() -> impl Strategy<Value = (Instance, f64, f64)> {
    (arb_instance(), 0.0f64..=1.0, 0.0f64..=1.0).prop_map(|(inst, a, b)| (inst, a.min(b), a.max(b)))
}

/// Raising the preemption fraction never lowers low-latency bytes granted.
pub fn check_monotone(inst: &Instance, lo: f64, hi: f64) -> Result<(), TestCaseError> {
    let run = |fraction: f64| {
        let (mut e, map) = build(inst, fraction);
        let out = e.process_bwmap(&map).unwrap();
        low_latency_bytes(&out, inst)
    };
    let (a, b) = (run(lo), run(hi));
    prop_assert!(
        a <= b,
        "fraction {} gave {} bytes, {} gave {}",
        lo,
        a,
        hi,
        b
    );
    Ok(())
}
