//! Fast-path planning, map rewriting and preemption.

use proptest::prelude::*;
use vpon_dba::codec::{
    encode_burst, encode_bwmap, AllocRegistry, Bwmap, Dbru, Origin, TcontClass, UpstreamBurst,
    Window,
};
use vpon_dba::intercept::{intercept_burst, plan_fast_grants, InterceptPolicy, RegisterStore};

mod common;
use common::fast_oracle::{
    arb_instance, arb_monotone_case, arb_plan_case, check_monotone, check_plan, check_rewrite, enf,
    entry, grant, oracle_plan, store_of,
};
use common::id;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(3_000))]

    #[test]
    fn plan_matches_exhaustive_packing(case in arb_plan_case()) {
        check_plan(&case)?;
    }
}

#[test]
fn three_entry_example_matches_oracle() {
    let entries = [(2, 500, false), (7, 800, true), (9, 400, true)];
    let window = Window::new(0, 1000);
    assert_eq!(
        oracle_plan(&entries, window, true),
        vec![(7, 0, 800), (9, 800, 200)]
    );
    let mut store = store_of(&entries);
    let grants = plan_fast_grants(&mut store, window, &InterceptPolicy::default());
    assert_eq!(
        grants,
        vec![
            grant(7, 0, 800, false, Origin::FastIntercept),
            grant(9, 800, 200, false, Origin::FastIntercept),
        ]
    );
    assert_eq!(store.get(id(9)).unwrap().occupancy_bytes, 200);
    assert_eq!(store.get(id(2)).unwrap().occupancy_bytes, 500);
    assert!(store.get(id(7)).is_none());
}

// ---------------------------------------------------------------------------
// rewrite_bwmap

fn registry(ids: &[(u16, TcontClass)]) -> AllocRegistry {
    let mut reg = AllocRegistry::new();
    for &(a, class) in ids {
        reg.register(id(a), a, class).unwrap();
    }
    reg
}

#[test]
fn empty_grant_list_is_identity() {
    let reg = registry(&[(3, TcontClass::Assured), (4, TcontClass::BestEffort)]);
    let map = Bwmap {
        frame_sn: 99,
        reserved_window: Window::new(0, 1000),
        allocations: vec![
            grant(3, 1000, 400, true, Origin::StandardDba),
            grant(4, 1400, 900, true, Origin::StandardDba),
        ],
    };
    let mut e = enf(reg, InterceptPolicy::default());
    let out = e.rewrite_bwmap(&map, &[]).unwrap();
    assert_eq!(encode_bwmap(&out).unwrap(), encode_bwmap(&map).unwrap());
}

#[test]
fn three_entry_rewrite_keeps_existing_records() {
    let reg = registry(&[
        (2, TcontClass::Assured),
        (7, TcontClass::LowLatency),
        (9, TcontClass::LowLatency),
    ]);
    let map = Bwmap {
        frame_sn: 5,
        reserved_window: Window::new(0, 1000),
        allocations: vec![grant(2, 1000, 3000, true, Origin::StandardDba)],
    };
    let mut e = enf(reg, InterceptPolicy::default());
    for (a, occ, ll) in [(2, 500, false), (7, 800, true), (9, 400, true)] {
        e.store_mut().record(id(a), entry(occ, ll)).unwrap();
    }
    let grants = e.plan_fast_grants(map.reserved_window);
    let out = e.rewrite_bwmap(&map, &grants).unwrap();

    assert_eq!(out.frame_sn, map.frame_sn);
    assert_eq!(out.allocations.len(), map.allocations.len() + 2);
    let before = encode_bwmap(&map).unwrap();
    let after = encode_bwmap(&out).unwrap();
    let records =
        |bytes: &[u8]| -> Vec<Vec<u8>> { bytes[14..].chunks(15).map(<[u8]>::to_vec).collect() };
    let after_records = records(&after);
    for rec in records(&before) {
        assert!(after_records.contains(&rec), "pre-existing record altered");
    }
}

#[test]
fn preemption_example_conserves_bytes() {
    let reg = registry(&[(7, TcontClass::LowLatency), (20, TcontClass::BestEffort)]);
    let map = Bwmap {
        frame_sn: 1,
        reserved_window: Window::new(0, 100),
        allocations: vec![grant(20, 100, 500, true, Origin::StandardDba)],
    };
    let policy = InterceptPolicy {
        max_preempt_fraction: 1.0,
        ..InterceptPolicy::default()
    };
    let mut e = enf(reg, policy);
    e.store_mut().record(id(7), entry(300, true)).unwrap();
    let grants = e.plan_fast_grants(map.reserved_window);
    let out = e.rewrite_bwmap(&map, &grants).unwrap();

    assert_eq!(
        out.allocations,
        vec![
            grant(7, 0, 100, false, Origin::FastIntercept),
            grant(7, 100, 200, false, Origin::Preempting),
            grant(20, 300, 300, true, Origin::StandardDba),
        ]
    );
    let fast: u64 = grants.iter().map(|g| u64::from(g.grant_size_bytes)).sum();
    assert_eq!(out.granted_bytes(), map.granted_bytes() + fast);
    assert!(e.store().get(id(7)).is_none());
    assert_eq!(e.preempted_bytes(), 200);
}

#[test]
fn overlapping_grants_rejected() {
    let reg = registry(&[(7, TcontClass::LowLatency), (9, TcontClass::LowLatency)]);
    let map = Bwmap {
        reserved_window: Window::new(0, 1000),
        ..Bwmap::default()
    };
    let mut e = enf(reg, InterceptPolicy::default());
    let bad = [
        grant(7, 0, 600, false, Origin::FastIntercept),
        grant(9, 500, 100, false, Origin::FastIntercept),
    ];
    assert!(e.rewrite_bwmap(&map, &bad).is_err());
    let outside = [grant(7, 900, 200, false, Origin::FastIntercept)];
    assert!(e.rewrite_bwmap(&map, &outside).is_err());
}

// ---------------------------------------------------------------------------
// random maps: containment, conservation, monotonicity

proptest! {
    #![proptest_config(ProptestConfig::with_cases(2_000))]

    #[test]
    fn rewrite_contains_and_conserves(inst in arb_instance()) {
        check_rewrite(&inst)?;
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1_000))]

    #[test]
    fn preemption_is_monotone_in_fraction((inst, lo, hi) in arb_monotone_case()) {
        check_monotone(&inst, lo, hi)?;
    }
}

// ---------------------------------------------------------------------------
// store and burst interception

proptest! {
    #[test]
    fn store_keeps_last_report(occupancies in prop::collection::vec(0u32..10_000, 1..20)) {
        let mut store = RegisterStore::default();
        for (sn, &occ) in occupancies.iter().enumerate() {
            let burst = UpstreamBurst {
                frame_sn: sn as u32,
                onu_id: 1,
                payload_bytes: 0,
                dbrus: vec![Dbru { alloc_id: id(7), occupancy_bytes: occ, low_latency: true }],
            };
            let before = encode_burst(&burst).unwrap();
            let passed = intercept_burst(&mut store, &burst);
            prop_assert_eq!(encode_burst(passed).unwrap(), before);
        }
        let last = *occupancies.last().unwrap();
        prop_assert_eq!(store.get(id(7)).map_or(0, |e| e.occupancy_bytes), last);
    }
}

#[test]
fn full_store_drops_new_ids_only() {
    let mut store = RegisterStore::new(2);
    let burst = UpstreamBurst {
        frame_sn: 1,
        onu_id: 1,
        payload_bytes: 0,
        dbrus: [(1, 10), (2, 20), (3, 30), (1, 15)]
            .into_iter()
            .map(|(a, occ)| Dbru {
                alloc_id: id(a),
                occupancy_bytes: occ,
                low_latency: true,
            })
            .collect(),
    };
    intercept_burst(&mut store, &burst);
    assert_eq!(store.len(), 2);
    assert_eq!(store.dropped(), 1);
    assert_eq!(store.get(id(1)).unwrap().occupancy_bytes, 15);
    assert!(store.get(id(3)).is_none());
}
