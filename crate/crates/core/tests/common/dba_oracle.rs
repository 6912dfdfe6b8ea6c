//! The standard DBA against a byte-at-a-time round-robin oracle.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use vpon_dba::codec::{AllocId, AllocRegistry, Bwmap, Dbru, Origin, TcontClass, MIN_GRANT_BYTES};
use vpon_dba::dba::{compute_bwmap, ClassWeights, DbaConfig, DemandLedger};

pub const CAPACITY: u32 = 2000;
pub const CLASSES: [TcontClass; 3] = [
    TcontClass::LowLatency,
    TcontClass::Assured,
    TcontClass::BestEffort,
];

#[derive(Clone, Debug)]
pub struct Case {
    /// (alloc id, class, demand) ascending by id.
    pub ids: Vec<(u16, TcontClass, u32)>,
    pub strict: bool,
    /// Integer class weights, LL / Assured / BE.
    pub weights: [u64; 3],
    pub frame_sn: u32,
    pub interval: u32,
}

pub fn rank(class: TcontClass) -> usize {
    match class {
        TcontClass::LowLatency => 0,
        TcontClass::Assured => 1,
        TcontClass::BestEffort => 2,
    }
}

/// Grants in ascending-id order, computed one byte at a time.
pub fn oracle(case: &Case, cfg: &DbaConfig) -> Vec<(u16, u64)> {
    let reserve = (cfg.reserved_fraction * f64::from(cfg.frame_capacity_bytes)).floor() as u64;
    let mut room = u64::from(cfg.frame_capacity_bytes) - reserve;
    let min = u64::from(MIN_GRANT_BYTES);
    let polling = case.frame_sn.is_multiple_of(case.interval);
    let n = case.ids.len();

    let mut want: Vec<u64> = case
        .ids
        .iter()
        .map(|&(_, class, d)| {
            if class == TcontClass::LowLatency {
                0
            } else {
                u64::from(d)
            }
        })
        .collect();
    let mut floor = vec![0u64; n];
    if polling {
        for i in 0..n {
            floor[i] = min;
            want[i] = want[i].saturating_sub(min);
            room -= min;
        }
    } else {
        let mut order: Vec<usize> = (0..n).filter(|&i| want[i] > 0).collect();
        order.sort_by_key(|&i| (rank(case.ids[i].1), case.ids[i].0));
        for i in order {
            if room >= min {
                floor[i] = min;
                want[i] = want[i].saturating_sub(min);
                room -= min;
            } else {
                want[i] = 0;
            }
        }
    }

    let mut fill = vec![0u64; n];
    let groups: Vec<Vec<usize>> = if case.strict {
        CLASSES
            .iter()
            .map(|&c| (0..n).filter(|&i| case.ids[i].1 == c).collect())
            .collect()
    } else {
        vec![(0..n).collect()]
    };
    for group in groups {
        while room > 0 {
            let mut best: Option<usize> = None;
            for &i in &group {
                if fill[i] >= want[i] {
                    continue;
                }
                best = Some(match best {
                    None => i,
                    Some(b) => {
                        let wi = case.weights[rank(case.ids[i].1)];
                        let wb = case.weights[rank(case.ids[b].1)];
                        // (fill_i + 1) / w_i against (fill_b + 1) / w_b
                        let lhs = (fill[i] + 1) * wb;
                        let rhs = (fill[b] + 1) * wi;
                        let key_i = (rank(case.ids[i].1), case.ids[i].0);
                        let key_b = (rank(case.ids[b].1), case.ids[b].0);
                        if lhs < rhs || (lhs == rhs && key_i < key_b) {
                            i
                        } else {
                            b
                        }
                    }
                });
            }
            match best {
                Some(i) => {
                    fill[i] += 1;
                    room -= 1;
                }
                None => break,
            }
        }
    }
    (0..n)
        .map(|i| (case.ids[i].0, floor[i] + fill[i]))
        .filter(|&(_, g)| g > 0)
        .collect()
}

pub fn config(case: &Case) -> DbaConfig {
    DbaConfig {
        frame_capacity_bytes: CAPACITY,
        reserved_fraction: 0.1,
        service_interval_frames: case.interval,
        weights: ClassWeights {
            low_latency: case.weights[0] as f64,
            assured: case.weights[1] as f64,
            best_effort: case.weights[2] as f64,
        },
        strict_priority: case.strict,
        exclude_low_latency: true,
    }
}

pub fn run(case: &Case) -> (Bwmap, DbaConfig) {
    let mut reg = AllocRegistry::new();
    for &(a, class, _) in &case.ids {
        reg.register(AllocId::new(a).unwrap(), a, class).unwrap();
    }
    let mut ledger = DemandLedger::new(reg);
    for &(a, _, d) in &case.ids {
        let dbru = Dbru {
            alloc_id: AllocId::new(a).unwrap(),
            occupancy_bytes: d,
            low_latency: false,
        };
        ledger.ingest_dbru(&dbru, 0).unwrap();
    }
    let cfg = config(case);
    (compute_bwmap(&ledger, &cfg, case.frame_sn).unwrap(), cfg)
}

pub fn check(case: &Case) {
    let (map, cfg) = run(case);
    let got: Vec<(u16, u64)> = map
        .allocations
        .iter()
        .map(|a| (a.alloc_id.get(), u64::from(a.grant_size_bytes)))
        .collect();
    assert_eq!(got, oracle(case, &cfg), "{case:?}");

    map.validate(cfg.frame_capacity_bytes).unwrap();
    let window = cfg.reserved_window();
    let polling = case.frame_sn.is_multiple_of(case.interval);
    let mut cursor = u64::from(window.length_bytes);
    for a in &map.allocations {
        assert_eq!(a.origin, Origin::StandardDba);
        assert!(!window.intersects(a), "{case:?}");
        assert_eq!(
            u64::from(a.start_time_bytes),
            cursor,
            "packed after reserve"
        );
        assert_eq!(a.dbru_requested, polling);
        cursor = a.end();
    }

    let available = u64::from(CAPACITY) - u64::from(window.length_bytes);
    let demand: u64 = case
        .ids
        .iter()
        .filter(|(_, c, _)| *c != TcontClass::LowLatency)
        .map(|&(_, _, d)| u64::from(d))
        .sum();
    if polling && demand >= available {
        assert!(
            available - map.granted_bytes() < u64::from(MIN_GRANT_BYTES),
            "work conservation: {case:?}"
        );
    }
}

pub fn class_pattern(n: usize, pattern: usize) -> Vec<TcontClass> {
    (0..n)
        .map(|i| match pattern {
            0 => TcontClass::BestEffort,
            1 => CLASSES[1 + i % 2],
            _ => CLASSES[i % 3],
        })
        .collect()
}

/// Every demand vector over levels {0, 100, ..., 1000} for up to `max_ids`
/// Alloc-IDs, under three class patterns and both sharing modes.
pub fn exhaustive_grids(max_ids: usize) {
    let levels: Vec<u32> = (0..=10).map(|k| k * 100).collect();
    for n in 1..=max_ids {
        for pattern in 0..3 {
            let classes = class_pattern(n, pattern);
            let total = levels.len().pow(n as u32);
            for code in 0..total {
                let mut c = code;
                let ids = (0..n)
                    .map(|i| {
                        let d = levels[c % levels.len()];
                        c /= levels.len();
                        (3 * i as u16 + 1, classes[i], d)
                    })
                    .collect();
                for strict in [true, false] {
                    check(&Case {
                        ids: Vec::clone(&ids),
                        strict,
                        weights: [4, 2, 1],
                        frame_sn: 0,
                        interval: 1,
                    });
                }
            }
        }
    }
}

/// Random instances over 1 to 8 Alloc-IDs, with random classes, weights,
/// sharing mode and service interval.
pub fn sampled_grids(cases: usize, seed: u64) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for _ in 0..cases {
        let n = rng.random_range(1..=8usize);
        let mut used = Vec::new();
        while used.len() < n {
            let a = rng.random_range(0..64u16);
            if !used.contains(&a) {
                used.push(a);
            }
        }
        used.sort_unstable();
        let ids = used
            .into_iter()
            .map(|a| {
                (
                    a,
                    CLASSES[rng.random_range(0..3)],
                    100 * rng.random_range(0..=10u32),
                )
            })
            .collect();
        let interval = rng.random_range(1..=4u32);
        check(&Case {
            ids,
            strict: rng.random_bool(0.5),
            weights: [
                rng.random_range(1..=6),
                rng.random_range(1..=6),
                rng.random_range(1..=6),
            ],
            frame_sn: rng.random_range(0..8),
            interval,
        });
    }
}
