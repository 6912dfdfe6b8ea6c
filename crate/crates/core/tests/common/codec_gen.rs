//! Random valid wire messages.

use proptest::prelude::*;
use vpon_dba::codec::{
    Allocation, Bwmap, Dbru, Origin, UpstreamBurst, Window, DEFAULT_FRAME_CAPACITY_BYTES,
    MIN_GRANT_BYTES,
};

use super::id;

const ORIGINS: [Origin; 4] = [
    Origin::StandardDba,
    Origin::FastIntercept,
    Origin::SpareFill,
    Origin::Preempting,
];

pub fn arb_bwmap() -> impl Strategy<Value = Bwmap> {
    let cap = DEFAULT_FRAME_CAPACITY_BYTES;
    (
        any::<u32>(),
        0..cap / 2,
        0..cap / 2,
        prop::collection::vec(
            (
                0u32..4000,
                MIN_GRANT_BYTES..6000,
                0u16..16384,
                any::<bool>(),
                0usize..4,
            ),
            0..40,
        ),
    )
        .prop_map(move |(frame_sn, w_off, w_len, recs)| {
            let window = Window::new(w_off, w_len);
            let mut cursor = 0u64;
            let mut allocations = Vec::new();
            for (gap, size, alloc, dbru, origin) in recs {
                let start = cursor + u64::from(gap);
                if start + u64::from(size) > u64::from(cap) {
                    break;
                }
                let mut a = Allocation {
                    alloc_id: id(alloc),
                    start_time_bytes: start as u32,
                    grant_size_bytes: size,
                    dbru_requested: dbru,
                    origin: ORIGINS[origin],
                };
                if matches!(a.origin, Origin::FastIntercept | Origin::SpareFill)
                    && !window.contains(&a)
                {
                    a.origin = Origin::StandardDba;
                }
                cursor = a.end();
                allocations.push(a);
            }
            Bwmap {
                frame_sn,
                reserved_window: window,
                allocations,
            }
        })
}

pub fn arb_burst() -> impl Strategy<Value = UpstreamBurst> {
    (
        any::<u32>(),
        any::<u16>(),
        any::<u32>(),
        prop::collection::vec((0u16..16384, any::<u32>(), any::<bool>()), 0..40),
    )
        .prop_map(|(frame_sn, onu_id, payload_bytes, dbrus)| UpstreamBurst {
            frame_sn,
            onu_id,
            payload_bytes,
            dbrus: dbrus
                .into_iter()
                .map(|(a, occupancy_bytes, low_latency)| Dbru {
                    alloc_id: id(a),
                    occupancy_bytes,
                    low_latency,
                })
                .collect(),
        })
}
