//! Simplified XGTC-style domain types and their fixed-width wire format.
//!
//! All multi-byte fields are big-endian. A bandwidth map is a 14-byte header
//! followed by 15-byte allocation records (11 bytes of fields, 4 reserved
//! zero bytes); an upstream burst is a 12-byte
//! header followed by 7-byte DBRu records. There are no variable-length
//! fields, so a message length is fully determined by its record count.

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Upstream frame capacity at 9.95328 Gb/s over a 125 µs frame.
pub const DEFAULT_FRAME_CAPACITY_BYTES: u32 = 155_520;

/// Smallest grant the schedulers may emit: room for one piggy-backed DBRu.
pub const MIN_GRANT_BYTES: u32 = 8;

pub const BWMAP_HEADER_LEN: usize = 14;
pub const ALLOCATION_RECORD_LEN: usize = 15;
/// Zero bytes closing each allocation record after the grant size.
const RECORD_PADDING_LEN: usize = 4;
pub const BURST_HEADER_LEN: usize = 12;
pub const DBRU_RECORD_LEN: usize = 7;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum CodecError {
    #[error("truncated message: need {needed} bytes, got {got}")]
    Truncated { needed: usize, got: usize },
    #[error("{extra} trailing bytes after declared records")]
    TrailingBytes { extra: usize },
    #[error("reserved flag bits set: {0:#04x}")]
    BadFlags(u8),
    #[error("invariant violation: {0}")]
    InvariantViolation(String),
}

/// 14-bit Alloc-ID naming one T-CONT queue.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(try_from = "u16", into = "u16")]
pub struct AllocId(u16);

impl AllocId {
    pub const MAX: u16 = 0x3FFF;

    pub fn new(value: u16) -> Result<Self, CodecError> {
        if value > Self::MAX {
            return Err(CodecError::InvariantViolation(format!(
                "alloc id {value} exceeds 14-bit range"
            )));
        }
        Ok(Self(value))
    }

    pub fn get(self) -> u16 {
        self.0
    }
}

impl TryFrom<u16> for AllocId {
    type Error = CodecError;

    fn try_from(value: u16) -> Result<Self, Self::Error> {
        Self::new(value)
    }
}

impl From<AllocId> for u16 {
    fn from(id: AllocId) -> u16 {
        id.0
    }
}

impl fmt::Display for AllocId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// Service class of a T-CONT, fixed per Alloc-ID for a scenario.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TcontClass {
    LowLatency,
    Assured,
    BestEffort,
}

impl TcontClass {
    pub const ALL: [TcontClass; 3] = [Self::LowLatency, Self::Assured, Self::BestEffort];

    /// Scheduling precedence; lower is served first.
    pub fn rank(self) -> u8 {
        match self {
            Self::LowLatency => 0,
            Self::Assured => 1,
            Self::BestEffort => 2,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Self::LowLatency => "low_latency",
            Self::Assured => "assured",
            Self::BestEffort => "best_effort",
        }
    }
}

impl fmt::Display for TcontClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Registered Alloc-IDs of one PON with their owning ONU and class.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct AllocRegistry {
    entries: BTreeMap<AllocId, (u16, TcontClass)>,
}

impl AllocRegistry {
    pub fn new() -> Self {
        Self::default()
    }

    /// Registers an Alloc-ID. Re-registration with a different owner or class
    /// is rejected since classes are fixed for a scenario.
    pub fn register(
        &mut self,
        alloc_id: AllocId,
        onu_id: u16,
        class: TcontClass,
    ) -> Result<(), CodecError> {
        match self.entries.get(&alloc_id) {
            Some(&existing) if existing != (onu_id, class) => Err(CodecError::InvariantViolation(
                format!("alloc id {alloc_id} registered twice with different owner or class"),
            )),
            _ => {
                self.entries.insert(alloc_id, (onu_id, class));
                Ok(())
            }
        }
    }

    pub fn class_of(&self, alloc_id: AllocId) -> Option<TcontClass> {
        self.entries.get(&alloc_id).map(|&(_, class)| class)
    }

    pub fn onu_of(&self, alloc_id: AllocId) -> Option<u16> {
        self.entries.get(&alloc_id).map(|&(onu, _)| onu)
    }

    pub fn contains(&self, alloc_id: AllocId) -> bool {
        self.entries.contains_key(&alloc_id)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Ascending by Alloc-ID.
    pub fn iter(&self) -> impl Iterator<Item = (AllocId, u16, TcontClass)> + '_ {
        self.entries
            .iter()
            .map(|(&id, &(onu, class))| (id, onu, class))
    }
}

/// Buffer-occupancy report for one Alloc-ID.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Dbru {
    pub alloc_id: AllocId,
    pub occupancy_bytes: u32,
    pub low_latency: bool,
}

/// Which scheduler produced an allocation.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Origin {
    StandardDba,
    FastIntercept,
    SpareFill,
    Preempting,
}

impl Origin {
    fn to_bits(self) -> u8 {
        match self {
            Self::StandardDba => 0,
            Self::FastIntercept => 1,
            Self::SpareFill => 2,
            Self::Preempting => 3,
        }
    }

    fn from_bits(bits: u8) -> Self {
        match bits & 0b11 {
            0 => Self::StandardDba,
            1 => Self::FastIntercept,
            2 => Self::SpareFill,
            _ => Self::Preempting,
        }
    }
}

/// One upstream grant.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Allocation {
    pub alloc_id: AllocId,
    pub start_time_bytes: u32,
    pub grant_size_bytes: u32,
    pub dbru_requested: bool,
    pub origin: Origin,
}

impl Allocation {
    /// Exclusive end offset.
    pub fn end(&self) -> u64 {
        u64::from(self.start_time_bytes) + u64::from(self.grant_size_bytes)
    }
}

/// Contiguous byte range of an upstream frame.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct Window {
    pub offset_bytes: u32,
    pub length_bytes: u32,
}

impl Window {
    pub fn new(offset_bytes: u32, length_bytes: u32) -> Self {
        Self {
            offset_bytes,
            length_bytes,
        }
    }

    pub fn end(&self) -> u64 {
        u64::from(self.offset_bytes) + u64::from(self.length_bytes)
    }

    pub fn contains(&self, alloc: &Allocation) -> bool {
        alloc.start_time_bytes >= self.offset_bytes && alloc.end() <= self.end()
    }

    pub fn intersects(&self, alloc: &Allocation) -> bool {
        self.length_bytes > 0
            && alloc.grant_size_bytes > 0
            && u64::from(alloc.start_time_bytes) < self.end()
            && alloc.end() > u64::from(self.offset_bytes)
    }
}

/// Per-frame list of upstream grants.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Bwmap {
    pub frame_sn: u32,
    pub reserved_window: Window,
    pub allocations: Vec<Allocation>,
}

impl Bwmap {
    /// Checks ordering, non-overlap, minimum grant size, capacity and
    /// reserved-window containment for fast-path grants.
    pub fn validate(&self, frame_capacity_bytes: u32) -> Result<(), CodecError> {
        let capacity = u64::from(frame_capacity_bytes);
        let violation = |msg: String| Err(CodecError::InvariantViolation(msg));

        if self.reserved_window.end() > capacity {
            return violation(format!(
                "reserved window ends at {} beyond capacity {capacity}",
                self.reserved_window.end()
            ));
        }
        let mut prev_end = 0u64;
        let mut total = 0u64;
        for (idx, alloc) in self.allocations.iter().enumerate() {
            if alloc.grant_size_bytes < MIN_GRANT_BYTES {
                return violation(format!(
                    "allocation {idx} (alloc id {}) grants {} bytes, below minimum {MIN_GRANT_BYTES}",
                    alloc.alloc_id, alloc.grant_size_bytes
                ));
            }
            if u64::from(alloc.start_time_bytes) < prev_end {
                return violation(format!(
                    "allocation {idx} (alloc id {}) starts at {} before previous end {prev_end}",
                    alloc.alloc_id, alloc.start_time_bytes
                ));
            }
            if alloc.end() > capacity {
                return violation(format!(
                    "allocation {idx} (alloc id {}) ends at {} beyond capacity {capacity}",
                    alloc.alloc_id,
                    alloc.end()
                ));
            }
            if matches!(alloc.origin, Origin::FastIntercept | Origin::SpareFill)
                && !self.reserved_window.contains(alloc)
            {
                return violation(format!(
                    "fast-path allocation {idx} (alloc id {}) outside reserved window",
                    alloc.alloc_id
                ));
            }
            prev_end = alloc.end();
            total += u64::from(alloc.grant_size_bytes);
        }
        if total > capacity {
            return violation(format!("{total} granted bytes exceed capacity {capacity}"));
        }
        Ok(())
    }

    pub fn granted_bytes(&self) -> u64 {
        self.allocations
            .iter()
            .map(|a| u64::from(a.grant_size_bytes))
            .sum()
    }
}

/// Upstream transmission of one ONU in one frame. Payload content is not
/// modeled, only its length.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct UpstreamBurst {
    pub frame_sn: u32,
    pub onu_id: u16,
    pub dbrus: Vec<Dbru>,
    pub payload_bytes: u32,
}

pub fn encode_bwmap(map: &Bwmap) -> Result<Vec<u8>, CodecError> {
    encode_bwmap_with(map, DEFAULT_FRAME_CAPACITY_BYTES)
}

pub fn encode_bwmap_with(map: &Bwmap, frame_capacity_bytes: u32) -> Result<Vec<u8>, CodecError> {
    map.validate(frame_capacity_bytes)?;
    let count = u16::try_from(map.allocations.len()).map_err(|_| {
        CodecError::InvariantViolation(format!(
            "{} allocations exceed the 16-bit count field",
            map.allocations.len()
        ))
    })?;

    let mut out =
        Vec::with_capacity(BWMAP_HEADER_LEN + ALLOCATION_RECORD_LEN * map.allocations.len());
    out.extend_from_slice(&map.frame_sn.to_be_bytes());
    out.extend_from_slice(&map.reserved_window.offset_bytes.to_be_bytes());
    out.extend_from_slice(&map.reserved_window.length_bytes.to_be_bytes());
    out.extend_from_slice(&count.to_be_bytes());
    for alloc in &map.allocations {
        out.extend_from_slice(&alloc.alloc_id.get().to_be_bytes());
        out.push(u8::from(alloc.dbru_requested) | (alloc.origin.to_bits() << 1));
        out.extend_from_slice(&alloc.start_time_bytes.to_be_bytes());
        out.extend_from_slice(&alloc.grant_size_bytes.to_be_bytes());
        out.extend_from_slice(&[0; RECORD_PADDING_LEN]);
    }
    Ok(out)
}

pub fn decode_bwmap(bytes: &[u8]) -> Result<Bwmap, CodecError> {
    decode_bwmap_with(bytes, DEFAULT_FRAME_CAPACITY_BYTES)
}

pub fn decode_bwmap_with(bytes: &[u8], frame_capacity_bytes: u32) -> Result<Bwmap, CodecError> {
    let mut rd = Reader::new(bytes);
    rd.require(BWMAP_HEADER_LEN)?;
    let frame_sn = rd.u32();
    let reserved_window = Window::new(rd.u32(), rd.u32());
    let count = usize::from(rd.u16());
    rd.require_exact(count * ALLOCATION_RECORD_LEN)?;

    let mut allocations = Vec::with_capacity(count);
    for _ in 0..count {
        let alloc_id = AllocId::new(rd.u16())?;
        let flags = rd.u8();
        if flags & !0b111 != 0 {
            return Err(CodecError::BadFlags(flags));
        }
        allocations.push(Allocation {
            alloc_id,
            dbru_requested: flags & 1 != 0,
            origin: Origin::from_bits(flags >> 1),
            start_time_bytes: rd.u32(),
            grant_size_bytes: rd.u32(),
        });
        if rd.u32() != 0 {
            return Err(CodecError::InvariantViolation(
                "reserved record bytes must be zero".into(),
            ));
        }
    }
    let map = Bwmap {
        frame_sn,
        reserved_window,
        allocations,
    };
    map.validate(frame_capacity_bytes)?;
    Ok(map)
}

pub fn encode_burst(burst: &UpstreamBurst) -> Result<Vec<u8>, CodecError> {
    let count = u16::try_from(burst.dbrus.len()).map_err(|_| {
        CodecError::InvariantViolation(format!(
            "{} DBRus exceed the 16-bit count field",
            burst.dbrus.len()
        ))
    })?;
    let mut out = Vec::with_capacity(BURST_HEADER_LEN + DBRU_RECORD_LEN * burst.dbrus.len());
    out.extend_from_slice(&burst.frame_sn.to_be_bytes());
    out.extend_from_slice(&burst.onu_id.to_be_bytes());
    out.extend_from_slice(&burst.payload_bytes.to_be_bytes());
    out.extend_from_slice(&count.to_be_bytes());
    for dbru in &burst.dbrus {
        out.extend_from_slice(&dbru.alloc_id.get().to_be_bytes());
        out.extend_from_slice(&dbru.occupancy_bytes.to_be_bytes());
        out.push(u8::from(dbru.low_latency));
    }
    Ok(out)
}

pub fn decode_burst(bytes: &[u8]) -> Result<UpstreamBurst, CodecError> {
    let mut rd = Reader::new(bytes);
    rd.require(BURST_HEADER_LEN)?;
    let frame_sn = rd.u32();
    let onu_id = rd.u16();
    let payload_bytes = rd.u32();
    let count = usize::from(rd.u16());
    rd.require_exact(count * DBRU_RECORD_LEN)?;

    let mut dbrus = Vec::with_capacity(count);
    for _ in 0..count {
        let alloc_id = AllocId::new(rd.u16())?;
        let occupancy_bytes = rd.u32();
        let flags = rd.u8();
        if flags & !1 != 0 {
            return Err(CodecError::BadFlags(flags));
        }
        dbrus.push(Dbru {
            alloc_id,
            occupancy_bytes,
            low_latency: flags == 1,
        });
    }
    Ok(UpstreamBurst {
        frame_sn,
        onu_id,
        dbrus,
        payload_bytes,
    })
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn new(buf: &'a [u8]) -> Self {
        Self { buf, pos: 0 }
    }

    fn remaining(&self) -> usize {
        self.buf.len() - self.pos
    }

    fn require(&self, n: usize) -> Result<(), CodecError> {
        if self.remaining() < n {
            return Err(CodecError::Truncated {
                needed: self.pos + n,
                got: self.buf.len(),
            });
        }
        Ok(())
    }

    fn require_exact(&self, n: usize) -> Result<(), CodecError> {
        self.require(n)?;
        if self.remaining() > n {
            return Err(CodecError::TrailingBytes {
                extra: self.remaining() - n,
            });
        }
        Ok(())
    }

    fn take<const N: usize>(&mut self) -> [u8; N] {
        let mut out = [0u8; N];
        out.copy_from_slice(&self.buf[self.pos..self.pos + N]);
        self.pos += N;
        out
    }

    fn u8(&mut self) -> u8 {
        self.take::<1>()[0]
    }

    fn u16(&mut self) -> u16 {
        u16::from_be_bytes(self.take())
    }

    fn u32(&mut self) -> u32 {
        u32::from_be_bytes(self.take())
    }
}
