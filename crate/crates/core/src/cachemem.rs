//! Cache-line and hierarchy data structures shared by both protocols.
//!
//! Addresses are line indices: one [`ValueToken`] per line, no sub-line data.

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::chrono::Timestamp;
use crate::leasepred::LeaseCode;

pub type CoreId = usize;

/// A line-granular address.
#[derive(
    Clone, Copy, Debug, Default, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize,
)]
#[serde(transparent)]
pub struct Addr(pub u64);

impl fmt::Display for Addr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "#{}", self.0)
    }
}

/// Identity of the store that produced a value.
///
/// `writer == None` marks the pre-run contents of memory. `data` is the
/// program-visible value; `(writer, seq)` makes every dynamic store unique.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct ValueToken {
    pub writer: Option<CoreId>,
    pub seq: u64,
    pub data: u64,
}

impl ValueToken {
    pub const INITIAL: ValueToken = ValueToken {
        writer: None,
        seq: 0,
        data: 0,
    };

    pub fn store(writer: CoreId, seq: u64, data: u64) -> Self {
        ValueToken {
            writer: Some(writer),
            seq,
            data,
        }
    }

    pub fn is_initial(&self) -> bool {
        self.writer.is_none()
    }
}

impl Default for ValueToken {
    fn default() -> Self {
        ValueToken::INITIAL
    }
}

impl fmt::Display for ValueToken {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.writer {
            None => write!(f, "init"),
            Some(c) => write!(f, "c{}#{}={}", c, self.seq, self.data),
        }
    }
}

/// L1 coherence state. Invalid lines are simply absent from the cache.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum L1State {
    M,
    E,
    S,
}

impl L1State {
    /// M and E lines are master copies.
    pub fn is_exclusive(self) -> bool {
        matches!(self, L1State::M | L1State::E)
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CacheLine {
    pub addr: Addr,
    pub state: L1State,
    pub wts: Timestamp,
    pub rts: Timestamp,
    pub value: ValueToken,
    pub dirty: bool,
    /// Lease granted with this copy; echoed back on renewal.
    pub lease: LeaseCode,
}

impl CacheLine {
    pub fn check_invariants(&self) -> Result<(), String> {
        if self.wts > self.rts {
            return Err(format!(
                "{}: wts {} > rts {} in L1",
                self.addr, self.wts, self.rts
            ));
        }
        if self.dirty && self.state != L1State::M {
            return Err(format!("{}: dirty line in state {:?}", self.addr, self.state));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum LlcState {
    Shared,
    Owned(CoreId),
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct LlcLine {
    pub addr: Addr,
    pub state: LlcState,
    pub wts: Timestamp,
    pub rts: Timestamp,
    pub value: ValueToken,
    pub e_bit: bool,
    pub cur_lease: LeaseCode,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct MemEntry {
    pub value: ValueToken,
    pub wts: Timestamp,
    pub rts: Timestamp,
    pub lease: Option<LeaseCode>,
}

impl Default for MemEntry {
    fn default() -> Self {
        MemEntry {
            value: ValueToken::INITIAL,
            wts: Timestamp::ZERO,
            rts: Timestamp::ZERO,
            lease: None,
        }
    }
}

/// Flat simulated DRAM. Timestamps survive LLC eviction.
#[derive(Clone, Debug, Default)]
pub struct MainMemory {
    entries: BTreeMap<Addr, MemEntry>,
}

impl MainMemory {
    pub fn read(&self, addr: Addr) -> MemEntry {
        self.entries.get(&addr).copied().unwrap_or_default()
    }

    pub fn write(&mut self, addr: Addr, entry: MemEntry) {
        self.entries.insert(addr, entry);
    }
}

/// Cache geometry in bytes.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Geometry {
    pub size_bytes: usize,
    pub ways: usize,
    pub line_bytes: usize,
}

impl Geometry {
    pub fn sets(&self) -> usize {
        (self.size_bytes / (self.ways * self.line_bytes)).max(1)
    }

    pub fn validate(&self) -> Result<(), String> {
        if self.ways == 0 || self.line_bytes == 0 || self.size_bytes == 0 {
            return Err("cache geometry values must be non-zero".into());
        }
        if self.size_bytes % (self.ways * self.line_bytes) != 0 {
            return Err(format!(
                "cache of {} B is not a whole number of {}-way sets of {} B lines",
                self.size_bytes, self.ways, self.line_bytes
            ));
        }
        Ok(())
    }
}

pub trait Tagged {
    fn tag(&self) -> Addr;
}

impl Tagged for CacheLine {
    fn tag(&self) -> Addr {
        self.addr
    }
}

impl Tagged for LlcLine {
    fn tag(&self) -> Addr {
        self.addr
    }
}

/// Set-associative storage with per-set LRU replacement.
///
/// Sets are allocated lazily so small runs stay cheap to clone.
#[derive(Clone, Debug)]
pub struct SetAssoc<T> {
    sets: BTreeMap<usize, Vec<T>>,
    num_sets: usize,
    ways: usize,
}

impl<T: Tagged> SetAssoc<T> {
    pub fn new(geometry: Geometry) -> Self {
        SetAssoc {
            sets: BTreeMap::new(),
            num_sets: geometry.sets(),
            ways: geometry.ways,
        }
    }

    fn set_of(&self, addr: Addr) -> usize {
        (addr.0 % self.num_sets as u64) as usize
    }

    pub fn get(&self, addr: Addr) -> Option<&T> {
        self.sets
            .get(&self.set_of(addr))
            .and_then(|s| s.iter().find(|l| l.tag() == addr))
    }

    pub fn get_mut(&mut self, addr: Addr) -> Option<&mut T> {
        let set = self.set_of(addr);
        self.sets
            .get_mut(&set)
            .and_then(|s| s.iter_mut().find(|l| l.tag() == addr))
    }

    /// Mark `addr` most recently used.
    pub fn touch(&mut self, addr: Addr) {
        let set = self.set_of(addr);
        if let Some(s) = self.sets.get_mut(&set) {
            if let Some(pos) = s.iter().position(|l| l.tag() == addr) {
                let line = s.remove(pos);
                s.insert(0, line);
            }
        }
    }

    /// The line that would be evicted to make room for `addr`, if any.
    pub fn victim_for(&self, addr: Addr) -> Option<&T> {
        let s = self.sets.get(&self.set_of(addr))?;
        if s.len() < self.ways || s.iter().any(|l| l.tag() == addr) {
            None
        } else {
            s.last()
        }
    }

    /// Insert as MRU, replacing an existing copy; returns the LRU line evicted
    /// to make room.
    pub fn insert(&mut self, line: T) -> Option<T> {
        let set = self.set_of(line.tag());
        let ways = self.ways;
        let s = self.sets.entry(set).or_default();
        if let Some(pos) = s.iter().position(|l| l.tag() == line.tag()) {
            s.remove(pos);
        }
        let evicted = if s.len() >= ways { s.pop() } else { None };
        s.insert(0, line);
        evicted
    }

    pub fn remove(&mut self, addr: Addr) -> Option<T> {
        let set = self.set_of(addr);
        let s = self.sets.get_mut(&set)?;
        let pos = s.iter().position(|l| l.tag() == addr)?;
        Some(s.remove(pos))
    }

    pub fn iter(&self) -> impl Iterator<Item = &T> {
        self.sets.values().flat_map(|s| s.iter())
    }

    pub fn len(&self) -> usize {
        self.sets.values().map(Vec::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn line(a: u64) -> CacheLine {
        CacheLine {
            addr: Addr(a),
            state: L1State::S,
            wts: Timestamp(0),
            rts: Timestamp(0),
            value: ValueToken::INITIAL,
            dirty: false,
            lease: LeaseCode::MIN,
        }
    }

    fn l1() -> SetAssoc<CacheLine> {
        SetAssoc::new(Geometry {
            size_bytes: 32 * 1024,
            ways: 4,
            line_bytes: 64,
        })
    }

    #[test]
    fn table_geometry() {
        let g = Geometry {
            size_bytes: 32 * 1024,
            ways: 4,
            line_bytes: 64,
        };
        assert_eq!(g.sets(), 128);
        let llc = Geometry {
            size_bytes: 256 * 1024,
            ways: 8,
            line_bytes: 64,
        };
        assert_eq!(llc.sets(), 512);
        assert!(Geometry {
            size_bytes: 1000,
            ways: 3,
            line_bytes: 64
        }
        .validate()
        .is_err());
    }

    #[test]
    fn fifth_line_in_a_set_evicts_lru() {
        let mut c = l1();
        let stride = 128;
        for i in 0..4 {
            assert!(c.insert(line(i * stride)).is_none());
        }
        c.touch(Addr(0));
        assert_eq!(c.victim_for(Addr(4 * stride)).map(|l| l.addr), Some(Addr(stride)));
        let evicted = c.insert(line(4 * stride)).unwrap();
        assert_eq!(evicted.addr, Addr(stride));
        assert!(c.get(Addr(0)).is_some());
        assert_eq!(c.len(), 4);
    }

    #[test]
    fn reinsert_replaces_in_place() {
        let mut c = l1();
        c.insert(line(3));
        let mut l = line(3);
        l.rts = Timestamp(9);
        assert!(c.insert(l).is_none());
        assert_eq!(c.len(), 1);
        assert_eq!(c.get(Addr(3)).unwrap().rts, Timestamp(9));
        assert!(c.remove(Addr(3)).is_some());
        assert!(c.is_empty());
    }

    #[test]
    fn line_invariants() {
        let mut l = line(1);
        assert!(l.check_invariants().is_ok());
        l.wts = Timestamp(4);
        assert!(l.check_invariants().is_err());
        l.wts = Timestamp(0);
        l.dirty = true;
        assert!(l.check_invariants().is_err());
    }

    #[test]
    fn memory_defaults_to_initial() {
        let mut m = MainMemory::default();
        assert_eq!(m.read(Addr(7)), MemEntry::default());
        let e = MemEntry {
            value: ValueToken::store(1, 3, 5),
            wts: Timestamp(12),
            rts: Timestamp(12),
            lease: Some(LeaseCode::MAX),
        };
        m.write(Addr(7), e);
        assert_eq!(m.read(Addr(7)), e);
    }
}
