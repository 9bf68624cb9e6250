//! 2-D mesh latency model and per-class flit accounting.
//!
//! There is no link contention: a message costs `hops * hop_latency` cycles
//! and `flits * hops` flit-hops, and lands in exactly one traffic class.

use serde::{Deserialize, Serialize};

use crate::cachemem::{Addr, CoreId};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TrafficClass {
    /// Shared/exclusive/writeback requests and responses.
    Common,
    /// Renew and check requests and responses.
    Renew,
    /// Invalidations, their acks, and shared-eviction notifications.
    Invalidation,
    /// LLC <-> memory fills and writebacks.
    Dram,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum MsgKind {
    LoadReq,
    StoreReq,
    RenewReq,
    CheckReq,
    /// LLC asks the owner to write back (downgrade or ownership recall).
    WritebackReq,
    LoadResp,
    ExclResp,
    RenewResp,
    CheckResp,
    /// Owner's answer to a `WritebackReq`.
    WbResp,
    /// Voluntary writeback of an evicted M/E line.
    Writeback,
    Ack,
    Invalidate,
    InvAck,
    EvictNotify,
    DramReq,
    DramData,
    DramWriteback,
}

impl MsgKind {
    pub fn class(self) -> TrafficClass {
        use MsgKind::*;
        match self {
            RenewReq | RenewResp | CheckReq | CheckResp => TrafficClass::Renew,
            Invalidate | InvAck | EvictNotify => TrafficClass::Invalidation,
            DramReq | DramData | DramWriteback => TrafficClass::Dram,
            LoadReq | StoreReq | WritebackReq | LoadResp | ExclResp | WbResp | Writeback | Ack => {
                TrafficClass::Common
            }
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClassCounters {
    pub messages: u64,
    pub flits: u64,
    pub flit_hops: u64,
}

impl ClassCounters {
    fn add(&mut self, flits: u64, hops: u64) {
        self.messages += 1;
        self.flits += flits;
        self.flit_hops += flits * hops;
    }
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct TrafficLedger {
    pub common: ClassCounters,
    pub renew: ClassCounters,
    pub invalidation: ClassCounters,
    pub dram: ClassCounters,
}

impl TrafficLedger {
    pub fn class(&self, class: TrafficClass) -> &ClassCounters {
        match class {
            TrafficClass::Common => &self.common,
            TrafficClass::Renew => &self.renew,
            TrafficClass::Invalidation => &self.invalidation,
            TrafficClass::Dram => &self.dram,
        }
    }

    fn class_mut(&mut self, class: TrafficClass) -> &mut ClassCounters {
        match class {
            TrafficClass::Common => &mut self.common,
            TrafficClass::Renew => &mut self.renew,
            TrafficClass::Invalidation => &mut self.invalidation,
            TrafficClass::Dram => &mut self.dram,
        }
    }

    pub fn record(&mut self, kind: MsgKind, flits: u64, hops: u64) {
        self.class_mut(kind.class()).add(flits, hops);
    }

    pub fn total(&self) -> ClassCounters {
        let mut t = ClassCounters::default();
        for c in [&self.common, &self.renew, &self.invalidation, &self.dram] {
            t.messages += c.messages;
            t.flits += c.flits;
            t.flit_hops += c.flit_hops;
        }
        t
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct NetworkParams {
    pub hop_latency: u64,
    pub flit_bits: u64,
    pub line_bytes: u64,
}

impl Default for NetworkParams {
    fn default() -> Self {
        NetworkParams {
            hop_latency: 2,
            flit_bits: 128,
            line_bytes: 64,
        }
    }
}

impl NetworkParams {
    pub fn control_flits(&self) -> u64 {
        1
    }

    /// One header flit plus the line payload.
    pub fn data_flits(&self) -> u64 {
        1 + (self.line_bytes * 8).div_ceil(self.flit_bits)
    }

    pub fn flits(&self, has_data: bool) -> u64 {
        if has_data {
            self.data_flits()
        } else {
            self.control_flits()
        }
    }
}

/// Square-ish mesh, one tile per core, LLC slice homes hashed by address and
/// the memory controller on tile 0.
#[derive(Clone, Copy, Debug)]
pub struct Mesh {
    cores: usize,
    width: usize,
}

impl Mesh {
    pub fn new(cores: usize) -> Self {
        let cores = cores.max(1);
        let mut width = 1;
        while width * width < cores {
            width += 1;
        }
        Mesh { cores, width }
    }

    fn coords(&self, tile: usize) -> (usize, usize) {
        (tile % self.width, tile / self.width)
    }

    pub fn home_of(&self, addr: Addr) -> usize {
        (addr.0 % self.cores as u64) as usize
    }

    pub fn memory_controller(&self) -> usize {
        0
    }

    /// XY-routing hop count between two tiles.
    pub fn hops(&self, a: usize, b: usize) -> u64 {
        let (ax, ay) = self.coords(a);
        let (bx, by) = self.coords(b);
        (ax.abs_diff(bx) + ay.abs_diff(by)) as u64
    }

    pub fn core_to_home(&self, core: CoreId, addr: Addr) -> u64 {
        self.hops(core, self.home_of(addr))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn message_sizes() {
        let p = NetworkParams::default();
        assert_eq!(p.control_flits(), 1);
        assert_eq!(p.data_flits(), 5);
    }

    #[test]
    fn every_kind_has_one_class() {
        let mut ledger = TrafficLedger::default();
        ledger.record(MsgKind::RenewReq, 1, 3);
        ledger.record(MsgKind::CheckResp, 5, 3);
        ledger.record(MsgKind::InvAck, 1, 0);
        ledger.record(MsgKind::DramData, 5, 2);
        ledger.record(MsgKind::LoadResp, 5, 1);
        assert_eq!(ledger.renew.messages, 2);
        assert_eq!(ledger.renew.flit_hops, 18);
        assert_eq!(ledger.invalidation.flits, 1);
        assert_eq!(ledger.dram.flit_hops, 10);
        assert_eq!(ledger.common.flits, 5);
        assert_eq!(ledger.total().messages, 5);
        assert_eq!(ledger.total().flits, 17);
    }

    #[test]
    fn mesh_distances() {
        let m = Mesh::new(16);
        assert_eq!(m.hops(0, 15), 6);
        assert_eq!(m.hops(5, 5), 0);
        assert_eq!(m.home_of(Addr(21)), 5);
        let m = Mesh::new(5);
        assert_eq!(m.hops(0, 4), 2);
        assert_eq!(Mesh::new(1).hops(0, 0), 0);
    }
}
