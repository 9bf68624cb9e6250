//! Per-run message fabric: traffic ledger, latency accumulation, protocol
//! counters and the optional protocol event log.

use serde::{Deserialize, Serialize};

use super::network::{Mesh, MsgKind, NetworkParams, TrafficLedger};
use crate::cachemem::{Addr, CoreId};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EventKind {
    LoadMiss,
    StoreMiss,
    ExclusiveGrant,
    RenewSuccess,
    RenewFail,
    CheckSame,
    CheckUpdated,
    /// Owner downgraded to shared for a read.
    Downgrade,
    /// Owner gave up the line for another core's write.
    OwnershipTransfer,
    Invalidate,
    EvictNotify,
    L1Writeback,
    DramFill,
    DramEvict,
}

/// One protocol-level event, attributed to the core/program index whose
/// operation triggered it.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ProtocolEvent {
    pub step: u64,
    pub core: CoreId,
    pub pc: usize,
    pub addr: Addr,
    pub kind: EventKind,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ProtocolCounters {
    pub llc_accesses: u64,
    pub renew_requests: u64,
    pub renew_success: u64,
    pub renew_failed: u64,
    pub checks: u64,
    pub checks_updated: u64,
    pub ownership_transfers: u64,
    pub downgrades: u64,
    pub invalidations: u64,
    pub dram_fills: u64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct LatencyParams {
    pub l1_hit: u64,
    pub llc_access: u64,
    pub dram: u64,
}

impl Default for LatencyParams {
    fn default() -> Self {
        LatencyParams {
            l1_hit: 1,
            llc_access: 8,
            dram: 100,
        }
    }
}

#[derive(Clone, Debug)]
pub struct Fabric {
    pub mesh: Mesh,
    pub net: NetworkParams,
    pub lat: LatencyParams,
    pub ledger: TrafficLedger,
    pub counters: ProtocolCounters,
    events: Option<Vec<ProtocolEvent>>,
    /// Attribution for events raised during the current atomic step.
    pub step: u64,
    pub cur_core: CoreId,
    pub cur_pc: usize,
    /// Addresses whose coherence state changed during the current step.
    pub touched: Vec<Addr>,
}

impl Fabric {
    pub fn new(cores: usize, net: NetworkParams, lat: LatencyParams, record_events: bool) -> Self {
        Fabric {
            mesh: Mesh::new(cores),
            net,
            lat,
            ledger: TrafficLedger::default(),
            counters: ProtocolCounters::default(),
            events: record_events.then(Vec::new),
            step: 0,
            cur_core: 0,
            cur_pc: 0,
            touched: Vec::new(),
        }
    }

    fn send_tiles(&mut self, kind: MsgKind, has_data: bool, from: usize, to: usize) -> u64 {
        let hops = self.mesh.hops(from, to);
        self.ledger.record(kind, self.net.flits(has_data), hops);
        hops * self.net.hop_latency
    }

    /// Message between `core` and the home slice of `addr`; returns its latency.
    pub fn core_home(&mut self, kind: MsgKind, has_data: bool, core: CoreId, addr: Addr) -> u64 {
        let home = self.mesh.home_of(addr);
        self.send_tiles(kind, has_data, core, home)
    }

    /// Message between the memory controller and the home slice of `addr`.
    pub fn home_dram(&mut self, kind: MsgKind, has_data: bool, addr: Addr) -> u64 {
        let home = self.mesh.home_of(addr);
        let mc = self.mesh.memory_controller();
        self.send_tiles(kind, has_data, home, mc)
    }

    pub fn log(&mut self, addr: Addr, kind: EventKind) {
        if let Some(ev) = self.events.as_mut() {
            ev.push(ProtocolEvent {
                step: self.step,
                core: self.cur_core,
                pc: self.cur_pc,
                addr,
                kind,
            });
        }
    }

    pub fn touch(&mut self, addr: Addr) {
        if !self.touched.contains(&addr) {
            self.touched.push(addr);
        }
    }

    pub fn events(&self) -> &[ProtocolEvent] {
        self.events.as_deref().unwrap_or(&[])
    }

    pub fn take_events(&mut self) -> Vec<ProtocolEvent> {
        self.events.take().unwrap_or_default()
    }
}
