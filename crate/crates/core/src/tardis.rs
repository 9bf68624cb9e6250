//! Timestamp-ordered coherence: leased shared copies, renewals, checks and
//! exclusive ownership granted without invalidating sharers.
//!
//! Every request is handled atomically at the home: the L1 miss, LLC work,
//! any owner recall and the response all happen inside one engine step.

use serde::{Deserialize, Serialize};

use crate::cachemem::{
    Addr, CacheLine, CoreId, Geometry, L1State, LlcLine, LlcState, MainMemory, MemEntry, SetAssoc,
    ValueToken,
};
use crate::chrono::Timestamp;
use crate::consistency::CoreClock;
use crate::engine::fabric::{EventKind, Fabric};
use crate::engine::network::{MsgKind, NetworkParams};
use crate::leasepred::{predict, LeaseCode, LlcRequest};
use crate::livelock::DetectorState;

/// A protocol message. Only its shape matters to the simulator: whether it
/// carries a line decides its flit cost.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CoherenceMsg {
    pub kind: MsgKind,
    pub addr: Addr,
    pub req_ts: Option<Timestamp>,
    pub wts: Option<Timestamp>,
    pub rts: Option<Timestamp>,
    pub value: Option<ValueToken>,
    pub req_lease: Option<LeaseCode>,
}

impl CoherenceMsg {
    pub fn control(kind: MsgKind, addr: Addr) -> Self {
        CoherenceMsg {
            kind,
            addr,
            req_ts: None,
            wts: None,
            rts: None,
            value: None,
            req_lease: None,
        }
    }

    pub fn data(kind: MsgKind, addr: Addr, wts: Timestamp, rts: Timestamp, value: ValueToken) -> Self {
        CoherenceMsg {
            wts: Some(wts),
            rts: Some(rts),
            value: Some(value),
            ..CoherenceMsg::control(kind, addr)
        }
    }

    pub fn has_data(&self) -> bool {
        self.value.is_some()
    }

    pub fn flit_cost(&self, net: &NetworkParams) -> u64 {
        net.flits(self.has_data())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TardisParams {
    pub mesi: bool,
    /// Lease used when the predictor is off.
    pub static_lease: u64,
    pub lease_predictor: bool,
}

impl Default for TardisParams {
    fn default() -> Self {
        TardisParams {
            mesi: true,
            static_lease: 8,
            lease_predictor: false,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum L1Load {
    Hit(Timestamp),
    NeedsRenew,
    NeedsFetch,
}

/// L1 side of a load. On a hit the load commits against `clock`; exclusive
/// lines have their rts raised in place to the core's read timestamp.
pub fn l1_load(line: Option<&mut CacheLine>, clock: &mut CoreClock) -> L1Load {
    let Some(line) = line else {
        return L1Load::NeedsFetch;
    };
    let read_ts = clock.read_ts();
    match line.state {
        L1State::M | L1State::E => {
            if line.rts < read_ts {
                line.rts = read_ts;
            }
            let ts = clock.commit_load(line.wts, line.rts, line.dirty);
            if line.rts < ts {
                line.rts = ts;
            }
            L1Load::Hit(ts)
        }
        L1State::S if read_ts <= line.rts => L1Load::Hit(clock.commit_load(line.wts, line.rts, false)),
        L1State::S => L1Load::NeedsRenew,
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct LoadOutcome {
    pub value: ValueToken,
    pub ts: Timestamp,
    pub latency: u64,
    /// (wts, rts) of the shared copy the load read from, if it read one.
    pub snapshot: Option<(Timestamp, Timestamp)>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct StoreOutcome {
    pub ts: Timestamp,
    pub latency: u64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct RenewReply {
    pub success: bool,
    pub wts: Timestamp,
    pub rts: Timestamp,
    pub value: ValueToken,
    pub lease: LeaseCode,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum MasterLoc {
    L1(CoreId),
    Llc,
    Memory,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct MasterView {
    pub loc: MasterLoc,
    pub wts: Timestamp,
    pub rts: Timestamp,
    pub value: ValueToken,
}

#[derive(Clone, Debug)]
pub struct TardisSystem {
    pub params: TardisParams,
    l1: Vec<SetAssoc<CacheLine>>,
    llc: SetAssoc<LlcLine>,
    mem: MainMemory,
}

impl TardisSystem {
    pub fn new(cores: usize, l1: Geometry, llc: Geometry, params: TardisParams) -> Self {
        TardisSystem {
            params,
            l1: (0..cores).map(|_| SetAssoc::new(l1)).collect(),
            llc: SetAssoc::new(llc),
            mem: MainMemory::default(),
        }
    }

    pub fn l1_line(&self, core: CoreId, addr: Addr) -> Option<&CacheLine> {
        self.l1[core].get(addr)
    }

    pub fn llc_line(&self, addr: Addr) -> Option<&LlcLine> {
        self.llc.get(addr)
    }

    pub fn memory(&self) -> &MainMemory {
        &self.mem
    }

    /// Seed a line before the run: shared in the LLC with the given
    /// timestamps and shared copies in `cached`.
    pub fn preload(&mut self, addr: Addr, value: ValueToken, wts: Timestamp, rts: Timestamp, cached: &[CoreId]) {
        self.mem.write(
            addr,
            MemEntry {
                value,
                wts,
                rts,
                lease: None,
            },
        );
        let evicted = self.llc.insert(LlcLine {
            addr,
            state: LlcState::Shared,
            wts,
            rts,
            value,
            e_bit: false,
            cur_lease: LeaseCode::MIN,
        });
        assert!(evicted.is_none(), "preload overflowed an LLC set");
        for &c in cached {
            let evicted = self.l1[c].insert(CacheLine {
                addr,
                state: L1State::S,
                wts,
                rts,
                value,
                dirty: false,
                lease: LeaseCode::MIN,
            });
            assert!(evicted.is_none(), "preload overflowed an L1 set");
        }
    }

    fn grant_lease(&self, line: &mut LlcLine, req: LlcRequest, req_lease: LeaseCode) -> (u64, LeaseCode) {
        if self.params.lease_predictor {
            let code = predict(&mut line.cur_lease, req, req_lease);
            (code.value(), code)
        } else {
            (self.params.static_lease, LeaseCode::MIN)
        }
    }

    fn send(fab: &mut Fabric, msg: CoherenceMsg, core: CoreId) -> u64 {
        fab.core_home(msg.kind, msg.has_data(), core, msg.addr)
    }

    /// Full load, including any renew, check or fetch it needs.
    pub fn load(
        &mut self,
        fab: &mut Fabric,
        core: CoreId,
        addr: Addr,
        clock: &mut CoreClock,
        detector: Option<&mut DetectorState>,
    ) -> LoadOutcome {
        let read_ts = clock.read_ts();
        let mut latency = fab.lat.l1_hit;
        let peek = self.l1[core].get(addr).map(|l| (l.state, l.wts, l.rts, l.lease));
        match peek {
            Some((L1State::S, wts, rts, _)) if read_ts <= rts => {
                if let Some(det) = detector {
                    if det.on_shared_load(addr) {
                        let (updated, lat) = self.check(fab, core, addr, wts, read_ts);
                        det.on_check_response(updated);
                        latency = latency.max(lat);
                    }
                }
            }
            Some((L1State::S, wts, _, lease)) => {
                latency = latency.max(self.renew(fab, core, addr, wts, read_ts, lease));
            }
            Some(_) => {}
            None => latency = self.fetch(fab, core, addr, read_ts),
        }
        self.l1[core].touch(addr);
        let line = self.l1[core].get_mut(addr).expect("line present after fill");
        let ts = match l1_load(Some(line), clock) {
            L1Load::Hit(ts) => ts,
            other => unreachable!("load not servable after fill: {other:?}"),
        };
        let snapshot = (line.state == L1State::S).then_some((line.wts, line.rts));
        LoadOutcome {
            value: line.value,
            ts,
            latency,
            snapshot,
        }
    }

    /// Full store of `value`; the core's clock picks the commit timestamp.
    pub fn store(
        &mut self,
        fab: &mut Fabric,
        core: CoreId,
        addr: Addr,
        value: ValueToken,
        clock: &mut CoreClock,
    ) -> StoreOutcome {
        let peek = self.l1[core].get(addr).map(|l| (l.state, l.wts, l.rts));
        let (floor, latency) = match peek {
            // Private write: the version was never visible to another core.
            Some((L1State::M, wts, _)) => (wts, fab.lat.l1_hit),
            Some((L1State::E, _, rts)) => (rts.plus(1), fab.lat.l1_hit),
            _ => self.llc_store(fab, core, addr),
        };
        let ts = clock.commit_store(floor);
        let line = CacheLine {
            addr,
            state: L1State::M,
            wts: ts,
            rts: ts,
            value,
            dirty: true,
            lease: LeaseCode::MIN,
        };
        if let Some(old) = self.l1[core].get_mut(addr) {
            if old.state == L1State::M {
                debug_assert!(ts >= old.rts, "private write below own read lease");
            }
            let lease = old.lease;
            *old = CacheLine { lease, ..line };
            self.l1[core].touch(addr);
        } else {
            self.install_l1(fab, core, line);
        }
        fab.touch(addr);
        StoreOutcome { ts, latency }
    }

    fn install_l1(&mut self, fab: &mut Fabric, core: CoreId, line: CacheLine) {
        let Some(victim) = self.l1[core].insert(line) else {
            return;
        };
        if !victim.state.is_exclusive() {
            // Shared copies leave silently.
            return;
        }
        let msg = if victim.dirty {
            CoherenceMsg::data(MsgKind::Writeback, victim.addr, victim.wts, victim.rts, victim.value)
        } else {
            CoherenceMsg::control(MsgKind::Writeback, victim.addr)
        };
        Self::send(fab, msg, core);
        let mesi = self.params.mesi;
        let l = self
            .llc
            .get_mut(victim.addr)
            .expect("inclusive LLC holds every owned line");
        debug_assert_eq!(l.state, LlcState::Owned(core));
        l.state = LlcState::Shared;
        l.wts = victim.wts;
        l.rts = l.rts.max(victim.rts);
        l.value = victim.value;
        l.e_bit = mesi;
        fab.log(victim.addr, EventKind::L1Writeback);
        fab.touch(victim.addr);
    }

    /// Bring `addr` into the LLC; returns the extra latency.
    fn ensure_llc(&mut self, fab: &mut Fabric, addr: Addr) -> u64 {
        if self.llc.get(addr).is_some() {
            self.llc.touch(addr);
            return 0;
        }
        if let Some(victim) = self.llc.victim_for(addr).map(|l| l.addr) {
            if let Some(LlcState::Owned(o)) = self.llc.get(victim).map(|l| l.state) {
                self.recall(fab, victim, o, false);
            }
            let v = self.llc.remove(victim).expect("victim present");
            fab.home_dram(MsgKind::DramWriteback, true, victim);
            self.mem.write(
                victim,
                MemEntry {
                    value: v.value,
                    wts: v.wts,
                    rts: v.rts,
                    lease: Some(v.cur_lease),
                },
            );
            fab.log(victim, EventKind::DramEvict);
            fab.touch(victim);
        }
        let e = self.mem.read(addr);
        let lat = fab.home_dram(MsgKind::DramReq, false, addr) + fab.home_dram(MsgKind::DramData, true, addr);
        self.llc.insert(LlcLine {
            addr,
            state: LlcState::Shared,
            wts: e.wts,
            rts: e.rts,
            value: e.value,
            e_bit: self.params.mesi,
            cur_lease: e.lease.unwrap_or(LeaseCode::MIN),
        });
        fab.counters.dram_fills += 1;
        fab.log(addr, EventKind::DramFill);
        lat + fab.lat.dram
    }

    /// Pull the master copy back from `owner`. With `downgrade` the owner
    /// keeps a shared snapshot, otherwise its copy is dropped.
    fn recall(&mut self, fab: &mut Fabric, addr: Addr, owner: CoreId, downgrade: bool) -> u64 {
        let line = if downgrade {
            let l = self.l1[owner].get_mut(addr).expect("owner holds the line");
            let snapshot = l.clone();
            l.state = L1State::S;
            l.dirty = false;
            snapshot
        } else {
            self.l1[owner].remove(addr).expect("owner holds the line")
        };
        debug_assert!(line.state.is_exclusive());
        let mut lat = Self::send(fab, CoherenceMsg::control(MsgKind::WritebackReq, addr), owner);
        let resp = if line.dirty {
            CoherenceMsg::data(MsgKind::WbResp, addr, line.wts, line.rts, line.value)
        } else {
            CoherenceMsg::control(MsgKind::WbResp, addr)
        };
        lat += Self::send(fab, resp, owner);
        let l = self.llc.get_mut(addr).expect("inclusive LLC");
        l.state = LlcState::Shared;
        l.wts = line.wts;
        l.rts = l.rts.max(line.rts);
        l.value = line.value;
        l.e_bit = false;
        if downgrade {
            fab.counters.downgrades += 1;
            fab.log(addr, EventKind::Downgrade);
        } else {
            fab.counters.ownership_transfers += 1;
            fab.log(addr, EventKind::OwnershipTransfer);
        }
        fab.touch(addr);
        lat
    }

    /// Recall-for-read if another core owns the line; returns (latency, owner).
    fn downgrade_owner(&mut self, fab: &mut Fabric, addr: Addr, requester: CoreId) -> (u64, Option<CoreId>) {
        match self.llc.get(addr).map(|l| l.state) {
            Some(LlcState::Owned(o)) => {
                debug_assert_ne!(o, requester);
                (self.recall(fab, addr, o, true), Some(o))
            }
            _ => (0, None),
        }
    }

    /// After a read extended the LLC lease, the downgraded owner's snapshot
    /// shares the new rts.
    fn sync_snapshot(&mut self, addr: Addr, owner: Option<CoreId>) {
        if let Some(o) = owner {
            let l = self.llc.get(addr).expect("LLC line");
            let (rts, wts) = (l.rts, l.wts);
            let s = self.l1[o].get_mut(addr).expect("owner snapshot");
            debug_assert_eq!(s.wts, wts);
            s.rts = s.rts.max(rts);
        }
    }

    /// LLC side of a shared read. Returns the line handed to the requester.
    pub fn llc_load(
        &mut self,
        fab: &mut Fabric,
        core: CoreId,
        addr: Addr,
        req_ts: Timestamp,
        allow_exclusive: bool,
    ) -> (CacheLine, u64) {
        let mut lat = self.ensure_llc(fab, addr);
        let (l2, owner) = self.downgrade_owner(fab, addr, core);
        lat += l2;
        let mesi = self.params.mesi;
        let mut line = self.llc.get(addr).cloned().expect("LLC line");
        let granted = if mesi && allow_exclusive && line.e_bit && owner.is_none() {
            line.e_bit = false;
            line.state = LlcState::Owned(core);
            fab.log(addr, EventKind::ExclusiveGrant);
            CacheLine {
                addr,
                state: L1State::E,
                wts: line.wts,
                rts: line.rts,
                value: line.value,
                dirty: false,
                lease: line.cur_lease,
            }
        } else {
            let (lease, code) = self.grant_lease(&mut line, LlcRequest::Read, LeaseCode::MIN);
            line.rts = line.rts.max(req_ts.plus(lease));
            CacheLine {
                addr,
                state: L1State::S,
                wts: line.wts,
                rts: line.rts,
                value: line.value,
                dirty: false,
                lease: code,
            }
        };
        *self.llc.get_mut(addr).unwrap() = line;
        self.sync_snapshot(addr, owner);
        fab.touch(addr);
        (granted, lat)
    }

    fn fetch(&mut self, fab: &mut Fabric, core: CoreId, addr: Addr, req_ts: Timestamp) -> u64 {
        fab.counters.llc_accesses += 1;
        fab.log(addr, EventKind::LoadMiss);
        let mut req = CoherenceMsg::control(MsgKind::LoadReq, addr);
        req.req_ts = Some(req_ts);
        let mut lat = Self::send(fab, req, core) + fab.lat.llc_access;
        let (line, l2) = self.llc_load(fab, core, addr, req_ts, true);
        lat += l2;
        let kind = if line.state == L1State::E {
            MsgKind::ExclResp
        } else {
            MsgKind::LoadResp
        };
        lat += Self::send(fab, CoherenceMsg::data(kind, addr, line.wts, line.rts, line.value), core);
        self.install_l1(fab, core, line);
        lat
    }

    /// LLC side of a renewal.
    pub fn llc_renew(
        &mut self,
        fab: &mut Fabric,
        core: CoreId,
        addr: Addr,
        req_wts: Timestamp,
        req_ts: Timestamp,
        req_lease: LeaseCode,
    ) -> (RenewReply, u64) {
        let mut lat = self.ensure_llc(fab, addr);
        let (l2, owner) = self.downgrade_owner(fab, addr, core);
        lat += l2;
        let mut line = self.llc.get(addr).cloned().expect("LLC line");
        let success = line.wts == req_wts;
        let req = if success { LlcRequest::Renew } else { LlcRequest::Read };
        let (lease, code) = self.grant_lease(&mut line, req, req_lease);
        line.rts = line.rts.max(req_ts.plus(lease));
        let reply = RenewReply {
            success,
            wts: line.wts,
            rts: line.rts,
            value: line.value,
            lease: code,
        };
        *self.llc.get_mut(addr).unwrap() = line;
        self.sync_snapshot(addr, owner);
        fab.touch(addr);
        (reply, lat)
    }

    fn renew(
        &mut self,
        fab: &mut Fabric,
        core: CoreId,
        addr: Addr,
        wts: Timestamp,
        req_ts: Timestamp,
        lease: LeaseCode,
    ) -> u64 {
        fab.counters.llc_accesses += 1;
        fab.counters.renew_requests += 1;
        let mut req = CoherenceMsg::control(MsgKind::RenewReq, addr);
        req.wts = Some(wts);
        req.req_ts = Some(req_ts);
        req.req_lease = Some(lease);
        let mut lat = Self::send(fab, req, core) + fab.lat.llc_access;
        let (reply, l2) = self.llc_renew(fab, core, addr, wts, req_ts, lease);
        lat += l2;
        let line = self.l1[core].get_mut(addr).expect("renewing a cached line");
        if reply.success {
            fab.counters.renew_success += 1;
            fab.log(addr, EventKind::RenewSuccess);
            line.rts = reply.rts;
            line.lease = reply.lease;
            Self::send(fab, CoherenceMsg::control(MsgKind::RenewResp, addr), core);
            // The core kept running on the cached value.
            fab.lat.l1_hit
        } else {
            fab.counters.renew_failed += 1;
            fab.log(addr, EventKind::RenewFail);
            *line = CacheLine {
                addr,
                state: L1State::S,
                wts: reply.wts,
                rts: reply.rts,
                value: reply.value,
                dirty: false,
                lease: reply.lease,
            };
            lat += Self::send(
                fab,
                CoherenceMsg::data(MsgKind::RenewResp, addr, reply.wts, reply.rts, reply.value),
                core,
            );
            lat
        }
    }

    /// LLC side of a freshness check. An unchanged line is reported without
    /// touching its lease; a changed one is handed out like a read.
    pub fn llc_check(
        &mut self,
        fab: &mut Fabric,
        core: CoreId,
        addr: Addr,
        req_wts: Timestamp,
        req_ts: Timestamp,
    ) -> (Option<CacheLine>, u64) {
        let mut lat = self.ensure_llc(fab, addr);
        let master_wts = match self.llc.get(addr).map(|l| l.state) {
            Some(LlcState::Owned(o)) => self.l1[o].get(addr).expect("owner line").wts,
            _ => self.llc.get(addr).expect("LLC line").wts,
        };
        if master_wts == req_wts {
            return (None, lat);
        }
        let (line, l2) = self.llc_load(fab, core, addr, req_ts, false);
        lat += l2;
        (Some(line), lat)
    }

    fn check(&mut self, fab: &mut Fabric, core: CoreId, addr: Addr, wts: Timestamp, req_ts: Timestamp) -> (bool, u64) {
        fab.counters.llc_accesses += 1;
        fab.counters.checks += 1;
        let mut req = CoherenceMsg::control(MsgKind::CheckReq, addr);
        req.wts = Some(wts);
        let mut lat = Self::send(fab, req, core) + fab.lat.llc_access;
        let (line, l2) = self.llc_check(fab, core, addr, wts, req_ts);
        lat += l2;
        match line {
            None => {
                fab.log(addr, EventKind::CheckSame);
                Self::send(fab, CoherenceMsg::control(MsgKind::CheckResp, addr), core);
                (false, fab.lat.l1_hit)
            }
            Some(line) => {
                fab.counters.checks_updated += 1;
                fab.log(addr, EventKind::CheckUpdated);
                lat += Self::send(
                    fab,
                    CoherenceMsg::data(MsgKind::CheckResp, addr, line.wts, line.rts, line.value),
                    core,
                );
                *self.l1[core].get_mut(addr).expect("checked line") = line;
                (true, lat)
            }
        }
    }

    /// LLC side of a store from a core without an exclusive copy. Returns
    /// the timestamp floor and latency; ownership moves to `core`.
    pub fn llc_store(&mut self, fab: &mut Fabric, core: CoreId, addr: Addr) -> (Timestamp, u64) {
        fab.counters.llc_accesses += 1;
        fab.log(addr, EventKind::StoreMiss);
        let upgrade = self.l1[core].get(addr).map(|l| l.wts);
        let mut lat = Self::send(fab, CoherenceMsg::control(MsgKind::StoreReq, addr), core) + fab.lat.llc_access;
        lat += self.ensure_llc(fab, addr);
        if let Some(LlcState::Owned(o)) = self.llc.get(addr).map(|l| l.state) {
            debug_assert_ne!(o, core);
            lat += self.recall(fab, addr, o, false);
        }
        let mut line = self.llc.get(addr).cloned().expect("LLC line");
        self.grant_lease(&mut line, LlcRequest::Write, LeaseCode::MIN);
        let floor = line.rts.plus(1);
        let resp = if upgrade == Some(line.wts) {
            CoherenceMsg::control(MsgKind::ExclResp, addr)
        } else {
            CoherenceMsg::data(MsgKind::ExclResp, addr, line.wts, line.rts, line.value)
        };
        line.state = LlcState::Owned(core);
        line.e_bit = false;
        *self.llc.get_mut(addr).unwrap() = line;
        lat += Self::send(fab, resp, core);
        fab.touch(addr);
        (floor, lat)
    }

    /// The unique master copy of `addr`, or a description of why there is
    /// not exactly one.
    pub fn master(&self, addr: Addr) -> Result<MasterView, String> {
        let holders: Vec<CoreId> = (0..self.l1.len())
            .filter(|&c| self.l1[c].get(addr).is_some_and(|l| l.state.is_exclusive()))
            .collect();
        match self.llc.get(addr) {
            Some(l) => match l.state {
                LlcState::Owned(o) => {
                    if holders != [o] {
                        return Err(format!("{addr}: LLC owner {o} but exclusive holders {holders:?}"));
                    }
                    let m = self.l1[o].get(addr).unwrap();
                    Ok(MasterView {
                        loc: MasterLoc::L1(o),
                        wts: m.wts,
                        rts: m.rts,
                        value: m.value,
                    })
                }
                LlcState::Shared => {
                    if !holders.is_empty() {
                        return Err(format!("{addr}: shared in LLC but exclusive holders {holders:?}"));
                    }
                    Ok(MasterView {
                        loc: MasterLoc::Llc,
                        wts: l.wts,
                        rts: l.rts,
                        value: l.value,
                    })
                }
            },
            None => {
                if !holders.is_empty() {
                    return Err(format!("{addr}: not in LLC but exclusive holders {holders:?}"));
                }
                let e = self.mem.read(addr);
                Ok(MasterView {
                    loc: MasterLoc::Memory,
                    wts: e.wts,
                    rts: e.rts,
                    value: e.value,
                })
            }
        }
    }

    /// Shared L1 copies of `addr`.
    pub fn snapshots(&self, addr: Addr) -> Vec<(CoreId, &CacheLine)> {
        (0..self.l1.len())
            .filter_map(|c| self.l1[c].get(addr).filter(|l| l.state == L1State::S).map(|l| (c, l)))
            .collect()
    }

    pub fn check_lines(&self, addr: Addr) -> Result<(), String> {
        for c in &self.l1 {
            if let Some(l) = c.get(addr) {
                l.check_invariants()?;
            }
        }
        if let Some(l) = self.llc.get(addr) {
            if l.wts > l.rts {
                return Err(format!("{addr}: LLC wts {} > rts {}", l.wts, l.rts));
            }
        }
        Ok(())
    }
}
