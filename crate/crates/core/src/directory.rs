//! Full-map MESI directory baseline with a blocking home.
//!
//! Operations carry no logical timestamps; the engine stamps them with
//! ts = 0 so memory order is plain commit order.

use serde::{Deserialize, Serialize};

use crate::cachemem::{
    Addr, CacheLine, CoreId, Geometry, L1State, MainMemory, MemEntry, SetAssoc, Tagged, ValueToken,
};
use crate::chrono::Timestamp;
use crate::engine::fabric::{EventKind, Fabric};
use crate::engine::network::MsgKind;
use crate::leasepred::LeaseCode;

/// Sharer set as a bit mask, so at most 64 cores.
pub type SharerSet = u64;

pub const MAX_CORES: usize = 64;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum DirState {
    Uncached,
    Shared(SharerSet),
    Exclusive(CoreId),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct DirEntry {
    pub addr: Addr,
    pub state: DirState,
    pub value: ValueToken,
}

impl Tagged for DirEntry {
    fn tag(&self) -> Addr {
        self.addr
    }
}

fn sharers(set: SharerSet) -> impl Iterator<Item = CoreId> {
    (0..MAX_CORES).filter(move |c| set & (1 << c) != 0)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct DirAccess {
    pub value: ValueToken,
    pub latency: u64,
}

#[derive(Clone, Debug)]
pub struct DirectorySystem {
    mesi: bool,
    l1: Vec<SetAssoc<CacheLine>>,
    dir: SetAssoc<DirEntry>,
    mem: MainMemory,
}

impl DirectorySystem {
    pub fn new(cores: usize, l1: Geometry, llc: Geometry, mesi: bool) -> Self {
        assert!(cores <= MAX_CORES, "directory sharer mask holds at most 64 cores");
        DirectorySystem {
            mesi,
            l1: (0..cores).map(|_| SetAssoc::new(l1)).collect(),
            dir: SetAssoc::new(llc),
            mem: MainMemory::default(),
        }
    }

    pub fn entry(&self, addr: Addr) -> Option<&DirEntry> {
        self.dir.get(addr)
    }

    pub fn l1_line(&self, core: CoreId, addr: Addr) -> Option<&CacheLine> {
        self.l1[core].get(addr)
    }

    fn send(fab: &mut Fabric, kind: MsgKind, data: bool, core: CoreId, addr: Addr) -> u64 {
        fab.core_home(kind, data, core, addr)
    }

    fn line(addr: Addr, state: L1State, value: ValueToken) -> CacheLine {
        CacheLine {
            addr,
            state,
            wts: Timestamp::ZERO,
            rts: Timestamp::ZERO,
            value,
            dirty: state == L1State::M,
            lease: LeaseCode::MIN,
        }
    }

    /// Seed a line: cached shared by `cached`, or uncached if empty.
    pub fn preload(&mut self, addr: Addr, value: ValueToken, cached: &[CoreId]) {
        self.mem.write(
            addr,
            MemEntry {
                value,
                ..MemEntry::default()
            },
        );
        let mut set = 0;
        for &c in cached {
            set |= 1 << c;
            let ev = self.l1[c].insert(Self::line(addr, L1State::S, value));
            assert!(ev.is_none(), "preload overflowed an L1 set");
        }
        let state = if set == 0 {
            DirState::Uncached
        } else {
            DirState::Shared(set)
        };
        let ev = self.dir.insert(DirEntry { addr, state, value });
        assert!(ev.is_none(), "preload overflowed an LLC set");
    }

    fn ensure_entry(&mut self, fab: &mut Fabric, addr: Addr) -> u64 {
        if self.dir.get(addr).is_some() {
            self.dir.touch(addr);
            return 0;
        }
        if let Some(victim) = self.dir.victim_for(addr).map(|e| e.addr) {
            // Inclusive: every L1 copy goes before the entry does.
            self.invalidate_all(fab, victim, None);
            let e = self.dir.remove(victim).expect("victim");
            fab.home_dram(MsgKind::DramWriteback, true, victim);
            self.mem.write(
                victim,
                MemEntry {
                    value: e.value,
                    ..MemEntry::default()
                },
            );
            fab.log(victim, EventKind::DramEvict);
        }
        let value = self.mem.read(addr).value;
        let lat = fab.home_dram(MsgKind::DramReq, false, addr) + fab.home_dram(MsgKind::DramData, true, addr);
        self.dir.insert(DirEntry {
            addr,
            state: DirState::Uncached,
            value,
        });
        fab.counters.dram_fills += 1;
        fab.log(addr, EventKind::DramFill);
        lat + fab.lat.dram
    }

    /// Remove every copy other than `keep`'s. Sharers are invalidated in
    /// parallel; an owner is recalled. Returns the latency.
    fn invalidate_all(&mut self, fab: &mut Fabric, addr: Addr, keep: Option<CoreId>) -> u64 {
        let entry = *self.dir.get(addr).expect("directory entry");
        let mut lat = 0;
        match entry.state {
            DirState::Uncached => {}
            DirState::Shared(set) => {
                for c in sharers(set).filter(|&c| Some(c) != keep) {
                    let rt = Self::send(fab, MsgKind::Invalidate, false, c, addr)
                        + Self::send(fab, MsgKind::InvAck, false, c, addr);
                    lat = lat.max(rt);
                    self.l1[c].remove(addr);
                    fab.counters.invalidations += 1;
                    fab.log(addr, EventKind::Invalidate);
                }
            }
            DirState::Exclusive(o) if Some(o) != keep => {
                let line = self.l1[o].remove(addr).expect("owner line");
                lat += Self::send(fab, MsgKind::WritebackReq, false, o, addr);
                lat += Self::send(fab, MsgKind::WbResp, line.dirty, o, addr);
                self.dir.get_mut(addr).unwrap().value = line.value;
                fab.counters.ownership_transfers += 1;
                fab.log(addr, EventKind::OwnershipTransfer);
            }
            DirState::Exclusive(_) => {}
        }
        let e = self.dir.get_mut(addr).unwrap();
        e.state = match keep {
            Some(k) if self.l1[k].get(addr).is_some() => DirState::Shared(1 << k),
            _ => DirState::Uncached,
        };
        fab.touch(addr);
        lat
    }

    fn install(&mut self, fab: &mut Fabric, core: CoreId, line: CacheLine) {
        let Some(victim) = self.l1[core].insert(line) else {
            return;
        };
        let addr = victim.addr;
        let e = self.dir.get_mut(addr).expect("inclusive directory");
        match victim.state {
            L1State::S => {
                if let DirState::Shared(set) = e.state {
                    let rest = set & !(1 << core);
                    e.state = if rest == 0 {
                        DirState::Uncached
                    } else {
                        DirState::Shared(rest)
                    };
                }
                Self::send(fab, MsgKind::EvictNotify, false, core, addr);
                fab.log(addr, EventKind::EvictNotify);
            }
            L1State::M | L1State::E => {
                e.state = DirState::Uncached;
                e.value = victim.value;
                Self::send(fab, MsgKind::Writeback, victim.dirty, core, addr);
                fab.log(addr, EventKind::L1Writeback);
            }
        }
        fab.touch(addr);
    }

    pub fn load(&mut self, fab: &mut Fabric, core: CoreId, addr: Addr) -> DirAccess {
        if let Some(l) = self.l1[core].get(addr) {
            let value = l.value;
            self.l1[core].touch(addr);
            return DirAccess {
                value,
                latency: fab.lat.l1_hit,
            };
        }
        self.dir_load(fab, core, addr)
    }

    /// Home side of a read miss.
    pub fn dir_load(&mut self, fab: &mut Fabric, core: CoreId, addr: Addr) -> DirAccess {
        fab.counters.llc_accesses += 1;
        fab.log(addr, EventKind::LoadMiss);
        let mut lat = Self::send(fab, MsgKind::LoadReq, false, core, addr) + fab.lat.llc_access;
        lat += self.ensure_entry(fab, addr);
        let entry = *self.dir.get(addr).unwrap();
        let (state, new_dir) = match entry.state {
            DirState::Uncached if self.mesi => {
                fab.log(addr, EventKind::ExclusiveGrant);
                (L1State::E, DirState::Exclusive(core))
            }
            DirState::Uncached => (L1State::S, DirState::Shared(1 << core)),
            DirState::Shared(set) => (L1State::S, DirState::Shared(set | (1 << core))),
            DirState::Exclusive(o) => {
                let l = self.l1[o].get_mut(addr).expect("owner line");
                let (value, dirty) = (l.value, l.dirty);
                l.state = L1State::S;
                l.dirty = false;
                lat += Self::send(fab, MsgKind::WritebackReq, false, o, addr);
                lat += Self::send(fab, MsgKind::WbResp, dirty, o, addr);
                self.dir.get_mut(addr).unwrap().value = value;
                fab.counters.downgrades += 1;
                fab.log(addr, EventKind::Downgrade);
                (L1State::S, DirState::Shared((1 << o) | (1 << core)))
            }
        };
        let e = self.dir.get_mut(addr).unwrap();
        e.state = new_dir;
        let value = e.value;
        let kind = if state == L1State::E {
            MsgKind::ExclResp
        } else {
            MsgKind::LoadResp
        };
        lat += Self::send(fab, kind, true, core, addr);
        self.install(fab, core, Self::line(addr, state, value));
        fab.touch(addr);
        DirAccess { value, latency: lat }
    }

    pub fn store(&mut self, fab: &mut Fabric, core: CoreId, addr: Addr, value: ValueToken) -> u64 {
        let state = self.l1[core].get(addr).map(|l| l.state);
        let latency = match state {
            Some(L1State::M | L1State::E) => fab.lat.l1_hit,
            _ => self.dir_store(fab, core, addr),
        };
        let line = Self::line(addr, L1State::M, value);
        if let Some(l) = self.l1[core].get_mut(addr) {
            *l = line;
            self.l1[core].touch(addr);
        } else {
            self.install(fab, core, line);
        }
        fab.touch(addr);
        latency
    }

    /// Home side of a write miss or upgrade: invalidate everyone else, then
    /// grant ownership.
    pub fn dir_store(&mut self, fab: &mut Fabric, core: CoreId, addr: Addr) -> u64 {
        fab.counters.llc_accesses += 1;
        fab.log(addr, EventKind::StoreMiss);
        let upgrade = self.l1[core].get(addr).is_some();
        let mut lat = Self::send(fab, MsgKind::StoreReq, false, core, addr) + fab.lat.llc_access;
        lat += self.ensure_entry(fab, addr);
        lat += self.invalidate_all(fab, addr, Some(core));
        self.dir.get_mut(addr).unwrap().state = DirState::Exclusive(core);
        lat += Self::send(fab, MsgKind::ExclResp, !upgrade, core, addr);
        lat
    }

    /// Voluntary eviction of a shared copy.
    pub fn dir_evict_shared(&mut self, fab: &mut Fabric, core: CoreId, addr: Addr) {
        if self.l1[core].get(addr).is_some_and(|l| l.state == L1State::S) {
            self.l1[core].remove(addr);
            let e = self.dir.get_mut(addr).expect("directory entry");
            if let DirState::Shared(set) = e.state {
                let rest = set & !(1 << core);
                e.state = if rest == 0 {
                    DirState::Uncached
                } else {
                    DirState::Shared(rest)
                };
            }
            Self::send(fab, MsgKind::EvictNotify, false, core, addr);
            fab.log(addr, EventKind::EvictNotify);
            fab.touch(addr);
        }
    }

    /// Single-writer/multiple-reader and directory/L1 agreement for `addr`.
    pub fn check_swmr(&self, addr: Addr) -> Result<(), String> {
        let holders: Vec<(CoreId, L1State)> = (0..self.l1.len())
            .filter_map(|c| self.l1[c].get(addr).map(|l| (c, l.state)))
            .collect();
        let writers: Vec<CoreId> = holders
            .iter()
            .filter(|(_, s)| s.is_exclusive())
            .map(|&(c, _)| c)
            .collect();
        if !writers.is_empty() && holders.len() > 1 {
            return Err(format!("{addr}: writer {writers:?} coexists with holders {holders:?}"));
        }
        let state = self.dir.get(addr).map(|e| e.state);
        let ok = match state {
            None | Some(DirState::Uncached) => holders.is_empty(),
            Some(DirState::Shared(set)) => {
                set != 0
                    && writers.is_empty()
                    && holders.iter().map(|&(c, _)| 1u64 << c).fold(0, |a, b| a | b) == set
            }
            Some(DirState::Exclusive(o)) => writers == [o],
        };
        if ok {
            Ok(())
        } else {
            Err(format!("{addr}: directory {state:?} disagrees with L1 holders {holders:?}"))
        }
    }

    /// The value a load would observe if served by the home right now.
    pub fn latest_value(&self, addr: Addr) -> ValueToken {
        match self.dir.get(addr) {
            Some(e) => match e.state {
                DirState::Exclusive(o) => self.l1[o].get(addr).map(|l| l.value).unwrap_or(e.value),
                _ => e.value,
            },
            None => self.mem.read(addr).value,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::engine::fabric::LatencyParams;
    use crate::engine::network::NetworkParams;

    fn geo(kb: usize, ways: usize) -> Geometry {
        Geometry {
            size_bytes: kb * 1024,
            ways,
            line_bytes: 64,
        }
    }

    fn setup(cores: usize) -> (DirectorySystem, Fabric) {
        (
            DirectorySystem::new(cores, geo(32, 4), geo(256, 8), true),
            Fabric::new(cores, NetworkParams::default(), LatencyParams::default(), true),
        )
    }

    #[test]
    fn three_sharers_three_invalidations() {
        let (mut d, mut fab) = setup(4);
        let a = Addr(5);
        for c in 0..3 {
            d.load(&mut fab, c, a);
        }
        assert_eq!(d.entry(a).unwrap().state, DirState::Shared(0b111));
        let inv_before = fab.ledger.invalidation.messages;
        d.store(&mut fab, 3, a, ValueToken::store(3, 0, 1));
        assert_eq!(fab.ledger.invalidation.messages - inv_before, 6);
        assert_eq!(fab.counters.invalidations, 3);
        assert_eq!(d.entry(a).unwrap().state, DirState::Exclusive(3));
        assert!(d.check_swmr(a).is_ok());
    }

    #[test]
    fn uncached_load_gets_e() {
        let (mut d, mut fab) = setup(2);
        d.load(&mut fab, 1, Addr(2));
        assert_eq!(d.l1_line(1, Addr(2)).unwrap().state, L1State::E);
        assert_eq!(d.entry(Addr(2)).unwrap().state, DirState::Exclusive(1));
    }

    #[test]
    fn msi_mode_never_grants_e() {
        let mut d = DirectorySystem::new(2, geo(32, 4), geo(256, 8), false);
        let mut fab = Fabric::new(2, NetworkParams::default(), LatencyParams::default(), false);
        d.load(&mut fab, 1, Addr(2));
        assert_eq!(d.l1_line(1, Addr(2)).unwrap().state, L1State::S);
    }

    #[test]
    fn read_downgrades_owner_and_sees_write() {
        let (mut d, mut fab) = setup(2);
        d.store(&mut fab, 0, Addr(1), ValueToken::store(0, 0, 9));
        let r = d.load(&mut fab, 1, Addr(1));
        assert_eq!(r.value.data, 9);
        assert_eq!(d.l1_line(0, Addr(1)).unwrap().state, L1State::S);
        assert_eq!(d.entry(Addr(1)).unwrap().state, DirState::Shared(0b11));
        assert_eq!(fab.ledger.renew.messages, 0);
    }

    #[test]
    fn shared_eviction_notifies() {
        let (mut d, mut fab) = setup(2);
        d.preload(Addr(3), ValueToken::INITIAL, &[0, 1]);
        d.dir_evict_shared(&mut fab, 0, Addr(3));
        assert_eq!(fab.ledger.invalidation.messages, 1);
        assert_eq!(d.entry(Addr(3)).unwrap().state, DirState::Shared(0b10));
        assert!(d.check_swmr(Addr(3)).is_ok());
    }
}
