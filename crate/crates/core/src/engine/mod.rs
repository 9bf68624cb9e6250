//! Execution engine: in-order cores with an optional store buffer, a seeded
//! scheduler, exhaustive schedule enumeration and trace/metrics output.

pub mod fabric;
pub mod network;

use std::collections::{BTreeMap, BTreeSet, VecDeque};
use std::fmt;
use std::sync::Arc;

use log::{debug, trace};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::cachemem::{Addr, CoreId, ValueToken};
use crate::chrono::{PhysioTime, Timestamp};
use crate::config::{Protocol, ScheduleMode, SimConfig};
use crate::consistency::{CoreClock, MemoryModel};
use crate::directory::DirectorySystem;
use crate::invariants::{check_physical_order, InvariantLog, InvariantViolation};
use crate::livelock::DetectorState;
use crate::metrics::MetricsReport;
use crate::tardis::{TardisParams, TardisSystem};
use crate::workloads::{MemOp, Outcome, ProgramSet, StoreValue};
use fabric::{Fabric, ProtocolEvent};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OpKind {
    Load,
    Store,
    Fence,
    Acquire,
    Release,
}

/// One committed memory operation.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TraceOp {
    pub core: CoreId,
    /// Per-core program-order position of this dynamic op.
    pub seq: u64,
    /// Index of the static op in the core's program.
    pub pc: usize,
    pub kind: OpKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub addr: Option<Addr>,
    /// Value read (loads) or written (stores).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub value: Option<ValueToken>,
    pub ts: Timestamp,
    pub pt: u64,
}

impl TraceOp {
    pub fn physio(&self) -> PhysioTime {
        PhysioTime::new(self.ts, self.pt).with_tie(self.core, self.seq)
    }
}

pub type ExecTrace = Vec<TraceOp>;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum EngineError {
    #[error("no core can make progress at cycle {cycle}:\n{dump}")]
    Deadlock { cycle: u64, dump: String },
    #[error("cycle limit {limit} reached:\n{dump}")]
    CycleLimit { limit: u64, dump: String },
    #[error("program has {ops} ops, enumeration budget is {limit}")]
    Budget { ops: usize, limit: usize },
    #[error("unsupported: {0}")]
    Unsupported(String),
    #[error("invalid program: {0}")]
    InvalidProgram(String),
}

#[derive(Clone, Debug)]
struct SbEntry {
    addr: Addr,
    value: ValueToken,
    seq: u64,
    pc: usize,
}

#[derive(Clone, Debug)]
struct CoreState {
    pc: usize,
    seq: u64,
    store_seq: u64,
    regs: BTreeMap<String, u64>,
    clock: CoreClock,
    detector: Option<DetectorState>,
    sb: VecDeque<SbEntry>,
    ready_at: u64,
    sb_ready_at: u64,
    accesses: u64,
    finished_at: u64,
}

#[derive(Clone, Debug)]
enum MemSystem {
    Tardis(TardisSystem),
    Directory(DirectorySystem),
}

/// A scheduling choice.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Action {
    Step(CoreId),
    /// Commit the store-buffer entry at this index.
    Drain(CoreId, usize),
}

#[derive(Clone, Debug)]
pub struct RunResult {
    pub trace: ExecTrace,
    pub metrics: MetricsReport,
    pub outcome: Outcome,
    pub events: Vec<ProtocolEvent>,
    pub violations: Vec<InvariantViolation>,
}

#[derive(Clone, Debug)]
pub struct Simulator {
    cfg: SimConfig,
    prog: Arc<ProgramSet>,
    mem: MemSystem,
    fab: Fabric,
    cores: Vec<CoreState>,
    trace: ExecTrace,
    step: u64,
    now: u64,
    inv: Option<InvariantLog>,
    init_wts: BTreeMap<Addr, Timestamp>,
}

impl Simulator {
    pub fn new(cfg: &SimConfig, prog: &ProgramSet) -> Result<Simulator, EngineError> {
        cfg.validate()
            .map_err(|e| EngineError::InvalidProgram(e.to_string()))?;
        if prog.num_cores() > cfg.cores {
            return Err(EngineError::InvalidProgram(format!(
                "program uses {} cores, config has {}",
                prog.num_cores(),
                cfg.cores
            )));
        }
        let mut mem = match cfg.protocol {
            Protocol::Tardis => MemSystem::Tardis(TardisSystem::new(
                cfg.cores,
                cfg.l1,
                cfg.llc,
                TardisParams {
                    mesi: cfg.mesi,
                    static_lease: cfg.static_lease,
                    lease_predictor: cfg.lease_predictor,
                },
            )),
            Protocol::Directory => MemSystem::Directory(DirectorySystem::new(cfg.cores, cfg.l1, cfg.llc, cfg.mesi)),
        };
        let mut init_wts = BTreeMap::new();
        for i in &prog.init {
            let value = ValueToken {
                writer: None,
                seq: 0,
                data: i.value,
            };
            match &mut mem {
                MemSystem::Tardis(t) => t.preload(i.addr, value, Timestamp(i.wts), Timestamp(i.rts), &i.cached),
                MemSystem::Directory(d) => d.preload(i.addr, value, &i.cached),
            }
            init_wts.insert(i.addr, Timestamp(i.wts));
        }
        let detector = (cfg.protocol == Protocol::Tardis && cfg.livelock_detector)
            .then(|| DetectorState::new(cfg.detector));
        let cores = (0..cfg.cores)
            .map(|_| CoreState {
                pc: 0,
                seq: 0,
                store_seq: 0,
                regs: BTreeMap::new(),
                clock: CoreClock::new(cfg.model),
                detector: detector.clone(),
                sb: VecDeque::new(),
                ready_at: 0,
                sb_ready_at: 0,
                accesses: 0,
                finished_at: 0,
            })
            .collect();
        Ok(Simulator {
            cfg: cfg.clone(),
            prog: Arc::new(prog.clone()),
            mem,
            fab: Fabric::new(cfg.cores, cfg.net, cfg.latency, cfg.record_events),
            cores,
            trace: Vec::new(),
            step: 0,
            now: 0,
            inv: cfg.check_invariants.then(InvariantLog::default),
            init_wts,
        })
    }

    fn program(&self, core: CoreId) -> &[MemOp] {
        self.prog.cores.get(core).map(Vec::as_slice).unwrap_or(&[])
    }

    fn next_op(&self, core: CoreId) -> Option<&MemOp> {
        self.program(core).get(self.cores[core].pc)
    }

    fn model(&self) -> MemoryModel {
        self.cfg.model
    }

    fn needs_drain(&self, op: &MemOp) -> bool {
        match (self.model(), op) {
            (MemoryModel::Sc, _) => false,
            (MemoryModel::Rc, MemOp::Fence | MemOp::Release) => true,
            (MemoryModel::Rc, _) => false,
            (_, MemOp::Fence | MemOp::Acquire | MemOp::Release) => true,
            _ => false,
        }
    }

    fn can_step(&self, core: CoreId) -> bool {
        let Some(op) = self.next_op(core) else {
            return false;
        };
        let c = &self.cores[core];
        if self.needs_drain(op) && !c.sb.is_empty() {
            return false;
        }
        let cap = self.cfg.effective_store_buffer();
        !(matches!(op, MemOp::Store { .. }) && cap > 0 && c.sb.len() >= cap)
    }

    /// Buffer entries that may commit next: the head under TSO, any entry
    /// with no older entry to the same address under PSO/RC.
    fn drainable(&self, core: CoreId) -> Vec<usize> {
        let sb = &self.cores[core].sb;
        match self.model() {
            MemoryModel::Pso | MemoryModel::Rc => (0..sb.len())
                .filter(|&i| sb.iter().take(i).all(|e| e.addr != sb[i].addr))
                .collect(),
            _ => (0..sb.len().min(1)).collect(),
        }
    }

    fn core_done(&self, core: CoreId) -> bool {
        self.next_op(core).is_none() && self.cores[core].sb.is_empty()
    }

    pub fn all_done(&self) -> bool {
        (0..self.cores.len()).all(|c| self.core_done(c))
    }

    /// Every action enabled in the current state, ignoring timing.
    pub fn enabled_actions(&self) -> Vec<Action> {
        let mut v = Vec::new();
        for c in 0..self.cores.len() {
            if self.can_step(c) {
                v.push(Action::Step(c));
            }
            v.extend(self.drainable(c).into_iter().map(|i| Action::Drain(c, i)));
        }
        v
    }

    fn begin(&mut self, core: CoreId, pc: usize) {
        self.fab.cur_core = core;
        self.fab.cur_pc = pc;
        self.fab.step = self.step + 1;
        self.fab.touched.clear();
    }

    fn commit(&mut self, core: CoreId, seq: u64, pc: usize, kind: OpKind, addr: Option<Addr>, value: Option<ValueToken>, ts: Timestamp) {
        self.step += 1;
        trace!("step {} core {core} {kind:?} {addr:?} ts {ts}", self.step);
        self.trace.push(TraceOp {
            core,
            seq,
            pc,
            kind,
            addr,
            value,
            ts,
            pt: self.step,
        });
    }

    fn read_ts(&self, core: CoreId) -> Timestamp {
        self.cores[core].clock.read_ts()
    }

    /// Memory-system load, without store-buffer forwarding.
    fn mem_load(&mut self, core: CoreId, addr: Addr) -> (ValueToken, Timestamp, u64, Option<(Timestamp, Timestamp)>) {
        let c = &mut self.cores[core];
        match &mut self.mem {
            MemSystem::Tardis(t) => {
                let out = t.load(&mut self.fab, core, addr, &mut c.clock, c.detector.as_mut());
                (out.value, out.ts, out.latency, out.snapshot)
            }
            MemSystem::Directory(d) => {
                let out = d.load(&mut self.fab, core, addr);
                (out.value, Timestamp::ZERO, out.latency, None)
            }
        }
    }

    fn mem_store(&mut self, core: CoreId, addr: Addr, value: ValueToken) -> (Timestamp, u64) {
        let c = &mut self.cores[core];
        match &mut self.mem {
            MemSystem::Tardis(t) => {
                let out = t.store(&mut self.fab, core, addr, value, &mut c.clock);
                (out.ts, out.latency)
            }
            MemSystem::Directory(d) => (Timestamp::ZERO, d.store(&mut self.fab, core, addr, value)),
        }
    }

    fn after_access(&mut self, core: CoreId, before: Timestamp) {
        if !matches!(self.mem, MemSystem::Tardis(_)) {
            return;
        }
        let period = self.cfg.effective_self_increment();
        let after = self.read_ts(core);
        let c = &mut self.cores[core];
        if after > before {
            if let Some(d) = c.detector.as_mut() {
                d.reset_on_lts_advance();
            }
        }
        c.accesses += 1;
        if period > 0 && c.accesses % period == 0 {
            c.clock.self_increment();
        }
    }

    /// Load with forwarding from this core's store buffer.
    fn do_load(&mut self, core: CoreId, addr: Addr) -> (ValueToken, u64) {
        let seq = self.cores[core].seq;
        self.cores[core].seq += 1;
        let pc = self.cores[core].pc;
        self.begin(core, pc);
        let before = self.read_ts(core);
        let forwarded = self.cores[core].sb.iter().rev().find(|e| e.addr == addr).map(|e| e.value);
        let (value, ts, latency, snapshot) = match forwarded {
            Some(v) => {
                let ts = match self.mem {
                    MemSystem::Tardis(_) => self.cores[core]
                        .clock
                        .commit_load(Timestamp::ZERO, Timestamp::ZERO, true),
                    MemSystem::Directory(_) => Timestamp::ZERO,
                };
                (v, ts, self.cfg.latency.l1_hit, None)
            }
            None => self.mem_load(core, addr),
        };
        self.commit(core, seq, pc, OpKind::Load, Some(addr), Some(value), ts);
        if let (Some(inv), Some((wts, rts))) = (self.inv.as_mut(), snapshot) {
            inv.snapshot(self.step, core, addr, wts, rts, value);
        }
        self.after_access(core, before);
        self.observe(addr);
        (value, latency)
    }

    fn store_token(&mut self, core: CoreId, value: &StoreValue) -> ValueToken {
        let c = &mut self.cores[core];
        let data = match value {
            StoreValue::Const(v) => *v,
            StoreValue::RegPlus(r, k) => c.regs.get(r).copied().unwrap_or(0).wrapping_add(*k),
        };
        let t = ValueToken::store(core, c.store_seq, data);
        c.store_seq += 1;
        t
    }

    fn commit_store(&mut self, core: CoreId, e: SbEntry) -> u64 {
        self.begin(core, e.pc);
        let (ts, latency) = self.mem_store(core, e.addr, e.value);
        self.commit(core, e.seq, e.pc, OpKind::Store, Some(e.addr), Some(e.value), ts);
        self.observe(e.addr);
        latency
    }

    fn do_sync(&mut self, core: CoreId, op: &MemOp) {
        let seq = self.cores[core].seq;
        self.cores[core].seq += 1;
        let pc = self.cores[core].pc;
        self.begin(core, pc);
        let kind = match op {
            MemOp::Fence => OpKind::Fence,
            MemOp::Acquire => OpKind::Acquire,
            _ => OpKind::Release,
        };
        let ts = if matches!(self.mem, MemSystem::Directory(_)) {
            Timestamp::ZERO
        } else {
            let clock = &mut self.cores[core].clock;
            let r = match (clock.model, kind) {
                (MemoryModel::Sc, _) => Ok(clock.read_ts()),
                (MemoryModel::Tso | MemoryModel::Pso, _) => clock.apply_fence(),
                (MemoryModel::Rc, OpKind::Fence) => clock.apply_release().and_then(|_| clock.apply_acquire()),
                (MemoryModel::Rc, OpKind::Acquire) => clock.apply_acquire(),
                (MemoryModel::Rc, _) => clock.apply_release(),
            };
            r.expect("sync op matches the clock model")
        };
        self.commit(core, seq, pc, kind, None, None, ts);
    }

    /// Run one action. Returns its latency in cycles.
    pub fn apply(&mut self, action: Action) -> u64 {
        match action {
            Action::Drain(core, i) => {
                let e = self.cores[core].sb.remove(i).expect("drainable entry");
                self.commit_store(core, e)
            }
            Action::Step(core) => {
                let op = self.next_op(core).cloned().expect("core has an op");
                let lat = match &op {
                    MemOp::Load { addr, reg } => {
                        let (v, lat) = self.do_load(core, *addr);
                        if let Some(r) = reg {
                            self.cores[core].regs.insert(r.clone(), v.data);
                        }
                        self.cores[core].pc += 1;
                        lat
                    }
                    MemOp::SpinUntil { addr, value, backoff } => {
                        let (v, lat) = self.do_load(core, *addr);
                        if v.data == *value {
                            self.cores[core].pc += 1;
                            lat
                        } else {
                            lat + backoff
                        }
                    }
                    MemOp::Store { addr, value } => {
                        let token = self.store_token(core, value);
                        let c = &mut self.cores[core];
                        let entry = SbEntry {
                            addr: *addr,
                            value: token,
                            seq: c.seq,
                            pc: c.pc,
                        };
                        c.seq += 1;
                        c.pc += 1;
                        let before = self.read_ts(core);
                        let lat = if self.cfg.effective_store_buffer() > 0 {
                            self.cores[core].sb.push_back(entry);
                            self.cfg.latency.l1_hit
                        } else {
                            self.commit_store(core, entry)
                        };
                        self.after_access(core, before);
                        lat
                    }
                    MemOp::Fence | MemOp::Acquire | MemOp::Release => {
                        self.do_sync(core, &op);
                        self.cores[core].pc += 1;
                        self.cfg.latency.l1_hit
                    }
                    MemOp::Sleep(n) => {
                        self.cores[core].pc += 1;
                        *n
                    }
                };
                lat
            }
        }
    }

    /// Record invariant observations for the addresses touched by the last
    /// action.
    fn observe(&mut self, addr: Addr) {
        let Some(inv) = self.inv.as_mut() else { return };
        let mut addrs = std::mem::take(&mut self.fab.touched);
        if !addrs.contains(&addr) {
            addrs.push(addr);
        }
        for a in &addrs {
            match &self.mem {
                MemSystem::Tardis(t) => {
                    if let Err(e) = t.check_lines(*a) {
                        inv.fail("line", e);
                    }
                    match t.master(*a) {
                        Ok(m) => inv.master(self.step, *a, m.wts, m.rts, m.value),
                        Err(e) => inv.fail("fact2", e),
                    }
                    for (c, l) in t.snapshots(*a) {
                        inv.snapshot(self.step, c, *a, l.wts, l.rts, l.value);
                    }
                }
                MemSystem::Directory(d) => {
                    if let Err(e) = d.check_swmr(*a) {
                        inv.fail("swmr", e);
                    }
                }
            }
        }
        self.fab.touched = addrs;
    }

    fn dump(&self) -> String {
        let mut s = String::new();
        for (i, c) in self.cores.iter().enumerate() {
            let op = self.next_op(i).map(|o| format!("{o:?}")).unwrap_or_else(|| "done".into());
            s.push_str(&format!(
                "  core {i}: pc {} next {op} ready_at {} store buffer {} read ts {}\n",
                c.pc,
                c.ready_at,
                c.sb.len(),
                c.clock.read_ts()
            ));
        }
        s
    }

    /// Drive the program to completion under the configured schedule.
    pub fn run(mut self, seed: u64) -> Result<RunResult, EngineError> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n = self.cores.len();
        let mut rotate = 0usize;
        while !self.all_done() {
            if self.now > self.cfg.max_cycles {
                return Err(EngineError::CycleLimit {
                    limit: self.cfg.max_cycles,
                    dump: self.dump(),
                });
            }
            let order: Vec<CoreId> = match self.cfg.schedule {
                ScheduleMode::Sequential => (0..n).find(|&c| !self.core_done(c)).into_iter().collect(),
                ScheduleMode::Lockstep => (0..n).collect(),
                ScheduleMode::Interleave => (0..n).map(|i| (i + rotate) % n).collect(),
            };
            rotate = (rotate + 1) % n.max(1);
            let mut acted = false;
            let mut skipped = false;
            for &c in &order {
                if self.cfg.schedule == ScheduleMode::Interleave
                    && self.cfg.skip_prob > 0.0
                    && rng.gen_bool(self.cfg.skip_prob)
                {
                    skipped = true;
                    continue;
                }
                if !self.cores[c].sb.is_empty() && self.cores[c].sb_ready_at <= self.now {
                    let opts = self.drainable(c);
                    let i = if self.cfg.schedule == ScheduleMode::Interleave && opts.len() > 1 {
                        opts[rng.gen_range(0..opts.len())]
                    } else {
                        opts[0]
                    };
                    let lat = self.apply(Action::Drain(c, i));
                    self.cores[c].sb_ready_at = self.now + lat.max(1);
                    acted = true;
                }
                if self.cores[c].ready_at <= self.now && self.can_step(c) {
                    let lat = self.apply(Action::Step(c));
                    self.cores[c].ready_at = self.now + lat.max(1);
                    acted = true;
                }
                if self.core_done(c) {
                    let cs = &mut self.cores[c];
                    cs.finished_at = cs.finished_at.max(cs.ready_at).max(cs.sb_ready_at);
                }
            }
            if acted || skipped {
                self.now += 1;
                continue;
            }
            // Nothing could act this cycle: jump to the next time anything can.
            let next = order
                .iter()
                .flat_map(|&c| {
                    let cs = &self.cores[c];
                    let mut t = Vec::new();
                    if self.can_step(c) {
                        t.push(cs.ready_at);
                    }
                    if !cs.sb.is_empty() {
                        t.push(cs.sb_ready_at);
                    }
                    t
                })
                .filter(|&t| t > self.now)
                .min();
            match next {
                Some(t) => self.now = t,
                None => {
                    return Err(EngineError::Deadlock {
                        cycle: self.now,
                        dump: self.dump(),
                    })
                }
            }
        }
        Ok(self.finish(seed))
    }

    /// Final register values.
    pub fn outcome(&self) -> Outcome {
        let mut o = Outcome::new();
        for (c, cs) in self.cores.iter().enumerate() {
            for (r, v) in &cs.regs {
                o.insert((c, r.clone()), *v);
            }
        }
        o
    }

    pub fn trace(&self) -> &[TraceOp] {
        &self.trace
    }

    /// The Tardis memory system, when that is the configured protocol.
    pub fn tardis(&self) -> Option<&TardisSystem> {
        match &self.mem {
            MemSystem::Tardis(t) => Some(t),
            MemSystem::Directory(_) => None,
        }
    }

    pub fn directory(&self) -> Option<&DirectorySystem> {
        match &self.mem {
            MemSystem::Directory(d) => Some(d),
            MemSystem::Tardis(_) => None,
        }
    }

    pub fn fabric(&self) -> &Fabric {
        &self.fab
    }

    fn finish(mut self, seed: u64) -> RunResult {
        let mut violations = Vec::new();
        if let Some(mut inv) = self.inv.take() {
            if matches!(self.mem, MemSystem::Tardis(_)) {
                inv.check_trace(&self.trace, &self.init_wts);
            }
            violations = inv.violations;
            violations.extend(check_physical_order(&self.trace, self.cfg.model));
            debug!("{} invariant violations", violations.len());
        }
        let cycles = self
            .cores
            .iter()
            .map(|c| c.finished_at.max(c.ready_at).max(c.sb_ready_at))
            .max()
            .unwrap_or(0);
        let max_ts = self.cores.iter().map(|c| c.clock.max_ts()).max().unwrap_or(Timestamp::ZERO);
        let max_ts = match self.mem {
            MemSystem::Tardis(_) => max_ts,
            MemSystem::Directory(_) => Timestamp::ZERO,
        };
        let metrics = MetricsReport::build(&self.cfg, &self.prog.name, seed, cycles, &self.trace, &self.fab, max_ts);
        let outcome = self.outcome();
        RunResult {
            events: self.fab.take_events(),
            trace: self.trace,
            metrics,
            outcome,
            violations,
        }
    }
}

/// Run `prog` once under `cfg`.
pub fn run(cfg: &SimConfig, prog: &ProgramSet, seed: u64) -> Result<RunResult, EngineError> {
    Simulator::new(cfg, prog)?.run(seed)
}

pub const ENUMERATION_BUDGET: usize = 10;

/// Every register outcome reachable under any schedule of core steps and
/// store-buffer commits.
pub fn enumerate(cfg: &SimConfig, prog: &ProgramSet) -> Result<BTreeSet<Outcome>, EngineError> {
    let ops = prog.total_ops();
    if ops > ENUMERATION_BUDGET {
        return Err(EngineError::Budget {
            ops,
            limit: ENUMERATION_BUDGET,
        });
    }
    if prog.has_spin() {
        return Err(EngineError::Unsupported("spin loops cannot be enumerated".into()));
    }
    let cfg = SimConfig {
        check_invariants: false,
        record_events: false,
        ..cfg.clone()
    };
    let mut out = BTreeSet::new();
    let mut stack = vec![Simulator::new(&cfg, prog)?];
    while let Some(sim) = stack.pop() {
        let actions = sim.enabled_actions();
        if actions.is_empty() {
            if !sim.all_done() {
                return Err(EngineError::Deadlock {
                    cycle: 0,
                    dump: sim.dump(),
                });
            }
            out.insert(sim.outcome());
            continue;
        }
        let (last, rest) = actions.split_last().expect("non-empty");
        for a in rest {
            let mut s = sim.clone();
            s.apply(*a);
            stack.push(s);
        }
        let mut sim = sim;
        sim.apply(*last);
        stack.push(sim);
    }
    Ok(out)
}

impl fmt::Display for Action {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Action::Step(c) => write!(f, "step core {c}"),
            Action::Drain(c, i) => write!(f, "commit core {c} buffer entry {i}"),
        }
    }
}
