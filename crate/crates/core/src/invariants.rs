//! Runtime invariant bookkeeping for timestamp coherence.
//!
//! During a run the engine records what the master copy and every shared
//! copy of each touched address looked like. After the run those
//! observations are replayed against the committed trace by brute force.

use std::collections::{BTreeMap, HashMap};

use serde::{Deserialize, Serialize};

use crate::cachemem::{Addr, CoreId, ValueToken};
use crate::chrono::{PhysioTime, Timestamp};
use crate::consistency::MemoryModel;
use crate::engine::{OpKind, TraceOp};

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct InvariantViolation {
    pub invariant: String,
    pub detail: String,
}

impl InvariantViolation {
    fn new(invariant: &str, detail: String) -> Self {
        InvariantViolation {
            invariant: invariant.to_string(),
            detail,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
struct VersionKey {
    addr: Addr,
    wts: Timestamp,
    value: ValueToken,
}

/// Observations gathered while a run executes.
#[derive(Clone, Debug, Default)]
pub struct InvariantLog {
    last_master: BTreeMap<Addr, (Timestamp, Timestamp)>,
    /// Latest step at which each master version was seen.
    masters: HashMap<VersionKey, u64>,
    /// Latest step at which each shared copy (per core, version and rts)
    /// was seen.
    snapshots: HashMap<(CoreId, VersionKey, Timestamp), u64>,
    pub violations: Vec<InvariantViolation>,
}

impl InvariantLog {
    pub fn fail(&mut self, invariant: &str, detail: String) {
        self.violations.push(InvariantViolation::new(invariant, detail));
    }

    /// Record the master copy of `addr` after step `step`, checking that its
    /// timestamps never move backwards.
    pub fn master(&mut self, step: u64, addr: Addr, wts: Timestamp, rts: Timestamp, value: ValueToken) {
        if let Some(&(pw, pr)) = self.last_master.get(&addr) {
            if wts < pw || rts < pr {
                self.fail(
                    "lemma1",
                    format!("{addr} master went from ({pw}, {pr}) to ({wts}, {rts}) at step {step}"),
                );
            }
        }
        self.last_master.insert(addr, (wts, rts));
        let e = self.masters.entry(VersionKey { addr, wts, value }).or_insert(step);
        *e = (*e).max(step);
    }

    pub fn snapshot(
        &mut self,
        step: u64,
        core: CoreId,
        addr: Addr,
        wts: Timestamp,
        rts: Timestamp,
        value: ValueToken,
    ) {
        let e = self
            .snapshots
            .entry((core, VersionKey { addr, wts, value }, rts))
            .or_insert(step);
        *e = (*e).max(step);
    }

    pub fn observation_count(&self) -> usize {
        self.masters.len() + self.snapshots.len()
    }

    /// Replay every observation against the trace. `init_wts` gives the
    /// write timestamp of preloaded initial values (0 when absent).
    pub fn check_trace(&mut self, trace: &[TraceOp], init_wts: &BTreeMap<Addr, Timestamp>) {
        let mut stores: BTreeMap<Addr, Vec<(PhysioTime, ValueToken)>> = BTreeMap::new();
        let mut by_token: HashMap<ValueToken, PhysioTime> = HashMap::new();
        for op in trace.iter().filter(|o| o.kind == OpKind::Store) {
            let (addr, value) = (op.addr.expect("store address"), op.value.expect("store value"));
            let t = PhysioTime::new(op.ts, op.pt);
            stores.entry(addr).or_default().push((t, value));
            by_token.insert(value, t);
        }
        let empty = Vec::new();
        // Version start (wts, commit step of the store that wrote it).
        let start = |k: &VersionKey, log: &mut Vec<InvariantViolation>| -> Option<PhysioTime> {
            if k.value.is_initial() {
                let w = init_wts.get(&k.addr).copied().unwrap_or(Timestamp::ZERO);
                if k.wts != w {
                    log.push(InvariantViolation::new(
                        "fact1",
                        format!("{} initial value carries wts {} (expected {w})", k.addr, k.wts),
                    ));
                }
                return Some(PhysioTime::new(k.wts, 0));
            }
            match by_token.get(&k.value) {
                Some(t) if t.ts == k.wts => Some(*t),
                Some(t) => {
                    log.push(InvariantViolation::new(
                        "fact1",
                        format!("{} holds {} with wts {} but it committed at {}", k.addr, k.value, k.wts, t.ts),
                    ));
                    None
                }
                None => {
                    log.push(InvariantViolation::new(
                        "fact1",
                        format!("{} holds {} which never committed", k.addr, k.value),
                    ));
                    None
                }
            }
        };

        let mut found = Vec::new();
        for (k, &step) in &self.masters {
            let Some(w) = start(k, &mut found) else { continue };
            for (t, v) in stores.get(&k.addr).unwrap_or(&empty) {
                if t.pt <= step && *t > w {
                    found.push(InvariantViolation::new(
                        "lemma2",
                        format!(
                            "{} master version {} (from {w}) seen at step {step}, yet {v} committed at {t}",
                            k.addr, k.value
                        ),
                    ));
                }
            }
        }
        for ((core, k, rts), &step) in &self.snapshots {
            let Some(w) = start(k, &mut found) else { continue };
            let end = PhysioTime::new(*rts, step);
            for (t, v) in stores.get(&k.addr).unwrap_or(&empty) {
                if *t > w && *t < end {
                    found.push(InvariantViolation::new(
                        "lemma3",
                        format!(
                            "core {core} copy of {} valid {w}..{end} overlaps store {v} at {t}",
                            k.addr
                        ),
                    ));
                }
            }
        }
        self.violations.extend(found);
    }
}

/// Ops whose program order must reach memory order commit in physical-step
/// order on their core. Buffered stores are the exception: they may commit
/// after later loads (and, under RC, after a later acquire), and under
/// PSO/RC after later stores to other addresses.
fn later<'a>(a: Option<&'a TraceOp>, b: Option<&'a TraceOp>) -> Option<&'a TraceOp> {
    match (a, b) {
        (Some(x), Some(y)) if y.pt > x.pt => Some(y),
        (None, y) => y,
        (x, _) => x,
    }
}

pub fn check_physical_order(trace: &[TraceOp], model: MemoryModel) -> Vec<InvariantViolation> {
    let mut per_core: BTreeMap<CoreId, Vec<&TraceOp>> = BTreeMap::new();
    for op in trace {
        per_core.entry(op.core).or_default().push(op);
    }
    let mut out = Vec::new();
    for (core, mut ops) in per_core {
        ops.sort_by_key(|o| o.seq);
        let mut non_store: Option<&TraceOp> = None;
        let mut any_store: Option<&TraceOp> = None;
        let mut store_at: BTreeMap<Addr, &TraceOp> = BTreeMap::new();
        for y in ops {
            let store_pred = match y.kind {
                OpKind::Load if model == MemoryModel::Sc => any_store,
                OpKind::Load => None,
                OpKind::Acquire if model == MemoryModel::Rc => None,
                OpKind::Store if matches!(model, MemoryModel::Pso | MemoryModel::Rc) => {
                    y.addr.and_then(|a| store_at.get(&a).copied())
                }
                _ => any_store,
            };
            for x in [non_store, store_pred].into_iter().flatten() {
                if x.pt > y.pt {
                    out.push(InvariantViolation::new(
                        "assumption1",
                        format!(
                            "core {core}: op #{} ({:?}) committed at step {} after op #{} ({:?}) at step {}",
                            x.seq, x.kind, x.pt, y.seq, y.kind, y.pt
                        ),
                    ));
                }
            }
            if y.kind == OpKind::Store {
                any_store = later(any_store, Some(y));
                if let Some(a) = y.addr {
                    let e = store_at.entry(a).or_insert(y);
                    if y.pt > e.pt {
                        *e = y;
                    }
                }
            } else {
                non_store = later(non_store, Some(y));
            }
        }
    }
    out
}
