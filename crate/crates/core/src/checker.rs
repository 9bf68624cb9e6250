//! Axiomatic consistency checking over committed traces, plus a brute-force
//! outcome oracle for small programs that never touches protocol state.
//!
//! Global memory order is the physiological order of the trace. Program
//! order edges come from [`ordered`]; the value rule takes the latest store
//! in memory order among those before the load, and under the relaxed
//! models also those before it in program order on the same core.

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::cachemem::{Addr, CoreId};
use crate::chrono::PhysioTime;
use crate::consistency::MemoryModel;
use crate::engine::{OpKind, TraceOp};
use crate::workloads::{MemOp, Outcome, ProgramSet, StoreValue};

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Violation {
    /// `SC1`, `TSO2`, `RC3` and so on: model prefix plus rule number.
    pub rule: String,
    /// Trace indices of the offending ops.
    pub ops: Vec<usize>,
    pub times: Vec<PhysioTime>,
    pub explanation: String,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {} (ops {:?})", self.rule, self.explanation, self.ops)
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum CheckError {
    #[error("malformed trace: {0}")]
    Malformed(String),
    #[error("{} violation(s), first: {}", .0.len(), .0[0])]
    Violations(Vec<Violation>),
}

fn prefix(model: MemoryModel) -> &'static str {
    match model {
        MemoryModel::Sc => "SC",
        MemoryModel::Tso => "TSO",
        MemoryModel::Pso => "PSO",
        MemoryModel::Rc => "RC",
    }
}

/// Acquire and release only mean something under RC; elsewhere the engine
/// runs them as full fences.
fn normalize(model: MemoryModel, k: OpKind) -> OpKind {
    match (model, k) {
        (MemoryModel::Rc, _) => k,
        (_, OpKind::Acquire | OpKind::Release) => OpKind::Fence,
        _ => k,
    }
}

/// Must `x <p y` imply `x <m y`? Returns the rule number (1 for ordinary
/// orderings, 3 for fence and synchronization orderings).
pub fn ordered(model: MemoryModel, x: OpKind, y: OpKind, same_addr: bool) -> Option<u8> {
    use OpKind::*;
    let (x, y) = (normalize(model, x), normalize(model, y));
    match model {
        MemoryModel::Sc => Some(if x == Fence || y == Fence { 3 } else { 1 }),
        MemoryModel::Tso | MemoryModel::Pso if x == Fence || y == Fence => Some(3),
        MemoryModel::Tso => match (x, y) {
            (Store, Load) => None,
            _ => Some(1),
        },
        MemoryModel::Pso => match (x, y) {
            (Load, _) => Some(1),
            (Store, Store) if same_addr => Some(1),
            _ => None,
        },
        MemoryModel::Rc => {
            let rel_y = matches!(y, Release | Fence);
            let acq_x = matches!(x, Acquire | Fence);
            let sync = |k| matches!(k, Acquire | Release | Fence);
            if rel_y || acq_x || (sync(x) && sync(y)) {
                Some(3)
            } else if same_addr && y == Store && matches!(x, Load | Store) {
                Some(1)
            } else {
                None
            }
        }
    }
}

const KINDS: [OpKind; 5] = [OpKind::Load, OpKind::Store, OpKind::Fence, OpKind::Acquire, OpKind::Release];

fn kind_index(k: OpKind) -> usize {
    KINDS.iter().position(|&x| x == k).expect("kind listed")
}

fn validate(trace: &[TraceOp]) -> Result<(), CheckError> {
    let mut seqs = HashSet::new();
    let mut slots: BTreeMap<(u64, u64, Addr), bool> = BTreeMap::new();
    for (i, op) in trace.iter().enumerate() {
        if !seqs.insert((op.core, op.seq)) {
            return Err(CheckError::Malformed(format!(
                "op {i}: core {} sequence {} appears twice",
                op.core, op.seq
            )));
        }
        let is_access = matches!(op.kind, OpKind::Load | OpKind::Store);
        if is_access && (op.addr.is_none() || op.value.is_none()) {
            return Err(CheckError::Malformed(format!("op {i}: {:?} without address or value", op.kind)));
        }
        if let Some(a) = op.addr.filter(|_| is_access) {
            let store = op.kind == OpKind::Store;
            match slots.get_mut(&(op.ts.0, op.pt, a)) {
                Some(prev) if *prev || store => {
                    return Err(CheckError::Malformed(format!(
                        "op {i}: conflicting accesses to {a} share ts {} and step {}",
                        op.ts, op.pt
                    )))
                }
                Some(_) => {}
                None => {
                    slots.insert((op.ts.0, op.pt, a), store);
                }
            }
        }
    }
    Ok(())
}

/// Verify `trace` against the rules of `model`.
pub fn check_trace(trace: &[TraceOp], model: MemoryModel) -> Result<(), CheckError> {
    validate(trace)?;
    let mut order: Vec<usize> = (0..trace.len()).collect();
    order.sort_by_key(|&i| trace[i].physio());
    let mut pos = vec![0usize; trace.len()];
    for (p, &i) in order.iter().enumerate() {
        pos[i] = p;
    }
    let mut per_core: BTreeMap<CoreId, Vec<usize>> = BTreeMap::new();
    for (i, op) in trace.iter().enumerate() {
        per_core.entry(op.core).or_default().push(i);
    }
    for ops in per_core.values_mut() {
        ops.sort_by_key(|&i| trace[i].seq);
    }

    let pfx = prefix(model);
    let mut out = Vec::new();
    let edge = |x: usize, y: usize, rule: u8, out: &mut Vec<Violation>| {
        let (a, b) = (&trace[x], &trace[y]);
        out.push(Violation {
            rule: format!("{pfx}{rule}"),
            ops: vec![x, y],
            times: vec![a.physio(), b.physio()],
            explanation: format!(
                "core {}: {:?} #{} precedes {:?} #{} in program order but follows it in memory order",
                a.core, a.kind, a.seq, b.kind, b.seq
            ),
        });
    };

    // Program-order rules: for each op, the latest-in-memory-order earlier op
    // of every kind (and of every kind on the same address) must precede it.
    for ops in per_core.values() {
        let mut latest: [Option<usize>; 5] = [None; 5];
        let mut latest_at: BTreeMap<(Addr, usize), usize> = BTreeMap::new();
        for &y in ops {
            let yk = trace[y].kind;
            for (ki, &k) in KINDS.iter().enumerate() {
                let any = latest[ki].and_then(|x| ordered(model, k, yk, false).map(|r| (x, r)));
                let same = trace[y]
                    .addr
                    .and_then(|a| latest_at.get(&(a, ki)).copied())
                    .and_then(|x| ordered(model, k, yk, true).map(|r| (x, r)));
                let same = same.filter(|s| Some(*s) != any);
                for (x, r) in [any, same].into_iter().flatten() {
                    if pos[x] > pos[y] {
                        edge(x, y, r, &mut out);
                    }
                }
            }
            let ki = kind_index(yk);
            if latest[ki].map_or(true, |x| pos[y] > pos[x]) {
                latest[ki] = Some(y);
            }
            if let Some(a) = trace[y].addr {
                let e = latest_at.entry((a, ki)).or_insert(y);
                if pos[y] > pos[*e] {
                    *e = y;
                }
            }
        }
    }

    // Value rule.
    let mut stores_by_addr: BTreeMap<Addr, Vec<usize>> = BTreeMap::new();
    for &i in &order {
        if trace[i].kind == OpKind::Store {
            stores_by_addr.entry(trace[i].addr.expect("validated")).or_default().push(i);
        }
    }
    let include_po = model != MemoryModel::Sc;
    for ops in per_core.values() {
        let mut own: BTreeMap<Addr, usize> = BTreeMap::new();
        for &i in ops {
            let op = &trace[i];
            let addr = op.addr.unwrap_or_default();
            match op.kind {
                OpKind::Store => {
                    let e = own.entry(addr).or_insert(i);
                    if pos[i] > pos[*e] {
                        *e = i;
                    }
                }
                OpKind::Load => {
                    let list = stores_by_addr.get(&addr).map(Vec::as_slice).unwrap_or(&[]);
                    let before = list.partition_point(|&s| pos[s] < pos[i]);
                    let mut best = before.checked_sub(1).map(|k| list[k]);
                    if include_po {
                        if let Some(&s) = own.get(&addr) {
                            if best.map_or(true, |b| pos[s] > pos[b]) {
                                best = Some(s);
                            }
                        }
                    }
                    let got = op.value.expect("validated");
                    let (ok, expected) = match best {
                        Some(s) => {
                            let v = trace[s].value.expect("validated");
                            (v == got, v.to_string())
                        }
                        None => (got.is_initial(), "the initial value".to_string()),
                    };
                    if !ok {
                        let mut ids = vec![i];
                        let mut times = vec![op.physio()];
                        if let Some(s) = best {
                            ids.push(s);
                            times.push(trace[s].physio());
                        }
                        out.push(Violation {
                            rule: format!("{pfx}2"),
                            ops: ids,
                            times,
                            explanation: format!(
                                "core {} load #{} of {addr} returned {got}, expected {expected}",
                                op.core, op.seq
                            ),
                        });
                    }
                }
                _ => {}
            }
        }
    }

    if out.is_empty() {
        Ok(())
    } else {
        out.sort_by(|a, b| a.ops.cmp(&b.ops).then(a.rule.cmp(&b.rule)));
        Err(CheckError::Violations(out))
    }
}

pub const ORACLE_BUDGET: usize = 8;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum OracleError {
    #[error("program has {ops} ops, oracle budget is {limit}")]
    Budget { ops: usize, limit: usize },
    #[error("unsupported: {0}")]
    Unsupported(String),
}

#[derive(Clone, Debug)]
struct StaticOp {
    core: CoreId,
    kind: OpKind,
    addr: Option<Addr>,
    data: u64,
    reg: Option<String>,
}

/// Every final register assignment allowed by the axioms of `model`,
/// found by exploring total orders directly.
pub fn oracle_outcomes(prog: &ProgramSet, model: MemoryModel) -> Result<BTreeSet<Outcome>, OracleError> {
    let mut ops: Vec<StaticOp> = Vec::new();
    for (core, list) in prog.cores.iter().enumerate() {
        for op in list {
            let s = match op {
                MemOp::Load { addr, reg } => StaticOp {
                    core,
                    kind: OpKind::Load,
                    addr: Some(*addr),
                    data: 0,
                    reg: reg.clone(),
                },
                MemOp::Store { addr, value } => match value {
                    StoreValue::Const(v) => StaticOp {
                        core,
                        kind: OpKind::Store,
                        addr: Some(*addr),
                        data: *v,
                        reg: None,
                    },
                    StoreValue::RegPlus(..) => {
                        return Err(OracleError::Unsupported("register-valued stores".into()))
                    }
                },
                MemOp::Fence | MemOp::Acquire | MemOp::Release => StaticOp {
                    core,
                    kind: match op {
                        MemOp::Fence => OpKind::Fence,
                        MemOp::Acquire => OpKind::Acquire,
                        _ => OpKind::Release,
                    },
                    addr: None,
                    data: 0,
                    reg: None,
                },
                MemOp::Sleep(_) => continue,
                MemOp::SpinUntil { .. } => return Err(OracleError::Unsupported("spin loops".into())),
            };
            ops.push(s);
        }
    }
    if ops.len() > ORACLE_BUDGET {
        return Err(OracleError::Budget {
            ops: ops.len(),
            limit: ORACLE_BUDGET,
        });
    }
    let init: BTreeMap<Addr, u64> = prog.init.iter().map(|l| (l.addr, l.value)).collect();
    let n = ops.len();
    // preds[y]: ops that must precede y in memory order.
    let preds: Vec<u32> = (0..n)
        .map(|y| {
            (0..y)
                .filter(|&x| {
                    ops[x].core == ops[y].core
                        && ordered(model, ops[x].kind, ops[y].kind, ops[x].addr.is_some() && ops[x].addr == ops[y].addr)
                            .is_some()
                })
                .fold(0u32, |m, x| m | (1 << x))
        })
        .collect();
    // Same-core earlier stores to the same address, for the program-order
    // half of the value rule.
    let po_stores: Vec<Vec<usize>> = (0..n)
        .map(|y| {
            (0..y)
                .filter(|&x| {
                    ops[x].core == ops[y].core && ops[x].kind == OpKind::Store && ops[x].addr == ops[y].addr
                })
                .collect()
        })
        .collect();
    let include_po = model != MemoryModel::Sc;

    #[derive(Clone, PartialEq, Eq, Hash)]
    struct State {
        placed: u32,
        /// Last placed store per address (op index).
        last: BTreeMap<Addr, usize>,
        /// Value read by each placed load.
        read: Vec<Option<u64>>,
    }
    let mut seen = HashSet::new();
    let mut out = BTreeSet::new();
    let mut stack = vec![State {
        placed: 0,
        last: BTreeMap::new(),
        read: vec![None; n],
    }];
    let full = if n == 32 { u32::MAX } else { (1u32 << n) - 1 };
    while let Some(st) = stack.pop() {
        if !seen.insert(st.clone()) {
            continue;
        }
        if st.placed == full {
            let mut o = Outcome::new();
            for (i, op) in ops.iter().enumerate() {
                if let (Some(r), Some(v)) = (&op.reg, st.read[i]) {
                    o.insert((op.core, r.clone()), v);
                }
            }
            out.insert(o);
            continue;
        }
        for y in 0..n {
            if st.placed & (1 << y) != 0 || preds[y] & !st.placed != 0 {
                continue;
            }
            let mut next = st.clone();
            next.placed |= 1 << y;
            match ops[y].kind {
                OpKind::Store => {
                    next.last.insert(ops[y].addr.expect("store address"), y);
                }
                OpKind::Load => {
                    let a = ops[y].addr.expect("load address");
                    // Unplaced program-order stores land after this load in
                    // memory order, and among themselves keep program order.
                    let pending = po_stores[y]
                        .iter()
                        .rev()
                        .find(|&&s| include_po && st.placed & (1 << s) == 0);
                    let v = match (pending, st.last.get(&a)) {
                        (Some(&s), _) => ops[s].data,
                        (None, Some(&s)) => ops[s].data,
                        (None, None) => init.get(&a).copied().unwrap_or(0),
                    };
                    next.read[y] = Some(v);
                }
                _ => {}
            }
            stack.push(next);
        }
    }
    Ok(out)
}
