//! Program sets: the text DSL, built-in programs, the litmus corpus and a
//! seeded synthetic generator.
//!
//! ```text
//! # comment
//! [init]
//! A = 0 wts 0 rts 5 cached 0 1
//! [core 0]
//! St A = 1
//! Ld B -> r1
//! St B = r1 + 1
//! Fence | Acq | Rel
//! SpinUntil A == 1 sleep 2
//! Sleep 100
//! ```

use std::collections::BTreeMap;
use std::fmt;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::cachemem::{Addr, CoreId};

#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum StoreValue {
    Const(u64),
    /// Register plus a constant: `St B = r1 + 1`.
    RegPlus(String, u64),
}

#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum MemOp {
    Load { addr: Addr, reg: Option<String> },
    Store { addr: Addr, value: StoreValue },
    Fence,
    Acquire,
    Release,
    Sleep(u64),
    /// Reload `addr` until it holds `value`, stalling `backoff` cycles
    /// between attempts.
    SpinUntil { addr: Addr, value: u64, backoff: u64 },
}

impl MemOp {
    /// Whether the op commits to the trace (sleeps do not; spins commit one
    /// load per attempt).
    pub fn is_memory(&self) -> bool {
        !matches!(self, MemOp::Sleep(_))
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct InitLine {
    pub addr: Addr,
    pub value: u64,
    pub wts: u64,
    pub rts: u64,
    pub cached: Vec<CoreId>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ProgramSet {
    pub name: String,
    pub cores: Vec<Vec<MemOp>>,
    pub init: Vec<InitLine>,
    pub symbols: BTreeMap<String, Addr>,
}

/// Final register values keyed by (core, register).
pub type Outcome = BTreeMap<(CoreId, String), u64>;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum WorkloadError {
    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("unknown program `{0}`")]
    Unknown(String),
    #[error("bad parameter for `{name}`: {msg}")]
    Param { name: String, msg: String },
}

fn perr(line: usize, msg: impl Into<String>) -> WorkloadError {
    WorkloadError::Parse {
        line,
        msg: msg.into(),
    }
}

struct Symbols {
    map: BTreeMap<String, Addr>,
    next: u64,
}

impl Symbols {
    fn resolve(&mut self, tok: &str, line: usize) -> Result<Addr, WorkloadError> {
        if let Some(n) = tok.strip_prefix('#') {
            return n
                .parse()
                .map(Addr)
                .map_err(|_| perr(line, format!("bad literal address `{tok}`")));
        }
        if !tok.chars().next().is_some_and(|c| c.is_ascii_alphabetic() || c == '_')
            || !tok.chars().all(|c| c.is_ascii_alphanumeric() || c == '_')
        {
            return Err(perr(line, format!("bad address name `{tok}`")));
        }
        if let Some(a) = self.map.get(tok) {
            return Ok(*a);
        }
        let a = Addr(self.next);
        self.next += 1;
        self.map.insert(tok.to_string(), a);
        Ok(a)
    }
}

fn num(tok: Option<&&str>, line: usize, what: &str) -> Result<u64, WorkloadError> {
    let t = tok.ok_or_else(|| perr(line, format!("missing {what}")))?;
    t.parse()
        .map_err(|_| perr(line, format!("expected a number for {what}, got `{t}`")))
}

/// `#` starts a comment unless a digit follows (`#12` is a literal address).
fn strip_comment(line: &str) -> &str {
    let b = line.as_bytes();
    for (i, &c) in b.iter().enumerate() {
        if c == b'#' && !b.get(i + 1).is_some_and(u8::is_ascii_digit) {
            return &line[..i];
        }
    }
    line
}

fn is_reg(tok: &str) -> bool {
    tok.len() > 1 && tok.starts_with('r') && tok[1..].chars().all(|c| c.is_ascii_alphanumeric())
}

fn parse_op(words: &[&str], syms: &mut Symbols, line: usize) -> Result<MemOp, WorkloadError> {
    let bad = || perr(line, format!("cannot parse `{}`", words.join(" ")));
    match words {
        ["Fence"] => Ok(MemOp::Fence),
        ["Acq"] => Ok(MemOp::Acquire),
        ["Rel"] => Ok(MemOp::Release),
        ["Sleep", n] => Ok(MemOp::Sleep(num(Some(n), line, "sleep length")?)),
        ["Ld", a] => Ok(MemOp::Load {
            addr: syms.resolve(a, line)?,
            reg: None,
        }),
        ["Ld", a, "->", r] if is_reg(r) => Ok(MemOp::Load {
            addr: syms.resolve(a, line)?,
            reg: Some(r.to_string()),
        }),
        ["St", a] => Ok(MemOp::Store {
            addr: syms.resolve(a, line)?,
            value: StoreValue::Const(1),
        }),
        ["St", a, "=", v] => {
            let addr = syms.resolve(a, line)?;
            let value = if is_reg(v) {
                StoreValue::RegPlus(v.to_string(), 0)
            } else {
                StoreValue::Const(num(Some(v), line, "store value")?)
            };
            Ok(MemOp::Store { addr, value })
        }
        ["St", a, "=", r, "+", k] if is_reg(r) => Ok(MemOp::Store {
            addr: syms.resolve(a, line)?,
            value: StoreValue::RegPlus(r.to_string(), num(Some(k), line, "increment")?),
        }),
        ["SpinUntil", a, "==", v, rest @ ..] => {
            let addr = syms.resolve(a, line)?;
            let value = num(Some(v), line, "spin value")?;
            let backoff = match rest {
                [] => 0,
                ["sleep", n] => num(Some(n), line, "spin backoff")?,
                _ => return Err(bad()),
            };
            Ok(MemOp::SpinUntil {
                addr,
                value,
                backoff,
            })
        }
        _ => Err(bad()),
    }
}

fn parse_init(words: &[&str], syms: &mut Symbols, line: usize) -> Result<InitLine, WorkloadError> {
    let (first, mut rest) = words.split_first().ok_or_else(|| perr(line, "empty init line"))?;
    let mut init = InitLine {
        addr: syms.resolve(first, line)?,
        value: 0,
        wts: 0,
        rts: 0,
        cached: Vec::new(),
    };
    while let Some((key, tail)) = rest.split_first() {
        match *key {
            "=" => {
                init.value = num(tail.first(), line, "initial value")?;
                rest = &tail[1..];
            }
            "wts" => {
                init.wts = num(tail.first(), line, "wts")?;
                rest = &tail[1..];
            }
            "rts" => {
                init.rts = num(tail.first(), line, "rts")?;
                rest = &tail[1..];
            }
            "cached" => {
                for t in tail {
                    let c = t
                        .parse()
                        .map_err(|_| perr(line, format!("bad core id `{t}`")))?;
                    init.cached.push(c);
                }
                rest = &[];
            }
            other => return Err(perr(line, format!("unknown init key `{other}`"))),
        }
    }
    if init.wts > init.rts {
        return Err(perr(line, "init wts exceeds rts"));
    }
    Ok(init)
}

impl ProgramSet {
    pub fn parse(name: &str, text: &str) -> Result<ProgramSet, WorkloadError> {
        let mut syms = Symbols {
            map: BTreeMap::new(),
            next: 0,
        };
        let mut cores: BTreeMap<usize, Vec<MemOp>> = BTreeMap::new();
        let mut init = Vec::new();
        enum Section {
            None,
            Init,
            Core(usize),
        }
        let mut section = Section::None;
        for (i, raw) in text.lines().enumerate() {
            let line = i + 1;
            let body = strip_comment(raw).trim();
            if body.is_empty() {
                continue;
            }
            if let Some(h) = body.strip_prefix('[').and_then(|b| b.strip_suffix(']')) {
                let h: Vec<&str> = h.split_whitespace().collect();
                section = match h.as_slice() {
                    ["init"] => Section::Init,
                    ["core", n] => {
                        let c: usize = n.parse().map_err(|_| perr(line, format!("bad core `{n}`")))?;
                        if cores.contains_key(&c) {
                            return Err(perr(line, format!("core {c} declared twice")));
                        }
                        cores.insert(c, Vec::new());
                        Section::Core(c)
                    }
                    _ => return Err(perr(line, format!("unknown section `{body}`"))),
                };
                continue;
            }
            let words: Vec<&str> = body.split_whitespace().collect();
            match section {
                Section::None => return Err(perr(line, "op outside of a section")),
                Section::Init => init.push(parse_init(&words, &mut syms, line)?),
                Section::Core(c) => {
                    let op = parse_op(&words, &mut syms, line)?;
                    cores.get_mut(&c).unwrap().push(op);
                }
            }
        }
        if cores.is_empty() {
            return Err(perr(0, "no [core N] sections"));
        }
        let n = cores.keys().max().unwrap() + 1;
        if cores.len() != n {
            return Err(perr(0, "core sections must be numbered 0..N without gaps"));
        }
        for i in &init {
            if let Some(&c) = i.cached.iter().find(|&&c| c >= n) {
                return Err(perr(0, format!("init caches line in missing core {c}")));
            }
        }
        Ok(ProgramSet {
            name: name.to_string(),
            cores: cores.into_values().collect(),
            init,
            symbols: syms.map,
        })
    }

    pub fn num_cores(&self) -> usize {
        self.cores.len()
    }

    /// Static count of ops that commit to the trace.
    pub fn total_ops(&self) -> usize {
        self.cores
            .iter()
            .flat_map(|c| c.iter())
            .filter(|o| o.is_memory())
            .count()
    }

    pub fn has_spin(&self) -> bool {
        self.cores
            .iter()
            .flatten()
            .any(|o| matches!(o, MemOp::SpinUntil { .. }))
    }

    pub fn has_register_stores(&self) -> bool {
        self.cores.iter().flatten().any(|o| {
            matches!(
                o,
                MemOp::Store {
                    value: StoreValue::RegPlus(..),
                    ..
                }
            )
        })
    }

    pub fn addr(&self, name: &str) -> Option<Addr> {
        self.symbols.get(name).copied()
    }

    pub fn addr_name(&self, addr: Addr) -> String {
        self.symbols
            .iter()
            .find(|(_, a)| **a == addr)
            .map(|(n, _)| n.clone())
            .unwrap_or_else(|| format!("#{}", addr.0))
    }

    /// Every distinct address the program touches.
    pub fn addresses(&self) -> Vec<Addr> {
        let mut v: Vec<Addr> = self
            .cores
            .iter()
            .flatten()
            .filter_map(|o| match o {
                MemOp::Load { addr, .. } | MemOp::Store { addr, .. } | MemOp::SpinUntil { addr, .. } => Some(*addr),
                _ => None,
            })
            .chain(self.init.iter().map(|i| i.addr))
            .collect();
        v.sort();
        v.dedup();
        v
    }
}

impl fmt::Display for ProgramSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let name = |a: &Addr| self.addr_name(*a);
        if !self.init.is_empty() {
            writeln!(f, "[init]")?;
            for i in &self.init {
                write!(f, "{} = {} wts {} rts {}", name(&i.addr), i.value, i.wts, i.rts)?;
                if !i.cached.is_empty() {
                    write!(f, " cached")?;
                    for c in &i.cached {
                        write!(f, " {c}")?;
                    }
                }
                writeln!(f)?;
            }
        }
        for (c, ops) in self.cores.iter().enumerate() {
            writeln!(f, "[core {c}]")?;
            for op in ops {
                match op {
                    MemOp::Load { addr, reg: None } => writeln!(f, "Ld {}", name(addr))?,
                    MemOp::Load { addr, reg: Some(r) } => writeln!(f, "Ld {} -> {r}", name(addr))?,
                    MemOp::Store {
                        addr,
                        value: StoreValue::Const(v),
                    } => writeln!(f, "St {} = {v}", name(addr))?,
                    MemOp::Store {
                        addr,
                        value: StoreValue::RegPlus(r, k),
                    } => writeln!(f, "St {} = {r} + {k}", name(addr))?,
                    MemOp::Fence => writeln!(f, "Fence")?,
                    MemOp::Acquire => writeln!(f, "Acq")?,
                    MemOp::Release => writeln!(f, "Rel")?,
                    MemOp::Sleep(n) => writeln!(f, "Sleep {n}")?,
                    MemOp::SpinUntil {
                        addr,
                        value,
                        backoff,
                    } => writeln!(f, "SpinUntil {} == {value} sleep {backoff}", name(addr))?,
                }
            }
        }
        Ok(())
    }
}

const LITMUS: &[(&str, &str)] = &[
    ("sb", include_str!("../litmus/sb.litmus")),
    ("sb_fence", include_str!("../litmus/sb_fence.litmus")),
    ("mp", include_str!("../litmus/mp.litmus")),
    ("mp_fence", include_str!("../litmus/mp_fence.litmus")),
    ("mp_relacq", include_str!("../litmus/mp_relacq.litmus")),
    ("lb", include_str!("../litmus/lb.litmus")),
    ("iriw", include_str!("../litmus/iriw.litmus")),
    ("iriw_fence", include_str!("../litmus/iriw_fence.litmus")),
    ("wrc", include_str!("../litmus/wrc.litmus")),
    ("rwc", include_str!("../litmus/rwc.litmus")),
    ("isa2", include_str!("../litmus/isa2.litmus")),
    ("corr", include_str!("../litmus/corr.litmus")),
    ("cowr", include_str!("../litmus/cowr.litmus")),
    ("coww", include_str!("../litmus/coww.litmus")),
    ("listing1", include_str!("../litmus/listing1.litmus")),
    ("listing2", include_str!("../litmus/listing2.litmus")),
];

pub fn litmus_names() -> Vec<&'static str> {
    LITMUS.iter().map(|(n, _)| *n).collect()
}

pub fn litmus_corpus() -> Vec<ProgramSet> {
    LITMUS
        .iter()
        .map(|(n, t)| ProgramSet::parse(n, t).expect("bundled litmus test parses"))
        .collect()
}

pub const FIG1: &str = "\
[core 0]
St A = 1
Ld B -> r1
[core 1]
St B = 1
Ld A -> r2
";

pub const FIG2: &str = "\
[init]
A = 0 wts 0 rts 5 cached 0 1
B = 0 wts 0 rts 10 cached 0 1
[core 0]
St B = 1
Ld B -> r1
Ld A -> r2
[core 1]
St A = 2
Fence
Ld B -> r3
";

pub const DEFAULT_SPIN_DELAY: u64 = 3000;
pub const DEFAULT_LEASE_ITERS: u64 = 10;

/// Core 0 spins on `done`; core 1 sets it after `delay` cycles.
pub fn spin(delay: u64) -> ProgramSet {
    let text = format!(
        "[init]\ndone = 0 wts 0 rts 10 cached 0 1\n[core 0]\nSpinUntil done == 1 sleep 1\n[core 1]\nSleep {delay}\nSt done = 1\n"
    );
    ProgramSet::parse(&format!("spin:{delay}"), &text).expect("spin program")
}

/// Both cores print A, increment B and fence, `iters` times.
pub fn lease_case(iters: u64) -> ProgramSet {
    let mut text = String::new();
    for c in 0..2 {
        text.push_str(&format!("[core {c}]\n"));
        for _ in 0..iters {
            text.push_str("Ld A\nLd B -> r1\nSt B = r1 + 1\nFence\n");
        }
    }
    ProgramSet::parse(&format!("lease_case:{iters}"), &text).expect("lease program")
}

/// Ops per iteration of [`lease_case`], for mapping program indices back to
/// loop iterations.
pub const LEASE_CASE_OPS_PER_ITER: usize = 4;

fn param(name: &str, arg: Option<&str>, default: u64) -> Result<u64, WorkloadError> {
    match arg {
        None => Ok(default),
        Some(a) => a.parse().map_err(|_| WorkloadError::Param {
            name: name.to_string(),
            msg: format!("`{a}` is not a number"),
        }),
    }
}

/// Built-in program by name. `spin` and `lease_case` take an optional
/// `:N` parameter (spin delay, loop iterations).
pub fn builtin(name: &str) -> Result<ProgramSet, WorkloadError> {
    let (base, arg) = match name.split_once(':') {
        Some((b, a)) => (b, Some(a)),
        None => (name, None),
    };
    match base {
        "fig1" => ProgramSet::parse("fig1", FIG1),
        "fig2" => ProgramSet::parse("fig2", FIG2),
        "spin" => Ok(spin(param(base, arg, DEFAULT_SPIN_DELAY)?)),
        "lease_case" => Ok(lease_case(param(base, arg, DEFAULT_LEASE_ITERS)?)),
        _ => LITMUS
            .iter()
            .find(|(n, _)| *n == base)
            .map(|(n, t)| ProgramSet::parse(n, t).expect("bundled litmus test parses"))
            .ok_or_else(|| WorkloadError::Unknown(name.to_string())),
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SynthParams {
    pub cores: usize,
    /// Total footprint in lines: the hot set plus equal private regions.
    pub lines: u64,
    pub ops_per_core: usize,
    pub write_frac: f64,
    pub hot_lines: u64,
    /// Fraction of memory ops aimed at the hot shared set.
    pub hot_frac: f64,
    pub fence_frac: f64,
    pub seed: u64,
}

impl Default for SynthParams {
    fn default() -> Self {
        SynthParams {
            cores: 4,
            lines: 64,
            ops_per_core: 200,
            write_frac: 0.2,
            hot_lines: 4,
            hot_frac: 0.5,
            fence_frac: 0.05,
            seed: 0,
        }
    }
}

impl SynthParams {
    pub fn validate(&self) -> Result<(), WorkloadError> {
        let err = |msg: &str| {
            Err(WorkloadError::Param {
                name: "synth".into(),
                msg: msg.into(),
            })
        };
        if self.cores == 0 {
            return err("cores must be positive");
        }
        if self.hot_lines == 0 && self.hot_frac > 0.0 {
            return err("hot_frac > 0 needs hot_lines > 0");
        }
        if self.lines < self.hot_lines {
            return err("lines must cover the hot set");
        }
        if self.lines == self.hot_lines && self.hot_frac < 1.0 && self.ops_per_core > 0 {
            return err("no private lines left for the cold fraction");
        }
        for f in [self.write_frac, self.hot_frac, self.fence_frac] {
            if !(0.0..=1.0).contains(&f) {
                return err("fractions must lie in [0, 1]");
            }
        }
        Ok(())
    }
}

/// Seeded shared-heap workload: a hot set every core touches plus one
/// private region per core.
pub fn synth(p: &SynthParams) -> Result<ProgramSet, WorkloadError> {
    p.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(p.seed);
    let private = (p.lines - p.hot_lines) / p.cores as u64;
    if private == 0 && p.hot_frac < 1.0 && p.ops_per_core > 0 {
        return Err(WorkloadError::Param {
            name: "synth".into(),
            msg: "fewer private lines than cores".into(),
        });
    }
    let mut cores = Vec::with_capacity(p.cores);
    for c in 0..p.cores {
        let mut ops = Vec::with_capacity(p.ops_per_core);
        for i in 0..p.ops_per_core {
            if rng.gen_bool(p.fence_frac) {
                ops.push(match rng.gen_range(0..3) {
                    0 => MemOp::Fence,
                    1 => MemOp::Acquire,
                    _ => MemOp::Release,
                });
                continue;
            }
            let addr = if rng.gen_bool(p.hot_frac) {
                Addr(rng.gen_range(0..p.hot_lines))
            } else {
                Addr(p.hot_lines + c as u64 * private + rng.gen_range(0..private))
            };
            if rng.gen_bool(p.write_frac) {
                let v = (c as u64 + 1) * 1_000_000 + i as u64;
                ops.push(MemOp::Store {
                    addr,
                    value: StoreValue::Const(v),
                });
            } else {
                ops.push(MemOp::Load { addr, reg: None });
            }
        }
        cores.push(ops);
    }
    Ok(ProgramSet {
        name: format!("synth:{}", p.seed),
        cores,
        init: Vec::new(),
        symbols: BTreeMap::new(),
    })
}
