//! Logical timestamps and the physiological-time total order.
//!
//! Every memory operation commits at a logical timestamp and at a physical
//! simulator step. Global memory order is the lexicographic order on that
//! pair, with `(core, seq)` as the final tie-break for operations that share
//! both components (only ever non-conflicting ones).

use std::cmp::Ordering;
use std::fmt;

use serde::{Deserialize, Serialize};

/// A logical tick. 64 bits wide; rollover is not modelled.
#[derive(
    Clone, Copy, Debug, Default, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize,
)]
#[serde(transparent)]
pub struct Timestamp(pub u64);

impl Timestamp {
    pub const ZERO: Timestamp = Timestamp(0);

    pub fn get(self) -> u64 {
        self.0
    }

    /// `self + n`, used for `rts + 1` floors and `ts + lease` extensions.
    pub fn plus(self, n: u64) -> Timestamp {
        Timestamp(self.0 + n)
    }
}

impl fmt::Display for Timestamp {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

impl From<u64> for Timestamp {
    fn from(v: u64) -> Self {
        Timestamp(v)
    }
}

/// Tie-break key for operations with identical `(ts, pt)`.
#[derive(
    Clone, Copy, Debug, Default, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize,
)]
pub struct TieKey {
    pub core: usize,
    pub seq: u64,
}

/// Logical commit timestamp paired with the physical commit step.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct PhysioTime {
    pub ts: Timestamp,
    pub pt: u64,
    pub tie: TieKey,
}

impl PhysioTime {
    pub fn new(ts: impl Into<Timestamp>, pt: u64) -> Self {
        PhysioTime {
            ts: ts.into(),
            pt,
            tie: TieKey::default(),
        }
    }

    pub fn with_tie(mut self, core: usize, seq: u64) -> Self {
        self.tie = TieKey { core, seq };
        self
    }
}

impl Ord for PhysioTime {
    fn cmp(&self, other: &Self) -> Ordering {
        self.ts
            .cmp(&other.ts)
            .then(self.pt.cmp(&other.pt))
            .then(self.tie.cmp(&other.tie))
    }
}

impl PartialOrd for PhysioTime {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl fmt::Display for PhysioTime {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({}, {})", self.ts, self.pt)
    }
}

/// `a <pl b`: smaller timestamp, or equal timestamp and earlier physical step,
/// or both equal and an earlier tie-break key.
pub fn physio_less(a: &PhysioTime, b: &PhysioTime) -> bool {
    a < b
}
