//! Per-core timestamp policy for SC, TSO, PSO and RC.
//!
//! A [`CoreClock`] decides the logical commit timestamp of every operation a
//! core performs. The protocol layer supplies the constraints coming from the
//! cache line (its `wts`, and the minimum legal store timestamp); the clock
//! folds in the program-order constraints of the selected model.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::chrono::Timestamp;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MemoryModel {
    Sc,
    Tso,
    Pso,
    Rc,
}

impl MemoryModel {
    pub const ALL: [MemoryModel; 4] = [
        MemoryModel::Sc,
        MemoryModel::Tso,
        MemoryModel::Pso,
        MemoryModel::Rc,
    ];

    pub fn name(self) -> &'static str {
        match self {
            MemoryModel::Sc => "sc",
            MemoryModel::Tso => "tso",
            MemoryModel::Pso => "pso",
            MemoryModel::Rc => "rc",
        }
    }

    /// Whether stores may retire into a store buffer under this model.
    pub fn relaxes_store_load(self) -> bool {
        !matches!(self, MemoryModel::Sc)
    }
}

impl fmt::Display for MemoryModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for MemoryModel {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "sc" => Ok(MemoryModel::Sc),
            "tso" => Ok(MemoryModel::Tso),
            "pso" => Ok(MemoryModel::Pso),
            "rc" => Ok(MemoryModel::Rc),
            other => Err(format!("unknown memory model `{other}` (expected sc|tso|pso|rc)")),
        }
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum ClockError {
    #[error("{op} is not defined under {model}")]
    Unsupported { op: &'static str, model: MemoryModel },
}

/// Timestamp state of one core.
///
/// Only the fields relevant to `model` move: `pts` for SC, `lts`/`sts` for
/// TSO and PSO, `acquirets`/`releasets`/`maxts` for RC.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CoreClock {
    pub model: MemoryModel,
    pub pts: Timestamp,
    pub lts: Timestamp,
    pub sts: Timestamp,
    pub acquirets: Timestamp,
    pub releasets: Timestamp,
    pub maxts: Timestamp,
}

impl CoreClock {
    pub fn new(model: MemoryModel) -> Self {
        CoreClock {
            model,
            pts: Timestamp::ZERO,
            lts: Timestamp::ZERO,
            sts: Timestamp::ZERO,
            acquirets: Timestamp::ZERO,
            releasets: Timestamp::ZERO,
            maxts: Timestamp::ZERO,
        }
    }

    /// The timestamp a load must be able to read at: a shared line is only
    /// usable while this is `<= rts`.
    pub fn read_ts(&self) -> Timestamp {
        match self.model {
            MemoryModel::Sc => self.pts,
            MemoryModel::Tso | MemoryModel::Pso => self.lts,
            MemoryModel::Rc => self.acquirets,
        }
    }

    /// Largest timestamp this core has produced or observed.
    pub fn max_ts(&self) -> Timestamp {
        match self.model {
            MemoryModel::Sc => self.pts,
            MemoryModel::Tso | MemoryModel::Pso => self.lts.max(self.sts),
            MemoryModel::Rc => self.maxts.max(self.acquirets).max(self.releasets),
        }
    }

    /// Commit a load of a line valid over `[line_wts, line_rts]`.
    ///
    /// `dirty_by_self` marks data this core wrote and still holds privately
    /// (a dirty L1 line or a store-buffer hit); such loads need not move the
    /// load timestamp up to `wts` under the relaxed models.
    pub fn commit_load(
        &mut self,
        line_wts: Timestamp,
        line_rts: Timestamp,
        dirty_by_self: bool,
    ) -> Timestamp {
        let ts = match self.model {
            MemoryModel::Sc => {
                self.pts = self.pts.max(line_wts);
                self.pts
            }
            MemoryModel::Tso | MemoryModel::Pso => {
                if !dirty_by_self {
                    self.lts = self.lts.max(line_wts);
                }
                self.lts
            }
            MemoryModel::Rc => {
                let ts = if dirty_by_self {
                    self.acquirets
                } else {
                    self.acquirets.max(line_wts)
                };
                self.maxts = self.maxts.max(ts);
                ts
            }
        };
        debug_assert!(
            dirty_by_self || ts <= line_rts,
            "load committed at {ts} outside lease ending {line_rts}"
        );
        ts
    }

    /// Commit a store that the protocol allows no earlier than `required_floor`.
    pub fn commit_store(&mut self, required_floor: Timestamp) -> Timestamp {
        match self.model {
            MemoryModel::Sc => {
                self.pts = self.pts.max(required_floor);
                self.pts
            }
            MemoryModel::Tso => {
                let ts = self.sts.max(self.lts).max(required_floor);
                self.sts = ts;
                ts
            }
            MemoryModel::Pso => {
                let ts = self.lts.max(required_floor);
                self.sts = self.sts.max(ts);
                ts
            }
            MemoryModel::Rc => {
                let ts = self.acquirets.max(required_floor);
                self.maxts = self.maxts.max(ts);
                ts
            }
        }
    }

    /// TSO/PSO fence: synchronise the load timestamp with the store timestamp.
    pub fn apply_fence(&mut self) -> Result<Timestamp, ClockError> {
        match self.model {
            MemoryModel::Tso | MemoryModel::Pso => {
                self.lts = self.lts.max(self.sts);
                Ok(self.lts)
            }
            model => Err(ClockError::Unsupported { op: "fence", model }),
        }
    }

    pub fn apply_release(&mut self) -> Result<Timestamp, ClockError> {
        match self.model {
            MemoryModel::Rc => {
                self.releasets = self.releasets.max(self.maxts);
                Ok(self.releasets)
            }
            model => Err(ClockError::Unsupported {
                op: "release",
                model,
            }),
        }
    }

    /// RC acquire. `maxts` is raised along with `acquirets` so that a release
    /// issued right after an acquire is still ordered after it.
    pub fn apply_acquire(&mut self) -> Result<Timestamp, ClockError> {
        match self.model {
            MemoryModel::Rc => {
                self.acquirets = self.acquirets.max(self.releasets);
                self.maxts = self.maxts.max(self.acquirets);
                Ok(self.acquirets)
            }
            model => Err(ClockError::Unsupported {
                op: "acquire",
                model,
            }),
        }
    }

    /// Periodic forced advance of the read timestamp, so stale shared copies
    /// eventually expire.
    pub fn self_increment(&mut self) {
        match self.model {
            MemoryModel::Sc => self.pts = self.pts.plus(1),
            MemoryModel::Tso | MemoryModel::Pso => self.lts = self.lts.plus(1),
            MemoryModel::Rc => {
                self.acquirets = self.acquirets.plus(1);
                self.maxts = self.maxts.max(self.acquirets);
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ts(v: u64) -> Timestamp {
        Timestamp(v)
    }

    #[test]
    fn tso_clean_load_keeps_lts_inside_lease() {
        let mut c = CoreClock::new(MemoryModel::Tso);
        assert_eq!(c.commit_load(ts(0), ts(5), false), ts(0));
        assert_eq!(c.lts, ts(0));
    }

    #[test]
    fn tso_dirty_load_does_not_jump_to_wts() {
        let mut c = CoreClock::new(MemoryModel::Tso);
        assert_eq!(c.commit_load(ts(11), ts(11), true), ts(0));
        assert_eq!(c.lts, ts(0));
    }

    #[test]
    fn sc_load_keeps_pts_when_above_wts() {
        let mut c = CoreClock::new(MemoryModel::Sc);
        c.pts = ts(1);
        assert_eq!(c.commit_load(ts(0), ts(11), false), ts(1));
        assert_eq!(c.pts, ts(1));
    }

    #[test]
    fn tso_store_jumps_sts_only() {
        let mut c = CoreClock::new(MemoryModel::Tso);
        assert_eq!(c.commit_store(ts(11)), ts(11));
        assert_eq!((c.sts, c.lts), (ts(11), ts(0)));
    }

    #[test]
    fn sc_store_moves_pts() {
        let mut c = CoreClock::new(MemoryModel::Sc);
        c.pts = ts(1);
        assert_eq!(c.commit_store(ts(12)), ts(12));
        assert_eq!(c.pts, ts(12));
    }

    #[test]
    fn pso_store_takes_minimal_ts() {
        let mut c = CoreClock::new(MemoryModel::Pso);
        c.lts = ts(3);
        c.sts = ts(9);
        assert_eq!(c.commit_store(ts(4)), ts(4));
        assert_eq!(c.sts, ts(9));
    }

    #[test]
    fn fence_cases() {
        let mut c = CoreClock::new(MemoryModel::Tso);
        c.sts = ts(6);
        assert_eq!(c.apply_fence(), Ok(ts(6)));
        assert_eq!(c.apply_fence(), Ok(ts(6)));
        c.lts = ts(9);
        c.sts = ts(2);
        assert_eq!(c.apply_fence(), Ok(ts(9)));
        assert!(CoreClock::new(MemoryModel::Sc).apply_fence().is_err());
        assert!(CoreClock::new(MemoryModel::Rc).apply_fence().is_err());
    }

    #[test]
    fn release_and_acquire() {
        let mut c = CoreClock::new(MemoryModel::Rc);
        assert_eq!(c.apply_release(), Ok(ts(0)));
        c.maxts = ts(7);
        c.releasets = ts(2);
        assert_eq!(c.apply_release(), Ok(ts(7)));
        assert_eq!(c.acquirets, ts(0));
        assert_eq!(c.apply_acquire(), Ok(ts(7)));
        assert!(CoreClock::new(MemoryModel::Tso).apply_acquire().is_err());
        assert!(CoreClock::new(MemoryModel::Pso).apply_release().is_err());
    }

    #[test]
    fn rc_ops_respect_acquire_floor() {
        let mut c = CoreClock::new(MemoryModel::Rc);
        c.acquirets = ts(5);
        assert_eq!(c.commit_load(ts(2), ts(9), false), ts(5));
        assert_eq!(c.commit_load(ts(7), ts(9), false), ts(7));
        assert_eq!(c.commit_store(ts(3)), ts(5));
        assert_eq!(c.maxts, ts(7));
    }

    #[test]
    fn model_parsing() {
        assert_eq!("TSO".parse::<MemoryModel>(), Ok(MemoryModel::Tso));
        assert!("x86".parse::<MemoryModel>().is_err());
    }
}
