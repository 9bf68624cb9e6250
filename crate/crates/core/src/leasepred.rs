//! LLC-side dynamic lease predictor.
//!
//! Each LLC line keeps a 2-bit lease code. Writes reset it to the minimum;
//! a renewal that echoes the current lease back doubles it, up to the cap.

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const MIN_LEASE: u64 = 8;
pub const MAX_LEASE: u64 = 64;

/// One of the four encodable lease values {8, 16, 32, 64}.
#[derive(
    Clone, Copy, Debug, Default, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize,
)]
#[serde(try_from = "u64", into = "u64")]
pub struct LeaseCode(u8);

#[derive(Debug, Error, PartialEq, Eq)]
#[error("lease {0} is not encodable (expected one of 8, 16, 32, 64)")]
pub struct LeaseError(pub u64);

impl LeaseCode {
    pub const MIN: LeaseCode = LeaseCode(0);
    pub const MAX: LeaseCode = LeaseCode(3);

    pub fn from_value(v: u64) -> Result<LeaseCode, LeaseError> {
        match v {
            8 => Ok(LeaseCode(0)),
            16 => Ok(LeaseCode(1)),
            32 => Ok(LeaseCode(2)),
            64 => Ok(LeaseCode(3)),
            _ => Err(LeaseError(v)),
        }
    }

    pub fn value(self) -> u64 {
        MIN_LEASE << self.0
    }

    /// The raw 2-bit code.
    pub fn bits(self) -> u8 {
        self.0
    }

    fn doubled(self) -> LeaseCode {
        LeaseCode((self.0 + 1).min(Self::MAX.0))
    }
}

impl TryFrom<u64> for LeaseCode {
    type Error = LeaseError;
    fn try_from(v: u64) -> Result<Self, Self::Error> {
        LeaseCode::from_value(v)
    }
}

impl From<LeaseCode> for u64 {
    fn from(c: LeaseCode) -> u64 {
        c.value()
    }
}

impl fmt::Display for LeaseCode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.value())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum LlcRequest {
    Write,
    Read,
    Renew,
}

/// Update `cur_lease` for one LLC request and return the lease to grant.
pub fn predict(cur_lease: &mut LeaseCode, req: LlcRequest, req_lease: LeaseCode) -> LeaseCode {
    match req {
        LlcRequest::Write => *cur_lease = LeaseCode::MIN,
        LlcRequest::Renew if req_lease == *cur_lease && *cur_lease < LeaseCode::MAX => {
            *cur_lease = cur_lease.doubled();
        }
        _ => {}
    }
    *cur_lease
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn lc(v: u64) -> LeaseCode {
        LeaseCode::from_value(v).unwrap()
    }

    #[test]
    fn write_resets_to_min() {
        let mut cur = lc(64);
        assert_eq!(predict(&mut cur, LlcRequest::Write, lc(32)), lc(8));
        assert_eq!(cur, lc(8));
    }

    #[test]
    fn matched_renew_doubles() {
        let mut cur = lc(8);
        assert_eq!(predict(&mut cur, LlcRequest::Renew, lc(8)), lc(16));
    }

    #[test]
    fn mismatched_renew_keeps_lease() {
        let mut cur = lc(32);
        assert_eq!(predict(&mut cur, LlcRequest::Renew, lc(8)), lc(32));
    }

    #[test]
    fn renew_saturates_at_max() {
        let mut cur = lc(64);
        assert_eq!(predict(&mut cur, LlcRequest::Renew, lc(64)), lc(64));
    }

    #[test]
    fn read_never_changes_state() {
        let mut cur = lc(16);
        assert_eq!(predict(&mut cur, LlcRequest::Read, LeaseCode::MIN), lc(16));
    }

    #[test]
    fn encoding() {
        assert_eq!(LeaseCode::MIN.value(), 8);
        assert_eq!(LeaseCode::MAX.value(), 64);
        assert_eq!(lc(32).bits(), 2);
        assert_eq!(LeaseCode::from_value(10), Err(LeaseError(10)));
        assert!(LeaseCode::from_value(128).is_err());
    }

    fn req() -> impl Strategy<Value = (LlcRequest, u8)> {
        (
            prop_oneof![
                Just(LlcRequest::Write),
                Just(LlcRequest::Read),
                Just(LlcRequest::Renew)
            ],
            0u8..4,
        )
    }

    proptest! {
        // The lease walks {8,16,32,64}: writes teleport to 8, matched renewals
        // climb exactly one step, nothing else moves it.
        #[test]
        fn lease_walk(reqs in proptest::collection::vec(req(), 0..64)) {
            let mut cur = LeaseCode::MIN;
            for (kind, bits) in reqs {
                let before = cur;
                let out = predict(&mut cur, kind, LeaseCode(bits));
                prop_assert_eq!(out, cur);
                prop_assert!([8, 16, 32, 64].contains(&cur.value()));
                match kind {
                    LlcRequest::Write => prop_assert_eq!(cur, LeaseCode::MIN),
                    LlcRequest::Read => prop_assert_eq!(cur, before),
                    LlcRequest::Renew => {
                        if bits == before.bits() && before < LeaseCode::MAX {
                            prop_assert_eq!(cur.value(), before.value() * 2);
                        } else {
                            prop_assert_eq!(cur, before);
                        }
                    }
                }
            }
        }
    }
}
