//! Per-core livelock detector: an address history buffer (AHB) counting
//! repeated loads to shared lines, plus an adaptive threshold that backs off
//! when checks keep coming back unchanged.

use serde::{Deserialize, Serialize};

use crate::cachemem::Addr;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct DetectorParams {
    pub ahb_entries: usize,
    pub min_count: u32,
    pub max_count: u32,
    pub check_thresh: u32,
}

impl Default for DetectorParams {
    fn default() -> Self {
        DetectorParams {
            ahb_entries: 8,
            min_count: 100,
            max_count: 800,
            check_thresh: 10,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct AhbEntry {
    pub addr: Addr,
    pub access_count: u32,
}

#[derive(Clone, Debug)]
pub struct DetectorState {
    params: DetectorParams,
    // Most recently used first.
    ahb: Vec<AhbEntry>,
    thresh_count: u32,
    check_count: u32,
}

impl DetectorState {
    pub fn new(params: DetectorParams) -> Self {
        DetectorState {
            params,
            ahb: Vec::with_capacity(params.ahb_entries),
            thresh_count: params.min_count,
            check_count: 0,
        }
    }

    pub fn thresh_count(&self) -> u32 {
        self.thresh_count
    }

    pub fn entries(&self) -> &[AhbEntry] {
        &self.ahb
    }

    pub fn count_for(&self, addr: Addr) -> Option<u32> {
        self.ahb
            .iter()
            .find(|e| e.addr == addr)
            .map(|e| e.access_count)
    }

    /// Called for every load that hits a shared L1 line. Returns whether a
    /// check request should be issued for `addr`.
    pub fn on_shared_load(&mut self, addr: Addr) -> bool {
        if let Some(pos) = self.ahb.iter().position(|e| e.addr == addr) {
            let mut entry = self.ahb.remove(pos);
            entry.access_count += 1;
            let fire = entry.access_count >= self.thresh_count;
            if fire {
                entry.access_count = 0;
            }
            self.ahb.insert(0, entry);
            fire
        } else {
            if self.params.ahb_entries == 0 {
                return false;
            }
            if self.ahb.len() == self.params.ahb_entries {
                self.ahb.pop();
            }
            self.ahb.insert(
                0,
                AhbEntry {
                    addr,
                    access_count: 0,
                },
            );
            false
        }
    }

    /// Adaptive threshold update for one check response.
    pub fn on_check_response(&mut self, updated: bool) {
        if updated {
            self.thresh_count = self.params.min_count;
            self.check_count = 0;
        } else {
            self.check_count += 1;
            if self.check_count == self.params.check_thresh
                && self.thresh_count < self.params.max_count
            {
                self.thresh_count = (self.thresh_count * 2).min(self.params.max_count);
                self.check_count = 0;
            }
        }
    }

    /// The core's read timestamp moved because of a memory access: it is not
    /// spinning, so forget all counts.
    pub fn reset_on_lts_advance(&mut self) {
        for e in &mut self.ahb {
            e.access_count = 0;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn det() -> DetectorState {
        DetectorState::new(DetectorParams::default())
    }

    #[test]
    fn hundredth_hit_fires() {
        let mut d = det();
        let a = Addr(1);
        assert!(!d.on_shared_load(a), "allocation never fires");
        assert_eq!(d.count_for(a), Some(0));
        for i in 1..100 {
            assert!(!d.on_shared_load(a), "fired early at hit {i}");
        }
        assert!(d.on_shared_load(a));
        assert_eq!(d.count_for(a), Some(0));
    }

    #[test]
    fn round_robin_over_capacity_never_saturates() {
        let mut d = det();
        for i in 0..10_000u64 {
            assert!(!d.on_shared_load(Addr(i % 9)));
        }
        assert!(d.entries().iter().all(|e| e.access_count == 0));
    }

    #[test]
    fn lru_keeps_hot_entry() {
        let mut d = det();
        d.on_shared_load(Addr(0));
        for i in 1..=20u64 {
            d.on_shared_load(Addr(i));
            d.on_shared_load(Addr(0));
        }
        assert!(d.count_for(Addr(0)).unwrap() >= 20);
        assert_eq!(d.entries().len(), 8);
    }

    #[test]
    fn update_resets_threshold() {
        let mut d = det();
        d.thresh_count = 800;
        d.check_count = 4;
        d.on_check_response(true);
        assert_eq!(d.thresh_count(), 100);
        assert_eq!(d.check_count, 0);
    }

    #[test]
    fn ten_stale_checks_double() {
        let mut d = det();
        for _ in 0..9 {
            d.on_check_response(false);
        }
        assert_eq!(d.thresh_count(), 100);
        d.on_check_response(false);
        assert_eq!(d.thresh_count(), 200);
    }

    #[test]
    fn doubling_trajectory_caps() {
        let mut d = det();
        let mut seen = vec![d.thresh_count()];
        for _ in 0..40 {
            d.on_check_response(false);
            if *seen.last().unwrap() != d.thresh_count() {
                seen.push(d.thresh_count());
            }
        }
        assert_eq!(seen, vec![100, 200, 400, 800]);
        for _ in 0..100 {
            d.on_check_response(false);
        }
        assert_eq!(d.thresh_count(), 800);
    }

    #[test]
    fn lts_advance_clears_counts_but_keeps_entries() {
        let mut d = det();
        d.on_shared_load(Addr(1));
        d.on_shared_load(Addr(2));
        for _ in 0..57 {
            d.on_shared_load(Addr(1));
        }
        for _ in 0..3 {
            d.on_shared_load(Addr(2));
        }
        assert_eq!(d.count_for(Addr(1)), Some(57));
        d.reset_on_lts_advance();
        assert_eq!(d.count_for(Addr(1)), Some(0));
        assert_eq!(d.count_for(Addr(2)), Some(0));
        let mut empty = det();
        empty.reset_on_lts_advance();
        assert!(empty.entries().is_empty());
    }
}
