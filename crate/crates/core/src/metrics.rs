//! Per-run report: identity, cycle count, renew rate, traffic breakdown and
//! timestamp growth.

use serde::{Deserialize, Serialize};

use crate::chrono::Timestamp;
use crate::config::SimConfig;
use crate::engine::fabric::{Fabric, ProtocolCounters};
use crate::engine::network::{ClassCounters, TrafficLedger};
use crate::engine::{OpKind, TraceOp};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub config: String,
    pub protocol: String,
    pub model: String,
    pub mesi: bool,
    pub livelock_detector: bool,
    pub lease_predictor: bool,
    pub static_lease: u64,
    pub self_increment_period: u64,
    pub cores: usize,
    pub program: String,
    pub seed: u64,
    pub cycles: u64,
    pub committed_ops: u64,
    pub loads: u64,
    pub stores: u64,
    pub counters: ProtocolCounters,
    /// Renew requests over LLC accesses.
    pub renew_rate: f64,
    pub traffic: TrafficLedger,
    pub total_traffic: ClassCounters,
    pub max_ts: Timestamp,
    /// `max_ts` over committed loads and stores.
    pub ts_increase_rate: f64,
}

fn ratio(a: u64, b: u64) -> f64 {
    if b == 0 {
        0.0
    } else {
        a as f64 / b as f64
    }
}

impl MetricsReport {
    pub fn build(
        cfg: &SimConfig,
        program: &str,
        seed: u64,
        cycles: u64,
        trace: &[TraceOp],
        fab: &Fabric,
        max_ts: Timestamp,
    ) -> MetricsReport {
        let loads = trace.iter().filter(|o| o.kind == OpKind::Load).count() as u64;
        let stores = trace.iter().filter(|o| o.kind == OpKind::Store).count() as u64;
        let c = fab.counters;
        MetricsReport {
            config: cfg.label(),
            protocol: cfg.protocol.to_string(),
            model: cfg.model.name().to_string(),
            mesi: cfg.mesi,
            livelock_detector: cfg.livelock_detector,
            lease_predictor: cfg.lease_predictor,
            static_lease: cfg.static_lease,
            self_increment_period: cfg.effective_self_increment(),
            cores: cfg.cores,
            program: program.to_string(),
            seed,
            cycles,
            committed_ops: trace.len() as u64,
            loads,
            stores,
            counters: c,
            renew_rate: ratio(c.renew_requests, c.llc_accesses),
            traffic: fab.ledger.clone(),
            total_traffic: fab.ledger.total(),
            max_ts,
            ts_increase_rate: ratio(max_ts.0, loads + stores),
        }
    }

    pub const CSV_HEADER: &'static [&'static str] = &[
        "config",
        "program",
        "seed",
        "self_increment_period",
        "cycles",
        "committed_ops",
        "llc_accesses",
        "renew_requests",
        "renew_success",
        "renew_failed",
        "checks",
        "renew_rate",
        "common_flits",
        "renew_flits",
        "invalidation_flits",
        "dram_flits",
        "total_flits",
        "common_flit_hops",
        "renew_flit_hops",
        "invalidation_flit_hops",
        "dram_flit_hops",
        "total_flit_hops",
        "max_ts",
        "ts_increase_rate",
    ];

    /// One CSV row matching [`MetricsReport::CSV_HEADER`].
    pub fn csv_row(&self) -> Vec<String> {
        let t = &self.traffic;
        let c = &self.counters;
        vec![
            self.config.clone(),
            self.program.clone(),
            self.seed.to_string(),
            self.self_increment_period.to_string(),
            self.cycles.to_string(),
            self.committed_ops.to_string(),
            c.llc_accesses.to_string(),
            c.renew_requests.to_string(),
            c.renew_success.to_string(),
            c.renew_failed.to_string(),
            c.checks.to_string(),
            format!("{:.6}", self.renew_rate),
            t.common.flits.to_string(),
            t.renew.flits.to_string(),
            t.invalidation.flits.to_string(),
            t.dram.flits.to_string(),
            self.total_traffic.flits.to_string(),
            t.common.flit_hops.to_string(),
            t.renew.flit_hops.to_string(),
            t.invalidation.flit_hops.to_string(),
            t.dram.flit_hops.to_string(),
            self.total_traffic.flit_hops.to_string(),
            self.max_ts.0.to_string(),
            format!("{:.6}", self.ts_increase_rate),
        ]
    }
}
