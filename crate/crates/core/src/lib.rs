//! Cycle-level simulator for timestamp-based cache coherence (Tardis) and a
//! full-map directory baseline, with an axiomatic consistency checker.

pub mod cachemem;
pub mod checker;
pub mod chrono;
pub mod config;
pub mod consistency;
pub mod directory;
pub mod engine;
pub mod invariants;
pub mod leasepred;
pub mod livelock;
pub mod metrics;
pub mod tardis;
pub mod workloads;

pub use checker::{check_trace, oracle_outcomes};
pub use config::SimConfig;
pub use consistency::MemoryModel;
pub use engine::{enumerate, run, ExecTrace, RunResult, TraceOp};
pub use metrics::MetricsReport;
pub use workloads::ProgramSet;
