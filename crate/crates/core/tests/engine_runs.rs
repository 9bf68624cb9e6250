use tardis_core::cachemem::Addr;
use tardis_core::chrono::Timestamp;
use tardis_core::config::{Protocol, ScheduleMode, SimConfig};
use tardis_core::engine::{enumerate, run, Action, OpKind, Simulator, TraceOp};
use tardis_core::workloads::{builtin, synth, MemOp, ProgramSet, SynthParams};
use tardis_core::{check_trace, MemoryModel};

fn stamps(trace: &[TraceOp], core: usize) -> Vec<u64> {
    trace.iter().filter(|o| o.core == core).map(|o| o.ts.0).collect()
}

fn rts(sim: &Simulator, a: Addr) -> Timestamp {
    sim.tardis().unwrap().master(a).unwrap().rts
}

#[test]
fn first_example_step_by_step() {
    let cfg = SimConfig::preset("fig1").unwrap();
    let prog = builtin("fig1").unwrap();
    let (a, b) = (prog.addr("A").unwrap(), prog.addr("B").unwrap());
    let mut sim = Simulator::new(&cfg, &prog).unwrap();

    sim.apply(Action::Step(0));
    let m = sim.tardis().unwrap().master(a).unwrap();
    assert_eq!((m.wts, m.rts), (Timestamp(1), Timestamp(1)));

    sim.apply(Action::Step(0));
    assert_eq!(sim.tardis().unwrap().llc_line(b).unwrap().rts, Timestamp(11));

    sim.apply(Action::Step(1));
    let m = sim.tardis().unwrap().master(b).unwrap();
    assert_eq!((m.wts, m.rts), (Timestamp(12), Timestamp(12)));

    sim.apply(Action::Step(1));
    assert_eq!(rts(&sim, a), Timestamp(22));
    assert_eq!(stamps(sim.trace(), 0), [1, 1]);
    assert_eq!(stamps(sim.trace(), 1), [12, 12]);
    assert!(check_trace(sim.trace(), MemoryModel::Sc).is_ok());
}

#[test]
fn second_example_in_listed_interleaving() {
    let cfg = SimConfig::preset("fig2").unwrap();
    let prog = builtin("fig2").unwrap();
    let mut sim = Simulator::new(&cfg, &prog).unwrap();
    for c in [0, 1, 0, 1, 0, 1] {
        sim.apply(Action::Step(c));
    }
    assert_eq!(stamps(sim.trace(), 0), [11, 0, 0]);
    assert_eq!(stamps(sim.trace(), 1), [6, 6, 6]);
    let out = sim.outcome();
    let reg = |c: usize, r: &str| out[&(c, r.to_string())];
    assert_eq!((reg(0, "r1"), reg(0, "r2"), reg(1, "r3")), (1, 0, 0));
    assert!(check_trace(sim.trace(), MemoryModel::Tso).is_ok());
    assert!(check_trace(sim.trace(), MemoryModel::Sc).is_err());
}

#[test]
fn sequential_schedule_matches_golden_stamps() {
    let r = run(&SimConfig::preset("fig2").unwrap(), &builtin("fig2").unwrap(), 0).unwrap();
    assert_eq!(stamps(&r.trace, 0), [11, 0, 0]);
    assert_eq!(stamps(&r.trace, 1), [6, 6, 6]);
}

#[test]
fn same_seed_same_report() {
    let prog = synth(&SynthParams {
        cores: 4,
        seed: 9,
        ..SynthParams::default()
    })
    .unwrap();
    let cfg = SimConfig::preset("tardis-opt").unwrap();
    let a = run(&cfg, &prog, 3).unwrap();
    let b = run(&cfg, &prog, 3).unwrap();
    assert_eq!(
        serde_json::to_string(&a.metrics).unwrap(),
        serde_json::to_string(&b.metrics).unwrap()
    );
    assert_eq!(a.trace, b.trace);
}

#[test]
fn dekker_needs_a_store_buffer() {
    let prog = builtin("sb").unwrap();
    let zero = |o: &tardis_core::workloads::Outcome| o.values().all(|&v| v == 0);
    let mut cfg = SimConfig {
        cores: 2,
        ..SimConfig::default()
    };
    cfg.model = MemoryModel::Tso;
    assert!(enumerate(&cfg, &prog).unwrap().iter().any(zero));
    cfg.model = MemoryModel::Sc;
    assert!(!enumerate(&cfg, &prog).unwrap().iter().any(zero));
}

#[test]
fn second_listing_outcome_is_tso_only() {
    let prog = builtin("listing2").unwrap();
    let target = |o: &tardis_core::workloads::Outcome| {
        o[&(0, "r1".to_string())] == 1 && o[&(0, "r2".to_string())] == 0 && o[&(1, "r3".to_string())] == 0
    };
    let mut cfg = SimConfig {
        cores: 2,
        ..SimConfig::default()
    };
    assert!(enumerate(&cfg, &prog).unwrap().iter().any(target));
    cfg.model = MemoryModel::Sc;
    assert!(!enumerate(&cfg, &prog).unwrap().iter().any(target));
}

#[test]
fn enumeration_refuses_large_programs() {
    let prog = synth(&SynthParams {
        cores: 2,
        ops_per_core: 20,
        ..SynthParams::default()
    })
    .unwrap();
    assert!(enumerate(&SimConfig::default(), &prog).is_err());
    assert!(enumerate(&SimConfig::default(), &builtin("spin").unwrap()).is_err());
}

fn hot_program(cores: usize, seed: u64) -> ProgramSet {
    synth(&SynthParams {
        cores,
        lines: 256,
        ops_per_core: 150,
        hot_lines: 4,
        hot_frac: 0.7,
        seed,
        ..SynthParams::default()
    })
    .unwrap()
}

#[test]
fn traffic_classes_are_protocol_specific() {
    let prog = hot_program(64, 1);
    let tardis = run(
        &SimConfig {
            cores: 64,
            ..SimConfig::default()
        },
        &prog,
        1,
    )
    .unwrap();
    assert_eq!(tardis.metrics.traffic.invalidation.flits, 0);
    assert!(tardis.metrics.traffic.renew.flits > 0);
    let dir = run(
        &SimConfig {
            cores: 64,
            protocol: Protocol::Directory,
            ..SimConfig::default()
        },
        &prog,
        1,
    )
    .unwrap();
    assert_eq!(dir.metrics.traffic.renew.flits, 0);
    assert!(dir.metrics.traffic.invalidation.flits > 0);
}

#[test]
fn class_counts_sum_to_total() {
    let r = run(&SimConfig::default(), &hot_program(4, 2), 2).unwrap();
    let t = &r.metrics.traffic;
    let sum = t.common.flits + t.renew.flits + t.invalidation.flits + t.dram.flits;
    assert_eq!(sum, r.metrics.total_traffic.flits);
    assert!((0.0..=1.0).contains(&r.metrics.renew_rate));
}

#[test]
fn private_data_is_never_renewed_under_mesi() {
    let prog = synth(&SynthParams {
        cores: 1,
        hot_lines: 0,
        hot_frac: 0.0,
        seed: 4,
        ..SynthParams::default()
    })
    .unwrap();
    let cfg = SimConfig {
        cores: 1,
        ..SimConfig::default()
    };
    assert_eq!(run(&cfg, &prog, 0).unwrap().metrics.counters.renew_requests, 0);
}

#[test]
fn read_only_sharing_moves_no_ownership() {
    let prog = synth(&SynthParams {
        cores: 4,
        write_frac: 0.0,
        seed: 5,
        ..SynthParams::default()
    })
    .unwrap();
    let r = run(&SimConfig::default(), &prog, 0).unwrap();
    assert_eq!(r.metrics.counters.ownership_transfers, 0);
    assert_eq!(r.metrics.stores, 0);
}

/// With a fence after every op, TSO stamps every load and store exactly as
/// SC does.
#[test]
fn all_fence_tso_matches_sc() {
    for seed in 0..5 {
        let base = synth(&SynthParams {
            cores: 4,
            fence_frac: 0.0,
            seed,
            ..SynthParams::default()
        })
        .unwrap();
        let mut fenced = base.clone();
        for ops in &mut fenced.cores {
            *ops = ops
                .iter()
                .flat_map(|o| [o.clone(), MemOp::Fence])
                .filter(|o| !matches!(o, MemOp::Acquire | MemOp::Release))
                .collect();
        }
        let cfg = SimConfig {
            schedule: ScheduleMode::Lockstep,
            store_buffer: 0,
            ..SimConfig::default()
        };
        let sc = run(
            &SimConfig {
                model: MemoryModel::Sc,
                ..cfg.clone()
            },
            &fenced,
            seed,
        )
        .unwrap();
        let tso = run(&cfg, &fenced, seed).unwrap();
        let mem = |t: &[TraceOp]| -> Vec<(usize, u64, u64)> {
            t.iter()
                .filter(|o| matches!(o.kind, OpKind::Load | OpKind::Store))
                .map(|o| (o.core, o.seq, o.ts.0))
                .collect()
        };
        assert_eq!(mem(&sc.trace), mem(&tso.trace), "seed {seed}");
    }
}

#[test]
fn tso_stamps_grow_no_faster_than_sc() {
    for seed in 0..4 {
        let prog = hot_program(8, seed);
        let cfg = SimConfig {
            cores: 8,
            schedule: ScheduleMode::Lockstep,
            ..SimConfig::default()
        };
        let tso = run(&cfg, &prog, seed).unwrap();
        let sc = run(
            &SimConfig {
                model: MemoryModel::Sc,
                ..cfg
            },
            &prog,
            seed,
        )
        .unwrap();
        assert!(
            tso.metrics.ts_increase_rate <= sc.metrics.ts_increase_rate,
            "seed {seed}: {} > {}",
            tso.metrics.ts_increase_rate,
            sc.metrics.ts_increase_rate
        );
    }
}
