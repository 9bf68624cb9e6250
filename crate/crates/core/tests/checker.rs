use std::collections::BTreeSet;

use proptest::prelude::*;

use tardis_core::cachemem::{Addr, ValueToken};
use tardis_core::checker::{check_trace, oracle_outcomes, CheckError};
use tardis_core::config::{Protocol, SimConfig};
use tardis_core::engine::{enumerate, run, OpKind, TraceOp};
use tardis_core::workloads::{builtin, litmus_corpus, synth, MemOp, Outcome, ProgramSet, StoreValue, SynthParams};
use tardis_core::MemoryModel;

const MODELS: [MemoryModel; 4] = [MemoryModel::Sc, MemoryModel::Tso, MemoryModel::Pso, MemoryModel::Rc];

fn pairs(set: &BTreeSet<Outcome>) -> BTreeSet<(u64, u64)> {
    set.iter()
        .map(|o| (o[&(0, "r1".to_string())], o[&(1, "r2".to_string())]))
        .collect()
}

#[test]
fn dekker_oracle() {
    let prog = builtin("sb").unwrap();
    let sc = pairs(&oracle_outcomes(&prog, MemoryModel::Sc).unwrap());
    assert_eq!(sc, [(0, 1), (1, 0), (1, 1)].into_iter().collect());
    let tso = pairs(&oracle_outcomes(&prog, MemoryModel::Tso).unwrap());
    assert_eq!(tso, [(0, 0), (0, 1), (1, 0), (1, 1)].into_iter().collect());
}

#[test]
fn single_core_has_one_outcome() {
    let prog = ProgramSet::parse("one", "[core 0]\nSt A = 1\nLd A -> r1\nSt B = 2\nLd B -> r2\nLd A -> r3\n").unwrap();
    for m in MODELS {
        assert_eq!(oracle_outcomes(&prog, m).unwrap().len(), 1, "{m:?}");
    }
}

#[test]
fn oracle_refuses_large_programs() {
    let text = "[core 0]\n".to_string() + &"Ld A -> r1\n".repeat(9);
    let prog = ProgramSet::parse("big", &text).unwrap();
    assert!(oracle_outcomes(&prog, MemoryModel::Sc).is_err());
}

#[test]
fn oracle_outcomes_nest_across_models() {
    for prog in litmus_corpus() {
        let sets: Vec<_> = MODELS.iter().map(|&m| oracle_outcomes(&prog, m).unwrap()).collect();
        for w in sets.windows(2) {
            assert!(w[0].is_subset(&w[1]), "{}", prog.name);
        }
    }
}

fn op(core: usize, seq: u64, kind: OpKind, addr: u64, value: ValueToken, ts: u64, pt: u64) -> TraceOp {
    TraceOp {
        core,
        seq,
        pc: seq as usize,
        kind,
        addr: Some(Addr(addr)),
        value: Some(value),
        ts: ts.into(),
        pt,
    }
}

#[test]
fn stale_value_is_a_rule_two_violation() {
    let w = ValueToken::store(0, 0, 1);
    let trace = vec![
        op(0, 0, OpKind::Store, 0, w, 1, 1),
        op(1, 0, OpKind::Load, 0, ValueToken::INITIAL, 2, 2),
    ];
    match check_trace(&trace, MemoryModel::Sc) {
        Err(CheckError::Violations(v)) => assert_eq!(v[0].rule, "SC2"),
        other => panic!("{other:?}"),
    }
}

#[test]
fn reading_a_later_store_is_a_violation() {
    let w = ValueToken::store(0, 0, 1);
    let trace = vec![
        op(1, 0, OpKind::Load, 0, w, 0, 1),
        op(0, 0, OpKind::Store, 0, w, 5, 2),
    ];
    let err = check_trace(&trace, MemoryModel::Tso).unwrap_err();
    assert!(matches!(err, CheckError::Violations(v) if v[0].rule == "TSO2"));
}

#[test]
fn program_order_inversion_is_a_rule_one_violation() {
    let trace = vec![
        op(0, 0, OpKind::Load, 0, ValueToken::INITIAL, 5, 1),
        op(0, 1, OpKind::Load, 1, ValueToken::INITIAL, 3, 2),
    ];
    let err = check_trace(&trace, MemoryModel::Tso).unwrap_err();
    assert!(matches!(err, CheckError::Violations(v) if v[0].rule == "TSO1" && v[0].ops == [0, 1]));
    // Store then load may invert under TSO but not SC.
    let w = ValueToken::store(0, 0, 1);
    let trace = vec![
        op(0, 0, OpKind::Store, 0, w, 5, 1),
        op(0, 1, OpKind::Load, 1, ValueToken::INITIAL, 3, 2),
    ];
    assert!(check_trace(&trace, MemoryModel::Tso).is_ok());
    assert!(check_trace(&trace, MemoryModel::Sc).is_err());
}

#[test]
fn own_buffered_store_satisfies_value_rule_only_when_relaxed() {
    let w = ValueToken::store(0, 0, 1);
    let trace = vec![
        op(0, 0, OpKind::Store, 0, w, 5, 2),
        op(0, 1, OpKind::Load, 0, w, 0, 1),
    ];
    assert!(check_trace(&trace, MemoryModel::Tso).is_ok());
    assert!(check_trace(&trace, MemoryModel::Sc).is_err());
}

#[test]
fn conflicting_duplicate_times_are_malformed() {
    let trace = vec![
        op(0, 0, OpKind::Store, 0, ValueToken::store(0, 0, 1), 3, 1),
        op(1, 0, OpKind::Load, 0, ValueToken::INITIAL, 3, 1),
    ];
    assert!(matches!(check_trace(&trace, MemoryModel::Sc), Err(CheckError::Malformed(_))));
}

#[test]
fn golden_traces_check_out() {
    for (name, model) in [("fig1", MemoryModel::Sc), ("fig2", MemoryModel::Tso)] {
        let r = run(&SimConfig::preset(name).unwrap(), &builtin(name).unwrap(), 0).unwrap();
        assert!(check_trace(&r.trace, model).is_ok(), "{name}");
    }
}

#[derive(Clone, Debug)]
enum GenOp {
    Ld(u64),
    St(u64),
    Fence,
    Acq,
    Rel,
}

fn gen_program() -> impl Strategy<Value = ProgramSet> {
    let gop = prop_oneof![
        4 => (0u64..2).prop_map(GenOp::Ld),
        4 => (0u64..2).prop_map(GenOp::St),
        1 => Just(GenOp::Fence),
        1 => Just(GenOp::Acq),
        1 => Just(GenOp::Rel),
    ];
    prop::collection::vec(prop::collection::vec(gop, 1..4), 2..4)
        .prop_filter("op budget", |cores| cores.iter().map(Vec::len).sum::<usize>() <= 7)
        .prop_map(|cores| {
            let mut next = 1;
            let cores = cores
                .iter()
                .enumerate()
                .map(|(c, ops)| {
                    ops.iter()
                        .enumerate()
                        .map(|(i, g)| match g {
                            GenOp::Ld(a) => MemOp::Load {
                                addr: Addr(*a),
                                reg: Some(format!("r{c}_{i}")),
                            },
                            GenOp::St(a) => {
                                next += 1;
                                MemOp::Store {
                                    addr: Addr(*a),
                                    value: StoreValue::Const(next),
                                }
                            }
                            GenOp::Fence => MemOp::Fence,
                            GenOp::Acq => MemOp::Acquire,
                            GenOp::Rel => MemOp::Release,
                        })
                        .collect()
                })
                .collect();
            ProgramSet {
                name: "random".into(),
                cores,
                init: Vec::new(),
                symbols: Default::default(),
            }
        })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn engine_outcomes_within_oracle(prog in gen_program(), mi in 0usize..4, mesi in any::<bool>()) {
        let model = MODELS[mi];
        let cfg = SimConfig { cores: prog.cores.len(), model, mesi, ..SimConfig::default() };
        let got = enumerate(&cfg, &prog).unwrap();
        let allowed = oracle_outcomes(&prog, model).unwrap();
        prop_assert!(got.is_subset(&allowed), "{}\n{:?}\nextra {:?}", prog, model, got.difference(&allowed).collect::<Vec<_>>());
    }

    #[test]
    fn engine_traces_satisfy_their_model(
        seed in 0u64..10_000,
        cores in 1usize..6,
        mi in 0usize..4,
        directory in any::<bool>(),
        write_frac in 0.0f64..0.6,
    ) {
        let model = MODELS[mi];
        let prog = synth(&SynthParams { cores, lines: 48, ops_per_core: 60, write_frac, seed, ..SynthParams::default() }).unwrap();
        let mut cfg = SimConfig { cores, model, check_invariants: true, ..SimConfig::default() };
        if directory {
            cfg.protocol = Protocol::Directory;
        }
        cfg.l1.size_bytes = 512;
        let r = run(&cfg, &prog, seed).unwrap();
        prop_assert!(r.violations.is_empty(), "{:?}", r.violations);
        let checked = check_trace(&r.trace, model);
        prop_assert!(checked.is_ok(), "{:?}", checked);
    }

    /// Swapping one load's value for a different store's token never
    /// survives the checker.
    #[test]
    fn corrupted_loads_are_caught(seed in 0u64..10_000, pick in any::<prop::sample::Index>()) {
        let prog = synth(&SynthParams { cores: 3, lines: 16, hot_frac: 0.9, write_frac: 0.4, ops_per_core: 40, seed, ..SynthParams::default() }).unwrap();
        let cfg = SimConfig { cores: 3, model: MemoryModel::Sc, ..SimConfig::default() };
        let mut trace = run(&cfg, &prog, seed).unwrap().trace;
        let loads: Vec<usize> = (0..trace.len()).filter(|&i| trace[i].kind == OpKind::Load).collect();
        prop_assume!(!loads.is_empty());
        let i = loads[pick.index(loads.len())];
        let bogus = ValueToken::store(99, 0, 0);
        trace[i].value = Some(bogus);
        prop_assert!(check_trace(&trace, MemoryModel::Sc).is_err());
    }
}
