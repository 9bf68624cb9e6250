use std::fs;
use std::process::{Command, Output};

fn sim(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_sim"))
        .args(args)
        .env("SIM_LOG", "error")
        .output()
        .expect("spawn sim")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

#[test]
fn run_writes_metrics_trace_and_csv() {
    let dir = tempfile::tempdir().unwrap();
    let (m, t, c) = (dir.path().join("m.json"), dir.path().join("t.jsonl"), dir.path().join("m.csv"));
    let o = sim(&[
        "run", "--preset", "fig1", "--program", "fig1", "--check",
        "--out", m.to_str().unwrap(), "--trace", t.to_str().unwrap(), "--csv", c.to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let metrics: serde_json::Value = serde_json::from_str(&fs::read_to_string(&m).unwrap()).unwrap();
    assert_eq!(metrics["committed_ops"], 4);
    assert_eq!(fs::read_to_string(&t).unwrap().lines().count(), 4);

    let mut rdr = csv::Reader::from_path(&c).unwrap();
    let header = rdr.headers().unwrap().clone();
    let rows: Vec<_> = rdr.records().map(Result::unwrap).collect();
    assert_eq!(rows.len(), 1);
    let col = header.iter().position(|h| h == "committed_ops").unwrap();
    assert_eq!(&rows[0][col], "4");
}

#[test]
fn tso_trace_fails_the_sc_check() {
    let dir = tempfile::tempdir().unwrap();
    let t = dir.path().join("t.jsonl");
    let o = sim(&["run", "--preset", "fig2", "--program", "fig2", "--trace", t.to_str().unwrap()]);
    assert!(o.status.success());
    let ok = sim(&["check", "--trace", t.to_str().unwrap(), "--model", "tso"]);
    assert_eq!(ok.status.code(), Some(0));
    let bad = sim(&["check", "--trace", t.to_str().unwrap(), "--model", "sc"]);
    assert_eq!(bad.status.code(), Some(1));
    assert!(stdout(&bad).contains("SC1"));
}

#[test]
fn garbage_trace_is_a_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let t = dir.path().join("t.jsonl");
    fs::write(&t, "{not json\n").unwrap();
    assert_eq!(sim(&["check", "--trace", t.to_str().unwrap(), "--model", "sc"]).status.code(), Some(2));
}

#[test]
fn enumerate_matches_oracle() {
    let o = sim(&["enumerate", "--program", "sb", "--model", "tso", "--oracle"]);
    assert!(o.status.success());
    assert!(stdout(&o).contains("0:r1=0 1:r2=0"));
    let o = sim(&["enumerate", "--program", "sb", "--model", "sc", "--oracle"]);
    assert!(o.status.success());
    assert!(!stdout(&o).contains("0:r1=0 1:r2=0"));
}

#[test]
fn program_files_and_config_files_load() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("mine.prog");
    fs::write(&p, "[core 0]\nSt A = 1\nLd B -> r1\n[core 1]\nSt B = 1\nLd A -> r2\n").unwrap();
    let cfg = dir.path().join("c.conf");
    fs::write(&cfg, "model = pso\nmesi = false\n").unwrap();
    let o = sim(&["run", "--config", cfg.to_str().unwrap(), "--program", p.to_str().unwrap(), "--check"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let v: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(v["model"], "pso");
    assert_eq!(v["program"], "mine");
}

#[test]
fn sweep_emits_one_row_per_value() {
    let o = sim(&[
        "sweep", "--program", "synth:cores=4,ops=50,seed=1", "--param", "static_lease",
        "--values", "5,10,20",
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let mut rdr = csv::Reader::from_reader(o.stdout.as_slice());
    let values: Vec<String> = rdr.records().map(|r| r.unwrap()[1].to_string()).collect();
    assert_eq!(values, ["5", "10", "20"]);
}

#[test]
fn compare_reports_speedup() {
    let o = sim(&["compare", "--a", "directory", "--b", "tardis-opt", "--program", "synth:cores=4,seed=3"]);
    assert!(o.status.success());
    let text = stdout(&o);
    assert!(text.contains("speedup") && text.contains("renew_flits"));
}

#[test]
fn bad_input_exits_two() {
    assert_eq!(sim(&["run", "--program", "no_such_program"]).status.code(), Some(2));
    assert_eq!(sim(&["run", "--program", "fig1", "--set", "cores=0"]).status.code(), Some(2));
    assert_eq!(sim(&["run", "--program", "fig1", "--set", "nonsense"]).status.code(), Some(2));
    assert_eq!(sim(&["frobnicate"]).status.code(), Some(2));
}
