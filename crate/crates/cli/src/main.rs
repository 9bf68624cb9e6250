//! `sim`: run, enumerate, check, sweep and compare coherence simulations.
//!
//! Exit status is 0 on success, 1 when a run or check finds a violation and
//! 2 on bad arguments, configuration or input files.

use std::fs;
use std::io::{self, BufRead, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use log::{debug, info};
use tardis_core::checker::{check_trace, oracle_outcomes, CheckError};
use tardis_core::config::{Protocol, SimConfig, PRESETS};
use tardis_core::engine::{enumerate, run, TraceOp};
use tardis_core::metrics::MetricsReport;
use tardis_core::workloads::{builtin, litmus_names, synth, Outcome, ProgramSet, SynthParams};
use tardis_core::MemoryModel;

#[derive(Parser)]
#[command(name = "sim", version, about = "Timestamp coherence simulator")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Run one program and report metrics.
    Run(RunArgs),
    /// List every register outcome reachable under any schedule.
    Enumerate(EnumArgs),
    /// Check a JSON-lines trace against a memory model.
    Check(CheckArgs),
    /// Run one program across values of a config key; CSV output.
    Sweep(SweepArgs),
    /// Run one program under two configs and tabulate the ratios.
    Compare(CompareArgs),
    /// Show built-in programs and presets.
    List,
}

#[derive(Args, Clone)]
struct ConfigArgs {
    /// Config file of `key = value` lines.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Named preset applied before the file and overrides.
    #[arg(long)]
    preset: Option<String>,
    /// Override a key, e.g. `--set model=pso`. Repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
}

#[derive(Args)]
struct RunArgs {
    #[command(flatten)]
    cfg: ConfigArgs,
    /// Built-in name (`fig1`, `spin:5000`, `synth:cores=8,seed=3`, a litmus
    /// name) or a program file.
    #[arg(long)]
    program: String,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Metrics JSON destination; stdout when absent.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Also write a one-row metrics CSV.
    #[arg(long)]
    csv: Option<PathBuf>,
    /// Write the committed trace as JSON lines.
    #[arg(long)]
    trace: Option<PathBuf>,
    /// Write protocol events as JSON lines (turns on event recording).
    #[arg(long)]
    events: Option<PathBuf>,
    /// Also check the trace against the configured model.
    #[arg(long)]
    check: bool,
}

#[derive(Args)]
struct EnumArgs {
    #[arg(long)]
    program: String,
    #[arg(long, default_value = "tso")]
    model: MemoryModel,
    #[arg(long, default_value = "tardis")]
    protocol: Protocol,
    #[command(flatten)]
    cfg: ConfigArgs,
    /// Compare against the axiomatic oracle; exit 1 on an outcome the
    /// model forbids.
    #[arg(long)]
    oracle: bool,
}

#[derive(Args)]
struct CheckArgs {
    #[arg(long)]
    trace: PathBuf,
    #[arg(long)]
    model: MemoryModel,
}

#[derive(Args)]
struct SweepArgs {
    #[command(flatten)]
    cfg: ConfigArgs,
    #[arg(long)]
    program: String,
    /// Config key to vary.
    #[arg(long)]
    param: String,
    /// Comma-separated values.
    #[arg(long, value_delimiter = ',', required = true)]
    values: Vec<String>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// CSV destination; stdout when absent.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct CompareArgs {
    /// Baseline: preset name or config file.
    #[arg(long)]
    a: String,
    /// Candidate: preset name or config file.
    #[arg(long)]
    b: String,
    #[arg(long)]
    program: String,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Override applied to both configs. Repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
    /// Write both reports as JSON.
    #[arg(long)]
    out: Option<PathBuf>,
}

/// Failure with its exit status.
struct Failure {
    code: u8,
    msg: String,
}

fn usage<E: std::fmt::Display>(e: E) -> Failure {
    Failure {
        code: 2,
        msg: e.to_string(),
    }
}

type Res<T> = Result<T, Failure>;

fn apply_overrides(cfg: &mut SimConfig, overrides: &[String]) -> Res<()> {
    for o in overrides {
        let (k, v) = o
            .split_once('=')
            .ok_or_else(|| usage(format!("override `{o}` is not KEY=VALUE")))?;
        cfg.set(k.trim(), v).map_err(usage)?;
    }
    Ok(())
}

fn load_config(args: &ConfigArgs) -> Res<SimConfig> {
    let mut cfg = match &args.preset {
        Some(p) => SimConfig::preset(p).map_err(usage)?,
        None => SimConfig::default(),
    };
    if let Some(path) = &args.config {
        let text = fs::read_to_string(path).map_err(|e| usage(format!("{}: {e}", path.display())))?;
        let mut text_cfg = String::new();
        if args.preset.is_some() {
            // Keep the preset as the base the file builds on.
            text_cfg.push_str(&cfg.to_text());
        }
        text_cfg.push_str(&text);
        cfg = SimConfig::parse(&text_cfg).map_err(|e| usage(format!("{}: {e}", path.display())))?;
    }
    apply_overrides(&mut cfg, &args.overrides)?;
    cfg.validate().map_err(usage)?;
    Ok(cfg)
}

/// A preset name or a config file path.
fn named_config(spec: &str) -> Res<SimConfig> {
    if Path::new(spec).is_file() {
        load_config(&ConfigArgs {
            config: Some(spec.into()),
            preset: None,
            overrides: Vec::new(),
        })
    } else {
        SimConfig::preset(spec).map_err(usage)
    }
}

fn synth_program(spec: &str) -> Res<ProgramSet> {
    let mut p = SynthParams::default();
    for kv in spec.split(',').filter(|s| !s.is_empty()) {
        let (k, v) = kv
            .split_once('=')
            .ok_or_else(|| usage(format!("synth parameter `{kv}` is not KEY=VALUE")))?;
        let bad = |e: Box<dyn std::error::Error>| usage(format!("synth parameter `{kv}`: {e}"));
        match k {
            "cores" => p.cores = v.parse().map_err(|e| bad(Box::new(e)))?,
            "lines" => p.lines = v.parse().map_err(|e| bad(Box::new(e)))?,
            "ops" | "ops_per_core" => p.ops_per_core = v.parse().map_err(|e| bad(Box::new(e)))?,
            "write_frac" => p.write_frac = v.parse().map_err(|e| bad(Box::new(e)))?,
            "hot_lines" => p.hot_lines = v.parse().map_err(|e| bad(Box::new(e)))?,
            "hot_frac" => p.hot_frac = v.parse().map_err(|e| bad(Box::new(e)))?,
            "fence_frac" => p.fence_frac = v.parse().map_err(|e| bad(Box::new(e)))?,
            "seed" => p.seed = v.parse().map_err(|e| bad(Box::new(e)))?,
            _ => return Err(usage(format!("unknown synth parameter `{k}`"))),
        }
    }
    synth(&p).map_err(usage)
}

fn load_program(spec: &str) -> Res<ProgramSet> {
    let path = Path::new(spec);
    if path.is_file() {
        let text = fs::read_to_string(path).map_err(|e| usage(format!("{spec}: {e}")))?;
        let name = path.file_stem().and_then(|s| s.to_str()).unwrap_or(spec);
        return ProgramSet::parse(name, &text).map_err(|e| usage(format!("{spec}: {e}")));
    }
    match spec.split_once(':') {
        Some(("synth", rest)) => synth_program(rest),
        _ if spec == "synth" => synth_program(""),
        _ => builtin(spec).map_err(usage),
    }
}

fn write_out(path: Option<&Path>, text: &str) -> Res<()> {
    match path {
        Some(p) => fs::write(p, text).map_err(|e| usage(format!("{}: {e}", p.display()))),
        None => {
            let mut out = io::stdout().lock();
            out.write_all(text.as_bytes())
                .and_then(|_| out.flush())
                .map_err(|e| usage(e.to_string()))
        }
    }
}

fn json_lines<T: serde::Serialize>(items: &[T]) -> String {
    let mut s = String::new();
    for it in items {
        s.push_str(&serde_json::to_string(it).expect("serializable"));
        s.push('\n');
    }
    s
}

fn csv_text(rows: &[Vec<String>], header: &[&str]) -> Res<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(header).map_err(usage)?;
    for r in rows {
        w.write_record(r).map_err(usage)?;
    }
    let bytes = w.into_inner().map_err(|e| usage(e.to_string()))?;
    Ok(String::from_utf8(bytes).expect("utf-8 csv"))
}

fn fit_cores(cfg: &mut SimConfig, prog: &ProgramSet) {
    if prog.num_cores() > cfg.cores {
        info!("raising cores from {} to {} for {}", cfg.cores, prog.num_cores(), prog.name);
        cfg.cores = prog.num_cores();
    }
}

fn cmd_run(a: RunArgs) -> Res<()> {
    let mut cfg = load_config(&a.cfg)?;
    let prog = load_program(&a.program)?;
    fit_cores(&mut cfg, &prog);
    if a.events.is_some() {
        cfg.record_events = true;
    }
    debug!("config:\n{}", cfg.to_text());
    let r = run(&cfg, &prog, a.seed).map_err(|e| Failure {
        code: 1,
        msg: e.to_string(),
    })?;
    write_out(
        a.out.as_deref(),
        &(serde_json::to_string_pretty(&r.metrics).expect("serializable") + "\n"),
    )?;
    if let Some(p) = &a.csv {
        write_out(Some(p), &csv_text(&[r.metrics.csv_row()], MetricsReport::CSV_HEADER)?)?;
    }
    if let Some(p) = &a.trace {
        write_out(Some(p), &json_lines(&r.trace))?;
    }
    if let Some(p) = &a.events {
        write_out(Some(p), &json_lines(&r.events))?;
    }
    let mut problems: Vec<String> = r
        .violations
        .iter()
        .map(|v| format!("{}: {}", v.invariant, v.detail))
        .collect();
    if a.check {
        if let Err(e) = check_trace(&r.trace, cfg.model) {
            problems.push(e.to_string());
        }
    }
    if problems.is_empty() {
        Ok(())
    } else {
        Err(Failure {
            code: 1,
            msg: problems.join("\n"),
        })
    }
}

fn show_outcome(o: &Outcome) -> String {
    if o.is_empty() {
        return "(no registers)".into();
    }
    o.iter()
        .map(|((c, r), v)| format!("{c}:{r}={v}"))
        .collect::<Vec<_>>()
        .join(" ")
}

fn cmd_enumerate(a: EnumArgs) -> Res<()> {
    let prog = load_program(&a.program)?;
    let mut cfg = load_config(&a.cfg)?;
    cfg.model = a.model;
    cfg.protocol = a.protocol;
    cfg.cores = prog.num_cores().max(1);
    let got = enumerate(&cfg, &prog).map_err(usage)?;
    let allowed = if a.oracle {
        Some(oracle_outcomes(&prog, a.model).map_err(usage)?)
    } else {
        None
    };
    let mut text = format!(
        "{} under {}: {} outcome(s)\n",
        prog.name,
        cfg.label(),
        got.len()
    );
    let mut outside = 0;
    for o in &got {
        let mark = match &allowed {
            Some(set) if !set.contains(o) => {
                outside += 1;
                "  FORBIDDEN"
            }
            _ => "",
        };
        text.push_str(&format!("  {}{mark}\n", show_outcome(o)));
    }
    if let Some(set) = &allowed {
        text.push_str(&format!(
            "oracle allows {} outcome(s); engine reaches {} of them\n",
            set.len(),
            got.intersection(set).count()
        ));
    }
    write_out(None, &text)?;
    if outside > 0 {
        return Err(Failure {
            code: 1,
            msg: format!("{outside} outcome(s) outside the {} model", a.model.name()),
        });
    }
    Ok(())
}

fn read_trace(path: &Path) -> Res<Vec<TraceOp>> {
    let f = fs::File::open(path).map_err(|e| usage(format!("{}: {e}", path.display())))?;
    let mut ops = Vec::new();
    for (i, line) in io::BufReader::new(f).lines().enumerate() {
        let line = line.map_err(|e| usage(format!("{}: {e}", path.display())))?;
        if line.trim().is_empty() {
            continue;
        }
        let op = serde_json::from_str(&line).map_err(|e| usage(format!("{}:{}: {e}", path.display(), i + 1)))?;
        ops.push(op);
    }
    Ok(ops)
}

fn cmd_check(a: CheckArgs) -> Res<()> {
    let trace = read_trace(&a.trace)?;
    match check_trace(&trace, a.model) {
        Ok(()) => write_out(
            None,
            &format!("{} ops consistent with {}\n", trace.len(), a.model.name()),
        ),
        Err(CheckError::Malformed(m)) => Err(usage(format!("malformed trace: {m}"))),
        Err(CheckError::Violations(vs)) => {
            let text: String = vs.iter().map(|v| format!("{v}\n")).collect();
            write_out(None, &text)?;
            Err(Failure {
                code: 1,
                msg: format!("{} violation(s)", vs.len()),
            })
        }
    }
}

fn cmd_sweep(a: SweepArgs) -> Res<()> {
    let base = load_config(&a.cfg)?;
    let prog = load_program(&a.program)?;
    let mut cfgs = Vec::new();
    for v in &a.values {
        let mut c = base.clone();
        c.set(&a.param, v).map_err(usage)?;
        c.validate().map_err(usage)?;
        fit_cores(&mut c, &prog);
        cfgs.push(c);
    }
    // One worker thread per configuration; results keep input order.
    let results: Vec<_> = std::thread::scope(|s| {
        let handles: Vec<_> = cfgs
            .iter()
            .map(|c| {
                let prog = &prog;
                s.spawn(move || run(c, prog, a.seed))
            })
            .collect();
        handles.into_iter().map(|h| h.join().expect("sweep worker")).collect()
    });
    let mut rows = Vec::new();
    for (v, r) in a.values.iter().zip(results) {
        let r = r.map_err(|e| Failure {
            code: 1,
            msg: format!("{} = {v}: {e}", a.param),
        })?;
        let mut row = vec![a.param.clone(), v.clone()];
        row.extend(r.metrics.csv_row());
        rows.push(row);
    }
    let mut header = vec!["param", "value"];
    header.extend_from_slice(MetricsReport::CSV_HEADER);
    write_out(a.out.as_deref(), &csv_text(&rows, &header)?)
}

fn ratio(a: f64, b: f64) -> String {
    if a == 0.0 {
        if b == 0.0 {
            "-".into()
        } else {
            "inf".into()
        }
    } else {
        format!("{:.3}", b / a)
    }
}

fn cmd_compare(a: CompareArgs) -> Res<()> {
    let prog = load_program(&a.program)?;
    let mut reports = Vec::new();
    for spec in [&a.a, &a.b] {
        let mut cfg = named_config(spec)?;
        apply_overrides(&mut cfg, &a.overrides)?;
        fit_cores(&mut cfg, &prog);
        let r = run(&cfg, &prog, a.seed).map_err(|e| Failure {
            code: 1,
            msg: format!("{spec}: {e}"),
        })?;
        reports.push(r.metrics);
    }
    let (ra, rb) = (&reports[0], &reports[1]);
    let rows: Vec<(&str, f64, f64)> = vec![
        ("cycles", ra.cycles as f64, rb.cycles as f64),
        ("renew_rate", ra.renew_rate, rb.renew_rate),
        ("common_flits", ra.traffic.common.flits as f64, rb.traffic.common.flits as f64),
        ("renew_flits", ra.traffic.renew.flits as f64, rb.traffic.renew.flits as f64),
        (
            "invalidation_flits",
            ra.traffic.invalidation.flits as f64,
            rb.traffic.invalidation.flits as f64,
        ),
        ("dram_flits", ra.traffic.dram.flits as f64, rb.traffic.dram.flits as f64),
        ("total_flits", ra.total_traffic.flits as f64, rb.total_traffic.flits as f64),
        ("total_flit_hops", ra.total_traffic.flit_hops as f64, rb.total_traffic.flit_hops as f64),
    ];
    let w = ra.config.len().max(rb.config.len()).max(10);
    let mut text = format!(
        "program {} seed {}\n{:<20} {:>w$} {:>w$} {:>8}\n",
        prog.name, a.seed, "metric", ra.config, rb.config, "b/a"
    );
    for (name, x, y) in rows {
        let fmt = |v: f64| {
            if name == "renew_rate" {
                format!("{v:.4}")
            } else {
                format!("{v:.0}")
            }
        };
        text.push_str(&format!("{name:<20} {:>w$} {:>w$} {:>8}\n", fmt(x), fmt(y), ratio(x, y)));
    }
    text.push_str(&format!(
        "speedup {}\n",
        ratio(rb.cycles as f64, ra.cycles as f64)
    ));
    write_out(None, &text)?;
    if let Some(p) = &a.out {
        write_out(Some(p), &(serde_json::to_string_pretty(&reports).expect("serializable") + "\n"))?;
    }
    Ok(())
}

fn cmd_list() -> Res<()> {
    let mut text = String::from("programs: fig1 fig2 spin[:delay] lease_case[:iters] synth[:k=v,...]\nlitmus:");
    for n in litmus_names() {
        text.push(' ');
        text.push_str(n);
    }
    text.push_str("\npresets:");
    for p in PRESETS {
        text.push(' ');
        text.push_str(p);
    }
    text.push('\n');
    write_out(None, &text)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().filter_or("SIM_LOG", "warn")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    let r = match cli.cmd {
        Cmd::Run(a) => cmd_run(a),
        Cmd::Enumerate(a) => cmd_enumerate(a),
        Cmd::Check(a) => cmd_check(a),
        Cmd::Sweep(a) => cmd_sweep(a),
        Cmd::Compare(a) => cmd_compare(a),
        Cmd::List => cmd_list(),
    };
    match r {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("sim: {}", f.msg);
            ExitCode::from(f.code)
        }
    }
}
