use std::fmt::Write as _;
use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use qf_core::flow::{run, FlowTrace};
use qf_core::fmt17;
use qf_core::quermass::quermass_from_geometry;
use qf_core::suite::{describe_criterion, run_criterion, SuiteOptions, SuiteReport};
use qf_core::surface::{compute_geometry, GridMode, Resolution, ShapeSpec};
use qf_core::verify::{sweep_with_tolerance, verify_with_tolerance, RowStatus, VerificationReport};
use qf_core::xi::{
    xi_closed_20_fn, xi_closed_minkowski_sq_fn, xi_ode_20, xi_parametric, xi_parametric_minkowski_sq, XiFunction,
};
use serde::Serialize;

use crate::config::{ensure_writable, Command, Format, RunConfig, XiSelect};
use crate::CliError;

/// How a completed command ended.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Outcome {
    Success,
    VerificationFailed,
    FlowBreakdown,
}

impl Outcome {
    pub fn exit_code(self) -> ExitCode {
        ExitCode::from(match self {
            Outcome::Success => 0,
            Outcome::VerificationFailed => 1,
            Outcome::FlowBreakdown => 2,
        })
    }
}

/// Runs the config's pipeline and writes its outputs. Progress and
/// diagnostics go to stderr, results to stdout.
pub fn dispatch(config: &RunConfig, verbose: bool) -> Result<Outcome, CliError> {
    ensure_writable(&config.output.dir)?;
    match config.command {
        Command::Shape => shape_eval(config),
        Command::Flow => flow_run(config, verbose),
        Command::Xi => xi_dump(config),
        Command::Verify if config.sweep.is_some() => verify_sweep(config),
        Command::Verify => verify_run(config, verbose),
        Command::Suite => suite(config, verbose),
    }
}

/// What `dispatch` would do, without computing or writing anything.
pub fn plan(config: &RunConfig) -> Result<String, CliError> {
    let mut out = format!("command: {}\n", config.command.invocation());
    let dir = config.output.dir.display();
    let files: Vec<String> = output_stems(config)
        .iter()
        .flat_map(|stem| {
            config.output.formats.iter().map(move |f| match f {
                Format::Json => format!("{stem}.json"),
                Format::Csv => format!("{stem}.csv"),
            })
        })
        .chain((config.command == Command::Suite).then(|| "suite.txt".to_string()))
        .collect();
    writeln!(out, "outputs: {}", files.iter().map(|f| format!("{dir}/{f}")).collect::<Vec<_>>().join(", ")).unwrap();
    if config.command == Command::Suite {
        let total: f64 = config.suite.criteria.iter().filter_map(|&id| describe_criterion(id)).map(|d| d.1).sum();
        for &id in &config.suite.criteria {
            let (title, budget) = describe_criterion(id).expect("criteria were validated");
            writeln!(out, "  criterion {id:>2}  {title}  (budget {budget:.0} s)").unwrap();
        }
        writeln!(out, "tolerance scale: {}; total budget {total:.0} s", config.tolerances.suite_scale).unwrap();
    }
    let resolved = serde_json::to_string_pretty(config).map_err(qf_core::Error::from)?;
    writeln!(out, "resolved config:\n{resolved}").unwrap();
    Ok(out)
}

fn output_stems(config: &RunConfig) -> Vec<&'static str> {
    match config.command {
        Command::Shape => vec!["shape"],
        Command::Flow => vec!["trace"],
        Command::Xi => vec!["xi"],
        Command::Verify if config.sweep.is_some() => vec!["sweep"],
        Command::Verify => vec!["verify"],
        Command::Suite => vec!["suite"],
    }
}

fn write(dir: &Path, name: &str, contents: &str) -> Result<PathBuf, CliError> {
    let path = dir.join(name);
    fs::write(&path, contents).map_err(|source| CliError::Io { path: path.clone(), source })?;
    Ok(path)
}

fn write_formats(config: &RunConfig, stem: &str, json: impl FnOnce() -> Result<String, CliError>, csv: impl FnOnce() -> String) -> Result<(), CliError> {
    let dir = &config.output.dir;
    if config.output.wants(Format::Json) {
        let mut text = json()?;
        text.push('\n');
        write(dir, &format!("{stem}.json"), &text)?;
    }
    if config.output.wants(Format::Csv) {
        write(dir, &format!("{stem}.csv"), &csv())?;
    }
    Ok(())
}

fn to_json<T: Serialize>(value: &T) -> Result<String, CliError> {
    Ok(serde_json::to_string_pretty(value).map_err(qf_core::Error::from)?)
}

#[derive(Debug, Serialize)]
struct QuermassEntry {
    k: isize,
    value: f64,
}

#[derive(Debug, Serialize)]
struct ShapeReport {
    id: String,
    n: usize,
    mode: GridMode,
    resolution: Resolution,
    shape: ShapeSpec,
    volume: f64,
    area: f64,
    quermass: Vec<QuermassEntry>,
    min_kappa: f64,
    max_kappa: f64,
    min_rho: f64,
    max_rho: f64,
    convex: bool,
}

fn shape_eval(config: &RunConfig) -> Result<Outcome, CliError> {
    let g = config.graph()?;
    let fields = compute_geometry(&g)?;
    let q = quermass_from_geometry(&g, &fields)?;
    let report = ShapeReport {
        id: config.experiment_id()?,
        n: config.n,
        mode: config.mode(),
        resolution: config.resolution()?,
        shape: config.shape.clone(),
        volume: q.volume(),
        area: q.area(),
        quermass: (-1..config.n as isize).map(|k| QuermassEntry { k, value: q.a(k) }).collect(),
        min_kappa: fields.min_kappa(),
        max_kappa: fields.max_kappa(),
        min_rho: g.min_rho(),
        max_rho: g.max_rho(),
        convex: fields.min_kappa() > 0.0,
    };
    let mut csv = String::from("quantity,value\n");
    for e in &report.quermass {
        writeln!(csv, "A_{},{}", e.k, fmt17(e.value)).unwrap();
    }
    for (name, v) in [
        ("volume", report.volume),
        ("area", report.area),
        ("min_kappa", report.min_kappa),
        ("max_kappa", report.max_kappa),
        ("min_rho", report.min_rho),
        ("max_rho", report.max_rho),
    ] {
        writeln!(csv, "{name},{}", fmt17(v)).unwrap();
    }
    write_formats(config, "shape", || to_json(&report), || csv.clone())?;
    print!("{csv}");
    println!("convex,{}", report.convex);
    Ok(Outcome::Success)
}

fn flow_run(config: &RunConfig, verbose: bool) -> Result<Outcome, CliError> {
    let spec = config.flow.as_ref().expect("validated: flow section present");
    let g = config.graph()?;
    let (trace, failure) = match run(g, spec, &config.monitors) {
        Ok(t) => (t, None),
        Err(f) => (*f.trace, Some(f.error)),
    };
    write_formats(config, "trace", || Ok(trace.to_json()?), || trace.to_csv())?;
    summarize_trace(&trace, verbose);
    match failure {
        None => Ok(Outcome::Success),
        Some(e) => {
            eprintln!(
                "{e}\npartial trace with {} record(s) written to {}",
                trace.records.len(),
                config.output.dir.display()
            );
            Ok(Outcome::FlowBreakdown)
        }
    }
}

fn summarize_trace(trace: &FlowTrace, verbose: bool) {
    println!(
        "stop: {:?} after {} steps ({} rejected), {} records",
        trace.stop,
        trace.steps,
        trace.rejected_steps,
        trace.records.len()
    );
    let Some(last) = trace.records.last() else { return };
    if verbose {
        print!("{}", trace.to_csv());
        return;
    }
    println!("t = {}", fmt17(last.t));
    for (i, a) in last.quermass.values().iter().enumerate() {
        println!("A_{} = {}", i as isize - 1, fmt17(*a));
    }
    for (m, q) in trace.monitors.iter().zip(&last.q) {
        println!("Q_{} = {}", m.name(), fmt17(*q));
    }
}

#[derive(Debug, Serialize)]
struct XiTable {
    n: usize,
    target: String,
    source: String,
    domain: (f64, f64),
    s: Vec<f64>,
    xi: Vec<f64>,
}

fn build_xi(config: &RunConfig) -> Result<XiFunction, CliError> {
    let (n, knots) = (config.n, config.xi.knots);
    let f = match config.xi.function {
        XiSelect::Pair { k, l } => xi_parametric(n, k, l, knots),
        XiSelect::MinkowskiSq => xi_parametric_minkowski_sq(n, knots),
        XiSelect::ClosedMinkowskiSq => xi_closed_minkowski_sq_fn(n),
        XiSelect::Closed20 => xi_closed_20_fn(n),
        XiSelect::Ode20 { steps, min_fraction } => xi_ode_20(n, steps, min_fraction),
    };
    f.map_err(|e| CliError::Config(format!("xi.function: {e}")))
}

fn xi_dump(config: &RunConfig) -> Result<Outcome, CliError> {
    let f = build_xi(config)?;
    let (lo, hi) = f.domain();
    let points = config.xi.points;
    let s: Vec<f64> = (1..=points).map(|i| lo + (hi - lo) * i as f64 / (points + 1) as f64).collect();
    let xi = s.iter().map(|&x| f.eval(x)).collect::<qf_core::Result<Vec<f64>>>()?;
    let table = XiTable { n: f.n(), target: f.target().label(), source: f.source().label(), domain: (lo, hi), s, xi };
    write_formats(config, "xi", || to_json(&table), || f.dump_csv(points).expect("points lie in the domain"))?;
    println!("{} = xi({}) on ({}, {}], {points} points", table.target, table.source, fmt17(lo), fmt17(hi));
    Ok(Outcome::Success)
}

fn verify_run(config: &RunConfig, verbose: bool) -> Result<Outcome, CliError> {
    let g = config.graph()?;
    let mut report = verify_with_tolerance(&g, config.tolerances.gap)?;
    report.id = config.experiment_id()?;
    report.shape = Some(config.shape.clone());
    write_formats(config, "verify", || Ok(report.to_json()?), || report.to_csv())?;
    print_rows(&report, verbose);
    if !report.convex {
        eprintln!("shape is not convex (min kappa {}); rows carry no verdict", fmt17(report.min_kappa));
    }
    Ok(if report.all_pass() { Outcome::Success } else { Outcome::VerificationFailed })
}

fn print_rows(report: &VerificationReport, verbose: bool) {
    let width = report.rows.iter().map(|r| r.name.len()).max().unwrap_or(0);
    for r in &report.rows {
        let status = match &r.status {
            RowStatus::DomainError(e) => format!("domain error: {e}"),
            s => format!("{s:?}"),
        };
        if verbose {
            println!(
                "{:<width$}  {:<13}  lhs {}  rhs {}  rel gap {:>11.3e}  {status}",
                r.name,
                format!("{:?}", r.family),
                fmt17(r.lhs),
                fmt17(r.rhs),
                r.rel_gap
            );
        } else {
            println!("{:<width$}  {:<13}  rel gap {:>11.3e}  {status}", r.name, format!("{:?}", r.family), r.rel_gap);
        }
    }
}

fn verify_sweep(config: &RunConfig) -> Result<Outcome, CliError> {
    let family = config.sweep.as_ref().expect("sweep section present");
    let report = sweep_with_tolerance(family, config.tolerances.gap);
    write_formats(config, "sweep", || Ok(report.to_json()?), || report.to_csv())?;
    print!("{}", report.to_table());
    Ok(if report.all_pass() { Outcome::Success } else { Outcome::VerificationFailed })
}

fn suite(config: &RunConfig, verbose: bool) -> Result<Outcome, CliError> {
    let opts = SuiteOptions { tolerance_scale: config.tolerances.suite_scale };
    let mut report = SuiteReport { options: opts, criteria: Vec::new() };
    for &id in &config.suite.criteria {
        let outcome = run_criterion(id, &opts).expect("criteria were validated");
        eprintln!("{}", outcome.summary_line());
        let _ = std::io::stderr().flush();
        report.criteria.push(outcome);
    }
    // wall-clock times went to stderr; files stay reproducible
    report.strip_timings();
    let text = report.to_text(verbose);
    write(&config.output.dir, "suite.txt", &text)?;
    write_formats(config, "suite", || Ok(report.to_json()?), || suite_csv(&report))?;
    print!("{text}");
    Ok(if report.all_pass() { Outcome::Success } else { Outcome::VerificationFailed })
}

fn suite_csv(report: &SuiteReport) -> String {
    let mut out = String::from("criterion,check,measured,limit,gating,pass\n");
    for c in &report.criteria {
        for check in &c.checks {
            writeln!(
                out,
                "{},\"{}\",{},{},{},{}",
                c.id,
                check.label.replace('"', "'"),
                fmt17(check.measured),
                fmt17(check.limit),
                check.gating,
                check.pass
            )
            .unwrap();
        }
    }
    out
}
