//! Command-line front end. `run` returns the process exit code:
//! 0 success, 1 failed continuation or verification, 2 usage error.

use std::ffi::OsString;
use std::fs::{File, OpenOptions};
use std::io::{BufWriter, Write};
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

use crate::catalog::{
    fmt_f64, read_catalog, run_sweep, seed_report, solve_spec, stability_of_record, trace_record,
    verify_record, write_csv, write_json, write_trace, CatalogError, CsvSink, FailureKind,
    OrbitRecord, SweepSpec, CONVERGED_RESIDUAL,
};
use crate::seeds::{enumerate_cases, CaseLabel, Regime, SeedSpec};
use crate::solver::SolverConfig;

pub const EXIT_OK: i32 = 0;
pub const EXIT_FAILED: i32 = 1;
pub const EXIT_USAGE: i32 = 2;

#[derive(Debug, Parser)]
#[command(name = "sdsp", version, about = "Doubly-symmetric periodic orbits of the restricted three-body problem")]
struct Cli {
    #[command(subcommand)]
    cmd: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Print the Keplerian seed, T0/4 and the crossing target.
    Seed(SpecArgs),
    /// Continue a seed to a periodic orbit and classify it.
    Solve(SolveArgs),
    /// Solve a grid of (k, j, case) in parallel.
    Sweep(SweepArgs),
    /// Recompute multipliers of catalog records.
    Stability(CatalogArgs),
    /// Sample one full period of a catalog record.
    Trace(TraceArgs),
    /// Re-propagate catalog records and report residual and closure.
    Verify(VerifyArgs),
}

#[derive(Debug, Args)]
struct SpecArgs {
    #[arg(long, value_parser = parse_regime)]
    regime: Regime,
    /// Mass ratio (ignored for hill-lunar).
    #[arg(long, default_value_t = 0.5)]
    mu: f64,
    #[arg(long)]
    k: u32,
    #[arg(long)]
    j: u32,
    /// Start case such as `1+--` or `(2,+,-,+)`.
    #[arg(long, value_parser = parse_case)]
    case: CaseLabel,
    #[arg(long, default_value_t = 0.5)]
    cos2i: f64,
}

impl SpecArgs {
    fn spec(&self) -> SeedSpec {
        SeedSpec {
            regime: self.regime,
            k: self.k,
            j: self.j,
            case: self.case,
            mu: if self.regime == Regime::HillLunar { 0.0 } else { self.mu },
            cos2i: self.cos2i,
        }
    }
}

#[derive(Debug, Args)]
struct SolverArgs {
    #[arg(long, default_value_t = 200)]
    max_iter: usize,
    #[arg(long, default_value_t = 1e-10)]
    tol: f64,
}

impl SolverArgs {
    fn config(&self) -> SolverConfig {
        SolverConfig {
            max_iter: self.max_iter,
            tol_inf: self.tol,
            ..SolverConfig::default()
        }
    }
}

#[derive(Debug, Args)]
struct SolveArgs {
    #[command(flatten)]
    spec: SpecArgs,
    #[command(flatten)]
    solver: SolverArgs,
    /// Append the record to this catalog (CSV, or JSON for a `.json` path).
    #[arg(long)]
    catalog: Option<PathBuf>,
    /// Print the record as JSON instead of CSV.
    #[arg(long)]
    json: bool,
}

#[derive(Debug, Args)]
struct SweepArgs {
    #[arg(long, value_parser = parse_regime)]
    regime: Regime,
    #[arg(long, default_value_t = 0.5)]
    mu: f64,
    #[arg(long, default_value_t = 0.5)]
    cos2i: f64,
    /// `3`, `1..4` (inclusive) or `1,2,5`.
    #[arg(long, value_parser = parse_list)]
    k: IndexList,
    #[arg(long, value_parser = parse_list)]
    j: IndexList,
    /// `all` or a comma-separated list of case labels.
    #[arg(long, default_value = "all")]
    cases: String,
    /// Worker threads (0 = all cores).
    #[arg(long, default_value_t = 0)]
    threads: usize,
    #[command(flatten)]
    solver: SolverArgs,
    #[arg(long)]
    out: PathBuf,
    /// Also write a JSON mirror next to the CSV.
    #[arg(long)]
    json: bool,
    /// CSV of failed cases with their reasons.
    #[arg(long)]
    failures: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct CatalogArgs {
    catalog: PathBuf,
    /// 0-based record index; all records when omitted.
    #[arg(long)]
    row: Option<usize>,
}

#[derive(Debug, Args)]
struct TraceArgs {
    #[command(flatten)]
    source: CatalogArgs,
    #[arg(long, default_value_t = 1000)]
    samples: usize,
    /// Output file; stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct VerifyArgs {
    #[command(flatten)]
    source: CatalogArgs,
    #[arg(long, default_value_t = 1e-8)]
    residual_tol: f64,
    #[arg(long, default_value_t = 1e-7)]
    closure_tol: f64,
}

fn parse_regime(s: &str) -> Result<Regime, String> {
    s.parse().map_err(|e: crate::seeds::SeedError| e.to_string())
}

fn parse_case(s: &str) -> Result<CaseLabel, String> {
    s.parse().map_err(|e: crate::seeds::SeedError| e.to_string())
}

#[derive(Debug, Clone)]
struct IndexList(Vec<u32>);

fn parse_list(s: &str) -> Result<IndexList, String> {
    parse_range(s).map(IndexList)
}

fn parse_range(s: &str) -> Result<Vec<u32>, String> {
    let bad = |e: std::num::ParseIntError| format!("`{s}`: {e}");
    if let Some((a, b)) = s.split_once("..") {
        let a: u32 = a.trim().parse().map_err(bad)?;
        let b: u32 = b.trim_start_matches('=').trim().parse().map_err(bad)?;
        if a > b {
            return Err(format!("empty range `{s}`"));
        }
        return Ok((a..=b).collect());
    }
    s.split(',').map(|p| p.trim().parse().map_err(bad)).collect()
}

fn parse_cases(s: &str) -> Result<Vec<CaseLabel>, String> {
    if s.trim() == "all" {
        return Ok(enumerate_cases());
    }
    let out: Vec<CaseLabel> = s
        .split(',')
        .map(str::trim)
        .filter(|p| !p.is_empty())
        .map(parse_case)
        .collect::<Result<_, _>>()?;
    if out.is_empty() {
        return Err("empty case filter".into());
    }
    Ok(out)
}

/// Parses `args` (including the program name) and runs the command.
pub fn run<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = write!(err, "{}", e.render());
            return if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
        }
    };
    let result = match cli.cmd {
        Command::Seed(a) => cmd_seed(&a, out, err),
        Command::Solve(a) => cmd_solve(&a, out, err),
        Command::Sweep(a) => cmd_sweep(&a, out, err),
        Command::Stability(a) => cmd_stability(&a, out),
        Command::Trace(a) => cmd_trace(&a, out),
        Command::Verify(a) => cmd_verify(&a, out),
    };
    match result {
        Ok(code) => code,
        Err(CliError::Usage(m)) => {
            let _ = writeln!(err, "error: {m}");
            EXIT_USAGE
        }
        Err(CliError::Failed(m)) => {
            let _ = writeln!(err, "error: {m}");
            EXIT_FAILED
        }
    }
}

enum CliError {
    Usage(String),
    Failed(String),
}

impl From<CatalogError> for CliError {
    fn from(e: CatalogError) -> Self {
        CliError::Failed(e.to_string())
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Failed(e.to_string())
    }
}

fn validated(a: &SpecArgs, err: &mut dyn Write) -> Result<SeedSpec, CliError> {
    let spec = a.spec();
    spec.validate().map_err(|e| CliError::Usage(e.to_string()))?;
    spec.model().validate().map_err(|e| CliError::Usage(e.to_string()))?;
    for w in spec.warnings() {
        let _ = writeln!(err, "warning: {w}");
    }
    Ok(spec)
}

fn cmd_seed(a: &SpecArgs, out: &mut dyn Write, err: &mut dyn Write) -> Result<i32, CliError> {
    let spec = validated(a, err)?;
    let r = seed_report(&spec).map_err(|e| CliError::Usage(e.to_string()))?;
    writeln!(out, "a0 {}", fmt_f64(r.a))?;
    writeln!(out, "n {}", fmt_f64(r.n))?;
    writeln!(out, "t0_quarter {}", fmt_f64(r.t0_quarter))?;
    writeln!(out, "crossing_target {}", r.crossing_target)?;
    let s: Vec<String> = r.state.iter().map(|v| fmt_f64(*v)).collect();
    writeln!(out, "state {}", s.join(" "))?;
    let x: Vec<String> = r.unknowns.iter().map(|v| fmt_f64(*v)).collect();
    writeln!(out, "unknowns {}", x.join(" "))?;
    Ok(EXIT_OK)
}

fn cmd_solve(a: &SolveArgs, out: &mut dyn Write, err: &mut dyn Write) -> Result<i32, CliError> {
    let spec = validated(&a.spec, err)?;
    let (rec, _) = match solve_spec(&spec, &a.solver.config()) {
        Ok(r) => r,
        Err(f) => {
            writeln!(err, "failed: {f}")?;
            if let Some(x) = f.x {
                writeln!(err, "last iterate {} {} {}", fmt_f64(x[0]), fmt_f64(x[1]), fmt_f64(x[2]))?;
            }
            return Ok(EXIT_FAILED);
        }
    };
    if a.json {
        write_json(&mut *out, &[rec])?;
        writeln!(out)?;
    } else {
        write_csv(&mut *out, &[rec])?;
    }
    if let Some(path) = &a.catalog {
        append_record(path, &rec)?;
    }
    Ok(EXIT_OK)
}

fn append_record(path: &PathBuf, rec: &OrbitRecord) -> Result<(), CliError> {
    if path.extension().is_some_and(|e| e == "json") {
        // a JSON array cannot be appended in place; rewrite it
        let mut recs = if path.exists() { read_catalog(path)? } else { Vec::new() };
        recs.push(*rec);
        write_json(File::create(path)?, &recs)?;
        return Ok(());
    }
    let fresh = std::fs::metadata(path).map(|m| m.len() == 0).unwrap_or(true);
    let f = OpenOptions::new().create(true).append(true).open(path)?;
    let mut sink = CsvSink::new(f, fresh)?;
    sink.push(rec)?;
    Ok(())
}

fn cmd_sweep(a: &SweepArgs, out: &mut dyn Write, err: &mut dyn Write) -> Result<i32, CliError> {
    let cases = parse_cases(&a.cases).map_err(CliError::Usage)?;
    let spec = SweepSpec {
        regime: a.regime,
        mu: if a.regime == Regime::HillLunar { 0.0 } else { a.mu },
        cos2i: a.cos2i,
        ks: a.k.0.clone(),
        js: a.j.0.clone(),
        cases,
        threads: a.threads,
        solver: a.solver.config(),
    };
    spec.validate().map_err(CliError::Usage)?;
    if let Some(first) = spec.specs().first() {
        first.validate().map_err(|e| CliError::Usage(e.to_string()))?;
        first.model().validate().map_err(|e| CliError::Usage(e.to_string()))?;
    }
    let mut sink = CsvSink::new(BufWriter::new(File::create(&a.out)?), true)?;
    let mut records = Vec::new();
    let summary = run_sweep(&spec, |_, r| {
        if let Ok(rec) = r {
            records.push(*rec);
            sink.push(rec)?;
        }
        Ok(())
    })?;
    drop(sink);
    if a.json {
        write_json(File::create(a.out.with_extension("json"))?, &records)?;
    }
    let mut failures: Box<dyn Write> = match &a.failures {
        Some(p) => Box::new(BufWriter::new(File::create(p)?)),
        None => Box::new(&mut *err),
    };
    writeln!(failures, "regime,mu,cos2i,k,j,case,reason,iters,message")?;
    for f in &summary.failures {
        let s = &f.spec;
        writeln!(
            failures,
            "{},{},{},{},{},{},{},{},\"{}\"",
            s.regime,
            fmt_f64(s.mu),
            fmt_f64(s.cos2i),
            s.k,
            s.j,
            s.case.flag(),
            f.failure.kind.as_str(),
            f.failure.iterations,
            f.failure.message.replace('"', "'")
        )?;
    }
    drop(failures);
    writeln!(
        out,
        "attempted {} converged {} failed {} collisions {}",
        summary.attempted, summary.converged, summary.failed, summary.collisions
    )?;
    Ok(EXIT_OK)
}

fn selected(a: &CatalogArgs) -> Result<Vec<(usize, OrbitRecord)>, CliError> {
    let recs = read_catalog(&a.catalog)?;
    match a.row {
        Some(i) => recs
            .get(i)
            .map(|r| vec![(i, *r)])
            .ok_or_else(|| CliError::Usage(format!("row {i} out of range ({} records)", recs.len()))),
        None => Ok(recs.into_iter().enumerate().collect()),
    }
}

fn cmd_stability(a: &CatalogArgs, out: &mut dyn Write) -> Result<i32, CliError> {
    let mut code = EXIT_OK;
    writeln!(out, "row,rho,trace,symplectic_defect,class,marginal,stored_rho")?;
    for (i, rec) in selected(a)? {
        match stability_of_record(&rec) {
            Ok(s) => writeln!(
                out,
                "{i},{},{},{},{},{},{}",
                fmt_f64(s.rho),
                fmt_f64(s.trace),
                fmt_f64(s.symplectic_defect),
                s.class.as_str(),
                s.marginal,
                fmt_f64(rec.rho)
            )?,
            Err(f) => {
                writeln!(out, "{i},,,,failed: {f},,")?;
                code = EXIT_FAILED;
            }
        }
    }
    Ok(code)
}

fn cmd_trace(a: &TraceArgs, out: &mut dyn Write) -> Result<i32, CliError> {
    let rows = selected(&a.source)?;
    let [(_, rec)] = rows.as_slice() else {
        return Err(CliError::Usage("trace needs exactly one record; pass --row".into()));
    };
    if rec.residual > CONVERGED_RESIDUAL {
        return Err(CliError::Usage("record is not converged".into()));
    }
    let samples = match trace_record(rec, a.samples) {
        Ok(s) => s,
        Err(f) if f.kind == FailureKind::InvalidSpec => return Err(CliError::Usage(f.to_string())),
        Err(f) => return Err(CliError::Failed(f.to_string())),
    };
    match &a.out {
        Some(p) => write_trace(BufWriter::new(File::create(p)?), &samples)?,
        None => write_trace(&mut *out, &samples)?,
    }
    Ok(EXIT_OK)
}

fn cmd_verify(a: &VerifyArgs, out: &mut dyn Write) -> Result<i32, CliError> {
    let mut code = EXIT_OK;
    writeln!(out, "row,residual_inf,defect_inf,t_quarter,closure_inf,closure_l2,status")?;
    for (i, rec) in selected(&a.source)? {
        match verify_record(&rec) {
            Ok(v) => {
                let ok = v.passes(a.residual_tol, a.closure_tol);
                if !ok {
                    code = EXIT_FAILED;
                }
                writeln!(
                    out,
                    "{i},{},{},{},{},{},{}",
                    fmt_f64(v.residual_inf),
                    fmt_f64(v.defect_inf),
                    fmt_f64(v.t_quarter),
                    fmt_f64(v.closure_inf),
                    fmt_f64(v.closure_l2),
                    if ok { "ok" } else { "FAIL" }
                )?;
            }
            Err(f) => {
                code = EXIT_FAILED;
                writeln!(out, "{i},,,,,,failed: {f}")?;
            }
        }
    }
    Ok(code)
}
