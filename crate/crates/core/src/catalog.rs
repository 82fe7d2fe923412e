//! Orbit records, catalog files, the solve pipeline and parallel sweeps.

use std::collections::BTreeMap;
use std::io::{Read, Write};
use std::sync::mpsc;

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dynamics::{DynamicsError, State6};
use crate::integrator::{propagate_state, sample_trajectory, IntegratorError};
use crate::seeds::{build_seed, CaseLabel, Regime, SeedError, SeedSpec};
use crate::shooting::{Converged, ShootingProblem};
use crate::solver::{SolverConfig, SolverError};
use crate::stability::{analyse, monodromy_from_quarter, EigenError, Stability, StabilityClass};

/// Residual above which a record is not accepted as a periodic orbit.
pub const CONVERGED_RESIDUAL: f64 = 1e-9;

pub const CSV_HEADER: [&str; 26] = [
    "regime", "mu", "cos2i", "k", "j", "case", "x1", "x2", "x3", "t_quarter", "residual",
    "lam1_re", "lam1_im", "lam2_re", "lam2_im", "lam3_re", "lam3_im", "lam4_re", "lam4_im",
    "lam5_re", "lam5_im", "lam6_re", "lam6_im", "rho", "class", "iters",
];

/// One converged orbit.
///
/// `x` holds the unknowns of the start plane: `(xi1, xi2', xi3')` for L1
/// starts and `(xi1, xi3, xi2')` for L2 starts, in the regime's frame.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OrbitRecord {
    pub regime: Regime,
    pub mu: f64,
    pub cos2i: f64,
    pub k: u32,
    pub j: u32,
    pub case: CaseLabel,
    pub x: [f64; 3],
    pub t_quarter: f64,
    pub residual: f64,
    pub multipliers: [Complex64; 6],
    pub rho: f64,
    pub class: StabilityClass,
    pub iters: usize,
    /// Jacobian restarts; carried by the JSON form only.
    #[serde(default)]
    pub restarts: usize,
}

impl OrbitRecord {
    pub fn spec(&self) -> SeedSpec {
        SeedSpec {
            regime: self.regime,
            k: self.k,
            j: self.j,
            case: self.case,
            mu: self.mu,
            cos2i: self.cos2i,
        }
    }

    /// Shooting problem the record was solved in.
    pub fn problem(&self) -> Result<ShootingProblem, SeedError> {
        Ok(ShootingProblem::from_seed(&self.spec())?.0)
    }

    pub fn initial_state(&self) -> Result<State6, SeedError> {
        Ok(self.problem()?.initial_state(&self.x))
    }

    fn csv_fields(&self) -> Vec<String> {
        let mut f = vec![
            self.regime.as_str().to_string(),
            fmt_f64(self.mu),
            fmt_f64(self.cos2i),
            self.k.to_string(),
            self.j.to_string(),
            self.case.flag(),
        ];
        f.extend(self.x.iter().map(|v| fmt_f64(*v)));
        f.push(fmt_f64(self.t_quarter));
        f.push(fmt_f64(self.residual));
        for z in &self.multipliers {
            f.push(fmt_f64(z.re));
            f.push(fmt_f64(z.im));
        }
        f.push(fmt_f64(self.rho));
        f.push(self.class.as_str().to_string());
        f.push(self.iters.to_string());
        f
    }

    fn from_csv_fields(rec: &csv::StringRecord) -> Result<Self, String> {
        if rec.len() != CSV_HEADER.len() {
            return Err(format!("expected {} fields, found {}", CSV_HEADER.len(), rec.len()));
        }
        let num = |i: usize| -> Result<f64, String> {
            rec[i]
                .trim()
                .parse::<f64>()
                .map_err(|e| format!("column `{}`: {e}", CSV_HEADER[i]))
        };
        let int = |i: usize| -> Result<u64, String> {
            rec[i]
                .trim()
                .parse::<u64>()
                .map_err(|e| format!("column `{}`: {e}", CSV_HEADER[i]))
        };
        let mut multipliers = [Complex64::new(0.0, 0.0); 6];
        for (m, z) in multipliers.iter_mut().enumerate() {
            *z = Complex64::new(num(11 + 2 * m)?, num(12 + 2 * m)?);
        }
        Ok(Self {
            regime: rec[0].trim().parse().map_err(|e: SeedError| e.to_string())?,
            mu: num(1)?,
            cos2i: num(2)?,
            k: int(3)? as u32,
            j: int(4)? as u32,
            case: rec[5].trim().parse().map_err(|e: SeedError| e.to_string())?,
            x: [num(6)?, num(7)?, num(8)?],
            t_quarter: num(9)?,
            residual: num(10)?,
            multipliers,
            rho: num(23)?,
            class: rec[24].trim().parse()?,
            iters: int(25)? as usize,
            restarts: 0,
        })
    }
}

/// 17 significant digits, enough for an exact `f64` round trip.
pub fn fmt_f64(v: f64) -> String {
    format!("{v:.16e}")
}

#[derive(Debug, Error)]
pub enum CatalogError {
    #[error("i/o: {0}")]
    Io(#[from] std::io::Error),
    #[error("line {line}: {message}")]
    Parse { line: u64, message: String },
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

pub struct CsvSink<W: Write> {
    w: csv::Writer<W>,
}

impl<W: Write> CsvSink<W> {
    pub fn new(inner: W, header: bool) -> Result<Self, CatalogError> {
        let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(inner);
        if header {
            w.write_record(CSV_HEADER).map_err(csv_io)?;
        }
        Ok(Self { w })
    }

    pub fn push(&mut self, r: &OrbitRecord) -> Result<(), CatalogError> {
        self.w.write_record(r.csv_fields()).map_err(csv_io)?;
        // flushed per record so an interrupted sweep keeps what it finished
        self.w.flush()?;
        Ok(())
    }
}

fn csv_io(e: csv::Error) -> CatalogError {
    match e.into_kind() {
        csv::ErrorKind::Io(e) => CatalogError::Io(e),
        other => CatalogError::Io(std::io::Error::other(format!("{other:?}"))),
    }
}

pub fn write_csv<W: Write>(w: W, records: &[OrbitRecord]) -> Result<(), CatalogError> {
    let mut sink = CsvSink::new(w, true)?;
    for r in records {
        sink.push(r)?;
    }
    Ok(())
}

pub fn read_csv<R: Read>(r: R) -> Result<Vec<OrbitRecord>, CatalogError> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .from_reader(r);
    let mut out = Vec::new();
    let mut first = true;
    for row in rdr.records() {
        let row = row.map_err(|e| CatalogError::Parse {
            line: e.position().map_or(0, |p| p.line()),
            message: e.to_string(),
        })?;
        let line = row.position().map_or(0, |p| p.line());
        if first {
            first = false;
            let found: Vec<&str> = row.iter().map(str::trim).collect();
            if found != CSV_HEADER {
                return Err(CatalogError::Parse {
                    line,
                    message: format!("header mismatch; expected `{}`", CSV_HEADER.join(",")),
                });
            }
            continue;
        }
        out.push(OrbitRecord::from_csv_fields(&row).map_err(|message| CatalogError::Parse { line, message })?);
    }
    Ok(out)
}

pub fn write_json<W: Write>(w: W, records: &[OrbitRecord]) -> Result<(), CatalogError> {
    serde_json::to_writer_pretty(w, records)?;
    Ok(())
}

pub fn read_json<R: Read>(r: R) -> Result<Vec<OrbitRecord>, CatalogError> {
    Ok(serde_json::from_reader(r)?)
}

/// Reads either format, chosen by a `.json` extension.
pub fn read_catalog(path: &std::path::Path) -> Result<Vec<OrbitRecord>, CatalogError> {
    let f = std::fs::File::open(path)?;
    if path.extension().is_some_and(|e| e == "json") {
        read_json(f)
    } else {
        read_csv(f)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FailureKind {
    InvalidSpec,
    NoConvergence,
    CrossingNotFound,
    Collision,
    Integration,
    Eigen,
}

impl FailureKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            Self::InvalidSpec => "invalid_spec",
            Self::NoConvergence => "no_convergence",
            Self::CrossingNotFound => "crossing_not_found",
            Self::Collision => "collision",
            Self::Integration => "integration",
            Self::Eigen => "eigen",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Error, Serialize, Deserialize)]
#[error("{}: {message}", kind.as_str())]
pub struct Failure {
    pub kind: FailureKind,
    pub message: String,
    /// Last iterate, when the solver got that far.
    pub x: Option<[f64; 3]>,
    pub iterations: usize,
}

impl Failure {
    fn new(kind: FailureKind, message: impl Into<String>) -> Self {
        Self {
            kind,
            message: message.into(),
            x: None,
            iterations: 0,
        }
    }
}

fn integration_failure(e: &IntegratorError) -> Failure {
    let kind = match e {
        IntegratorError::CrossingNotFound { .. } => FailureKind::CrossingNotFound,
        IntegratorError::Dynamics(DynamicsError::CollisionProximity { .. }) => FailureKind::Collision,
        _ => FailureKind::Integration,
    };
    Failure::new(kind, e.to_string())
}

impl From<EigenError> for Failure {
    fn from(e: EigenError) -> Self {
        Failure::new(FailureKind::Eigen, e.to_string())
    }
}

/// Everything the pipeline produced for one orbit.
#[derive(Debug, Clone)]
pub struct SolvedOrbit {
    pub problem: ShootingProblem,
    pub converged: Converged,
    pub stability: Stability,
    pub monodromy: nalgebra::Matrix6<f64>,
}

/// Solver, then quarter-period monodromy and stability.
pub fn solve_problem(
    problem: &ShootingProblem,
    x0: &[f64; 3],
    cfg: &SolverConfig,
) -> Result<SolvedOrbit, Failure> {
    let converged = problem.solve(x0, cfg).map_err(|f| {
        let mut out = match &f.error {
            SolverError::Residual(e) => integration_failure(e),
            other => Failure::new(FailureKind::NoConvergence, other.to_string()),
        };
        out.x = Some([f.x[0], f.x[1], f.x[2]]);
        out.iterations = f.diagnostics.iterations;
        out
    })?;
    if converged.residual.inf_norm() > CONVERGED_RESIDUAL {
        return Err(Failure {
            kind: FailureKind::NoConvergence,
            message: format!("residual {:e} above {CONVERGED_RESIDUAL:e}", converged.residual.inf_norm()),
            x: Some(converged.x),
            iterations: converged.diagnostics.iterations,
        });
    }
    let (_, bundle) = problem
        .quarter_bundle(&converged.x)
        .map_err(|e| integration_failure(&e))?;
    let monodromy = monodromy_from_quarter(problem.plane, &bundle.z);
    let stability = analyse(&monodromy)?;
    Ok(SolvedOrbit {
        problem: *problem,
        converged,
        stability,
        monodromy,
    })
}

pub fn record_of(spec: &SeedSpec, s: &SolvedOrbit) -> OrbitRecord {
    OrbitRecord {
        regime: spec.regime,
        mu: spec.mu,
        cos2i: spec.cos2i,
        k: spec.k,
        j: spec.j,
        case: spec.case,
        x: s.converged.x,
        t_quarter: s.converged.residual.t_quarter,
        residual: s.converged.residual.inf_norm(),
        multipliers: s.stability.eigenvalues,
        rho: s.stability.rho,
        class: s.stability.class,
        iters: s.converged.diagnostics.iterations,
        restarts: s.converged.diagnostics.restarts,
    }
}

/// Seed, shoot, classify.
pub fn solve_spec(spec: &SeedSpec, cfg: &SolverConfig) -> Result<(OrbitRecord, SolvedOrbit), Failure> {
    let (problem, x0) =
        ShootingProblem::from_seed(spec).map_err(|e| Failure::new(FailureKind::InvalidSpec, e.to_string()))?;
    spec.model()
        .validate()
        .map_err(|e| Failure::new(FailureKind::InvalidSpec, e.to_string()))?;
    let solved = solve_problem(&problem, &x0, cfg)?;
    Ok((record_of(spec, &solved), solved))
}

/// Independent re-check of a stored record.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Verification {
    /// Infinity norm of all three quarter-period conditions.
    pub residual_inf: f64,
    /// Infinity norm of the two velocity/position defects only.
    pub defect_inf: f64,
    pub t_quarter: f64,
    /// Componentwise closure after the full period `4 t_quarter`.
    pub closure_inf: f64,
    pub closure_l2: f64,
}

impl Verification {
    pub fn passes(&self, residual_tol: f64, closure_tol: f64) -> bool {
        self.residual_inf <= residual_tol && self.closure_inf <= closure_tol
    }
}

pub fn verify_problem(problem: &ShootingProblem, x: &[f64; 3]) -> Result<Verification, IntegratorError> {
    let r = problem.residual(x)?;
    let s0 = problem.initial_state(x);
    let end = propagate_state(&problem.model, &s0, 4.0 * r.t_quarter, &problem.cfg)?;
    let d: Vec<f64> = s0
        .to_array()
        .iter()
        .zip(end.to_array())
        .map(|(a, b)| b - a)
        .collect();
    Ok(Verification {
        residual_inf: r.inf_norm(),
        defect_inf: r.defect_norm(),
        t_quarter: r.t_quarter,
        closure_inf: d.iter().fold(0.0, |m, v| m.max(v.abs())),
        closure_l2: d.iter().map(|v| v * v).sum::<f64>().sqrt(),
    })
}

pub fn verify_record(rec: &OrbitRecord) -> Result<Verification, Failure> {
    let problem = rec
        .problem()
        .map_err(|e| Failure::new(FailureKind::InvalidSpec, e.to_string()))?;
    verify_problem(&problem, &rec.x).map_err(|e| integration_failure(&e))
}

/// Stability recomputed from the stored unknowns.
pub fn stability_of_record(rec: &OrbitRecord) -> Result<Stability, Failure> {
    let problem = rec
        .problem()
        .map_err(|e| Failure::new(FailureKind::InvalidSpec, e.to_string()))?;
    let (_, b) = problem.quarter_bundle(&rec.x).map_err(|e| integration_failure(&e))?;
    Ok(analyse(&monodromy_from_quarter(problem.plane, &b.z))?)
}

/// `n` samples over one full period.
pub fn trace_record(rec: &OrbitRecord, n: usize) -> Result<Vec<(f64, State6)>, Failure> {
    let problem = rec
        .problem()
        .map_err(|e| Failure::new(FailureKind::InvalidSpec, e.to_string()))?;
    let s0 = problem.initial_state(&rec.x);
    sample_trajectory(&problem.model, &s0, 4.0 * rec.t_quarter, n.max(2), &problem.cfg)
        .map_err(|e| integration_failure(&e))
}

pub fn write_trace<W: Write>(mut w: W, rows: &[(f64, State6)]) -> std::io::Result<()> {
    for (t, s) in rows {
        let a = s.to_array();
        writeln!(
            w,
            "{} {} {} {} {} {} {}",
            fmt_f64(*t),
            fmt_f64(a[0]),
            fmt_f64(a[1]),
            fmt_f64(a[2]),
            fmt_f64(a[3]),
            fmt_f64(a[4]),
            fmt_f64(a[5])
        )?;
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepSpec {
    pub regime: Regime,
    pub mu: f64,
    pub cos2i: f64,
    pub ks: Vec<u32>,
    pub js: Vec<u32>,
    pub cases: Vec<CaseLabel>,
    /// Worker threads; 0 lets rayon decide.
    pub threads: usize,
    pub solver: SolverConfig,
}

impl SweepSpec {
    pub fn validate(&self) -> Result<(), String> {
        if self.ks.is_empty() || self.js.is_empty() {
            return Err("empty k or j range".into());
        }
        if self.cases.is_empty() {
            return Err("empty case filter".into());
        }
        Ok(())
    }

    /// Cases in output order: k, then j, then case label.
    pub fn specs(&self) -> Vec<SeedSpec> {
        let mut out = Vec::new();
        for &k in &self.ks {
            for &j in &self.js {
                for &case in &self.cases {
                    out.push(SeedSpec {
                        regime: self.regime,
                        k,
                        j,
                        case,
                        mu: self.mu,
                        cos2i: self.cos2i,
                    });
                }
            }
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FailedCase {
    pub spec: SeedSpec,
    pub failure: Failure,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct SweepSummary {
    pub attempted: usize,
    pub converged: usize,
    pub failed: usize,
    pub collisions: usize,
    pub failures: Vec<FailedCase>,
}

/// Runs every case of the sweep in parallel and hands results to `sink` in
/// spec order, as soon as each prefix is complete.
pub fn run_sweep<F>(spec: &SweepSpec, mut sink: F) -> Result<SweepSummary, CatalogError>
where
    F: FnMut(&SeedSpec, &Result<OrbitRecord, Failure>) -> Result<(), CatalogError>,
{
    spec.validate().map_err(|message| CatalogError::Parse { line: 0, message })?;
    let specs = spec.specs();
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(spec.threads)
        .build()
        .map_err(|e| CatalogError::Io(std::io::Error::other(e.to_string())))?;
    let (tx, rx) = mpsc::channel();
    let cfg = spec.solver;
    let mut summary = SweepSummary {
        attempted: specs.len(),
        ..Default::default()
    };
    std::thread::scope(|scope| -> Result<(), CatalogError> {
        let work = &specs;
        scope.spawn(move || {
            pool.install(|| {
                work.par_iter().enumerate().for_each_with(tx, |tx, (i, s)| {
                    let r = solve_spec(s, &cfg).map(|(rec, _)| rec);
                    // the receiver only disappears if the sink failed
                    let _ = tx.send((i, r));
                });
            });
        });
        let mut pending = BTreeMap::new();
        let mut next = 0;
        for (i, r) in rx {
            pending.insert(i, r);
            while let Some(r) = pending.remove(&next) {
                let s = &specs[next];
                sink(s, &r)?;
                match r {
                    Ok(_) => summary.converged += 1,
                    Err(f) => {
                        summary.failed += 1;
                        if f.kind == FailureKind::Collision {
                            summary.collisions += 1;
                        }
                        summary.failures.push(FailedCase { spec: *s, failure: f });
                    }
                }
                next += 1;
            }
        }
        Ok(())
    })?;
    Ok(summary)
}

/// Writes sweep output to a CSV catalog.
pub fn sweep_to_csv<W: Write>(spec: &SweepSpec, out: W) -> Result<SweepSummary, CatalogError> {
    let mut sink = CsvSink::new(out, true)?;
    run_sweep(spec, |_, r| match r {
        Ok(rec) => sink.push(rec),
        Err(_) => Ok(()),
    })
}

/// Seed summary printed by `sdsp seed`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SeedReport {
    pub a: f64,
    pub n: f64,
    pub t0_quarter: f64,
    pub crossing_target: usize,
    pub state: [f64; 6],
    pub unknowns: [f64; 3],
}

pub fn seed_report(spec: &SeedSpec) -> Result<SeedReport, SeedError> {
    let seed = build_seed(spec)?;
    let p = crate::seeds::resonance_params(spec);
    let (_, x0) = ShootingProblem::from_seed(spec)?;
    Ok(SeedReport {
        a: p.a,
        n: p.n,
        t0_quarter: seed.t0_quarter,
        crossing_target: seed.crossing_target,
        state: seed.state.to_array(),
        unknowns: x0,
    })
}
