//! Broyden's method with a QR-factored Jacobian and backtracking line search.
//!
//! Structured after the classic `broydn`/`lnsrch`/`qrupdt` trio: the
//! approximate Jacobian is kept as `B = Q R`, secant updates are applied
//! with Givens rotations and the merit function is `f = |Phi|^2 / 2`.
//!
//! Shooting residuals of doubly-symmetric orbits have a rank-two Jacobian
//! (the orbits come in one-parameter families), so a step is taken as the
//! minimum-norm least-squares solution whenever `R` is numerically rank
//! deficient.

use nalgebra::{DMatrix, DVector};
use thiserror::Error;

const ALF: f64 = 1e-4;
const STPMX: f64 = 100.0;
const TOLX: f64 = 1e-15;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SolverError<E: std::fmt::Display> {
    #[error("approximate Jacobian is singular")]
    SingularJacobian,
    #[error("line search could not reduce the merit function")]
    LineSearchStall,
    #[error("no convergence within {0} iterations")]
    MaxIterExceeded(usize),
    #[error("iterates stagnated with residual {0:e}")]
    Stagnation(f64),
    #[error("search direction is not a descent direction")]
    NotDescent,
    #[error("residual evaluation failed: {0}")]
    Residual(E),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverConfig {
    pub tol_inf: f64,
    pub max_iter: usize,
    pub max_backtracks: usize,
    pub restart_on_stall: bool,
    /// Relative singular-value cutoff for the minimum-norm step.
    pub rank_tol: f64,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            tol_inf: 1e-10,
            max_iter: 200,
            max_backtracks: 10,
            restart_on_stall: true,
            rank_tol: 1e-7,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Diagnostics {
    pub iterations: usize,
    /// Finite-difference Jacobians after the initial one.
    pub restarts: usize,
    pub evaluations: usize,
    pub final_merit: f64,
    pub residual_inf: f64,
    /// Steps taken with the minimum-norm pseudo-inverse.
    pub rank_deficient_steps: usize,
    /// Merit after every accepted iteration.
    pub merit_history: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Solution {
    pub x: DVector<f64>,
    pub fvec: DVector<f64>,
    pub diagnostics: Diagnostics,
}

#[derive(Debug, Clone, PartialEq, Error)]
#[error("{error}")]
pub struct SolverFailure<E: std::fmt::Display> {
    pub error: SolverError<E>,
    /// Last iterate reached.
    pub x: DVector<f64>,
    pub diagnostics: Diagnostics,
}

/// Outcome of a backtracking line search.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LineSearchResult {
    pub lambda: f64,
    pub merit: f64,
    pub backtracks: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Error)]
pub enum LineSearchError {
    #[error("slope is non-negative")]
    NotDescent,
    #[error("no sufficient decrease after the allowed backtracks")]
    Stall,
}

/// Backtracking on `phi(lambda)` with an Armijo test.
///
/// `trial` returns `None` when the merit cannot be evaluated; the step is
/// then halved. The first backtrack minimises the quadratic through
/// `phi(0), phi'(0), phi(1)`, later ones the cubic through the last two
/// trials; each new `lambda` is kept in `[0.1, 0.5]` of the previous one.
pub fn line_search<T>(
    phi0: f64,
    slope: f64,
    max_backtracks: usize,
    lambda_min: f64,
    mut trial: T,
) -> Result<LineSearchResult, LineSearchError>
where
    T: FnMut(f64) -> Option<f64>,
{
    if !(slope < 0.0) {
        return Err(LineSearchError::NotDescent);
    }
    let mut lam = 1.0;
    let mut prev: Option<(f64, f64)> = None;
    for backtracks in 0..=max_backtracks {
        let phi = trial(lam);
        if let Some(phi) = phi.filter(|v| v.is_finite()) {
            if phi <= phi0 + ALF * lam * slope {
                return Ok(LineSearchResult {
                    lambda: lam,
                    merit: phi,
                    backtracks,
                });
            }
            let next = match prev {
                None => -slope / (2.0 * (phi - phi0 - slope)),
                Some((lam2, phi2)) => cubic_backtrack(phi0, slope, lam, phi, lam2, phi2),
            };
            prev = Some((lam, phi));
            lam = next.clamp(0.1 * lam, 0.5 * lam);
        } else {
            prev = None;
            lam *= 0.5;
        }
        if lam < lambda_min {
            break;
        }
    }
    Err(LineSearchError::Stall)
}

fn cubic_backtrack(phi0: f64, slope: f64, lam: f64, phi: f64, lam2: f64, phi2: f64) -> f64 {
    let rhs1 = phi - phi0 - lam * slope;
    let rhs2 = phi2 - phi0 - lam2 * slope;
    let a = (rhs1 / (lam * lam) - rhs2 / (lam2 * lam2)) / (lam - lam2);
    let b = (-lam2 * rhs1 / (lam * lam) + lam * rhs2 / (lam2 * lam2)) / (lam - lam2);
    if a == 0.0 {
        -slope / (2.0 * b)
    } else {
        let disc = b * b - 3.0 * a * slope;
        if disc < 0.0 {
            0.5 * lam
        } else if b <= 0.0 {
            (-b + disc.sqrt()) / (3.0 * a)
        } else {
            -slope / (b + disc.sqrt())
        }
    }
}

/// Givens rotation of rows `i`, `i + 1` in both `r` and `qt` that zeroes
/// the combination `(a, b)`.
fn rotate(r: &mut DMatrix<f64>, qt: &mut DMatrix<f64>, i: usize, a: f64, b: f64) {
    let n = r.ncols();
    let (c, s) = if a == 0.0 {
        (0.0, if b >= 0.0 { 1.0 } else { -1.0 })
    } else if a.abs() > b.abs() {
        let fact = b / a;
        let c = (1.0 / (1.0 + fact * fact).sqrt()).copysign(a);
        (c, fact * c)
    } else {
        let fact = a / b;
        let s = (1.0 / (1.0 + fact * fact).sqrt()).copysign(b);
        (fact * s, s)
    };
    for j in i..n {
        let (y, w) = (r[(i, j)], r[(i + 1, j)]);
        r[(i, j)] = c * y - s * w;
        r[(i + 1, j)] = s * y + c * w;
    }
    for j in 0..qt.ncols() {
        let (y, w) = (qt[(i, j)], qt[(i + 1, j)]);
        qt[(i, j)] = c * y - s * w;
        qt[(i + 1, j)] = s * y + c * w;
    }
}

/// Updates `Q^T` and `R` in place so that `Q' R' = Q R + (Q u) v^T`.
fn qr_update_transposed(
    r: &mut DMatrix<f64>,
    qt: &mut DMatrix<f64>,
    mut u: DVector<f64>,
    v: &DVector<f64>,
) {
    let n = u.len();
    let k = (0..n).rev().find(|&i| u[i] != 0.0).unwrap_or(0);
    for i in (0..k).rev() {
        rotate(r, qt, i, u[i], -u[i + 1]);
        u[i] = u[i].hypot(u[i + 1]);
    }
    for j in 0..n {
        r[(0, j)] += u[0] * v[j];
    }
    for i in 0..k {
        let (a, b) = (r[(i, i)], r[(i + 1, i)]);
        rotate(r, qt, i, a, -b);
    }
}

/// Rank-one update of a QR factorisation: returns `(Q', R')` with
/// `Q' R' = Q R + w s^T`, using `2 (m - 1)` Givens rotations.
pub fn qr_rank_one_update(
    q: &DMatrix<f64>,
    r: &DMatrix<f64>,
    w: &DVector<f64>,
    s: &DVector<f64>,
) -> (DMatrix<f64>, DMatrix<f64>) {
    let mut qt = q.transpose();
    let mut r = r.clone();
    let u = &qt * w;
    qr_update_transposed(&mut r, &mut qt, u, s);
    (qt.transpose(), r)
}

/// True when some diagonal entry of `R` is below `tol` in magnitude.
pub fn is_rank_deficient(r: &DMatrix<f64>, tol: f64) -> bool {
    (0..r.nrows().min(r.ncols())).any(|i| r[(i, i)].abs() < tol)
}

/// Forward-difference Jacobian with step `max(|x_i|, 1) sqrt(eps)`.
pub fn fd_jacobian<F, E>(
    f: &mut F,
    x: &DVector<f64>,
    f0: &DVector<f64>,
) -> Result<DMatrix<f64>, E>
where
    F: FnMut(&DVector<f64>) -> Result<DVector<f64>, E>,
{
    let n = x.len();
    let m = f0.len();
    let sqrt_eps = f64::EPSILON.sqrt();
    let mut jac = DMatrix::zeros(m, n);
    for j in 0..n {
        let mut xp = x.clone();
        let h = x[j].abs().max(1.0) * sqrt_eps;
        xp[j] += h;
        let h = xp[j] - x[j];
        let fp = f(&xp)?;
        for i in 0..m {
            jac[(i, j)] = (fp[i] - f0[i]) / h;
        }
    }
    Ok(jac)
}

fn inf_norm(v: &DVector<f64>) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}

/// Newton-like direction `p` solving `Q R p = -Phi`, or its minimum-norm
/// least-squares version when `R` is numerically rank deficient.
fn direction(
    qt: &DMatrix<f64>,
    r: &DMatrix<f64>,
    fvec: &DVector<f64>,
    rank_tol: f64,
) -> Option<(DVector<f64>, bool)> {
    let rhs = -(qt * fvec);
    let diag_max = (0..r.nrows()).fold(0.0f64, |m, i| m.max(r[(i, i)].abs()));
    if diag_max == 0.0 || !diag_max.is_finite() {
        return None;
    }
    if !is_rank_deficient(r, rank_tol * diag_max) {
        if let Some(p) = r.solve_upper_triangular(&rhs) {
            if p.iter().all(|v| v.is_finite()) {
                return Some((p, false));
            }
        }
    }
    let svd = r.clone().svd(true, true);
    let smax = svd.singular_values.max();
    if smax == 0.0 {
        return None;
    }
    let p = svd.solve(&rhs, rank_tol * smax).ok()?;
    Some((p, true))
}

/// Solves `Phi(x) = 0` from `x0`.
pub fn broyden_solve<F, E>(
    mut phi: F,
    x0: &DVector<f64>,
    cfg: &SolverConfig,
) -> Result<Solution, SolverFailure<E>>
where
    F: FnMut(&DVector<f64>) -> Result<DVector<f64>, E>,
    E: std::fmt::Display,
{
    let n = x0.len();
    let mut diag = Diagnostics::default();
    let mut x = x0.clone();
    let fail = |error: SolverError<E>, x: &DVector<f64>, diag: &Diagnostics| SolverFailure {
        error,
        x: x.clone(),
        diagnostics: diag.clone(),
    };

    let mut fvec = match phi(&x) {
        Ok(v) => v,
        Err(e) => return Err(fail(SolverError::Residual(e), &x, &diag)),
    };
    diag.evaluations += 1;
    let mut f = 0.5 * fvec.norm_squared();
    diag.final_merit = f;
    diag.residual_inf = inf_norm(&fvec);
    if diag.residual_inf <= cfg.tol_inf {
        return Ok(Solution {
            x,
            fvec,
            diagnostics: diag,
        });
    }

    let mut qt = DMatrix::identity(n, n);
    let mut r = DMatrix::zeros(n, n);
    let mut restart = true;
    let mut first = true;
    let mut xold = x.clone();
    let mut fvcold = fvec.clone();

    for its in 1..=cfg.max_iter {
        diag.iterations = its;
        if restart {
            let jac = match fd_jacobian(&mut phi, &x, &fvec) {
                Ok(j) => j,
                Err(e) => return Err(fail(SolverError::Residual(e), &x, &diag)),
            };
            diag.evaluations += n;
            if !first {
                diag.restarts += 1;
            }
            first = false;
            let qr = jac.qr();
            qt = qr.q().transpose();
            r = qr.r();
        } else {
            let s = &x - &xold;
            let rs = &r * &s;
            let w = &fvec - &fvcold - qt.transpose() * rs;
            let noise = w
                .iter()
                .zip(fvec.iter().zip(fvcold.iter()))
                .all(|(wi, (a, b))| wi.abs() < f64::EPSILON * (a.abs() + b.abs()));
            let den = s.norm_squared();
            if !noise && den > 0.0 {
                let u = &qt * &w;
                qr_update_transposed(&mut r, &mut qt, u, &(s / den));
            }
        }

        let (p, deficient) = match direction(&qt, &r, &fvec, cfg.rank_tol) {
            Some(d) => d,
            None => {
                if restart || !cfg.restart_on_stall {
                    return Err(fail(SolverError::SingularJacobian, &x, &diag));
                }
                restart = true;
                continue;
            }
        };
        if deficient {
            diag.rank_deficient_steps += 1;
        }

        // gradient of the merit is B^T Phi = R^T Q^T Phi
        let g = r.transpose() * (&qt * &fvec);
        let mut p = p;
        let stpmax = STPMX * x.norm().max(n as f64);
        let pn = p.norm();
        if pn > stpmax {
            p *= stpmax / pn;
        }
        let slope = g.dot(&p);

        xold.copy_from(&x);
        fvcold.copy_from(&fvec);
        let fold = f;
        let test = p
            .iter()
            .zip(x.iter())
            .fold(0.0f64, |m, (pi, xi)| m.max(pi.abs() / xi.abs().max(1.0)));
        let lambda_min = TOLX / test.max(f64::MIN_POSITIVE);

        let mut best: Option<(DVector<f64>, DVector<f64>)> = None;
        let mut evals = 0;
        let ls = line_search(fold, slope, cfg.max_backtracks, lambda_min, |lam| {
            let xt = &xold + &p * lam;
            evals += 1;
            match phi(&xt) {
                Ok(ft) => {
                    let m = 0.5 * ft.norm_squared();
                    best = Some((xt, ft));
                    Some(m)
                }
                Err(_) => None,
            }
        });
        diag.evaluations += evals;

        match ls {
            Ok(res) => {
                let (xn, fnew) = best.expect("accepted trial was evaluated");
                x = xn;
                fvec = fnew;
                f = res.merit;
            }
            Err(LineSearchError::NotDescent) | Err(LineSearchError::Stall) => {
                let kind = match ls {
                    Err(LineSearchError::NotDescent) => SolverError::NotDescent,
                    _ => SolverError::LineSearchStall,
                };
                if restart || !cfg.restart_on_stall {
                    diag.final_merit = fold;
                    diag.residual_inf = inf_norm(&fvcold);
                    return Err(fail(kind, &xold, &diag));
                }
                x.copy_from(&xold);
                fvec.copy_from(&fvcold);
                f = fold;
                restart = true;
                continue;
            }
        }

        diag.final_merit = f;
        diag.residual_inf = inf_norm(&fvec);
        diag.merit_history.push(f);
        if diag.residual_inf <= cfg.tol_inf {
            return Ok(Solution {
                x,
                fvec,
                diagnostics: diag,
            });
        }
        let dx = x
            .iter()
            .zip(xold.iter())
            .fold(0.0f64, |m, (a, b)| m.max((a - b).abs() / a.abs().max(1.0)));
        if dx < TOLX {
            if restart || !cfg.restart_on_stall {
                return Err(fail(SolverError::Stagnation(diag.residual_inf), &x, &diag));
            }
            restart = true;
            continue;
        }
        restart = false;
    }
    Err(fail(SolverError::MaxIterExceeded(cfg.max_iter), &x, &diag))
}
