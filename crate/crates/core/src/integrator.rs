//! Adaptive Runge-Kutta-Fehlberg 7(8) propagation with `xi2 = 0` event detection.

use nalgebra::Matrix6;
use thiserror::Error;

use crate::dynamics::{DynamicsError, Model, State6};

const STAGES: usize = 13;

const C: [f64; STAGES] = [
    0.0,
    2.0 / 27.0,
    1.0 / 9.0,
    1.0 / 6.0,
    5.0 / 12.0,
    0.5,
    5.0 / 6.0,
    1.0 / 6.0,
    2.0 / 3.0,
    1.0 / 3.0,
    1.0,
    0.0,
    1.0,
];

const A: [[f64; 12]; STAGES] = [
    [0.0; 12],
    [2.0 / 27.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0],
    [1.0 / 36.0, 1.0 / 12.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0],
    [1.0 / 24.0, 0.0, 1.0 / 8.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0],
    [5.0 / 12.0, 0.0, -25.0 / 16.0, 25.0 / 16.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0],
    [1.0 / 20.0, 0.0, 0.0, 1.0 / 4.0, 1.0 / 5.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0],
    [
        -25.0 / 108.0, 0.0, 0.0, 125.0 / 108.0, -65.0 / 27.0, 125.0 / 54.0, 0.0, 0.0, 0.0, 0.0,
        0.0, 0.0,
    ],
    [
        31.0 / 300.0, 0.0, 0.0, 0.0, 61.0 / 225.0, -2.0 / 9.0, 13.0 / 900.0, 0.0, 0.0, 0.0, 0.0,
        0.0,
    ],
    [
        2.0, 0.0, 0.0, -53.0 / 6.0, 704.0 / 45.0, -107.0 / 9.0, 67.0 / 90.0, 3.0, 0.0, 0.0, 0.0,
        0.0,
    ],
    [
        -91.0 / 108.0, 0.0, 0.0, 23.0 / 108.0, -976.0 / 135.0, 311.0 / 54.0, -19.0 / 60.0,
        17.0 / 6.0, -1.0 / 12.0, 0.0, 0.0, 0.0,
    ],
    [
        2383.0 / 4100.0, 0.0, 0.0, -341.0 / 164.0, 4496.0 / 1025.0, -301.0 / 82.0,
        2133.0 / 4100.0, 45.0 / 82.0, 45.0 / 164.0, 18.0 / 41.0, 0.0, 0.0,
    ],
    [
        3.0 / 205.0, 0.0, 0.0, 0.0, 0.0, -6.0 / 41.0, -3.0 / 205.0, -3.0 / 41.0, 3.0 / 41.0,
        6.0 / 41.0, 0.0, 0.0,
    ],
    [
        -1777.0 / 4100.0, 0.0, 0.0, -341.0 / 164.0, 4496.0 / 1025.0, -289.0 / 82.0,
        2193.0 / 4100.0, 51.0 / 82.0, 33.0 / 164.0, 12.0 / 41.0, 0.0, 1.0,
    ],
];

/// Seventh-order weights; the solution is advanced with these.
const B7: [f64; STAGES] = [
    41.0 / 840.0,
    0.0,
    0.0,
    0.0,
    0.0,
    34.0 / 105.0,
    9.0 / 35.0,
    9.0 / 35.0,
    9.0 / 280.0,
    9.0 / 280.0,
    41.0 / 840.0,
    0.0,
    0.0,
];

/// Difference between the seventh- and eighth-order solutions is
/// `41/840 h (k0 + k10 - k11 - k12)`.
const ERR_WEIGHT: f64 = 41.0 / 840.0;

const SAFETY: f64 = 0.9;
const SHRINK_LIMIT: f64 = 0.2;
const GROW_LIMIT: f64 = 5.0;

#[derive(Debug, Clone, Copy, PartialEq, Error)]
pub enum IntegratorError {
    #[error("step size fell below h_min = {h_min:e} at t = {t}")]
    StepSizeUnderflow { t: f64, h_min: f64 },
    #[error("exceeded {0} integration steps")]
    MaxStepsExceeded(usize),
    #[error("no crossing #{target} before t_max = {t_max} ({found} found)")]
    CrossingNotFound {
        target: usize,
        found: usize,
        t_max: f64,
    },
    #[error(transparent)]
    Dynamics(#[from] DynamicsError),
    #[error("invalid integrator configuration: {0}")]
    InvalidConfig(&'static str),
}

#[derive(Debug, Clone, Copy, PartialEq, Error)]
#[error("no real root of the cubic in (0, 1)")]
pub struct NoRootInInterval;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IntegratorConfig {
    pub rel_tol: f64,
    pub abs_tol: f64,
    pub h_init: f64,
    pub h_min: f64,
    pub h_max: f64,
    pub max_steps: usize,
}

impl Default for IntegratorConfig {
    fn default() -> Self {
        Self {
            rel_tol: 1e-13,
            abs_tol: 1e-14,
            h_init: 1e-3,
            h_min: 1e-14,
            h_max: 0.1,
            max_steps: 2_000_000,
        }
    }
}

impl IntegratorConfig {
    /// Default tolerances with `h_max = t0_quarter / 200`.
    pub fn for_quarter_period(t0_quarter: f64) -> Self {
        let h_max = t0_quarter / 200.0;
        Self {
            h_max,
            h_init: (1e-3f64).min(h_max),
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<(), IntegratorError> {
        if !(self.rel_tol > 0.0 && self.abs_tol > 0.0) {
            return Err(IntegratorError::InvalidConfig("tolerances must be positive"));
        }
        if !(self.h_min > 0.0 && self.h_min <= self.h_init && self.h_init <= self.h_max) {
            return Err(IntegratorError::InvalidConfig("need 0 < h_min <= h_init <= h_max"));
        }
        Ok(())
    }
}

/// Result of a single embedded step.
#[derive(Debug, Clone, Copy)]
pub struct StepOutcome<const N: usize> {
    pub y: [f64; N],
    /// Scaled error norm; the step is acceptable when this is at most 1.
    pub err: f64,
}

/// One RKF7(8) step of size `h` from `(t, y)`, no acceptance test.
pub fn rkf78_raw<const N: usize, F, E>(
    f: &F,
    t: f64,
    y: &[f64; N],
    h: f64,
    cfg: &IntegratorConfig,
) -> Result<StepOutcome<N>, E>
where
    F: Fn(f64, &[f64; N]) -> Result<[f64; N], E>,
{
    let mut k = [[0.0; N]; STAGES];
    let mut tmp = [0.0; N];
    for s in 0..STAGES {
        tmp.copy_from_slice(y);
        for (j, kj) in k.iter().enumerate().take(s) {
            let a = A[s][j];
            if a != 0.0 {
                for i in 0..N {
                    tmp[i] += h * a * kj[i];
                }
            }
        }
        k[s] = f(t + C[s] * h, &tmp)?;
    }
    let mut y_new = *y;
    let mut err: f64 = 0.0;
    for i in 0..N {
        let mut incr = 0.0;
        for s in 0..STAGES {
            incr += B7[s] * k[s][i];
        }
        y_new[i] += h * incr;
        let e = h * ERR_WEIGHT * (k[0][i] + k[10][i] - k[11][i] - k[12][i]);
        let scale = cfg.abs_tol + cfg.rel_tol * y[i].abs().max(y_new[i].abs());
        err = err.max(e.abs() / scale);
    }
    Ok(StepOutcome { y: y_new, err })
}

/// Controller proposal for the next step after an error estimate `err`.
pub fn next_step_size(h: f64, err: f64) -> f64 {
    let factor = if err == 0.0 {
        GROW_LIMIT
    } else {
        (SAFETY * err.powf(-1.0 / 8.0)).clamp(SHRINK_LIMIT, GROW_LIMIT)
    };
    h * factor
}

/// An accepted adaptive step.
#[derive(Debug, Clone, Copy)]
pub struct AcceptedStep<const N: usize> {
    pub y: [f64; N],
    pub h_used: f64,
    pub h_next: f64,
    pub err: f64,
}

/// Adaptive step: retries with shrinking `h` until the error test passes.
/// `h` may be negative for backward integration.
pub fn rkf78_step<const N: usize, F>(
    f: &F,
    t: f64,
    y: &[f64; N],
    h: f64,
    cfg: &IntegratorConfig,
) -> Result<AcceptedStep<N>, IntegratorError>
where
    F: Fn(f64, &[f64; N]) -> Result<[f64; N], DynamicsError>,
{
    let dir = h.signum();
    let mut h = dir * h.abs().min(cfg.h_max);
    loop {
        let out = rkf78_raw(f, t, y, h, cfg)?;
        let finite = out.y.iter().all(|v| v.is_finite());
        if finite && out.err <= 1.0 {
            let h_next = dir * next_step_size(h.abs(), out.err).min(cfg.h_max);
            return Ok(AcceptedStep {
                y: out.y,
                h_used: h,
                h_next,
                err: out.err,
            });
        }
        let shrunk = if finite {
            next_step_size(h.abs(), out.err)
        } else {
            SHRINK_LIMIT * h.abs()
        };
        if shrunk < cfg.h_min {
            return Err(IntegratorError::StepSizeUnderflow { t, h_min: cfg.h_min });
        }
        h = dir * shrunk;
    }
}

/// Integrates from `(t0, y0)` to exactly `t1` (either direction).
/// `observer` sees every accepted node, including the first and last.
pub fn propagate<const N: usize, F, O>(
    f: &F,
    t0: f64,
    y0: &[f64; N],
    t1: f64,
    cfg: &IntegratorConfig,
    mut observer: O,
) -> Result<[f64; N], IntegratorError>
where
    F: Fn(f64, &[f64; N]) -> Result<[f64; N], DynamicsError>,
    O: FnMut(f64, &[f64; N]),
{
    cfg.validate()?;
    let dir = if t1 >= t0 { 1.0 } else { -1.0 };
    let mut t = t0;
    let mut y = *y0;
    let mut h = dir * cfg.h_init;
    observer(t, &y);
    let mut steps = 0;
    while dir * (t1 - t) > 0.0 {
        if steps >= cfg.max_steps {
            return Err(IntegratorError::MaxStepsExceeded(cfg.max_steps));
        }
        let remaining = t1 - t;
        let landing = h.abs() >= remaining.abs();
        let trial = if landing { remaining } else { h };
        let step = rkf78_step(f, t, &y, trial, cfg)?;
        let exact_landing = landing && step.h_used == trial;
        t = if exact_landing { t1 } else { t + step.h_used };
        y = step.y;
        if !exact_landing {
            h = step.h_next;
        }
        steps += 1;
        observer(t, &y);
    }
    Ok(y)
}

/// Two-point cubic Hermite interpolant evaluated at `l1 = (t - t2)/(t1 - t2)`,
/// so that `l1 = 1` reproduces `F1` and `l1 = 0` reproduces `F2`.
/// `dt = t2 - t1 > 0`.
pub fn hermite_dense<const N: usize>(
    f1: &[f64; N],
    f2: &[f64; N],
    d1: &[f64; N],
    d2: &[f64; N],
    dt: f64,
    l1: f64,
) -> [f64; N] {
    let mut out = [0.0; N];
    for i in 0..N {
        let [c3, c2, c1, c0] = hermite_coefficients(f1[i], f2[i], d1[i], d2[i], dt);
        out[i] = ((c3 * l1 + c2) * l1 + c1) * l1 + c0;
    }
    out
}

/// Coefficients `[c3, c2, c1, c0]` of one Hermite component as a cubic in `l1`.
pub fn hermite_coefficients(f1: f64, f2: f64, d1: f64, d2: f64, dt: f64) -> [f64; 4] {
    // cubic in l2 = 1 - l1, anchored at F1 when l2 = 0
    let a3 = dt * (d1 + d2) + 2.0 * (f1 - f2);
    let a2 = dt * (-d2 - 2.0 * d1) + 3.0 * (f2 - f1);
    let a1 = dt * d1;
    let a0 = f1;
    [
        -a3,
        3.0 * a3 + a2,
        -3.0 * a3 - 2.0 * a2 - a1,
        a3 + a2 + a1 + a0,
    ]
}

const ROOT_TOL: f64 = 1e-12;

/// Real root of `c3 l^3 + c2 l^2 + c1 l + c0` in `(0, 1)`; the largest
/// one when there are several.
pub fn cubic_root_in_unit_interval(
    c3: f64,
    c2: f64,
    c1: f64,
    c0: f64,
) -> Result<f64, NoRootInInterval> {
    let scale = c3.abs().max(c2.abs()).max(c1.abs()).max(c0.abs());
    if scale == 0.0 {
        return Err(NoRootInInterval);
    }
    let (c3, c2, c1, c0) = (c3 / scale, c2 / scale, c1 / scale, c0 / scale);
    let p = |x: f64| ((c3 * x + c2) * x + c1) * x + c0;
    let dp = |x: f64| (3.0 * c3 * x + 2.0 * c2) * x + c1;

    let mut roots = real_roots(c3, c2, c1, c0);
    for r in roots.iter_mut() {
        // two Newton polishes against cancellation in the closed form
        for _ in 0..2 {
            let d = dp(*r);
            if d != 0.0 {
                let next = *r - p(*r) / d;
                if next.is_finite() {
                    *r = next;
                }
            }
        }
    }
    // interior roots first; endpoint roots only within the tolerance band
    let largest = |lo: f64, hi: f64| {
        roots
            .iter()
            .copied()
            .filter(|r| *r > lo && *r < hi)
            .fold(None, |best: Option<f64>, r| Some(best.map_or(r, |b| b.max(r))))
    };
    largest(ROOT_TOL, 1.0 - ROOT_TOL)
        .or_else(|| largest(-ROOT_TOL, 1.0 + ROOT_TOL))
        .map(|r| r.clamp(0.0, 1.0))
        .ok_or(NoRootInInterval)
}

fn real_roots(c3: f64, c2: f64, c1: f64, c0: f64) -> Vec<f64> {
    const EPS: f64 = 1e-14;
    if c3.abs() < EPS {
        if c2.abs() < EPS {
            if c1.abs() < EPS {
                return Vec::new();
            }
            return vec![-c0 / c1];
        }
        let disc = c1 * c1 - 4.0 * c2 * c0;
        if disc < 0.0 {
            return Vec::new();
        }
        let q = -0.5 * (c1 + c1.signum() * disc.sqrt());
        let mut out = Vec::with_capacity(2);
        if q != 0.0 {
            out.push(q / c2);
            out.push(c0 / q);
        } else {
            out.push(0.0);
        }
        return out;
    }
    // depressed cubic x = t - b/3 for t^3 + b t^2 + c t + d
    let b = c2 / c3;
    let c = c1 / c3;
    let d = c0 / c3;
    let q = (b * b - 3.0 * c) / 9.0;
    let r = (2.0 * b * b * b - 9.0 * b * c + 27.0 * d) / 54.0;
    let shift = b / 3.0;
    if r * r < q * q * q {
        let theta = (r / (q * q * q).sqrt()).clamp(-1.0, 1.0).acos();
        let m = -2.0 * q.sqrt();
        let tau = std::f64::consts::TAU;
        vec![
            m * (theta / 3.0).cos() - shift,
            m * ((theta + tau) / 3.0).cos() - shift,
            m * ((theta - tau) / 3.0).cos() - shift,
        ]
    } else {
        let a = -r.signum() * (r.abs() + (r * r - q * q * q).sqrt()).cbrt();
        let bb = if a != 0.0 { q / a } else { 0.0 };
        vec![a + bb - shift]
    }
}

/// State plus fundamental matrix, both in canonical coordinates.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VariationalBundle {
    pub t: f64,
    /// Canonical `(xi, eta)`.
    pub y: [f64; 6],
    pub z: Matrix6<f64>,
}

impl VariationalBundle {
    pub fn identity(y: [f64; 6]) -> Self {
        Self {
            t: 0.0,
            y,
            z: Matrix6::identity(),
        }
    }

    fn pack(&self) -> [f64; 42] {
        let mut out = [0.0; 42];
        out[..6].copy_from_slice(&self.y);
        out[6..].copy_from_slice(self.z.as_slice());
        out
    }

    fn unpack(t: f64, a: &[f64; 42]) -> Self {
        let mut y = [0.0; 6];
        y.copy_from_slice(&a[..6]);
        Self {
            t,
            y,
            z: Matrix6::from_column_slice(&a[6..]),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CrossingEvent {
    pub t_cross: f64,
    pub state_at_cross: State6,
    /// 1-based count of sign changes of `xi2` after `t = 0`.
    pub index: usize,
}

/// What happens at a step that brackets the target crossing.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Refinement {
    /// Hermite predictor followed by Newton polishing on re-integrated
    /// partial steps (meets the 1e-12 event tolerance).
    #[default]
    Polished,
    /// Hermite interpolation only.
    HermiteOnly,
}

/// Outcome of a crossing search.
#[derive(Debug, Clone, Copy)]
pub struct Crossing {
    pub event: CrossingEvent,
    /// Canonical state at the event.
    pub y: [f64; 6],
    pub bundle: Option<VariationalBundle>,
    /// Largest relative Hamiltonian drift over accepted nodes.
    pub energy_drift: f64,
}

/// Integrates until the `n_target`-th sign change of `xi2` after `t = 0`.
///
/// The sign reference at the start is `sign(xi2(0))`, or `sign(xi2'(0))`
/// when the orbit starts on the plane. A node landing exactly on `xi2 = 0`
/// counts once.
pub fn propagate_to_nth_crossing(
    model: &Model,
    s0: &State6,
    n_target: usize,
    cfg: &IntegratorConfig,
    t_max: f64,
    with_bundle: bool,
) -> Result<Crossing, IntegratorError> {
    propagate_to_nth_crossing_with(model, s0, n_target, cfg, t_max, with_bundle, Refinement::Polished)
}

pub fn propagate_to_nth_crossing_with(
    model: &Model,
    s0: &State6,
    n_target: usize,
    cfg: &IntegratorConfig,
    t_max: f64,
    with_bundle: bool,
    refinement: Refinement,
) -> Result<Crossing, IntegratorError> {
    cfg.validate()?;
    if n_target == 0 {
        return Err(IntegratorError::InvalidConfig("n_target must be at least 1"));
    }
    if !s0.is_finite() {
        return Err(DynamicsError::NonFinite.into());
    }
    let y0 = s0.to_canonical().to_array();
    let h0 = model.hamiltonian(s0)?;
    if with_bundle {
        let b0 = VariationalBundle::identity(y0).pack();
        let f = |_t: f64, y: &[f64; 42]| model.bundle_field(y);
        let (t, y, drift, idx) =
            crossing_search(model, &f, &b0, n_target, cfg, t_max, h0, refinement)?;
        let bundle = VariationalBundle::unpack(t, &y);
        Ok(Crossing {
            event: event(t, &bundle.y, idx),
            y: bundle.y,
            bundle: Some(bundle),
            energy_drift: drift,
        })
    } else {
        let f = |_t: f64, y: &[f64; 6]| model.canonical_field(y);
        let (t, y, drift, idx) =
            crossing_search(model, &f, &y0, n_target, cfg, t_max, h0, refinement)?;
        Ok(Crossing {
            event: event(t, &y, idx),
            y,
            bundle: None,
            energy_drift: drift,
        })
    }
}

fn event(t: f64, y: &[f64; 6], index: usize) -> CrossingEvent {
    let c = crate::dynamics::CanonicalState::from_array(*y);
    CrossingEvent {
        t_cross: t,
        state_at_cross: c.to_state(),
        index,
    }
}

fn head6<const N: usize>(y: &[f64; N]) -> [f64; 6] {
    let mut out = [0.0; 6];
    out.copy_from_slice(&y[..6]);
    out
}

fn relative_drift(model: &Model, y: &[f64; 6], h0: f64) -> Result<f64, DynamicsError> {
    let h = model.hamiltonian_canonical(&crate::dynamics::CanonicalState::from_array(*y))?;
    Ok((h - h0).abs() / h0.abs().max(1e-300))
}

#[allow(clippy::too_many_arguments)]
fn crossing_search<const N: usize, F>(
    model: &Model,
    f: &F,
    y0: &[f64; N],
    n_target: usize,
    cfg: &IntegratorConfig,
    t_max: f64,
    h0: f64,
    refinement: Refinement,
) -> Result<(f64, [f64; N], f64, usize), IntegratorError>
where
    F: Fn(f64, &[f64; N]) -> Result<[f64; N], DynamicsError>,
{
    let mut t = 0.0;
    let mut y = *y0;
    let mut dy = f(t, &y)?;
    let mut sign = if y[1] != 0.0 { y[1].signum() } else { dy[1].signum() };
    if sign == 0.0 {
        sign = 1.0;
    }
    let mut count = 0;
    let mut h = cfg.h_init;
    let mut drift: f64 = 0.0;
    let mut steps = 0;
    while t < t_max {
        if steps >= cfg.max_steps {
            return Err(IntegratorError::MaxStepsExceeded(cfg.max_steps));
        }
        let step = rkf78_step(f, t, &y, h, cfg)?;
        steps += 1;
        let t_new = t + step.h_used;
        let y_new = step.y;
        let dy_new = f(t_new, &y_new)?;
        drift = drift.max(relative_drift(model, &head6(&y_new), h0)?);

        if let Some(next_sign) = node_crossing(sign, y_new[1], dy_new[1]) {
            count += 1;
            if count == n_target {
                if y_new[1] == 0.0 {
                    return Ok((t_new, y_new, drift, count));
                }
                let (tc, yc) = refine(f, t, &y, &dy, t_new, &y_new, &dy_new, cfg, refinement)?;
                drift = drift.max(relative_drift(model, &head6(&yc), h0)?);
                return Ok((tc, yc, drift, count));
            }
            sign = next_sign;
        }
        t = t_new;
        y = y_new;
        dy = dy_new;
        h = step.h_next;
    }
    Err(IntegratorError::CrossingNotFound {
        target: n_target,
        found: count,
        t_max,
    })
}

#[allow(clippy::too_many_arguments)]
fn refine<const N: usize, F>(
    f: &F,
    t1: f64,
    y1: &[f64; N],
    d1: &[f64; N],
    t2: f64,
    y2: &[f64; N],
    d2: &[f64; N],
    cfg: &IntegratorConfig,
    refinement: Refinement,
) -> Result<(f64, [f64; N]), IntegratorError>
where
    F: Fn(f64, &[f64; N]) -> Result<[f64; N], DynamicsError>,
{
    let dt = t2 - t1;
    let [c3, c2, c1, c0] = hermite_coefficients(y1[1], y2[1], d1[1], d2[1], dt);
    let l1 = match cubic_root_in_unit_interval(c3, c2, c1, c0) {
        Ok(l) => l,
        Err(NoRootInInterval) => bisect_interpolant(c3, c2, c1, c0),
    };
    let mut tau = (1.0 - l1) * dt;

    if refinement == Refinement::HermiteOnly {
        return Ok((t1 + tau, hermite_dense(y1, y2, d1, d2, dt, l1)));
    }

    // Newton on xi2(t1 + tau), each evaluation a single step from the node
    let mut best = (f64::INFINITY, tau, *y1);
    for _ in 0..12 {
        let y = if tau == 0.0 {
            *y1
        } else {
            rkf78_raw(f, t1, y1, tau, cfg)?.y
        };
        let g = y[1];
        if g.abs() < best.0 {
            best = (g.abs(), tau, y);
        }
        if g == 0.0 {
            break;
        }
        let slope = f(t1 + tau, &y)?[1];
        if slope == 0.0 {
            break;
        }
        let delta = g / slope;
        let next = (tau - delta).clamp(0.0, dt);
        if (next - tau).abs() <= 4.0 * f64::EPSILON * (t1 + tau).abs().max(1.0) {
            tau = next;
            let y = rkf78_raw(f, t1, y1, tau, cfg)?.y;
            if y[1].abs() < best.0 {
                best = (y[1].abs(), tau, y);
            }
            break;
        }
        tau = next;
    }
    Ok((t1 + best.1, best.2))
}

/// Crossing test at an accepted node: `Some(new_sign)` when `xi2` changed
/// sign relative to `sign` since the previous node. An exact zero counts
/// as a crossing; the new reference sign is then taken from the slope.
fn node_crossing(sign: f64, x2: f64, dx2: f64) -> Option<f64> {
    if x2 == 0.0 {
        let d = dx2.signum();
        Some(if dx2 != 0.0 { d } else { -sign })
    } else if x2.signum() != sign {
        Some(x2.signum())
    } else {
        None
    }
}

fn bisect_interpolant(c3: f64, c2: f64, c1: f64, c0: f64) -> f64 {
    let p = |x: f64| ((c3 * x + c2) * x + c1) * x + c0;
    let (mut lo, mut hi) = (0.0, 1.0);
    let p_hi = p(hi);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if (p(mid) > 0.0) == (p_hi > 0.0) {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    0.5 * (lo + hi)
}

/// Propagates a state (no variational equations) from 0 to `t`.
pub fn propagate_state(
    model: &Model,
    s0: &State6,
    t: f64,
    cfg: &IntegratorConfig,
) -> Result<State6, IntegratorError> {
    let f = |_t: f64, y: &[f64; 6]| model.canonical_field(y);
    let y = propagate(&f, 0.0, &s0.to_canonical().to_array(), t, cfg, |_, _| {})?;
    Ok(crate::dynamics::CanonicalState::from_array(y).to_state())
}

/// Propagates state and fundamental matrix from 0 to `t`.
pub fn propagate_bundle(
    model: &Model,
    s0: &State6,
    t: f64,
    cfg: &IntegratorConfig,
) -> Result<VariationalBundle, IntegratorError> {
    let f = |_t: f64, y: &[f64; 42]| model.bundle_field(y);
    let b0 = VariationalBundle::identity(s0.to_canonical().to_array()).pack();
    let y = propagate(&f, 0.0, &b0, t, cfg, |_, _| {})?;
    Ok(VariationalBundle::unpack(t, &y))
}

/// Samples the trajectory at `n` evenly spaced times on `[0, t_end]`.
pub fn sample_trajectory(
    model: &Model,
    s0: &State6,
    t_end: f64,
    n: usize,
    cfg: &IntegratorConfig,
) -> Result<Vec<(f64, State6)>, IntegratorError> {
    let f = |_t: f64, y: &[f64; 6]| model.canonical_field(y);
    let mut out = Vec::with_capacity(n);
    let mut y = s0.to_canonical().to_array();
    let mut t = 0.0;
    out.push((0.0, *s0));
    for i in 1..n {
        let ti = t_end * i as f64 / (n - 1) as f64;
        y = propagate(&f, t, &y, ti, cfg, |_, _| {})?;
        t = ti;
        out.push((t, crate::dynamics::CanonicalState::from_array(y).to_state()));
    }
    Ok(out)
}
