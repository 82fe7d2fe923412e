//! Quarter-period periodicity residual.

use nalgebra::{DVector, Matrix3};
use serde::{Deserialize, Serialize};

use crate::dynamics::{Model, State6};
use crate::integrator::{
    propagate_to_nth_crossing, Crossing, IntegratorConfig, IntegratorError, VariationalBundle,
};
use crate::seeds::{build_seed, SeedError, SeedSpec, StartPlane};
use crate::solver::{broyden_solve, Diagnostics, SolverConfig, SolverError, SolverFailure};

/// Safety horizon in units of the seed quarter period. Continued orbits
/// may take several times longer than the seed to reach the target
/// crossing.
pub const T_MAX_FACTOR: f64 = 16.0;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ShootingProblem {
    pub model: Model,
    pub plane: StartPlane,
    /// Sign changes of `xi2` after `t = 0` up to the quarter period.
    pub sign_changes: usize,
    pub t0_quarter: f64,
    pub t_max: f64,
    pub cfg: IntegratorConfig,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ResidualVector {
    pub r: [f64; 3],
    pub t_quarter: f64,
}

impl ResidualVector {
    pub fn inf_norm(&self) -> f64 {
        self.r.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    /// Norm of the two genuine defects, without the event defect.
    pub fn defect_norm(&self) -> f64 {
        self.r[0].abs().max(self.r[1].abs())
    }
}

/// Residual together with the propagation it came from.
#[derive(Debug, Clone, Copy)]
pub struct Evaluation {
    pub residual: ResidualVector,
    pub crossing: Crossing,
    pub initial: State6,
}

impl ShootingProblem {
    /// Problem for a seed: `k + j + 2` passings with the start counted.
    pub fn from_seed(spec: &SeedSpec) -> Result<(Self, [f64; 3]), SeedError> {
        let seed = build_seed(spec)?;
        let problem = Self::new(
            spec.model(),
            spec.case.plane,
            seed.crossing_target - 1,
            seed.t0_quarter,
        );
        Ok((problem, problem.unknowns_of(&seed.state)))
    }

    pub fn new(model: Model, plane: StartPlane, sign_changes: usize, t0_quarter: f64) -> Self {
        Self {
            model,
            plane,
            sign_changes,
            t0_quarter,
            t_max: T_MAX_FACTOR * t0_quarter,
            cfg: IntegratorConfig::for_quarter_period(t0_quarter),
        }
    }

    /// Start state for a vector of unknowns.
    pub fn initial_state(&self, x: &[f64; 3]) -> State6 {
        match self.plane {
            StartPlane::L1 => State6::new([x[0], 0.0, 0.0], [0.0, x[1], x[2]]),
            StartPlane::L2 => State6::new([x[0], 0.0, x[1]], [0.0, x[2], 0.0]),
            StartPlane::YAxis => State6::new([0.0, x[0], x[1]], [x[2], 0.0, 0.0]),
        }
    }

    pub fn unknowns_of(&self, s: &State6) -> [f64; 3] {
        match self.plane {
            StartPlane::L1 => [s.xi[0], s.v[1], s.v[2]],
            StartPlane::L2 => [s.xi[0], s.xi[2], s.v[1]],
            StartPlane::YAxis => [s.xi[1], s.xi[2], s.v[0]],
        }
    }

    fn defects(&self, s: &State6) -> [f64; 3] {
        match self.plane {
            StartPlane::L1 | StartPlane::YAxis => [s.v[0], s.v[2], s.xi[1]],
            StartPlane::L2 => [s.xi[2], s.v[0], s.xi[1]],
        }
    }

    pub fn evaluate(&self, x: &[f64; 3], with_bundle: bool) -> Result<Evaluation, IntegratorError> {
        let s0 = self.initial_state(x);
        let crossing = propagate_to_nth_crossing(
            &self.model,
            &s0,
            self.sign_changes,
            &self.cfg,
            self.t_max,
            with_bundle,
        )?;
        let residual = ResidualVector {
            r: self.defects(&crossing.event.state_at_cross),
            t_quarter: crossing.event.t_cross,
        };
        Ok(Evaluation {
            residual,
            crossing,
            initial: s0,
        })
    }

    pub fn residual(&self, x: &[f64; 3]) -> Result<ResidualVector, IntegratorError> {
        Ok(self.evaluate(x, false)?.residual)
    }

    /// Quarter-period fundamental matrix at the converged unknowns.
    pub fn quarter_bundle(&self, x: &[f64; 3]) -> Result<(Evaluation, VariationalBundle), IntegratorError> {
        let e = self.evaluate(x, true)?;
        let b = e.crossing.bundle.expect("bundle requested");
        Ok((e, b))
    }
}

/// Converged shooting solution.
#[derive(Debug, Clone)]
pub struct Converged {
    pub x: [f64; 3],
    pub residual: ResidualVector,
    pub diagnostics: Diagnostics,
    /// Quarter period at every residual evaluation, in order.
    pub t_quarter_history: Vec<f64>,
}

impl ShootingProblem {
    /// Drives the residual to zero with Broyden's method from `x0`.
    pub fn solve(
        &self,
        x0: &[f64; 3],
        cfg: &SolverConfig,
    ) -> Result<Converged, SolverFailure<IntegratorError>> {
        let history = std::cell::RefCell::new(Vec::new());
        let phi = |x: &DVector<f64>| {
            let r = self.residual(&[x[0], x[1], x[2]])?;
            history.borrow_mut().push((r.t_quarter, r.inf_norm()));
            Ok(DVector::from_row_slice(&r.r))
        };
        let sol = broyden_solve(phi, &DVector::from_row_slice(x0), cfg)?;
        let x = [sol.x[0], sol.x[1], sol.x[2]];
        let residual = self.residual(&x).map_err(|e| SolverFailure {
            error: SolverError::Residual(e),
            x: sol.x.clone(),
            diagnostics: sol.diagnostics.clone(),
        })?;
        let t_quarter_history = history.into_inner().into_iter().map(|(t, _)| t).collect();
        Ok(Converged {
            x,
            residual,
            diagnostics: sol.diagnostics,
            t_quarter_history,
        })
    }
}

impl ShootingProblem {
    /// Forward-difference Jacobian of the residual.
    pub fn fd_jacobian(&self, x: &[f64; 3]) -> Result<Matrix3<f64>, IntegratorError> {
        let f0 = self.residual(x)?.r;
        fd_jacobian_of(|y| Ok(self.residual(y)?.r), x, &f0)
    }
}

/// Forward differences with step `max(|x_i|, 1) sqrt(eps)`.
pub fn fd_jacobian_of<F>(f: F, x: &[f64; 3], f0: &[f64; 3]) -> Result<Matrix3<f64>, IntegratorError>
where
    F: Fn(&[f64; 3]) -> Result<[f64; 3], IntegratorError>,
{
    let sqrt_eps = f64::EPSILON.sqrt();
    let mut jac = Matrix3::zeros();
    for j in 0..3 {
        let mut xp = *x;
        let h = x[j].abs().max(1.0) * sqrt_eps;
        xp[j] += h;
        let h = xp[j] - x[j];
        let fp = f(&xp)?;
        for i in 0..3 {
            jac[(i, j)] = (fp[i] - f0[i]) / h;
        }
    }
    Ok(jac)
}
