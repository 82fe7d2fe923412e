//! Rotating-frame equations of motion.
//!
//! Every model shares the Hamiltonian structure
//!
//! ```text
//! H = |eta|^2 / 2 - (xi1 eta2 - xi2 eta1) + V(xi)
//! ```
//!
//! with unit angular velocity of the frame, so the canonical flow is
//! `xi' = eta + (xi2, -xi1, 0)` and `eta' = (eta2, -eta1, 0) - grad V`.
//! Models differ only in the potential `V`:
//!
//! * [`Model::CrtbpBarycentric`]: origin at the barycentre, `m1 = 1 - mu`
//!   at `(mu, 0, 0)` and `m2 = mu` at `(mu - 1, 0, 0)`.
//! * [`Model::CrtbpM2Centered`]: the same problem with the origin moved to
//!   `m2`, so `m1` sits at `(1, 0, 0)`.
//! * [`Model::HillLunar`]: the scaled limit around a single primary with the
//!   tidal term `-(3/2 q1^2 - |q|^2 / 2)`.
//! * [`Model::Kepler`]: a single central mass in the rotating frame (the
//!   approximate system the seeds are exact orbits of).
//!
//! Canonical momenta in every model are `eta = v + (-x2, x1, 0)` in the
//! model's own coordinates.

use nalgebra::Matrix6;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Distance below which the vector field refuses to evaluate.
pub const COLLISION_RADIUS: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Error)]
pub enum DynamicsError {
    #[error("distance {distance:e} to a primary is below the collision guard")]
    CollisionProximity { distance: f64 },
    #[error("mass ratio {0} outside (0, 1)")]
    InvalidMassRatio(f64),
    #[error("non-finite state component")]
    NonFinite,
}

/// Position and rotating-frame velocity of the infinitesimal body.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct State6 {
    pub xi: [f64; 3],
    pub v: [f64; 3],
}

/// Position and conjugate momentum.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CanonicalState {
    pub xi: [f64; 3],
    pub eta: [f64; 3],
}

impl State6 {
    pub fn new(xi: [f64; 3], v: [f64; 3]) -> Self {
        Self { xi, v }
    }

    pub fn from_array(a: [f64; 6]) -> Self {
        Self {
            xi: [a[0], a[1], a[2]],
            v: [a[3], a[4], a[5]],
        }
    }

    pub fn to_array(&self) -> [f64; 6] {
        [self.xi[0], self.xi[1], self.xi[2], self.v[0], self.v[1], self.v[2]]
    }

    pub fn is_finite(&self) -> bool {
        self.to_array().iter().all(|c| c.is_finite())
    }

    pub fn to_canonical(&self) -> CanonicalState {
        CanonicalState {
            xi: self.xi,
            eta: [
                self.v[0] - self.xi[1],
                self.v[1] + self.xi[0],
                self.v[2],
            ],
        }
    }
}

impl CanonicalState {
    pub fn from_array(a: [f64; 6]) -> Self {
        Self {
            xi: [a[0], a[1], a[2]],
            eta: [a[3], a[4], a[5]],
        }
    }

    pub fn to_array(&self) -> [f64; 6] {
        [
            self.xi[0], self.xi[1], self.xi[2], self.eta[0], self.eta[1], self.eta[2],
        ]
    }

    pub fn to_state(&self) -> State6 {
        State6 {
            xi: self.xi,
            v: [
                self.eta[0] + self.xi[1],
                self.eta[1] - self.xi[0],
                self.eta[2],
            ],
        }
    }
}

/// Dynamical model of the infinitesimal body.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Model {
    CrtbpBarycentric { mu: f64 },
    CrtbpM2Centered { mu: f64 },
    HillLunar,
    /// Rotating-frame two-body problem around a mass `gm` at the origin.
    Kepler { gm: f64 },
}

/// Point masses and tidal terms making up a model's potential.
struct PotentialTerms {
    masses: [(f64, [f64; 3]); 2],
    count: usize,
    /// Coefficients of the quadratic tidal term `sum c_i x_i^2 / 2`.
    quadratic: [f64; 3],
    /// Coefficient of the linear term `c x1`.
    linear: f64,
    constant: f64,
}

impl Model {
    pub fn crtbp(mu: f64) -> Result<Self, DynamicsError> {
        check_mu(mu)?;
        Ok(Model::CrtbpBarycentric { mu })
    }

    pub fn crtbp_m2(mu: f64) -> Result<Self, DynamicsError> {
        check_mu(mu)?;
        Ok(Model::CrtbpM2Centered { mu })
    }

    pub fn validate(&self) -> Result<(), DynamicsError> {
        match *self {
            Model::CrtbpBarycentric { mu } | Model::CrtbpM2Centered { mu } => check_mu(mu),
            Model::HillLunar => Ok(()),
            Model::Kepler { gm } if gm > 0.0 && gm.is_finite() => Ok(()),
            Model::Kepler { gm } => Err(DynamicsError::InvalidMassRatio(gm)),
        }
    }

    fn terms(&self) -> PotentialTerms {
        match *self {
            Model::CrtbpBarycentric { mu } => PotentialTerms {
                masses: [(1.0 - mu, [mu, 0.0, 0.0]), (mu, [mu - 1.0, 0.0, 0.0])],
                count: 2,
                quadratic: [0.0; 3],
                linear: 0.0,
                constant: 0.0,
            },
            Model::CrtbpM2Centered { mu } => PotentialTerms {
                masses: [(mu, [0.0; 3]), (1.0 - mu, [1.0, 0.0, 0.0])],
                count: 2,
                quadratic: [0.0; 3],
                linear: 1.0 - mu,
                constant: -0.5 * (1.0 - mu) * (1.0 - mu),
            },
            Model::HillLunar => PotentialTerms {
                masses: [(1.0, [0.0; 3]), (0.0, [0.0; 3])],
                count: 1,
                quadratic: [-2.0, 1.0, 1.0],
                linear: 0.0,
                constant: 0.0,
            },
            Model::Kepler { gm } => PotentialTerms {
                masses: [(gm, [0.0; 3]), (0.0, [0.0; 3])],
                count: 1,
                quadratic: [0.0; 3],
                linear: 0.0,
                constant: 0.0,
            },
        }
    }

    /// Potential energy `V(xi)`.
    pub fn potential(&self, xi: &[f64; 3]) -> Result<f64, DynamicsError> {
        let terms = self.terms();
        let mut v = terms.constant + terms.linear * xi[0];
        for i in 0..3 {
            v += 0.5 * terms.quadratic[i] * xi[i] * xi[i];
        }
        for &(m, c) in &terms.masses[..terms.count] {
            let r = distance(xi, &c)?;
            v -= m / r;
        }
        Ok(v)
    }

    /// Gradient of the potential.
    pub fn potential_gradient(&self, xi: &[f64; 3]) -> Result<[f64; 3], DynamicsError> {
        let terms = self.terms();
        let mut g = [0.0; 3];
        g[0] += terms.linear;
        for i in 0..3 {
            g[i] += terms.quadratic[i] * xi[i];
        }
        for &(m, c) in &terms.masses[..terms.count] {
            let r = distance(xi, &c)?;
            let r3 = r * r * r;
            for i in 0..3 {
                g[i] += m * (xi[i] - c[i]) / r3;
            }
        }
        Ok(g)
    }

    /// Hessian of the potential (closed form).
    pub fn potential_hessian(&self, xi: &[f64; 3]) -> Result<[[f64; 3]; 3], DynamicsError> {
        let terms = self.terms();
        let mut h = [[0.0; 3]; 3];
        for i in 0..3 {
            h[i][i] += terms.quadratic[i];
        }
        for &(m, c) in &terms.masses[..terms.count] {
            let r = distance(xi, &c)?;
            let r2 = r * r;
            let r3 = r2 * r;
            let r5 = r3 * r2;
            let d = [xi[0] - c[0], xi[1] - c[1], xi[2] - c[2]];
            for i in 0..3 {
                for j in 0..3 {
                    let delta = if i == j { 1.0 } else { 0.0 };
                    h[i][j] += m * (delta / r3 - 3.0 * d[i] * d[j] / r5);
                }
            }
        }
        Ok(h)
    }

    /// Rotating-frame vector field: returns `(xi', xi'')`.
    pub fn vector_field(&self, s: &State6) -> Result<[f64; 6], DynamicsError> {
        let g = self.potential_gradient(&s.xi)?;
        Ok([
            s.v[0],
            s.v[1],
            s.v[2],
            2.0 * s.v[1] + s.xi[0] - g[0],
            -2.0 * s.v[0] + s.xi[1] - g[1],
            -g[2],
        ])
    }

    /// Canonical flow `(xi', eta')` at `y = (xi, eta)`.
    pub fn canonical_field(&self, y: &[f64; 6]) -> Result<[f64; 6], DynamicsError> {
        let xi = [y[0], y[1], y[2]];
        let g = self.potential_gradient(&xi)?;
        Ok([
            y[3] + y[1],
            y[4] - y[0],
            y[5],
            y[4] - g[0],
            -y[3] - g[1],
            -g[2],
        ])
    }

    /// Hamiltonian (Jacobi-type integral) of a rotating-frame state.
    pub fn hamiltonian(&self, s: &State6) -> Result<f64, DynamicsError> {
        self.hamiltonian_canonical(&s.to_canonical())
    }

    pub fn hamiltonian_canonical(&self, c: &CanonicalState) -> Result<f64, DynamicsError> {
        let (xi, eta) = (c.xi, c.eta);
        let kinetic = 0.5 * (eta[0] * eta[0] + eta[1] * eta[1] + eta[2] * eta[2]);
        let coriolis = xi[0] * eta[1] - xi[1] * eta[0];
        Ok(kinetic - coriolis + self.potential(&xi)?)
    }

    /// Jacobian of the canonical flow, `d(xi', eta') / d(xi, eta)`.
    pub fn flow_jacobian(&self, y: &[f64; 6]) -> Result<Matrix6<f64>, DynamicsError> {
        let hess = self.potential_hessian(&[y[0], y[1], y[2]])?;
        let mut a = Matrix6::zeros();
        // rotation blocks
        a[(0, 1)] = 1.0;
        a[(1, 0)] = -1.0;
        a[(3, 4)] = 1.0;
        a[(4, 3)] = -1.0;
        for i in 0..3 {
            a[(i, i + 3)] = 1.0;
            for j in 0..3 {
                a[(i + 3, j)] = -hess[i][j];
            }
        }
        Ok(a)
    }

    /// Right-hand side of the variational equations, `A(y) Z`.
    pub fn variational_rhs(
        &self,
        y: &[f64; 6],
        z: &Matrix6<f64>,
    ) -> Result<Matrix6<f64>, DynamicsError> {
        Ok(self.flow_jacobian(y)? * z)
    }

    /// State plus column-major fundamental matrix, 42 components.
    pub fn bundle_field(&self, y: &[f64; 42]) -> Result<[f64; 42], DynamicsError> {
        let s: [f64; 6] = y[..6].try_into().expect("slice of six");
        let head = self.canonical_field(&s)?;
        let z = Matrix6::from_column_slice(&y[6..]);
        let dz = self.variational_rhs(&s, &z)?;
        let mut out = [0.0; 42];
        out[..6].copy_from_slice(&head);
        out[6..].copy_from_slice(dz.as_slice());
        Ok(out)
    }
}

/// Barycentric to m2-centred coordinates (velocities unchanged).
pub fn m2_frame_shift(s: &State6, mu: f64) -> State6 {
    State6 {
        xi: [s.xi[0] + (1.0 - mu), s.xi[1], s.xi[2]],
        v: s.v,
    }
}

pub fn m2_frame_unshift(s: &State6, mu: f64) -> State6 {
    State6 {
        xi: [s.xi[0] - (1.0 - mu), s.xi[1], s.xi[2]],
        v: s.v,
    }
}

fn check_mu(mu: f64) -> Result<(), DynamicsError> {
    if mu > 0.0 && mu < 1.0 {
        Ok(())
    } else {
        Err(DynamicsError::InvalidMassRatio(mu))
    }
}

fn distance(x: &[f64; 3], c: &[f64; 3]) -> Result<f64, DynamicsError> {
    let d = ((x[0] - c[0]).powi(2) + (x[1] - c[1]).powi(2) + (x[2] - c[2]).powi(2)).sqrt();
    if !d.is_finite() {
        return Err(DynamicsError::NonFinite);
    }
    if d < COLLISION_RADIUS {
        return Err(DynamicsError::CollisionProximity { distance: d });
    }
    Ok(d)
}

/// Standard symplectic form `[[0, I], [-I, 0]]`.
pub fn symplectic_form() -> Matrix6<f64> {
    let mut j = Matrix6::zeros();
    for i in 0..3 {
        j[(i, i + 3)] = 1.0;
        j[(i + 3, i)] = -1.0;
    }
    j
}

#[cfg(test)]
mod tests {
    use super::*;

    fn fd_canonical_jacobian(model: &Model, y: &[f64; 6], h: f64) -> Matrix6<f64> {
        let mut m = Matrix6::zeros();
        for j in 0..6 {
            let mut yp = *y;
            let mut ym = *y;
            yp[j] += h;
            ym[j] -= h;
            let fp = model.canonical_field(&yp).unwrap();
            let fm = model.canonical_field(&ym).unwrap();
            for i in 0..6 {
                m[(i, j)] = (fp[i] - fm[i]) / (2.0 * h);
            }
        }
        m
    }

    #[test]
    fn barycentric_substitution_at_equal_masses() {
        let model = Model::crtbp(0.5).unwrap();
        let s = State6::new([0.0, 1.0, 0.0], [0.0; 3]);
        let f = model.vector_field(&s).unwrap();
        let r3 = 1.25f64.powf(1.5);
        // x-components of the two attractions cancel
        assert!(f[3].abs() < 1e-15);
        assert!((f[4] - (1.0 - 1.0 / r3)).abs() < 1e-15);
        assert_eq!(f[5], 0.0);
    }

    #[test]
    fn hill_collinear_direction() {
        let s = State6::new([1.0, 0.0, 0.0], [0.0; 3]);
        let f = Model::HillLunar.vector_field(&s).unwrap();
        assert_eq!(f, [0.0, 0.0, 0.0, 2.0, 0.0, 0.0]);
    }

    #[test]
    fn collision_guard() {
        let s = State6::new([1e-7, 0.0, 0.0], [0.0; 3]);
        for model in [
            Model::HillLunar,
            Model::crtbp_m2(0.1).unwrap(),
            Model::Kepler { gm: 1.0 },
        ] {
            assert!(matches!(
                model.vector_field(&s),
                Err(DynamicsError::CollisionProximity { .. })
            ));
        }
        let near_m1 = State6::new([0.5 + 5e-7, 0.0, 0.0], [0.0; 3]);
        assert!(Model::crtbp(0.5).unwrap().hamiltonian(&near_m1).is_err());
    }

    #[test]
    fn invalid_mass_ratio() {
        assert!(Model::crtbp(0.0).is_err());
        assert!(Model::crtbp_m2(1.0).is_err());
    }

    #[test]
    fn frame_shift_examples() {
        let mu = 0.3;
        let s = State6::new([-(1.0 - mu), 0.0, 0.0], [0.1, 0.2, 0.3]);
        let q = m2_frame_shift(&s, mu);
        assert_eq!(q.xi, [0.0, 0.0, 0.0]);
        assert_eq!(q.v, s.v);
        let s = State6::new([0.0, 1.0, 2.0], [0.0; 3]);
        assert_eq!(m2_frame_shift(&s, 0.5).xi[0], 0.5);
    }

    #[test]
    fn m2_centred_equals_shifted_barycentric() {
        let mu = 0.2;
        let bary = Model::crtbp(mu).unwrap();
        let m2 = Model::crtbp_m2(mu).unwrap();
        let s = State6::new([0.3, -0.4, 0.25], [0.1, -0.7, 0.2]);
        let q = m2_frame_shift(&s, mu);
        let fb = bary.vector_field(&s).unwrap();
        let fq = m2.vector_field(&q).unwrap();
        for i in 0..6 {
            assert!((fb[i] - fq[i]).abs() < 1e-13, "component {i}");
        }
    }

    #[test]
    fn reflections_preserve_energy() {
        let model = Model::crtbp(0.3).unwrap();
        let s = State6::new([0.7, 0.4, -0.3], [0.2, -0.1, 0.5]);
        // R1: (x1, -x2, -x3, -v1, v2, v3); R2: (x1, -x2, x3, -v1, v2, -v3)
        let r1 = State6::new([0.7, -0.4, 0.3], [-0.2, -0.1, 0.5]);
        let r2 = State6::new([0.7, -0.4, -0.3], [-0.2, -0.1, -0.5]);
        let h = model.hamiltonian(&s).unwrap();
        assert!((model.hamiltonian(&r1).unwrap() - h).abs() < 1e-14);
        assert!((model.hamiltonian(&r2).unwrap() - h).abs() < 1e-14);
    }

    #[test]
    fn canonical_field_matches_newtonian_form() {
        let model = Model::crtbp_m2(0.06).unwrap();
        let s = State6::new([0.12, 0.05, -0.03], [0.3, 0.4, 0.1]);
        let c = s.to_canonical().to_array();
        let dc = model.canonical_field(&c).unwrap();
        let f = model.vector_field(&s).unwrap();
        // xi' agrees
        for i in 0..3 {
            assert!((dc[i] - f[i]).abs() < 1e-14);
        }
        // eta' = v' + (-v2, v1, 0)
        assert!((dc[3] - (f[3] - s.v[1])).abs() < 1e-12);
        assert!((dc[4] - (f[4] + s.v[0])).abs() < 1e-12);
        assert!((dc[5] - f[5]).abs() < 1e-12);
    }

    #[test]
    fn jacobian_is_traceless_and_matches_fd() {
        for model in [
            Model::crtbp(0.5).unwrap(),
            Model::crtbp_m2(0.001).unwrap(),
            Model::HillLunar,
        ] {
            let y = [0.9, 0.7, 0.4, -0.3, 0.8, 0.2];
            let a = model.flow_jacobian(&y).unwrap();
            assert!(a.trace().abs() < 1e-14);
            let fd = fd_canonical_jacobian(&model, &y, 1e-6);
            assert!((a - fd).amax() < 1e-6);
        }
    }

    #[test]
    fn hamiltonian_gradient_generates_flow() {
        // xi' = dH/deta, eta' = -dH/dxi checked by central differences of H
        let model = Model::HillLunar;
        let y = [0.2, -0.1, 0.15, 0.5, 1.4, -0.3];
        let f = model.canonical_field(&y).unwrap();
        let h = 1e-6;
        for k in 0..6 {
            let mut yp = y;
            let mut ym = y;
            yp[k] += h;
            ym[k] -= h;
            let hp = model
                .hamiltonian_canonical(&CanonicalState::from_array(yp))
                .unwrap();
            let hm = model
                .hamiltonian_canonical(&CanonicalState::from_array(ym))
                .unwrap();
            let d = (hp - hm) / (2.0 * h);
            let expected = if k < 3 { -f[k + 3] } else { f[k - 3] };
            assert!((d - expected).abs() < 1e-7, "k={k}: {d} vs {expected}");
        }
    }
}
