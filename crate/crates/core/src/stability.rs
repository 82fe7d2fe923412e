//! Monodromy from a quarter period, eigenvalues and linear stability.
//!
//! The eigenvalue routines are the classical balance / Hessenberg / shifted
//! QR sequence, written out for small dense matrices so the result does not
//! depend on a LAPACK build.

use nalgebra::{DMatrix, Matrix6};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::dynamics::symplectic_form;
use crate::seeds::StartPlane;

/// Threshold on the stability index below which an orbit is linearly stable.
pub const RHO_STABLE: f64 = 6.0 + 1e-4;
/// Upper end of the band flagged as marginal.
pub const RHO_MARGINAL: f64 = 6.0 + 1e-2;
/// Largest tolerated `|Z^T J Z - J|` before the spectrum is distrusted.
pub const SYMPLECTIC_TOL: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum EigenError {
    #[error("QR iteration did not converge after {0} sweeps")]
    NoConvergence(usize),
    #[error("matrix has non-finite entries")]
    NonFinite,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StabilityClass {
    LinearlyStable,
    Unstable,
    Indeterminate,
}

impl StabilityClass {
    pub fn as_str(&self) -> &'static str {
        match self {
            Self::LinearlyStable => "stable",
            Self::Unstable => "unstable",
            Self::Indeterminate => "indeterminate",
        }
    }
}

impl std::str::FromStr for StabilityClass {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "stable" => Ok(Self::LinearlyStable),
            "unstable" => Ok(Self::Unstable),
            "indeterminate" => Ok(Self::Indeterminate),
            other => Err(format!("unknown stability class `{other}`")),
        }
    }
}

/// Reflection fixing the L1 start plane (`xi2 = xi3 = eta1 = 0`).
pub fn r1() -> Matrix6<f64> {
    diag([1.0, -1.0, -1.0, -1.0, 1.0, 1.0])
}

/// Reflection fixing the L2 start plane (`xi2 = eta1 = eta3 = 0`).
pub fn r2() -> Matrix6<f64> {
    diag([1.0, -1.0, 1.0, -1.0, 1.0, -1.0])
}

fn diag(d: [f64; 6]) -> Matrix6<f64> {
    Matrix6::from_diagonal(&nalgebra::Vector6::from_row_slice(&d))
}

/// `Z^{-1} = -J Z^T J` for symplectic `Z`.
pub fn symplectic_inverse(z: &Matrix6<f64>) -> Matrix6<f64> {
    let j = symplectic_form();
    -(j * z.transpose() * j)
}

pub fn symplectic_defect(z: &Matrix6<f64>) -> f64 {
    let j = symplectic_form();
    (z.transpose() * j * z - j).amax()
}

/// Reflections fixing the start plane and the quarter-period plane.
pub fn plane_reflections(plane: StartPlane) -> (Matrix6<f64>, Matrix6<f64>) {
    match plane {
        // the y-axis plane is fixed by -R1, which acts identically by conjugation
        StartPlane::L1 | StartPlane::YAxis => (r1(), r2()),
        StartPlane::L2 => (r2(), r1()),
    }
}

/// Full-period monodromy at the start point from the quarter-period matrix.
///
/// With `A` fixing the start plane and `B` fixing the quarter plane,
/// `Z(T/2) = B Zq^{-1} B Zq` and `Z(T) = A Z(T/2)^{-1} A Z(T/2)`.
pub fn monodromy_from_quarter(plane: StartPlane, zq: &Matrix6<f64>) -> Matrix6<f64> {
    let (a, b) = plane_reflections(plane);
    let half = b * symplectic_inverse(zq) * b * zq;
    a * symplectic_inverse(&half) * a * half
}

/// Parity-balances rows and columns in place; returns the scale factors.
pub fn balance(a: &mut DMatrix<f64>) -> Vec<f64> {
    const RADIX: f64 = 2.0;
    let n = a.nrows();
    let sqrdx = RADIX * RADIX;
    let mut scale = vec![1.0; n];
    let mut done = false;
    while !done {
        done = true;
        for i in 0..n {
            let mut r = 0.0;
            let mut c = 0.0;
            for j in 0..n {
                if j != i {
                    c += a[(j, i)].abs();
                    r += a[(i, j)].abs();
                }
            }
            if c == 0.0 || r == 0.0 {
                continue;
            }
            let s = c + r;
            let mut f = 1.0;
            let mut g = r / RADIX;
            while c < g {
                f *= RADIX;
                c *= sqrdx;
            }
            g = r * RADIX;
            while c > g {
                f /= RADIX;
                c /= sqrdx;
            }
            if (c + r) / f < 0.95 * s {
                done = false;
                scale[i] *= f;
                for j in 0..n {
                    a[(i, j)] /= f;
                    a[(j, i)] *= f;
                }
            }
        }
    }
    scale
}

/// Reduction to upper Hessenberg form by stabilized elementary similarity
/// transforms. Entries below the subdiagonal are cleared.
pub fn elmhes(a: &mut DMatrix<f64>) {
    let n = a.nrows();
    for m in 1..n.saturating_sub(1) {
        let mut x: f64 = 0.0;
        let mut piv = m;
        for j in m..n {
            if a[(j, m - 1)].abs() > x.abs() {
                x = a[(j, m - 1)];
                piv = j;
            }
        }
        if piv != m {
            for j in (m - 1)..n {
                a.swap((piv, j), (m, j));
            }
            for j in 0..n {
                a.swap((j, piv), (j, m));
            }
        }
        if x != 0.0 {
            for i in (m + 1)..n {
                let mut y = a[(i, m - 1)];
                if y != 0.0 {
                    y /= x;
                    a[(i, m - 1)] = y;
                    for j in m..n {
                        a[(i, j)] -= y * a[(m, j)];
                    }
                    for j in 0..n {
                        a[(j, m)] += y * a[(j, i)];
                    }
                }
            }
        }
    }
    for i in 0..n {
        for j in 0..i.saturating_sub(1) {
            a[(i, j)] = 0.0;
        }
    }
}

/// Eigenvalues of an upper Hessenberg matrix by Francis double-shift QR.
/// The matrix is destroyed.
pub fn hqr(a: &mut DMatrix<f64>) -> Result<Vec<Complex64>, EigenError> {
    let n = a.nrows() as isize;
    let mut w = vec![Complex64::new(0.0, 0.0); n as usize];
    let limit = 30 * n as usize;
    let eps = f64::EPSILON;
    let mut anorm = 0.0;
    for i in 0..n {
        for j in (i - 1).max(0)..n {
            anorm += a[(i as usize, j as usize)].abs();
        }
    }
    let at = |a: &DMatrix<f64>, i: isize, j: isize| a[(i as usize, j as usize)];
    let mut total = 0;
    let mut nn = n - 1;
    let mut t = 0.0;
    while nn >= 0 {
        let mut its = 0;
        loop {
            let mut l = nn;
            while l > 0 {
                let mut s = at(a, l - 1, l - 1).abs() + at(a, l, l).abs();
                if s == 0.0 {
                    s = anorm;
                }
                if at(a, l, l - 1).abs() <= eps * s {
                    a[(l as usize, l as usize - 1)] = 0.0;
                    break;
                }
                l -= 1;
            }
            let mut x = at(a, nn, nn);
            if l == nn {
                w[nn as usize] = Complex64::new(x + t, 0.0);
                nn -= 1;
                break;
            }
            let mut y = at(a, nn - 1, nn - 1);
            let mut ww = at(a, nn, nn - 1) * at(a, nn - 1, nn);
            if l == nn - 1 {
                let p = 0.5 * (y - x);
                let q = p * p + ww;
                let z = q.abs().sqrt();
                x += t;
                if q >= 0.0 {
                    let z = p + z.copysign(p);
                    let hi = x + z;
                    let lo = if z != 0.0 { x - ww / z } else { hi };
                    w[nn as usize - 1] = Complex64::new(hi, 0.0);
                    w[nn as usize] = Complex64::new(lo, 0.0);
                } else {
                    w[nn as usize] = Complex64::new(x + p, -z);
                    w[nn as usize - 1] = Complex64::new(x + p, z);
                }
                nn -= 2;
                break;
            }
            if total >= limit {
                return Err(EigenError::NoConvergence(total));
            }
            if its == 10 || its == 20 {
                // exceptional shift
                t += x;
                for i in 0..=nn {
                    a[(i as usize, i as usize)] -= x;
                }
                let s = at(a, nn, nn - 1).abs() + at(a, nn - 1, nn - 2).abs();
                x = 0.75 * s;
                y = x;
                ww = -0.4375 * s * s;
            }
            its += 1;
            total += 1;
            let (mut p, mut q, mut r, mut z);
            let mut m = nn - 2;
            loop {
                z = at(a, m, m);
                r = x - z;
                let s = y - z;
                p = (r * s - ww) / at(a, m + 1, m) + at(a, m, m + 1);
                q = at(a, m + 1, m + 1) - z - r - s;
                r = at(a, m + 2, m + 1);
                let s = p.abs() + q.abs() + r.abs();
                p /= s;
                q /= s;
                r /= s;
                if m == l {
                    break;
                }
                let u = at(a, m, m - 1).abs() * (q.abs() + r.abs());
                let v = p.abs() * (at(a, m - 1, m - 1).abs() + z.abs() + at(a, m + 1, m + 1).abs());
                if u <= eps * v {
                    break;
                }
                m -= 1;
            }
            for i in m..nn - 1 {
                a[(i as usize + 2, i as usize)] = 0.0;
                if i != m {
                    a[(i as usize + 2, i as usize - 1)] = 0.0;
                }
            }
            for k in m..nn {
                if k != m {
                    p = at(a, k, k - 1);
                    q = at(a, k + 1, k - 1);
                    r = if k + 1 != nn { at(a, k + 2, k - 1) } else { 0.0 };
                    x = p.abs() + q.abs() + r.abs();
                    if x != 0.0 {
                        p /= x;
                        q /= x;
                        r /= x;
                    }
                }
                let s = (p * p + q * q + r * r).sqrt().copysign(p);
                if s == 0.0 {
                    continue;
                }
                if k == m {
                    if l != m {
                        a[(k as usize, k as usize - 1)] = -at(a, k, k - 1);
                    }
                } else {
                    a[(k as usize, k as usize - 1)] = -s * x;
                }
                p += s;
                x = p / s;
                y = q / s;
                z = r / s;
                q /= p;
                r /= p;
                for j in k..=nn {
                    let (ku, ju) = (k as usize, j as usize);
                    let mut pp = a[(ku, ju)] + q * a[(ku + 1, ju)];
                    if k + 1 != nn {
                        pp += r * a[(ku + 2, ju)];
                        a[(ku + 2, ju)] -= pp * z;
                    }
                    a[(ku + 1, ju)] -= pp * y;
                    a[(ku, ju)] -= pp * x;
                }
                let mmin = nn.min(k + 3);
                for i in l..=mmin {
                    let (iu, ku) = (i as usize, k as usize);
                    let mut pp = x * a[(iu, ku)] + y * a[(iu, ku + 1)];
                    if k + 1 != nn {
                        pp += z * a[(iu, ku + 2)];
                        a[(iu, ku + 2)] -= pp * r;
                    }
                    a[(iu, ku + 1)] -= pp * q;
                    a[(iu, ku)] -= pp;
                }
            }
            if l + 1 >= nn {
                break;
            }
        }
    }
    Ok(w)
}

/// Eigenvalues of a general real matrix, sorted by descending modulus
/// (ties broken by descending imaginary part).
pub fn eigenvalues(m: &DMatrix<f64>) -> Result<Vec<Complex64>, EigenError> {
    if m.iter().any(|v| !v.is_finite()) {
        return Err(EigenError::NonFinite);
    }
    let mut a = m.clone();
    balance(&mut a);
    elmhes(&mut a);
    let mut w = hqr(&mut a)?;
    sort_by_modulus(&mut w);
    Ok(w)
}

pub fn eigenvalues_6x6(m: &Matrix6<f64>) -> Result<[Complex64; 6], EigenError> {
    let w = eigenvalues(&DMatrix::from_column_slice(6, 6, m.as_slice()))?;
    let mut out = [Complex64::new(0.0, 0.0); 6];
    out.copy_from_slice(&w);
    Ok(out)
}

pub fn sort_by_modulus(w: &mut [Complex64]) {
    w.sort_by(|a, b| {
        b.norm()
            .total_cmp(&a.norm())
            .then(b.im.total_cmp(&a.im))
    });
}

/// Sum of eigenvalue moduli. Equals 6 on the unit circle and exceeds it
/// as soon as any pair leaves the circle.
pub fn stability_index(w: &[Complex64]) -> f64 {
    w.iter().map(|z| z.norm()).sum()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Stability {
    pub eigenvalues: [Complex64; 6],
    pub rho: f64,
    pub trace: f64,
    pub symplectic_defect: f64,
    pub class: StabilityClass,
    /// `rho` lies just above the stable threshold.
    pub marginal: bool,
}

pub fn classify(trace: f64, rho: f64, symplectic: bool) -> StabilityClass {
    if !symplectic {
        StabilityClass::Indeterminate
    } else if trace > 6.0 {
        // real-axis pair (lambda + 1/lambda > 2) forces instability
        StabilityClass::Unstable
    } else if rho < RHO_STABLE {
        StabilityClass::LinearlyStable
    } else {
        StabilityClass::Unstable
    }
}

pub fn analyse(monodromy: &Matrix6<f64>) -> Result<Stability, EigenError> {
    let eigenvalues = eigenvalues_6x6(monodromy)?;
    let rho = stability_index(&eigenvalues);
    let trace = monodromy.trace();
    let symplectic_defect = symplectic_defect(monodromy);
    let class = classify(trace, rho, symplectic_defect <= SYMPLECTIC_TOL);
    Ok(Stability {
        eigenvalues,
        rho,
        trace,
        symplectic_defect,
        class,
        marginal: (RHO_STABLE..=RHO_MARGINAL).contains(&rho),
    })
}
