//! Keplerian seeds for the sixteen doubly-symmetric start cases.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dynamics::{Model, State6};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SeedError {
    #[error("invalid case label {0:?}; expected one of {labels}", labels = valid_labels())]
    BadLabel(String),
    #[error("unknown regime {0:?} (comet, hill-crtbp, hill-lunar)")]
    BadRegime(String),
    #[error("cos^2 i = {0} must lie in (0, 1)")]
    BadInclination(f64),
    #[error("mass ratio {0} must lie in (0, 1)")]
    BadMassRatio(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Regime {
    /// Far from both primaries; barycentric frame, unit central mass.
    CometCrtbp,
    /// Close to `m2`; `m2`-centred frame, central mass `mu`.
    HillCrtbp,
    HillLunar,
}

impl Regime {
    pub fn as_str(&self) -> &'static str {
        match self {
            Regime::CometCrtbp => "comet",
            Regime::HillCrtbp => "hill-crtbp",
            Regime::HillLunar => "hill-lunar",
        }
    }
}

impl fmt::Display for Regime {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Regime {
    type Err = SeedError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "comet" | "comet-crtbp" => Ok(Regime::CometCrtbp),
            "hill-crtbp" | "hill" => Ok(Regime::HillCrtbp),
            "hill-lunar" | "lunar" => Ok(Regime::HillLunar),
            _ => Err(SeedError::BadRegime(s.to_string())),
        }
    }
}

/// Subplane the orbit starts from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum StartPlane {
    /// `xi2 = xi3 = 0`, `xi1' = 0`; unknowns `(xi1, xi2', xi3')`.
    L1,
    /// `xi2 = 0`, `xi1' = xi3' = 0`; unknowns `(xi1, xi3, xi2')`.
    L2,
    /// Planar start on the `xi2` axis (`xi1 = 0`, `xi2' = 0`), available
    /// for equal masses only; unknowns `(xi2, xi3, xi1')`.
    YAxis,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Sign {
    Plus,
    Minus,
}

impl Sign {
    pub fn value(self) -> f64 {
        match self {
            Sign::Plus => 1.0,
            Sign::Minus => -1.0,
        }
    }

    fn symbol(self) -> char {
        match self {
            Sign::Plus => '+',
            Sign::Minus => '-',
        }
    }

    fn parse(c: char) -> Option<Self> {
        match c {
            '+' => Some(Sign::Plus),
            '-' => Some(Sign::Minus),
            _ => None,
        }
    }
}

/// One of the sixteen start cases.
///
/// L1: signs of `(xi1, Kepler part of xi2', xi3')`.
/// L2: signs of `(xi1, xi3, Kepler part of xi2')`.
/// The `xi2'` sign refers to the orbital velocity before the frame term
/// `-xi1` is added.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct CaseLabel {
    pub plane: StartPlane,
    pub signs: [Sign; 3],
}

impl CaseLabel {
    pub fn new(plane: StartPlane, signs: [Sign; 3]) -> Self {
        Self { plane, signs }
    }

    /// Compact form used on the command line, e.g. `1+--`.
    pub fn flag(&self) -> String {
        let mut s = String::with_capacity(4);
        s.push(match self.plane {
            StartPlane::L1 => '1',
            StartPlane::L2 => '2',
            StartPlane::YAxis => 'y',
        });
        for sign in self.signs {
            s.push(sign.symbol());
        }
        s
    }
}

impl fmt::Display for CaseLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let plane = match self.plane {
            StartPlane::L1 => "1",
            StartPlane::L2 => "2",
            StartPlane::YAxis => "y",
        };
        write!(
            f,
            "({},{},{},{})",
            plane,
            self.signs[0].symbol(),
            self.signs[1].symbol(),
            self.signs[2].symbol()
        )
    }
}

impl FromStr for CaseLabel {
    type Err = SeedError;

    /// Accepts `1+--` and `(1,+,-,-)`.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let bad = || SeedError::BadLabel(s.to_string());
        let compact: String = s
            .chars()
            .filter(|c| !matches!(c, '(' | ')' | ',' | ' '))
            .collect();
        let chars: Vec<char> = compact.chars().collect();
        if chars.len() != 4 {
            return Err(bad());
        }
        let plane = match chars[0] {
            '1' => StartPlane::L1,
            '2' => StartPlane::L2,
            'y' | 'Y' => StartPlane::YAxis,
            _ => return Err(bad()),
        };
        let mut signs = [Sign::Plus; 3];
        for (slot, c) in signs.iter_mut().zip(&chars[1..]) {
            *slot = Sign::parse(*c).ok_or_else(bad)?;
        }
        Ok(Self { plane, signs })
    }
}

fn valid_labels() -> String {
    enumerate_cases()
        .iter()
        .map(|c| c.flag())
        .collect::<Vec<_>>()
        .join(", ")
}

/// All sixteen cases, L1 first, signs in `+` before `-` order.
pub fn enumerate_cases() -> Vec<CaseLabel> {
    let mut out = Vec::with_capacity(16);
    for plane in [StartPlane::L1, StartPlane::L2] {
        for a in [Sign::Plus, Sign::Minus] {
            for b in [Sign::Plus, Sign::Minus] {
                for c in [Sign::Plus, Sign::Minus] {
                    out.push(CaseLabel::new(plane, [a, b, c]));
                }
            }
        }
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SeedSpec {
    pub regime: Regime,
    pub k: u32,
    pub j: u32,
    pub case: CaseLabel,
    /// Mass ratio; ignored for Hill's lunar problem.
    pub mu: f64,
    /// `cos^2` of the seed inclination.
    pub cos2i: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ResonanceParams {
    pub a: f64,
    /// Signed mean motion; negative for retrograde seeds.
    pub n: f64,
    pub epsilon: f64,
    pub t0_quarter: f64,
    /// Central mass of the approximate Kepler problem.
    pub central_mass: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Seed {
    pub state: State6,
    pub t0_quarter: f64,
    /// Passing number of the target crossing, counting the start as the first.
    pub crossing_target: usize,
}

impl SeedSpec {
    pub fn validate(&self) -> Result<(), SeedError> {
        if !(self.cos2i > 0.0 && self.cos2i < 1.0) {
            return Err(SeedError::BadInclination(self.cos2i));
        }
        if self.case.plane == StartPlane::YAxis {
            return Err(SeedError::BadLabel(self.case.flag()));
        }
        if self.regime != Regime::HillLunar && !(self.mu > 0.0 && self.mu < 1.0) {
            return Err(SeedError::BadMassRatio(self.mu));
        }
        Ok(())
    }

    /// Non-fatal notes when `(k, j)` are outside the regime's natural range.
    pub fn warnings(&self) -> Vec<String> {
        let (k, j) = (self.k, self.j);
        let mut out = Vec::new();
        match self.regime {
            Regime::CometCrtbp => {
                if k < j {
                    out.push(format!("comet regime expects k >= j (k={k}, j={j})"));
                } else if k < 3 * j {
                    out.push(format!("weak comet ordering k < 3j (k={k}, j={j})"));
                }
            }
            Regime::HillCrtbp | Regime::HillLunar => {
                if j < k {
                    out.push(format!("Hill regime expects j >= k (k={k}, j={j})"));
                } else if j < 3 * k {
                    out.push(format!("weak Hill ordering j < 3k (k={k}, j={j})"));
                }
            }
        }
        out
    }

    pub fn central_mass(&self) -> f64 {
        match self.regime {
            Regime::CometCrtbp | Regime::HillLunar => 1.0,
            Regime::HillCrtbp => self.mu,
        }
    }

    /// The full dynamical model the seed is continued in.
    pub fn model(&self) -> Model {
        match self.regime {
            Regime::CometCrtbp => Model::CrtbpBarycentric { mu: self.mu },
            Regime::HillCrtbp => Model::CrtbpM2Centered { mu: self.mu },
            Regime::HillLunar => Model::HillLunar,
        }
    }

    /// Central-mass-only model in which the seed is an exact orbit.
    pub fn approximate_model(&self) -> Model {
        Model::Kepler {
            gm: self.central_mass(),
        }
    }

    pub fn inclination(&self) -> f64 {
        self.cos2i.sqrt().acos()
    }
}

pub fn resonance_params(spec: &SeedSpec) -> ResonanceParams {
    let (k2, j2) = (2.0 * spec.k as f64 + 1.0, 2.0 * spec.j as f64 + 1.0);
    let ratio = k2 / j2;
    let mc = spec.central_mass();
    let a = mc.cbrt() * ratio.powf(2.0 / 3.0);
    let n_abs = (mc / (a * a * a)).sqrt();
    let [s0, s1, s2] = spec.case.signs.map(Sign::value);
    let direction = match spec.case.plane {
        StartPlane::L1 => s0 * s1,
        _ => s0 * s2,
    };
    ResonanceParams {
        a,
        n: direction * n_abs,
        epsilon: (j2 / k2).cbrt(),
        t0_quarter: k2 * std::f64::consts::PI / 2.0,
        central_mass: mc,
    }
}

pub fn build_seed(spec: &SeedSpec) -> Result<Seed, SeedError> {
    spec.validate()?;
    let p = resonance_params(spec);
    let v = (p.central_mass / p.a).sqrt();
    let (c, s) = (spec.cos2i.sqrt(), (1.0 - spec.cos2i).sqrt());
    let [s0, s1, s2] = spec.case.signs.map(Sign::value);
    let state = match spec.case.plane {
        StartPlane::L1 => {
            let x1 = s0 * p.a;
            State6::new([x1, 0.0, 0.0], [0.0, s1 * v * c - x1, s2 * v * s])
        }
        StartPlane::L2 => {
            let x1 = s0 * p.a * c;
            State6::new([x1, 0.0, s1 * p.a * s], [0.0, s2 * v - x1, 0.0])
        }
        StartPlane::YAxis => unreachable!("rejected by validate"),
    };
    Ok(Seed {
        state,
        t0_quarter: p.t0_quarter,
        crossing_target: (spec.k + spec.j + 2) as usize,
    })
}
