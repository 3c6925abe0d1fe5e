//! Poles of the reconstruction-error transfer functions.

use nalgebra::{Complex, DMatrix};
use serde::{Deserialize, Serialize};

use crate::error::{validation, Result};

/// Half-width of the band around the unit circle treated as marginal (and unstable).
pub const MARGINAL_BAND: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TfKind {
    OpenLoop,
    Proposed,
}

/// `H(z) = 1 / (1 + d_1 z^-1 + ... + d_M z^-M)`; only the denominator is stored.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorTransferFunction {
    denominator: Vec<f64>,
    kind: TfKind,
}

impl ErrorTransferFunction {
    /// Open-loop error response of a predictor: denominator `1 - Σ a_m z^-m`.
    pub fn open_loop(coefficients: &[f64]) -> Result<Self> {
        if coefficients.is_empty() {
            return Err(validation("transfer function needs degree at least 1"));
        }
        if coefficients.iter().any(|a| !a.is_finite()) {
            return Err(validation("coefficients must be finite"));
        }
        let mut denominator = Vec::with_capacity(coefficients.len() + 1);
        denominator.push(1.0);
        denominator.extend(coefficients.iter().map(|a| -a));
        Ok(Self {
            denominator,
            kind: TfKind::OpenLoop,
        })
    }

    pub fn denominator(&self) -> &[f64] {
        &self.denominator
    }

    pub fn kind(&self) -> TfKind {
        self.kind
    }

    pub fn degree(&self) -> usize {
        self.denominator.len() - 1
    }
}

/// First-order error response of the proposed codec, pole at `1 - |β|`.
pub fn proposed_scheme_tf(beta_abs: f64) -> Result<ErrorTransferFunction> {
    if !(beta_abs > 0.0 && beta_abs < 2.0) {
        return Err(validation(format!(
            "|beta| must lie in (0, 2), got {beta_abs}"
        )));
    }
    Ok(ErrorTransferFunction {
        denominator: vec![1.0, -(1.0 - beta_abs)],
        kind: TfKind::Proposed,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct StabilityReport {
    pub poles: Vec<Complex<f64>>,
    pub max_modulus: f64,
    pub stable: bool,
    pub margin: f64,
}

impl StabilityReport {
    /// Largest pole modulus lies within [`MARGINAL_BAND`] of 1.
    pub fn is_marginal(&self) -> bool {
        (self.max_modulus - 1.0).abs() <= MARGINAL_BAND
    }
}

#[derive(Serialize, Deserialize)]
struct ReportRepr {
    poles: Vec<[f64; 2]>,
    max_modulus: f64,
    stable: bool,
    margin: f64,
}

impl Serialize for StabilityReport {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        ReportRepr {
            poles: self.poles.iter().map(|p| [p.re, p.im]).collect(),
            max_modulus: self.max_modulus,
            stable: self.stable,
            margin: self.margin,
        }
        .serialize(s)
    }
}

impl<'de> Deserialize<'de> for StabilityReport {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let r = ReportRepr::deserialize(d)?;
        Ok(Self {
            poles: r.poles.iter().map(|p| Complex::new(p[0], p[1])).collect(),
            max_modulus: r.max_modulus,
            stable: r.stable,
            margin: r.margin,
        })
    }
}

/// Roots of `z^M + d_1 z^(M-1) + ... + d_M` as companion-matrix eigenvalues.
pub fn poles_of(tf: &ErrorTransferFunction) -> Result<StabilityReport> {
    let m = tf.degree();
    if m == 0 {
        return Err(validation("transfer function needs degree at least 1"));
    }
    // Trailing zero coefficients are exact poles at the origin; keeping them out of
    // the companion matrix avoids the sqrt(eps) spread of a defective eigenvalue.
    let zeros = tf
        .denominator
        .iter()
        .rev()
        .take_while(|d| **d == 0.0)
        .count();
    let d = &tf.denominator[1..=m - zeros];
    let mut poles = match d.len() {
        0 => Vec::new(),
        1 => vec![Complex::new(-d[0], 0.0)],
        n => {
            let mut c = DMatrix::<f64>::zeros(n, n);
            for j in 0..n {
                c[(0, j)] = -d[j];
            }
            for i in 1..n {
                c[(i, i - 1)] = 1.0;
            }
            c.complex_eigenvalues().iter().copied().collect()
        }
    };
    poles.extend(std::iter::repeat_n(Complex::new(0.0, 0.0), zeros));
    for p in poles.iter_mut() {
        if p.im.abs() < 1e-14 * p.re.abs().max(1.0) {
            p.im = 0.0;
        }
    }
    poles.sort_by(|a, b| a.re.total_cmp(&b.re).then(a.im.total_cmp(&b.im)));
    let max_modulus = poles.iter().map(|p| p.norm()).fold(0.0, f64::max);
    Ok(StabilityReport {
        stable: max_modulus < 1.0 - MARGINAL_BAND,
        margin: 1.0 - max_modulus,
        max_modulus,
        poles,
    })
}

/// Stability report of the open-loop error response for `coefficients`.
pub fn open_loop_stability(coefficients: &[f64]) -> Result<StabilityReport> {
    poles_of(&ErrorTransferFunction::open_loop(coefficients)?)
}
