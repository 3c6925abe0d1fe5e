//! Probability densities with cell moments.
//!
//! Lloyd-Max only ever needs `∫ (x - c)^k f(x) dx` over a cell for k = 0, 1, 2.
//! [`Density::moments`] defaults to adaptive Simpson quadrature; the densities
//! used in the codecs override it with exact piecewise formulas.

use serde::{Deserialize, Serialize};

use crate::error::{validation, Result};
use crate::quadrature::adaptive_simpson;

/// Absolute tolerance for the quadrature fallback.
pub const QUADRATURE_TOL: f64 = 1e-12;

pub trait Density {
    /// Interval outside which the density is zero.
    fn support(&self) -> (f64, f64);

    fn pdf(&self, x: f64) -> f64;

    /// `[∫f, ∫(x-c)f, ∫(x-c)²f]` over `[a, b] ∩ support`.
    fn moments(&self, a: f64, b: f64, c: f64) -> [f64; 3] {
        let (lo, hi) = self.support();
        let (a, b) = (a.max(lo), b.min(hi));
        if a >= b {
            return [0.0; 3];
        }
        [
            adaptive_simpson(|x| self.pdf(x), a, b, QUADRATURE_TOL),
            adaptive_simpson(|x| (x - c) * self.pdf(x), a, b, QUADRATURE_TOL),
            adaptive_simpson(|x| (x - c) * (x - c) * self.pdf(x), a, b, QUADRATURE_TOL),
        ]
    }

    fn mass(&self, a: f64, b: f64) -> f64 {
        self.moments(a, b, 0.5 * (a + b))[0]
    }

    /// Probability-weighted mean over the whole support.
    fn mean(&self) -> f64 {
        let (lo, hi) = self.support();
        let c = 0.5 * (lo + hi);
        let m = self.moments(lo, hi, c);
        c + m[1] / m[0]
    }
}

impl<D: Density + ?Sized> Density for &D {
    fn support(&self) -> (f64, f64) {
        (**self).support()
    }
    fn pdf(&self, x: f64) -> f64 {
        (**self).pdf(x)
    }
    fn moments(&self, a: f64, b: f64, c: f64) -> [f64; 3] {
        (**self).moments(a, b, c)
    }
}

/// Moments of a constant density `height` over `[a, b]` about `c`.
pub(crate) fn flat_moments(height: f64, a: f64, b: f64, c: f64) -> [f64; 3] {
    if a >= b {
        return [0.0; 3];
    }
    let (u, v) = (a - c, b - c);
    [
        height * (b - a),
        height * 0.5 * (v - u) * (v + u),
        height * (v * v * v - u * u * u) / 3.0,
    ]
}

/// `∫_0^h u^k e^{-λu} du` for k = 0, 1, 2 and λ ≥ 0.
fn decaying_exp_moments(lambda: f64, h: f64) -> [f64; 3] {
    let x = lambda * h;
    if x > 1.0 {
        let e = (-x).exp();
        let l2 = lambda * lambda;
        [
            -(-x).exp_m1() / lambda,
            (1.0 - e * (1.0 + x)) / l2,
            (2.0 - e * (x * x + 2.0 * x + 2.0)) / (l2 * lambda),
        ]
    } else {
        // Σ_n (-λ)^n / n! · h^{n+k+1} / (n+k+1)
        let mut out = [0.0; 3];
        for (k, slot) in out.iter_mut().enumerate() {
            let mut coef = 1.0;
            let mut hp = h.powi(k as i32 + 1);
            let mut sum = 0.0;
            for n in 0..40 {
                let term = coef * hp / (n + k + 1) as f64;
                sum += term;
                if term.abs() <= 1e-18 * sum.abs() {
                    break;
                }
                coef *= -lambda / (n + 1) as f64;
                hp *= h;
            }
            *slot = sum;
        }
        out
    }
}

/// Moments of `scale · e^{-λ x}` over `[a, b] ⊂ [0, ∞)` about `c`.
fn exp_moments_right(scale: f64, lambda: f64, a: f64, b: f64, c: f64) -> [f64; 3] {
    if a >= b {
        return [0.0; 3];
    }
    let g = decaying_exp_moments(lambda, b - a);
    let s = scale * (-lambda * a).exp();
    let d = a - c;
    [
        s * g[0],
        s * (d * g[0] + g[1]),
        s * (d * d * g[0] + 2.0 * d * g[1] + g[2]),
    ]
}

/// Moments of `scale · e^{λ x}` over `[a, b] ⊂ (-∞, 0]` about `c`, by reflection.
fn exp_moments_left(scale: f64, lambda: f64, a: f64, b: f64, c: f64) -> [f64; 3] {
    let m = exp_moments_right(scale, lambda, -b, -a, -c);
    [m[0], -m[1], m[2]]
}

/// Uniform density on `[lo, hi]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UniformPdf {
    lo: f64,
    hi: f64,
}

impl UniformPdf {
    pub fn new(lo: f64, hi: f64) -> Result<Self> {
        if !(lo < hi) || !lo.is_finite() || !hi.is_finite() {
            return Err(validation(format!(
                "uniform density needs lo < hi, got [{lo}, {hi}]"
            )));
        }
        Ok(Self { lo, hi })
    }
}

impl Density for UniformPdf {
    fn support(&self) -> (f64, f64) {
        (self.lo, self.hi)
    }
    fn pdf(&self, x: f64) -> f64 {
        if (self.lo..=self.hi).contains(&x) {
            1.0 / (self.hi - self.lo)
        } else {
            0.0
        }
    }
    fn moments(&self, a: f64, b: f64, c: f64) -> [f64; 3] {
        flat_moments(1.0 / (self.hi - self.lo), a.max(self.lo), b.min(self.hi), c)
    }
}

/// Peak-clipped Laplacian-shaped density `min(c_peak, κ e^{-λ|x|})` on `[lo, hi]`.
///
/// `kappa` and `c_peak` are stored already divided by `normalization`, so the
/// density integrates to one over the support.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FittedPdf {
    pub family: String,
    pub lambda: f64,
    pub kappa: f64,
    pub c_peak: f64,
    pub lo: f64,
    pub hi: f64,
    pub normalization: f64,
}

pub const CLIPPED_EXPONENTIAL: &str = "clipped_exponential";

impl FittedPdf {
    /// Builds and normalizes the density from unnormalized `kappa` and `c_peak`.
    pub fn new(lambda: f64, kappa: f64, c_peak: f64, lo: f64, hi: f64) -> Result<Self> {
        if !(lambda > 0.0 && lambda.is_finite()) {
            return Err(validation(format!("rate must be positive, got {lambda}")));
        }
        if !(kappa > 0.0 && kappa.is_finite() && c_peak > 0.0 && c_peak.is_finite()) {
            return Err(validation("kappa and clip level must be positive"));
        }
        if !(lo < hi) {
            return Err(validation("support must satisfy lo < hi"));
        }
        let mut pdf = Self {
            family: CLIPPED_EXPONENTIAL.into(),
            lambda,
            kappa,
            c_peak,
            lo,
            hi,
            normalization: 1.0,
        };
        let z = pdf.moments(lo, hi, 0.0)[0];
        if !(z > 0.0 && z.is_finite()) {
            return Err(validation("density has no mass on its support"));
        }
        pdf.kappa /= z;
        pdf.c_peak /= z;
        pdf.normalization = z;
        Ok(pdf)
    }

    /// Half-width of the clipped plateau around zero.
    pub fn clip_radius(&self) -> f64 {
        if self.kappa > self.c_peak {
            (self.kappa / self.c_peak).ln() / self.lambda
        } else {
            0.0
        }
    }
}

impl Density for FittedPdf {
    fn support(&self) -> (f64, f64) {
        (self.lo, self.hi)
    }

    fn pdf(&self, x: f64) -> f64 {
        if x < self.lo || x > self.hi {
            0.0
        } else {
            self.c_peak.min(self.kappa * (-self.lambda * x.abs()).exp())
        }
    }

    fn moments(&self, a: f64, b: f64, c: f64) -> [f64; 3] {
        let (a, b) = (a.max(self.lo), b.min(self.hi));
        if a >= b {
            return [0.0; 3];
        }
        let r = self.clip_radius();
        let pieces = [
            (a, b.min(-r), 0u8),
            (a.max(-r), b.min(r), 1u8),
            (a.max(r), b, 2u8),
        ];
        let mut out = [0.0; 3];
        for (pa, pb, kind) in pieces {
            if pa >= pb {
                continue;
            }
            let m = match kind {
                0 => exp_moments_left(self.kappa, self.lambda, pa, pb, c),
                1 => flat_moments(self.c_peak, pa, pb, c),
                _ => exp_moments_right(self.kappa, self.lambda, pa, pb, c),
            };
            for k in 0..3 {
                out[k] += m[k];
            }
        }
        out
    }
}

/// `inner` restricted to `[lo, hi]` and renormalized to unit mass.
#[derive(Debug, Clone)]
pub struct Restricted<D> {
    inner: D,
    lo: f64,
    hi: f64,
    mass: f64,
}

impl<D: Density> Restricted<D> {
    /// Returns `None` when the interval carries no probability.
    pub fn new(inner: D, lo: f64, hi: f64) -> Option<Self> {
        let mass = inner.moments(lo, hi, 0.5 * (lo + hi))[0];
        (mass > 0.0 && lo < hi).then_some(Self {
            inner,
            lo,
            hi,
            mass,
        })
    }

    pub fn mass(&self) -> f64 {
        self.mass
    }
}

impl<D: Density> Density for Restricted<D> {
    fn support(&self) -> (f64, f64) {
        (self.lo, self.hi)
    }
    fn pdf(&self, x: f64) -> f64 {
        if x < self.lo || x > self.hi {
            0.0
        } else {
            self.inner.pdf(x) / self.mass
        }
    }
    fn moments(&self, a: f64, b: f64, c: f64) -> [f64; 3] {
        let m = self.inner.moments(a.max(self.lo), b.min(self.hi), c);
        [m[0] / self.mass, m[1] / self.mass, m[2] / self.mass]
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    struct ViaQuadrature<'a>(&'a FittedPdf);
    impl Density for ViaQuadrature<'_> {
        fn support(&self) -> (f64, f64) {
            self.0.support()
        }
        fn pdf(&self, x: f64) -> f64 {
            self.0.pdf(x)
        }
    }

    #[test]
    fn closed_form_moments_match_quadrature() {
        for &(lambda, kappa, clip) in &[(50.0, 5.0, 4.0), (18.0, 2.0, 10.0), (1e-6, 1.0, 0.9)] {
            let pdf = FittedPdf::new(lambda, kappa, clip, -0.45, 0.6).unwrap();
            let q = ViaQuadrature(&pdf);
            for &(a, b, c) in &[
                (-0.45, 0.6, 0.0),
                (-0.2, -0.01, -0.1),
                (-0.03, 0.05, 0.01),
                (0.1, 0.6, 0.3),
            ] {
                let exact = pdf.moments(a, b, c);
                let num = q.moments(a, b, c);
                for k in 0..3 {
                    assert!(
                        (exact[k] - num[k]).abs() < 1e-10,
                        "λ={lambda} k={k} {exact:?} vs {num:?}"
                    );
                }
            }
        }
    }

    #[test]
    fn fitted_pdf_is_normalized() {
        let pdf = FittedPdf::new(50.0, 1.0, 0.8, -0.4854, 0.6044).unwrap();
        let total = adaptive_simpson(|x| pdf.pdf(x), -0.4854, 0.6044, 1e-13);
        assert!((total - 1.0).abs() < 1e-9, "{total}");
        assert!(pdf.clip_radius() > 0.0);
    }

    #[test]
    fn series_and_closed_form_agree_at_switch() {
        let lo = decaying_exp_moments(1.0, 0.999_999);
        let hi = decaying_exp_moments(1.0, 1.000_001);
        for k in 0..3 {
            assert!((lo[k] - hi[k]).abs() < 1e-5);
        }
    }

    #[test]
    fn restricted_renormalizes() {
        let u = UniformPdf::new(0.0, 1.0).unwrap();
        let r = Restricted::new(u, 0.5, 1.0).unwrap();
        assert!((r.mass() - 0.5).abs() < 1e-15);
        assert!((r.moments(0.5, 1.0, 0.75)[0] - 1.0).abs() < 1e-15);
        assert!(Restricted::new(u, 2.0, 3.0).is_none());
    }
}
