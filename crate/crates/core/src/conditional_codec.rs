//! Conditional quantization of a secondary channel.
//!
//! The secondary amplitude range is split into `2^n1` coarse bins, each with its
//! own `2^n2`-level sub-codebook. Only the sub-index is sent; the decoder picks
//! the bin from the reconstructed primary sample through an affine map of the
//! coarse boundaries.

use serde::{Deserialize, Serialize};

use crate::error::{degenerate, validation, Error, Result};
use crate::quantizer_design::{lloyd_max, uniform_codebook, Codebook, Density, Restricted};

/// Points in the shared grid used by [`fit_affine`].
pub const AFFINE_GRID: usize = 1024;

/// `x^P ≈ a x^S + b`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AffineMap {
    pub a: f64,
    pub b: f64,
}

impl AffineMap {
    pub fn new(a: f64, b: f64) -> Result<Self> {
        if !a.is_finite() || a == 0.0 || !b.is_finite() {
            return Err(validation(format!(
                "affine map needs finite nonzero a and finite b, got ({a}, {b})"
            )));
        }
        Ok(Self { a, b })
    }

    pub fn identity() -> Self {
        Self { a: 1.0, b: 0.0 }
    }

    #[inline]
    pub fn apply(&self, x: f64) -> f64 {
        self.a * x + self.b
    }
}

/// Least squares of `f_P(x) ≈ a f_S(x) + b` over a uniform grid spanning both supports.
pub fn fit_affine<P: Density, S: Density>(pdf_p: &P, pdf_s: &S) -> Result<AffineMap> {
    let (pl, ph) = pdf_p.support();
    let (sl, sh) = pdf_s.support();
    let (lo, hi) = (pl.min(sl), ph.max(sh));
    if !(lo < hi) {
        return Err(validation("densities have an empty joint support"));
    }
    let n = AFFINE_GRID;
    let step = (hi - lo) / (n - 1) as f64;
    let (mut sx, mut sy) = (0.0, 0.0);
    let pts: Vec<(f64, f64)> = (0..n)
        .map(|j| {
            let x = lo + step * j as f64;
            let p = (pdf_s.pdf(x), pdf_p.pdf(x));
            sx += p.0;
            sy += p.1;
            p
        })
        .collect();
    let (mx, my) = (sx / n as f64, sy / n as f64);
    let sxx: f64 = pts.iter().map(|(u, _)| (u - mx) * (u - mx)).sum();
    let sxy: f64 = pts.iter().map(|(u, v)| (u - mx) * (v - my)).sum();
    let power: f64 = pts.iter().map(|(u, _)| u * u).sum();
    if !(sxx > 1e-20 * power) {
        return Err(degenerate(
            "secondary density is constant on the fitting grid",
        ));
    }
    let a = sxy / sxx;
    AffineMap::new(a, my - a * mx).map_err(|e| degenerate(e.to_string()))
}

/// Amplitude map matching the mean and spread of the two densities:
/// `a = σ_P / σ_S`, `b = μ_P - a μ_S`.
pub fn fit_affine_moments<P: Density, S: Density>(pdf_p: &P, pdf_s: &S) -> Result<AffineMap> {
    let (mp, vp) = mean_var(pdf_p)?;
    let (ms, vs) = mean_var(pdf_s)?;
    if !(vs > 0.0 && vp > 0.0) {
        return Err(degenerate("a density has zero variance"));
    }
    let a = (vp / vs).sqrt();
    AffineMap::new(a, mp - a * ms)
}

fn mean_var<D: Density>(pdf: &D) -> Result<(f64, f64)> {
    let (lo, hi) = pdf.support();
    let c = 0.5 * (lo + hi);
    let m = pdf.moments(lo, hi, c);
    if !(m[0] > 0.0) {
        return Err(degenerate("density has no mass"));
    }
    let d = m[1] / m[0];
    Ok((c + d, (m[2] / m[0] - d * d).max(0.0)))
}

/// Which estimator produces the amplitude map.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AffineFit {
    /// [`fit_affine`].
    Density,
    /// [`fit_affine_moments`].
    Moments,
}

impl AffineFit {
    pub fn fit<P: Density, S: Density>(self, pdf_p: &P, pdf_s: &S) -> Result<AffineMap> {
        match self {
            AffineFit::Density => fit_affine(pdf_p, pdf_s),
            AffineFit::Moments => fit_affine_moments(pdf_p, pdf_s),
        }
    }
}

/// How the coarse bins are placed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CoarsePartition {
    /// Boundaries of a `2^n1`-level Lloyd-Max codebook.
    #[default]
    Lloyd,
    /// Equal-width bins over the support.
    Uniform,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConditionalCodebook {
    affine: AffineMap,
    n1: u32,
    n2: u32,
    coarse_s: Vec<f64>,
    coarse_p: Vec<f64>,
    subcodebooks: Vec<Codebook>,
}

#[derive(Serialize, Deserialize)]
struct ConditionalRepr {
    a: f64,
    b: f64,
    n1: u32,
    n2: u32,
    coarse_s: Vec<f64>,
    coarse_p: Vec<f64>,
    subcodebooks: Vec<Vec<f64>>,
}

impl Serialize for ConditionalCodebook {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        ConditionalRepr {
            a: self.affine.a,
            b: self.affine.b,
            n1: self.n1,
            n2: self.n2,
            coarse_s: self.coarse_s.clone(),
            coarse_p: self.coarse_p.clone(),
            subcodebooks: self
                .subcodebooks
                .iter()
                .map(|c| c.levels().to_vec())
                .collect(),
        }
        .serialize(s)
    }
}

impl<'de> Deserialize<'de> for ConditionalCodebook {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let r = ConditionalRepr::deserialize(d)?;
        let subs = r
            .subcodebooks
            .into_iter()
            .map(Codebook::from_levels)
            .collect::<Result<Vec<_>>>()
            .map_err(serde::de::Error::custom)?;
        let cb = ConditionalCodebook::new(
            AffineMap::new(r.a, r.b).map_err(serde::de::Error::custom)?,
            r.n1,
            r.n2,
            r.coarse_s,
            subs,
        )
        .map_err(serde::de::Error::custom)?;
        if cb.coarse_p != r.coarse_p {
            return Err(serde::de::Error::custom(
                "coarse_p is not the affine image of coarse_s",
            ));
        }
        Ok(cb)
    }
}

impl ConditionalCodebook {
    /// Checks the bin layout and derives the mapped primary boundaries.
    pub fn new(
        affine: AffineMap,
        n1: u32,
        n2: u32,
        coarse_s: Vec<f64>,
        subcodebooks: Vec<Codebook>,
    ) -> Result<Self> {
        if n1 == 0 || n2 == 0 || n1 > 16 || n2 > 16 {
            return Err(validation(format!(
                "n1 and n2 must lie in 1..=16, got ({n1}, {n2})"
            )));
        }
        let bins = 1usize << n1;
        if coarse_s.len() != bins + 1 {
            return Err(validation(format!(
                "{bins} bins need {} boundaries, got {}",
                bins + 1,
                coarse_s.len()
            )));
        }
        if !coarse_s.iter().all(|v| v.is_finite()) || !coarse_s.windows(2).all(|w| w[0] < w[1]) {
            return Err(validation(
                "coarse boundaries must be finite and strictly increasing",
            ));
        }
        if subcodebooks.len() != bins {
            return Err(validation(format!(
                "{bins} bins need {bins} sub-codebooks, got {}",
                subcodebooks.len()
            )));
        }
        for (k, sub) in subcodebooks.iter().enumerate() {
            if sub.len() != 1 << n2 {
                return Err(validation(format!(
                    "sub-codebook {k} has {} levels, expected {}",
                    sub.len(),
                    1 << n2
                )));
            }
            let lv = sub.levels();
            if lv[0] < coarse_s[k] || lv[lv.len() - 1] > coarse_s[k + 1] {
                return Err(validation(format!(
                    "sub-codebook {k} has levels outside its bin"
                )));
            }
        }
        let coarse_p = coarse_s.iter().map(|x| affine.apply(*x)).collect();
        Ok(Self {
            affine,
            n1,
            n2,
            coarse_s,
            coarse_p,
            subcodebooks,
        })
    }

    pub fn affine(&self) -> AffineMap {
        self.affine
    }

    pub fn n1(&self) -> u32 {
        self.n1
    }

    pub fn n2(&self) -> u32 {
        self.n2
    }

    pub fn bins(&self) -> usize {
        self.subcodebooks.len()
    }

    pub fn coarse_s(&self) -> &[f64] {
        &self.coarse_s
    }

    pub fn coarse_p(&self) -> &[f64] {
        &self.coarse_p
    }

    pub fn subcodebooks(&self) -> &[Codebook] {
        &self.subcodebooks
    }

    /// Bin of a secondary sample, `x_k <= x < x_{k+1}`, clamped to the outer bins.
    pub fn encoder_bin(&self, x_s: f64) -> usize {
        let inner = &self.coarse_s[1..self.bins()];
        inner.partition_point(|b| *b <= x_s)
    }

    /// Bin inferred from a reconstructed primary sample, with the same half-open rule
    /// applied along the mapped boundaries.
    pub fn decoder_bin(&self, x_p_hat: f64) -> usize {
        let inner = &self.coarse_p[1..self.bins()];
        if self.affine.a > 0.0 {
            inner.partition_point(|b| *b <= x_p_hat)
        } else {
            inner.partition_point(|b| *b >= x_p_hat)
        }
    }
}

/// Coarse bins on `pdf_s` and a Lloyd-Max sub-codebook on each bin.
pub fn build_conditional_codebook<S: Density>(
    pdf_s: &S,
    affine: AffineMap,
    n1: u32,
    n2: u32,
    coarse: CoarsePartition,
) -> Result<ConditionalCodebook> {
    if n1 == 0 || n2 == 0 || n1 > 16 || n2 > 16 {
        return Err(validation(format!(
            "n1 and n2 must lie in 1..=16, got ({n1}, {n2})"
        )));
    }
    let (lo, hi) = pdf_s.support();
    let bins = 1usize << n1;
    let mut edges = match coarse {
        CoarsePartition::Lloyd => {
            let cb = lloyd_max(pdf_s, bins)?;
            let mut e = vec![lo];
            e.extend_from_slice(cb.boundaries());
            e.push(hi);
            e
        }
        CoarsePartition::Uniform => {
            let cb = uniform_codebook(lo, hi, bins)?;
            let mut e = vec![lo];
            e.extend_from_slice(cb.boundaries());
            e.push(hi);
            e
        }
    };
    let centroid = pdf_s.mean();
    let mut subs = Vec::with_capacity(bins);
    for k in 0..bins {
        let mut tries = 0;
        let restricted = loop {
            if let Some(r) = Restricted::new(pdf_s, edges[k], edges[k + 1]) {
                break r;
            }
            if tries == 50 {
                return Err(degenerate(format!(
                    "coarse bin {k} carries no probability mass"
                )));
            }
            tries += 1;
            for j in [k, k + 1] {
                if j == 0 || j == bins {
                    continue;
                }
                let moved = edges[j] + 0.1 * (centroid - edges[j]);
                if moved > edges[j - 1] && moved < edges[j + 1] {
                    edges[j] = moved;
                }
            }
        };
        subs.push(lloyd_max(&restricted, 1 << n2)?);
    }
    ConditionalCodebook::new(affine, n1, n2, edges, subs)
}

/// Sub-index of a secondary sample.
pub fn cond_encode(x_s: f64, cb: &ConditionalCodebook) -> Result<u32> {
    if !x_s.is_finite() {
        return Err(Error::Numeric {
            index: 0,
            message: "non-finite secondary sample".into(),
        });
    }
    Ok(cb.subcodebooks[cb.encoder_bin(x_s)].quantize(x_s) as u32)
}

/// Level `i_s` of the sub-codebook selected by the reconstructed primary sample.
pub fn cond_decode(i_s: u32, x_p_hat: f64, cb: &ConditionalCodebook) -> Result<f64> {
    let sub = &cb.subcodebooks[cb.decoder_bin(x_p_hat)];
    sub.level(i_s as usize).ok_or_else(|| {
        Error::CorruptStream(format!("sub-index {i_s} outside {} levels", sub.len()))
    })
}

pub fn cond_encode_all(x_s: &[f64], cb: &ConditionalCodebook) -> Result<Vec<u32>> {
    x_s.iter()
        .enumerate()
        .map(|(i, x)| {
            cond_encode(*x, cb).map_err(|e| match e {
                Error::Numeric { message, .. } => Error::Numeric { index: i, message },
                other => other,
            })
        })
        .collect()
}

/// Decodes sample `i` of the secondary stream against sample `i` of the primary reconstruction.
pub fn cond_decode_all(
    indices: &[u32],
    x_p_hat: &[f64],
    cb: &ConditionalCodebook,
) -> Result<Vec<f64>> {
    if indices.len() != x_p_hat.len() {
        return Err(validation(format!(
            "{} secondary indices but {} primary samples",
            indices.len(),
            x_p_hat.len()
        )));
    }
    indices
        .iter()
        .zip(x_p_hat)
        .map(|(i, p)| cond_decode(*i, *p, cb))
        .collect()
}

/// Fraction of samples where the decoder's bin differs from the encoder's.
pub fn bin_mismatch_rate(x_s: &[f64], x_p_hat: &[f64], cb: &ConditionalCodebook) -> f64 {
    let n = x_s.len().min(x_p_hat.len());
    if n == 0 {
        return 0.0;
    }
    let bad = x_s
        .iter()
        .zip(x_p_hat)
        .filter(|(s, p)| cb.encoder_bin(**s) != cb.decoder_bin(**p))
        .count();
    bad as f64 / n as f64
}

/// Mean squared quantization error of the two-level design under `pdf_s`,
/// assuming the decoder always finds the encoder's bin.
pub fn conditional_mse<S: Density>(pdf_s: &S, cb: &ConditionalCodebook) -> f64 {
    let mut total = 0.0;
    for (k, sub) in cb.subcodebooks.iter().enumerate() {
        let (a, b) = (cb.coarse_s[k], cb.coarse_s[k + 1]);
        let lv = sub.levels();
        let bd = sub.boundaries();
        for (l, y) in lv.iter().enumerate() {
            let lo = if l == 0 { a } else { bd[l - 1].max(a) };
            let hi = if l + 1 == lv.len() { b } else { bd[l].min(b) };
            if lo < hi {
                total += pdf_s.moments(lo, hi, *y)[2];
            }
        }
    }
    total
}
