use serde::{Deserialize, Serialize};

use super::density::{flat_moments, Density, FittedPdf};
use crate::error::{degenerate, validation, Result};
use crate::signal_io::EcgRecord;

/// Equal-width histogram with probabilities normalized by sample count.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HistogramModel {
    edges: Vec<f64>,
    probabilities: Vec<f64>,
    min: f64,
    max: f64,
}

impl HistogramModel {
    pub fn edges(&self) -> &[f64] {
        &self.edges
    }

    pub fn probabilities(&self) -> &[f64] {
        &self.probabilities
    }

    /// Smallest and largest observed value.
    pub fn observed_range(&self) -> (f64, f64) {
        (self.min, self.max)
    }

    pub fn bins(&self) -> usize {
        self.probabilities.len()
    }

    pub fn centers(&self) -> impl Iterator<Item = f64> + '_ {
        self.edges.windows(2).map(|w| 0.5 * (w[0] + w[1]))
    }

    /// Probability per unit amplitude in each bin.
    pub fn densities(&self) -> impl Iterator<Item = f64> + '_ {
        self.edges
            .windows(2)
            .zip(&self.probabilities)
            .map(|(w, p)| p / (w[1] - w[0]))
    }

    pub fn occupied_bins(&self) -> usize {
        self.probabilities.iter().filter(|p| **p > 0.0).count()
    }
}

/// Equal-width histogram of `values` spanning `[min, max]`.
///
/// A constant input gets a unit-wide range centred on its value.
pub fn histogram(values: &[f64], bins: usize) -> Result<HistogramModel> {
    if values.is_empty() {
        return Err(validation("histogram of an empty sequence"));
    }
    if bins < 2 {
        return Err(validation("histogram needs at least two bins"));
    }
    if values.iter().any(|v| !v.is_finite()) {
        return Err(validation("histogram input contains non-finite values"));
    }
    let min = values.iter().copied().fold(f64::INFINITY, f64::min);
    let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let (lo, hi) = if max > min {
        (min, max)
    } else {
        (min - 0.5, min + 0.5)
    };
    let width = (hi - lo) / bins as f64;
    let mut edges: Vec<f64> = (0..=bins).map(|i| lo + width * i as f64).collect();
    edges[bins] = hi;
    let mut counts = vec![0u64; bins];
    for v in values {
        let idx = (((v - lo) / width).floor() as usize).min(bins - 1);
        counts[idx] += 1;
    }
    let n = values.len() as f64;
    let probabilities = counts.iter().map(|c| *c as f64 / n).collect();
    Ok(HistogramModel {
        edges,
        probabilities,
        min,
        max,
    })
}

impl Density for HistogramModel {
    fn support(&self) -> (f64, f64) {
        (self.edges[0], self.edges[self.edges.len() - 1])
    }

    fn pdf(&self, x: f64) -> f64 {
        let (lo, hi) = self.support();
        if x < lo || x > hi {
            return 0.0;
        }
        let i = self
            .edges
            .partition_point(|e| *e <= x)
            .clamp(1, self.bins())
            - 1;
        self.probabilities[i] / (self.edges[i + 1] - self.edges[i])
    }

    fn moments(&self, a: f64, b: f64, c: f64) -> [f64; 3] {
        let mut out = [0.0; 3];
        if a >= b {
            return out;
        }
        let first = self.edges.partition_point(|e| *e <= a).saturating_sub(1);
        for i in first..self.bins() {
            let (e0, e1) = (self.edges[i], self.edges[i + 1]);
            if e0 >= b {
                break;
            }
            let p = self.probabilities[i];
            if p == 0.0 {
                continue;
            }
            let m = flat_moments(p / (e1 - e0), a.max(e0), b.min(e1), c);
            for k in 0..3 {
                out[k] += m[k];
            }
        }
        out
    }
}

/// Smallest and largest amplitude (or adjacent difference) across every channel
/// of every record.
pub fn dynamic_range(records: &[EcgRecord], differenced: bool) -> Result<(f64, f64)> {
    if records.is_empty() {
        return Err(validation("dynamic range of an empty record set"));
    }
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for rec in records {
        for ch in rec.channels() {
            let it: Box<dyn Iterator<Item = f64>> = if differenced {
                Box::new(ch.samples.windows(2).map(|w| w[1] - w[0]))
            } else {
                Box::new(ch.samples.iter().copied())
            };
            for v in it {
                lo = lo.min(v);
                hi = hi.max(v);
            }
        }
    }
    Ok((lo, hi))
}

/// Adjacent differences `x[i] - x[i-1]`.
pub fn differences(x: &[f64]) -> Vec<f64> {
    x.windows(2).map(|w| w[1] - w[0]).collect()
}

/// Smallest rate returned by the fit; flat histograms end up here.
pub const MIN_RATE: f64 = 1e-9;

/// Least-squares fit of `ln f = ln κ - λ|x|` to the bins below the clip level.
pub fn fit_clipped_exponential(h: &HistogramModel) -> Result<FittedPdf> {
    fit_clipped_exponential_with(h, None)
}

/// As [`fit_clipped_exponential`], optionally holding the rate fixed and
/// fitting only the scale.
pub fn fit_clipped_exponential_with(
    h: &HistogramModel,
    fixed_rate: Option<f64>,
) -> Result<FittedPdf> {
    if h.occupied_bins() < 5 {
        return Err(validation(format!(
            "clipped-exponential fit needs at least 5 occupied bins, got {}",
            h.occupied_bins()
        )));
    }
    let points: Vec<(f64, f64)> = h
        .centers()
        .zip(h.densities())
        .filter(|(_, d)| *d > 0.0)
        .map(|(c, d)| (c.abs(), d))
        .collect();
    let clip = points.iter().map(|p| p.1).fold(0.0, f64::max);
    let below: Vec<(f64, f64)> = points
        .iter()
        .copied()
        .filter(|(_, d)| *d < clip * (1.0 - 1e-12))
        .collect();
    let distinct = |pts: &[(f64, f64)]| pts.iter().any(|p| (p.0 - pts[0].0).abs() > 0.0);
    let fit_set = if below.len() >= 2 && distinct(&below) {
        below
    } else {
        points
    };

    let n = fit_set.len() as f64;
    let (lambda, ln_kappa) = match fixed_rate {
        Some(rate) => {
            if !(rate > 0.0 && rate.is_finite()) {
                return Err(validation(format!(
                    "fixed rate must be positive, got {rate}"
                )));
            }
            let b = fit_set.iter().map(|(x, d)| d.ln() + rate * x).sum::<f64>() / n;
            (rate, b)
        }
        None => {
            let mx = fit_set.iter().map(|p| p.0).sum::<f64>() / n;
            let my = fit_set.iter().map(|p| p.1.ln()).sum::<f64>() / n;
            let sxx: f64 = fit_set.iter().map(|p| (p.0 - mx).powi(2)).sum();
            let sxy: f64 = fit_set.iter().map(|p| (p.0 - mx) * (p.1.ln() - my)).sum();
            let slope = if sxx > 0.0 { sxy / sxx } else { 0.0 };
            ((-slope).max(MIN_RATE), my - slope * mx)
        }
    };
    let kappa = ln_kappa.exp();
    if !lambda.is_finite() || !kappa.is_finite() || kappa <= 0.0 {
        return Err(degenerate("exponential fit produced non-finite parameters"));
    }
    let (lo, hi) = h.support();
    FittedPdf::new(lambda, kappa, clip, lo, hi)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::quadrature::adaptive_simpson;

    #[test]
    fn two_point_histogram() {
        let h = histogram(&[-1.0, 1.0], 2).unwrap();
        assert_eq!(h.probabilities(), &[0.5, 0.5]);
    }

    #[test]
    fn constant_input_single_bin() {
        let h = histogram(&[3.0; 10], 7).unwrap();
        assert_eq!(h.occupied_bins(), 1);
        assert!(h.probabilities().contains(&1.0));
        assert!(histogram(&[], 4).is_err());
    }

    #[test]
    fn probabilities_sum_to_one() {
        let v: Vec<f64> = (0..1000).map(|i| ((i * 37) % 101) as f64 / 7.0).collect();
        let h = histogram(&v, 33).unwrap();
        assert!((h.probabilities().iter().sum::<f64>() - 1.0).abs() < 1e-12);
        assert!(h.edges().windows(2).all(|w| w[0] < w[1]));
    }

    #[test]
    fn dynamic_range_examples() {
        let r = EcgRecord::from_samples(0.01, vec![0.0, 1.0, -1.0]).unwrap();
        assert_eq!(
            dynamic_range(std::slice::from_ref(&r), false).unwrap(),
            (-1.0, 1.0)
        );
        assert_eq!(dynamic_range(&[r], true).unwrap(), (-2.0, 1.0));
        assert!(dynamic_range(&[], true).is_err());
    }

    fn exact_exponential_histogram(rate: f64, clip: f64, bins: usize) -> HistogramModel {
        let (lo, hi) = (-0.3, 0.3);
        let w = (hi - lo) / bins as f64;
        let edges: Vec<f64> = (0..=bins).map(|i| lo + w * i as f64).collect();
        let f = |x: f64| clip.min((-rate * x.abs()).exp());
        let mass: Vec<f64> = edges
            .windows(2)
            .map(|e| adaptive_simpson(f, e[0], e[1], 1e-14))
            .collect();
        let total: f64 = mass.iter().sum();
        HistogramModel {
            probabilities: mass.iter().map(|m| m / total).collect(),
            edges,
            min: lo,
            max: hi,
        }
    }

    #[test]
    fn recovers_rate_of_exact_histogram() {
        let h = exact_exponential_histogram(50.0, 0.6, 61);
        let pdf = fit_clipped_exponential(&h).unwrap();
        assert!(
            (pdf.lambda - 50.0).abs() / 50.0 < 0.05,
            "λ = {}",
            pdf.lambda
        );
    }

    #[test]
    fn symmetric_histogram_gives_symmetric_density() {
        let h = exact_exponential_histogram(30.0, 0.8, 41);
        let pdf = fit_clipped_exponential(&h).unwrap();
        for i in 0..=100 {
            let x = 0.3 * i as f64 / 100.0;
            assert!((pdf.pdf(x) - pdf.pdf(-x)).abs() < 1e-9);
        }
    }

    #[test]
    fn uniform_histogram_gives_small_rate() {
        let v: Vec<f64> = (0..1000).map(|i| i as f64 / 999.0 - 0.5).collect();
        let h = histogram(&v, 10).unwrap();
        let pdf = fit_clipped_exponential(&h).unwrap();
        assert!(pdf.lambda < 1e-6, "λ = {}", pdf.lambda);
        let total = adaptive_simpson(|x| pdf.pdf(x), pdf.lo, pdf.hi, 1e-13);
        assert!((total - 1.0).abs() < 1e-9);
    }

    #[test]
    fn fit_needs_five_occupied_bins() {
        let h = histogram(&[0.0, 1.0, 2.0, 3.0], 4).unwrap();
        assert!(matches!(
            fit_clipped_exponential(&h),
            Err(crate::Error::Validation(_))
        ));
    }

    #[test]
    fn histogram_density_moments() {
        let h = histogram(&[0.0, 0.1, 0.2, 0.9, 1.0], 5).unwrap();
        let m = h.moments(0.0, 1.0, 0.0);
        assert!((m[0] - 1.0).abs() < 1e-12);
        let m2 = h.moments(-5.0, 5.0, 0.0);
        assert!((m2[0] - 1.0).abs() < 1e-12);
    }
}
