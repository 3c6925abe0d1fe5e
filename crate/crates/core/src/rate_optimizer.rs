//! Joint choice of word length `W` and transmission period `T_t = K T_0`
//! minimizing reconstruction error under a bit-rate budget.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::diff_codec::{diff_decode, diff_encode};
use crate::error::{validation, Error, Result};
use crate::quantizer_design::{differences, train_codebook, uniform_codebook, Codebook};
use crate::signal_io::{expand_hold, EcgRecord};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RateBounds {
    pub t_t_upper_s: f64,
    pub t_t_lower_s: f64,
    pub w_upper: u32,
    pub w_lower: u32,
}

impl Default for RateBounds {
    fn default() -> Self {
        Self {
            t_t_upper_s: 0.1138,
            t_t_lower_s: 1.0 / 360.0,
            w_upper: 12,
            w_lower: 4,
        }
    }
}

impl RateBounds {
    pub fn validate(&self) -> Result<()> {
        if !(self.t_t_lower_s > 0.0
            && self.t_t_lower_s < self.t_t_upper_s
            && self.t_t_upper_s.is_finite())
        {
            return Err(validation(format!(
                "transmission period bounds must satisfy 0 < lower < upper, got [{}, {}]",
                self.t_t_lower_s, self.t_t_upper_s
            )));
        }
        if !(1 <= self.w_lower && self.w_lower < self.w_upper && self.w_upper <= 24) {
            return Err(validation(format!(
                "word-length bounds must satisfy 1 <= lower < upper <= 24, got [{}, {}]",
                self.w_lower, self.w_upper
            )));
        }
        Ok(())
    }

    /// Downsampling factors whose period lies within the bounds.
    pub fn k_range(&self, t0_s: f64) -> std::ops::RangeInclusive<usize> {
        let slack = 1e-9;
        let lo = ((self.t_t_lower_s / t0_s) * (1.0 - slack)).ceil().max(1.0) as usize;
        let hi = ((self.t_t_upper_s / t0_s) * (1.0 + slack)).floor() as usize;
        lo..=hi
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RateOperatingPoint {
    pub w: u32,
    pub k: usize,
    pub t_t_s: f64,
    pub rate_bps: f64,
    pub ase: f64,
}

impl RateOperatingPoint {
    pub fn new(w: u32, k: usize, t0_s: f64, ase: f64) -> Self {
        let t_t_s = k as f64 * t0_s;
        Self {
            w,
            k,
            t_t_s,
            rate_bps: w as f64 / t_t_s,
            ase,
        }
    }
}

/// Twice the shortest Q-R or R-S interval over all annotated beats.
pub fn qrs_period_bound(records: &[EcgRecord]) -> Result<f64> {
    if records.is_empty() {
        return Err(validation("no records supplied"));
    }
    let mut best = f64::INFINITY;
    for (n, rec) in records.iter().enumerate() {
        let ann = rec
            .annotations()
            .filter(|a| !a.is_empty())
            .ok_or_else(|| validation(format!("record {n} carries no Q/R/S annotations")))?;
        for beat in ann {
            if !(beat.q < beat.r && beat.r < beat.s) {
                return Err(validation(format!(
                    "record {n} has a beat with Q, R, S out of order"
                )));
            }
            let gap = (beat.r - beat.q).min(beat.s - beat.r) as f64 * rec.sample_period_s();
            best = best.min(gap);
        }
    }
    Ok(2.0 * best)
}

/// Smallest `W >= 0` with `1 / 2^(W+1) <= min |g / η|`.
pub fn word_length_bound(g: &[f64], eta: &[f64]) -> Result<u32> {
    if g.is_empty() || g.len() != eta.len() {
        return Err(validation(
            "need equally many nonempty distance and envelope measurements",
        ));
    }
    if eta.iter().any(|e| *e == 0.0 || !e.is_finite()) || g.iter().any(|v| !v.is_finite()) {
        return Err(validation("envelope amplitudes must be finite and nonzero"));
    }
    let min_gamma = g
        .iter()
        .zip(eta)
        .map(|(a, b)| (a / b).abs())
        .fold(f64::INFINITY, f64::min);
    word_length_for_ratio(min_gamma)
}

/// Smallest `W >= 0` with `1 / 2^(W+1) <= gamma`.
pub fn word_length_for_ratio(gamma: f64) -> Result<u32> {
    (0..64u32)
        .find(|w| (0.5f64).powi(*w as i32 + 1) <= gamma)
        .ok_or_else(|| validation(format!("no word length resolves a ratio of {gamma}")))
}

/// Mean squared difference on the original sample grid.
pub fn ase(original: &[f64], reconstructed: &[f64]) -> Result<f64> {
    if original.len() != reconstructed.len() {
        return Err(validation(format!(
            "length mismatch: {} original vs {} reconstructed samples",
            original.len(),
            reconstructed.len()
        )));
    }
    if original.is_empty() {
        return Err(validation("average square error of empty sequences"));
    }
    let sum: f64 = original
        .iter()
        .zip(reconstructed)
        .map(|(a, b)| (a - b) * (a - b))
        .sum();
    Ok(sum / original.len() as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GridCodec {
    /// Each kept sample quantized by a uniform codebook over the record's range.
    UniformDirect,
    /// Kept samples coded by the differential codec with a Lloyd-Max codebook
    /// trained on their differences.
    ProposedDiff,
}

/// Histogram resolution used when training differential codebooks for the grid.
pub const GRID_HISTOGRAM_BINS: usize = 256;

/// Reconstruction on the original grid after keeping every `k`-th sample and
/// coding it with `w` bits.
pub fn reconstruct_at(signal: &[f64], codec: GridCodec, w: u32, k: usize) -> Result<Vec<f64>> {
    if k == 0 {
        return Err(validation("downsampling factor must be at least 1"));
    }
    let kept: Vec<f64> = signal.iter().step_by(k).copied().collect();
    let levels = 1usize << w;
    let coded = match codec {
        GridCodec::UniformDirect => {
            let (lo, hi) = extremes(signal);
            let cb = uniform_codebook(lo, if hi > lo { hi } else { lo + 1.0 }, levels)?;
            kept.iter().map(|x| cb.quantize_value(*x)).collect()
        }
        GridCodec::ProposedDiff => {
            let cb = diff_codebook(&kept, levels)?;
            diff_decode(&diff_encode(&kept, &cb)?)?
        }
    };
    Ok(expand_hold(&coded, k, signal.len()))
}

/// Lloyd-Max codebook for the differences of `kept`.
pub fn diff_codebook(kept: &[f64], levels: usize) -> Result<Codebook> {
    let d = differences(kept);
    if d.is_empty() {
        return Err(validation(
            "need at least two samples to train a differential codebook",
        ));
    }
    trained_codebook(&d, levels)
}

/// Clipped-exponential Lloyd-Max codebook for `values`; a uniform one over their
/// range when the histogram is too sparse to fit.
pub fn trained_codebook(values: &[f64], levels: usize) -> Result<Codebook> {
    if values.is_empty() {
        return Err(validation("no training values"));
    }
    match train_codebook(values, GRID_HISTOGRAM_BINS, levels, None) {
        Ok(cb) => Ok(cb),
        Err(Error::Validation(_)) | Err(Error::Degenerate(_)) => {
            let (lo, hi) = extremes(values);
            let half = (hi - lo).max(1e-12) * 0.5 + 1e-12;
            let mid = 0.5 * (lo + hi);
            uniform_codebook(mid - half, mid + half, levels)
        }
        Err(e) => Err(e),
    }
}

fn extremes(x: &[f64]) -> (f64, f64) {
    x.iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| {
            (a.min(*v), b.max(*v))
        })
}

/// Every `(W, K)` cell within the bounds, evaluated in parallel.
pub fn evaluate_grid(
    signal: &[f64],
    codec: GridCodec,
    bounds: &RateBounds,
    t0_s: f64,
) -> Result<Vec<RateOperatingPoint>> {
    bounds.validate()?;
    if !(t0_s > 0.0 && t0_s.is_finite()) {
        return Err(validation(format!(
            "sample period must be positive, got {t0_s}"
        )));
    }
    if let Some(i) = signal.iter().position(|v| !v.is_finite()) {
        return Err(Error::Numeric {
            index: i,
            message: "non-finite sample".into(),
        });
    }
    let ks = bounds.k_range(t0_s);
    if ks.is_empty() {
        return Err(validation(
            "no downsampling factor satisfies the period bounds",
        ));
    }
    let k_max = *ks.end();
    if signal.len() < 10 * k_max {
        return Err(validation(format!(
            "signal of {} samples is too short for K up to {k_max}",
            signal.len()
        )));
    }
    let cells: Vec<(u32, usize)> = (bounds.w_lower..=bounds.w_upper)
        .flat_map(|w| ks.clone().map(move |k| (w, k)))
        .collect();
    cells
        .par_iter()
        .map(|&(w, k)| {
            let rec = reconstruct_at(signal, codec, w, k)?;
            Ok(RateOperatingPoint::new(w, k, t0_s, ase(signal, &rec)?))
        })
        .collect()
}

/// As [`evaluate_grid`] on channel 0 of a record at its own sample period.
pub fn evaluate_record_grid(
    record: &EcgRecord,
    codec: GridCodec,
    bounds: &RateBounds,
) -> Result<Vec<RateOperatingPoint>> {
    evaluate_grid(record.channel(0)?, codec, bounds, record.sample_period_s())
}

/// Feasible point with least error; ties go to the lower rate, then the lower `W`.
pub fn optimize_rate(grid: &[RateOperatingPoint], budget_bps: f64) -> Result<RateOperatingPoint> {
    if grid.is_empty() {
        return Err(validation("empty operating grid"));
    }
    grid.iter()
        .filter(|p| p.rate_bps <= budget_bps)
        .min_by(|a, b| {
            a.ase
                .total_cmp(&b.ase)
                .then(a.rate_bps.total_cmp(&b.rate_bps))
                .then(a.w.cmp(&b.w))
        })
        .copied()
        .ok_or_else(|| Error::InfeasibleBudget {
            budget_bps,
            min_rate_bps: grid
                .iter()
                .map(|p| p.rate_bps)
                .fold(f64::INFINITY, f64::min),
        })
}

/// The `K = 1` point with `W = floor(R T_0)` clamped to the bounds, if it meets the budget.
pub fn fixed_period_point(
    grid: &[RateOperatingPoint],
    budget_bps: f64,
    t0_s: f64,
    bounds: &RateBounds,
) -> Option<RateOperatingPoint> {
    let w = ((budget_bps * t0_s).floor().max(0.0) as u32).clamp(bounds.w_lower, bounds.w_upper);
    grid.iter()
        .find(|p| p.k == 1 && p.w == w && p.rate_bps <= budget_bps)
        .copied()
}

/// Header "W,K,Tt_s,rate_bps,ase", one row per point.
pub fn grid_to_csv(grid: &[RateOperatingPoint]) -> String {
    let mut s = String::from("W,K,Tt_s,rate_bps,ase\n");
    for p in grid {
        s.push_str(&format!(
            "{},{},{},{},{}\n",
            p.w, p.k, p.t_t_s, p.rate_bps, p.ase
        ));
    }
    s
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OptimumReport {
    #[serde(rename = "W")]
    pub w: u32,
    #[serde(rename = "K")]
    pub k: usize,
    pub rate_bps: f64,
    pub ase: f64,
    pub budget_bps: f64,
}

impl OptimumReport {
    pub fn new(p: &RateOperatingPoint, budget_bps: f64) -> Self {
        Self {
            w: p.w,
            k: p.k,
            rate_bps: p.rate_bps,
            ase: p.ase,
            budget_bps,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::signal_io::BeatAnnotation;

    #[test]
    fn word_length_examples() {
        assert_eq!(word_length_for_ratio(0.04).unwrap(), 4);
        assert_eq!(word_length_for_ratio(0.5).unwrap(), 0);
        assert_eq!(word_length_for_ratio(1.0 / 32.0).unwrap(), 4);
        assert_eq!(word_length_bound(&[0.4, 0.2], &[10.0, -1.0]).unwrap(), 4);
        assert!(word_length_bound(&[0.4], &[0.0]).is_err());
        assert!(word_length_for_ratio(0.0).is_err());
    }

    fn annotated(period: f64, beats: &[(usize, usize, usize)]) -> EcgRecord {
        let n = beats.last().unwrap().2 + 50;
        let ann = beats
            .iter()
            .map(|&(q, r, s)| BeatAnnotation {
                p: q - 5,
                q,
                r,
                s,
                t: s + 5,
            })
            .collect::<Vec<_>>();
        let rec = EcgRecord::from_samples(period, vec![0.0; n]).unwrap();
        EcgRecord::with_annotations(rec.sample_period_s(), rec.channels().to_vec(), Some(ann))
            .unwrap()
    }

    #[test]
    fn qrs_bound_min_then_double() {
        // Q->R 40 ms, R->S 60 ms at 1 ms sampling.
        let rec = annotated(1e-3, &[(10, 50, 110)]);
        assert!((qrs_period_bound(&[rec]).unwrap() - 0.080).abs() < 1e-15);
        let bare = EcgRecord::from_samples(1e-3, vec![0.0; 10]).unwrap();
        assert!(qrs_period_bound(&[bare]).is_err());
    }

    #[test]
    fn ase_examples() {
        assert_eq!(ase(&[1.0, 2.0], &[1.0, 2.0]).unwrap(), 0.0);
        assert!((ase(&[0.0, 1.0, 2.0], &[0.1, 1.1, 2.1]).unwrap() - 0.01).abs() < 1e-15);
        assert!(ase(&[1.0], &[1.0, 2.0]).is_err());
    }

    #[test]
    fn default_k_range() {
        let k = RateBounds::default().k_range(1.0 / 360.0);
        assert_eq!((*k.start(), *k.end()), (1, 40));
    }

    #[test]
    fn optimizer_examples() {
        let t0 = 1.0 / 360.0;
        let grid = vec![
            RateOperatingPoint::new(4, 1, t0, 0.5),
            RateOperatingPoint::new(8, 2, t0, 0.1),
            RateOperatingPoint::new(4, 2, t0, 0.1),
            RateOperatingPoint::new(12, 1, t0, 0.01),
        ];
        assert_eq!(optimize_rate(&grid, 1e9).unwrap().w, 12);
        let p = optimize_rate(&grid, 1500.0).unwrap();
        assert_eq!((p.w, p.k), (4, 2));
        match optimize_rate(&grid, 100.0) {
            Err(Error::InfeasibleBudget { min_rate_bps, .. }) => {
                assert!((min_rate_bps - 720.0).abs() < 1e-9)
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn csv_and_json_shapes() {
        let p = RateOperatingPoint::new(4, 2, 0.5, 0.25);
        assert_eq!(grid_to_csv(&[p]), "W,K,Tt_s,rate_bps,ase\n4,2,1,4,0.25\n");
        let j = serde_json::to_string(&OptimumReport::new(&p, 10.0)).unwrap();
        assert_eq!(
            j,
            r#"{"W":4,"K":2,"rate_bps":4.0,"ase":0.25,"budget_bps":10.0}"#
        );
    }
}
