//! Multiplication-free differential codec with a modification factor.
//!
//! Each sample sends the index of `Δx_i + A_i`, where `A_i` nudges the
//! difference toward cancelling the previous reconstruction error
//! `s_i = x_{i-1} - x^_{i-1}`. `A_i` is read from precomputed level-gap tables
//! indexed by the previous sample's codebook index, so the per-sample loop is
//! three additions and a handful of comparisons.

use crate::error::{validation, Error, Result};
use crate::ops::{Arith, Plain};
use crate::quantizer_design::Codebook;

/// `|s_i|` at or below this leaves `β_i` undefined.
pub const BETA_EPS: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub struct DiffEncoded {
    /// `x_0`, sent at full precision.
    pub initial: f64,
    pub indices: Vec<u32>,
    pub codebook: Codebook,
}

impl DiffEncoded {
    pub fn len(&self) -> usize {
        self.indices.len() + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }
}

/// Whether the modification factor is applied; `Off` is plain delta modulation
/// of the differences with a closed-loop tracker.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Modification {
    #[default]
    Table,
    Off,
}

/// Level gaps below and above each index; zero where the neighbour does not exist.
#[derive(Debug, Clone)]
struct GapTables {
    below: Vec<f64>,
    above: Vec<f64>,
}

impl GapTables {
    fn new(codebook: &Codebook) -> Self {
        let lv = codebook.levels();
        let n = lv.len();
        let below = (0..n)
            .map(|l| if l == 0 { 0.0 } else { lv[l] - lv[l - 1] })
            .collect();
        let above = (0..n)
            .map(|l| {
                if l + 1 == n {
                    0.0
                } else {
                    -(lv[l + 1] - lv[l])
                }
            })
            .collect();
        Self { below, above }
    }
}

/// Encoder state: previous sample, previous reconstruction and previous index.
#[derive(Debug, Clone)]
pub struct DiffEncoder<'a> {
    codebook: &'a Codebook,
    gaps: GapTables,
    mode: Modification,
    prev_x: f64,
    prev_xh: f64,
    prev_idx: usize,
}

/// Everything the encoder computed for one sample.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DiffStep {
    pub index: u32,
    /// `s_i = x_{i-1} - x^_{i-1}`.
    pub s: f64,
    pub a: f64,
    /// `Δx'_i - φ_{l_i}`.
    pub eq: f64,
    pub reconstruction: f64,
}

impl<'a> DiffEncoder<'a> {
    pub fn new(codebook: &'a Codebook, initial: f64, mode: Modification) -> Self {
        Self {
            codebook,
            gaps: GapTables::new(codebook),
            mode,
            prev_x: initial,
            prev_xh: initial,
            prev_idx: codebook.quantize(0.0),
        }
    }

    /// `A_i`, chosen by comparing `x_{i-1}` with `x^_{i-1}`; no arithmetic.
    #[inline(always)]
    fn modification(&self) -> f64 {
        if self.mode == Modification::Off {
            0.0
        } else if self.prev_x > self.prev_xh {
            self.gaps.below[self.prev_idx]
        } else if self.prev_x < self.prev_xh {
            self.gaps.above[self.prev_idx]
        } else {
            0.0
        }
    }

    /// The three additions of the steady-state loop.
    #[inline]
    pub fn step<A: Arith>(&mut self, ar: &A, x: f64) -> (u32, f64) {
        let a = self.modification();
        let dx = ar.sub(x, self.prev_x);
        let dxm = ar.add(dx, a);
        let idx = self.codebook.quantize(dxm);
        let xh = ar.add(self.prev_xh, self.codebook.levels()[idx]);
        self.prev_x = x;
        self.prev_xh = xh;
        self.prev_idx = idx;
        (idx as u32, xh)
    }

    /// As [`DiffEncoder::step`], also reporting the quantities used for analysis.
    pub fn step_traced(&mut self, x: f64) -> DiffStep {
        let s = self.prev_x - self.prev_xh;
        let a = self.modification();
        let dxm = (x - self.prev_x) + a;
        let (index, reconstruction) = self.step(&Plain, x);
        DiffStep {
            index,
            s,
            a,
            eq: dxm - self.codebook.levels()[index as usize],
            reconstruction,
        }
    }

    /// Amplitude words held between samples: `x_{i-1}` and `x^_{i-1}`.
    /// The previous index is a `ceil(log2 L)`-bit register and is not counted.
    pub fn memory_words(&self) -> usize {
        2
    }
}

fn check_signal(signal: &[f64]) -> Result<()> {
    if signal.len() < 2 {
        return Err(validation("differential coding needs at least two samples"));
    }
    if let Some(i) = signal.iter().position(|v| !v.is_finite()) {
        return Err(Error::Numeric {
            index: i,
            message: "non-finite input sample".into(),
        });
    }
    Ok(())
}

pub fn diff_encode(signal: &[f64], codebook: &Codebook) -> Result<DiffEncoded> {
    diff_encode_with(signal, codebook, Modification::Table)
}

pub fn diff_encode_with(
    signal: &[f64],
    codebook: &Codebook,
    mode: Modification,
) -> Result<DiffEncoded> {
    check_signal(signal)?;
    let mut enc = DiffEncoder::new(codebook, signal[0], mode);
    let indices = signal[1..].iter().map(|x| enc.step(&Plain, *x).0).collect();
    Ok(DiffEncoded {
        initial: signal[0],
        indices,
        codebook: codebook.clone(),
    })
}

/// Per-sample encoder quantities for samples `1..n`.
pub fn diff_encode_traced(
    signal: &[f64],
    codebook: &Codebook,
    mode: Modification,
) -> Result<Vec<DiffStep>> {
    check_signal(signal)?;
    let mut enc = DiffEncoder::new(codebook, signal[0], mode);
    Ok(signal[1..].iter().map(|x| enc.step_traced(*x)).collect())
}

/// `x^_i = x^_{i-1} + φ_{l_i}`.
pub fn diff_decode(enc: &DiffEncoded) -> Result<Vec<f64>> {
    let levels = enc.codebook.levels();
    let mut out = Vec::with_capacity(enc.len());
    let mut xh = enc.initial;
    out.push(xh);
    for idx in &enc.indices {
        let phi = *levels.get(*idx as usize).ok_or_else(|| {
            Error::CorruptStream(format!(
                "index {idx} outside a codebook of {} levels",
                levels.len()
            ))
        })?;
        xh += phi;
        out.push(xh);
    }
    Ok(out)
}

/// `β_i = A_i / s_i` per encoded sample, `None` where `|s_i| <= BETA_EPS`.
pub fn empirical_beta_trace(signal: &[f64], codebook: &Codebook) -> Result<Vec<Option<f64>>> {
    Ok(diff_encode_traced(signal, codebook, Modification::Table)?
        .iter()
        .map(|st| (st.s.abs() > BETA_EPS).then(|| st.a / st.s))
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::quantizer_design::uniform_codebook;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn small_book() -> Codebook {
        Codebook::from_levels(vec![-0.3, -0.1, 0.0, 0.1, 0.3]).unwrap()
    }

    #[test]
    fn constant_signal_is_exact() {
        let cb = small_book();
        let enc = diff_encode(&[0.7; 20], &cb).unwrap();
        assert!(enc.indices.iter().all(|i| *i == 2));
        assert_eq!(diff_decode(&enc).unwrap(), vec![0.7; 20]);
        assert!(empirical_beta_trace(&[0.7; 20], &cb)
            .unwrap()
            .iter()
            .all(Option::is_none));
    }

    #[test]
    fn forced_first_steps() {
        let cb = small_book();
        let tr = diff_encode_traced(&[0.0, 0.35, 0.35], &cb, Modification::Table).unwrap();
        assert_eq!(tr[0].s, 0.0);
        assert_eq!(tr[0].a, 0.0);
        assert_eq!(tr[0].index, 4);
        assert_eq!(tr[0].reconstruction, 0.3);
        // s_2 = 0.05 > 0: A is the gap below the previous level, 0.3 - 0.1.
        assert!((tr[1].s - 0.05).abs() < 1e-15);
        assert!((tr[1].a - 0.2).abs() < 1e-15);
        let err = (0.35 - tr[1].reconstruction).abs();
        assert!(err < tr[1].s.abs() + 0.1);
    }

    /// Straight-line transcription of the encoder equations.
    fn reference(signal: &[f64], cb: &Codebook) -> Vec<u32> {
        let lv = cb.levels();
        let nearest = |v: f64| {
            let mut best = 0;
            for l in 1..lv.len() {
                if (lv[l] - v).abs() < (lv[best] - v).abs() {
                    best = l;
                }
            }
            best
        };
        let mut xh = signal[0];
        let mut prev = nearest(0.0);
        let mut out = Vec::new();
        for i in 1..signal.len() {
            let s = signal[i - 1] - xh;
            let a = if s > 0.0 && prev > 0 {
                lv[prev] - lv[prev - 1]
            } else if s < 0.0 && prev + 1 < lv.len() {
                -(lv[prev + 1] - lv[prev])
            } else {
                0.0
            };
            let l = nearest(signal[i] - signal[i - 1] + a);
            xh += lv[l];
            prev = l;
            out.push(l as u32);
        }
        out
    }

    #[test]
    fn matches_reference_transcription() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let cb = uniform_codebook(-0.4, 0.4, 8).unwrap();
        for _ in 0..50 {
            let mut x = vec![0.0];
            for _ in 0..300 {
                let v = *x.last().unwrap() + rng.random_range(-0.3..0.3);
                x.push(v);
            }
            assert_eq!(diff_encode(&x, &cb).unwrap().indices, reference(&x, &cb));
        }
    }

    #[test]
    fn decoder_reproduces_encoder_trace() {
        let mut rng = ChaCha8Rng::seed_from_u64(22);
        let cb = uniform_codebook(-0.5, 0.5, 16).unwrap();
        for _ in 0..100 {
            let x: Vec<f64> = (0..200).map(|_| rng.random_range(-1.0..1.0)).collect();
            let tr = diff_encode_traced(&x, &cb, Modification::Table).unwrap();
            let dec = diff_decode(&diff_encode(&x, &cb).unwrap()).unwrap();
            assert_eq!(dec[0], x[0]);
            for (k, st) in tr.iter().enumerate() {
                assert_eq!(dec[k + 1], st.reconstruction);
            }
        }
    }

    #[test]
    fn error_recursion() {
        let mut rng = ChaCha8Rng::seed_from_u64(23);
        let cb = uniform_codebook(-0.3, 0.3, 8).unwrap();
        let x: Vec<f64> = (0..2000)
            .map(|i| (i as f64 * 0.02).sin() + 0.01 * rng.random_range(-1.0..1.0))
            .collect();
        let tr = diff_encode_traced(&x, &cb, Modification::Table).unwrap();
        for (k, st) in tr.iter().enumerate() {
            let e = x[k + 1] - st.reconstruction;
            assert!((e - (st.s - st.a + st.eq)).abs() < 1e-12);
        }
    }

    #[test]
    fn a_is_beta_times_s() {
        let x: Vec<f64> = (0..500).map(|i| (i as f64 * 0.07).sin()).collect();
        let cb = uniform_codebook(-0.2, 0.2, 8).unwrap();
        let tr = diff_encode_traced(&x, &cb, Modification::Table).unwrap();
        let beta = empirical_beta_trace(&x, &cb).unwrap();
        for (st, b) in tr.iter().zip(&beta) {
            if let Some(b) = b {
                assert!((b * st.s - st.a).abs() < 1e-12);
            }
        }
        assert!(beta.iter().any(Option::is_some));
    }

    #[test]
    fn without_modification_is_delta_modulation() {
        let x: Vec<f64> = (0..300).map(|i| (i as f64 * 0.05).cos()).collect();
        let cb = uniform_codebook(-0.1, 0.1, 4).unwrap();
        let tr = diff_encode_traced(&x, &cb, Modification::Off).unwrap();
        assert!(tr.iter().all(|st| st.a == 0.0));
    }

    #[test]
    fn corrupt_index() {
        let enc = DiffEncoded {
            initial: 0.0,
            indices: vec![9],
            codebook: small_book(),
        };
        assert!(matches!(diff_decode(&enc), Err(Error::CorruptStream(_))));
        assert!(matches!(
            diff_encode(&[0.0, f64::NAN], &small_book()),
            Err(Error::Numeric { index: 1, .. })
        ));
    }
}
