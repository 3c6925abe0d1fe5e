//! Per-sample operation counts and corpus rate-distortion benchmarks.

use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::Serialize;

use super::stream::{encode_record, CodecConfig, EncodedStream};
use super::{mse, nmse, prd};
use crate::conditional_codec::{
    bin_mismatch_rate, build_conditional_codebook, cond_decode_all, cond_encode_all, AffineFit,
    CoarsePartition,
};
use crate::diff_codec::{diff_decode, diff_encode, DiffEncoder, Modification};
use crate::error::{degenerate, validation, Error, Result};
use crate::ops::Counting;
use crate::predictors::{
    fit_fir_mmse, ClosedLoopEncoder, FirPredictor, LmsEncoder, LmsParams, OpenLoopEncoder,
};
use crate::quantizer_design::{histogram, uniform_codebook, Codebook};
use crate::rate_optimizer::{diff_codebook, trained_codebook, GRID_HISTOGRAM_BINS};
use crate::signal_io::{synthesize_ecg, EcgRecord, SyntheticEcgSpec};

/// Predictor order of the DPCM, open-loop and LMS baselines.
pub const BENCH_ORDER: usize = 4;
/// Length of the signal the instrumented encoders run over.
pub const COMPLEXITY_SAMPLES: usize = 10_000;
/// LMS step as a fraction of `1 / (M P_x)`, with `P_x` the training power.
pub const LMS_STEP: f64 = 0.05;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum BenchCodec {
    /// The multiplication-free differential codec.
    Diff,
    /// Closed-loop prediction with an order-4 least-squares predictor.
    Dpcm,
    /// Closed-loop prediction with order-4 LMS adaptation.
    Lms,
    /// Open-loop prediction with an order-4 least-squares predictor.
    OpenLoop,
    /// Closed-loop, `M = 1`, `a_1 = 1`.
    Delta,
}

impl BenchCodec {
    pub const ALL: [BenchCodec; 5] = [
        BenchCodec::Diff,
        BenchCodec::Dpcm,
        BenchCodec::Lms,
        BenchCodec::OpenLoop,
        BenchCodec::Delta,
    ];

    pub fn name(self) -> &'static str {
        match self {
            BenchCodec::Diff => "diff",
            BenchCodec::Dpcm => "dpcm",
            BenchCodec::Lms => "lms",
            BenchCodec::OpenLoop => "olp",
            BenchCodec::Delta => "delta",
        }
    }
}

impl fmt::Display for BenchCodec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for BenchCodec {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|c| c.name() == s)
            .ok_or_else(|| {
                validation(format!(
                    "unknown codec '{s}', expected one of diff, dpcm, lms, olp, delta"
                ))
            })
    }
}

/// Steady-state cost of one encoded sample.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct Complexity {
    pub adds: u64,
    pub muls: u64,
    /// Amplitude words kept between samples.
    pub memory: u64,
    /// Extra cost of coefficient adaptation (LMS only).
    pub adapt_adds: u64,
    pub adapt_muls: u64,
}

fn complexity_signal() -> Vec<f64> {
    let spec = SyntheticEcgSpec {
        beats: 36,
        ..SyntheticEcgSpec::default()
    };
    let rec = synthesize_ecg(&spec, 7).expect("built-in synthetic spec is valid");
    rec.channel(0).expect("channel 0 exists")[..COMPLEXITY_SAMPLES].to_vec()
}

/// Operations per sample measured by running the encoder loop over
/// [`COMPLEXITY_SAMPLES`] samples with counting arithmetic.
pub fn count_complexity(codec: BenchCodec) -> Complexity {
    let x = complexity_signal();
    let cb = uniform_codebook(-0.2, 0.2, 16).expect("fixed codebook is valid");
    let ar = Counting::new();
    let adapt = Counting::new();
    let order4 = FirPredictor::new(vec![0.9, 0.05, 0.03, 0.01]).expect("fixed predictor is valid");
    let delta = FirPredictor::new(vec![1.0]).expect("fixed predictor is valid");
    let (steps, memory) = match codec {
        BenchCodec::Diff => {
            let mut enc = DiffEncoder::new(&cb, x[0], Modification::Table);
            x[1..].iter().for_each(|v| {
                enc.step(&ar, *v);
            });
            (x.len() - 1, enc.memory_words())
        }
        BenchCodec::Dpcm | BenchCodec::Delta => {
            let p = if codec == BenchCodec::Delta {
                &delta
            } else {
                &order4
            };
            let m = p.order();
            let mut enc = ClosedLoopEncoder::new(p, &cb, &x[..m]);
            x[m..].iter().for_each(|v| {
                enc.step(&ar, *v);
            });
            (x.len() - m, enc.memory_words())
        }
        BenchCodec::OpenLoop => {
            let m = order4.order();
            let mut enc = OpenLoopEncoder::new(&order4, &cb, &x[..m]);
            x[m..].iter().for_each(|v| {
                enc.step(&ar, *v);
            });
            (x.len() - m, enc.memory_words())
        }
        BenchCodec::Lms => {
            let params = LmsParams::zeros(BENCH_ORDER, 1e-3);
            let mut enc = LmsEncoder::new(&params, &cb, &x[..BENCH_ORDER]);
            x[BENCH_ORDER..].iter().for_each(|v| {
                enc.step(&ar, &adapt, *v);
            });
            (x.len() - BENCH_ORDER, enc.memory_words())
        }
    };
    let per = |n: u64| (n as f64 / steps as f64).round() as u64;
    Complexity {
        adds: per(ar.adds()),
        muls: per(ar.muls()),
        memory: memory as u64,
        adapt_adds: per(adapt.adds()),
        adapt_muls: per(adapt.muls()),
    }
}

/// One (record, codec, width) cell of a benchmark.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BenchRow {
    pub record: String,
    pub codec: String,
    pub width: u32,
    pub bits_per_sample: f64,
    pub rate_bps: f64,
    pub mse: f64,
    pub nmse: f64,
    pub prd: f64,
    pub adds: u64,
    pub muls: u64,
    pub memory: u64,
    pub failed: bool,
    pub error: String,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct BenchReport {
    pub rows: Vec<BenchRow>,
}

impl BenchReport {
    pub fn to_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        for r in &self.rows {
            w.serialize(r).map_err(|e| validation(e.to_string()))?;
        }
        let bytes = w.into_inner().map_err(|e| validation(e.to_string()))?;
        Ok(String::from_utf8(bytes).expect("csv output is UTF-8"))
    }

    /// Successful rows for one codec.
    pub fn rows_for<'a>(&'a self, codec: BenchCodec) -> impl Iterator<Item = &'a BenchRow> + 'a {
        self.rows
            .iter()
            .filter(move |r| !r.failed && r.codec == codec.name())
    }
}

struct Scores {
    bits_per_sample: f64,
    rate_bps: f64,
    mse: f64,
    nmse: f64,
    prd: f64,
}

fn split(x: &[f64]) -> Result<(&[f64], &[f64])> {
    if x.len() < 4 * (BENCH_ORDER + 1) {
        return Err(validation(format!(
            "record of {} samples is too short to split",
            x.len()
        )));
    }
    Ok(x.split_at(x.len() / 2))
}

fn mmse_residuals(train: &[f64], p: &FirPredictor) -> Vec<f64> {
    let a = p.coefficients();
    (a.len()..train.len())
        .map(|i| {
            train[i]
                - a.iter()
                    .enumerate()
                    .map(|(m, am)| am * train[i - 1 - m])
                    .sum::<f64>()
        })
        .collect()
}

/// Codec trained on `train` at `width` bits per index.
fn train_config(codec: BenchCodec, train: &[f64], width: u32) -> Result<CodecConfig> {
    let levels = 1usize << width;
    Ok(match codec {
        BenchCodec::Diff => CodecConfig::Diff {
            codebook: diff_codebook(train, levels)?,
        },
        BenchCodec::Delta => CodecConfig::ClosedLoop {
            predictor: FirPredictor::new(vec![1.0])?,
            codebook: diff_codebook(train, levels)?,
        },
        BenchCodec::Dpcm | BenchCodec::OpenLoop | BenchCodec::Lms => {
            let predictor = fit_fir_mmse(train, BENCH_ORDER)?;
            let codebook = trained_codebook(&mmse_residuals(train, &predictor), levels)?;
            match codec {
                BenchCodec::Dpcm => CodecConfig::ClosedLoop {
                    predictor,
                    codebook,
                },
                BenchCodec::OpenLoop => CodecConfig::OpenLoop {
                    predictor,
                    codebook,
                },
                _ => {
                    let power = train.iter().map(|v| v * v).sum::<f64>() / train.len() as f64;
                    if !(power > 0.0) {
                        return Err(degenerate("training segment has zero power"));
                    }
                    let params = LmsParams {
                        step: LMS_STEP / (BENCH_ORDER as f64 * power),
                        initial: predictor.coefficients().to_vec(),
                    };
                    CodecConfig::Lms { params, codebook }
                }
            }
        }
    })
}

fn score(record: &EcgRecord, codec: BenchCodec, width: u32) -> Result<Scores> {
    let (train, eval) = split(record.channel(0)?)?;
    let config = train_config(codec, train, width)?;
    let eval_rec = EcgRecord::from_samples(record.sample_period_s(), eval.to_vec())?;
    let stream = encode_record(&eval_rec, &config, 1)?;
    let decoded = EncodedStream::from_bytes(&stream.to_bytes())?.decode()?;
    let y = decoded.channel(0)?;
    if let Some(i) = y.iter().position(|v| !v.is_finite()) {
        return Err(Error::Numeric {
            index: i,
            message: "reconstruction is not finite".into(),
        });
    }
    Ok(Scores {
        bits_per_sample: stream.bits_per_sample(),
        rate_bps: stream.rate_bps(),
        mse: mse(eval, y)?,
        nmse: nmse(eval, y)?,
        prd: prd(eval, y)?,
    })
}

/// Trains on the first half of channel 0 of each record, codes the second half,
/// and scores it. A failing cell yields a row with `failed` set.
pub fn run_benchmark(
    corpus: &[(String, EcgRecord)],
    codecs: &[BenchCodec],
    widths: &[u32],
) -> Result<BenchReport> {
    if corpus.is_empty() {
        return Err(validation("benchmark corpus is empty"));
    }
    if codecs.is_empty() || widths.is_empty() {
        return Err(validation("need at least one codec and one width"));
    }
    if let Some(w) = widths.iter().find(|w| !(1..=16).contains(*w)) {
        return Err(validation(format!("width {w} outside 1..=16")));
    }
    let costs: Vec<Complexity> = codecs.iter().map(|c| count_complexity(*c)).collect();
    let tasks: Vec<(usize, usize, u32)> = (0..corpus.len())
        .flat_map(|r| (0..codecs.len()).flat_map(move |c| widths.iter().map(move |w| (r, c, *w))))
        .collect();
    let rows = tasks
        .par_iter()
        .map(|&(r, c, w)| {
            let (name, record) = &corpus[r];
            let cost = costs[c];
            let mut row = BenchRow {
                record: name.clone(),
                codec: codecs[c].name().into(),
                width: w,
                bits_per_sample: f64::NAN,
                rate_bps: f64::NAN,
                mse: f64::NAN,
                nmse: f64::NAN,
                prd: f64::NAN,
                adds: cost.adds,
                muls: cost.muls,
                memory: cost.memory,
                failed: false,
                error: String::new(),
            };
            match score(record, codecs[c], w) {
                Ok(s) => {
                    row.bits_per_sample = s.bits_per_sample;
                    row.rate_bps = s.rate_bps;
                    row.mse = s.mse;
                    row.nmse = s.nmse;
                    row.prd = s.prd;
                }
                Err(e) => {
                    row.failed = true;
                    row.error = e.to_string();
                }
            }
            row
        })
        .collect();
    Ok(BenchReport { rows })
}

/// Coding of the secondary channel in a two-sensor run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum SecondaryScheme {
    /// Conditional sub-index, bin inferred from the primary reconstruction.
    Conditional,
    /// Uniform quantization of the amplitudes.
    Uniform,
    /// The differential codec, independently of the primary.
    Diff,
}

impl SecondaryScheme {
    pub const ALL: [SecondaryScheme; 3] = [
        SecondaryScheme::Conditional,
        SecondaryScheme::Uniform,
        SecondaryScheme::Diff,
    ];
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DualSensorOptions {
    /// Bits per primary sample.
    pub primary_bits: u32,
    /// Coarse-bin bits of the conditional scheme (inferred, never sent).
    pub n1: u32,
    /// Bits per secondary sample, for every scheme.
    pub n2: u32,
    pub affine: AffineFit,
    pub coarse: CoarsePartition,
}

impl Default for DualSensorOptions {
    fn default() -> Self {
        Self {
            primary_bits: 6,
            n1: 1,
            n2: 3,
            affine: AffineFit::Moments,
            coarse: CoarsePartition::Lloyd,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DualSensorRow {
    pub scheme: SecondaryScheme,
    pub primary_bits: u32,
    pub secondary_bits: u32,
    pub primary_mse: f64,
    pub secondary_mse: f64,
    /// Mean of the two channel MSEs.
    pub mean_mse: f64,
    /// Fraction of secondary samples decoded in the wrong coarse bin (conditional only).
    pub mismatch_rate: Option<f64>,
}

/// Channel 0 coded differentially, channel 1 by each [`SecondaryScheme`] at the
/// same bit budget; trained on the first half, scored on the second.
pub fn run_dual_sensor(record: &EcgRecord, opts: &DualSensorOptions) -> Result<Vec<DualSensorRow>> {
    if !(1..=16).contains(&opts.primary_bits) || !(1..=16).contains(&opts.n2) {
        return Err(validation("bit widths must lie in 1..=16"));
    }
    let (train_p, eval_p) = split(record.channel(0)?)?;
    let (train_s, eval_s) = split(record.channel(1)?)?;

    let cb_p = diff_codebook(train_p, 1 << opts.primary_bits)?;
    let xp_hat = diff_decode(&diff_encode(eval_p, &cb_p)?)?;
    let primary_mse = mse(eval_p, &xp_hat)?;

    SecondaryScheme::ALL
        .into_iter()
        .map(|scheme| {
            let levels = 1usize << opts.n2;
            let (xs_hat, mismatch_rate) = match scheme {
                SecondaryScheme::Conditional => {
                    let pdf_s = histogram(train_s, GRID_HISTOGRAM_BINS)?;
                    let pdf_p = histogram(train_p, GRID_HISTOGRAM_BINS)?;
                    let affine = opts.affine.fit(&pdf_p, &pdf_s)?;
                    let cb =
                        build_conditional_codebook(&pdf_s, affine, opts.n1, opts.n2, opts.coarse)?;
                    let idx = cond_encode_all(eval_s, &cb)?;
                    let rec = cond_decode_all(&idx, &xp_hat, &cb)?;
                    (rec, Some(bin_mismatch_rate(eval_s, &xp_hat, &cb)))
                }
                SecondaryScheme::Uniform => {
                    let (lo, hi) = train_s
                        .iter()
                        .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| {
                            (a.min(*v), b.max(*v))
                        });
                    let cb: Codebook =
                        uniform_codebook(lo, if hi > lo { hi } else { lo + 1.0 }, levels)?;
                    (eval_s.iter().map(|v| cb.quantize_value(*v)).collect(), None)
                }
                SecondaryScheme::Diff => {
                    let cb = diff_codebook(train_s, levels)?;
                    (diff_decode(&diff_encode(eval_s, &cb)?)?, None)
                }
            };
            let secondary_mse = mse(eval_s, &xs_hat)?;
            Ok(DualSensorRow {
                scheme,
                primary_bits: opts.primary_bits,
                secondary_bits: opts.n2,
                primary_mse,
                secondary_mse,
                mean_mse: 0.5 * (primary_mse + secondary_mse),
                mismatch_rate,
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn corpus() -> Vec<(String, EcgRecord)> {
        let spec = SyntheticEcgSpec {
            beats: 8,
            ..SyntheticEcgSpec::default()
        };
        vec![("syn".into(), synthesize_ecg(&spec, 1).unwrap())]
    }

    #[test]
    fn table_rows() {
        let c = |codec| {
            let r = count_complexity(codec);
            (r.adds, r.muls, r.memory)
        };
        assert_eq!(c(BenchCodec::Diff), (3, 0, 2));
        assert_eq!(c(BenchCodec::Delta), (2, 1, 1));
        assert_eq!(c(BenchCodec::Lms), (5, 4, 8));
        assert_eq!(c(BenchCodec::Dpcm), (5, 4, 4));
        assert_eq!(c(BenchCodec::OpenLoop), (4, 4, 4));
        let lms = count_complexity(BenchCodec::Lms);
        assert_eq!((lms.adapt_adds, lms.adapt_muls), (4, 5));
    }

    #[test]
    fn one_cell_one_row() {
        let r = run_benchmark(&corpus(), &[BenchCodec::Diff], &[8]).unwrap();
        assert_eq!(r.rows.len(), 1);
        assert!(!r.rows[0].failed, "{}", r.rows[0].error);
        assert!(r.rows[0].nmse > 0.0 && r.rows[0].nmse < 0.1);
    }

    #[test]
    fn deterministic_csv() {
        let a = run_benchmark(&corpus(), &BenchCodec::ALL, &[4, 6])
            .unwrap()
            .to_csv()
            .unwrap();
        let b = run_benchmark(&corpus(), &BenchCodec::ALL, &[4, 6])
            .unwrap()
            .to_csv()
            .unwrap();
        assert_eq!(a, b);
        assert_eq!(a.lines().count(), 1 + 5 * 2);
    }

    #[test]
    fn failures_are_flagged() {
        let short = vec![(
            "tiny".into(),
            EcgRecord::from_samples(1.0, vec![0.1; 12]).unwrap(),
        )];
        let r = run_benchmark(&short, &[BenchCodec::Diff], &[4]).unwrap();
        assert!(r.rows[0].failed);
        assert!(run_benchmark(&[], &[BenchCodec::Diff], &[4]).is_err());
    }

    #[test]
    fn dual_sensor_rows() {
        let rec = corpus()
            .remove(0)
            .1
            .with_affine_channel(0, "ch1", 0.9, 0.05, 0.005, 2)
            .unwrap();
        let rows = run_dual_sensor(&rec, &DualSensorOptions::default()).unwrap();
        assert_eq!(rows.len(), 3);
        assert!(rows.iter().all(|r| r.primary_mse == rows[0].primary_mse));
        assert!(rows[0].mismatch_rate.is_some());
    }
}
