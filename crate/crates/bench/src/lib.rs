//! Shared inputs for the criterion benchmarks.

use ecgpack::predictors::{fit_fir_mmse, FirPredictor};
use ecgpack::quantizer_design::{differences, histogram, Codebook, HistogramModel};
use ecgpack::rate_optimizer::{diff_codebook, trained_codebook};
use ecgpack::signal_io::{synthesize_ecg, EcgRecord, SyntheticEcgSpec};

pub const ORDER: usize = 4;

pub struct Fixture {
    pub record: EcgRecord,
    pub signal: Vec<f64>,
    pub diff_codebook: Codebook,
    pub predictor: FirPredictor,
    pub residual_codebook: Codebook,
    pub diff_histogram: HistogramModel,
}

/// A synthetic record of `beats` beats with codebooks of `levels` levels.
pub fn fixture(beats: usize, levels: usize) -> Fixture {
    let record = synthesize_ecg(
        &SyntheticEcgSpec {
            beats,
            ..Default::default()
        },
        1,
    )
    .expect("valid spec");
    let signal = record.channel(0).expect("one channel").to_vec();
    let predictor = fit_fir_mmse(&signal, ORDER).expect("enough samples");
    let a = predictor.coefficients();
    let residuals: Vec<f64> = (ORDER..signal.len())
        .map(|i| signal[i] - (0..ORDER).map(|j| a[j] * signal[i - 1 - j]).sum::<f64>())
        .collect();
    Fixture {
        diff_codebook: diff_codebook(&signal, levels).expect("trainable"),
        residual_codebook: trained_codebook(&residuals, levels).expect("trainable"),
        diff_histogram: histogram(&differences(&signal), 256).expect("non-empty"),
        predictor,
        signal,
        record,
    }
}
