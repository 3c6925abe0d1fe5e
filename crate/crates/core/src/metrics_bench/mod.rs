//! Reconstruction metrics, the encoded-stream container and corpus benchmarks.

mod bench;
mod bitpack;
mod stream;

pub use bench::{
    count_complexity, run_benchmark, run_dual_sensor, BenchCodec, BenchReport, BenchRow,
    Complexity, DualSensorOptions, DualSensorRow, SecondaryScheme, BENCH_ORDER, COMPLEXITY_SAMPLES,
    LMS_STEP,
};
pub use bitpack::{pack, unpack, BitReader, BitWriter};
pub use stream::{decode_stream, encode_record, CodecConfig, CodecTag, EncodedStream, StreamBody};

use crate::error::{validation, Result};

fn check_pair(original: &[f64], reconstructed: &[f64]) -> Result<()> {
    if original.len() != reconstructed.len() {
        return Err(validation(format!(
            "original has {} samples, reconstruction {}",
            original.len(),
            reconstructed.len()
        )));
    }
    if original.is_empty() {
        return Err(validation("cannot score an empty signal"));
    }
    Ok(())
}

fn squared_error(original: &[f64], reconstructed: &[f64]) -> f64 {
    original
        .iter()
        .zip(reconstructed)
        .map(|(x, y)| (x - y) * (x - y))
        .sum()
}

/// Mean squared error.
pub fn mse(original: &[f64], reconstructed: &[f64]) -> Result<f64> {
    check_pair(original, reconstructed)?;
    Ok(squared_error(original, reconstructed) / original.len() as f64)
}

/// `Σ(x - x^)² / Σx²`.
pub fn nmse(original: &[f64], reconstructed: &[f64]) -> Result<f64> {
    check_pair(original, reconstructed)?;
    let power: f64 = original.iter().map(|x| x * x).sum();
    if power == 0.0 {
        return Err(validation("original signal has zero power"));
    }
    Ok(squared_error(original, reconstructed) / power)
}

/// Percentage root-mean-square difference, `100 sqrt(nmse)`.
pub fn prd(original: &[f64], reconstructed: &[f64]) -> Result<f64> {
    Ok(100.0 * nmse(original, reconstructed)?.sqrt())
}

pub fn bits_per_sample(payload_bits: u64, samples: usize) -> Result<f64> {
    if samples == 0 {
        return Err(validation("no samples"));
    }
    Ok(payload_bits as f64 / samples as f64)
}
