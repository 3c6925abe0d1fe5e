//! Distribution analysis of differential ECG and scalar codebook design.

mod codebook;
mod density;
mod histogram;
mod lloyd;

pub use codebook::{bits_for, uniform_codebook, Codebook};
pub use density::{
    Density, FittedPdf, Restricted, UniformPdf, CLIPPED_EXPONENTIAL, QUADRATURE_TOL,
};
pub use histogram::{
    differences, dynamic_range, fit_clipped_exponential, fit_clipped_exponential_with, histogram,
    HistogramModel, MIN_RATE,
};
pub use lloyd::{lloyd_max, lloyd_max_with, quantization_mse, LloydOptions, LloydReport};

use crate::error::{validation, Result};
use crate::signal_io::EcgRecord;

/// Paper default for the exponential rate of the differential-ECG density.
pub const DEFAULT_LAMBDA: f64 = 50.0;

/// Adjacent differences of every channel of every record, pooled.
pub fn pooled_differences(records: &[EcgRecord]) -> Result<Vec<f64>> {
    if records.is_empty() {
        return Err(validation("no records to pool"));
    }
    Ok(records
        .iter()
        .flat_map(|r| r.channels().iter().flat_map(|c| differences(&c.samples)))
        .collect())
}

/// Histogram plus clipped-exponential fit of `values`, then a Lloyd-Max codebook.
pub fn train_codebook(
    values: &[f64],
    bins: usize,
    levels: usize,
    lambda: Option<f64>,
) -> Result<Codebook> {
    let h = histogram(values, bins)?;
    let pdf = fit_clipped_exponential_with(&h, lambda)?;
    lloyd_max(&pdf, levels)
}
