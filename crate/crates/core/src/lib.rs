//! Low-complexity ECG compression.

pub mod conditional_codec;
pub mod diff_codec;
pub mod error;
pub mod metrics_bench;
pub mod ops;
pub mod predictors;
pub mod quadrature;
pub mod quantizer_design;
pub mod rate_optimizer;
pub mod signal_io;
pub mod stability;

pub use error::{Error, Location, Result};
