//! Parsers for list-valued flags.

use ecgpack::{Error, Result};

/// `"a1,a2,..."` as numbers.
pub fn parse_coeffs(s: &str) -> Result<Vec<f64>> {
    s.split(',')
        .map(|t| {
            let t = t.trim();
            t.parse::<f64>()
                .ok()
                .filter(|v| v.is_finite())
                .ok_or_else(|| Error::Validation(format!("'{t}' is not a finite number")))
        })
        .collect()
}

/// `"4..12"` (inclusive), `"4..=12"`, `"4,6,8"` or `"8"`.
pub fn parse_widths(s: &str) -> Result<Vec<u32>> {
    let bad = || Error::Validation(format!("cannot read widths from '{s}'"));
    let num = |t: &str| t.trim().parse::<u32>().map_err(|_| bad());
    if let Some((a, b)) = s.split_once("..") {
        let (lo, hi) = (num(a)?, num(b.trim_start_matches('='))?);
        if lo > hi {
            return Err(bad());
        }
        return Ok((lo..=hi).collect());
    }
    s.split(',').map(num).collect()
}
