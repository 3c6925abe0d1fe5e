use serde::{Deserialize, Serialize};

use crate::error::{validation, Error, Result};

/// An ordered scalar codebook: `L` levels separated by `L - 1` decision boundaries.
///
/// Cell `l` is `(boundaries[l-1], boundaries[l]]`; the outer cells extend to
/// infinity, so out-of-range inputs clamp to the extreme levels. A value lying
/// exactly on a boundary belongs to the lower cell.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(try_from = "CodebookRepr", into = "CodebookRepr")]
pub struct Codebook {
    levels: Vec<f64>,
    boundaries: Vec<f64>,
    esq: Option<f64>,
}

/// Equality of the quantizer itself; the design-time error is not compared.
impl PartialEq for Codebook {
    fn eq(&self, other: &Self) -> bool {
        self.levels == other.levels && self.boundaries == other.boundaries
    }
}

#[derive(Serialize, Deserialize)]
struct CodebookRepr {
    levels: Vec<f64>,
    boundaries: Vec<f64>,
}

impl TryFrom<CodebookRepr> for Codebook {
    type Error = Error;
    fn try_from(r: CodebookRepr) -> Result<Self> {
        Codebook::new(r.levels, r.boundaries)
    }
}

impl From<Codebook> for CodebookRepr {
    fn from(c: Codebook) -> Self {
        CodebookRepr {
            levels: c.levels,
            boundaries: c.boundaries,
        }
    }
}

impl Codebook {
    pub fn new(levels: Vec<f64>, boundaries: Vec<f64>) -> Result<Self> {
        if levels.is_empty() {
            return Err(validation("codebook needs at least one level"));
        }
        if boundaries.len() + 1 != levels.len() {
            return Err(validation(format!(
                "{} levels need {} boundaries, got {}",
                levels.len(),
                levels.len() - 1,
                boundaries.len()
            )));
        }
        if levels.iter().chain(&boundaries).any(|v| !v.is_finite()) {
            return Err(validation("codebook entries must be finite"));
        }
        for (l, b) in boundaries.iter().enumerate() {
            if !(levels[l] < *b && *b < levels[l + 1]) {
                return Err(validation(format!(
                    "boundary {b} does not separate levels {} and {}",
                    levels[l],
                    levels[l + 1]
                )));
            }
        }
        Ok(Self {
            levels,
            boundaries,
            esq: None,
        })
    }

    /// Codebook whose boundaries are the midpoints between adjacent levels.
    pub fn from_levels(levels: Vec<f64>) -> Result<Self> {
        let boundaries = levels.windows(2).map(|w| 0.5 * (w[0] + w[1])).collect();
        Self::new(levels, boundaries)
    }

    pub(crate) fn with_esq(mut self, esq: f64) -> Self {
        self.esq = Some(esq);
        self
    }

    pub fn levels(&self) -> &[f64] {
        &self.levels
    }

    pub fn boundaries(&self) -> &[f64] {
        &self.boundaries
    }

    pub fn len(&self) -> usize {
        self.levels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.levels.is_empty()
    }

    pub fn level(&self, index: usize) -> Option<f64> {
        self.levels.get(index).copied()
    }

    /// Mean squared quantization error reported by the trainer, when known.
    pub fn esq(&self) -> Option<f64> {
        self.esq
    }

    /// Index width in bits, `ceil(log2 L)`.
    pub fn bits(&self) -> u32 {
        bits_for(self.levels.len())
    }

    /// Distance between the outermost levels.
    pub fn span(&self) -> f64 {
        self.levels[self.levels.len() - 1] - self.levels[0]
    }

    /// Index of the cell containing `v`; comparisons only.
    #[inline]
    pub fn quantize(&self, v: f64) -> usize {
        self.boundaries.partition_point(|b| *b < v)
    }

    pub fn quantize_value(&self, v: f64) -> f64 {
        self.levels[self.quantize(v)]
    }
}

/// `ceil(log2 n)`, with 0 for a single level.
pub fn bits_for(n: usize) -> u32 {
    if n <= 1 {
        0
    } else {
        usize::BITS - (n - 1).leading_zeros()
    }
}

/// `levels` equal cells over `[lo, hi]` with a level at each cell centre.
pub fn uniform_codebook(lo: f64, hi: f64, levels: usize) -> Result<Codebook> {
    if !(lo < hi) || !lo.is_finite() || !hi.is_finite() {
        return Err(validation(format!(
            "uniform codebook needs lo < hi, got [{lo}, {hi}]"
        )));
    }
    if levels < 2 {
        return Err(validation("uniform codebook needs at least two levels"));
    }
    let width = (hi - lo) / levels as f64;
    let lv = (0..levels).map(|i| lo + width * (i as f64 + 0.5)).collect();
    let bd = (1..levels).map(|i| lo + width * i as f64).collect();
    Codebook::new(lv, bd)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn two_level_uniform() {
        let cb = uniform_codebook(0.0, 1.0, 2).unwrap();
        assert_eq!(cb.levels(), &[0.25, 0.75]);
        assert_eq!(cb.boundaries(), &[0.5]);
        // tie goes to the lower level
        assert_eq!(cb.quantize_value(0.5), 0.25);
        assert_eq!(cb.quantize_value(-3.0), 0.25);
        assert_eq!(cb.quantize_value(7.0), 0.75);
        assert!(uniform_codebook(1.0, 1.0, 4).is_err());
        assert!(uniform_codebook(0.0, 1.0, 1).is_err());
    }

    #[test]
    fn bits() {
        assert_eq!(bits_for(1), 0);
        assert_eq!(bits_for(2), 1);
        assert_eq!(bits_for(5), 3);
        assert_eq!(bits_for(8), 3);
        assert_eq!(bits_for(4096), 12);
    }

    #[test]
    fn rejects_non_interleaving_boundaries() {
        assert!(Codebook::new(vec![0.0, 1.0], vec![1.5]).is_err());
        assert!(Codebook::new(vec![], vec![]).is_err());
        assert!(Codebook::new(vec![1.0, 0.0], vec![0.5]).is_err());
    }

    #[test]
    fn json_shape() {
        let cb = uniform_codebook(0.0, 1.0, 2).unwrap().with_esq(0.1);
        let s = serde_json::to_string(&cb).unwrap();
        assert_eq!(s, r#"{"levels":[0.25,0.75],"boundaries":[0.5]}"#);
        let back: Codebook = serde_json::from_str(&s).unwrap();
        assert_eq!(back.levels(), cb.levels());
        assert!(
            serde_json::from_str::<Codebook>(r#"{"levels":[0.0,1.0],"boundaries":[2.0]}"#).is_err()
        );
    }

    #[test]
    fn nearest_level_around_boundaries() {
        let cb = Codebook::from_levels(vec![-0.3, -0.1, 0.0, 0.1, 0.3]).unwrap();
        for (l, b) in cb.boundaries().iter().enumerate() {
            assert_eq!(cb.quantize(b - 1e-12), l);
            assert_eq!(cb.quantize(b + 1e-12), l + 1);
        }
    }
}
