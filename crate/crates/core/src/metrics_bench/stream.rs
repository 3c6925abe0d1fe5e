//! Self-describing binary container for every codec's output.
//!
//! Layout (integers and floats little-endian):
//!
//! ```text
//! "ECGS" | version u8 | tag u8 | sample period f64 | K u32 | original length u64
//! body (per tag)
//! ```
//!
//! Codebooks are `L u32, L levels, L-1 boundaries`. Index sections are
//! `width u8, count u64` followed by the indices packed MSB-first at `width`
//! bits each, padded to a whole byte.

use std::fmt;
use std::str::FromStr;

use super::bitpack::{pack, unpack};
use crate::conditional_codec::{cond_decode_all, cond_encode_all, AffineMap, ConditionalCodebook};
use crate::diff_codec::{diff_decode, diff_encode, DiffEncoded};
use crate::error::{validation, Error, Result};
use crate::predictors::{
    decode_closed_loop, decode_lms, decode_open_loop, encode_closed_loop, encode_lms,
    encode_open_loop, FirPredictor, LmsEncoded, LmsParams, LoopMode, PredictiveEncoded,
};
use crate::quantizer_design::{bits_for, Codebook};
use crate::signal_io::{expand_hold, Channel, EcgRecord};

const MAGIC: &[u8; 4] = b"ECGS";
const VERSION: u8 = 1;
/// Bits charged for each sample sent at full precision.
const SEED_BITS: u64 = 64;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum CodecTag {
    Diff,
    OpenLoop,
    ClosedLoop,
    Lms,
    Conditional,
}

impl CodecTag {
    pub const ALL: [CodecTag; 5] = [
        CodecTag::Diff,
        CodecTag::OpenLoop,
        CodecTag::ClosedLoop,
        CodecTag::Lms,
        CodecTag::Conditional,
    ];

    /// Short name used on the command line and in reports.
    pub fn name(self) -> &'static str {
        match self {
            CodecTag::Diff => "diff",
            CodecTag::OpenLoop => "olp",
            CodecTag::ClosedLoop => "dpcm",
            CodecTag::Lms => "lms",
            CodecTag::Conditional => "cond",
        }
    }

    fn byte(self) -> u8 {
        match self {
            CodecTag::Diff => 1,
            CodecTag::OpenLoop => 2,
            CodecTag::ClosedLoop => 3,
            CodecTag::Lms => 4,
            CodecTag::Conditional => 5,
        }
    }

    fn from_byte(b: u8) -> Option<Self> {
        Self::ALL.into_iter().find(|t| t.byte() == b)
    }
}

impl fmt::Display for CodecTag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for CodecTag {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|t| t.name() == s)
            .ok_or_else(|| {
                validation(format!(
                    "unknown codec '{s}', expected one of diff, olp, dpcm, lms, cond"
                ))
            })
    }
}

/// Everything an encoder needs besides the signal.
#[derive(Debug, Clone, PartialEq)]
pub enum CodecConfig {
    Diff {
        codebook: Codebook,
    },
    OpenLoop {
        predictor: FirPredictor,
        codebook: Codebook,
    },
    ClosedLoop {
        predictor: FirPredictor,
        codebook: Codebook,
    },
    Lms {
        params: LmsParams,
        codebook: Codebook,
    },
    /// Channel 0 differentially coded, channel 1 conditionally on its reconstruction.
    Conditional {
        primary: Codebook,
        secondary: ConditionalCodebook,
    },
}

impl CodecConfig {
    pub fn tag(&self) -> CodecTag {
        match self {
            CodecConfig::Diff { .. } => CodecTag::Diff,
            CodecConfig::OpenLoop { .. } => CodecTag::OpenLoop,
            CodecConfig::ClosedLoop { .. } => CodecTag::ClosedLoop,
            CodecConfig::Lms { .. } => CodecTag::Lms,
            CodecConfig::Conditional { .. } => CodecTag::Conditional,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum StreamBody {
    Diff(DiffEncoded),
    /// Open- or closed-loop FIR prediction, told apart by `encoded.loop_mode`.
    Predictive {
        predictor: FirPredictor,
        encoded: PredictiveEncoded,
    },
    Lms(LmsEncoded),
    Conditional {
        primary: DiffEncoded,
        codebook: ConditionalCodebook,
        indices: Vec<u32>,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct EncodedStream {
    pub sample_period_s: f64,
    /// Every `k`-th sample was coded; the decoder holds each for `k` samples.
    pub k: u32,
    pub original_len: u64,
    pub body: StreamBody,
}

impl EncodedStream {
    pub fn tag(&self) -> CodecTag {
        match &self.body {
            StreamBody::Diff(_) => CodecTag::Diff,
            StreamBody::Predictive { encoded, .. } => match encoded.loop_mode {
                LoopMode::Open => CodecTag::OpenLoop,
                LoopMode::Closed => CodecTag::ClosedLoop,
            },
            StreamBody::Lms(_) => CodecTag::Lms,
            StreamBody::Conditional { .. } => CodecTag::Conditional,
        }
    }

    /// Index bits plus 64 bits per full-precision seed sample.
    pub fn payload_bits(&self) -> u64 {
        let sec = |n: usize, levels: usize| n as u64 * bits_for(levels) as u64;
        match &self.body {
            StreamBody::Diff(d) => SEED_BITS + sec(d.indices.len(), d.codebook.len()),
            StreamBody::Predictive { encoded: e, .. } => {
                SEED_BITS * e.warmup.len() as u64 + sec(e.indices.len(), e.codebook.len())
            }
            StreamBody::Lms(l) => {
                let e = &l.encoded;
                SEED_BITS * e.warmup.len() as u64 + sec(e.indices.len(), e.codebook.len())
            }
            StreamBody::Conditional {
                primary,
                codebook,
                indices,
            } => {
                SEED_BITS
                    + sec(primary.indices.len(), primary.codebook.len())
                    + indices.len() as u64 * codebook.n2() as u64
            }
        }
    }

    /// Payload bits per original sample (per channel-sample for the two-channel codec).
    pub fn bits_per_sample(&self) -> f64 {
        let channels = if self.tag() == CodecTag::Conditional {
            2
        } else {
            1
        };
        self.payload_bits() as f64 / (self.original_len as f64 * channels as f64)
    }

    pub fn rate_bps(&self) -> f64 {
        self.bits_per_sample() / self.sample_period_s
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut w = Writer::default();
        w.buf.extend_from_slice(MAGIC);
        w.u8(VERSION);
        w.u8(self.tag().byte());
        w.f64(self.sample_period_s);
        w.u32(self.k);
        w.u64(self.original_len);
        match &self.body {
            StreamBody::Diff(d) => w.diff(d),
            StreamBody::Predictive { predictor, encoded } => {
                w.f64s_counted(predictor.coefficients());
                w.f64s(&encoded.warmup);
                w.codebook(&encoded.codebook);
                w.indices(&encoded.indices, bits_for(encoded.codebook.len()));
            }
            StreamBody::Lms(l) => {
                w.f64(l.params.step);
                w.f64s_counted(&l.params.initial);
                w.f64s(&l.encoded.warmup);
                w.codebook(&l.encoded.codebook);
                w.indices(&l.encoded.indices, bits_for(l.encoded.codebook.len()));
            }
            StreamBody::Conditional {
                primary,
                codebook,
                indices,
            } => {
                w.diff(primary);
                w.f64(codebook.affine().a);
                w.f64(codebook.affine().b);
                w.u8(codebook.n1() as u8);
                w.u8(codebook.n2() as u8);
                w.f64s(codebook.coarse_s());
                for sub in codebook.subcodebooks() {
                    w.codebook(sub);
                }
                w.indices(indices, codebook.n2());
            }
        }
        w.buf
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader { buf: bytes, pos: 0 };
        if r.take(4)? != MAGIC {
            return Err(Error::CorruptStream("missing ECGS magic".into()));
        }
        let version = r.u8()?;
        if version != VERSION {
            return Err(Error::CorruptStream(format!(
                "unsupported stream version {version}"
            )));
        }
        let tag_byte = r.u8()?;
        let tag = CodecTag::from_byte(tag_byte)
            .ok_or_else(|| Error::CorruptStream(format!("unknown codec tag {tag_byte}")))?;
        let sample_period_s = r.f64()?;
        if !(sample_period_s > 0.0 && sample_period_s.is_finite()) {
            return Err(Error::CorruptStream(format!(
                "invalid sample period {sample_period_s}"
            )));
        }
        let k = r.u32()?;
        if k == 0 {
            return Err(Error::CorruptStream("downsampling factor 0".into()));
        }
        let original_len = r.u64()?;
        let body = match tag {
            CodecTag::Diff => StreamBody::Diff(r.diff()?),
            CodecTag::OpenLoop | CodecTag::ClosedLoop => {
                let coeffs = r.f64s_counted()?;
                let warmup = r.f64s(coeffs.len())?;
                let codebook = r.codebook()?;
                let indices = r.indices(bits_for(codebook.len()))?;
                let loop_mode = if tag == CodecTag::OpenLoop {
                    LoopMode::Open
                } else {
                    LoopMode::Closed
                };
                StreamBody::Predictive {
                    predictor: FirPredictor::new(coeffs).map_err(corrupt)?,
                    encoded: PredictiveEncoded {
                        warmup,
                        indices,
                        codebook,
                        loop_mode,
                    },
                }
            }
            CodecTag::Lms => {
                let step = r.f64()?;
                let initial = r.f64s_counted()?;
                let warmup = r.f64s(initial.len())?;
                let codebook = r.codebook()?;
                let indices = r.indices(bits_for(codebook.len()))?;
                StreamBody::Lms(LmsEncoded {
                    encoded: PredictiveEncoded {
                        warmup,
                        indices,
                        codebook,
                        loop_mode: LoopMode::Closed,
                    },
                    params: LmsParams { step, initial },
                })
            }
            CodecTag::Conditional => {
                let primary = r.diff()?;
                let affine = AffineMap::new(r.f64()?, r.f64()?).map_err(corrupt)?;
                let (n1, n2) = (r.u8()? as u32, r.u8()? as u32);
                if !(1..=16).contains(&n1) || !(1..=16).contains(&n2) {
                    return Err(Error::CorruptStream(format!(
                        "invalid bit split ({n1}, {n2})"
                    )));
                }
                let coarse_s = r.f64s((1 << n1) + 1)?;
                let subs = (0..1usize << n1)
                    .map(|_| r.codebook())
                    .collect::<Result<Vec<_>>>()?;
                let codebook =
                    ConditionalCodebook::new(affine, n1, n2, coarse_s, subs).map_err(corrupt)?;
                let indices = r.indices(n2)?;
                StreamBody::Conditional {
                    primary,
                    codebook,
                    indices,
                }
            }
        };
        if r.pos != bytes.len() {
            return Err(Error::CorruptStream(format!(
                "{} trailing bytes",
                bytes.len() - r.pos
            )));
        }
        Ok(Self {
            sample_period_s,
            k,
            original_len,
            body,
        })
    }

    /// Reconstructed record on the original sample grid.
    pub fn decode(&self) -> Result<EcgRecord> {
        let k = self.k as usize;
        let n = usize::try_from(self.original_len)
            .map_err(|_| Error::CorruptStream("length overflow".into()))?;
        let kept = n.div_ceil(k);
        let expand = |v: Vec<f64>| -> Result<Vec<f64>> {
            if v.len() != kept {
                return Err(Error::CorruptStream(format!(
                    "stream decodes to {} samples, header implies {kept}",
                    v.len()
                )));
            }
            Ok(expand_hold(&v, k, n))
        };
        let channels = match &self.body {
            StreamBody::Diff(d) => vec![expand(diff_decode(d)?)?],
            StreamBody::Predictive { predictor, encoded } => {
                let v = match encoded.loop_mode {
                    LoopMode::Open => decode_open_loop(encoded, predictor)?,
                    LoopMode::Closed => decode_closed_loop(encoded, predictor)?,
                };
                vec![expand(v)?]
            }
            StreamBody::Lms(l) => vec![expand(decode_lms(l)?)?],
            StreamBody::Conditional {
                primary,
                codebook,
                indices,
            } => {
                let p = diff_decode(primary)?;
                let s = cond_decode_all(indices, &p, codebook)?;
                vec![expand(p)?, expand(s)?]
            }
        };
        let channels = channels
            .into_iter()
            .enumerate()
            .map(|(i, samples)| Channel {
                name: format!("ch{i}"),
                samples,
            })
            .collect();
        EcgRecord::new(self.sample_period_s, channels)
    }
}

/// Encodes every `k`-th sample of `record` with the configured codec.
pub fn encode_record(record: &EcgRecord, config: &CodecConfig, k: usize) -> Result<EncodedStream> {
    if k == 0 || k > u32::MAX as usize {
        return Err(validation(format!(
            "downsampling factor must lie in 1..=2^32-1, got {k}"
        )));
    }
    let kept = |c: usize| -> Result<Vec<f64>> {
        Ok(record.channel(c)?.iter().step_by(k).copied().collect())
    };
    let x = kept(0)?;
    let body = match config {
        CodecConfig::Diff { codebook } => StreamBody::Diff(diff_encode(&x, codebook)?),
        CodecConfig::OpenLoop {
            predictor,
            codebook,
        } => StreamBody::Predictive {
            predictor: predictor.clone(),
            encoded: encode_open_loop(&x, predictor, codebook)?,
        },
        CodecConfig::ClosedLoop {
            predictor,
            codebook,
        } => StreamBody::Predictive {
            predictor: predictor.clone(),
            encoded: encode_closed_loop(&x, predictor, codebook)?,
        },
        CodecConfig::Lms { params, codebook } => {
            StreamBody::Lms(encode_lms(&x, params, codebook)?.0)
        }
        CodecConfig::Conditional { primary, secondary } => {
            let s = kept(1)?;
            StreamBody::Conditional {
                primary: diff_encode(&x, primary)?,
                codebook: secondary.clone(),
                indices: cond_encode_all(&s, secondary)?,
            }
        }
    };
    Ok(EncodedStream {
        sample_period_s: record.sample_period_s(),
        k: k as u32,
        original_len: record.len() as u64,
        body,
    })
}

/// Parses and decodes a serialized stream.
pub fn decode_stream(bytes: &[u8]) -> Result<EcgRecord> {
    EncodedStream::from_bytes(bytes)?.decode()
}

fn corrupt(e: Error) -> Error {
    Error::CorruptStream(e.to_string())
}

#[derive(Default)]
struct Writer {
    buf: Vec<u8>,
}

impl Writer {
    fn u8(&mut self, v: u8) {
        self.buf.push(v);
    }
    fn u32(&mut self, v: u32) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }
    fn u64(&mut self, v: u64) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }
    fn f64(&mut self, v: f64) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }
    fn f64s(&mut self, v: &[f64]) {
        v.iter().for_each(|x| self.f64(*x));
    }
    fn f64s_counted(&mut self, v: &[f64]) {
        self.u32(v.len() as u32);
        self.f64s(v);
    }
    fn codebook(&mut self, cb: &Codebook) {
        self.f64s_counted(cb.levels());
        self.f64s(cb.boundaries());
    }
    fn indices(&mut self, idx: &[u32], width: u32) {
        self.u8(width as u8);
        self.u64(idx.len() as u64);
        self.buf.extend_from_slice(&pack(idx, width));
    }
    fn diff(&mut self, d: &DiffEncoded) {
        self.f64(d.initial);
        self.codebook(&d.codebook);
        self.indices(&d.indices, bits_for(d.codebook.len()));
    }
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if n > self.buf.len() - self.pos {
            return Err(Error::CorruptStream(format!(
                "truncated at byte {}: need {n} more bytes, {} left",
                self.pos,
                self.buf.len() - self.pos
            )));
        }
        let s = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }
    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }
    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }
    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
    fn f64s(&mut self, n: usize) -> Result<Vec<f64>> {
        let raw = self.take(
            n.checked_mul(8)
                .ok_or_else(|| Error::CorruptStream("length overflow".into()))?,
        )?;
        Ok(raw
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect())
    }
    fn f64s_counted(&mut self) -> Result<Vec<f64>> {
        let n = self.u32()? as usize;
        self.f64s(n)
    }
    fn codebook(&mut self) -> Result<Codebook> {
        let levels = self.f64s_counted()?;
        if levels.is_empty() {
            return Err(Error::CorruptStream("empty codebook".into()));
        }
        let boundaries = self.f64s(levels.len() - 1)?;
        Codebook::new(levels, boundaries).map_err(corrupt)
    }
    fn indices(&mut self, expected_width: u32) -> Result<Vec<u32>> {
        let width = self.u8()? as u32;
        if width != expected_width {
            return Err(Error::CorruptStream(format!(
                "index width {width} does not match the codebook's {expected_width}"
            )));
        }
        let count = self.u64()?;
        let bits = count
            .checked_mul(width as u64)
            .ok_or_else(|| Error::CorruptStream("index section length overflow".into()))?;
        let remaining = (self.buf.len() - self.pos) as u64;
        if bits.div_ceil(8) > remaining {
            return Err(Error::CorruptStream(format!(
                "index section declares {bits} bits, only {remaining} bytes remain"
            )));
        }
        if width == 0 && count > u32::MAX as u64 {
            return Err(Error::CorruptStream(
                "implausible zero-width index count".into(),
            ));
        }
        let bytes = self.take(bits.div_ceil(8) as usize)?;
        unpack(bytes, width, count as usize)
    }
    fn diff(&mut self) -> Result<DiffEncoded> {
        let initial = self.f64()?;
        let codebook = self.codebook()?;
        let indices = self.indices(bits_for(codebook.len()))?;
        Ok(DiffEncoded {
            initial,
            indices,
            codebook,
        })
    }
}
