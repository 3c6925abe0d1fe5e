//! ECG records: file I/O, synthetic waveforms and the zero-order-hold resampler.
//!
//! Amplitudes are kept as `f64` millivolts regardless of where they came from.
//! Two portable formats are supported:
//!
//! * **csv**: optional header row, one numeric column per channel. When the
//!   first header cell is exactly `t` that column holds sample times and the
//!   sample period is `t[1] - t[0]`; otherwise every column is a channel and the
//!   period defaults to [`DEFAULT_SAMPLE_PERIOD_S`].
//! * **raw binary** (`.ecg1`): magic `ECG1`, then little-endian `u32` channel
//!   count, `u32` sample count, `f64` sample period and the channel-major `f64`
//!   samples.
//!
//! Clinical binary formats are not read natively; convert them to csv first
//! (see the README).

use std::fs;
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{validation, Error, Location, Result};

/// Sample period assumed for csv files without a time column (360 Hz).
pub const DEFAULT_SAMPLE_PERIOD_S: f64 = 1.0 / 360.0;

const RAW_MAGIC: &[u8; 4] = b"ECG1";
const RAW_HEADER_LEN: usize = 4 + 4 + 4 + 8;

#[derive(Debug, Clone, PartialEq)]
pub struct Channel {
    pub name: String,
    pub samples: Vec<f64>,
}

/// Sample indices of the five wave summits of one heartbeat.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct BeatAnnotation {
    pub p: usize,
    pub q: usize,
    pub r: usize,
    pub s: usize,
    pub t: usize,
}

impl BeatAnnotation {
    fn indices(&self) -> [usize; 5] {
        [self.p, self.q, self.r, self.s, self.t]
    }
}

/// A uniformly sampled single- or multi-channel ECG recording.
#[derive(Debug, Clone, PartialEq)]
pub struct EcgRecord {
    sample_period_s: f64,
    channels: Vec<Channel>,
    annotations: Option<Vec<BeatAnnotation>>,
}

impl EcgRecord {
    pub fn new(sample_period_s: f64, channels: Vec<Channel>) -> Result<Self> {
        Self::with_annotations(sample_period_s, channels, None)
    }

    pub fn with_annotations(
        sample_period_s: f64,
        channels: Vec<Channel>,
        annotations: Option<Vec<BeatAnnotation>>,
    ) -> Result<Self> {
        if !(sample_period_s > 0.0 && sample_period_s.is_finite()) {
            return Err(validation(format!(
                "sample period must be positive and finite, got {sample_period_s}"
            )));
        }
        let Some(first) = channels.first() else {
            return Err(validation("a record needs at least one channel"));
        };
        let len = first.samples.len();
        if len < 2 {
            return Err(validation(format!(
                "channels need at least 2 samples, got {len}"
            )));
        }
        if let Some(ch) = channels.iter().find(|c| c.samples.len() != len) {
            return Err(validation(format!(
                "channel `{}` has {} samples, expected {len}",
                ch.name,
                ch.samples.len()
            )));
        }
        if let Some(beats) = &annotations {
            let mut prev: Option<usize> = None;
            for idx in beats.iter().flat_map(BeatAnnotation::indices) {
                if idx >= len {
                    return Err(validation(format!(
                        "annotation index {idx} out of bounds ({len})"
                    )));
                }
                if prev.is_some_and(|p| idx <= p) {
                    return Err(validation("annotation indices must be strictly increasing"));
                }
                prev = Some(idx);
            }
        }
        Ok(Self {
            sample_period_s,
            channels,
            annotations,
        })
    }

    /// Single-channel record named `ch0`.
    pub fn from_samples(sample_period_s: f64, samples: Vec<f64>) -> Result<Self> {
        Self::new(
            sample_period_s,
            vec![Channel {
                name: "ch0".into(),
                samples,
            }],
        )
    }

    pub fn sample_period_s(&self) -> f64 {
        self.sample_period_s
    }

    pub fn channels(&self) -> &[Channel] {
        &self.channels
    }

    pub fn channel(&self, index: usize) -> Result<&[f64]> {
        self.channels
            .get(index)
            .map(|c| c.samples.as_slice())
            .ok_or_else(|| validation(format!("record has no channel {index}")))
    }

    pub fn len(&self) -> usize {
        self.channels[0].samples.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn annotations(&self) -> Option<&[BeatAnnotation]> {
        self.annotations.as_deref()
    }

    /// Appends `gain * x + offset + noise` of channel `source` as a new channel.
    pub fn with_affine_channel(
        mut self,
        source: usize,
        name: &str,
        gain: f64,
        offset: f64,
        noise_std: f64,
        seed: u64,
    ) -> Result<Self> {
        let src = self.channel(source)?;
        let noise = gaussian_noise(src.len(), noise_std, seed)?;
        let samples = src
            .iter()
            .zip(&noise)
            .map(|(x, n)| gain * x + offset + n)
            .collect();
        self.channels.push(Channel {
            name: name.into(),
            samples,
        });
        Ok(self)
    }

    /// Scales every channel so that its largest absolute amplitude equals `peak_mv`.
    pub fn normalized(&self, peak_mv: f64) -> Result<Self> {
        if !(peak_mv > 0.0 && peak_mv.is_finite()) {
            return Err(validation("normalization peak must be positive"));
        }
        let channels = self
            .channels
            .iter()
            .map(|c| {
                let m = c.samples.iter().fold(0.0f64, |m, x| m.max(x.abs()));
                let scale = if m > 0.0 { peak_mv / m } else { 1.0 };
                Channel {
                    name: c.name.clone(),
                    samples: c.samples.iter().map(|x| x * scale).collect(),
                }
            })
            .collect();
        Ok(Self {
            sample_period_s: self.sample_period_s,
            channels,
            annotations: self.annotations.clone(),
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RecordFormat {
    Csv,
    RawBinary,
}

impl RecordFormat {
    /// `.csv` maps to csv, everything else to raw binary.
    pub fn from_path(path: &Path) -> Self {
        match path.extension().and_then(|e| e.to_str()) {
            Some(ext) if ext.eq_ignore_ascii_case("csv") => RecordFormat::Csv,
            _ => RecordFormat::RawBinary,
        }
    }
}

pub fn load_record(path: impl AsRef<Path>, format: RecordFormat) -> Result<EcgRecord> {
    let bytes = fs::read(path)?;
    match format {
        RecordFormat::Csv => parse_csv(&bytes),
        RecordFormat::RawBinary => parse_raw(&bytes),
    }
}

pub fn save_record(record: &EcgRecord, path: impl AsRef<Path>, format: RecordFormat) -> Result<()> {
    let bytes = match format {
        RecordFormat::Csv => to_csv(record)?,
        RecordFormat::RawBinary => to_raw(record),
    };
    fs::write(path, bytes)?;
    Ok(())
}

pub fn parse_csv(bytes: &[u8]) -> Result<EcgRecord> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(false)
        .from_reader(bytes);
    let mut rows: Vec<(u64, csv::StringRecord)> = Vec::new();
    for rec in reader.records() {
        let rec = rec.map_err(|e| csv_error(&e))?;
        let line = rec.position().map_or(0, |p| p.line());
        rows.push((line, rec));
    }
    let Some((_, first)) = rows.first() else {
        return Err(Error::Parse {
            location: Location::Line(1),
            message: "empty file".into(),
        });
    };
    let is_header = first.iter().any(|cell| cell.trim().parse::<f64>().is_err());
    let header: Option<Vec<String>> =
        is_header.then(|| first.iter().map(|s| s.trim().to_string()).collect());
    let data = if is_header { &rows[1..] } else { &rows[..] };
    let width = first.len();
    let time_column = header.as_ref().is_some_and(|h| h[0] == "t");

    let mut columns = vec![Vec::with_capacity(data.len()); width];
    for (line, row) in data {
        for (col, cell) in row.iter().enumerate() {
            let v: f64 = cell.trim().parse().map_err(|_| Error::Parse {
                location: Location::Line(*line),
                message: format!("non-numeric cell `{cell}` in column {}", col + 1),
            })?;
            columns[col].push(v);
        }
    }

    let mut sample_period = DEFAULT_SAMPLE_PERIOD_S;
    let mut names: Vec<String> = match &header {
        Some(h) => h.clone(),
        None => (0..width).map(|i| format!("ch{i}")).collect(),
    };
    if time_column {
        let t = columns.remove(0);
        names.remove(0);
        if t.len() < 2 {
            return Err(validation("a time column needs at least two rows"));
        }
        if let Some(i) = t.windows(2).position(|w| w[1] <= w[0]) {
            return Err(Error::Parse {
                location: Location::Line(data[i + 1].0),
                message: "time column is not strictly increasing".into(),
            });
        }
        sample_period = t[1] - t[0];
    }
    if columns.is_empty() {
        return Err(validation("csv contains no channel columns"));
    }
    let channels = names
        .into_iter()
        .zip(columns)
        .map(|(name, samples)| Channel { name, samples })
        .collect();
    EcgRecord::new(sample_period, channels)
}

fn csv_error(e: &csv::Error) -> Error {
    let line = e.position().map_or(0, |p| p.line());
    match e.kind() {
        csv::ErrorKind::UnequalLengths {
            expected_len, len, ..
        } => Error::Parse {
            location: Location::Line(line),
            message: format!("expected {expected_len} columns, found {len}"),
        },
        _ => Error::Parse {
            location: Location::Line(line),
            message: e.to_string(),
        },
    }
}

/// Writes a `t` column followed by one column per channel. `Display` for `f64`
/// prints the shortest string that parses back to the same value, so a csv
/// round trip is exact.
pub fn to_csv(record: &EcgRecord) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let mut header = vec!["t".to_string()];
    header.extend(record.channels.iter().map(|c| c.name.clone()));
    w.write_record(&header).map_err(|e| Error::Io(e.into()))?;
    let mut row = Vec::with_capacity(header.len());
    for i in 0..record.len() {
        row.clear();
        row.push((i as f64 * record.sample_period_s).to_string());
        row.extend(record.channels.iter().map(|c| c.samples[i].to_string()));
        w.write_record(&row).map_err(|e| Error::Io(e.into()))?;
    }
    w.into_inner().map_err(|e| Error::Io(e.into_error()))
}

pub fn to_raw(record: &EcgRecord) -> Vec<u8> {
    let n = record.len();
    let mut out = Vec::with_capacity(RAW_HEADER_LEN + 8 * n * record.channels.len());
    out.extend_from_slice(RAW_MAGIC);
    out.extend_from_slice(&(record.channels.len() as u32).to_le_bytes());
    out.extend_from_slice(&(n as u32).to_le_bytes());
    out.extend_from_slice(&record.sample_period_s.to_le_bytes());
    for ch in &record.channels {
        for v in &ch.samples {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    out
}

pub fn parse_raw(bytes: &[u8]) -> Result<EcgRecord> {
    let err = |offset: usize, message: &str| Error::Parse {
        location: Location::Offset(offset as u64),
        message: message.into(),
    };
    if bytes.len() < RAW_HEADER_LEN {
        return Err(err(bytes.len(), "truncated header"));
    }
    if &bytes[..4] != RAW_MAGIC {
        return Err(err(0, "missing ECG1 magic"));
    }
    let u32_at = |o: usize| u32::from_le_bytes(bytes[o..o + 4].try_into().unwrap()) as usize;
    let f64_at = |o: usize| f64::from_le_bytes(bytes[o..o + 8].try_into().unwrap());
    let n_channels = u32_at(4);
    let n_samples = u32_at(8);
    let period = f64_at(12);
    let expected = n_channels
        .checked_mul(n_samples)
        .and_then(|v| v.checked_mul(8))
        .and_then(|v| v.checked_add(RAW_HEADER_LEN))
        .ok_or_else(|| err(4, "channel/sample counts overflow"))?;
    if bytes.len() != expected {
        return Err(err(
            bytes.len().min(expected),
            &format!(
                "expected {expected} bytes for {n_channels}x{n_samples} samples, found {}",
                bytes.len()
            ),
        ));
    }
    let channels = (0..n_channels)
        .map(|c| {
            let base = RAW_HEADER_LEN + c * n_samples * 8;
            Channel {
                name: format!("ch{c}"),
                samples: (0..n_samples).map(|i| f64_at(base + 8 * i)).collect(),
            }
        })
        .collect();
    EcgRecord::new(period, channels)
}

/// Per-wave values for the P, Q, R, S and T waves.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Waves {
    pub p: f64,
    pub q: f64,
    pub r: f64,
    pub s: f64,
    pub t: f64,
}

impl Waves {
    fn as_array(&self) -> [f64; 5] {
        [self.p, self.q, self.r, self.s, self.t]
    }
}

/// Parameters of a synthetic P-QRS-T waveform.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticEcgSpec {
    pub beats: usize,
    pub beat_period_s: f64,
    /// Summit amplitudes in millivolts.
    pub amplitudes: Waves,
    /// Lobe durations in seconds.
    pub durations: Waves,
    pub noise_std: f64,
    pub sample_period_s: f64,
}

impl Default for SyntheticEcgSpec {
    fn default() -> Self {
        Self {
            beats: 10,
            beat_period_s: 0.8,
            amplitudes: Waves {
                p: 0.15,
                q: -0.15,
                r: 1.2,
                s: -0.3,
                t: 0.3,
            },
            durations: Waves {
                p: 0.09,
                q: 0.03,
                r: 0.05,
                s: 0.04,
                t: 0.16,
            },
            noise_std: 0.005,
            sample_period_s: DEFAULT_SAMPLE_PERIOD_S,
        }
    }
}

// Share of the idle time (beat period minus the wave durations) placed before
// P, between P and Q, between S and T; the remainder trails T.
const LEAD_SLACK: f64 = 0.10;
const PR_SLACK: f64 = 0.25;
const ST_SLACK: f64 = 0.30;

impl SyntheticEcgSpec {
    pub fn validate(&self) -> Result<()> {
        let durs = self.durations.as_array();
        if self.beats == 0 {
            return Err(validation("beats must be at least 1"));
        }
        if !(self.beat_period_s > 0.0 && self.beat_period_s.is_finite()) {
            return Err(validation("beat period must be positive"));
        }
        if durs.iter().any(|d| !(*d > 0.0 && d.is_finite())) {
            return Err(validation("wave durations must be positive"));
        }
        if durs.iter().sum::<f64>() >= self.beat_period_s {
            return Err(validation(
                "wave durations must sum to less than the beat period",
            ));
        }
        if self.amplitudes.as_array().iter().any(|a| !a.is_finite()) {
            return Err(validation("amplitudes must be finite"));
        }
        let shortest = durs.iter().copied().fold(f64::INFINITY, f64::min);
        if !(self.sample_period_s > 0.0 && self.sample_period_s < shortest / 2.0) {
            return Err(validation(format!(
                "sample period {} must be below half the shortest wave ({shortest})",
                self.sample_period_s
            )));
        }
        if !(self.noise_std >= 0.0 && self.noise_std.is_finite()) {
            return Err(validation("noise_std must be non-negative"));
        }
        Ok(())
    }
}

/// Generates `beats` raised-cosine P-QRS-T complexes plus white Gaussian noise.
///
/// Each lobe is `amp * (1 + cos(2π (t - c) / d)) / 2` on `|t - c| <= d/2`, with
/// the centre `c` snapped to the sample grid so the annotated summit sample
/// carries the full amplitude.
pub fn synthesize_ecg(spec: &SyntheticEcgSpec, seed: u64) -> Result<EcgRecord> {
    spec.validate()?;
    let t0 = spec.sample_period_s;
    let n = ((spec.beats as f64 * spec.beat_period_s) / t0).round() as usize;
    let durs = spec.durations.as_array();
    let amps = spec.amplitudes.as_array();
    let slack = spec.beat_period_s - durs.iter().sum::<f64>();
    let gaps = [
        LEAD_SLACK * slack,
        PR_SLACK * slack,
        0.0,
        0.0,
        ST_SLACK * slack,
    ];

    let mut x = vec![0.0; n];
    let mut annotations = Vec::with_capacity(spec.beats);
    for beat in 0..spec.beats {
        let mut pos = beat as f64 * spec.beat_period_s;
        let mut summits = [0usize; 5];
        for w in 0..5 {
            pos += gaps[w];
            let centre_idx = ((pos + durs[w] / 2.0) / t0).round() as usize;
            let centre = centre_idx as f64 * t0;
            let half = durs[w] / 2.0;
            let lo = ((centre - half) / t0).ceil().max(0.0) as usize;
            let hi = (((centre + half) / t0).floor() as usize).min(n.saturating_sub(1));
            for (i, xi) in x.iter_mut().enumerate().take(hi + 1).skip(lo) {
                let dt = i as f64 * t0 - centre;
                if dt.abs() <= half {
                    *xi +=
                        amps[w] * 0.5 * (1.0 + (2.0 * std::f64::consts::PI * dt / durs[w]).cos());
                }
            }
            summits[w] = centre_idx;
            pos += durs[w];
        }
        annotations.push(BeatAnnotation {
            p: summits[0],
            q: summits[1],
            r: summits[2],
            s: summits[3],
            t: summits[4],
        });
    }
    let noise = gaussian_noise(n, spec.noise_std, seed)?;
    x.iter_mut().zip(&noise).for_each(|(v, e)| *v += e);
    EcgRecord::with_annotations(
        t0,
        vec![Channel {
            name: "ch0".into(),
            samples: x,
        }],
        Some(annotations),
    )
}

fn gaussian_noise(n: usize, std: f64, seed: u64) -> Result<Vec<f64>> {
    if std == 0.0 {
        return Ok(vec![0.0; n]);
    }
    let normal = Normal::new(0.0, std).map_err(|e| validation(e.to_string()))?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Ok((0..n).map(|_| normal.sample(&mut rng)).collect())
}

/// Keeps every `k`-th sample and holds it for `k` samples, on the original grid.
pub fn hold(samples: &[f64], k: usize) -> Result<Vec<f64>> {
    if k < 1 {
        return Err(validation("downsampling factor must be at least 1"));
    }
    Ok(samples
        .iter()
        .enumerate()
        .map(|(i, _)| samples[i - i % k])
        .collect())
}

/// Expands samples taken every `k` steps back onto a grid of `len` samples.
pub fn expand_hold(kept: &[f64], k: usize, len: usize) -> Vec<f64> {
    (0..len).map(|i| kept[i / k]).collect()
}

/// Zero-order-hold downsampling of every channel; the sample period is unchanged.
pub fn downsample_hold(record: &EcgRecord, k: usize) -> Result<EcgRecord> {
    let channels = record
        .channels
        .iter()
        .map(|c| {
            Ok(Channel {
                name: c.name.clone(),
                samples: hold(&c.samples, k)?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    EcgRecord::with_annotations(record.sample_period_s, channels, record.annotations.clone())
}
