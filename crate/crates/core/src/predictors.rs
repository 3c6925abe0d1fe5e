//! Order-M FIR predictive codecs: open loop, closed loop (DPCM family) and LMS.
//!
//! Sign conventions: the open-loop residual is `e_i = x*_i - x_i` (prediction
//! minus sample) so its decoder subtracts the dequantized residual; the closed
//! loop uses `e_i = x_i - x~_i` and adds it back.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{degenerate, validation, Error, Result};
use crate::ops::{Arith, Plain};
use crate::quantizer_design::Codebook;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "PredictorRepr", into = "PredictorRepr")]
pub struct FirPredictor {
    coefficients: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct PredictorRepr {
    coefficients: Vec<f64>,
}

impl TryFrom<PredictorRepr> for FirPredictor {
    type Error = Error;
    fn try_from(r: PredictorRepr) -> Result<Self> {
        FirPredictor::new(r.coefficients)
    }
}

impl From<FirPredictor> for PredictorRepr {
    fn from(p: FirPredictor) -> Self {
        PredictorRepr {
            coefficients: p.coefficients,
        }
    }
}

impl FirPredictor {
    pub fn new(coefficients: Vec<f64>) -> Result<Self> {
        if coefficients.is_empty() {
            return Err(validation("predictor order must be at least 1"));
        }
        if coefficients.iter().any(|a| !a.is_finite()) {
            return Err(validation("predictor coefficients must be finite"));
        }
        Ok(Self { coefficients })
    }

    pub fn order(&self) -> usize {
        self.coefficients.len()
    }

    pub fn coefficients(&self) -> &[f64] {
        &self.coefficients
    }

    /// `Σ a_m x_{i-m}`, with `history[0] = x_{i-1}`.
    pub fn predict(&self, history: &[f64]) -> f64 {
        dot(&Plain, &self.coefficients, history)
    }

    /// Mean squared one-step prediction error over every index with a full history.
    pub fn residual_power(&self, signal: &[f64]) -> f64 {
        residual_power(&self.coefficients, signal)
    }
}

pub fn residual_power(coefficients: &[f64], signal: &[f64]) -> f64 {
    let m = coefficients.len();
    if signal.len() <= m {
        return 0.0;
    }
    let mut sum = 0.0;
    for i in m..signal.len() {
        let pred: f64 = (1..=m).map(|k| coefficients[k - 1] * signal[i - k]).sum();
        sum += (signal[i] - pred).powi(2);
    }
    sum / (signal.len() - m) as f64
}

#[inline(always)]
fn dot<A: Arith>(ar: &A, a: &[f64], history: &[f64]) -> f64 {
    let mut acc = ar.mul(a[0], history[0]);
    for m in 1..a.len() {
        acc = ar.add(acc, ar.mul(a[m], history[m]));
    }
    acc
}

#[inline(always)]
fn push_front(history: &mut [f64], v: f64) {
    history.rotate_right(1);
    history[0] = v;
}

/// Least-squares predictor of the given order, from the normal equations.
pub fn fit_fir_mmse(signal: &[f64], order: usize) -> Result<FirPredictor> {
    if order == 0 {
        return Err(validation("predictor order must be at least 1"));
    }
    if signal.len() <= 10 * order {
        return Err(validation(format!(
            "fitting order {order} needs more than {} samples, got {}",
            10 * order,
            signal.len()
        )));
    }
    if let Some(i) = signal.iter().position(|v| !v.is_finite()) {
        return Err(Error::Numeric {
            index: i,
            message: "non-finite sample".into(),
        });
    }
    if signal.iter().all(|v| *v == signal[0]) {
        return Err(degenerate("constant signal has no unique predictor"));
    }
    let mut r = DMatrix::<f64>::zeros(order, order);
    let mut rhs = DVector::<f64>::zeros(order);
    for i in order..signal.len() {
        for j in 0..order {
            let xj = signal[i - 1 - j];
            rhs[j] += signal[i] * xj;
            for k in j..order {
                r[(j, k)] += xj * signal[i - 1 - k];
            }
        }
    }
    for j in 0..order {
        for k in 0..j {
            r[(j, k)] = r[(k, j)];
        }
    }
    let eig = r.clone().symmetric_eigenvalues();
    let max = eig.iter().fold(0.0f64, |a, v| a.max(v.abs()));
    let min = eig.iter().fold(f64::INFINITY, |a, v| a.min(v.abs()));
    if !(max > 0.0) || min <= max * 1e-13 {
        return Err(degenerate("normal equations are singular"));
    }
    let chol = r
        .cholesky()
        .ok_or_else(|| degenerate("normal equations are not positive definite"))?;
    let a = chol.solve(&rhs);
    FirPredictor::new(a.iter().copied().collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LoopMode {
    Open,
    Closed,
}

/// Output of a predictive encoder: seed samples plus residual indices.
#[derive(Debug, Clone, PartialEq)]
pub struct PredictiveEncoded {
    /// The first M samples, sent at full precision.
    pub warmup: Vec<f64>,
    pub indices: Vec<u32>,
    pub codebook: Codebook,
    pub loop_mode: LoopMode,
}

impl PredictiveEncoded {
    /// Number of reconstructed samples this stream decodes to.
    pub fn len(&self) -> usize {
        self.warmup.len() + self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

fn check_inputs(signal: &[f64], order: usize) -> Result<()> {
    if signal.len() <= order {
        return Err(validation(format!(
            "signal of length {} is too short for order {order}",
            signal.len()
        )));
    }
    if let Some(i) = signal.iter().position(|v| !v.is_finite()) {
        return Err(Error::Numeric {
            index: i,
            message: "non-finite input sample".into(),
        });
    }
    Ok(())
}

fn check_stream(enc: &PredictiveEncoded, order: usize, mode: LoopMode) -> Result<()> {
    if enc.loop_mode != mode {
        return Err(validation(format!(
            "stream is {:?}-loop, decoder is {mode:?}-loop",
            enc.loop_mode
        )));
    }
    if enc.warmup.len() != order {
        return Err(validation(format!(
            "warmup holds {} samples but the predictor order is {order}",
            enc.warmup.len()
        )));
    }
    let l = enc.codebook.len();
    if let Some(bad) = enc.indices.iter().find(|i| **i as usize >= l) {
        return Err(Error::CorruptStream(format!(
            "index {bad} outside a codebook of {l} levels"
        )));
    }
    Ok(())
}

/// Open-loop encoder state: the last M true samples.
#[derive(Debug, Clone)]
pub struct OpenLoopEncoder<'a> {
    predictor: &'a FirPredictor,
    codebook: &'a Codebook,
    history: Vec<f64>,
}

impl<'a> OpenLoopEncoder<'a> {
    /// `warmup` in time order.
    pub fn new(predictor: &'a FirPredictor, codebook: &'a Codebook, warmup: &[f64]) -> Self {
        let history = warmup.iter().rev().copied().collect();
        Self {
            predictor,
            codebook,
            history,
        }
    }

    /// Returns the residual `x* - x` and its index.
    #[inline]
    pub fn step<A: Arith>(&mut self, ar: &A, x: f64) -> (f64, u32) {
        let pred = dot(ar, &self.predictor.coefficients, &self.history);
        let e = ar.sub(pred, x);
        let idx = self.codebook.quantize(e) as u32;
        push_front(&mut self.history, x);
        (e, idx)
    }

    pub fn memory_words(&self) -> usize {
        self.history.len()
    }
}

pub fn encode_open_loop(
    signal: &[f64],
    predictor: &FirPredictor,
    codebook: &Codebook,
) -> Result<PredictiveEncoded> {
    let m = predictor.order();
    check_inputs(signal, m)?;
    let mut enc = OpenLoopEncoder::new(predictor, codebook, &signal[..m]);
    let indices = signal[m..].iter().map(|x| enc.step(&Plain, *x).1).collect();
    Ok(PredictiveEncoded {
        warmup: signal[..m].to_vec(),
        indices,
        codebook: codebook.clone(),
        loop_mode: LoopMode::Open,
    })
}

/// `x^_i = Σ a_m x^_{i-m} - e^_i`.
pub fn decode_open_loop(enc: &PredictiveEncoded, predictor: &FirPredictor) -> Result<Vec<f64>> {
    let m = predictor.order();
    check_stream(enc, m, LoopMode::Open)?;
    let a = predictor.coefficients();
    let mut out = Vec::with_capacity(enc.len());
    out.extend_from_slice(&enc.warmup);
    let mut history: Vec<f64> = enc.warmup.iter().rev().copied().collect();
    for (k, idx) in enc.indices.iter().enumerate() {
        let v = dot(&Plain, a, &history) - enc.codebook.levels()[*idx as usize];
        if !v.is_finite() {
            return Err(Error::Numeric {
                index: m + k,
                message: "reconstruction overflowed".into(),
            });
        }
        push_front(&mut history, v);
        out.push(v);
    }
    Ok(out)
}

/// Closed-loop encoder state: the last M reconstructions.
#[derive(Debug, Clone)]
pub struct ClosedLoopEncoder<'a> {
    coefficients: &'a [f64],
    codebook: &'a Codebook,
    history: Vec<f64>,
}

impl<'a> ClosedLoopEncoder<'a> {
    pub fn new(predictor: &'a FirPredictor, codebook: &'a Codebook, warmup: &[f64]) -> Self {
        Self::with_coefficients(predictor.coefficients(), codebook, warmup)
    }

    fn with_coefficients(coefficients: &'a [f64], codebook: &'a Codebook, warmup: &[f64]) -> Self {
        let history = warmup.iter().rev().copied().collect();
        Self {
            coefficients,
            codebook,
            history,
        }
    }

    /// Returns the index and the shared reconstruction `x^_i`.
    #[inline]
    pub fn step<A: Arith>(&mut self, ar: &A, x: f64) -> (u32, f64) {
        let pred = dot(ar, self.coefficients, &self.history);
        let e = ar.sub(x, pred);
        let idx = self.codebook.quantize(e);
        let xh = ar.add(pred, self.codebook.levels()[idx]);
        push_front(&mut self.history, xh);
        (idx as u32, xh)
    }

    pub fn memory_words(&self) -> usize {
        self.history.len()
    }
}

/// Closed-loop encoding together with the encoder's own reconstruction.
pub fn encode_closed_loop_traced(
    signal: &[f64],
    predictor: &FirPredictor,
    codebook: &Codebook,
) -> Result<(PredictiveEncoded, Vec<f64>)> {
    let m = predictor.order();
    check_inputs(signal, m)?;
    let mut enc = ClosedLoopEncoder::new(predictor, codebook, &signal[..m]);
    let mut recon = signal[..m].to_vec();
    let mut indices = Vec::with_capacity(signal.len() - m);
    for (k, x) in signal[m..].iter().enumerate() {
        let (idx, xh) = enc.step(&Plain, *x);
        if !xh.is_finite() {
            return Err(Error::Numeric {
                index: m + k,
                message: "reconstruction overflowed".into(),
            });
        }
        indices.push(idx);
        recon.push(xh);
    }
    let encoded = PredictiveEncoded {
        warmup: signal[..m].to_vec(),
        indices,
        codebook: codebook.clone(),
        loop_mode: LoopMode::Closed,
    };
    Ok((encoded, recon))
}

pub fn encode_closed_loop(
    signal: &[f64],
    predictor: &FirPredictor,
    codebook: &Codebook,
) -> Result<PredictiveEncoded> {
    Ok(encode_closed_loop_traced(signal, predictor, codebook)?.0)
}

/// `x^_i = Σ a_m x^_{i-m} + e^_i`, identical to the encoder's reconstruction.
pub fn decode_closed_loop(enc: &PredictiveEncoded, predictor: &FirPredictor) -> Result<Vec<f64>> {
    check_stream(enc, predictor.order(), LoopMode::Closed)?;
    decode_closed_with(enc, predictor.coefficients())
}

fn decode_closed_with(enc: &PredictiveEncoded, a: &[f64]) -> Result<Vec<f64>> {
    let m = a.len();
    let mut out = Vec::with_capacity(enc.len());
    out.extend_from_slice(&enc.warmup);
    let mut history: Vec<f64> = enc.warmup.iter().rev().copied().collect();
    for (k, idx) in enc.indices.iter().enumerate() {
        let v = dot(&Plain, a, &history) + enc.codebook.levels()[*idx as usize];
        if !v.is_finite() {
            return Err(Error::Numeric {
                index: m + k,
                message: "reconstruction overflowed".into(),
            });
        }
        push_front(&mut history, v);
        out.push(v);
    }
    Ok(out)
}

/// Parameters a decoder needs to replay LMS adaptation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LmsParams {
    pub step: f64,
    pub initial: Vec<f64>,
}

impl LmsParams {
    /// Zero initial coefficients of the given order.
    pub fn zeros(order: usize, step: f64) -> Self {
        Self {
            step,
            initial: vec![0.0; order],
        }
    }

    pub fn order(&self) -> usize {
        self.initial.len()
    }

    fn validate(&self) -> Result<()> {
        if self.initial.is_empty() {
            return Err(validation("LMS order must be at least 1"));
        }
        if !(self.step >= 0.0 && self.step.is_finite()) {
            return Err(validation(format!(
                "LMS step must be finite and non-negative, got {}",
                self.step
            )));
        }
        if self.initial.iter().any(|a| !a.is_finite()) {
            return Err(validation("initial LMS coefficients must be finite"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LmsEncoded {
    pub encoded: PredictiveEncoded,
    pub params: LmsParams,
}

/// Closed-loop predictor whose coefficients follow `a <- a + μ e^_i x^_{i-1..i-M}`.
#[derive(Debug, Clone)]
pub struct LmsEncoder<'a> {
    codebook: &'a Codebook,
    step: f64,
    coefficients: Vec<f64>,
    history: Vec<f64>,
}

impl<'a> LmsEncoder<'a> {
    pub fn new(params: &LmsParams, codebook: &'a Codebook, warmup: &[f64]) -> Self {
        Self {
            codebook,
            step: params.step,
            coefficients: params.initial.clone(),
            history: warmup.iter().rev().copied().collect(),
        }
    }

    pub fn coefficients(&self) -> &[f64] {
        &self.coefficients
    }

    /// Prediction and reconstruction go through `ar`; the coefficient update
    /// through `adapt`, so the two costs can be measured separately.
    #[inline]
    pub fn step<A: Arith, B: Arith>(&mut self, ar: &A, adapt: &B, x: f64) -> (u32, f64) {
        let pred = dot(ar, &self.coefficients, &self.history);
        let e = ar.sub(x, pred);
        let idx = self.codebook.quantize(e);
        let eh = self.codebook.levels()[idx];
        let xh = ar.add(pred, eh);
        lms_update(adapt, &mut self.coefficients, &self.history, self.step, eh);
        push_front(&mut self.history, xh);
        (idx as u32, xh)
    }

    /// Coefficients plus reconstruction history.
    pub fn memory_words(&self) -> usize {
        self.coefficients.len() + self.history.len()
    }
}

#[inline(always)]
fn lms_update<B: Arith>(adapt: &B, a: &mut [f64], history: &[f64], step: f64, eh: f64) {
    let g = adapt.mul(step, eh);
    for (am, xm) in a.iter_mut().zip(history) {
        *am = adapt.add(*am, adapt.mul(g, *xm));
    }
}

/// LMS encoding plus the coefficient vector after every sample.
pub fn encode_lms(
    signal: &[f64],
    params: &LmsParams,
    codebook: &Codebook,
) -> Result<(LmsEncoded, Vec<Vec<f64>>)> {
    params.validate()?;
    let m = params.order();
    check_inputs(signal, m)?;
    let mut enc = LmsEncoder::new(params, codebook, &signal[..m]);
    let mut indices = Vec::with_capacity(signal.len() - m);
    let mut trace = Vec::with_capacity(signal.len() - m);
    for (k, x) in signal[m..].iter().enumerate() {
        let (idx, xh) = enc.step(&Plain, &Plain, *x);
        if !xh.is_finite() || enc.coefficients.iter().any(|a| !a.is_finite()) {
            return Err(Error::Numeric {
                index: m + k,
                message: "LMS coefficients diverged".into(),
            });
        }
        indices.push(idx);
        trace.push(enc.coefficients.clone());
    }
    let encoded = PredictiveEncoded {
        warmup: signal[..m].to_vec(),
        indices,
        codebook: codebook.clone(),
        loop_mode: LoopMode::Closed,
    };
    Ok((
        LmsEncoded {
            encoded,
            params: params.clone(),
        },
        trace,
    ))
}

/// Replays the encoder's adaptation from the transmitted indices.
pub fn decode_lms(enc: &LmsEncoded) -> Result<Vec<f64>> {
    enc.params.validate()?;
    let m = enc.params.order();
    check_stream(&enc.encoded, m, LoopMode::Closed)?;
    let e = &enc.encoded;
    let mut a = enc.params.initial.clone();
    let mut out = Vec::with_capacity(e.len());
    out.extend_from_slice(&e.warmup);
    let mut history: Vec<f64> = e.warmup.iter().rev().copied().collect();
    for (k, idx) in e.indices.iter().enumerate() {
        let eh = e.codebook.levels()[*idx as usize];
        let v = dot(&Plain, &a, &history) + eh;
        lms_update(&Plain, &mut a, &history, enc.params.step, eh);
        if !v.is_finite() || a.iter().any(|c| !c.is_finite()) {
            return Err(Error::Numeric {
                index: m + k,
                message: "LMS reconstruction diverged".into(),
            });
        }
        push_front(&mut history, v);
        out.push(v);
    }
    Ok(out)
}

/// Open-loop reconstruction error driven by a quantization-error sequence:
/// `e*_i = Σ a_m e*_{i-m} + e_q,i`, starting from zero.
pub fn open_loop_error_response(coefficients: &[f64], quant_error: &[f64]) -> Vec<f64> {
    let m = coefficients.len();
    let mut out: Vec<f64> = Vec::with_capacity(quant_error.len());
    for (i, eq) in quant_error.iter().enumerate() {
        let mut v = *eq;
        for k in 1..=m.min(i) {
            v += coefficients[k - 1] * out[i - k];
        }
        out.push(v);
    }
    out
}
