use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use ecgpack::conditional_codec::{
    build_conditional_codebook, AffineFit, CoarsePartition, ConditionalCodebook,
};
use ecgpack::metrics_bench::{
    decode_stream, encode_record, run_benchmark, BenchCodec, CodecConfig, CodecTag, LMS_STEP,
};
use ecgpack::predictors::{fit_fir_mmse, FirPredictor, LmsParams};
use ecgpack::quantizer_design::{
    differences, fit_clipped_exponential_with, histogram, lloyd_max, Codebook, DEFAULT_LAMBDA,
};
use ecgpack::rate_optimizer::{
    evaluate_grid, grid_to_csv, optimize_rate, GridCodec, OptimumReport, RateBounds,
};
use ecgpack::signal_io::{
    load_record, save_record, synthesize_ecg, EcgRecord, RecordFormat, SyntheticEcgSpec,
};
use ecgpack::stability::open_loop_stability;
use ecgpack::{Error, Result};

mod args;

use args::{parse_coeffs, parse_widths};

#[derive(Parser)]
#[command(
    name = "ecgpack",
    version,
    about = "Low-complexity ECG compression toolkit"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic P-QRS-T record.
    Synth {
        /// JSON spec; the built-in default when omitted.
        #[arg(long)]
        spec: Option<PathBuf>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Also emit a second channel `gain*x + offset + noise` (comma separated).
        #[arg(long, value_name = "GAIN,OFFSET,NOISE", allow_hyphen_values = true)]
        secondary: Option<String>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train a differential (or predictive residual) codebook.
    FitCodebook {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        levels: usize,
        #[arg(long, value_enum, default_value_t = PdfKind::ClippedExp)]
        pdf: PdfKind,
        /// Exponential rate of the clipped-exponential pdf.
        #[arg(long, default_value_t = DEFAULT_LAMBDA, conflicts_with = "fit_lambda")]
        lambda: f64,
        /// Fit the exponential rate to the histogram instead.
        #[arg(long)]
        fit_lambda: bool,
        #[arg(long, default_value_t = 256)]
        bins: usize,
        /// Train on order-M least-squares prediction residuals instead of differences.
        #[arg(long)]
        residual_order: Option<usize>,
        /// Rescale every channel to this peak amplitude (mV) first.
        #[arg(long)]
        normalize: Option<f64>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Compress a record into a stream file.
    Encode {
        #[arg(long, value_parser = parse_tag)]
        codec: CodecTag,
        #[arg(long = "in")]
        input: PathBuf,
        /// Codebook JSON; for `cond`, the primary channel's codebook.
        #[arg(long)]
        codebook: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Keep every k-th sample.
        #[arg(long, default_value_t = 1)]
        k: usize,
        /// Predictor order when coefficients are fitted.
        #[arg(long, default_value_t = 4)]
        order: usize,
        /// Fixed predictor (or initial LMS) coefficients.
        #[arg(long, allow_hyphen_values = true)]
        coeffs: Option<String>,
        /// LMS step size; normalized to the signal power when omitted.
        #[arg(long)]
        step: Option<f64>,
        /// Conditional codebook JSON; trained from the record when omitted.
        #[arg(long)]
        cond_codebook: Option<PathBuf>,
        #[arg(long, default_value_t = 1)]
        n1: u32,
        #[arg(long, default_value_t = 3)]
        n2: u32,
        #[arg(long, value_enum, default_value_t = AffineArg::Moments)]
        affine: AffineArg,
        #[arg(long, value_enum, default_value_t = CoarseArg::Lloyd)]
        coarse: CoarseArg,
        #[arg(long)]
        normalize: Option<f64>,
    },
    /// Reconstruct a record from a stream file.
    Decode {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Poles of the open-loop error response of a predictor.
    Stability {
        #[arg(long, allow_hyphen_values = true)]
        coeffs: String,
        #[arg(long)]
        json: bool,
    },
    /// Best (W, K) under a bit-rate budget.
    OptimizeRate {
        #[arg(long = "in")]
        input: PathBuf,
        /// Budget in bits per second.
        #[arg(long)]
        budget: f64,
        /// Sample period in seconds; the record's own when omitted.
        #[arg(long)]
        t0: Option<f64>,
        #[arg(long)]
        bounds: Option<PathBuf>,
        /// Write every evaluated point here.
        #[arg(long)]
        grid: Option<PathBuf>,
        #[arg(long, value_enum, default_value_t = GridArg::Diff)]
        codec: GridArg,
        #[arg(long)]
        normalize: Option<f64>,
        #[arg(long)]
        json: bool,
    },
    /// Rate-distortion benchmark over a directory of records.
    Bench {
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long, default_value = "diff,dpcm,lms,olp")]
        codecs: String,
        #[arg(long, default_value = "4..12")]
        widths: String,
        #[arg(long)]
        normalize: Option<f64>,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum PdfKind {
    /// Clipped exponential fitted to the histogram.
    ClippedExp,
    /// The histogram itself.
    Histogram,
}

#[derive(Clone, Copy, ValueEnum)]
enum AffineArg {
    Density,
    Moments,
}

#[derive(Clone, Copy, ValueEnum)]
enum CoarseArg {
    Lloyd,
    Uniform,
}

#[derive(Clone, Copy, ValueEnum)]
enum GridArg {
    Diff,
    Uniform,
}

fn parse_tag(s: &str) -> std::result::Result<CodecTag, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Validation(_) | Error::Parse { .. } | Error::CorruptStream(_) | Error::Json(_) => 2,
        Error::Numeric { .. } | Error::Degenerate(_) => 3,
        Error::InfeasibleBudget { .. } => 4,
        Error::Io(_) => 5,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}

fn read_record(path: &Path, normalize: Option<f64>) -> Result<EcgRecord> {
    let r = load_record(path, RecordFormat::from_path(path))?;
    match normalize {
        Some(peak) => r.normalized(peak),
        None => Ok(r),
    }
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    Ok(serde_json::from_slice(&fs::read(path)?)?)
}

fn write_json<T: serde::Serialize>(path: &Path, v: &T) -> Result<()> {
    let mut s = serde_json::to_string_pretty(v)?;
    s.push('\n');
    fs::write(path, s)?;
    Ok(())
}

fn run(cmd: Command) -> Result<()> {
    match cmd {
        Command::Synth {
            spec,
            seed,
            secondary,
            out,
        } => {
            let spec: SyntheticEcgSpec = match spec {
                Some(p) => read_json(&p)?,
                None => SyntheticEcgSpec::default(),
            };
            let mut rec = synthesize_ecg(&spec, seed)?;
            if let Some(s) = secondary {
                let v = parse_coeffs(&s)?;
                let [gain, offset, noise] = v[..] else {
                    return Err(Error::Validation(
                        "--secondary takes GAIN,OFFSET,NOISE".into(),
                    ));
                };
                rec =
                    rec.with_affine_channel(0, "ch1", gain, offset, noise, seed.wrapping_add(1))?;
            }
            save_record(&rec, &out, RecordFormat::from_path(&out))
        }
        Command::FitCodebook {
            input,
            levels,
            pdf,
            lambda,
            fit_lambda,
            bins,
            residual_order,
            normalize,
            out,
        } => {
            let rec = read_record(&input, normalize)?;
            let values = match residual_order {
                None => rec
                    .channels()
                    .iter()
                    .flat_map(|c| differences(&c.samples))
                    .collect::<Vec<_>>(),
                Some(m) => {
                    let mut v = Vec::new();
                    for c in rec.channels() {
                        let x = &c.samples;
                        let a = fit_fir_mmse(x, m)?.coefficients().to_vec();
                        v.extend(
                            (m..x.len())
                                .map(|i| x[i] - (0..m).map(|j| a[j] * x[i - 1 - j]).sum::<f64>()),
                        );
                    }
                    v
                }
            };
            let h = histogram(&values, bins)?;
            let cb = match pdf {
                PdfKind::ClippedExp => lloyd_max(
                    &fit_clipped_exponential_with(&h, (!fit_lambda).then_some(lambda))?,
                    levels,
                )?,
                PdfKind::Histogram => lloyd_max(&h, levels)?,
            };
            write_json(&out, &cb)
        }
        Command::Encode {
            codec,
            input,
            codebook,
            out,
            k,
            order,
            coeffs,
            step,
            cond_codebook,
            n1,
            n2,
            affine,
            coarse,
            normalize,
        } => {
            let rec = read_record(&input, normalize)?;
            let cb: Codebook = read_json(&codebook)?;
            let x = rec.channel(0)?;
            let predictor = || -> Result<FirPredictor> {
                match &coeffs {
                    Some(c) => FirPredictor::new(parse_coeffs(c)?),
                    None => fit_fir_mmse(x, order),
                }
            };
            let config = match codec {
                CodecTag::Diff => CodecConfig::Diff { codebook: cb },
                CodecTag::OpenLoop => CodecConfig::OpenLoop {
                    predictor: predictor()?,
                    codebook: cb,
                },
                CodecTag::ClosedLoop => CodecConfig::ClosedLoop {
                    predictor: predictor()?,
                    codebook: cb,
                },
                CodecTag::Lms => {
                    let initial = match &coeffs {
                        Some(c) => parse_coeffs(c)?,
                        None => vec![0.0; order],
                    };
                    let step = match step {
                        Some(s) => s,
                        None => {
                            let p = x.iter().map(|v| v * v).sum::<f64>() / x.len() as f64;
                            if !(p > 0.0) {
                                return Err(Error::Degenerate("signal has zero power".into()));
                            }
                            LMS_STEP / (initial.len() as f64 * p)
                        }
                    };
                    CodecConfig::Lms {
                        params: LmsParams { step, initial },
                        codebook: cb,
                    }
                }
                CodecTag::Conditional => {
                    let secondary: ConditionalCodebook = match cond_codebook {
                        Some(p) => read_json(&p)?,
                        None => {
                            let pdf_p = histogram(x, 256)?;
                            let pdf_s = histogram(rec.channel(1)?, 256)?;
                            let fit = match affine {
                                AffineArg::Density => AffineFit::Density,
                                AffineArg::Moments => AffineFit::Moments,
                            };
                            let coarse = match coarse {
                                CoarseArg::Lloyd => CoarsePartition::Lloyd,
                                CoarseArg::Uniform => CoarsePartition::Uniform,
                            };
                            build_conditional_codebook(
                                &pdf_s,
                                fit.fit(&pdf_p, &pdf_s)?,
                                n1,
                                n2,
                                coarse,
                            )?
                        }
                    };
                    CodecConfig::Conditional {
                        primary: cb,
                        secondary,
                    }
                }
            };
            let stream = encode_record(&rec, &config, k)?;
            fs::write(&out, stream.to_bytes())?;
            eprintln!(
                "{}: {} payload bits, {:.4} bits/sample, {:.1} bit/s",
                stream.tag(),
                stream.payload_bits(),
                stream.bits_per_sample(),
                stream.rate_bps()
            );
            Ok(())
        }
        Command::Decode { input, out } => {
            let rec = decode_stream(&fs::read(&input)?)?;
            save_record(&rec, &out, RecordFormat::from_path(&out))
        }
        Command::Stability { coeffs, json } => {
            let report = open_loop_stability(&parse_coeffs(&coeffs)?)?;
            if json {
                println!("{}", serde_json::to_string(&report)?);
            } else {
                for p in &report.poles {
                    println!("{:+.6} {:+.6}j  |{:.6}|", p.re, p.im, p.norm());
                }
                println!(
                    "max modulus {:.6}: {}",
                    report.max_modulus,
                    if report.stable { "stable" } else { "unstable" }
                );
            }
            Ok(())
        }
        Command::OptimizeRate {
            input,
            budget,
            t0,
            bounds,
            grid,
            codec,
            normalize,
            json,
        } => {
            let rec = read_record(&input, normalize)?;
            let bounds: RateBounds = match bounds {
                Some(p) => read_json(&p)?,
                None => RateBounds::default(),
            };
            let t0 = t0.unwrap_or(rec.sample_period_s());
            let codec = match codec {
                GridArg::Diff => GridCodec::ProposedDiff,
                GridArg::Uniform => GridCodec::UniformDirect,
            };
            let points = evaluate_grid(rec.channel(0)?, codec, &bounds, t0)?;
            if let Some(g) = grid {
                fs::write(g, grid_to_csv(&points))?;
            }
            let best = OptimumReport::new(&optimize_rate(&points, budget)?, budget);
            if json {
                println!("{}", serde_json::to_string(&best)?);
            } else {
                println!(
                    "W = {}, K = {}, rate = {:.2} bit/s, ase = {:.6e} (budget {} bit/s)",
                    best.w, best.k, best.rate_bps, best.ase, best.budget_bps
                );
            }
            Ok(())
        }
        Command::Bench {
            corpus,
            codecs,
            widths,
            normalize,
            out,
        } => {
            let codecs = codecs
                .split(',')
                .map(|s| s.trim().parse::<BenchCodec>())
                .collect::<Result<Vec<_>>>()?;
            let widths = parse_widths(&widths)?;
            let mut paths: Vec<PathBuf> = fs::read_dir(&corpus)?
                .map(|e| e.map(|e| e.path()))
                .collect::<std::io::Result<Vec<_>>>()?
                .into_iter()
                .filter(|p| matches!(p.extension().and_then(|e| e.to_str()), Some("csv" | "ecg1")))
                .collect();
            paths.sort();
            let records = paths
                .iter()
                .map(|p| {
                    let name = p
                        .file_stem()
                        .and_then(|s| s.to_str())
                        .unwrap_or("record")
                        .to_string();
                    Ok((name, read_record(p, normalize)?))
                })
                .collect::<Result<Vec<_>>>()?;
            let report = run_benchmark(&records, &codecs, &widths)?;
            fs::write(&out, report.to_csv()?)?;
            let failed = report.rows.iter().filter(|r| r.failed).count();
            eprintln!("{} rows written, {failed} failed", report.rows.len());
            Ok(())
        }
    }
}
