use criterion::{criterion_group, criterion_main, BatchSize, Criterion, Throughput};
use ecgpack::diff_codec::{diff_decode, diff_encode};
use ecgpack::metrics_bench::{encode_record, CodecConfig, EncodedStream};
use ecgpack::predictors::{encode_closed_loop, encode_lms, encode_open_loop, LmsParams};
use ecgpack::quantizer_design::{fit_clipped_exponential, lloyd_max};
use ecgpack::rate_optimizer::{evaluate_grid, GridCodec, RateBounds};
use ecgpack_bench::{fixture, ORDER};
use std::hint::black_box;

fn encoders(c: &mut Criterion) {
    let f = fixture(100, 64);
    let mut g = c.benchmark_group("encode");
    g.throughput(Throughput::Elements(f.signal.len() as u64));
    g.bench_function("diff", |b| {
        b.iter(|| diff_encode(black_box(&f.signal), &f.diff_codebook).unwrap())
    });
    g.bench_function("dpcm", |b| {
        b.iter(|| {
            encode_closed_loop(black_box(&f.signal), &f.predictor, &f.residual_codebook).unwrap()
        })
    });
    g.bench_function("olp", |b| {
        b.iter(|| {
            encode_open_loop(black_box(&f.signal), &f.predictor, &f.residual_codebook).unwrap()
        })
    });
    let lms = LmsParams {
        step: 0.05 / ORDER as f64,
        initial: f.predictor.coefficients().to_vec(),
    };
    g.bench_function("lms", |b| {
        b.iter(|| encode_lms(black_box(&f.signal), &lms, &f.residual_codebook).unwrap())
    });
    g.finish();

    let enc = diff_encode(&f.signal, &f.diff_codebook).unwrap();
    c.bench_function("decode/diff", |b| {
        b.iter(|| diff_decode(black_box(&enc)).unwrap())
    });
}

fn stream(c: &mut Criterion) {
    let f = fixture(100, 64);
    let cfg = CodecConfig::Diff {
        codebook: f.diff_codebook.clone(),
    };
    let bytes = encode_record(&f.record, &cfg, 1).unwrap().to_bytes();
    c.bench_function("stream/encode_to_bytes", |b| {
        b.iter(|| {
            encode_record(black_box(&f.record), &cfg, 1)
                .unwrap()
                .to_bytes()
        })
    });
    c.bench_function("stream/decode_from_bytes", |b| {
        b.iter(|| {
            EncodedStream::from_bytes(black_box(&bytes))
                .unwrap()
                .decode()
                .unwrap()
        })
    });
}

fn design(c: &mut Criterion) {
    let f = fixture(20, 16);
    let pdf = fit_clipped_exponential(&f.diff_histogram).unwrap();
    let mut g = c.benchmark_group("lloyd_max");
    for levels in [16, 256, 4096] {
        g.bench_function(levels.to_string(), |b| {
            b.iter(|| lloyd_max(black_box(&pdf), levels).unwrap())
        });
    }
    g.finish();
}

fn grid(c: &mut Criterion) {
    let f = fixture(30, 16);
    let bounds = RateBounds::default();
    let mut g = c.benchmark_group("evaluate_grid");
    g.sample_size(10);
    for codec in [GridCodec::UniformDirect, GridCodec::ProposedDiff] {
        g.bench_function(format!("{codec:?}"), |b| {
            b.iter_batched(
                || f.signal.clone(),
                |x| evaluate_grid(&x, codec, &bounds, 1.0 / 360.0).unwrap(),
                BatchSize::LargeInput,
            )
        });
    }
    g.finish();
}

criterion_group!(benches, encoders, stream, design, grid);
criterion_main!(benches);
