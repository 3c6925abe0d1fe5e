use ecgpack::conditional_codec::{build_conditional_codebook, AffineFit, CoarsePartition};
use ecgpack::metrics_bench::{encode_record, CodecConfig, CodecTag, EncodedStream};
use ecgpack::predictors::{fit_fir_mmse, LmsParams};
use ecgpack::quantizer_design::{bits_for, histogram};
use ecgpack::rate_optimizer::{diff_codebook, trained_codebook};
use ecgpack::signal_io::{synthesize_ecg, SyntheticEcgSpec};
use proptest::prelude::*;

fn config(tag: CodecTag, x: &[f64], s: &[f64], levels: usize) -> CodecConfig {
    let dcb = diff_codebook(x, levels).unwrap();
    let p = fit_fir_mmse(x, 2).unwrap();
    let a = p.coefficients();
    let residuals: Vec<f64> = (2..x.len())
        .map(|i| x[i] - a[0] * x[i - 1] - a[1] * x[i - 2])
        .collect();
    let rcb = trained_codebook(&residuals, levels).unwrap();
    match tag {
        CodecTag::Diff => CodecConfig::Diff { codebook: dcb },
        CodecTag::OpenLoop => CodecConfig::OpenLoop {
            predictor: p,
            codebook: rcb,
        },
        CodecTag::ClosedLoop => CodecConfig::ClosedLoop {
            predictor: p,
            codebook: rcb,
        },
        CodecTag::Lms => CodecConfig::Lms {
            params: LmsParams {
                step: 0.01,
                initial: a.to_vec(),
            },
            codebook: rcb,
        },
        CodecTag::Conditional => {
            let (hp, hs) = (histogram(x, 256).unwrap(), histogram(s, 256).unwrap());
            let affine = AffineFit::Moments.fit(&hp, &hs).unwrap();
            let secondary =
                build_conditional_codebook(&hs, affine, 1, 2, CoarsePartition::Lloyd).unwrap();
            CodecConfig::Conditional {
                primary: dcb,
                secondary,
            }
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn streams_round_trip_and_account_for_every_bit(
        tag in prop::sample::select(CodecTag::ALL.to_vec()),
        seed in 0u64..500,
        k in 1usize..6,
        levels in 4usize..40,
    ) {
        let spec = SyntheticEcgSpec { beats: 4, ..Default::default() };
        let rec = synthesize_ecg(&spec, seed).unwrap().with_affine_channel(0, "ch1", 0.8, 0.1, 0.01, seed + 1).unwrap();
        let (x, s) = (rec.channel(0).unwrap(), rec.channel(1).unwrap());
        let cfg = config(tag, x, s, levels);
        let enc = encode_record(&rec, &cfg, k).unwrap();
        let bytes = enc.to_bytes();
        let back = EncodedStream::from_bytes(&bytes).unwrap();
        prop_assert_eq!(&back, &enc);
        prop_assert_eq!(back.to_bytes(), bytes);

        let decoded = back.decode().unwrap();
        prop_assert_eq!(decoded.len(), rec.len());
        prop_assert!(decoded.channels().iter().all(|c| c.samples.iter().all(|v| v.is_finite())));

        let kept = rec.len().div_ceil(k) as u64;
        let width = bits_for(levels) as u64;
        let expected = match tag {
            CodecTag::Diff => 64 + (kept - 1) * width,
            CodecTag::Conditional => 64 + (kept - 1) * width + kept * 2,
            _ => 2 * 64 + (kept - 2) * width,
        };
        prop_assert_eq!(enc.payload_bits(), expected);
        let channels = if tag == CodecTag::Conditional { 2.0 } else { 1.0 };
        let reported = enc.bits_per_sample() * rec.len() as f64 * channels;
        prop_assert!((reported - expected as f64).abs() <= 1e-9 * expected as f64);
    }
}
