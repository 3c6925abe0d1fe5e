use ecgpack::diff_codec::{diff_decode, diff_encode, diff_encode_traced, Modification};
use ecgpack::predictors::{decode_closed_loop, encode_closed_loop_traced, FirPredictor};
use ecgpack::quantizer_design::Codebook;
use ecgpack::rate_optimizer::diff_codebook;
use ecgpack::signal_io::{synthesize_ecg, SyntheticEcgSpec};
use proptest::prelude::*;

fn codebook() -> impl Strategy<Value = Codebook> {
    prop::collection::vec(-3.0f64..3.0, 2..24).prop_filter_map("distinct levels", |mut l| {
        l.sort_by(f64::total_cmp);
        l.dedup_by(|a, b| (*a - *b).abs() < 1e-6);
        Codebook::from_levels(l).ok()
    })
}

proptest! {
    #[test]
    fn closed_loop_error_is_the_quantization_error(
        x in prop::collection::vec(-5.0f64..5.0, 5..300),
        coeffs in prop::collection::vec(-0.9f64..0.9, 1..5),
        cb in codebook(),
    ) {
        let p = FirPredictor::new(coeffs.clone()).unwrap();
        let (enc, xh) = encode_closed_loop_traced(&x, &p, &cb).unwrap();
        let m = coeffs.len();
        for i in m..x.len() {
            let pred: f64 = (0..m).map(|j| coeffs[j] * xh[i - 1 - j]).sum();
            let eq = (x[i] - pred) - cb.levels()[enc.indices[i - m] as usize];
            prop_assert!(((x[i] - xh[i]) - eq).abs() < 1e-12);
        }
        prop_assert_eq!(decode_closed_loop(&enc, &p).unwrap(), xh);
    }

    #[test]
    fn diff_decoder_replays_the_encoder(
        x in prop::collection::vec(-5.0f64..5.0, 2..300),
        cb in codebook(),
    ) {
        let trace = diff_encode_traced(&x, &cb, Modification::Table).unwrap();
        let dec = diff_decode(&diff_encode(&x, &cb).unwrap()).unwrap();
        prop_assert_eq!(dec[0], x[0]);
        for (t, d) in trace.iter().zip(&dec[1..]) {
            prop_assert_eq!(t.reconstruction.to_bits(), d.to_bits());
        }
    }

    #[test]
    fn diff_error_follows_the_modification(
        x in prop::collection::vec(-5.0f64..5.0, 2..300),
        cb in codebook(),
    ) {
        let trace = diff_encode_traced(&x, &cb, Modification::Table).unwrap();
        for (i, t) in trace.iter().enumerate() {
            let err = x[i + 1] - t.reconstruction;
            prop_assert!((err - (t.s - t.a + t.eq)).abs() < 1e-9);
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    // Holds for trained codebooks of 3 bits or more on ECG-like input. At 2 bits,
    // or with arbitrary codebooks that have a wide central gap, the error can
    // drift past the span.
    #[test]
    fn diff_error_stays_within_the_span(
        seed in 0u64..1000,
        period in 0.6f64..1.2,
        r in 0.5f64..2.0,
        noise in 0.0f64..0.02,
        bits in 3usize..7,
    ) {
        let mut spec = SyntheticEcgSpec { beats: 300, beat_period_s: period, noise_std: noise, ..Default::default() };
        spec.amplitudes.r = r;
        let rec = synthesize_ecg(&spec, seed).unwrap();
        let x = rec.channel(0).unwrap();
        let cb = diff_codebook(x, 1 << bits).unwrap();
        let dec = diff_decode(&diff_encode(x, &cb).unwrap()).unwrap();
        let worst = x.iter().zip(&dec).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        prop_assert!(worst <= cb.span(), "max error {} vs span {}", worst, cb.span());
    }
}
