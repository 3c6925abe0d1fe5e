use ecgpack::signal_io::{
    downsample_hold, parse_raw, synthesize_ecg, to_raw, Channel, EcgRecord, SyntheticEcgSpec,
};
use proptest::prelude::*;

fn record() -> impl Strategy<Value = EcgRecord> {
    (1e-4f64..0.1, 1usize..4, 2usize..200).prop_flat_map(|(period, channels, n)| {
        prop::collection::vec(prop::collection::vec(-1e6f64..1e6, n), channels).prop_map(
            move |chs| {
                let channels = chs
                    .into_iter()
                    .enumerate()
                    .map(|(i, samples)| Channel {
                        name: format!("ch{i}"),
                        samples,
                    })
                    .collect();
                EcgRecord::new(period, channels).unwrap()
            },
        )
    })
}

proptest! {
    #[test]
    fn raw_format_round_trips(rec in record()) {
        let back = parse_raw(&to_raw(&rec)).unwrap();
        prop_assert_eq!(back.sample_period_s().to_bits(), rec.sample_period_s().to_bits());
        prop_assert_eq!(back.channels(), rec.channels());
    }

    #[test]
    fn hold_keeps_every_kth_sample(rec in record(), k in 1usize..50) {
        let held = downsample_hold(&rec, k).unwrap();
        prop_assert_eq!(held.len(), rec.len());
        for (a, b) in rec.channels().iter().zip(held.channels()) {
            for i in 0..a.samples.len() {
                prop_assert_eq!(b.samples[i], a.samples[i - i % k]);
            }
        }
    }

    #[test]
    fn synthesis_is_pure(seed in any::<u64>(), beats in 1usize..5, noise in 0.0f64..0.1) {
        let spec = SyntheticEcgSpec { beats, noise_std: noise, ..Default::default() };
        prop_assert_eq!(synthesize_ecg(&spec, seed).unwrap(), synthesize_ecg(&spec, seed).unwrap());
    }
}
