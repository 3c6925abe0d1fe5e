use ecgpack::predictors::open_loop_error_response;
use ecgpack::stability::open_loop_stability;
use proptest::prelude::*;

proptest! {
    #[test]
    fn impulse_grows_iff_a_pole_leaves_the_unit_circle(coeffs in prop::collection::vec(-1.2f64..1.2, 1..5)) {
        let report = open_loop_stability(&coeffs).unwrap();
        // Near the circle growth or decay is too slow to see in 10^4 samples.
        prop_assume!((report.max_modulus - 1.0).abs() > 0.01);
        let mut impulse = vec![0.0; 10_000];
        impulse[0] = 1.0;
        let e = open_loop_error_response(&coeffs, &impulse);
        // Overflow to inf or NaN counts as growth.
        let grew = e[e.len() - 100..].iter().any(|v| !(v.abs() <= 1e3));
        prop_assert_eq!(grew, report.max_modulus > 1.0);
        prop_assert_eq!(report.stable, report.max_modulus < 1.0);
    }

    #[test]
    fn trailing_zeros_only_add_poles_at_the_origin(
        coeffs in prop::collection::vec(-1.0f64..1.0, 1..4),
        last in prop_oneof![-1.0f64..-0.05, 0.05f64..1.0],
        zeros in 1usize..4,
    ) {
        let mut a = coeffs;
        a.push(last);
        let base = open_loop_stability(&a).unwrap();
        a.extend(std::iter::repeat_n(0.0, zeros));
        let padded = open_loop_stability(&a).unwrap();
        prop_assert_eq!(padded.poles.len(), base.poles.len() + zeros);
        prop_assert_eq!(padded.stable, base.stable);
        prop_assert!((padded.max_modulus - base.max_modulus).abs() < 1e-9);
        prop_assert_eq!(padded.poles.iter().filter(|p| p.norm() == 0.0).count(), zeros);
    }
}
