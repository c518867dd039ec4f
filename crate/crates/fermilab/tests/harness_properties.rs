use fermilab::harness::{
    decode_checkpoint, encode_checkpoint, fit_power_law, parse_override, ExperimentConfig, ExperimentKind, Tolerances,
};
use proptest::prelude::*;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn power_law_fits_recover_exact_laws(slope in -3.0f64..3.0, scale in 0.01f64..100.0, start in 1.0f64..10.0, count in 4usize..12) {
        let series: Vec<(f64, f64)> = (0..count).map(|i| {
            let x = start * 2f64.powi(i as i32);
            (x, scale * x.powf(slope))
        }).collect();
        let fit = fit_power_law(&series).unwrap();
        prop_assert!((fit.slope - slope).abs() < 1e-9);
        prop_assert!((fit.predict(start) / scale / start.powf(slope) - 1.0).abs() < 1e-9);
        prop_assert!(fit.r_squared > 1.0 - 1e-9 || slope.abs() < 1e-6);
    }

    #[test]
    fn checkpoints_round_trip(values in proptest::collection::vec(-1e300f64..1e300, 0..64), kind in "[a-z_]{1,16}") {
        let bytes = encode_checkpoint(&kind, &values).unwrap();
        let back: Vec<f64> = decode_checkpoint(&bytes, &kind).unwrap();
        prop_assert_eq!(back, values);
    }

    #[test]
    fn checkpoint_corruption_is_detected(values in proptest::collection::vec(-1e3f64..1e3, 1..16), at in any::<prop::sample::Index>(), flip in 1u8..=255) {
        let mut bytes = encode_checkpoint("v", &values).unwrap();
        let i = at.index(bytes.len());
        bytes[i] ^= flip;
        prop_assert!(decode_checkpoint::<Vec<f64>>(&bytes, "v").is_err());
    }

    #[test]
    fn tolerance_overrides_apply(value in 1e-12f64..1.0) {
        let o = parse_override(&format!("residual={value}")).unwrap();
        let mut tol = Tolerances::default();
        tol.apply(&[o]).unwrap();
        prop_assert_eq!(tol.residual, value);
        prop_assert!(tol.apply(&[("nonsense".into(), value)]).is_err());
    }
}

#[test]
fn presets_round_trip_through_toml() {
    for kind in ExperimentKind::ALL {
        let cfg = ExperimentConfig::preset(kind);
        let back = ExperimentConfig::from_toml(&cfg.to_toml().unwrap()).unwrap();
        assert_eq!(back.hash(), cfg.hash());
        back.validate().unwrap();
    }
}
