mod props;

macro_rules! property_tests {
    ($($name:ident),* $(,)?) => {
        $(
            #[test]
            fn $name() {
                if let Err(e) = props::$name() {
                    panic!("{e}");
                }
            }
        )*
    };
}

property_tests![
    pearson_symmetric_and_bounded,
    pearson_affine_invariant,
    resample_same_rate_is_identity,
    parseval,
    render_deterministic,
    global_integer_shift_is_crop,
    rolling_constant_motion_matches_global,
    full_stabilization_cancels_slow_motion,
    phase_corr_antisymmetric,
    ite_integer_composition_exact,
    peak_falls_with_noise,
    demons_identical_frames_zero_field,
    rse_length_and_row_clock,
    rse_recovers_tones_ite_misses,
    exposure_blur_attenuates,
    feature_length_fixed,
    feature_amplitude_scaling,
    features_deterministic,
    fusion_containment,
    error_rates_match_counting,
    ovo_order_invariant,
    normalization_affine_invariant,
    lattice_never_violated,
    detection_symmetric,
    full_mitigation_lowers_leakage,
    evaluation_deterministic,
    cli_errors_are_one_line,
];
