use layerstrip::dataset::{synthesize, FactorMode, ForwardConfig};
use layerstrip::inversion::{layer_strip_driver, DriverConfig, InversionError, Stage};
use layerstrip::synth::{compare, EnergyKind, SynthOptions, SyntheticCase};
use num_complex::Complex64;

fn run(seed: u64, n: usize, opts: &SynthOptions) -> (SyntheticCase, layerstrip::inversion::RecoveryReport) {
    let case = SyntheticCase::generate(seed, n, opts).unwrap();
    let cfg = ForwardConfig::new(case.energies.clone());
    let ds = synthesize(&case.patch1, Some(&case.patch2), &cfg).unwrap();
    let report = layer_strip_driver(&ds, &DriverConfig::default()).unwrap();
    (case, report)
}

#[test]
fn random_cases_recover_all_jets() {
    for seed in 0..25u64 {
        let n = 1 + (seed % 3) as usize;
        let (case, report) = run(seed, n, &SynthOptions::default());
        let err = compare(&report, &case.truth);
        assert!(err.zeroth_order() <= 1e-8, "seed {seed}: {err:?}");
        assert!(err.first_order() <= 1e-8, "seed {seed}: {err:?}");
        let unknowns = n * (n + 1) / 2 + 1;
        assert_eq!(report.design_rank, Some(unknowns), "seed {seed}");
    }
}

#[test]
fn imaginary_energies_leave_identity_direction_in_kernel() {
    let opts = SynthOptions {
        energy_kind: EnergyKind::Imaginary,
        ..SynthOptions::default()
    };
    let (case, report) = run(5, 2, &opts);
    let err = compare(&report, &case.truth);
    assert!(err.zeroth_order() <= 1e-8, "{err:?}");
    for f in &report.first_order {
        assert_eq!(f.recovery.design_rank, 3);
        assert!(f.recovery.identity_direction_gain < 1e-10);
    }
}

#[test]
fn single_energy_with_known_alpha() {
    let case = SyntheticCase::generate(9, 2, &SynthOptions::default()).unwrap();
    let cfg = ForwardConfig::new(vec![case.energies[0]]);
    let ds = synthesize(&case.patch1, None, &cfg).unwrap();

    let bare = layer_strip_driver(&ds, &DriverConfig::default()).unwrap();
    assert!(bare.v0.is_none());
    assert!(bare.stages.iter().any(|s| s.status.starts_with("skipped")));
    let h0_err = bare.h0.iter().zip(&case.truth.h0).map(|(a, b)| (a - b).amax()).fold(0.0, f64::max);
    assert!(h0_err < 1e-8);

    let alpha: Vec<f64> = case.truth.alpha_sq.iter().map(|a| a.sqrt()).collect();
    let known = layer_strip_driver(
        &ds,
        &DriverConfig {
            alpha_known: Some(alpha),
            ..DriverConfig::default()
        },
    )
    .unwrap();
    let v0 = known.v0.unwrap();
    for (a, b) in v0.iter().zip(&case.truth.v0) {
        assert!((a - b).abs() < 1e-8);
    }
}

#[test]
fn inadmissible_energy_is_refused() {
    let case = SyntheticCase::generate(1, 1, &SynthOptions::default()).unwrap();
    let mut cfg = ForwardConfig::new(case.energies.clone());
    cfg.user_excluded = vec![case.energies[1].lambda()];
    let ds = synthesize(&case.patch1, None, &cfg).unwrap();
    let err = layer_strip_driver(&ds, &DriverConfig::default()).unwrap_err();
    match &err {
        InversionError::Stage { stage, source, .. } => {
            assert_eq!(*stage, Stage::Admissibility);
            assert!(source.to_string().contains("user-excluded (D)"), "{source}");
        }
        other => panic!("unexpected {other}"),
    }
}

#[test]
fn scaling_all_symbols_keeps_sigma_and_shows_in_metric_stage() {
    let case = SyntheticCase::generate(4, 2, &SynthOptions::default()).unwrap();
    let ds = synthesize(&case.patch1, None, &ForwardConfig::new(case.energies.clone())).unwrap();
    let clean = layer_strip_driver(&ds, &DriverConfig::default()).unwrap();
    let mut scaled = ds.clone();
    for s in &mut scaled.symbols {
        s.value *= Complex64::new(1.7, 0.0);
    }
    let report = layer_strip_driver(&scaled, &DriverConfig::default()).unwrap();
    for (a, b) in report.sigma.iter().flatten().zip(clean.sigma.iter().flatten()) {
        assert!((a - b).norm() < 1e-10);
    }
    assert!(clean.residuals.h0_energy_mismatch < 1e-10);
    assert!(report.residuals.h0_energy_mismatch > 1e-3, "{:?}", report.residuals);
}

#[test]
fn dataset_json_round_trip_is_lossless() {
    let case = SyntheticCase::generate(2, 2, &SynthOptions::default()).unwrap();
    let mut cfg = ForwardConfig::new(case.energies.clone());
    cfg.factors = FactorMode::Injected {
        t1: Complex64::new(0.8, 0.1),
        t2: Complex64::new(1.3, -0.2),
    };
    let ds = synthesize(&case.patch1, Some(&case.patch2), &cfg).unwrap();
    let text = serde_json::to_string(&ds).unwrap();
    let back: layerstrip::dataset::SymbolDataset = serde_json::from_str(&text).unwrap();
    assert_eq!(back, ds);
}
