use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use slowfast::allee::{normal_form_coeffs, AlleeParams};
use slowfast::blowup::{fit_l1_extended, random_record};
use slowfast::normalform::{analyze, omega_coefficients, HopfClass, NormalFormCoefficients};
use slowfast::suite::{run_oracles, SuiteOptions};

#[test]
fn model_omega2_includes_quartic_term() {
    let nf = normal_form_coeffs(&AlleeParams::EXAMPLE_2).unwrap();
    let fit = fit_l1_extended(&nf.coeffs, nf.h2_quadratic).unwrap();
    let corrected = nf.omega2_corrected();
    assert!((fit.omega2() - corrected).abs() < 1e-3 * corrected.abs());
    let (_, plain) = omega_coefficients(&nf.coeffs);
    assert!((fit.omega2() - plain).abs() > 0.1);
}

#[test]
fn canonical_record_has_vanishing_coefficients() {
    let h = analyze(&NormalFormCoefficients::default()).unwrap();
    assert_eq!(h.omega1, 0.0);
    assert_eq!(h.omega2, 0.0);
    assert_eq!(h.classification, HopfClass::Undetermined);
}

#[test]
fn oracle_suite_is_deterministic_and_passes() {
    let o = SuiteOptions { seed: 11, ..Default::default() };
    let a = run_oracles(&o);
    let b = run_oracles(&o);
    assert_eq!(a, b);
    assert!(a.iter().all(|c| c.passed), "{a:?}");
}

#[test]
fn perturbed_omega2_is_flagged() {
    let o = SuiteOptions { seed: 11, omega2_offset: 0.5 };
    let out = run_oracles(&o);
    let c2 = out.iter().find(|c| c.id == 2).unwrap();
    assert!(!c2.passed);
    assert!(out.iter().filter(|c| c.id != 2).all(|c| c.passed));
}

#[test]
fn random_records_are_reproducible() {
    let a = random_record(&mut ChaCha8Rng::seed_from_u64(3), true);
    let b = random_record(&mut ChaCha8Rng::seed_from_u64(3), true);
    assert_eq!(a, b);
    assert!(omega_coefficients(&a).0.abs() < 1e-12);
}
