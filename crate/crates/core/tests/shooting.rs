use std::f64::consts::FRAC_PI_2;

use bifloc_core::activity::{classify, VerdictKind};
use bifloc_core::config::{ClassifyConfig, OrbitConfig, StepControl};
use bifloc_core::families::builtin;
use bifloc_core::orbit::find_cycle_newton;
use bifloc_core::shooting::{
    find_misiurewicz, find_truncation_parameters, shoot, verify_attracting_near_virtual, virtual_cycle_at,
    ShootTarget, ShootingProblem, DEDUP_TOL, DEFAULT_MAX_NEWTON,
};
use bifloc_core::sphere::SpherePoint;
use num_complex::Complex64;
use proptest::prelude::*;

fn c(re: f64, im: f64) -> Complex64 {
    Complex64::new(re, im)
}

fn quadratic_critical_orbit(lambda: Complex64, n: usize) -> Complex64 {
    (0..n).fold(Complex64::new(0.0, 0.0), |z, _| z * z + lambda)
}

fn assert_separated(points: &[Complex64]) {
    for (i, a) in points.iter().enumerate() {
        for b in &points[i + 1..] {
            assert!((a - b).norm() > DEDUP_TOL, "duplicates {a} and {b}");
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn quadratic_centers_re_evaluate(n in 1usize..6, a in -2.0..0.5f64, b in -1.2..1.2f64) {
        let fam = builtin("quadratic").unwrap();
        let problem = ShootingProblem::new(fam.as_ref(), 0, n, ShootTarget::Point(SpherePoint::Finite(c(0.0, 0.0))), c(a, b));
        if let Some(hit) = shoot(&problem, DEFAULT_MAX_NEWTON) {
            let z = quadratic_critical_orbit(hit.lambda_star, n);
            prop_assert!(z.norm() < 1e-9, "fⁿ(0) = {} at {}", z, hit.lambda_star);
        }
    }

    #[test]
    fn tangent_poles_re_evaluate(n in 1usize..3, a in -2.0..2.0f64, b in -2.0..2.0f64) {
        let fam = builtin("tangent").unwrap();
        let problem = ShootingProblem::new(fam.as_ref(), 0, n, ShootTarget::Pole, c(a, b));
        if let Some(hit) = shoot(&problem, DEFAULT_MAX_NEWTON) {
            let l = hit.lambda_star;
            // orbit of the asymptotic value iλ up to the point that should be a pole
            let mut w = Complex64::i() * l;
            for _ in 1..n {
                w = l * w.tan();
            }
            prop_assert!(w.cos().norm() < 1e-8 * (1.0 + w.norm()), "cos = {} at {}", w.cos(), l);
        }
    }

    #[test]
    fn exponential_preperiodic_re_evaluate(a in -1.0..3.0f64, b in -3.0..3.0f64) {
        let fam = builtin("exponential").unwrap();
        let cfg = OrbitConfig::default();
        let lambda0 = c(a, b);
        let Some(cycle) = find_cycle_newton(fam.as_ref(), lambda0, 1, SpherePoint::Finite(c(1.0, 1.0)), &cfg) else {
            return Ok(());
        };
        if !cycle.is_repelling() {
            return Ok(());
        }
        let target = ShootTarget::ContinuedCycle { cycle, lambda0, index: 0 };
        let problem = ShootingProblem::new(fam.as_ref(), 0, 2, target, lambda0 + c(0.05, 0.05));
        if let Some(hit) = shoot(&problem, DEFAULT_MAX_NEWTON) {
            let l = hit.lambda_star;
            let z2 = l * (l * Complex64::new(0.0, 0.0).exp()).exp();
            let fixed = l * z2.exp();
            prop_assert!((fixed - z2).norm() < 1e-8 * (1.0 + z2.norm()), "f³(0) = {} vs f²(0) = {} at {}", fixed, z2, l);
        }
    }
}

#[test]
fn misiurewicz_finds_are_active_and_distinct() {
    let fam = builtin("quadratic").unwrap();
    let cfg = OrbitConfig::default();
    let classify_cfg = ClassifyConfig::default();
    let mut total = 0;
    for (lambda0, radius, n, period, seed) in [
        (c(0.2, 0.95), 0.3, 2, 2, c(-1.0, 1.0)),
        (c(-1.9, 0.1), 0.25, 2, 1, c(2.0, 0.0)),
        (c(-0.1, 0.95), 0.1, 4, 1, c(-0.3, 0.55)),
    ] {
        let cycle = find_cycle_newton(fam.as_ref(), lambda0, period, SpherePoint::Finite(seed), &cfg)
            .filter(|c| c.is_repelling())
            .expect("repelling target cycle");
        let found =
            find_misiurewicz(fam.as_ref(), 0, lambda0, n, &cycle, radius, &StepControl::default(), 0).unwrap_or_default();
        assert_separated(&found);
        for &lambda in &found {
            assert!((lambda - lambda0).norm() <= radius + 1e-12);
            let v = classify(fam.as_ref(), 0, lambda, 1e-2, &classify_cfg).unwrap();
            assert_ne!(v.verdict.kind(), VerdictKind::Passive, "passive at {lambda}");
        }
        total += found.len();
    }
    assert!(total >= 3, "only {total} Misiurewicz parameters found");
}

#[test]
fn truncation_parameters_are_distinct_virtual_cycles() {
    let fam = builtin("tangent").unwrap();
    let records = find_truncation_parameters(fam.as_ref(), 0, c(0.0, -1.5), &[1, 2], 0.6, 0).unwrap();
    assert!(!records.is_empty());
    let lambdas: Vec<Complex64> = records.iter().map(|r| r.lambda_vc).collect();
    assert_separated(&lambdas);
    for r in &records {
        assert_eq!(r.chain.last(), Some(&SpherePoint::Infinity));
        assert!(r.chain[..r.chain.len() - 1].iter().all(|p| !p.is_infinite()));
    }
}

#[test]
fn virtual_confirmations_converge() {
    let fam = builtin("tangent").unwrap();
    let cfg = OrbitConfig::default();
    for lambda_vc in [c(0.0, -FRAC_PI_2), c(0.0, FRAC_PI_2), c(0.0, -3.0 * FRAC_PI_2)] {
        let vc = virtual_cycle_at(fam.as_ref(), 0, lambda_vc, 1).expect("virtual cycle");
        let entries = verify_attracting_near_virtual(fam.as_ref(), &vc, 4, &cfg).unwrap();
        assert!(entries.len() >= 3);
        let gaps: Vec<f64> = entries.iter().map(|e| (e.lambda - vc.lambda_vc).norm()).collect();
        assert!(gaps.windows(2).all(|w| w[1] < w[0]), "{gaps:?}");
        assert!(entries.windows(2).all(|w| w[1].multiplier_modulus < w[0].multiplier_modulus));
    }
}
