use bifloc_core::config::OrbitConfig;
use bifloc_core::families::{advance, builtin, singular_value, EvalPolicy, Family};
use bifloc_core::orbit::{find_cycle_newton, iterate_orbit, multiplier_from, OrbitFate};
use bifloc_core::sphere::{chordal_distance, SpherePoint};
use num_complex::Complex64;
use proptest::prelude::*;

fn c(re: f64, im: f64) -> Complex64 {
    Complex64::new(re, im)
}

fn family_and_lambda() -> impl Strategy<Value = (&'static str, Complex64)> {
    prop_oneof![
        (-2.0..0.6f64, -1.2..1.2f64).prop_map(|(a, b)| ("quadratic", c(a, b))),
        (-1.5..1.5f64, -1.2..1.2f64).prop_map(|(a, b)| ("quadratic-conjugated", c(a, b))),
        (-1.5..1.5f64, -1.5..1.5f64).prop_map(|(a, b)| ("exponential", c(a, b))),
        (-1.5..1.5f64, -1.5..1.5f64).prop_map(|(a, b)| ("tangent", c(a, b))),
    ]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn stored_transitions_replay((id, lambda) in family_and_lambda()) {
        let fam = builtin(id).unwrap();
        let cfg = OrbitConfig { max_iter: 300, ..OrbitConfig::default() };
        let start = singular_value(fam.as_ref(), 0).unwrap().value(lambda);
        let Ok(rec) = iterate_orbit(fam.as_ref(), lambda, start, &cfg) else { return Ok(()); };
        let policy = EvalPolicy::from(&cfg);
        for w in rec.points.windows(2) {
            if w[0].is_infinite() && !fam.domain().infinity_in_domain {
                break;
            }
            let next = advance(fam.as_ref(), lambda, w[0], policy).unwrap();
            prop_assert!(chordal_distance(next, w[1]) < 1e-12, "{:?} -> {:?} vs {:?}", w[0], next, w[1]);
        }
    }

    #[test]
    fn decided_fates_survive_more_iterations((id, lambda) in family_and_lambda()) {
        let fam = builtin(id).unwrap();
        let short = OrbitConfig { max_iter: 150, ..OrbitConfig::default() };
        let long = OrbitConfig { max_iter: 1200, ..OrbitConfig::default() };
        let start = singular_value(fam.as_ref(), 0).unwrap().value(lambda);
        let (Ok(a), Ok(b)) = (iterate_orbit(fam.as_ref(), lambda, start, &short), iterate_orbit(fam.as_ref(), lambda, start, &long)) else {
            return Ok(());
        };
        if a.fate.is_decided() {
            prop_assert_eq!(a.fate.code(), b.fate.code());
            if let (Some(ca), Some(cb)) = (a.fate.captured_cycle(), b.fate.captured_cycle()) {
                prop_assert_eq!(ca.period, cb.period);
                prop_assert!(ca.set_distance(cb) < 1e-6);
            }
        }
    }

    #[test]
    fn detected_cycles_are_newton_fixed((id, lambda) in family_and_lambda()) {
        let fam = builtin(id).unwrap();
        let cfg = OrbitConfig::default();
        let start = singular_value(fam.as_ref(), 0).unwrap().value(lambda);
        let Ok(rec) = iterate_orbit(fam.as_ref(), lambda, start, &cfg) else { return Ok(()); };
        let OrbitFate::Captured { cycle, .. } = &rec.fate else { return Ok(()); };
        if cycle.at_infinity() {
            return Ok(());
        }
        for &p in &cycle.points {
            let again = find_cycle_newton(fam.as_ref(), lambda, cycle.period, p, &cfg);
            prop_assert!(again.is_some(), "no Newton cycle from {:?}", p);
            prop_assert!(again.unwrap().set_distance(cycle) < 1e-9);
        }
    }

    #[test]
    fn multiplier_independent_of_start_point(
        a in -1.5..0.3f64,
        b in -1.0..1.0f64,
        period in 1usize..5,
        sx in -2.0..2.0f64,
        sy in -2.0..2.0f64,
    ) {
        let fam = builtin("quadratic").unwrap();
        let lambda = c(a, b);
        let cfg = OrbitConfig::default();
        let Some(cycle) = find_cycle_newton(fam.as_ref(), lambda, period, SpherePoint::Finite(c(sx, sy)), &cfg) else {
            return Ok(());
        };
        let rho = cycle.multiplier.finite().unwrap();
        for k in 0..cycle.period {
            let other = multiplier_from(fam.as_ref(), lambda, &cycle, k).finite().unwrap();
            prop_assert!((other - rho).norm() <= 1e-9 * rho.norm().max(1.0), "{} vs {}", other, rho);
        }
    }
}

#[test]
fn quadratic_two_cycle_multiplier_closed_form() {
    let fam = builtin("quadratic").unwrap();
    let cfg = OrbitConfig::default();
    for lambda in [c(-1.0, 0.0), c(0.0, 1.0), c(-0.5, 0.5), c(1.0, 1.0)] {
        let fam: &dyn Family = fam.as_ref();
        let seed = SpherePoint::Finite(c(-0.5, 0.0) + (-0.75 - lambda).sqrt());
        let cycle = find_cycle_newton(fam, lambda, 2, seed, &cfg).unwrap();
        let expected = 4.0 * (lambda + 1.0);
        assert!((cycle.multiplier.finite().unwrap() - expected).norm() < 1e-9);
    }
}
