use bifloc_core::config::{OrbitConfig, StepControl};
use bifloc_core::continuation::{continue_backward_orbit, continue_cycle, MotionTrace};
use bifloc_core::families::{builtin, evaluate_with, EvalPolicy};
use bifloc_core::orbit::{find_cycle_newton, CycleRecord};
use bifloc_core::sphere::{chordal_distance, SpherePoint};
use num_complex::Complex64;
use proptest::prelude::*;

fn c(re: f64, im: f64) -> Complex64 {
    Complex64::new(re, im)
}

fn beta(lambda: Complex64) -> Complex64 {
    (1.0 + (1.0 - 4.0 * lambda).sqrt()) / 2.0
}

/// Polyline of 2–4 waypoints inside the disk of radius `r` about `center`.
fn path_in_disk(center: Complex64, r: f64) -> impl Strategy<Value = Vec<Complex64>> {
    prop::collection::vec((0.0..1.0f64, 0.0..std::f64::consts::TAU), 2..5).prop_map(move |pts| {
        pts.into_iter().map(|(s, t)| center + Complex64::from_polar(r * s.sqrt(), t)).collect()
    })
}

fn final_cycle(trace: &MotionTrace, template: &CycleRecord) -> CycleRecord {
    CycleRecord { points: trace.endpoints(), ..template.clone() }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn beta_matches_closed_form(path in path_in_disk(c(0.0, 0.0), 0.2)) {
        let fam = builtin("quadratic").unwrap();
        let cfg = OrbitConfig::default();
        let cycle = find_cycle_newton(fam.as_ref(), path[0], 1, SpherePoint::Finite(beta(path[0])), &cfg).unwrap();
        let trace = continue_cycle(fam.as_ref(), &cycle, &path, &StepControl::default()).unwrap();
        prop_assert!(trace.status.is_completed());
        for s in &trace.tracked[0].samples {
            let z = s.z.finite().unwrap();
            prop_assert!((z - beta(s.lambda)).norm() < 1e-9, "{} at {}", z, s.lambda);
        }
    }

    #[test]
    fn reversed_path_returns_home(path in path_in_disk(c(-1.0, 0.0), 0.2), seed_angle in 0.0..std::f64::consts::TAU) {
        let fam = builtin("quadratic").unwrap();
        let cfg = OrbitConfig::default();
        let ctl = StepControl::default();
        let seed = SpherePoint::Finite(Complex64::from_polar(1.8, seed_angle));
        let Some(cycle) = find_cycle_newton(fam.as_ref(), path[0], 1, seed, &cfg).filter(|c| c.is_repelling()) else {
            return Ok(());
        };
        let forward = continue_cycle(fam.as_ref(), &cycle, &path, &ctl).unwrap();
        prop_assume!(forward.status.is_completed());
        let mut back_path = path.clone();
        back_path.reverse();
        let back = continue_cycle(fam.as_ref(), &final_cycle(&forward, &cycle), &back_path, &ctl).unwrap();
        prop_assert!(back.status.is_completed());
        for (a, b) in back.endpoints().iter().zip(&cycle.points) {
            prop_assert!(chordal_distance(*a, *b) < 1e-8);
        }
    }

    #[test]
    fn period_is_preserved(
        path in path_in_disk(c(0.0, 0.0), 0.2),
        period in 2usize..5,
        sx in -1.6..1.6f64,
        sy in -1.6..1.6f64,
    ) {
        let fam = builtin("quadratic").unwrap();
        let cfg = OrbitConfig::default();
        let Some(cycle) = find_cycle_newton(fam.as_ref(), path[0], period, SpherePoint::Finite(c(sx, sy)), &cfg)
            .filter(|c| c.is_repelling())
        else {
            return Ok(());
        };
        let trace = continue_cycle(fam.as_ref(), &cycle, &path, &StepControl::default()).unwrap();
        prop_assert_eq!(trace.period, period);
        if trace.status.is_completed() {
            for s in &trace.tracked[0].samples {
                let again = find_cycle_newton(fam.as_ref(), s.lambda, period, s.z, &cfg);
                prop_assert!(again.is_some(), "period changed at {}", s.lambda);
            }
        }
    }

    #[test]
    fn backward_tree_respects_dynamics(path in path_in_disk(c(0.0, 0.0), 0.15), depth in 1usize..4) {
        let fam = builtin("quadratic").unwrap();
        let cfg = OrbitConfig::default();
        let base = SpherePoint::Finite(beta(path[0]));
        let trace = continue_backward_orbit(fam.as_ref(), path[0], base, depth, &path, &StepControl::default(), &cfg, 4)
            .unwrap();
        prop_assume!(trace.status.is_completed());
        let policy = EvalPolicy::from(&cfg);
        for t in &trace.tracked {
            let Some(parent) = t.parent else { continue };
            let parent = &trace.tracked[parent];
            prop_assert_eq!(t.samples.len(), parent.samples.len());
            for (child, up) in t.samples.iter().zip(&parent.samples) {
                prop_assert_eq!(child.lambda, up.lambda);
                let image = evaluate_with(fam.as_ref(), child.lambda, child.z, policy).unwrap();
                prop_assert!(chordal_distance(image, up.z) < 1e-9);
            }
        }
    }
}

#[test]
fn exponential_backward_tree_respects_dynamics() {
    let fam = builtin("exponential").unwrap();
    let cfg = OrbitConfig::default();
    let lambda0 = c(0.2, 0.0);
    let fixed = find_cycle_newton(fam.as_ref(), lambda0, 1, SpherePoint::Finite(c(2.0, 7.0)), &cfg)
        .filter(|c| c.is_repelling())
        .expect("repelling fixed point");
    let path = [lambda0, c(0.25, 0.05), c(0.2, 0.1)];
    let trace =
        continue_backward_orbit(fam.as_ref(), lambda0, fixed.points[0], 2, &path, &StepControl::default(), &cfg, 1)
            .unwrap();
    assert!(trace.status.is_completed(), "{:?}", trace.status);
    assert!(trace.tracked.len() > 3);
    let policy = EvalPolicy::from(&cfg);
    for t in &trace.tracked {
        let Some(parent) = t.parent else { continue };
        for (child, up) in t.samples.iter().zip(&trace.tracked[parent].samples) {
            let image = evaluate_with(fam.as_ref(), child.lambda, child.z, policy).unwrap();
            assert!(chordal_distance(image, up.z) < 1e-9);
        }
    }
}
