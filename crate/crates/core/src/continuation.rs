//! Numerical holomorphic motions.
//!
//! Repelling cycles and finite backward orbits are followed along paths in
//! parameter space with a secant predictor and a Newton corrector. A trace
//! stops early when the motion breaks down: the multiplier reaches the unit
//! circle, the corrector cannot converge even with tiny steps, or two moving
//! points collide.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::activity::{classify, ActivityVerdict, Verdict};
use crate::config::{ClassifyConfig, OrbitConfig, StepControl};
use crate::error::{Error, Result};
use crate::families::{singular_value, Family};
use crate::orbit::{
    cycle_through, find_cycle_newton, iterate_with_derivative, newton_periodic, CycleRecord,
};
use crate::sphere::{chordal_distance, complex_json, SpherePoint};

/// Largest chordal jump accepted between predictor and corrector.
const MAX_JUMP: f64 = 0.1;
const PREIMAGE_NEWTON_ITER: usize = 50;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum AbortReason {
    MultiplierCrossed,
    NewtonFailed,
    SingularCollision,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind")]
pub enum TraceStatus {
    Completed,
    Aborted {
        reason: AbortReason,
        #[serde(with = "complex_json")]
        at_lambda: Complex64,
    },
}

impl TraceStatus {
    pub fn is_completed(&self) -> bool {
        matches!(self, TraceStatus::Completed)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrackedSample {
    #[serde(with = "complex_json")]
    pub lambda: Complex64,
    pub z: SpherePoint,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrackedPoint {
    /// Index of the tracked point this one maps to, for backward orbits.
    pub parent: Option<usize>,
    pub depth: usize,
    pub samples: Vec<TrackedSample>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MotionTrace {
    /// Accepted parameter samples, in order.
    #[serde(with = "complex_json::vec")]
    pub path: Vec<Complex64>,
    pub tracked: Vec<TrackedPoint>,
    /// Multiplier of the moving cycle at each accepted sample.
    #[serde(with = "complex_json::vec")]
    pub multipliers: Vec<Complex64>,
    pub period: usize,
    pub status: TraceStatus,
}

impl MotionTrace {
    /// Final position of each tracked point.
    pub fn endpoints(&self) -> Vec<SpherePoint> {
        self.tracked.iter().map(|t| t.samples.last().map(|s| s.z).unwrap_or(SpherePoint::Infinity)).collect()
    }

    pub fn last_lambda(&self) -> Option<Complex64> {
        self.path.last().copied()
    }
}

/// Walks a polyline of waypoints with adaptive steps. `solve` receives the
/// trial parameter and the predicted state and returns the corrected state
/// or `None`; `accept` inspects a corrected state and may abort the trace.
struct Stepper<'a> {
    ctl: &'a StepControl,
}

enum StepOutcome<S> {
    Completed,
    Aborted(AbortReason, Complex64, Option<S>),
}

impl<'a> Stepper<'a> {
    fn run<S: Clone>(
        &self,
        waypoints: &[Complex64],
        initial: S,
        mut predict: impl FnMut(&S, Option<(&S, Complex64)>, Complex64, Complex64) -> S,
        mut solve: impl FnMut(Complex64, &S, &S) -> Option<S>,
        mut accept: impl FnMut(Complex64, &S) -> Option<AbortReason>,
        mut record: impl FnMut(Complex64, &S),
    ) -> StepOutcome<S> {
        let mut lambda = waypoints[0];
        let mut state = initial;
        let mut prev: Option<(S, Complex64)> = None;
        let mut h = self.ctl.max_step;
        for &target in &waypoints[1..] {
            let mut halvings = 0;
            while lambda != target {
                let remaining = (target - lambda).norm();
                let trial = if remaining <= h { target } else { lambda + (target - lambda) * (h / remaining) };
                let predicted = predict(&state, prev.as_ref().map(|(s, l)| (s, *l)), lambda, trial);
                match solve(trial, &predicted, &state) {
                    Some(next) => {
                        prev = Some((state, lambda));
                        state = next;
                        lambda = trial;
                        record(lambda, &state);
                        if let Some(reason) = accept(lambda, &state) {
                            return StepOutcome::Aborted(reason, lambda, Some(state));
                        }
                        halvings = 0;
                        h = (h * self.ctl.shrink_factor).min(self.ctl.max_step);
                    }
                    None => {
                        halvings += 1;
                        if halvings > self.ctl.max_halvings {
                            return StepOutcome::Aborted(AbortReason::NewtonFailed, trial, None);
                        }
                        h /= self.ctl.shrink_factor;
                    }
                }
            }
        }
        StepOutcome::Completed
    }
}

fn secant(z: Complex64, prev: Option<(Complex64, Complex64)>, lambda: Complex64, trial: Complex64) -> Complex64 {
    match prev {
        Some((zp, lp)) if lp != lambda => {
            let pred = z + (z - zp) / (lambda - lp) * (trial - lambda);
            if pred.re.is_finite() && pred.im.is_finite() {
                pred
            } else {
                z
            }
        }
        _ => z,
    }
}

fn finite_points(cycle: &CycleRecord) -> Option<Vec<Complex64>> {
    cycle.points.iter().map(|p| p.finite()).collect()
}

/// First iterates of every singular orbit at `lambda`.
fn singular_orbit_points(fam: &dyn Family, lambda: Complex64, len: usize) -> Vec<Complex64> {
    let mut out = Vec::new();
    for sv in fam.singular_values() {
        let Some(mut z) = sv.value(lambda).finite() else { continue };
        for _ in 0..len {
            out.push(z);
            if fam.nearest_pole(lambda, z).is_some_and(|p| (p - z).norm() < 1e-12) {
                break;
            }
            z = fam.eval_raw(lambda, z);
            if !(z.re.is_finite() && z.im.is_finite()) {
                break;
            }
        }
    }
    out
}

#[derive(Clone)]
struct CycleState {
    z: Complex64,
    cycle: CycleRecord,
}

/// Continues a repelling cycle along the polyline `path`.
pub fn continue_cycle(
    fam: &dyn Family,
    cycle0: &CycleRecord,
    path: &[Complex64],
    ctl: &StepControl,
) -> Result<MotionTrace> {
    if path.is_empty() {
        return Err(Error::InvalidArgument("empty parameter path".into()));
    }
    if !cycle0.is_repelling() || cycle0.multiplier_modulus() <= 1.0 + ctl.stability_margin {
        return Err(Error::NotRepelling(cycle0.multiplier_modulus()));
    }
    let pts = finite_points(cycle0)
        .ok_or_else(|| Error::InvalidArgument("cannot continue a cycle through infinity".into()))?;
    let period = cycle0.period;

    let mut trace = MotionTrace {
        path: vec![path[0]],
        tracked: pts
            .iter()
            .map(|&z| TrackedPoint {
                parent: None,
                depth: 0,
                samples: vec![TrackedSample { lambda: path[0], z: SpherePoint::Finite(z) }],
            })
            .collect(),
        multipliers: vec![cycle0.multiplier.finite().unwrap_or(Complex64::new(f64::INFINITY, 0.0))],
        period,
        status: TraceStatus::Completed,
    };

    let stepper = Stepper { ctl };
    let outcome = stepper.run(
        path,
        CycleState { z: pts[0], cycle: cycle0.clone() },
        |s, prev, l, t| CycleState { z: secant(s.z, prev.map(|(p, lp)| (p.z, lp)), l, t), cycle: s.cycle.clone() },
        |trial, pred, cur| {
            let refined = newton_periodic(fam, trial, period, SpherePoint::Finite(pred.z))?.finite()?;
            if chordal_distance(SpherePoint::Finite(refined), SpherePoint::Finite(cur.z)) > MAX_JUMP {
                return None;
            }
            let cycle = cycle_through(fam, trial, SpherePoint::Finite(refined), period, ctl.stability_margin)?;
            // the moving cycle must keep its minimal period
            let pts = finite_points(&cycle)?;
            for i in 0..pts.len() {
                for j in i + 1..pts.len() {
                    if chordal_distance(SpherePoint::Finite(pts[i]), SpherePoint::Finite(pts[j])) < ctl.collision_tol {
                        return None;
                    }
                }
            }
            Some(CycleState { z: refined, cycle })
        },
        |lambda, s| {
            if s.cycle.multiplier_modulus() <= 1.0 + ctl.stability_margin {
                return Some(AbortReason::MultiplierCrossed);
            }
            if ctl.check_singular_orbits {
                let orbit = singular_orbit_points(fam, lambda, ctl.singular_orbit_len);
                let hit = s.cycle.points.iter().any(|&p| {
                    orbit.iter().any(|&o| chordal_distance(p, SpherePoint::Finite(o)) < ctl.collision_tol)
                });
                if hit {
                    return Some(AbortReason::SingularCollision);
                }
            }
            None
        },
        |lambda, s| {
            trace.path.push(lambda);
            trace.multipliers.push(s.cycle.multiplier.finite().unwrap_or(Complex64::new(f64::INFINITY, 0.0)));
            for (t, &p) in trace.tracked.iter_mut().zip(&s.cycle.points) {
                t.samples.push(TrackedSample { lambda, z: p });
            }
        },
    );
    if let StepOutcome::Aborted(reason, at_lambda, _) = outcome {
        trace.status = TraceStatus::Aborted { reason, at_lambda };
    }
    Ok(trace)
}

/// Newton on `f_λ(z) = w` from `seed`.
fn newton_preimage(fam: &dyn Family, lambda: Complex64, w: Complex64, seed: Complex64) -> Option<Complex64> {
    let mut z = seed;
    for _ in 0..PREIMAGE_NEWTON_ITER {
        let (fz, d) = iterate_with_derivative(fam, lambda, z, 1)?;
        let g = fz - w;
        if g.norm() <= 1e-13 * w.norm().max(1.0) {
            return Some(z);
        }
        let step = g / d;
        if !(step.re.is_finite() && step.im.is_finite()) {
            return None;
        }
        z -= step;
    }
    None
}

#[derive(Clone)]
struct TreeState {
    points: Vec<Complex64>,
    base_multiplier: Complex64,
}

/// Continues the base cycle point and the tree of its preimages up to
/// `depth` along `path`. Preimages that coincide with an already tracked
/// point (for instance the base itself, when it is fixed) are dropped.
pub fn continue_backward_orbit(
    fam: &dyn Family,
    lambda0: Complex64,
    base: SpherePoint,
    depth: usize,
    path: &[Complex64],
    ctl: &StepControl,
    orbit_cfg: &OrbitConfig,
    branch_bound: i64,
) -> Result<MotionTrace> {
    let branches = fam.branch_indices(branch_bound);
    if branches.is_empty() {
        return Err(Error::MissingInverse(fam.id().to_string()));
    }
    let base_z = base
        .finite()
        .ok_or_else(|| Error::InvalidArgument("base point must be finite".into()))?;
    let period = (1..=orbit_cfg.max_period)
        .find(|&p| {
            iterate_with_derivative(fam, lambda0, base_z, p)
                .is_some_and(|(w, _)| chordal_distance(SpherePoint::Finite(w), base) < 1e-9)
        })
        .ok_or_else(|| Error::InvalidArgument(format!("{base} is not periodic at {lambda0}")))?;
    let cycle = find_cycle_newton(fam, lambda0, period, base, orbit_cfg)
        .ok_or_else(|| Error::InvalidArgument(format!("cannot refine the cycle through {base}")))?;
    if !cycle.is_repelling() {
        return Err(Error::NotRepelling(cycle.multiplier_modulus()));
    }
    let base_z = cycle.points[0].finite().expect("finite base");

    let mut path_full = vec![lambda0];
    path_full.extend(path.iter().copied().skip_while(|&l| l == lambda0));

    // the preimage tree at lambda0
    let mut parents: Vec<Option<usize>> = vec![None];
    let mut depths = vec![0];
    let mut points = vec![base_z];
    let mut level_start = 0;
    for level in 1..=depth {
        let level_end = points.len();
        for idx in level_start..level_end {
            for &k in &branches {
                let Some(pre) = fam.inverse_branch(lambda0, SpherePoint::Finite(points[idx]), k).and_then(|p| p.finite())
                else {
                    continue;
                };
                let duplicate = points
                    .iter()
                    .any(|&q| chordal_distance(SpherePoint::Finite(q), SpherePoint::Finite(pre)) < ctl.collision_tol);
                if !duplicate {
                    points.push(pre);
                    parents.push(Some(idx));
                    depths.push(level);
                }
            }
        }
        level_start = level_end;
    }

    let mut trace = MotionTrace {
        path: vec![lambda0],
        tracked: points
            .iter()
            .zip(parents.iter().zip(&depths))
            .map(|(&z, (&parent, &depth))| TrackedPoint {
                parent,
                depth,
                samples: vec![TrackedSample { lambda: lambda0, z: SpherePoint::Finite(z) }],
            })
            .collect(),
        multipliers: vec![cycle.multiplier.finite().unwrap_or(Complex64::new(f64::INFINITY, 0.0))],
        period,
        status: TraceStatus::Completed,
    };
    if path_full.len() < 2 {
        return Ok(trace);
    }

    let stepper = Stepper { ctl };
    let outcome = stepper.run(
        &path_full,
        TreeState { points: points.clone(), base_multiplier: trace.multipliers[0] },
        |s, prev, l, t| TreeState {
            points: s
                .points
                .iter()
                .enumerate()
                .map(|(i, &z)| secant(z, prev.map(|(p, lp)| (p.points[i], lp)), l, t))
                .collect(),
            base_multiplier: s.base_multiplier,
        },
        |trial, pred, cur| {
            let base = newton_periodic(fam, trial, period, SpherePoint::Finite(pred.points[0]))?.finite()?;
            if chordal_distance(SpherePoint::Finite(base), SpherePoint::Finite(cur.points[0])) > MAX_JUMP {
                return None;
            }
            let (_, rho) = iterate_with_derivative(fam, trial, base, period)?;
            let mut next = vec![base];
            for i in 1..pred.points.len() {
                let parent = next[parents[i].expect("non-root has a parent")];
                let z = newton_preimage(fam, trial, parent, pred.points[i])?;
                if chordal_distance(SpherePoint::Finite(z), SpherePoint::Finite(cur.points[i])) > MAX_JUMP {
                    return None;
                }
                next.push(z);
            }
            Some(TreeState { points: next, base_multiplier: rho })
        },
        |_, s| {
            if s.base_multiplier.norm() <= 1.0 + ctl.stability_margin {
                return Some(AbortReason::MultiplierCrossed);
            }
            let n = s.points.len();
            for i in 0..n {
                for j in i + 1..n {
                    let d = chordal_distance(SpherePoint::Finite(s.points[i]), SpherePoint::Finite(s.points[j]));
                    if d < ctl.collision_tol {
                        return Some(AbortReason::SingularCollision);
                    }
                }
            }
            None
        },
        |lambda, s| {
            trace.path.push(lambda);
            trace.multipliers.push(s.base_multiplier);
            for (t, &z) in trace.tracked.iter_mut().zip(&s.points) {
                t.samples.push(TrackedSample { lambda, z: SpherePoint::Finite(z) });
            }
        },
    );
    if let StepOutcome::Aborted(reason, at_lambda, _) = outcome {
        trace.status = TraceStatus::Aborted { reason, at_lambda };
    }
    Ok(trace)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProbeConfig {
    pub step: StepControl,
    pub classify: ClassifyConfig,
    /// Vertices used to approximate the probe circle.
    pub circle_vertices: usize,
}

impl Default for ProbeConfig {
    fn default() -> Self {
        ProbeConfig { step: StepControl::default(), classify: ClassifyConfig::default(), circle_vertices: 64 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind")]
pub enum ProbeWitness {
    Trace {
        path: String,
        status: TraceStatus,
    },
    Activity {
        sv_index: usize,
        verdict: ActivityVerdict,
    },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProbeReport {
    pub stable: bool,
    pub reference_cycle: CycleRecord,
    pub witness: Option<ProbeWitness>,
}

/// A repelling cycle of low period at `lambda`, found from a fixed grid of seeds.
pub fn reference_cycle(fam: &dyn Family, lambda: Complex64, cfg: &OrbitConfig) -> Option<CycleRecord> {
    let seeds: Vec<Complex64> = (-6..=6)
        .flat_map(|i| (-6..=6).map(move |j| Complex64::new(0.5 * i as f64 + 0.05, 0.5 * j as f64 + 0.03)))
        .collect();
    for period in 1..=4 {
        for &seed in &seeds {
            if let Some(c) = find_cycle_newton(fam, lambda, period, SpherePoint::Finite(seed), cfg) {
                if c.multiplier_modulus() > 1.01 && c.multiplier_modulus().is_finite() && !c.at_infinity() {
                    return Some(c);
                }
            }
        }
    }
    None
}

/// Tests J-stability near `lambda0`: a reference repelling cycle must move
/// around the circle of the given radius and along two diameters, and every
/// singular value must be classified passive on the same disk.
pub fn stability_probe(
    fam: &dyn Family,
    lambda0: Complex64,
    radius: f64,
    cfg: &ProbeConfig,
) -> Result<ProbeReport> {
    if !(radius > 0.0) {
        return Err(Error::InvalidArgument("radius must be positive".into()));
    }
    let cycle = reference_cycle(fam, lambda0, &cfg.classify.orbit).ok_or(Error::NoReferenceCycle)?;

    let i = Complex64::i();
    let n = cfg.circle_vertices.max(8);
    let mut circle = vec![lambda0];
    circle.extend((0..=n).map(|k| {
        let theta = 2.0 * std::f64::consts::PI * k as f64 / n as f64;
        lambda0 + radius * Complex64::from_polar(1.0, theta)
    }));
    let paths = [
        ("circle", circle),
        ("real-diameter", vec![lambda0, lambda0 - radius, lambda0 + radius]),
        ("imaginary-diameter", vec![lambda0, lambda0 - i * radius, lambda0 + i * radius]),
    ];
    for (name, path) in paths {
        let trace = continue_cycle(fam, &cycle, &path, &cfg.step)?;
        if !trace.status.is_completed() {
            return Ok(ProbeReport {
                stable: false,
                reference_cycle: cycle,
                witness: Some(ProbeWitness::Trace { path: name.to_string(), status: trace.status }),
            });
        }
    }
    for sv_index in 0..fam.singular_values().len() {
        singular_value(fam, sv_index)?;
        let verdict = classify(fam, sv_index, lambda0, radius, &cfg.classify)?;
        if !matches!(verdict.verdict, Verdict::Passive { .. }) {
            return Ok(ProbeReport {
                stable: false,
                reference_cycle: cycle,
                witness: Some(ProbeWitness::Activity { sv_index, verdict }),
            });
        }
    }
    Ok(ProbeReport { stable: true, reference_cycle: cycle, witness: None })
}
