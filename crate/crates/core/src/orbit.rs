//! Forward orbits of singular values, their fates, and periodic cycles.

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::config::OrbitConfig;
use crate::error::{Error, Result};
use crate::families::{advance, EvalPolicy, Family};
use crate::sphere::{chordal_distance, complex_json, recip, SpherePoint};

/// Orbit steps between two cycle-detection passes.
const CHECK_EVERY: usize = 8;
/// Consecutive steps beyond the escape radius that confirm escape.
const ESCAPE_CONFIRM: usize = 3;
const NEWTON_MAX_ITER: usize = 60;
/// Relative residual accepted by the cycle Newton solver.
pub const NEWTON_RESIDUAL: f64 = 1e-13;
/// Above this modulus, rational families are refined in the `1/z` chart.
const CHART_SWITCH: f64 = 1e3;
const BURN_IN: usize = 20;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Stability {
    Attracting,
    Repelling,
    Indifferent,
}

impl Stability {
    pub fn from_modulus(modulus: f64, margin: f64) -> Self {
        if modulus < 1.0 - margin {
            Stability::Attracting
        } else if modulus > 1.0 + margin {
            Stability::Repelling
        } else {
            Stability::Indifferent
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CycleRecord {
    pub period: usize,
    pub points: Vec<SpherePoint>,
    /// `Infinity` when a cycle point is a pole of the derivative.
    pub multiplier: SpherePoint,
    pub stability: Stability,
}

impl CycleRecord {
    pub fn multiplier_modulus(&self) -> f64 {
        self.multiplier.norm()
    }

    pub fn is_attracting(&self) -> bool {
        self.stability == Stability::Attracting
    }

    pub fn is_repelling(&self) -> bool {
        self.stability == Stability::Repelling
    }

    pub fn at_infinity(&self) -> bool {
        self.points.iter().any(|p| p.is_infinite())
    }

    /// Chordal distance from `z` to the nearest cycle point.
    pub fn distance_to(&self, z: SpherePoint) -> f64 {
        self.points.iter().map(|&p| chordal_distance(p, z)).fold(f64::INFINITY, f64::min)
    }

    /// Hausdorff-type distance between two cycles (as point sets).
    pub fn set_distance(&self, other: &CycleRecord) -> f64 {
        let a = self.points.iter().map(|&p| other.distance_to(p)).fold(0.0, f64::max);
        let b = other.points.iter().map(|&p| self.distance_to(p)).fold(0.0, f64::max);
        a.max(b)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind")]
pub enum OrbitFate {
    /// The orbit left the domain through `∂W` at `step`.
    Truncated { step: usize },
    Captured { cycle: CycleRecord, entry_step: usize },
    Escaping { first_exit_step: usize },
    Undecided { max_iter: usize },
}

impl OrbitFate {
    pub fn code(&self) -> FateCode {
        match self {
            OrbitFate::Undecided { .. } => FateCode::Undecided,
            OrbitFate::Captured { cycle, .. } if cycle.at_infinity() => FateCode::CapturedAtInfinity,
            OrbitFate::Captured { .. } => FateCode::Captured,
            OrbitFate::Escaping { .. } => FateCode::Escaping,
            OrbitFate::Truncated { .. } => FateCode::Truncated,
        }
    }

    pub fn captured_cycle(&self) -> Option<&CycleRecord> {
        match self {
            OrbitFate::Captured { cycle, .. } => Some(cycle),
            _ => None,
        }
    }

    pub fn is_decided(&self) -> bool {
        !matches!(self, OrbitFate::Undecided { .. })
    }
}

/// Integer codes used by fate maps.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum FateCode {
    Undecided = 0,
    Captured = 1,
    CapturedAtInfinity = 2,
    Escaping = 3,
    Truncated = 4,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OrbitRecord {
    #[serde(with = "complex_json")]
    pub lambda: Complex64,
    pub start: SpherePoint,
    pub points: Vec<SpherePoint>,
    pub fate: OrbitFate,
}

/// Iterates `z0` under `f_λ` until its fate is decided or `max_iter` steps.
pub fn iterate_orbit(
    fam: &dyn Family,
    lambda: Complex64,
    z0: SpherePoint,
    cfg: &OrbitConfig,
) -> Result<OrbitRecord> {
    let dom = fam.domain();
    if z0.is_infinite() && !dom.infinity_in_domain {
        return Err(Error::OutsideDomain(format!("orbit start at infinity for {}", fam.id())));
    }
    let policy = EvalPolicy::from(cfg);
    let mut points = Vec::with_capacity(cfg.max_iter.min(4096) + 1);
    points.push(z0);

    let beyond = |p: SpherePoint| p.norm() > cfg.escape_radius;
    let mut run = usize::from(beyond(z0));
    let mut first_exit = 0;

    let mut cur = z0;
    for step in 1..=cfg.max_iter {
        let next = advance(fam, lambda, cur, policy)?;
        points.push(next);

        if next.is_infinite() && dom.truncates_at_infinity() {
            return Ok(record(lambda, z0, points, OrbitFate::Truncated { step }));
        }
        if beyond(next) {
            if run == 0 {
                first_exit = step;
            }
            run += 1;
        } else {
            run = 0;
        }
        if run >= ESCAPE_CONFIRM || (next.is_infinite() && !dom.infinity_in_domain) {
            let fate = escape_fate(fam, lambda, first_exit, cfg);
            return Ok(record(lambda, z0, points, fate));
        }

        if step % CHECK_EVERY == 0 || step == cfg.max_iter {
            let tail_len = (points.len() / 4).max(2 * cfg.max_period + 1).min(points.len());
            let tail = &points[points.len() - tail_len..];
            if let Some(cycle) = detect_cycle(fam, lambda, tail, cfg) {
                if cycle.is_attracting() {
                    let entry_step = points
                        .iter()
                        .position(|&p| cycle.distance_to(p) < cfg.cycle_tol)
                        .unwrap_or(step);
                    return Ok(record(lambda, z0, points, OrbitFate::Captured { cycle, entry_step }));
                }
            }
        }
        cur = next;
    }
    Ok(record(lambda, z0, points, OrbitFate::Undecided { max_iter: cfg.max_iter }))
}

fn record(lambda: Complex64, start: SpherePoint, points: Vec<SpherePoint>, fate: OrbitFate) -> OrbitRecord {
    OrbitRecord { lambda, start, points, fate }
}

/// Escape for rational families means capture by ∞ when ∞ is an attracting
/// fixed point.
fn escape_fate(fam: &dyn Family, lambda: Complex64, first_exit_step: usize, cfg: &OrbitConfig) -> OrbitFate {
    if let Some(cycle) = infinity_cycle(fam, lambda, cfg.stability_margin) {
        if cycle.is_attracting() {
            return OrbitFate::Captured { cycle, entry_step: first_exit_step };
        }
    }
    OrbitFate::Escaping { first_exit_step }
}

fn infinity_cycle(fam: &dyn Family, lambda: Complex64, margin: f64) -> Option<CycleRecord> {
    if !fam.domain().infinity_in_domain || fam.eval_infinity(lambda)? != SpherePoint::Infinity {
        return None;
    }
    let rho = fam.infinity_multiplier(lambda)?;
    Some(CycleRecord {
        period: 1,
        points: vec![SpherePoint::Infinity],
        multiplier: SpherePoint::from_complex(rho),
        stability: Stability::from_modulus(rho.norm(), margin),
    })
}

/// `(f^p(z), (f^p)'(z))` in the finite chart, `None` if the orbit meets a
/// pole or overflows.
pub fn iterate_with_derivative(
    fam: &dyn Family,
    lambda: Complex64,
    z: Complex64,
    p: usize,
) -> Option<(Complex64, Complex64)> {
    let mut z = z;
    let mut d = Complex64::new(1.0, 0.0);
    for _ in 0..p {
        d *= fam.deriv_raw(lambda, z);
        z = fam.eval_raw(lambda, z);
        if !(z.re.is_finite() && z.im.is_finite()) {
            return None;
        }
    }
    Some((z, d))
}

fn is_finite(z: Complex64) -> bool {
    z.re.is_finite() && z.im.is_finite()
}

/// Newton on `f^p(z) − z`. Returns the refined point; the point at infinity
/// is reached only through the `1/z` chart of families with `∞ ∈ W`.
pub fn newton_periodic(
    fam: &dyn Family,
    lambda: Complex64,
    period: usize,
    seed: SpherePoint,
) -> Option<SpherePoint> {
    let rational = fam.domain().infinity_in_domain;
    let mut z = match seed {
        SpherePoint::Finite(z) => z,
        SpherePoint::Infinity if rational => return fixed_infinity(fam, lambda, period),
        SpherePoint::Infinity => return None,
    };
    for _ in 0..NEWTON_MAX_ITER {
        if rational && z.norm() > CHART_SWITCH {
            return newton_reciprocal(fam, lambda, period, z);
        }
        let (w, d) = iterate_with_derivative(fam, lambda, z, period)?;
        let g = w - z;
        let scale = z.norm().max(1.0) * d.norm().max(1.0);
        if g.norm() <= NEWTON_RESIDUAL * scale {
            return Some(SpherePoint::Finite(z));
        }
        let step = g / (d - 1.0);
        if !is_finite(step) {
            return None;
        }
        z -= step;
        if step.norm() <= 1e-15 * z.norm().max(1.0) && g.norm() <= 1e-10 * scale {
            return Some(SpherePoint::Finite(z));
        }
    }
    None
}

fn fixed_infinity(fam: &dyn Family, lambda: Complex64, period: usize) -> Option<SpherePoint> {
    for _ in 0..period {
        if !fam.eval_infinity(lambda)?.is_infinite() {
            return None;
        }
    }
    Some(SpherePoint::Infinity)
}

/// Newton on `G(u) = 1 / f^p(1/u) − u` near `u = 0`.
fn newton_reciprocal(fam: &dyn Family, lambda: Complex64, period: usize, z: Complex64) -> Option<SpherePoint> {
    let mut u = recip(z);
    for _ in 0..NEWTON_MAX_ITER {
        if u.norm() < 1e-300 {
            return fixed_infinity(fam, lambda, period);
        }
        let z = recip(u);
        let Some((w, d)) = iterate_with_derivative(fam, lambda, z, period) else {
            // The orbit overflowed: f^p(1/u) is effectively ∞, so G(u) ≈ −u.
            return (u.norm() < 1e-6).then(|| fixed_infinity(fam, lambda, period)).flatten();
        };
        let g = recip(w) - u;
        let dg = d * z * z / (w * w) - 1.0;
        if g.norm() <= NEWTON_RESIDUAL * u.norm().max(1.0) * dg.norm().max(1.0) {
            if u.norm() < 1e-12 {
                return fixed_infinity(fam, lambda, period);
            }
            return Some(SpherePoint::from_complex(recip(u)));
        }
        let step = g / dg;
        if !is_finite(step) {
            return None;
        }
        u -= step;
    }
    None
}

/// Builds the cycle through a refined periodic point `z` of period `period`.
pub fn cycle_through(
    fam: &dyn Family,
    lambda: Complex64,
    z: SpherePoint,
    period: usize,
    margin: f64,
) -> Option<CycleRecord> {
    let z = match z {
        SpherePoint::Infinity => {
            let mut c = infinity_cycle(fam, lambda, margin)?;
            if period != 1 {
                c.period = 1;
            }
            return Some(c);
        }
        SpherePoint::Finite(z) => z,
    };
    let mut points = Vec::with_capacity(period);
    let mut cur = z;
    let mut rho = Complex64::new(1.0, 0.0);
    for _ in 0..period {
        points.push(SpherePoint::Finite(cur));
        rho *= fam.deriv_raw(lambda, cur);
        cur = fam.eval_raw(lambda, cur);
        if !is_finite(cur) {
            return None;
        }
    }
    let multiplier = SpherePoint::from_complex(rho);
    Some(CycleRecord {
        period,
        points,
        stability: Stability::from_modulus(multiplier.norm(), margin),
        multiplier,
    })
}

/// Smallest `d | p` with `f^d(z) ≈ z`.
fn minimal_period(fam: &dyn Family, lambda: Complex64, z: SpherePoint, p: usize, tol: f64) -> usize {
    let Some(z) = z.finite() else { return 1 };
    (1..p)
        .filter(|d| p.is_multiple_of(*d))
        .find(|&d| {
            iterate_with_derivative(fam, lambda, z, d)
                .is_some_and(|(w, _)| chordal_distance(SpherePoint::Finite(w), SpherePoint::Finite(z)) < tol)
        })
        .unwrap_or(p)
}

fn period_tol(cfg: &OrbitConfig) -> f64 {
    cfg.cycle_tol.max(1e-9)
}

/// Detects recurrence in an orbit tail and Newton-refines the cycle.
pub fn detect_cycle(
    fam: &dyn Family,
    lambda: Complex64,
    tail: &[SpherePoint],
    cfg: &OrbitConfig,
) -> Option<CycleRecord> {
    let n = tail.len();
    if n < 2 {
        return None;
    }
    let period = (1..=cfg.max_period.min(n - 1)).find(|&p| {
        let window = p.min(n - p);
        (0..window).all(|j| chordal_distance(tail[n - 1 - j], tail[n - 1 - j - p]) < cfg.cycle_tol)
    })?;

    let recent = &tail[n - period..];
    if recent.iter().all(|p| p.is_infinite()) {
        return infinity_cycle(fam, lambda, cfg.stability_margin);
    }
    let seed = recent
        .iter()
        .filter(|p| !p.is_infinite())
        .min_by(|a, b| a.norm().total_cmp(&b.norm()))
        .copied()?;
    let refined = newton_periodic(fam, lambda, period, seed)?;
    if chordal_distance(refined, seed) > 1e-4 {
        return None;
    }
    let p = minimal_period(fam, lambda, refined, period, period_tol(cfg));
    cycle_through(fam, lambda, refined, p, cfg.stability_margin)
}

/// Newton search for a cycle of exact period `period` from `seed`.
pub fn find_cycle_newton(
    fam: &dyn Family,
    lambda: Complex64,
    period: usize,
    seed: SpherePoint,
    cfg: &OrbitConfig,
) -> Option<CycleRecord> {
    if period == 0 {
        return None;
    }
    let z = newton_periodic(fam, lambda, period, seed)?;
    if minimal_period(fam, lambda, z, period, period_tol(cfg)) != period {
        return None;
    }
    cycle_through(fam, lambda, z, period, cfg.stability_margin)
}

/// Multiplier of the cycle recomputed starting from point `start`.
pub fn multiplier_from(fam: &dyn Family, lambda: Complex64, cycle: &CycleRecord, start: usize) -> SpherePoint {
    match cycle.points[start] {
        SpherePoint::Finite(z) => iterate_with_derivative(fam, lambda, z, cycle.period)
            .map(|(_, d)| SpherePoint::from_complex(d))
            .unwrap_or(SpherePoint::Infinity),
        SpherePoint::Infinity => cycle.multiplier,
    }
}

/// Random inverse iteration from `seed`, after a burn-in of 20 steps.
pub fn backward_sample(
    fam: &dyn Family,
    lambda: Complex64,
    seed: SpherePoint,
    n_samples: usize,
    rng_seed: u64,
    branch_bound: i64,
) -> Result<Vec<SpherePoint>> {
    let branches = fam.branch_indices(branch_bound);
    if branches.is_empty() {
        return Err(Error::MissingInverse(fam.id().to_string()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
    let mut out = Vec::with_capacity(n_samples);
    let mut cur = seed;
    for step in 0..BURN_IN + n_samples {
        let mut next = None;
        for _ in 0..32 {
            let k = branches[rng.gen_range(0..branches.len())];
            if let Some(z @ SpherePoint::Finite(_)) = fam.inverse_branch(lambda, cur, k) {
                next = Some(z);
                break;
            }
        }
        let Some(z) = next else {
            return Err(Error::InvalidArgument(format!(
                "inverse iteration stuck at {cur} (omitted value?)"
            )));
        };
        cur = z;
        if step >= BURN_IN {
            out.push(cur);
        }
    }
    Ok(out)
}
