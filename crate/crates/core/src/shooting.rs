//! Newton shooting in parameter space for finite orbit relations
//! `f_λⁿ(v(λ)) = γ(λ)`.

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::{OrbitConfig, StepControl};
use crate::continuation::continue_cycle;
use crate::error::{Error, Result};
use crate::families::{singular_value, BoundaryModel, Family, PoleCount, SingularKind};
use crate::orbit::{cycle_through, iterate_orbit, newton_periodic, CycleRecord, OrbitFate};
use crate::sphere::{chordal_distance, complex_json, recip, SpherePoint};

pub const DEFAULT_SHOOT_TOL: f64 = 1e-10;
pub const DEFAULT_MAX_NEWTON: usize = 60;
/// Solutions closer than this are the same parameter.
pub const DEDUP_TOL: f64 = 1e-8;
/// Relations whose residual derivative is below this are persistent.
const PERSISTENT_DERIVATIVE: f64 = 1e-8;
const MAX_BACKTRACK: usize = 12;
/// Trust region for one Newton step, relative to `max(1, |λ|)`.
const MAX_NEWTON_STEP: f64 = 0.25;

#[derive(Clone, Debug, PartialEq)]
pub enum ShootTarget {
    Point(SpherePoint),
    /// `f_λⁿ(v) = ∞`, i.e. `f_λⁿ⁻¹(v)` is a pole.
    Pole,
    /// Point `index` of `cycle` (given at `lambda0`), continued to `λ`.
    ContinuedCycle { cycle: CycleRecord, lambda0: Complex64, index: usize },
}

#[derive(Clone, Debug)]
pub struct ShootingProblem<'a> {
    pub fam: &'a dyn Family,
    pub sv_index: usize,
    /// Depth of the relation, counted from `SingularValue::orbit_start`.
    pub n: usize,
    pub target: ShootTarget,
    pub seed: Complex64,
    pub tol: f64,
    pub step: StepControl,
    /// Disk `(center, radius)` outside of which the residual is undefined.
    pub region: Option<(Complex64, f64)>,
}

impl<'a> ShootingProblem<'a> {
    pub fn new(fam: &'a dyn Family, sv_index: usize, n: usize, target: ShootTarget, seed: Complex64) -> Self {
        ShootingProblem { fam, sv_index, n, target, seed, tol: DEFAULT_SHOOT_TOL, step: StepControl::default(), region: None }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ShootResult {
    #[serde(with = "complex_json")]
    pub lambda_star: Complex64,
    /// Chordal distance between `f_λⁿ(v)` and the target at `lambda_star`.
    pub residual: f64,
}

/// `f_λⁿ` of the orbit start; `None` if an earlier point is a pole or the
/// orbit overflows before depth `n`. The last point may be non-finite.
pub fn orbit_point(fam: &dyn Family, sv_index: usize, lambda: Complex64, n: usize) -> Option<Complex64> {
    let sv = singular_value(fam, sv_index).ok()?;
    let mut z = sv.orbit_start(lambda).finite()?;
    for k in 0..n {
        if !(z.re.is_finite() && z.im.is_finite()) {
            return None;
        }
        if fam.nearest_pole(lambda, z) == Some(z) && k + 1 < n {
            return None;
        }
        z = fam.eval_raw(lambda, z);
    }
    Some(z)
}

fn finite(z: Complex64) -> bool {
    z.re.is_finite() && z.im.is_finite()
}

/// Moving target point of a continued cycle.
struct Tracker<'a> {
    fam: &'a dyn Family,
    period: usize,
    lambda: Complex64,
    z: Complex64,
    step: StepControl,
}

impl<'a> Tracker<'a> {
    fn new(fam: &'a dyn Family, cycle: &CycleRecord, lambda0: Complex64, index: usize, step: StepControl) -> Option<Self> {
        let z = cycle.points.get(index)?.finite()?;
        Some(Tracker { fam, period: cycle.period, lambda: lambda0, z, step })
    }

    fn polish(&self, lambda: Complex64) -> Option<Complex64> {
        let z = newton_periodic(self.fam, lambda, self.period, SpherePoint::Finite(self.z))?.finite()?;
        (chordal_distance(SpherePoint::Finite(z), SpherePoint::Finite(self.z)) < 1e-3).then_some(z)
    }

    /// Target position at `λ`, without moving the tracker when `λ` is close.
    fn peek(&self, lambda: Complex64) -> Option<Complex64> {
        if (lambda - self.lambda).norm() <= self.step.max_step * 1e-3 {
            return self.polish(lambda);
        }
        let cycle = cycle_through(self.fam, self.lambda, SpherePoint::Finite(self.z), self.period, self.step.stability_margin)?;
        let trace = continue_cycle(self.fam, &cycle, &[self.lambda, lambda], &self.step).ok()?;
        if !trace.status.is_completed() {
            return None;
        }
        trace.endpoints()[0].finite()
    }

    fn move_to(&mut self, lambda: Complex64) -> Option<Complex64> {
        let z = self.peek(lambda)?;
        self.lambda = lambda;
        self.z = z;
        Some(z)
    }
}

/// Residual in the chart chosen at the seed.
struct Residual<'a> {
    problem: &'a ShootingProblem<'a>,
    reciprocal: bool,
    tracker: Option<Tracker<'a>>,
}

impl<'a> Residual<'a> {
    fn new(problem: &'a ShootingProblem<'a>) -> Option<Self> {
        let (reciprocal, tracker) = match &problem.target {
            ShootTarget::Pole => (true, None),
            ShootTarget::Point(SpherePoint::Infinity) => (true, None),
            ShootTarget::Point(SpherePoint::Finite(t)) => (t.norm() > 1.0, None),
            ShootTarget::ContinuedCycle { cycle, lambda0, index } => {
                let mut tr = Tracker::new(problem.fam, cycle, *lambda0, *index, problem.step)?;
                let t = tr.move_to(problem.seed)?;
                (t.norm() > 1.0, Some(tr))
            }
        };
        Some(Residual { problem, reciprocal, tracker })
    }

    fn target(&mut self, lambda: Complex64, commit: bool) -> Option<SpherePoint> {
        match &self.problem.target {
            ShootTarget::Pole => Some(SpherePoint::Infinity),
            ShootTarget::Point(p) => Some(*p),
            ShootTarget::ContinuedCycle { .. } => {
                let tr = self.tracker.as_mut()?;
                let z = if commit { tr.move_to(lambda)? } else { tr.peek(lambda)? };
                Some(SpherePoint::Finite(z))
            }
        }
    }

    /// `(h(λ), chordal residual)`.
    fn eval(&mut self, lambda: Complex64, commit: bool) -> Option<(Complex64, f64)> {
        let p = self.problem;
        if p.region.is_some_and(|(c, r)| (lambda - c).norm() > r) {
            return None;
        }
        let w = orbit_point(p.fam, p.sv_index, lambda, p.n)?;
        let target = self.target(lambda, commit)?;
        let wp = if finite(w) { SpherePoint::Finite(w) } else { SpherePoint::Infinity };
        let chordal = chordal_distance(wp, target);
        let h = if self.reciprocal {
            let rw = if finite(w) { recip(w) } else { Complex64::new(0.0, 0.0) };
            let rt = match target {
                SpherePoint::Finite(t) => recip(t),
                SpherePoint::Infinity => Complex64::new(0.0, 0.0),
            };
            rw - rt
        } else {
            w - target.finite()?
        };
        finite(h).then_some((h, chordal))
    }

    fn derivative(&mut self, lambda: Complex64) -> Option<Complex64> {
        let delta = 1e-7 * lambda.norm().max(1.0);
        let (hp, _) = self.eval(lambda + delta, false)?;
        let (hm, _) = self.eval(lambda - delta, false)?;
        let d = (hp - hm) / (2.0 * delta);
        finite(d).then_some(d)
    }
}

/// Damped Newton in `λ` with a central-difference derivative.
pub fn shoot(problem: &ShootingProblem, max_newton: usize) -> Option<ShootResult> {
    let mut res = Residual::new(problem)?;
    let mut lambda = problem.seed;
    let (mut h, mut chordal) = res.eval(lambda, true)?;
    let mut polished = false;
    for _ in 0..max_newton {
        if chordal < problem.tol && (polished || h.norm() == 0.0) {
            return Some(ShootResult { lambda_star: lambda, residual: chordal });
        }
        let d = res.derivative(lambda)?;
        let mut step = h / d;
        if !finite(step) {
            return None;
        }
        let cap = MAX_NEWTON_STEP * lambda.norm().max(1.0);
        if step.norm() > cap {
            step *= cap / step.norm();
        }
        let mut t = 1.0;
        let mut accepted = None;
        for _ in 0..MAX_BACKTRACK {
            let trial = lambda - step * t;
            if let Some((ht, _)) = res.eval(trial, false) {
                if ht.norm() < h.norm() {
                    accepted = Some(trial);
                    break;
                }
            }
            t /= 2.0;
        }
        let Some(next) = accepted else {
            return (chordal < problem.tol).then_some(ShootResult { lambda_star: lambda, residual: chordal });
        };
        if chordal < problem.tol {
            polished = true;
        }
        lambda = next;
        (h, chordal) = res.eval(lambda, true)?;
    }
    (chordal < problem.tol).then_some(ShootResult { lambda_star: lambda, residual: chordal })
}

/// Seeds on four rings of radius `r/4 … max_fraction·r` around `λ0` with
/// phases drawn from `rng_seed`, center first.
pub fn seed_rings(lambda0: Complex64, radius: f64, max_fraction: f64, rng_seed: u64) -> Vec<Complex64> {
    let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
    let mut out = vec![lambda0];
    for j in 1..=4 {
        let r = radius * max_fraction * j as f64 / 4.0;
        let count = 8 * j;
        let phase: f64 = rng.gen_range(0.0..std::f64::consts::TAU);
        for k in 0..count {
            out.push(lambda0 + Complex64::from_polar(r, phase + std::f64::consts::TAU * k as f64 / count as f64));
        }
    }
    out
}

fn dedup(mut found: Vec<Complex64>) -> Vec<Complex64> {
    found.sort_by(|a, b| a.re.total_cmp(&b.re).then(a.im.total_cmp(&b.im)));
    let mut out: Vec<Complex64> = Vec::new();
    for l in found {
        if out.iter().all(|&m| (m - l).norm() >= DEDUP_TOL) {
            out.push(l);
        }
    }
    out
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VirtualCycleRecord {
    pub sv_index: usize,
    #[serde(with = "complex_json")]
    pub lambda_vc: Complex64,
    /// `n + 1`.
    pub length: usize,
    /// `v, f(v), …, fⁿ(v) = ∞`.
    pub chain: Vec<SpherePoint>,
    pub residual: f64,
}

/// Shoots `f_λⁿ(v(λ)) = ∞` for each depth from seeds around `λ0` and keeps
/// the distinct solutions inside `B(λ0, search_radius)`.
pub fn find_truncation_parameters(
    fam: &dyn Family,
    sv_index: usize,
    lambda0: Complex64,
    depths: &[usize],
    search_radius: f64,
    rng_seed: u64,
) -> Result<Vec<VirtualCycleRecord>> {
    let dom = fam.domain();
    if dom.boundary != BoundaryModel::InfinityOnly || dom.infinity_in_domain || dom.poles == PoleCount::Zero {
        return Err(Error::NoBoundary(fam.id().to_string()));
    }
    singular_value(fam, sv_index)?;
    let seeds = seed_rings(lambda0, search_radius, 1.0, rng_seed);
    let mut out = Vec::new();
    for &n in depths {
        if n == 0 {
            return Err(Error::InvalidArgument("depth must be >= 1".into()));
        }
        let found: Vec<Complex64> = seeds
            .par_iter()
            .filter_map(|&seed| {
                let problem = ShootingProblem::new(fam, sv_index, n, ShootTarget::Pole, seed);
                shoot(&problem, DEFAULT_MAX_NEWTON).map(|r| r.lambda_star)
            })
            .filter(|l| (l - lambda0).norm() <= search_radius)
            .collect();
        for lambda in dedup(found) {
            if let Some(rec) = virtual_cycle_at(fam, sv_index, lambda, n) {
                out.push(rec);
            }
        }
    }
    Ok(out)
}

/// The chain `v, …, fⁿ⁻¹(v), ∞` at `λ`, if the orbit is finite before depth `n`.
pub fn virtual_cycle_at(fam: &dyn Family, sv_index: usize, lambda: Complex64, n: usize) -> Option<VirtualCycleRecord> {
    let sv = singular_value(fam, sv_index).ok()?;
    let mut chain = vec![sv.orbit_start(lambda)];
    let mut z = chain[0].finite()?;
    for _ in 1..n {
        z = fam.eval_raw(lambda, z);
        if !finite(z) {
            return None;
        }
        chain.push(SpherePoint::Finite(z));
    }
    let last = fam.eval_raw(lambda, z);
    let residual = if finite(last) { chordal_distance(SpherePoint::Finite(last), SpherePoint::Infinity) } else { 0.0 };
    chain.push(SpherePoint::Infinity);
    Some(VirtualCycleRecord { sv_index, lambda_vc: lambda, length: n + 1, chain, residual })
}

/// Parameters in `B(λ0, radius)` where `f_λⁿ(v(λ))` lands on the continuation
/// of the repelling cycle `target` (any of its points).
pub fn find_misiurewicz(
    fam: &dyn Family,
    sv_index: usize,
    lambda0: Complex64,
    n: usize,
    target: &CycleRecord,
    radius: f64,
    step: &StepControl,
    rng_seed: u64,
) -> Result<Vec<Complex64>> {
    if !target.is_repelling() {
        return Err(Error::NotRepelling(target.multiplier_modulus()));
    }
    if !(radius > 0.0) {
        return Err(Error::InvalidArgument("radius must be positive".into()));
    }
    singular_value(fam, sv_index)?;
    let seeds = seed_rings(lambda0, radius, 0.75, rng_seed);
    for &s in &seeds[1..] {
        let trace = continue_cycle(fam, target, &[lambda0, s], step)?;
        if !trace.status.is_completed() {
            return Err(Error::TargetUnstable);
        }
    }
    let jobs: Vec<(usize, Complex64)> =
        (0..target.period).flat_map(|i| seeds.iter().map(move |&s| (i, s))).collect();
    let found: Vec<Complex64> = jobs
        .par_iter()
        .filter_map(|&(index, seed)| {
            let problem = ShootingProblem {
                step: *step,
                region: Some((lambda0, 2.0 * radius)),
                ..ShootingProblem::new(
                    fam,
                    sv_index,
                    n,
                    ShootTarget::ContinuedCycle { cycle: target.clone(), lambda0, index },
                    seed,
                )
            };
            let r = shoot(&problem, DEFAULT_MAX_NEWTON)?;
            if (r.lambda_star - lambda0).norm() > radius {
                return None;
            }
            let at_root = ShootingProblem { seed: r.lambda_star, ..problem.clone() };
            let mut res = Residual::new(&at_root)?;
            let d = res.derivative(r.lambda_star)?;
            (d.norm() > PERSISTENT_DERIVATIVE).then_some(r.lambda_star)
        })
        .collect();
    Ok(dedup(found))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VirtualEntry {
    pub k: usize,
    #[serde(with = "complex_json")]
    pub lambda: Complex64,
    pub period: usize,
    pub multiplier: SpherePoint,
    pub multiplier_modulus: f64,
}

/// Radius of the `k`-th pre-pole proxy point.
pub fn proxy_radius(k: usize) -> f64 {
    10.0 * 2f64.powi(k as i32)
}

/// Follows attracting cycles of period `length(vc)` that appear as the
/// orbit of the asymptotic value is pushed deeper into its tract.
pub fn verify_attracting_near_virtual(
    fam: &dyn Family,
    vc: &VirtualCycleRecord,
    k_max: usize,
    cfg: &OrbitConfig,
) -> Result<Vec<VirtualEntry>> {
    let sv = singular_value(fam, vc.sv_index)?;
    let SingularKind::Asymptotic { tract_direction } = sv.kind else {
        return Err(Error::InvalidArgument("virtual cycles need an asymptotic value".into()));
    };
    let n = vc.length - 1;
    let mut seed = vc.lambda_vc;
    let mut out: Vec<VirtualEntry> = Vec::new();
    for k in 1..=k_max {
        let w = tract_direction * proxy_radius(k);
        let problem = ShootingProblem::new(fam, vc.sv_index, n, ShootTarget::Point(SpherePoint::Finite(w)), seed);
        let Some(r) = shoot(&problem, DEFAULT_MAX_NEWTON) else { continue };
        seed = r.lambda_star;
        let record = iterate_orbit(fam, r.lambda_star, sv.value(r.lambda_star), cfg)?;
        let OrbitFate::Captured { cycle, .. } = record.fate else { continue };
        if cycle.period != vc.length || !cycle.is_attracting() {
            continue;
        }
        let modulus = cycle.multiplier_modulus();
        if out.last().is_some_and(|e| modulus >= e.multiplier_modulus) {
            continue;
        }
        out.push(VirtualEntry {
            k,
            lambda: r.lambda_star,
            period: cycle.period,
            multiplier: cycle.multiplier,
            multiplier_modulus: modulus,
        });
    }
    if out.len() < 2 {
        return Err(Error::VirtualCycleNotConfirmed(out.len()));
    }
    Ok(out)
}
