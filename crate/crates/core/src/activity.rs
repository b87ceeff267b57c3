//! Passive/active classification of singular values on small parameter disks.

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::{ClassifyConfig, OrbitConfig};
use crate::error::{Error, Result};
use crate::families::{advance, singular_value, EvalPolicy, Family};
use crate::orbit::{find_cycle_newton, iterate_orbit, CycleRecord, OrbitFate};
use crate::sphere::{chordal_distance, SpherePoint};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum PassiveReason {
    PersistentTruncation,
    AttractingCapture,
    UniformlyBounded,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum ActiveEvidence {
    FateHeterogeneity,
    NonPersistentTruncation,
    DiameterBlowup,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind")]
pub enum Verdict {
    Passive { reason: PassiveReason },
    Active { evidence: ActiveEvidence },
    Unknown,
}

impl Verdict {
    pub fn kind(&self) -> VerdictKind {
        match self {
            Verdict::Passive { .. } => VerdictKind::Passive,
            Verdict::Active { .. } => VerdictKind::Active,
            Verdict::Unknown => VerdictKind::Unknown,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum VerdictKind {
    Passive,
    Active,
    Unknown,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ActivityVerdict {
    pub verdict: Verdict,
    pub samples_used: usize,
    pub disk_radius: f64,
    pub config: ClassifyConfig,
}

/// Center, then `⌊(n−1)/3⌋` points on the circle of radius `r`, then the
/// rest on the circle of radius `r/2` (rotated by half a step).
pub fn sample_parameters(lambda0: Complex64, radius: f64, n_samples: usize) -> Vec<Complex64> {
    let n_outer = (n_samples - 1) / 3;
    let n_inner = n_samples - 1 - n_outer;
    let tau = 2.0 * std::f64::consts::PI;
    let mut out = vec![lambda0];
    out.extend((0..n_outer).map(|k| lambda0 + Complex64::from_polar(radius, tau * k as f64 / n_outer as f64)));
    out.extend(
        (0..n_inner).map(|k| lambda0 + Complex64::from_polar(radius / 2.0, tau * (k as f64 + 0.5) / n_inner as f64)),
    );
    out
}

#[derive(Clone, Copy, Debug, PartialEq)]
enum FateClass {
    Cycle { period: usize, at_infinity: bool },
    Escaping,
    Undecided,
}

fn fate_class(f: &OrbitFate) -> Option<FateClass> {
    match f {
        OrbitFate::Truncated { .. } => None,
        OrbitFate::Captured { cycle, .. } => {
            Some(FateClass::Cycle { period: cycle.period, at_infinity: cycle.at_infinity() })
        }
        OrbitFate::Escaping { .. } => Some(FateClass::Escaping),
        OrbitFate::Undecided { .. } => Some(FateClass::Undecided),
    }
}

/// Classifies singular value `sv_index` on the disk `B(λ0, radius)`.
pub fn classify(
    fam: &dyn Family,
    sv_index: usize,
    lambda0: Complex64,
    radius: f64,
    cfg: &ClassifyConfig,
) -> Result<ActivityVerdict> {
    if !(radius > 0.0 && radius.is_finite()) {
        return Err(Error::InvalidArgument("radius must be positive".into()));
    }
    if cfg.n_samples < 9 {
        return Err(Error::InvalidArgument("n_samples must be >= 9".into()));
    }
    let sv = singular_value(fam, sv_index)?;
    let params = sample_parameters(lambda0, radius, cfg.n_samples);
    let fates: Vec<OrbitFate> = params
        .par_iter()
        .map(|&l| iterate_orbit(fam, l, sv.value(l), &cfg.orbit).map(|r| r.fate))
        .collect::<Result<_>>()?;
    let verdict = decide(fam, sv_index, &params, &fates, cfg)?;
    Ok(ActivityVerdict { verdict, samples_used: params.len(), disk_radius: radius, config: *cfg })
}

fn decide(
    fam: &dyn Family,
    sv_index: usize,
    params: &[Complex64],
    fates: &[OrbitFate],
    cfg: &ClassifyConfig,
) -> Result<Verdict> {
    let steps: Vec<Option<usize>> = fates
        .iter()
        .map(|f| match f {
            OrbitFate::Truncated { step } => Some(*step),
            _ => None,
        })
        .collect();
    if steps.iter().all(|s| s.is_some()) {
        return Ok(if steps.iter().all(|s| *s == steps[0]) {
            Verdict::Passive { reason: PassiveReason::PersistentTruncation }
        } else {
            Verdict::Active { evidence: ActiveEvidence::NonPersistentTruncation }
        });
    }
    if steps.iter().any(|s| s.is_some()) {
        return Ok(Verdict::Active { evidence: ActiveEvidence::NonPersistentTruncation });
    }

    let classes: Vec<FateClass> = fates.iter().filter_map(fate_class).collect();
    let decided: Vec<FateClass> = classes.iter().copied().filter(|c| *c != FateClass::Undecided).collect();
    if decided.windows(2).any(|w| w[0] != w[1]) {
        return Ok(Verdict::Active { evidence: ActiveEvidence::FateHeterogeneity });
    }
    if decided.len() == classes.len() {
        if let Some(FateClass::Cycle { at_infinity, .. }) = decided.first() {
            let cycles: Vec<&CycleRecord> = fates.iter().filter_map(|f| f.captured_cycle()).collect();
            // neighbouring samples must land on the same moving cycle
            let coherent = cycles.iter().all(|c| c.set_distance(cycles[0]) < cfg.diam_threshold);
            if !coherent {
                return Ok(Verdict::Active { evidence: ActiveEvidence::FateHeterogeneity });
            }
            if !*at_infinity || escape_rates_comparable(fam, sv_index, params, cfg) {
                return Ok(Verdict::Passive { reason: PassiveReason::AttractingCapture });
            }
            return Ok(match diameter_test(fam, sv_index, params, cfg)? {
                blowup @ Verdict::Active { .. } => blowup,
                _ => Verdict::Unknown,
            });
        }
        if let Some(FateClass::Escaping) = decided.first() {
            return Ok(Verdict::Unknown);
        }
    }
    diameter_test(fam, sv_index, params, cfg)
}

/// Harnack bound for a positive harmonic function on `B(λ0, 2r)`, read on `B(λ0, r)`.
const HARNACK_RATIO: f64 = 9.0;

/// Escape rate `lim d⁻ⁿ log|fⁿ(v)|` toward a superattracting point at
/// infinity, estimated once the orbit passes the escape radius.
fn escape_rate(fam: &dyn Family, v: Complex64, lambda: Complex64, cfg: &OrbitConfig) -> Option<f64> {
    let mut z = v;
    for n in 0..=cfg.max_iter {
        if z.norm() > cfg.escape_radius {
            let next = fam.eval_raw(lambda, z);
            let (a, b) = (z.norm().ln(), next.norm().ln());
            if !b.is_finite() {
                return None;
            }
            let degree = (b / a).round().max(2.0);
            return Some(b / degree.powi(n as i32 + 1));
        }
        z = fam.eval_raw(lambda, z);
        if !(z.re.is_finite() && z.im.is_finite()) {
            return None;
        }
    }
    None
}

fn escape_rates_comparable(fam: &dyn Family, sv_index: usize, params: &[Complex64], cfg: &ClassifyConfig) -> bool {
    let Ok(sv) = singular_value(fam, sv_index) else { return false };
    let rates: Option<Vec<f64>> =
        params.iter().map(|&l| escape_rate(fam, sv.value(l).finite()?, l, &cfg.orbit)).collect();
    let Some(rates) = rates else { return false };
    let lo = rates.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = rates.iter().copied().fold(0.0, f64::max);
    lo > 0.0 && hi <= HARNACK_RATIO * lo
}

/// Tracks the chordal diameter of `{f_λⁿ(v(λ))}` over the samples.
fn diameter_test(fam: &dyn Family, sv_index: usize, params: &[Complex64], cfg: &ClassifyConfig) -> Result<Verdict> {
    let sv = singular_value(fam, sv_index)?;
    let policy = EvalPolicy::from(&cfg.orbit);
    let infinity_ok = fam.domain().infinity_in_domain;
    let mut points: Vec<SpherePoint> = params.iter().map(|&l| sv.value(l)).collect();
    let mut bounded = true;
    for n in 0..=cfg.orbit.max_iter {
        let mut diam: f64 = 0.0;
        for i in 0..points.len() {
            for j in i + 1..points.len() {
                diam = diam.max(chordal_distance(points[i], points[j]));
            }
        }
        if diam >= cfg.diam_threshold {
            return Ok(Verdict::Active { evidence: ActiveEvidence::DiameterBlowup });
        }
        if !infinity_ok && points.iter().any(|p| p.is_infinite()) {
            bounded = false;
            break;
        }
        if n == cfg.orbit.max_iter {
            break;
        }
        for (p, &l) in points.iter_mut().zip(params) {
            *p = advance(fam, l, *p, policy)?;
        }
    }
    Ok(if bounded { Verdict::Passive { reason: PassiveReason::UniformlyBounded } } else { Verdict::Unknown })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct IndicatorValue {
    pub value: f64,
    /// Period of the captured cycle, when the orbit is captured.
    pub capture_period: Option<usize>,
    pub at_infinity: bool,
}

/// Per-parameter activity statistic: 0 for captured orbits, `1/(1+step)`
/// for truncated ones, and a normalized log-growth of the parameter
/// derivative of the singular orbit otherwise.
pub fn activity_indicator(
    fam: &dyn Family,
    sv_index: usize,
    lambda: Complex64,
    cfg: &OrbitConfig,
) -> Result<IndicatorValue> {
    let sv = singular_value(fam, sv_index)?;
    let record = iterate_orbit(fam, lambda, sv.value(lambda), cfg)?;
    let n_max = match &record.fate {
        OrbitFate::Captured { cycle, .. } => {
            return Ok(IndicatorValue { value: 0.0, capture_period: Some(cycle.period), at_infinity: cycle.at_infinity() })
        }
        OrbitFate::Truncated { step } => {
            return Ok(IndicatorValue { value: 1.0 / (1.0 + *step as f64), capture_period: None, at_infinity: false })
        }
        OrbitFate::Escaping { .. } | OrbitFate::Undecided { .. } => record.points.len().saturating_sub(1),
    };
    let h = 1e-7 * lambda.norm().max(1.0);
    let (lp, lm) = (lambda + h, lambda - h);
    let (mut zp, mut zm) = match (sv.value(lp).finite(), sv.value(lm).finite()) {
        (Some(a), Some(b)) => (a, b),
        _ => return Ok(IndicatorValue { value: 0.0, capture_period: None, at_infinity: false }),
    };
    let mut growth = 0.0;
    for n in 1..=n_max {
        let (np, nm) = (fam.eval_raw(lp, zp), fam.eval_raw(lm, zm));
        let ok = |z: Complex64| z.re.is_finite() && z.im.is_finite() && z.norm() <= cfg.escape_radius;
        if !(ok(np) && ok(nm)) {
            break;
        }
        zp = np;
        zm = nm;
        let d = ((zp - zm) / (2.0 * h)).norm();
        growth = (1.0 + d).ln() / n as f64;
    }
    Ok(IndicatorValue { value: growth / (1.0 + growth), capture_period: None, at_infinity: false })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MisiurewiczRelation {
    pub n: usize,
    pub cycle: CycleRecord,
}

/// Longest cycle period searched by [`misiurewicz_check`].
pub const MISIUREWICZ_MAX_PERIOD: usize = 8;

/// Finds indices `n < n_max` where the singular orbit (indexed from
/// [`crate::families::SingularValue::orbit_start`]) sits on a repelling cycle.
pub fn misiurewicz_check(
    fam: &dyn Family,
    sv_index: usize,
    lambda0: Complex64,
    n_max: usize,
    tol: f64,
    cfg: &OrbitConfig,
) -> Result<Vec<MisiurewiczRelation>> {
    if !(tol > 0.0) {
        return Err(Error::InvalidArgument("tol must be positive".into()));
    }
    let sv = singular_value(fam, sv_index)?;
    let policy = EvalPolicy::from(cfg);
    let mut z = sv.orbit_start(lambda0);
    let mut out = Vec::new();
    for n in 0..n_max {
        if z.is_infinite() {
            break;
        }
        for p in 1..=MISIUREWICZ_MAX_PERIOD {
            let Some(cycle) = find_cycle_newton(fam, lambda0, p, z, cfg) else { continue };
            if cycle.is_repelling() && cycle.distance_to(z) < tol {
                out.push(MisiurewiczRelation { n, cycle });
                break;
            }
        }
        z = match advance(fam, lambda0, z, policy) {
            Ok(w) => w,
            Err(_) => break,
        };
    }
    Ok(out)
}
