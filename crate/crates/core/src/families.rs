//! One-parameter natural families of finite-type maps.
//!
//! A family is described by the [`Family`] trait: evaluation and z-derivative
//! in the finite chart, the motion `λ ↦ v(λ)` of each singular value, a model
//! of the domain boundary, and optionally a set of inverse branches. The
//! quasiconformal markings that make a family "natural" are never represented;
//! the explicit singular-value motions are their only observable trace here.

use std::f64::consts::{FRAC_PI_2, PI};
use std::fmt;
use std::sync::Arc;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::config::OrbitConfig;
use crate::error::{Error, Result};
use crate::sphere::{normalize, normalize_point, SpherePoint, DEFAULT_ESCAPE_RADIUS};

const I: Complex64 = Complex64 { re: 0.0, im: 1.0 };

/// Identifiers accepted by [`builtin`].
pub const BUILTIN_IDS: [&str; 4] = ["quadratic", "exponential", "tangent", "quadratic-conjugated"];

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum BoundaryModel {
    /// `W` is the whole sphere (rational maps).
    EmptyBoundary,
    /// `∂W = {∞}` (entire and meromorphic maps on the plane).
    InfinityOnly,
    /// `∂W = {0, ∞}` (maps of the punctured plane). No built-in family uses it.
    ZeroAndInfinity,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum PoleCount {
    Zero,
    Finite(usize),
    Infinite,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct DomainModel {
    pub boundary: BoundaryModel,
    pub infinity_in_domain: bool,
    pub poles: PoleCount,
    /// For `InfinityOnly`: the poles are omitted values. For `ZeroAndInfinity`:
    /// both boundary points are omitted.
    pub boundary_omitted: bool,
}

impl DomainModel {
    /// True when an orbit reaching ∞ leaves the domain through a pole, i.e.
    /// the orbit is truncated rather than escaping.
    pub fn truncates_at_infinity(&self) -> bool {
        !self.infinity_in_domain && self.poles != PoleCount::Zero
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum ExceptionalClass {
    Rational,
    Entire,
    MeromorphicOmittedPole,
    CstarMap,
    NonExceptional,
}

type PointFn = Arc<dyn Fn(Complex64) -> SpherePoint + Send + Sync>;

#[derive(Clone)]
pub enum SingularKind {
    Critical { critical_point: PointFn },
    /// Asymptotic value; `tract_direction` is the unit direction in which a
    /// tract above the value extends to ∞.
    Asymptotic { tract_direction: Complex64 },
}

#[derive(Clone)]
pub struct SingularValue {
    pub label: String,
    pub kind: SingularKind,
    value: PointFn,
}

impl SingularValue {
    pub fn critical(
        label: impl Into<String>,
        value: impl Fn(Complex64) -> SpherePoint + Send + Sync + 'static,
        critical_point: impl Fn(Complex64) -> SpherePoint + Send + Sync + 'static,
    ) -> Self {
        SingularValue {
            label: label.into(),
            kind: SingularKind::Critical { critical_point: Arc::new(critical_point) },
            value: Arc::new(value),
        }
    }

    pub fn asymptotic(
        label: impl Into<String>,
        value: impl Fn(Complex64) -> SpherePoint + Send + Sync + 'static,
        tract_direction: Complex64,
    ) -> Self {
        SingularValue {
            label: label.into(),
            kind: SingularKind::Asymptotic { tract_direction },
            value: Arc::new(value),
        }
    }

    pub fn value(&self, lambda: Complex64) -> SpherePoint {
        (self.value)(lambda)
    }

    pub fn critical_point(&self, lambda: Complex64) -> Option<SpherePoint> {
        match &self.kind {
            SingularKind::Critical { critical_point } => Some(critical_point(lambda)),
            SingularKind::Asymptotic { .. } => None,
        }
    }

    /// Index-0 point of the singular orbit: the critical point for critical
    /// values (so that index 1 is the value itself), the value otherwise.
    pub fn orbit_start(&self, lambda: Complex64) -> SpherePoint {
        self.critical_point(lambda).unwrap_or_else(|| self.value(lambda))
    }

    pub fn is_asymptotic(&self) -> bool {
        matches!(self.kind, SingularKind::Asymptotic { .. })
    }

    pub fn kind_name(&self) -> &'static str {
        match self.kind {
            SingularKind::Critical { .. } => "critical",
            SingularKind::Asymptotic { .. } => "asymptotic",
        }
    }
}

impl fmt::Debug for SingularValue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("SingularValue")
            .field("label", &self.label)
            .field("kind", &self.kind_name())
            .finish()
    }
}

/// A natural family `λ ↦ f_λ` over a one-dimensional parameter space.
pub trait Family: Send + Sync + fmt::Debug {
    fn id(&self) -> &str;

    fn domain(&self) -> DomainModel;

    fn singular_values(&self) -> &[SingularValue];

    /// `f_λ(z)` in the finite chart. May return a non-finite value at a pole.
    fn eval_raw(&self, lambda: Complex64, z: Complex64) -> Complex64;

    /// `f_λ'(z)` in the finite chart. May return a non-finite value at a pole.
    fn deriv_raw(&self, lambda: Complex64, z: Complex64) -> Complex64;

    /// Stored exceptionality class; `None` derives it from [`Family::domain`].
    fn declared_class(&self) -> Option<ExceptionalClass> {
        None
    }

    /// `f_λ(∞)`, only meaningful when ∞ lies in the domain.
    fn eval_infinity(&self, _lambda: Complex64) -> Option<SpherePoint> {
        None
    }

    /// Multiplier of ∞ when it is a fixed point (chart `1/z`).
    fn infinity_multiplier(&self, _lambda: Complex64) -> Option<Complex64> {
        None
    }

    /// The pole of `f_λ` closest to `z`, if the family has poles.
    fn nearest_pole(&self, _lambda: Complex64, _z: Complex64) -> Option<Complex64> {
        None
    }

    /// Branch `k` of `f_λ^{-1}(w)`; `None` where the branch is undefined
    /// (omitted or asymptotic values).
    fn inverse_branch(&self, _lambda: Complex64, _w: SpherePoint, _k: i64) -> Option<SpherePoint> {
        None
    }

    /// Indices of the inverse branches available with the given bound; empty
    /// when the family has no inverse-branch capability.
    fn branch_indices(&self, _bound: i64) -> Vec<i64> {
        Vec::new()
    }

    /// Omitted values of `f_λ` (Picard exceptional values for the built-ins).
    fn omitted_values(&self, _lambda: Complex64) -> Vec<SpherePoint> {
        Vec::new()
    }
}

/// Escape radius and pole tolerance used when mapping raw values to the sphere.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EvalPolicy {
    pub escape_radius: f64,
    pub pole_tol: f64,
}

impl Default for EvalPolicy {
    fn default() -> Self {
        EvalPolicy { escape_radius: DEFAULT_ESCAPE_RADIUS, pole_tol: 1e-12 }
    }
}

impl From<&OrbitConfig> for EvalPolicy {
    fn from(cfg: &OrbitConfig) -> Self {
        EvalPolicy { escape_radius: cfg.escape_radius, pole_tol: cfg.pole_tol }
    }
}

pub fn builtin(id: &str) -> Result<Arc<dyn Family>> {
    Ok(match id {
        "quadratic" => Arc::new(Quadratic::new()),
        "exponential" => Arc::new(Exponential::new()),
        "tangent" => Arc::new(Tangent::new()),
        "quadratic-conjugated" => Arc::new(QuadraticConjugated::new()),
        other => return Err(Error::UnknownFamily(other.to_string())),
    })
}

pub fn singular_value(fam: &dyn Family, sv_index: usize) -> Result<&SingularValue> {
    fam.singular_values()
        .get(sv_index)
        .ok_or_else(|| Error::SingularIndex { family: fam.id().to_string(), index: sv_index })
}

fn check_pole(fam: &dyn Family, lambda: Complex64, z: Complex64, tol: f64) -> bool {
    fam.nearest_pole(lambda, z).is_some_and(|p| (z - p).norm() <= tol)
}

pub fn is_pole(fam: &dyn Family, lambda: Complex64, z: SpherePoint, tol: f64) -> bool {
    match z {
        SpherePoint::Finite(z) => check_pole(fam, lambda, z, tol),
        SpherePoint::Infinity => false,
    }
}

/// `f_λ(z)` normalized onto the sphere with the default policy.
pub fn evaluate(fam: &dyn Family, lambda: Complex64, z: SpherePoint) -> Result<SpherePoint> {
    evaluate_with(fam, lambda, z, EvalPolicy::default())
}

pub fn evaluate_with(
    fam: &dyn Family,
    lambda: Complex64,
    z: SpherePoint,
    policy: EvalPolicy,
) -> Result<SpherePoint> {
    let image = advance(fam, lambda, z, policy)?;
    Ok(normalize_point(image, policy.escape_radius))
}

/// One orbit step. Unlike [`evaluate_with`], large finite values of families
/// without poles are kept as they are so that escape can be confirmed over
/// several steps; only non-finite values become `Infinity`.
pub fn advance(
    fam: &dyn Family,
    lambda: Complex64,
    z: SpherePoint,
    policy: EvalPolicy,
) -> Result<SpherePoint> {
    let dom = fam.domain();
    match z {
        SpherePoint::Infinity => {
            if !dom.infinity_in_domain {
                return Err(Error::OutsideDomain(format!(
                    "family {} is not defined at infinity",
                    fam.id()
                )));
            }
            Ok(fam.eval_infinity(lambda).unwrap_or(SpherePoint::Infinity))
        }
        SpherePoint::Finite(z) => {
            if check_pole(fam, lambda, z, policy.pole_tol) {
                return Ok(SpherePoint::Infinity);
            }
            let w = fam.eval_raw(lambda, z);
            if dom.truncates_at_infinity() {
                Ok(normalize(w, policy.escape_radius))
            } else {
                Ok(SpherePoint::from_complex(w))
            }
        }
    }
}

pub fn derivative_z(fam: &dyn Family, lambda: Complex64, z: SpherePoint) -> Result<SpherePoint> {
    match z {
        SpherePoint::Infinity => Err(Error::DerivativeChart),
        SpherePoint::Finite(z) => Ok(SpherePoint::from_complex(fam.deriv_raw(lambda, z))),
    }
}

pub fn inverse_branch(
    fam: &dyn Family,
    lambda: Complex64,
    w: SpherePoint,
    k: i64,
) -> Result<Option<SpherePoint>> {
    if fam.branch_indices(0).is_empty() {
        return Err(Error::MissingInverse(fam.id().to_string()));
    }
    Ok(fam.inverse_branch(lambda, w, k))
}

/// Exceptionality class following the exhaustive list of exceptional maps:
/// rational maps, entire maps, meromorphic maps whose single pole is omitted,
/// and self-maps of the punctured plane. Everything else is non-exceptional.
pub fn classify_exceptional(fam: &dyn Family) -> Result<ExceptionalClass> {
    let derived = derive_class(&fam.domain())?;
    match fam.declared_class() {
        Some(declared) if declared != derived => Err(Error::Unclassifiable(format!(
            "{} declares {declared:?} but its domain model implies {derived:?}",
            fam.id()
        ))),
        Some(declared) => Ok(declared),
        None => Ok(derived),
    }
}

pub fn derive_class(dom: &DomainModel) -> Result<ExceptionalClass> {
    use BoundaryModel::*;
    match (dom.boundary, dom.infinity_in_domain) {
        (EmptyBoundary, true) => match dom.poles {
            PoleCount::Infinite => {
                Err(Error::Unclassifiable("rational map with infinitely many poles".into()))
            }
            _ => Ok(ExceptionalClass::Rational),
        },
        (EmptyBoundary, false) => {
            Err(Error::Unclassifiable("empty boundary but infinity excluded".into()))
        }
        (InfinityOnly | ZeroAndInfinity, true) => {
            Err(Error::Unclassifiable("boundary point declared inside the domain".into()))
        }
        (InfinityOnly, false) => Ok(match dom.poles {
            PoleCount::Zero => ExceptionalClass::Entire,
            PoleCount::Finite(1) if dom.boundary_omitted => ExceptionalClass::MeromorphicOmittedPole,
            _ => ExceptionalClass::NonExceptional,
        }),
        (ZeroAndInfinity, false) => Ok(if dom.boundary_omitted {
            ExceptionalClass::CstarMap
        } else {
            ExceptionalClass::NonExceptional
        }),
    }
}

// ---------------------------------------------------------------------------
// Built-in families

/// `z² + λ`.
#[derive(Debug)]
pub struct Quadratic {
    svs: Vec<SingularValue>,
}

impl Quadratic {
    pub fn new() -> Self {
        Quadratic {
            svs: vec![SingularValue::critical(
                "critical value λ (critical point 0)",
                SpherePoint::from_complex,
                |_| SpherePoint::ZERO,
            )],
        }
    }
}

impl Default for Quadratic {
    fn default() -> Self {
        Self::new()
    }
}

impl Family for Quadratic {
    fn id(&self) -> &str {
        "quadratic"
    }

    fn domain(&self) -> DomainModel {
        DomainModel {
            boundary: BoundaryModel::EmptyBoundary,
            infinity_in_domain: true,
            poles: PoleCount::Finite(1),
            boundary_omitted: false,
        }
    }

    fn declared_class(&self) -> Option<ExceptionalClass> {
        Some(ExceptionalClass::Rational)
    }

    fn singular_values(&self) -> &[SingularValue] {
        &self.svs
    }

    fn eval_raw(&self, lambda: Complex64, z: Complex64) -> Complex64 {
        z * z + lambda
    }

    fn deriv_raw(&self, _lambda: Complex64, z: Complex64) -> Complex64 {
        2.0 * z
    }

    fn eval_infinity(&self, _lambda: Complex64) -> Option<SpherePoint> {
        Some(SpherePoint::Infinity)
    }

    fn infinity_multiplier(&self, _lambda: Complex64) -> Option<Complex64> {
        Some(Complex64::new(0.0, 0.0))
    }

    fn inverse_branch(&self, lambda: Complex64, w: SpherePoint, k: i64) -> Option<SpherePoint> {
        let w = match w {
            SpherePoint::Infinity => return (k == 0).then_some(SpherePoint::Infinity),
            SpherePoint::Finite(w) => w,
        };
        let root = (w - lambda).sqrt();
        match k {
            0 => Some(SpherePoint::from_complex(root)),
            1 => Some(SpherePoint::from_complex(-root)),
            _ => None,
        }
    }

    fn branch_indices(&self, _bound: i64) -> Vec<i64> {
        vec![0, 1]
    }
}

/// `g_λ = A ∘ (z² + λ) ∘ A⁻¹` with `A(z) = 2z + 1`, i.e.
/// `g_λ(z) = (z − 1)²/2 + 2λ + 1`.
#[derive(Debug)]
pub struct QuadraticConjugated {
    svs: Vec<SingularValue>,
}

impl QuadraticConjugated {
    pub fn new() -> Self {
        QuadraticConjugated {
            svs: vec![SingularValue::critical(
                "critical value 2λ+1 (critical point 1)",
                |l| SpherePoint::from_complex(2.0 * l + 1.0),
                |_| SpherePoint::new(1.0, 0.0),
            )],
        }
    }

    /// The conjugating affine map `A(z) = 2z + 1`.
    pub fn conjugacy(z: SpherePoint) -> SpherePoint {
        match z {
            SpherePoint::Finite(z) => SpherePoint::from_complex(2.0 * z + 1.0),
            SpherePoint::Infinity => SpherePoint::Infinity,
        }
    }
}

impl Default for QuadraticConjugated {
    fn default() -> Self {
        Self::new()
    }
}

impl Family for QuadraticConjugated {
    fn id(&self) -> &str {
        "quadratic-conjugated"
    }

    fn domain(&self) -> DomainModel {
        DomainModel {
            boundary: BoundaryModel::EmptyBoundary,
            infinity_in_domain: true,
            poles: PoleCount::Finite(1),
            boundary_omitted: false,
        }
    }

    fn declared_class(&self) -> Option<ExceptionalClass> {
        Some(ExceptionalClass::Rational)
    }

    fn singular_values(&self) -> &[SingularValue] {
        &self.svs
    }

    fn eval_raw(&self, lambda: Complex64, z: Complex64) -> Complex64 {
        let u = z - 1.0;
        u * u * 0.5 + 2.0 * lambda + 1.0
    }

    fn deriv_raw(&self, _lambda: Complex64, z: Complex64) -> Complex64 {
        z - 1.0
    }

    fn eval_infinity(&self, _lambda: Complex64) -> Option<SpherePoint> {
        Some(SpherePoint::Infinity)
    }

    fn infinity_multiplier(&self, _lambda: Complex64) -> Option<Complex64> {
        Some(Complex64::new(0.0, 0.0))
    }

    fn inverse_branch(&self, lambda: Complex64, w: SpherePoint, k: i64) -> Option<SpherePoint> {
        let w = match w {
            SpherePoint::Infinity => return (k == 0).then_some(SpherePoint::Infinity),
            SpherePoint::Finite(w) => w,
        };
        let root = ((w - 1.0) * 0.5 - lambda).sqrt();
        let pre = match k {
            0 => root,
            1 => -root,
            _ => return None,
        };
        Some(SpherePoint::from_complex(2.0 * pre + 1.0))
    }

    fn branch_indices(&self, _bound: i64) -> Vec<i64> {
        vec![0, 1]
    }
}

/// `λ eᶻ`, with asymptotic value 0 (omitted).
#[derive(Debug)]
pub struct Exponential {
    svs: Vec<SingularValue>,
}

impl Exponential {
    pub fn new() -> Self {
        Exponential {
            svs: vec![SingularValue::asymptotic(
                "asymptotic value 0",
                |_| SpherePoint::ZERO,
                Complex64::new(-1.0, 0.0),
            )],
        }
    }
}

impl Default for Exponential {
    fn default() -> Self {
        Self::new()
    }
}

impl Family for Exponential {
    fn id(&self) -> &str {
        "exponential"
    }

    fn domain(&self) -> DomainModel {
        DomainModel {
            boundary: BoundaryModel::InfinityOnly,
            infinity_in_domain: false,
            poles: PoleCount::Zero,
            boundary_omitted: false,
        }
    }

    fn declared_class(&self) -> Option<ExceptionalClass> {
        Some(ExceptionalClass::Entire)
    }

    fn singular_values(&self) -> &[SingularValue] {
        &self.svs
    }

    fn eval_raw(&self, lambda: Complex64, z: Complex64) -> Complex64 {
        lambda * z.exp()
    }

    fn deriv_raw(&self, lambda: Complex64, z: Complex64) -> Complex64 {
        lambda * z.exp()
    }

    fn inverse_branch(&self, lambda: Complex64, w: SpherePoint, k: i64) -> Option<SpherePoint> {
        let w = w.finite()?;
        if w == Complex64::new(0.0, 0.0) || lambda == Complex64::new(0.0, 0.0) {
            return None;
        }
        let z = (w / lambda).ln() + Complex64::new(0.0, 2.0 * PI * k as f64);
        Some(SpherePoint::from_complex(z))
    }

    fn branch_indices(&self, bound: i64) -> Vec<i64> {
        (-bound..=bound).collect()
    }

    fn omitted_values(&self, _lambda: Complex64) -> Vec<SpherePoint> {
        vec![SpherePoint::ZERO]
    }
}

/// `λ tan z`, with asymptotic values `±iλ` and poles at `π/2 + kπ`.
#[derive(Debug)]
pub struct Tangent {
    svs: Vec<SingularValue>,
}

impl Tangent {
    pub fn new() -> Self {
        Tangent {
            svs: vec![
                SingularValue::asymptotic(
                    "asymptotic value iλ",
                    |l| SpherePoint::from_complex(I * l),
                    I,
                ),
                SingularValue::asymptotic(
                    "asymptotic value -iλ",
                    |l| SpherePoint::from_complex(-I * l),
                    -I,
                ),
            ],
        }
    }
}

impl Default for Tangent {
    fn default() -> Self {
        Self::new()
    }
}

/// `(tan z, sec² z)`, accurate both near the real axis and far from it
/// (where the textbook sinh/cosh quotient overflows).
pub fn tan_sec2(z: Complex64) -> (Complex64, Complex64) {
    if z.im.abs() < 1.0 {
        let (s, c) = (z.sin(), z.cos());
        let sec = c.inv();
        return (s * sec, sec * sec);
    }
    // q = e^{2iz} for Im z > 0, e^{-2iz} otherwise; |q| < e^{-2}.
    let (q, sign) = if z.im > 0.0 { ((2.0 * I * z).exp(), 1.0) } else { ((-2.0 * I * z).exp(), -1.0) };
    let one = Complex64::new(1.0, 0.0);
    let t = I * sign * (one - q) / (one + q);
    let s2 = 4.0 * q / ((one + q) * (one + q));
    (t, s2)
}

impl Family for Tangent {
    fn id(&self) -> &str {
        "tangent"
    }

    fn domain(&self) -> DomainModel {
        DomainModel {
            boundary: BoundaryModel::InfinityOnly,
            infinity_in_domain: false,
            poles: PoleCount::Infinite,
            boundary_omitted: false,
        }
    }

    fn declared_class(&self) -> Option<ExceptionalClass> {
        Some(ExceptionalClass::NonExceptional)
    }

    fn singular_values(&self) -> &[SingularValue] {
        &self.svs
    }

    fn eval_raw(&self, lambda: Complex64, z: Complex64) -> Complex64 {
        lambda * tan_sec2(z).0
    }

    fn deriv_raw(&self, lambda: Complex64, z: Complex64) -> Complex64 {
        lambda * tan_sec2(z).1
    }

    fn nearest_pole(&self, _lambda: Complex64, z: Complex64) -> Option<Complex64> {
        let k = ((z.re - FRAC_PI_2) / PI).round();
        Some(Complex64::new(FRAC_PI_2 + k * PI, 0.0))
    }

    fn inverse_branch(&self, lambda: Complex64, w: SpherePoint, k: i64) -> Option<SpherePoint> {
        let shift = Complex64::new(PI * k as f64, 0.0);
        let w = match w {
            SpherePoint::Infinity => return Some(SpherePoint::new(FRAC_PI_2 + PI * k as f64, 0.0)),
            SpherePoint::Finite(w) => w,
        };
        if lambda == Complex64::new(0.0, 0.0) {
            return None;
        }
        let t = w / lambda;
        // tan omits ±i: those are the asymptotic values.
        if (t - I).norm() < 1e-15 || (t + I).norm() < 1e-15 {
            return None;
        }
        Some(SpherePoint::from_complex(t.atan() + shift))
    }

    fn branch_indices(&self, bound: i64) -> Vec<i64> {
        (-bound..=bound).collect()
    }

    fn omitted_values(&self, lambda: Complex64) -> Vec<SpherePoint> {
        vec![SpherePoint::from_complex(I * lambda), SpherePoint::from_complex(-I * lambda)]
    }
}

/// Summary line printed by `families list`.
#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct FamilySummary {
    pub id: String,
    pub singular_values: Vec<SingularValueSummary>,
    pub exceptional_class: ExceptionalClass,
    pub boundary_model: BoundaryModel,
    pub infinity_in_domain: bool,
    pub inverse_branches: bool,
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct SingularValueSummary {
    pub index: usize,
    pub kind: String,
    pub label: String,
}

pub fn summarize(fam: &dyn Family) -> Result<FamilySummary> {
    Ok(FamilySummary {
        id: fam.id().to_string(),
        singular_values: fam
            .singular_values()
            .iter()
            .enumerate()
            .map(|(index, sv)| SingularValueSummary {
                index,
                kind: sv.kind_name().to_string(),
                label: sv.label.clone(),
            })
            .collect(),
        exceptional_class: classify_exceptional(fam)?,
        boundary_model: fam.domain().boundary,
        infinity_in_domain: fam.domain().infinity_in_domain,
        inverse_branches: !fam.branch_indices(0).is_empty(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    fn fin(re: f64, im: f64) -> SpherePoint {
        SpherePoint::new(re, im)
    }

    fn all() -> Vec<Arc<dyn Family>> {
        BUILTIN_IDS.iter().map(|id| builtin(id).unwrap()).collect()
    }

    #[test]
    fn unknown_family() {
        let err = builtin("bogus").unwrap_err();
        assert!(err.to_string().contains("unknown family"));
    }

    #[test]
    fn builtin_singular_values() {
        let q = builtin("quadratic").unwrap();
        assert_eq!(q.singular_values().len(), 1);
        assert_eq!(q.singular_values()[0].value(c(0.3, 0.1)), fin(0.3, 0.1));
        assert_eq!(q.singular_values()[0].critical_point(c(0.3, 0.1)), Some(SpherePoint::ZERO));

        let t = builtin("tangent").unwrap();
        let l = c(0.7, -0.2);
        let svs: Vec<_> = t.singular_values().iter().map(|s| s.value(l)).collect();
        assert_eq!(svs, vec![SpherePoint::from_complex(I * l), SpherePoint::from_complex(-I * l)]);
        assert!(t.singular_values().iter().all(|s| s.is_asymptotic()));
        // tan(iy) -> ±i as y -> ±inf
        let far = t.eval_raw(c(1.0, 0.0), c(0.0, 40.0));
        assert!((far - I).norm() < 1e-15);
        let far = t.eval_raw(c(1.0, 0.0), c(0.0, -40.0));
        assert!((far + I).norm() < 1e-15);
    }

    #[test]
    fn evaluate_examples() {
        let q = builtin("quadratic").unwrap();
        assert_eq!(evaluate(q.as_ref(), I, SpherePoint::ZERO).unwrap(), fin(0.0, 1.0));
        assert_eq!(evaluate(q.as_ref(), I, SpherePoint::Infinity).unwrap(), SpherePoint::Infinity);

        let t = builtin("tangent").unwrap();
        let v = evaluate(t.as_ref(), c(1.0, 0.0), fin(PI / 4.0, 0.0)).unwrap();
        assert!((v.finite().unwrap() - 1.0).norm() < 1e-15);
        let v = evaluate(t.as_ref(), c(1.0, 0.0), fin(FRAC_PI_2, 0.0)).unwrap();
        assert_eq!(v, SpherePoint::Infinity);

        let err = evaluate(t.as_ref(), c(1.0, 0.0), SpherePoint::Infinity).unwrap_err();
        assert!(err.to_string().contains("outside domain"));
        let e = builtin("exponential").unwrap();
        assert!(evaluate(e.as_ref(), c(1.0, 0.0), SpherePoint::Infinity).is_err());
    }

    #[test]
    fn derivative_examples() {
        let q = builtin("quadratic").unwrap();
        assert_eq!(derivative_z(q.as_ref(), c(5.0, 1.0), fin(1.0, 0.0)).unwrap(), fin(2.0, 0.0));
        let e = builtin("exponential").unwrap();
        assert_eq!(derivative_z(e.as_ref(), c(2.0, 0.0), SpherePoint::ZERO).unwrap(), fin(2.0, 0.0));
        let t = builtin("tangent").unwrap();
        assert_eq!(derivative_z(t.as_ref(), c(3.0, 0.0), SpherePoint::ZERO).unwrap(), fin(3.0, 0.0));
        let err = derivative_z(t.as_ref(), c(3.0, 0.0), SpherePoint::Infinity).unwrap_err();
        assert!(err.to_string().contains("derivative chart"));
    }

    #[test]
    fn exceptional_classes() {
        let class = |id| classify_exceptional(builtin(id).unwrap().as_ref()).unwrap();
        assert_eq!(class("quadratic"), ExceptionalClass::Rational);
        assert_eq!(class("quadratic-conjugated"), ExceptionalClass::Rational);
        assert_eq!(class("exponential"), ExceptionalClass::Entire);
        assert_eq!(class("tangent"), ExceptionalClass::NonExceptional);
    }

    #[test]
    fn tangent_poles_are_not_omitted() {
        // Oracle: preimages of ∞ are distinct poles, and none of them is an
        // omitted value, so the backward orbit of ∞ is infinite.
        let t = builtin("tangent").unwrap();
        let l = c(0.8, 0.3);
        let mut poles: Vec<Complex64> = Vec::new();
        for k in -20..=20 {
            let p = t.inverse_branch(l, SpherePoint::Infinity, k).unwrap().finite().unwrap();
            assert_eq!(evaluate(t.as_ref(), l, SpherePoint::from_complex(p)).unwrap(), SpherePoint::Infinity);
            if !poles.iter().any(|q| (q - p).norm() < 1e-9) {
                poles.push(p);
            }
        }
        assert_eq!(poles.len(), 41);
        let omitted = t.omitted_values(l);
        for p in &poles {
            // poles lie on the real line, the omitted values ±iλ do not
            assert!(omitted.iter().all(|o| (o.finite().unwrap() - p).norm() > 1e-3));
            // and each pole has preimages of its own
            let pre = t.inverse_branch(l, SpherePoint::from_complex(*p), 0).unwrap();
            let back = evaluate(t.as_ref(), l, pre).unwrap().finite().unwrap();
            assert!((back - p).norm() < 1e-9);
        }
    }

    #[derive(Debug)]
    struct Custom(DomainModel, Option<ExceptionalClass>);

    impl Family for Custom {
        fn id(&self) -> &str {
            "custom"
        }
        fn domain(&self) -> DomainModel {
            self.0
        }
        fn declared_class(&self) -> Option<ExceptionalClass> {
            self.1
        }
        fn singular_values(&self) -> &[SingularValue] {
            &[]
        }
        fn eval_raw(&self, _l: Complex64, z: Complex64) -> Complex64 {
            z
        }
        fn deriv_raw(&self, _l: Complex64, _z: Complex64) -> Complex64 {
            Complex64::new(1.0, 0.0)
        }
    }

    #[test]
    fn derived_classes_follow_the_exhaustive_list() {
        let dom = |boundary, infinity_in_domain, poles, boundary_omitted| DomainModel {
            boundary,
            infinity_in_domain,
            poles,
            boundary_omitted,
        };
        use BoundaryModel::*;
        let cases = [
            (dom(InfinityOnly, false, PoleCount::Finite(1), true), ExceptionalClass::MeromorphicOmittedPole),
            (dom(InfinityOnly, false, PoleCount::Finite(1), false), ExceptionalClass::NonExceptional),
            (dom(InfinityOnly, false, PoleCount::Finite(3), false), ExceptionalClass::NonExceptional),
            (dom(InfinityOnly, false, PoleCount::Zero, false), ExceptionalClass::Entire),
            (dom(ZeroAndInfinity, false, PoleCount::Zero, true), ExceptionalClass::CstarMap),
            (dom(ZeroAndInfinity, false, PoleCount::Zero, false), ExceptionalClass::NonExceptional),
            (dom(EmptyBoundary, true, PoleCount::Finite(2), false), ExceptionalClass::Rational),
        ];
        for (d, expected) in cases {
            assert_eq!(classify_exceptional(&Custom(d, None)).unwrap(), expected, "{d:?}");
        }
        let bad = dom(EmptyBoundary, false, PoleCount::Zero, false);
        assert!(classify_exceptional(&Custom(bad, None))
            .unwrap_err()
            .to_string()
            .contains("unclassifiable"));
        let mismatched = dom(InfinityOnly, false, PoleCount::Zero, false);
        assert!(classify_exceptional(&Custom(mismatched, Some(ExceptionalClass::Rational))).is_err());
    }

    fn random_point(rng: &mut ChaCha8Rng, id: &str) -> (Complex64, Complex64) {
        loop {
            let l = c(rng.gen_range(-2.0..2.0), rng.gen_range(-2.0..2.0));
            let z = c(rng.gen_range(-2.0..2.0), rng.gen_range(-2.0..2.0));
            if id == "tangent" {
                let k = ((z.re - FRAC_PI_2) / PI).round();
                let pole = c(FRAC_PI_2 + k * PI, 0.0);
                if (z - pole).norm() < 0.4 {
                    continue;
                }
            }
            return (l, z);
        }
    }

    #[test]
    fn finite_difference_matches_derivative() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let h = 1e-6;
        for fam in all() {
            for _ in 0..100 {
                let (l, z) = random_point(&mut rng, fam.id());
                let fd = (fam.eval_raw(l, z + h) - fam.eval_raw(l, z - h)) / (2.0 * h);
                let d = fam.deriv_raw(l, z);
                assert!((fd - d).norm() < 1e-5, "{} at λ={l}, z={z}: {fd} vs {d}", fam.id());
            }
        }
    }

    #[test]
    fn holomorphic_in_both_variables() {
        // Cauchy–Riemann: ∂f/∂x = -i ∂f/∂y, in z and in λ.
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let h = 1e-6;
        for fam in all() {
            for _ in 0..50 {
                let (l, z) = random_point(&mut rng, fam.id());
                let dx = (fam.eval_raw(l, z + h) - fam.eval_raw(l, z - h)) / (2.0 * h);
                let dy = (fam.eval_raw(l, z + I * h) - fam.eval_raw(l, z - I * h)) / (2.0 * h);
                assert!((dx + I * dy).norm() < 1e-6 * (1.0 + dx.norm()), "{} z-CR", fam.id());
                let dx = (fam.eval_raw(l + h, z) - fam.eval_raw(l - h, z)) / (2.0 * h);
                let dy = (fam.eval_raw(l + I * h, z) - fam.eval_raw(l - I * h, z)) / (2.0 * h);
                assert!((dx + I * dy).norm() < 1e-6 * (1.0 + dx.norm()), "{} λ-CR", fam.id());
            }
        }
    }

    #[test]
    fn critical_points_map_to_critical_values() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for fam in all() {
            for sv in fam.singular_values() {
                let Some(_) = sv.critical_point(Complex64::new(0.0, 0.0)) else { continue };
                for _ in 0..100 {
                    let l = c(rng.gen_range(-2.0..2.0), rng.gen_range(-2.0..2.0));
                    let cp = sv.critical_point(l).unwrap();
                    let img = evaluate(fam.as_ref(), l, cp).unwrap();
                    assert!(crate::sphere::chordal_distance(img, sv.value(l)) < 1e-9);
                    let d = derivative_z(fam.as_ref(), l, cp).unwrap();
                    assert!(crate::sphere::chordal_distance(d, SpherePoint::ZERO) < 1e-9);
                }
            }
        }
    }

    #[test]
    fn inverse_branches_invert() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for fam in all() {
            for _ in 0..100 {
                let l = c(rng.gen_range(0.2..2.0), rng.gen_range(-1.0..1.0));
                let w = c(rng.gen_range(-3.0..3.0), rng.gen_range(-3.0..3.0));
                for k in fam.branch_indices(3) {
                    let Some(z) = inverse_branch(fam.as_ref(), l, SpherePoint::from_complex(w), k).unwrap()
                    else {
                        continue;
                    };
                    let back = evaluate(fam.as_ref(), l, z).unwrap();
                    let d = crate::sphere::chordal_distance(back, SpherePoint::from_complex(w));
                    assert!(d < 1e-9, "{} branch {k}: {d}", fam.id());
                }
            }
        }
    }

    #[test]
    fn conjugated_family_is_conjugate() {
        let q = Quadratic::new();
        let g = QuadraticConjugated::new();
        let l = c(-0.4, 0.6);
        for z in [c(0.0, 0.0), c(1.0, -2.0), c(0.3, 0.3)] {
            let lhs = evaluate(&g, l, QuadraticConjugated::conjugacy(SpherePoint::from_complex(z))).unwrap();
            let rhs = QuadraticConjugated::conjugacy(evaluate(&q, l, SpherePoint::from_complex(z)).unwrap());
            assert!(crate::sphere::chordal_distance(lhs, rhs) < 1e-14);
        }
    }

    #[test]
    fn robust_tangent_far_from_axis() {
        let (t, s2) = tan_sec2(c(0.3, 400.0));
        assert!((t - I).norm() < 1e-15);
        assert!(s2.norm() < 1e-300 && s2.norm().is_finite());
        let (t, _) = tan_sec2(c(0.3, -400.0));
        assert!((t + I).norm() < 1e-15);
    }

    #[test]
    fn missing_inverse_capability() {
        let custom = Custom(
            DomainModel {
                boundary: BoundaryModel::EmptyBoundary,
                infinity_in_domain: true,
                poles: PoleCount::Zero,
                boundary_omitted: false,
            },
            None,
        );
        assert!(inverse_branch(&custom, I, SpherePoint::ZERO, 0).is_err());
    }
}
