//! Points of the Riemann sphere and the chordal metric.
//!
//! Every convergence and proximity test in the crate goes through
//! [`chordal_distance`], so poles, escaping orbits and cycles at infinity are
//! handled by the same code path as ordinary finite points.

use std::fmt;

use num_complex::Complex64;
use serde::de::{self, Deserializer, MapAccess, Visitor};
use serde::ser::{SerializeStruct, Serializer};
use serde::{Deserialize, Serialize};

/// Default escape radius used for fate classification.
pub const DEFAULT_ESCAPE_RADIUS: f64 = 1e12;

/// A point of the Riemann sphere.
///
/// `Finite` values always carry finite real and imaginary parts; anything that
/// overflows is represented as `Infinity` (see [`normalize`]).
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum SpherePoint {
    Finite(Complex64),
    Infinity,
}

impl SpherePoint {
    pub const ZERO: SpherePoint = SpherePoint::Finite(Complex64 { re: 0.0, im: 0.0 });

    /// Builds a finite point. Non-finite inputs map to `Infinity`.
    pub fn new(re: f64, im: f64) -> Self {
        Self::from_complex(Complex64::new(re, im))
    }

    pub fn from_complex(z: Complex64) -> Self {
        if z.re.is_finite() && z.im.is_finite() {
            SpherePoint::Finite(z)
        } else {
            SpherePoint::Infinity
        }
    }

    pub fn is_infinite(&self) -> bool {
        matches!(self, SpherePoint::Infinity)
    }

    pub fn finite(&self) -> Option<Complex64> {
        match *self {
            SpherePoint::Finite(z) => Some(z),
            SpherePoint::Infinity => None,
        }
    }

    /// Modulus, `f64::INFINITY` at the point at infinity.
    pub fn norm(&self) -> f64 {
        match self {
            SpherePoint::Finite(z) => z.norm(),
            SpherePoint::Infinity => f64::INFINITY,
        }
    }

    /// The antipode `-1/conj(z)` of the point on the sphere.
    pub fn antipode(&self) -> SpherePoint {
        match *self {
            SpherePoint::Infinity => SpherePoint::ZERO,
            SpherePoint::Finite(z) if z == Complex64::new(0.0, 0.0) => SpherePoint::Infinity,
            SpherePoint::Finite(z) => SpherePoint::from_complex(-recip(z.conj())),
        }
    }
}

impl From<Complex64> for SpherePoint {
    fn from(z: Complex64) -> Self {
        SpherePoint::from_complex(z)
    }
}

impl fmt::Display for SpherePoint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SpherePoint::Finite(z) => write!(f, "{}", z),
            SpherePoint::Infinity => f.write_str("inf"),
        }
    }
}

/// Chordal distance `2|a-b| / (sqrt(1+|a|^2) sqrt(1+|b|^2))`, in `[0, 2]`.
pub fn chordal_distance(a: SpherePoint, b: SpherePoint) -> f64 {
    match (a, b) {
        (SpherePoint::Infinity, SpherePoint::Infinity) => 0.0,
        (SpherePoint::Finite(z), SpherePoint::Infinity)
        | (SpherePoint::Infinity, SpherePoint::Finite(z)) => 2.0 / (1.0 + z.norm_sqr()).sqrt(),
        (SpherePoint::Finite(z), SpherePoint::Finite(w)) => {
            if z == w {
                return 0.0;
            }
            // Large moduli: work in the reciprocal chart to avoid overflow in |z|^2.
            let (nz, nw) = (z.norm(), w.norm());
            if nz > 1.0 && nw > 1.0 {
                let (u, v) = (recip(z), recip(w));
                let d = 2.0 * (u - v).norm()
                    / ((1.0 + u.norm_sqr()).sqrt() * (1.0 + v.norm_sqr()).sqrt());
                return d.min(2.0);
            }
            let d = 2.0 * (z - w).norm() / (hypot1(nz) * hypot1(nw));
            d.min(2.0)
        }
    }
}

/// `1/z` without the overflow of `conj(z)/|z|^2` (Smith's algorithm).
pub fn recip(z: Complex64) -> Complex64 {
    let (a, b) = (z.re, z.im);
    if a.abs() >= b.abs() {
        let r = b / a;
        let d = a + b * r;
        Complex64::new(1.0 / d, -r / d)
    } else {
        let r = a / b;
        let d = a * r + b;
        Complex64::new(r / d, -1.0 / d)
    }
}

fn hypot1(r: f64) -> f64 {
    1.0f64.hypot(r)
}

/// Maps a raw complex value onto the sphere under the escape-radius policy.
pub fn normalize(z: Complex64, escape_radius: f64) -> SpherePoint {
    debug_assert!(escape_radius > 1.0);
    if !(z.re.is_finite() && z.im.is_finite()) || z.norm() > escape_radius {
        SpherePoint::Infinity
    } else {
        SpherePoint::Finite(z)
    }
}

/// Re-applies [`normalize`] to a point already on the sphere.
pub fn normalize_point(p: SpherePoint, escape_radius: f64) -> SpherePoint {
    match p {
        SpherePoint::Finite(z) => normalize(z, escape_radius),
        SpherePoint::Infinity => SpherePoint::Infinity,
    }
}

pub fn approx_equal(a: SpherePoint, b: SpherePoint, tol: f64) -> bool {
    chordal_distance(a, b) <= tol
}

impl Serialize for SpherePoint {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        match self {
            SpherePoint::Finite(z) => {
                let mut s = serializer.serialize_struct("SpherePoint", 2)?;
                s.serialize_field("re", &z.re)?;
                s.serialize_field("im", &z.im)?;
                s.end()
            }
            SpherePoint::Infinity => serializer.serialize_str("inf"),
        }
    }
}

impl<'de> Deserialize<'de> for SpherePoint {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        struct PointVisitor;

        impl<'de> Visitor<'de> for PointVisitor {
            type Value = SpherePoint;

            fn expecting(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(r#"{"re": .., "im": ..} or "inf""#)
            }

            fn visit_str<E: de::Error>(self, v: &str) -> Result<SpherePoint, E> {
                if v == "inf" {
                    Ok(SpherePoint::Infinity)
                } else {
                    Err(E::invalid_value(de::Unexpected::Str(v), &self))
                }
            }

            fn visit_map<A: MapAccess<'de>>(self, mut map: A) -> Result<SpherePoint, A::Error> {
                let mut re = None;
                let mut im = None;
                while let Some(key) = map.next_key::<String>()? {
                    match key.as_str() {
                        "re" => re = Some(map.next_value::<f64>()?),
                        "im" => im = Some(map.next_value::<f64>()?),
                        other => return Err(de::Error::unknown_field(other, &["re", "im"])),
                    }
                }
                let re = re.ok_or_else(|| de::Error::missing_field("re"))?;
                let im = im.ok_or_else(|| de::Error::missing_field("im"))?;
                if !(re.is_finite() && im.is_finite()) {
                    return Err(de::Error::custom("non-finite coordinates"));
                }
                Ok(SpherePoint::Finite(Complex64::new(re, im)))
            }
        }

        deserializer.deserialize_any(PointVisitor)
    }
}

/// Serde adapter writing a `Complex64` as `{"re": .., "im": ..}`.
pub mod complex_json {
    use num_complex::Complex64;
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    #[derive(Serialize, Deserialize)]
    #[serde(deny_unknown_fields)]
    struct Repr {
        re: f64,
        im: f64,
    }

    pub fn serialize<S: Serializer>(z: &Complex64, s: S) -> Result<S::Ok, S::Error> {
        Repr { re: z.re, im: z.im }.serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Complex64, D::Error> {
        let r = Repr::deserialize(d)?;
        Ok(Complex64::new(r.re, r.im))
    }

    pub mod vec {
        use super::Repr;
        use num_complex::Complex64;
        use serde::{Deserialize, Deserializer, Serialize, Serializer};

        pub fn serialize<S: Serializer>(v: &[Complex64], s: S) -> Result<S::Ok, S::Error> {
            let reprs: Vec<Repr> = v.iter().map(|z| Repr { re: z.re, im: z.im }).collect();
            reprs.serialize(s)
        }

        pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<Complex64>, D::Error> {
            let reprs = Vec::<Repr>::deserialize(d)?;
            Ok(reprs.into_iter().map(|r| Complex64::new(r.re, r.im)).collect())
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn p(re: f64, im: f64) -> SpherePoint {
        SpherePoint::new(re, im)
    }

    #[test]
    fn chordal_endpoints() {
        assert_eq!(chordal_distance(p(0.0, 0.0), SpherePoint::Infinity), 2.0);
        assert_eq!(chordal_distance(p(1.0, 0.0), p(1.0, 0.0)), 0.0);
        assert!((chordal_distance(p(1.0, 0.0), p(-1.0, 0.0)) - 2.0).abs() < 1e-15);
        assert_eq!(chordal_distance(SpherePoint::Infinity, SpherePoint::Infinity), 0.0);
    }

    #[test]
    fn normalize_policy() {
        let r = 1e6;
        assert_eq!(normalize(Complex64::new(3.0, 4.0), r), p(3.0, 4.0));
        assert_eq!(normalize(Complex64::new(1e9, 0.0), r), SpherePoint::Infinity);
        assert_eq!(normalize(Complex64::new(f64::INFINITY, 0.0), r), SpherePoint::Infinity);
        assert_eq!(normalize(Complex64::new(f64::NAN, 1.0), r), SpherePoint::Infinity);
    }

    #[test]
    fn approx_equal_cases() {
        assert!(approx_equal(p(0.0, 0.0), p(1e-12, 0.0), 1e-9));
        assert!(!approx_equal(p(0.0, 0.0), SpherePoint::Infinity, 1e-9));
        // 2/sqrt(1+1e18) is about 2e-9.
        assert!(approx_equal(p(1e9, 0.0), SpherePoint::Infinity, 1e-6));
    }

    #[test]
    fn large_points_use_reciprocal_chart() {
        let a = p(1e200, 0.0);
        let b = p(2e200, 0.0);
        let d = chordal_distance(a, b);
        assert!(d.is_finite() && d > 0.0 && d < 1e-199);
    }

    #[test]
    fn json_shapes() {
        assert_eq!(serde_json::to_string(&SpherePoint::Infinity).unwrap(), "\"inf\"");
        assert_eq!(serde_json::to_string(&p(1.5, -2.0)).unwrap(), r#"{"re":1.5,"im":-2.0}"#);
        assert!(serde_json::from_str::<SpherePoint>("\"nan\"").is_err());
        assert!(serde_json::from_str::<SpherePoint>(r#"{"re":1.0}"#).is_err());
    }

    fn any_point() -> impl Strategy<Value = SpherePoint> {
        prop_oneof![
            1 => Just(SpherePoint::Infinity),
            8 => (-1e3f64..1e3, -1e3f64..1e3).prop_map(|(a, b)| p(a, b)),
            3 => (-2f64..2.0, -2f64..2.0).prop_map(|(a, b)| p(a, b)),
        ]
    }

    proptest! {
        #[test]
        fn metric_axioms(a in any_point(), b in any_point(), c in any_point()) {
            let ab = chordal_distance(a, b);
            prop_assert!((ab - chordal_distance(b, a)).abs() <= 1e-12);
            prop_assert!((0.0..=2.0).contains(&ab));
            prop_assert!(ab <= chordal_distance(a, c) + chordal_distance(c, b) + 1e-12);
        }

        #[test]
        fn antipodes_are_at_distance_two(a in any_point()) {
            prop_assert!((chordal_distance(a, a.antipode()) - 2.0).abs() <= 1e-12);
        }

        #[test]
        fn normalize_idempotent(re in -1e13f64..1e13, im in -1e13f64..1e13) {
            let r = DEFAULT_ESCAPE_RADIUS;
            let once = normalize(Complex64::new(re, im), r);
            prop_assert_eq!(normalize_point(once, r), once);
        }

        #[test]
        fn json_round_trip_is_bit_exact(a in any_point()) {
            let s = serde_json::to_string(&a).unwrap();
            let back: SpherePoint = serde_json::from_str(&s).unwrap();
            match (a, back) {
                (SpherePoint::Finite(x), SpherePoint::Finite(y)) => {
                    prop_assert_eq!(x.re.to_bits(), y.re.to_bits());
                    prop_assert_eq!(x.im.to_bits(), y.im.to_bits());
                }
                (x, y) => prop_assert_eq!(x, y),
            }
        }
    }
}
