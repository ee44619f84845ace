//! Scalar abstraction and the extended-real sentinel used for Bohl exponents.

use std::cmp::Ordering;
use std::fmt;

use nalgebra::RealField;
use num_traits::{FromPrimitive, ToPrimitive};
use serde::{Deserialize, Deserializer, Serialize, Serializer};

/// Floating-point scalar the numerical core is generic over (`f32` or `f64`).
pub trait Real:
    RealField + Copy + FromPrimitive + ToPrimitive + fmt::Debug + fmt::Display + Send + Sync + 'static
{
    /// Converts an `f64` literal into the scalar type.
    fn lit(x: f64) -> Self {
        Self::from_f64(x).expect("literal representable in scalar type")
    }

    fn as_f64(self) -> f64 {
        self.to_f64().expect("scalar converts to f64")
    }

    fn from_usize_lossy(n: usize) -> Self {
        Self::lit(n as f64)
    }

    fn from_i64_lossy(n: i64) -> Self {
        Self::lit(n as f64)
    }

    /// Machine epsilon of the scalar type.
    fn eps() -> Self;
}

impl Real for f32 {
    fn eps() -> Self {
        f32::EPSILON
    }
}

impl Real for f64 {
    fn eps() -> Self {
        f64::EPSILON
    }
}

/// A real number or one of the two infinities.
///
/// Exponents of the zero subspace and the outermost resolvent gaps are
/// infinite; they are carried as explicit variants so that tolerance
/// comparisons never see a floating-point infinity.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Extended<T> {
    NegInf,
    Finite(T),
    PosInf,
}

impl<T: Real> Extended<T> {
    pub fn finite(self) -> Option<T> {
        match self {
            Extended::Finite(x) => Some(x),
            _ => None,
        }
    }

    pub fn is_finite(self) -> bool {
        matches!(self, Extended::Finite(_))
    }

    /// Adds a finite offset; infinities absorb it.
    pub fn offset(self, by: T) -> Self {
        match self {
            Extended::Finite(x) => Extended::Finite(x + by),
            other => other,
        }
    }

    pub fn to_f64(self) -> f64 {
        match self {
            Extended::NegInf => f64::NEG_INFINITY,
            Extended::Finite(x) => x.as_f64(),
            Extended::PosInf => f64::INFINITY,
        }
    }

    /// Total order on the extended reals (NaN compares as equal).
    pub fn cmp_ext(&self, other: &Self) -> Ordering {
        use Extended::*;
        match (self, other) {
            (NegInf, NegInf) | (PosInf, PosInf) => Ordering::Equal,
            (NegInf, _) | (_, PosInf) => Ordering::Less,
            (_, NegInf) | (PosInf, _) => Ordering::Greater,
            (Finite(a), Finite(b)) => a.partial_cmp(b).unwrap_or(Ordering::Equal),
        }
    }

    pub fn max_ext(self, other: Self) -> Self {
        if self.cmp_ext(&other) == Ordering::Less {
            other
        } else {
            self
        }
    }

    pub fn min_ext(self, other: Self) -> Self {
        if self.cmp_ext(&other) == Ordering::Greater {
            other
        } else {
            self
        }
    }

    /// `self - other`, or `None` when both are the same infinity.
    pub fn width_to(self, upper: Self) -> Extended<T> {
        use Extended::*;
        match (self, upper) {
            (Finite(a), Finite(b)) => Finite(b - a),
            (NegInf, PosInf) | (NegInf, Finite(_)) | (Finite(_), PosInf) => PosInf,
            _ => NegInf,
        }
    }

    /// True when `self <= other + tol` on the extended line.
    pub fn le_tol(self, other: Self, tol: T) -> bool {
        use Extended::*;
        match (self, other) {
            (NegInf, _) | (_, PosInf) => true,
            (PosInf, _) | (_, NegInf) => false,
            (Finite(a), Finite(b)) => a <= b + tol,
        }
    }

    pub fn cast<S: Real>(self) -> Extended<S> {
        match self {
            Extended::NegInf => Extended::NegInf,
            Extended::Finite(x) => Extended::Finite(S::lit(x.as_f64())),
            Extended::PosInf => Extended::PosInf,
        }
    }
}

impl<T: Real> fmt::Display for Extended<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Extended::NegInf => write!(f, "-inf"),
            Extended::Finite(x) => write!(f, "{x}"),
            Extended::PosInf => write!(f, "inf"),
        }
    }
}

impl<T: Real> Serialize for Extended<T> {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        match self {
            Extended::NegInf => s.serialize_str("-inf"),
            Extended::Finite(x) => s.serialize_f64(x.as_f64()),
            Extended::PosInf => s.serialize_str("inf"),
        }
    }
}

impl<'de, T: Real> Deserialize<'de> for Extended<T> {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Num(f64),
            Text(String),
        }
        match Raw::deserialize(d)? {
            Raw::Num(x) => Ok(Extended::Finite(T::lit(x))),
            Raw::Text(t) => match t.as_str() {
                "-inf" => Ok(Extended::NegInf),
                "inf" | "+inf" => Ok(Extended::PosInf),
                other => {
                    Err(serde::de::Error::custom(format!("expected a number, \"-inf\" or \"inf\", got {other:?}")))
                }
            },
        }
    }
}
