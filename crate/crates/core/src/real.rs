//! Nonnegative reals that stay exact rationals while they can.

use std::fmt;

use num_bigint::BigInt;
use num_rational::{BigRational, Rational64};
use num_traits::{One, ToPrimitive, Zero};
use serde_json::{json, Value};

use crate::padic::{format_rational, p_power};

/// Relative rounding slack charged per floating operation.
const ULP: f64 = 4.0 * f64::EPSILON;

#[derive(Clone, Debug, PartialEq)]
pub enum Real {
    Exact(BigRational),
    /// A float together with an absolute error bound.
    Approx {
        value: f64,
        err: f64,
    },
}

impl Real {
    pub fn zero() -> Self {
        Real::Exact(BigRational::zero())
    }

    pub fn one() -> Self {
        Real::Exact(BigRational::one())
    }

    pub fn from_f64(value: f64) -> Self {
        Real::Approx {
            value,
            err: value.abs() * ULP,
        }
    }

    pub fn int(x: i64) -> Self {
        Real::Exact(BigRational::from_integer(BigInt::from(x)))
    }

    /// `p^e`, exact when `e` is an integer.
    pub fn p_pow(p: u64, e: Rational64) -> Self {
        if e.is_integer() {
            Real::Exact(p_power(p, e.to_integer()))
        } else {
            Self::from_f64((p as f64).powf(ratio_f64(e)))
        }
    }

    pub fn value(&self) -> f64 {
        match self {
            Real::Exact(q) => q.to_f64().unwrap_or(f64::NAN),
            Real::Approx { value, .. } => *value,
        }
    }

    pub fn error(&self) -> f64 {
        match self {
            Real::Exact(_) => 0.0,
            Real::Approx { err, .. } => *err,
        }
    }

    pub fn as_exact(&self) -> Option<&BigRational> {
        match self {
            Real::Exact(q) => Some(q),
            Real::Approx { .. } => None,
        }
    }

    pub fn add(&self, other: &Real) -> Real {
        match (self, other) {
            (Real::Exact(a), Real::Exact(b)) => Real::Exact(a + b),
            _ => {
                let v = self.value() + other.value();
                Real::Approx {
                    value: v,
                    err: self.error() + other.error() + v.abs() * ULP,
                }
            }
        }
    }

    pub fn sub(&self, other: &Real) -> Real {
        match (self, other) {
            (Real::Exact(a), Real::Exact(b)) => Real::Exact(a - b),
            _ => {
                let v = self.value() - other.value();
                Real::Approx {
                    value: v,
                    err: self.error()
                        + other.error()
                        + (self.value().abs() + other.value().abs()) * ULP,
                }
            }
        }
    }

    pub fn mul(&self, other: &Real) -> Real {
        match (self, other) {
            (Real::Exact(a), Real::Exact(b)) => Real::Exact(a * b),
            _ => {
                let (a, b) = (self.value(), other.value());
                let v = a * b;
                Real::Approx {
                    value: v,
                    err: a.abs() * other.error()
                        + b.abs() * self.error()
                        + self.error() * other.error()
                        + v.abs() * ULP,
                }
            }
        }
    }

    /// Quotient; the divisor must be bounded away from zero.
    pub fn div(&self, other: &Real) -> Real {
        match (self, other) {
            (Real::Exact(a), Real::Exact(b)) => Real::Exact(a / b),
            _ => {
                let (a, b) = (self.value(), other.value());
                let v = a / b;
                let rel = self.error() / a.abs().max(f64::MIN_POSITIVE)
                    + other.error() / (b.abs() - other.error()).max(f64::MIN_POSITIVE);
                Real::Approx {
                    value: v,
                    err: v.abs() * (rel + ULP),
                }
            }
        }
    }

    /// `x^e` for positive `x`; exact when `x` is exact and `e` an integer.
    pub fn pow_rational(&self, e: Rational64) -> Real {
        match self {
            Real::Exact(q) if e.is_integer() => {
                let k = e.to_integer();
                let base = if k < 0 { q.recip() } else { q.clone() };
                Real::Exact(num_traits::pow(base, k.unsigned_abs() as usize))
            }
            _ => Real::from_f64(self.value().powf(ratio_f64(e))),
        }
    }

    pub fn to_json(&self) -> Value {
        match self {
            Real::Exact(q) => json!(format_rational(q)),
            Real::Approx { value, err } => json!({"value": value, "err": err}),
        }
    }
}

impl fmt::Display for Real {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Real::Exact(q) => write!(f, "{}", format_rational(q)),
            Real::Approx { value, err } => write!(f, "{value} ± {err:.1e}"),
        }
    }
}

pub fn ratio_f64(q: Rational64) -> f64 {
    *q.numer() as f64 / *q.denom() as f64
}

pub fn big_to_f64(q: &BigRational) -> f64 {
    q.to_f64().unwrap_or(f64::NAN)
}
