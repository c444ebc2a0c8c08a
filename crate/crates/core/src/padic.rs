//! Truncated p-adic scalars.
//!
//! A nonzero inexact scalar is stored as `p^v * u` where the unit `u` is known
//! modulo `p^N` (relative precision `N`). Multiplicative operations keep the
//! smaller of the two relative precisions; addition follows absolute-precision
//! rules and may lose digits to cancellation.
//!
//! Two further states exist beside the usual inexact value:
//!
//! * exact scalars hold a rational number and never lose precision, so integer
//!   and rational inputs stay exact through whole computations;
//! * a *vanishing* scalar `O(p^a)` is only known to lie in `p^a O_p`. It is the
//!   outcome of a complete cancellation. [`PadicScalar::add`] reports that case
//!   as [`HuaError::PrecisionExhausted`]; the `*_or_vanish` variants used by the
//!   elimination routines return it instead.

use std::cmp::min;
use std::fmt;

use num_bigint::{BigInt, BigUint};
use num_integer::Integer;
use num_rational::BigRational;
use num_traits::{One, ToPrimitive, Zero};
use serde_json::{json, Value};

use crate::error::{HuaError, Result};

/// Relative precision used when callers do not ask for anything else.
pub const DEFAULT_PRECISION: u32 = 32;

/// The p-adic valuation of a scalar, as far as it is known.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Valuation {
    Finite(i64),
    /// Exact zero.
    Infinite,
    /// Indistinguishable from zero; the true valuation is at least this.
    AtLeast(i64),
}

impl Valuation {
    pub fn finite(self) -> Option<i64> {
        match self {
            Valuation::Finite(v) => Some(v),
            _ => None,
        }
    }
}

/// Relative precision of a scalar.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Precision {
    Exact,
    Digits(u32),
}

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
enum Digits {
    Small(u64),
    Big(BigUint),
}

impl Digits {
    fn to_biguint(&self) -> BigUint {
        match self {
            Digits::Small(x) => BigUint::from(*x),
            Digits::Big(x) => x.clone(),
        }
    }

    fn is_zero(&self) -> bool {
        match self {
            Digits::Small(x) => *x == 0,
            Digits::Big(x) => x.is_zero(),
        }
    }
}

/// Arithmetic modulo `p^k`, on machine words whenever `p^k` fits in a `u64`.
#[derive(Clone, Debug)]
enum Modulus {
    Small(u64),
    Big(BigUint),
}

impl Modulus {
    fn new(p: u64, k: u32) -> Self {
        match p.checked_pow(k) {
            Some(m) => Modulus::Small(m),
            None => Modulus::Big(BigUint::from(p).pow(k)),
        }
    }

    fn reduce(&self, x: &Digits) -> Digits {
        match (self, x) {
            (Modulus::Small(m), Digits::Small(v)) => Digits::Small(v % m),
            (Modulus::Small(m), Digits::Big(v)) => Digits::Small((v % *m).to_u64().unwrap()),
            (Modulus::Big(m), Digits::Small(v)) => Digits::Big(BigUint::from(*v) % m),
            (Modulus::Big(m), Digits::Big(v)) => Digits::Big(v % m),
        }
    }

    fn reduce_bigint(&self, x: &BigInt) -> Digits {
        match self {
            Modulus::Small(m) => {
                let r = x.mod_floor(&BigInt::from(*m));
                Digits::Small(r.to_u64().unwrap())
            }
            Modulus::Big(m) => {
                let r = x.mod_floor(&BigInt::from(m.clone()));
                Digits::Big(r.to_biguint().unwrap())
            }
        }
    }

    fn mul(&self, a: &Digits, b: &Digits) -> Digits {
        match (self, a, b) {
            (Modulus::Small(m), Digits::Small(x), Digits::Small(y)) => {
                Digits::Small(((*x as u128 * *y as u128) % *m as u128) as u64)
            }
            (Modulus::Big(m), _, _) => Digits::Big((a.to_biguint() * b.to_biguint()) % m),
            _ => self.reduce(&Digits::Big(a.to_biguint() * b.to_biguint())),
        }
    }

    fn add(&self, a: &Digits, b: &Digits) -> Digits {
        match (self, a, b) {
            (Modulus::Small(m), Digits::Small(x), Digits::Small(y)) => {
                Digits::Small(((*x as u128 + *y as u128) % *m as u128) as u64)
            }
            (Modulus::Big(m), _, _) => Digits::Big((a.to_biguint() + b.to_biguint()) % m),
            _ => self.reduce(&Digits::Big(a.to_biguint() + b.to_biguint())),
        }
    }

    fn neg(&self, a: &Digits) -> Digits {
        if a.is_zero() {
            return a.clone();
        }
        match (self, a) {
            (Modulus::Small(m), Digits::Small(x)) => Digits::Small(m - x),
            (Modulus::Big(m), x) => Digits::Big(m - x.to_biguint()),
            (Modulus::Small(m), Digits::Big(x)) => Digits::Small(m - (x % *m).to_u64().unwrap()),
        }
    }

    /// Inverse of a unit; the caller guarantees `gcd(a, p) = 1`.
    fn inv(&self, a: &Digits) -> Digits {
        match (self, a) {
            (Modulus::Small(m), Digits::Small(x)) => {
                let (mut r0, mut r1) = (*m as i128, *x as i128);
                let (mut t0, mut t1) = (0i128, 1i128);
                while r1 != 0 {
                    let q = r0 / r1;
                    (r0, r1) = (r1, r0 - q * r1);
                    (t0, t1) = (t1, t0 - q * t1);
                }
                debug_assert_eq!(r0, 1);
                Digits::Small(t0.rem_euclid(*m as i128) as u64)
            }
            (Modulus::Big(m), x) => {
                Digits::Big(x.to_biguint().modinv(m).expect("unit is invertible"))
            }
            (Modulus::Small(_), Digits::Big(_)) => self.inv(&self.reduce(a)),
        }
    }
}

fn pow_digits(p: u64, k: u32) -> Digits {
    match p.checked_pow(k) {
        Some(x) => Digits::Small(x),
        None => Digits::Big(BigUint::from(p).pow(k)),
    }
}

/// Splits `x = p^t * y` with `p ∤ y`; `x` must be nonzero.
fn strip_digits(p: u64, x: Digits) -> (u32, Digits) {
    match x {
        Digits::Small(mut v) => {
            let mut t = 0;
            if p == 2 {
                t = v.trailing_zeros();
                v >>= t;
            } else {
                while v % p == 0 {
                    v /= p;
                    t += 1;
                }
            }
            (t, Digits::Small(v))
        }
        Digits::Big(mut v) => {
            let mut t = 0;
            let bp = BigUint::from(p);
            loop {
                let (q, r) = v.div_rem(&bp);
                if !r.is_zero() {
                    break;
                }
                v = q;
                t += 1;
            }
            (t, Digits::Big(v))
        }
    }
}

/// p-adic valuation of a nonzero integer together with its p-free part.
pub(crate) fn strip_bigint(p: u64, x: &BigInt) -> (i64, BigInt) {
    debug_assert!(!x.is_zero());
    let bp = BigInt::from(p);
    let mut v = 0i64;
    let mut y = x.clone();
    loop {
        let (q, r) = y.div_rem(&bp);
        if !r.is_zero() {
            return (v, y);
        }
        y = q;
        v += 1;
    }
}

/// Valuation of a nonzero rational.
pub(crate) fn rational_valuation(p: u64, q: &BigRational) -> i64 {
    strip_bigint(p, q.numer()).0 - strip_bigint(p, q.denom()).0
}

/// `p^k` as an exact rational, `k` of either sign.
pub fn p_power(p: u64, k: i64) -> BigRational {
    let base = BigInt::from(p).pow(k.unsigned_abs() as u32);
    if k >= 0 {
        BigRational::from_integer(base)
    } else {
        BigRational::new(BigInt::one(), base)
    }
}

#[derive(Clone, Debug)]
enum Repr {
    Zero,
    Exact { v: i64, value: BigRational },
    Approx { v: i64, unit: Digits, prec: u32 },
    Vanishing { abs: i64 },
}

/// An element of `Q_p`, exact or known to finite relative precision.
#[derive(Clone, Debug)]
pub struct PadicScalar {
    p: u64,
    repr: Repr,
}

impl PadicScalar {
    pub fn zero(p: u64) -> Self {
        PadicScalar {
            p,
            repr: Repr::Zero,
        }
    }

    pub fn one(p: u64) -> Self {
        Self::from_int(1, p)
    }

    pub fn from_int(x: i64, p: u64) -> Self {
        Self::exact(BigRational::from_integer(BigInt::from(x)), p)
    }

    /// An exact scalar holding the rational `q`.
    pub fn exact(q: BigRational, p: u64) -> Self {
        if q.is_zero() {
            return Self::zero(p);
        }
        let v = rational_valuation(p, &q);
        PadicScalar {
            p,
            repr: Repr::Exact { v, value: q },
        }
    }

    /// `num/den` truncated to `prec` relative digits.
    pub fn from_rational(num: &BigInt, den: &BigInt, p: u64, prec: u32) -> Result<Self> {
        if den.is_zero() {
            return Err(HuaError::DivisionByZero);
        }
        if prec == 0 {
            return Err(HuaError::InvalidInput("precision must be positive".into()));
        }
        if num.is_zero() {
            return Ok(Self::zero(p));
        }
        Ok(Self::exact(BigRational::new(num.clone(), den.clone()), p).with_precision(prec))
    }

    /// `p^v * unit` with the unit known modulo `p^prec`.
    pub fn from_parts(p: u64, v: i64, unit: &BigUint, prec: u32) -> Result<Self> {
        if prec == 0 {
            return Err(HuaError::InvalidInput("precision must be positive".into()));
        }
        let m = Modulus::new(p, prec);
        let unit = m.reduce(&Digits::Big(unit.clone()));
        if (unit.to_biguint() % p).is_zero() {
            return Err(HuaError::InvalidInput("unit is divisible by p".into()));
        }
        Ok(PadicScalar {
            p,
            repr: Repr::Approx { v, unit, prec },
        })
    }

    /// The integer `x` known modulo `p^m`, i.e. to absolute precision `m`.
    pub fn from_residue(p: u64, x: u64, m: u32) -> Self {
        Self::from_residue_digits(p, Digits::Small(x), m)
    }

    pub fn from_residue_big(p: u64, x: &BigUint, m: u32) -> Self {
        Self::from_residue_digits(p, Digits::Big(x.clone()), m)
    }

    fn from_residue_digits(p: u64, x: Digits, m: u32) -> Self {
        let x = Modulus::new(p, m).reduce(&x);
        if x.is_zero() {
            return Self::vanishing(p, m as i64);
        }
        let (v, unit) = strip_digits(p, x);
        let unit = Modulus::new(p, m - v).reduce(&unit);
        PadicScalar {
            p,
            repr: Repr::Approx {
                v: v as i64,
                unit,
                prec: m - v,
            },
        }
    }

    /// The scalar `O(p^abs)`: zero as far as `abs` absolute digits can tell.
    pub fn vanishing(p: u64, abs: i64) -> Self {
        PadicScalar {
            p,
            repr: Repr::Vanishing { abs },
        }
    }

    pub fn prime(&self) -> u64 {
        self.p
    }

    pub fn valuation(&self) -> Valuation {
        match &self.repr {
            Repr::Zero => Valuation::Infinite,
            Repr::Exact { v, .. } | Repr::Approx { v, .. } => Valuation::Finite(*v),
            Repr::Vanishing { abs } => Valuation::AtLeast(*abs),
        }
    }

    pub fn precision(&self) -> Precision {
        match &self.repr {
            Repr::Approx { prec, .. } => Precision::Digits(*prec),
            Repr::Vanishing { .. } => Precision::Digits(0),
            _ => Precision::Exact,
        }
    }

    /// Absolute precision `v + N`; `None` for exact scalars.
    pub fn abs_precision(&self) -> Option<i64> {
        match &self.repr {
            Repr::Approx { v, prec, .. } => Some(v + *prec as i64),
            Repr::Vanishing { abs } => Some(*abs),
            _ => None,
        }
    }

    pub fn is_exact(&self) -> bool {
        matches!(self.repr, Repr::Zero | Repr::Exact { .. })
    }

    /// True only for the exact zero.
    pub fn is_zero(&self) -> bool {
        matches!(self.repr, Repr::Zero)
    }

    pub fn is_vanishing(&self) -> bool {
        matches!(self.repr, Repr::Vanishing { .. })
    }

    /// True if the valuation is known to be nonnegative.
    pub fn is_integral(&self) -> bool {
        match self.valuation() {
            Valuation::Finite(v) | Valuation::AtLeast(v) => v >= 0,
            Valuation::Infinite => true,
        }
    }

    /// Unit digits modulo `p^k`; `k` may not exceed the relative precision.
    pub fn unit_mod(&self, k: u32) -> Option<BigUint> {
        self.unit_digits(k).map(|d| d.to_biguint())
    }

    /// The stored unit: for inexact scalars modulo `p^N`, for exact ones modulo
    /// `p^DEFAULT_PRECISION`.
    pub fn unit(&self) -> Option<BigUint> {
        match &self.repr {
            Repr::Approx { unit, .. } => Some(unit.to_biguint()),
            Repr::Exact { .. } => self.unit_mod(DEFAULT_PRECISION),
            _ => None,
        }
    }

    fn unit_digits(&self, k: u32) -> Option<Digits> {
        match &self.repr {
            Repr::Approx { unit, prec, .. } if k <= *prec => {
                if k == *prec {
                    Some(unit.clone())
                } else {
                    Some(Modulus::new(self.p, k).reduce(unit))
                }
            }
            Repr::Exact { value, .. } => Some(exact_unit_digits(self.p, value, k)),
            _ => None,
        }
    }

    /// `|x| = p^{-v}`. Fails only for vanishing scalars, whose norm is unknown.
    pub fn norm(&self) -> Result<BigRational> {
        match self.valuation() {
            Valuation::Finite(v) => Ok(p_power(self.p, -v)),
            Valuation::Infinite => Ok(BigRational::zero()),
            Valuation::AtLeast(_) => Err(HuaError::PrecisionExhausted("norm of O(p^a)".into())),
        }
    }

    /// Reduces to at most `prec` relative digits; exact scalars become inexact.
    pub fn with_precision(&self, prec: u32) -> Self {
        let p = self.p;
        match &self.repr {
            Repr::Exact { v, value } => PadicScalar {
                p,
                repr: Repr::Approx {
                    v: *v,
                    unit: exact_unit_digits(p, value, prec),
                    prec,
                },
            },
            Repr::Approx { v, unit, prec: old } if prec < *old => PadicScalar {
                p,
                repr: Repr::Approx {
                    v: *v,
                    unit: Modulus::new(p, prec).reduce(unit),
                    prec,
                },
            },
            _ => self.clone(),
        }
    }

    /// A rational representing this scalar: the exact value, or `p^v * u` with
    /// the canonical unit representative.
    pub fn representative(&self) -> BigRational {
        match &self.repr {
            Repr::Zero | Repr::Vanishing { .. } => BigRational::zero(),
            Repr::Exact { value, .. } => value.clone(),
            Repr::Approx { v, unit, .. } => {
                p_power(self.p, *v) * BigRational::from_integer(BigInt::from(unit.to_biguint()))
            }
        }
    }

    /// Same value, exact: the representative promoted to an exact scalar.
    pub fn to_exact(&self) -> Self {
        Self::exact(self.representative(), self.p)
    }

    /// Lenient addition: complete cancellation yields a vanishing scalar.
    pub fn add_or_vanish(&self, other: &Self) -> Self {
        assert_eq!(self.p, other.p, "mixed primes in p-adic arithmetic");
        let p = self.p;
        match (&self.repr, &other.repr) {
            (Repr::Zero, _) => return other.clone(),
            (_, Repr::Zero) => return self.clone(),
            (Repr::Exact { value: a, .. }, Repr::Exact { value: b, .. }) => {
                return Self::exact(a + b, p);
            }
            _ => {}
        }
        let abs = match (self.abs_precision(), other.abs_precision()) {
            (Some(a), Some(b)) => min(a, b),
            (Some(a), None) | (None, Some(a)) => a,
            (None, None) => unreachable!(),
        };
        let mut terms: Vec<(i64, &PadicScalar)> = Vec::with_capacity(2);
        for x in [self, other] {
            if let Valuation::Finite(v) = x.valuation() {
                if v < abs {
                    terms.push((v, x));
                }
            }
        }
        let Some(vmin) = terms.iter().map(|t| t.0).min() else {
            return Self::vanishing(p, abs);
        };
        let rel = (abs - vmin) as u32;
        let m = Modulus::new(p, rel);
        let mut sum = match &m {
            Modulus::Small(_) => Digits::Small(0),
            Modulus::Big(_) => Digits::Big(BigUint::zero()),
        };
        for (v, x) in terms {
            let shift = (v - vmin) as u32;
            let u = x
                .unit_digits(rel - shift)
                .expect("operand carries enough digits");
            let u = m.reduce(&u);
            let term = if shift == 0 {
                u
            } else {
                m.mul(&u, &pow_digits(p, shift))
            };
            sum = m.add(&sum, &term);
        }
        if sum.is_zero() {
            return Self::vanishing(p, abs);
        }
        let (t, unit) = strip_digits(p, sum);
        let prec = rel - t;
        let unit = Modulus::new(p, prec).reduce(&unit);
        PadicScalar {
            p,
            repr: Repr::Approx {
                v: vmin + t as i64,
                unit,
                prec,
            },
        }
    }

    pub fn sub_or_vanish(&self, other: &Self) -> Self {
        self.add_or_vanish(&other.neg())
    }

    /// Addition that refuses to guess: a complete cancellation of every
    /// tracked digit is [`HuaError::PrecisionExhausted`].
    pub fn add(&self, other: &Self) -> Result<Self> {
        let r = self.add_or_vanish(other);
        if r.is_vanishing() {
            Err(HuaError::PrecisionExhausted(format!(
                "cancellation in {} + {}",
                self, other
            )))
        } else {
            Ok(r)
        }
    }

    pub fn sub(&self, other: &Self) -> Result<Self> {
        self.add(&other.neg())
    }

    pub fn mul(&self, other: &Self) -> Self {
        assert_eq!(self.p, other.p, "mixed primes in p-adic arithmetic");
        let p = self.p;
        let repr = match (&self.repr, &other.repr) {
            (Repr::Zero, _) | (_, Repr::Zero) => Repr::Zero,
            (Repr::Vanishing { abs }, _) | (_, Repr::Vanishing { abs }) => {
                let other_v = if self.is_vanishing() {
                    other.valuation()
                } else {
                    self.valuation()
                };
                match other_v {
                    Valuation::Finite(v) | Valuation::AtLeast(v) => {
                        Repr::Vanishing { abs: abs + v }
                    }
                    Valuation::Infinite => Repr::Zero,
                }
            }
            (Repr::Exact { value: a, .. }, Repr::Exact { value: b, .. }) => {
                return Self::exact(a * b, p);
            }
            (Repr::Exact { v: ve, value }, Repr::Approx { v, unit, prec })
            | (Repr::Approx { v, unit, prec }, Repr::Exact { v: ve, value }) => {
                let m = Modulus::new(p, *prec);
                let u = if value.is_one() {
                    unit.clone()
                } else {
                    m.mul(unit, &exact_unit_digits(p, value, *prec))
                };
                Repr::Approx {
                    v: v + ve,
                    unit: u,
                    prec: *prec,
                }
            }
            (
                Repr::Approx {
                    v: v1,
                    unit: u1,
                    prec: n1,
                },
                Repr::Approx {
                    v: v2,
                    unit: u2,
                    prec: n2,
                },
            ) => {
                let prec = min(*n1, *n2);
                let m = Modulus::new(p, prec);
                let a = if *n1 == prec {
                    u1.clone()
                } else {
                    m.reduce(u1)
                };
                let b = if *n2 == prec {
                    u2.clone()
                } else {
                    m.reduce(u2)
                };
                Repr::Approx {
                    v: v1 + v2,
                    unit: m.mul(&a, &b),
                    prec,
                }
            }
        };
        PadicScalar { p, repr }
    }

    pub fn neg(&self) -> Self {
        let repr = match &self.repr {
            Repr::Exact { v, value } => Repr::Exact {
                v: *v,
                value: -value,
            },
            Repr::Approx { v, unit, prec } => Repr::Approx {
                v: *v,
                unit: Modulus::new(self.p, *prec).neg(unit),
                prec: *prec,
            },
            other => other.clone(),
        };
        PadicScalar { p: self.p, repr }
    }

    pub fn inv(&self) -> Result<Self> {
        let p = self.p;
        match &self.repr {
            Repr::Zero => Err(HuaError::DivisionByZero),
            Repr::Vanishing { .. } => Err(HuaError::PrecisionExhausted(
                "inverse of a value indistinguishable from zero".into(),
            )),
            Repr::Exact { value, .. } => Ok(Self::exact(value.recip(), p)),
            Repr::Approx { v, unit, prec } => Ok(PadicScalar {
                p,
                repr: Repr::Approx {
                    v: -v,
                    unit: Modulus::new(p, *prec).inv(unit),
                    prec: *prec,
                },
            }),
        }
    }

    pub fn div(&self, other: &Self) -> Result<Self> {
        Ok(self.mul(&other.inv()?))
    }

    /// Multiplication by `p^k`.
    pub fn shift(&self, k: i64) -> Self {
        let mut out = self.clone();
        match &mut out.repr {
            Repr::Exact { v, value } => {
                *v += k;
                *value = &*value * p_power(self.p, k);
            }
            Repr::Approx { v, .. } => *v += k,
            Repr::Vanishing { abs } => *abs += k,
            Repr::Zero => {}
        }
        out
    }

    /// Equality as far as both operands are known: valuations agree and the
    /// units agree modulo `p^min(N_x, N_y)`. A vanishing scalar equals anything
    /// whose valuation reaches its bound.
    pub fn eq_at_precision(&self, other: &Self) -> bool {
        assert_eq!(self.p, other.p, "mixed primes in p-adic arithmetic");
        match (self.valuation(), other.valuation()) {
            (Valuation::Infinite, Valuation::Infinite) => true,
            (Valuation::Infinite, Valuation::Finite(_))
            | (Valuation::Finite(_), Valuation::Infinite) => false,
            (Valuation::AtLeast(_), Valuation::AtLeast(_) | Valuation::Infinite)
            | (Valuation::Infinite, Valuation::AtLeast(_)) => true,
            (Valuation::AtLeast(a), Valuation::Finite(v))
            | (Valuation::Finite(v), Valuation::AtLeast(a)) => v >= a,
            (Valuation::Finite(v1), Valuation::Finite(v2)) => {
                if v1 != v2 {
                    return false;
                }
                if let (Repr::Exact { value: a, .. }, Repr::Exact { value: b, .. }) =
                    (&self.repr, &other.repr)
                {
                    return a == b;
                }
                let k = match (self.precision(), other.precision()) {
                    (Precision::Digits(a), Precision::Digits(b)) => min(a, b),
                    (Precision::Digits(a), Precision::Exact)
                    | (Precision::Exact, Precision::Digits(a)) => a,
                    (Precision::Exact, Precision::Exact) => unreachable!(),
                };
                self.unit_digits(k) == other.unit_digits(k)
            }
        }
    }

    /// JSON form `{"v": int|"inf", "u": int, "N": int}`. Exact scalars add an
    /// `"exact": "num/den"` field; vanishing ones report `{"v": {"at_least": a}}`.
    pub fn to_json(&self) -> Value {
        match &self.repr {
            Repr::Zero => json!({"v": "inf"}),
            Repr::Vanishing { abs } => json!({"v": {"at_least": abs}, "N": 0}),
            Repr::Approx { v, unit, prec } => json!({"v": v, "u": digits_json(unit), "N": prec}),
            Repr::Exact { v, value } => json!({
                "v": v,
                "u": digits_json(&exact_unit_digits(self.p, value, DEFAULT_PRECISION)),
                "N": DEFAULT_PRECISION,
                "exact": format_rational(value),
            }),
        }
    }

    pub fn from_json(value: &Value, p: u64) -> Result<Self> {
        let bad = |msg: &str| HuaError::InvalidInput(format!("scalar JSON: {msg}"));
        let obj = value.as_object().ok_or_else(|| bad("expected an object"))?;
        if let Some(q) = obj.get("exact") {
            let q = parse_rational(q.as_str().ok_or_else(|| bad("exact must be a string"))?)?;
            return Ok(Self::exact(q, p));
        }
        let v = obj.get("v").ok_or_else(|| bad("missing v"))?;
        if v.as_str() == Some("inf") {
            return Ok(Self::zero(p));
        }
        if let Some(a) = v.get("at_least").and_then(Value::as_i64) {
            return Ok(Self::vanishing(p, a));
        }
        let v = v
            .as_i64()
            .ok_or_else(|| bad("v must be an integer or \"inf\""))?;
        let u = match obj.get("u").ok_or_else(|| bad("missing u"))? {
            Value::Number(n) => {
                BigUint::from(n.as_u64().ok_or_else(|| bad("u must be nonnegative"))?)
            }
            Value::String(s) => s
                .parse::<BigUint>()
                .map_err(|_| bad("u is not an integer"))?,
            _ => return Err(bad("u must be an integer")),
        };
        let n = obj
            .get("N")
            .and_then(Value::as_u64)
            .ok_or_else(|| bad("missing N"))?;
        Self::from_parts(p, v, &u, n as u32)
    }
}

fn digits_json(d: &Digits) -> Value {
    match d {
        Digits::Small(x) => json!(x),
        Digits::Big(x) => match x.to_u64() {
            Some(y) => json!(y),
            None => json!(x.to_string()),
        },
    }
}

/// Unit part of a nonzero rational modulo `p^k`.
fn exact_unit_digits(p: u64, value: &BigRational, k: u32) -> Digits {
    let m = Modulus::new(p, k);
    if let (Some(n), Some(d)) = (value.numer().to_i64(), value.denom().to_i64()) {
        if let Modulus::Small(mm) = m {
            let (mut n, mut d) = (n as i128, d as i128);
            let pp = p as i128;
            while n % pp == 0 {
                n /= pp;
            }
            while d % pp == 0 {
                d /= pp;
            }
            let mm = mm as i128;
            let nr = Digits::Small(n.rem_euclid(mm) as u64);
            if d == 1 {
                return nr;
            }
            let dr = Digits::Small(d.rem_euclid(mm) as u64);
            return m.mul(&nr, &m.inv(&dr));
        }
    }
    let (_, n) = strip_bigint(p, value.numer());
    let (_, d) = strip_bigint(p, value.denom());
    let nr = m.reduce_bigint(&n);
    let dr = m.reduce_bigint(&d);
    m.mul(&nr, &m.inv(&dr))
}

/// Parses `"a"` or `"a/b"` into a rational.
pub fn parse_rational(s: &str) -> Result<BigRational> {
    let s = s.trim();
    let bad = || HuaError::InvalidInput(format!("not a rational: {s:?}"));
    let (num, den) = match s.split_once('/') {
        Some((a, b)) => (a.trim(), b.trim()),
        None => (s, "1"),
    };
    let num: BigInt = num.parse().map_err(|_| bad())?;
    let den: BigInt = den.parse().map_err(|_| bad())?;
    if den.is_zero() {
        return Err(HuaError::DivisionByZero);
    }
    Ok(BigRational::new(num, den))
}

pub fn format_rational(q: &BigRational) -> String {
    if q.is_integer() {
        q.numer().to_string()
    } else {
        format!("{}/{}", q.numer(), q.denom())
    }
}

impl fmt::Display for PadicScalar {
    /// Log form `p^v * u (mod p^N)`.
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let p = self.p;
        match &self.repr {
            Repr::Zero => write!(f, "0"),
            Repr::Vanishing { abs } => write!(f, "O({p}^{abs})"),
            Repr::Approx { v, unit, prec } => {
                write!(f, "{p}^{v} * {} (mod {p}^{prec})", unit.to_biguint())
            }
            Repr::Exact { v, value } => {
                let unit = value * p_power(p, -v);
                write!(f, "{p}^{v} * {} (exact)", format_rational(&unit))
            }
        }
    }
}

impl std::ops::Mul for &PadicScalar {
    type Output = PadicScalar;
    fn mul(self, rhs: &PadicScalar) -> PadicScalar {
        PadicScalar::mul(self, rhs)
    }
}

impl std::ops::Neg for &PadicScalar {
    type Output = PadicScalar;
    fn neg(self) -> PadicScalar {
        PadicScalar::neg(self)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn q(n: i64, d: i64) -> BigRational {
        BigRational::new(n.into(), d.into())
    }

    fn approx(n: i64, d: i64, p: u64, prec: u32) -> PadicScalar {
        PadicScalar::from_rational(&n.into(), &d.into(), p, prec).unwrap()
    }

    #[test]
    fn four_plus_four_is_eight() {
        let x = PadicScalar::from_int(4, 2);
        let s = x.add(&x).unwrap();
        assert_eq!(s.valuation(), Valuation::Finite(3));
        assert_eq!(s.unit(), Some(BigUint::from(1u32)));
        let a = approx(4, 1, 2, 8);
        let s = a.add(&a).unwrap();
        assert_eq!(s.valuation(), Valuation::Finite(3));
        assert_eq!(s.unit(), Some(BigUint::from(1u32)));
    }

    #[test]
    fn adding_zero_is_identity() {
        let x = approx(5, 3, 3, 10);
        assert!(x.add(&PadicScalar::zero(3)).unwrap().eq_at_precision(&x));
    }

    #[test]
    fn full_cancellation_is_reported() {
        let x = PadicScalar::from_parts(2, 0, &BigUint::from(1u32), 3).unwrap();
        let y = PadicScalar::from_parts(2, 0, &BigUint::from(7u32), 3).unwrap();
        assert!(matches!(x.add(&y), Err(HuaError::PrecisionExhausted(_))));
        let lenient = x.add_or_vanish(&y);
        assert_eq!(lenient.valuation(), Valuation::AtLeast(3));
    }

    #[test]
    fn partial_cancellation_loses_digits() {
        // 1 + 3 = 4 at three digits: valuation 2, one digit left.
        let x = PadicScalar::from_parts(2, 0, &BigUint::from(1u32), 3).unwrap();
        let y = PadicScalar::from_parts(2, 0, &BigUint::from(3u32), 3).unwrap();
        let s = x.add(&y).unwrap();
        assert_eq!(s.valuation(), Valuation::Finite(2));
        assert_eq!(s.precision(), Precision::Digits(1));
    }

    #[test]
    fn products_and_inverses() {
        let half = PadicScalar::exact(q(1, 2), 2);
        let six = PadicScalar::from_int(6, 2);
        let m = half.mul(&six);
        assert_eq!(m.valuation(), Valuation::Finite(0));
        assert_eq!(m.unit(), Some(BigUint::from(3u32)));

        let x = PadicScalar::from_parts(3, 1, &BigUint::from(1u32), 8).unwrap();
        let xi = x.inv().unwrap();
        assert_eq!(xi.valuation(), Valuation::Finite(-1));
        assert_eq!(xi.unit(), Some(BigUint::from(1u32)));

        let three = PadicScalar::from_parts(2, 0, &BigUint::from(3u32), 4).unwrap();
        assert_eq!(three.inv().unwrap().unit(), Some(BigUint::from(11u32)));
        assert_eq!(
            PadicScalar::zero(5).inv().unwrap_err(),
            HuaError::DivisionByZero
        );
    }

    #[test]
    fn norms() {
        let x = PadicScalar::exact(q(1, 4), 2);
        assert_eq!(x.norm().unwrap(), q(4, 1));
        assert_eq!(PadicScalar::zero(2).norm().unwrap(), q(0, 1));
        assert_eq!(PadicScalar::from_int(6, 3).norm().unwrap(), q(1, 3));
    }

    #[test]
    fn from_rational_examples() {
        let x = approx(3, 4, 2, 4);
        assert_eq!(x.valuation(), Valuation::Finite(-2));
        assert_eq!(x.unit(), Some(BigUint::from(3u32)));
        let y = approx(1, 3, 2, 4);
        assert_eq!(y.valuation(), Valuation::Finite(0));
        assert_eq!(y.unit(), Some(BigUint::from(11u32)));
        assert!(approx(0, 7, 5, 4).is_zero());
        assert_eq!(
            PadicScalar::from_rational(&1.into(), &0.into(), 2, 4).unwrap_err(),
            HuaError::DivisionByZero
        );
    }

    #[test]
    fn big_precision_path_matches_small() {
        // p^N overflows u64 for p = 101, N = 32.
        let x = approx(-7, 13, 101, 32);
        let y = approx(5, 101 * 3, 101, 32);
        let z = x.mul(&y).add(&x).unwrap();
        let back = z.sub(&x).unwrap().div(&y).unwrap();
        assert!(back.eq_at_precision(&x));
        assert!(x
            .mul(&x.inv().unwrap())
            .eq_at_precision(&PadicScalar::one(101)));
    }

    #[test]
    fn vanishing_interplay() {
        let o = PadicScalar::vanishing(3, 5);
        assert!(o.eq_at_precision(&PadicScalar::zero(3)));
        assert!(o.eq_at_precision(&PadicScalar::from_int(243, 3)));
        assert!(!o.eq_at_precision(&PadicScalar::from_int(81, 3)));
        let x = PadicScalar::from_int(2, 3).with_precision(10);
        let s = o.add(&x).unwrap();
        assert_eq!(s.precision(), Precision::Digits(5));
        assert_eq!(
            o.mul(&PadicScalar::from_int(9, 3)).valuation(),
            Valuation::AtLeast(7)
        );
    }

    #[test]
    fn json_shapes() {
        let x = approx(3, 4, 2, 4);
        assert_eq!(x.to_json(), json!({"v": -2, "u": 3, "N": 4}));
        assert_eq!(PadicScalar::zero(2).to_json(), json!({"v": "inf"}));
        let back = PadicScalar::from_json(&x.to_json(), 2).unwrap();
        assert!(back.eq_at_precision(&x));
        let e = PadicScalar::exact(q(-5, 12), 2);
        let back = PadicScalar::from_json(&e.to_json(), 2).unwrap();
        assert!(back.is_exact() && back.eq_at_precision(&e));
    }

    #[test]
    fn display_forms() {
        let x = approx(3, 4, 2, 4);
        assert_eq!(x.to_string(), "2^-2 * 3 (mod 2^4)");
        assert_eq!(
            PadicScalar::exact(q(3, 4), 2).to_string(),
            "2^-2 * 3 (exact)"
        );
    }
}
