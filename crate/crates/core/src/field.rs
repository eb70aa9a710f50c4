//! Exact ground fields: the rationals and prime fields.
//!
//! A [`Scalar`] always carries its [`FieldSpec`]. Arithmetic through the
//! `std::ops` traits asserts that both operands live in the same field; the
//! `try_*` methods report [`Error::FieldMismatch`] instead.

use std::cmp::Ordering;
use std::fmt;
use std::ops::{Add, Mul, Neg, Sub};
use std::str::FromStr;

use num_bigint::BigInt;
use num_integer::Integer;
use num_rational::BigRational;
use num_traits::{One, Signed, ToPrimitive, Zero};
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum FieldSpec {
    Rationals,
    Prime(u64),
}

impl FieldSpec {
    /// The prime field with `p` elements; `p` must be prime and fit the
    /// 32-bit residue arithmetic used internally.
    pub fn prime(p: u64) -> Result<Self> {
        if p < 2 || p > u32::MAX as u64 || !is_prime(p) {
            return Err(Error::Input(format!("{p} is not a supported prime")));
        }
        Ok(FieldSpec::Prime(p))
    }

    pub fn characteristic(self) -> u64 {
        match self {
            FieldSpec::Rationals => 0,
            FieldSpec::Prime(p) => p,
        }
    }

    pub fn check(self, other: FieldSpec) -> Result<()> {
        if self == other {
            Ok(())
        } else {
            Err(Error::FieldMismatch(self, other))
        }
    }

    /// All elements of a prime field in ascending residue order.
    pub fn elements(self) -> Option<Vec<Scalar>> {
        match self {
            FieldSpec::Rationals => None,
            FieldSpec::Prime(p) => Some((0..p).map(|r| Scalar::residue(self, r)).collect()),
        }
    }
}

fn is_prime(p: u64) -> bool {
    if p < 2 {
        return false;
    }
    let mut d = 2;
    while d * d <= p {
        if p % d == 0 {
            return false;
        }
        d += 1;
    }
    true
}

impl fmt::Display for FieldSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            FieldSpec::Rationals => write!(f, "Q"),
            FieldSpec::Prime(p) => write!(f, "F{p}"),
        }
    }
}

impl FromStr for FieldSpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let t = s.trim();
        if t.eq_ignore_ascii_case("q") || t.eq_ignore_ascii_case("rationals") {
            return Ok(FieldSpec::Rationals);
        }
        let digits = t
            .strip_prefix('F')
            .or_else(|| t.strip_prefix('f'))
            .or_else(|| t.strip_prefix("GF"))
            .unwrap_or(t);
        let p: u64 = digits
            .parse()
            .map_err(|_| Error::Input(format!("unknown field `{s}`")))?;
        FieldSpec::prime(p)
    }
}

impl Serialize for FieldSpec {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_str(&self.to_string())
    }
}

impl<'de> Deserialize<'de> for FieldSpec {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
enum Value {
    Q(BigRational),
    P(u64),
}

/// An exact field element tagged with its field.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct Scalar {
    field: FieldSpec,
    value: Value,
}

impl Scalar {
    pub fn zero(field: FieldSpec) -> Self {
        match field {
            FieldSpec::Rationals => Scalar { field, value: Value::Q(BigRational::zero()) },
            FieldSpec::Prime(_) => Scalar { field, value: Value::P(0) },
        }
    }

    pub fn one(field: FieldSpec) -> Self {
        Scalar::from_i64(field, 1)
    }

    pub fn from_i64(field: FieldSpec, v: i64) -> Self {
        match field {
            FieldSpec::Rationals => Scalar {
                field,
                value: Value::Q(BigRational::from_integer(BigInt::from(v))),
            },
            FieldSpec::Prime(p) => Scalar {
                field,
                value: Value::P(v.rem_euclid(p as i64) as u64),
            },
        }
    }

    pub fn residue(field: FieldSpec, r: u64) -> Self {
        match field {
            FieldSpec::Rationals => Scalar::from_i64(field, r as i64),
            FieldSpec::Prime(p) => Scalar { field, value: Value::P(r % p) },
        }
    }

    pub fn from_ratio(field: FieldSpec, num: i64, den: i64) -> Result<Self> {
        let n = Scalar::from_i64(field, num);
        let d = Scalar::from_i64(field, den);
        n.try_div(&d)
    }

    /// Parses `"a"` or `"a/b"` with integer `a`, `b`.
    pub fn parse(field: FieldSpec, s: &str) -> Result<Self> {
        let s = s.trim();
        let bad = || Error::Input(format!("cannot parse scalar `{s}`"));
        let (num, den) = match s.split_once('/') {
            Some((n, d)) => (n.trim(), d.trim()),
            None => (s, "1"),
        };
        let num: BigInt = num.parse().map_err(|_| bad())?;
        let den: BigInt = den.parse().map_err(|_| bad())?;
        if den.is_zero() {
            return Err(Error::DivisionByZero);
        }
        match field {
            FieldSpec::Rationals => Ok(Scalar {
                field,
                value: Value::Q(BigRational::new(num, den)),
            }),
            FieldSpec::Prime(p) => {
                let m = BigInt::from(p);
                let n = num.mod_floor(&m).to_u64().unwrap();
                let d = den.mod_floor(&m).to_u64().unwrap();
                Scalar { field, value: Value::P(n) }.try_div(&Scalar { field, value: Value::P(d) })
            }
        }
    }

    pub fn field(&self) -> FieldSpec {
        self.field
    }

    pub fn is_zero(&self) -> bool {
        match &self.value {
            Value::Q(q) => q.is_zero(),
            Value::P(r) => *r == 0,
        }
    }

    pub fn is_one(&self) -> bool {
        match &self.value {
            Value::Q(q) => q.is_one(),
            Value::P(r) => *r == 1,
        }
    }

    /// Residue in `[0, p)` for prime fields.
    pub fn as_residue(&self) -> Option<u64> {
        match &self.value {
            Value::P(r) => Some(*r),
            Value::Q(_) => None,
        }
    }

    pub fn as_rational(&self) -> Option<&BigRational> {
        match &self.value {
            Value::Q(q) => Some(q),
            Value::P(_) => None,
        }
    }

    pub fn try_add(&self, o: &Scalar) -> Result<Scalar> {
        self.field.check(o.field)?;
        Ok(self.add_unchecked(o))
    }

    pub fn try_sub(&self, o: &Scalar) -> Result<Scalar> {
        self.field.check(o.field)?;
        Ok(self.add_unchecked(&o.neg_ref()))
    }

    pub fn try_mul(&self, o: &Scalar) -> Result<Scalar> {
        self.field.check(o.field)?;
        Ok(self.mul_unchecked(o))
    }

    pub fn try_div(&self, o: &Scalar) -> Result<Scalar> {
        self.field.check(o.field)?;
        Ok(self.mul_unchecked(&o.inv()?))
    }

    pub fn inv(&self) -> Result<Scalar> {
        if self.is_zero() {
            return Err(Error::DivisionByZero);
        }
        let value = match (&self.value, self.field) {
            (Value::Q(q), _) => Value::Q(q.recip()),
            (Value::P(r), FieldSpec::Prime(p)) => Value::P(pow_mod(*r, p - 2, p)),
            _ => unreachable!(),
        };
        Ok(Scalar { field: self.field, value })
    }

    pub fn pow(&self, mut e: u64) -> Scalar {
        let mut base = self.clone();
        let mut acc = Scalar::one(self.field);
        while e > 0 {
            if e & 1 == 1 {
                acc = acc.mul_unchecked(&base);
            }
            base = base.mul_unchecked(&base);
            e >>= 1;
        }
        acc
    }

    fn neg_ref(&self) -> Scalar {
        let value = match (&self.value, self.field) {
            (Value::Q(q), _) => Value::Q(-q),
            (Value::P(r), FieldSpec::Prime(p)) => Value::P(if *r == 0 { 0 } else { p - r }),
            _ => unreachable!(),
        };
        Scalar { field: self.field, value }
    }

    fn add_unchecked(&self, o: &Scalar) -> Scalar {
        let value = match (&self.value, &o.value, self.field) {
            (Value::Q(a), Value::Q(b), _) if a.is_integer() && b.is_integer() => {
                Value::Q(BigRational::from_integer(a.numer() + b.numer()))
            }
            (Value::Q(a), Value::Q(b), _) => Value::Q(a + b),
            (Value::P(a), Value::P(b), FieldSpec::Prime(p)) => Value::P((a + b) % p),
            _ => unreachable!(),
        };
        Scalar { field: self.field, value }
    }

    /// `self += o`, in place.
    pub fn add_assign(&mut self, o: &Scalar) {
        assert_same(self, o);
        match (&mut self.value, &o.value, self.field) {
            (Value::Q(a), Value::Q(b), _) if a.is_integer() && b.is_integer() => {
                let (mut n, _) = std::mem::replace(a, BigRational::zero()).into_raw();
                n += b.numer();
                *a = BigRational::from_integer(n);
            }
            (Value::Q(a), Value::Q(b), _) => *a += b,
            (Value::P(a), Value::P(b), FieldSpec::Prime(p)) => *a = (*a + b) % p,
            _ => unreachable!(),
        }
    }

    fn mul_unchecked(&self, o: &Scalar) -> Scalar {
        let value = match (&self.value, &o.value, self.field) {
            (Value::Q(a), Value::Q(b), _) if a.is_integer() && b.is_integer() => {
                Value::Q(BigRational::from_integer(a.numer() * b.numer()))
            }
            (Value::Q(a), Value::Q(b), _) => Value::Q(a * b),
            (Value::P(a), Value::P(b), FieldSpec::Prime(p)) => {
                Value::P(((*a as u128 * *b as u128) % p as u128) as u64)
            }
            _ => unreachable!(),
        };
        Scalar { field: self.field, value }
    }

    /// Exact square root when one exists in the field.
    pub fn sqrt(&self) -> Option<Scalar> {
        match (&self.value, self.field) {
            (Value::Q(q), _) => {
                if q.is_negative() {
                    return None;
                }
                let n = exact_isqrt(q.numer())?;
                let d = exact_isqrt(q.denom())?;
                Some(Scalar { field: self.field, value: Value::Q(BigRational::new(n, d)) })
            }
            (Value::P(r), FieldSpec::Prime(p)) => (0..p)
                .find(|x| (*x as u128 * *x as u128 % p as u128) as u64 == *r)
                .map(|x| Scalar::residue(self.field, x)),
            _ => unreachable!(),
        }
    }
}

fn exact_isqrt(n: &BigInt) -> Option<BigInt> {
    if n.is_negative() {
        return None;
    }
    let r = n.sqrt();
    if &(&r * &r) == n {
        Some(r)
    } else {
        None
    }
}

fn pow_mod(mut b: u64, mut e: u64, p: u64) -> u64 {
    let mut acc: u128 = 1;
    let m = p as u128;
    let mut base = b as u128 % m;
    while e > 0 {
        if e & 1 == 1 {
            acc = acc * base % m;
        }
        base = base * base % m;
        e >>= 1;
    }
    b = acc as u64;
    b
}

fn assert_same(a: &Scalar, b: &Scalar) {
    assert_eq!(a.field, b.field, "scalar arithmetic across fields");
}

impl Add for &Scalar {
    type Output = Scalar;
    fn add(self, o: &Scalar) -> Scalar {
        assert_same(self, o);
        self.add_unchecked(o)
    }
}

impl Sub for &Scalar {
    type Output = Scalar;
    fn sub(self, o: &Scalar) -> Scalar {
        assert_same(self, o);
        self.add_unchecked(&o.neg_ref())
    }
}

impl Mul for &Scalar {
    type Output = Scalar;
    fn mul(self, o: &Scalar) -> Scalar {
        assert_same(self, o);
        self.mul_unchecked(o)
    }
}

impl Neg for &Scalar {
    type Output = Scalar;
    fn neg(self) -> Scalar {
        self.neg_ref()
    }
}

impl Add for Scalar {
    type Output = Scalar;
    fn add(self, o: Scalar) -> Scalar {
        &self + &o
    }
}

impl Sub for Scalar {
    type Output = Scalar;
    fn sub(self, o: Scalar) -> Scalar {
        &self - &o
    }
}

impl Mul for Scalar {
    type Output = Scalar;
    fn mul(self, o: Scalar) -> Scalar {
        &self * &o
    }
}

impl Neg for Scalar {
    type Output = Scalar;
    fn neg(self) -> Scalar {
        self.neg_ref()
    }
}

impl PartialOrd for Scalar {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// Ascending rationals, ascending residues; scalars of different fields
/// are ordered by field first.
impl Ord for Scalar {
    fn cmp(&self, other: &Self) -> Ordering {
        match (&self.value, &other.value) {
            (Value::Q(a), Value::Q(b)) => a.cmp(b),
            (Value::P(a), Value::P(b)) => self.field.cmp(&other.field).then(a.cmp(b)),
            (Value::Q(_), Value::P(_)) => Ordering::Less,
            (Value::P(_), Value::Q(_)) => Ordering::Greater,
        }
    }
}

impl fmt::Display for Scalar {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.value {
            Value::Q(q) if q.is_integer() => write!(f, "{}", q.numer()),
            Value::Q(q) => write!(f, "{}/{}", q.numer(), q.denom()),
            Value::P(r) => write!(f, "{r}"),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn canonical_forms() {
        let q = FieldSpec::Rationals;
        assert_eq!(Scalar::parse(q, "4/-6").unwrap().to_string(), "-2/3");
        let f5 = FieldSpec::prime(5).unwrap();
        assert_eq!(Scalar::from_i64(f5, -1).to_string(), "4");
        assert_eq!(Scalar::parse(f5, "1/3").unwrap().to_string(), "2");
    }

    #[test]
    fn inverses_and_roots() {
        let f7 = FieldSpec::prime(7).unwrap();
        for r in 1..7 {
            let x = Scalar::residue(f7, r);
            assert!((&x * &x.inv().unwrap()).is_one());
        }
        let q = FieldSpec::Rationals;
        assert_eq!(Scalar::parse(q, "9/4").unwrap().sqrt().unwrap().to_string(), "3/2");
        assert!(Scalar::from_i64(q, 2).sqrt().is_none());
        assert!(Scalar::from_i64(f7, 3).sqrt().is_none());
    }

    #[test]
    fn mismatch_is_reported() {
        let a = Scalar::one(FieldSpec::Rationals);
        let b = Scalar::one(FieldSpec::Prime(2));
        assert!(matches!(a.try_add(&b), Err(Error::FieldMismatch(..))));
        assert!(FieldSpec::prime(4).is_err());
        assert_eq!("F3".parse::<FieldSpec>().unwrap(), FieldSpec::Prime(3));
    }
}

thread_local! {
    static CONTEXT: std::cell::Cell<Option<FieldSpec>> = const { std::cell::Cell::new(None) };
}

/// Runs `body` with `field` installed as the field used to deserialize
/// scalars. Serialized scalars are plain strings ("3", "-1/2") and carry no
/// field of their own; every file format in this crate records the field
/// once at top level and parses the rest inside this context.
pub fn with_field<R>(field: FieldSpec, body: impl FnOnce() -> R) -> R {
    let prev = CONTEXT.with(|c| c.replace(Some(field)));
    let out = body();
    CONTEXT.with(|c| c.set(prev));
    out
}

/// Field installed by [`with_field`], if any.
pub fn context_field() -> Option<FieldSpec> {
    CONTEXT.with(|c| c.get())
}

impl Serialize for Scalar {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_str(&self.to_string())
    }
}

impl<'de> Deserialize<'de> for Scalar {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        struct V;
        impl<'de> serde::de::Visitor<'de> for V {
            type Value = String;
            fn expecting(&self, f: &mut fmt::Formatter) -> fmt::Result {
                f.write_str("a scalar as a string such as \"-3/4\" or an integer")
            }
            fn visit_str<E: serde::de::Error>(self, v: &str) -> std::result::Result<String, E> {
                Ok(v.to_string())
            }
            fn visit_i64<E: serde::de::Error>(self, v: i64) -> std::result::Result<String, E> {
                Ok(v.to_string())
            }
            fn visit_u64<E: serde::de::Error>(self, v: u64) -> std::result::Result<String, E> {
                Ok(v.to_string())
            }
        }
        let text = d.deserialize_any(V)?;
        let field = context_field()
            .ok_or_else(|| serde::de::Error::custom("scalar parsed outside a field context"))?;
        Scalar::parse(field, &text).map_err(serde::de::Error::custom)
    }
}
