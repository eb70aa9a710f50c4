//! Univariate polynomials and split quadratic targets.

use std::fmt;

use crate::error::{Error, Result};
use crate::field::{FieldSpec, Scalar};

/// Dense polynomial, coefficients lowest degree first. The zero polynomial
/// has no coefficients; otherwise the last coefficient is non-zero.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct Polynomial {
    field: FieldSpec,
    coeffs: Vec<Scalar>,
}

impl Polynomial {
    pub fn new(field: FieldSpec, coeffs: Vec<Scalar>) -> Result<Self> {
        for c in &coeffs {
            field.check(c.field())?;
        }
        let mut p = Polynomial { field, coeffs };
        p.normalize();
        Ok(p)
    }

    pub fn from_i64(field: FieldSpec, coeffs: &[i64]) -> Self {
        Polynomial::new(field, coeffs.iter().map(|&c| Scalar::from_i64(field, c)).collect())
            .expect("coefficients share the field")
    }

    pub fn zero(field: FieldSpec) -> Self {
        Polynomial { field, coeffs: Vec::new() }
    }

    pub fn one(field: FieldSpec) -> Self {
        Polynomial { field, coeffs: vec![Scalar::one(field)] }
    }

    /// `t - root`
    pub fn linear(root: &Scalar) -> Self {
        let f = root.field();
        Polynomial { field: f, coeffs: vec![-root, Scalar::one(f)] }
    }

    /// `t^2 - a t`
    pub fn t2_minus_at(a: &Scalar) -> Self {
        let f = a.field();
        Polynomial::new(f, vec![Scalar::zero(f), -a, Scalar::one(f)]).unwrap()
    }

    fn normalize(&mut self) {
        while self.coeffs.last().is_some_and(|c| c.is_zero()) {
            self.coeffs.pop();
        }
    }

    pub fn field(&self) -> FieldSpec {
        self.field
    }

    pub fn coeffs(&self) -> &[Scalar] {
        &self.coeffs
    }

    pub fn is_zero(&self) -> bool {
        self.coeffs.is_empty()
    }

    /// Degree; `None` for the zero polynomial.
    pub fn degree(&self) -> Option<usize> {
        self.coeffs.len().checked_sub(1)
    }

    pub fn coeff(&self, i: usize) -> Scalar {
        self.coeffs.get(i).cloned().unwrap_or_else(|| Scalar::zero(self.field))
    }

    pub fn leading(&self) -> Option<&Scalar> {
        self.coeffs.last()
    }

    pub fn eval(&self, x: &Scalar) -> Scalar {
        let mut acc = Scalar::zero(self.field);
        for c in self.coeffs.iter().rev() {
            acc = &(&acc * x) + c;
        }
        acc
    }

    pub fn add(&self, o: &Polynomial) -> Polynomial {
        let n = self.coeffs.len().max(o.coeffs.len());
        let coeffs = (0..n).map(|i| &self.coeff(i) + &o.coeff(i)).collect();
        Polynomial::new(self.field, coeffs).unwrap()
    }

    pub fn scale(&self, c: &Scalar) -> Polynomial {
        Polynomial::new(self.field, self.coeffs.iter().map(|x| x * c).collect()).unwrap()
    }

    pub fn mul(&self, o: &Polynomial) -> Polynomial {
        if self.is_zero() || o.is_zero() {
            return Polynomial::zero(self.field);
        }
        let mut out = vec![Scalar::zero(self.field); self.coeffs.len() + o.coeffs.len() - 1];
        for (i, a) in self.coeffs.iter().enumerate() {
            for (j, b) in o.coeffs.iter().enumerate() {
                out[i + j] = &out[i + j] + &(a * b);
            }
        }
        Polynomial::new(self.field, out).unwrap()
    }

    pub fn div_rem(&self, d: &Polynomial) -> Result<(Polynomial, Polynomial)> {
        let dl = d.leading().ok_or(Error::ZeroPolynomial)?.inv()?;
        let dd = d.degree().unwrap();
        let mut rem = self.coeffs.clone();
        let mut quo = vec![Scalar::zero(self.field); rem.len().saturating_sub(dd).max(1)];
        while rem.len() > dd && !rem.is_empty() {
            let top = rem.len() - 1;
            let c = &rem[top] * &dl;
            let shift = top - dd;
            for (i, dc) in d.coeffs.iter().enumerate() {
                rem[shift + i] = &rem[shift + i] - &(&c * dc);
            }
            quo[shift] = c;
            while rem.last().is_some_and(|x| x.is_zero()) {
                rem.pop();
            }
        }
        Ok((Polynomial::new(self.field, quo)?, Polynomial::new(self.field, rem)?))
    }

    /// `p(t + c)`
    pub fn shift_arg(&self, c: &Scalar) -> Polynomial {
        let lin = Polynomial::new(self.field, vec![c.clone(), Scalar::one(self.field)]).unwrap();
        let mut acc = Polynomial::zero(self.field);
        for a in self.coeffs.iter().rev() {
            acc = acc.mul(&lin).add(&Polynomial::new(self.field, vec![a.clone()]).unwrap());
        }
        acc
    }
}

impl fmt::Display for Polynomial {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.is_zero() {
            return write!(f, "0");
        }
        let mut first = true;
        for (i, c) in self.coeffs.iter().enumerate().rev() {
            if c.is_zero() {
                continue;
            }
            if !first {
                write!(f, " + ")?;
            }
            first = false;
            match i {
                0 => write!(f, "{c}")?,
                1 if c.is_one() => write!(f, "t")?,
                1 => write!(f, "{c}*t")?,
                _ if c.is_one() => write!(f, "t^{i}")?,
                _ => write!(f, "{c}*t^{i}")?,
            }
        }
        Ok(())
    }
}

/// Divides by the leading coefficient.
pub fn monicize(p: &Polynomial) -> Result<Polynomial> {
    let lead = p.leading().ok_or(Error::ZeroPolynomial)?;
    Ok(p.scale(&lead.inv()?))
}

/// Opposite of the second-highest coefficient of the monic associate.
pub fn poly_trace(p: &Polynomial) -> Result<Scalar> {
    let m = monicize(p)?;
    let d = m.degree().unwrap();
    if d == 0 {
        return Err(Error::ConstantPolynomial);
    }
    Ok(-&m.coeff(d - 1))
}

/// A split monic quadratic `(t - x)(t - y)` with its chosen root order.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct QuadraticTarget {
    monic: Polynomial,
    roots: (Scalar, Scalar),
    trace: Scalar,
}

impl QuadraticTarget {
    pub fn from_roots(x: Scalar, y: Scalar) -> Result<Self> {
        x.field().check(y.field())?;
        let monic = Polynomial::linear(&x).mul(&Polynomial::linear(&y));
        let trace = &x + &y;
        Ok(QuadraticTarget { monic, roots: (x, y), trace })
    }

    pub fn square_zero(field: FieldSpec) -> Self {
        QuadraticTarget::from_roots(Scalar::zero(field), Scalar::zero(field)).unwrap()
    }

    pub fn idempotent(field: FieldSpec) -> Self {
        QuadraticTarget::from_roots(Scalar::zero(field), Scalar::one(field)).unwrap()
    }

    /// `t^2 - a t`, roots ordered `(0, a)`.
    pub fn t2_minus_at(a: &Scalar) -> Self {
        QuadraticTarget::from_roots(Scalar::zero(a.field()), a.clone()).unwrap()
    }

    pub fn field(&self) -> FieldSpec {
        self.monic.field()
    }

    pub fn monic(&self) -> &Polynomial {
        &self.monic
    }

    pub fn roots(&self) -> (&Scalar, &Scalar) {
        (&self.roots.0, &self.roots.1)
    }

    pub fn trace(&self) -> &Scalar {
        &self.trace
    }

    /// `p(0) = x y`
    pub fn constant(&self) -> Scalar {
        self.monic.coeff(0)
    }

    /// Same polynomial with the roots listed in the other order.
    pub fn swapped(&self) -> Self {
        QuadraticTarget {
            monic: self.monic.clone(),
            roots: (self.roots.1.clone(), self.roots.0.clone()),
            trace: self.trace.clone(),
        }
    }

    /// `y - x`: the coefficient of the recentered target `t^2 - a t`.
    pub fn gap(&self) -> Scalar {
        &self.roots.1 - &self.roots.0
    }

    pub fn has_root(&self, s: &Scalar) -> bool {
        &self.roots.0 == s || &self.roots.1 == s
    }
}

impl fmt::Display for QuadraticTarget {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.monic)
    }
}

/// Monicizes and factors a degree-2 polynomial over its field. Roots come
/// back in ascending order.
pub fn split_quadratic(p: &Polynomial) -> Result<QuadraticTarget> {
    match p.degree() {
        Some(2) => {}
        Some(d) => return Err(Error::WrongDegree { expected: 2, found: d }),
        None => return Err(Error::ZeroPolynomial),
    }
    let m = monicize(p)?;
    let f = m.field();
    let b = m.coeff(1);
    let c = m.coeff(0);
    let mut roots: Vec<Scalar> = match f {
        FieldSpec::Prime(_) => f
            .elements()
            .unwrap()
            .into_iter()
            .filter(|x| m.eval(x).is_zero())
            .collect(),
        FieldSpec::Rationals => {
            // t = (-b ± sqrt(b^2 - 4c)) / 2
            let disc = &(&b * &b) - &(&Scalar::from_i64(f, 4) * &c);
            let s = disc.sqrt().ok_or(Error::NotSplit(f))?;
            let half = Scalar::from_ratio(f, 1, 2)?;
            vec![&(&-&b + &s) * &half, &(&-&b - &s) * &half]
        }
    };
    roots.sort();
    roots.dedup();
    let (x, y) = match roots.as_slice() {
        [] => return Err(Error::NotSplit(f)),
        [r] => (r.clone(), r.clone()),
        [r, s, ..] => (r.clone(), s.clone()),
    };
    QuadraticTarget::from_roots(x, y)
}

/// Returns `c = x1 + x2 + x3` and `a_k = y_k - x_k`: `u` is a
/// `(p1, p2, p3)`-sum iff `u - c·id` is a `(t^2 - a_k t)_k`-sum.
pub fn canonical_shift(targets: &[QuadraticTarget; 3]) -> Result<(Scalar, [Scalar; 3])> {
    let f = targets[0].field();
    for t in targets.iter() {
        f.check(t.field())?;
    }
    let c = targets.iter().fold(Scalar::zero(f), |acc, t| &acc + t.roots().0);
    let a = [targets[0].gap(), targets[1].gap(), targets[2].gap()];
    Ok((c, a))
}

fn ctx_field<E: serde::de::Error>() -> std::result::Result<FieldSpec, E> {
    crate::field::context_field().ok_or_else(|| E::custom("polynomial parsed outside a field context"))
}

impl serde::Serialize for Polynomial {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        self.coeffs.serialize(s)
    }
}

impl<'de> serde::Deserialize<'de> for Polynomial {
    /// Coefficient list, lowest degree first.
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let coeffs: Vec<Scalar> = Vec::deserialize(d)?;
        Polynomial::new(ctx_field()?, coeffs).map_err(serde::de::Error::custom)
    }
}

#[derive(serde::Serialize, serde::Deserialize)]
struct TargetRepr {
    coeffs: Polynomial,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    roots: Option<(Scalar, Scalar)>,
}

impl serde::Serialize for QuadraticTarget {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        TargetRepr { coeffs: self.monic.clone(), roots: Some(self.roots.clone()) }.serialize(s)
    }
}

impl<'de> serde::Deserialize<'de> for QuadraticTarget {
    /// Either `{"coeffs": [...], "roots": [x, y]}` or a bare coefficient
    /// list; without explicit roots the canonical ascending order is used.
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        #[derive(serde::Deserialize)]
        #[serde(untagged)]
        enum Either {
            Full(TargetRepr),
            Bare(Polynomial),
        }
        use serde::de::Error as _;
        let (p, roots) = match Either::deserialize(d)? {
            Either::Full(r) => (r.coeffs, r.roots),
            Either::Bare(p) => (p, None),
        };
        let t = split_quadratic(&p).map_err(D::Error::custom)?;
        match roots {
            None => Ok(t),
            Some((x, y)) => {
                let r = QuadraticTarget::from_roots(x, y).map_err(D::Error::custom)?;
                if r.monic != t.monic {
                    return Err(D::Error::custom("listed roots do not match the coefficients"));
                }
                Ok(r)
            }
        }
    }
}
