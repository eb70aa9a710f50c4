//! Splitting an elementary operator into two quadratic summands.
//!
//! Work happens in `E = u - (x₁ + x₂)` after choosing roots `x_i` of the
//! targets, so the summands must satisfy `A² = a·A` and `B² = b·B` with
//! `a = y₁ - x₁`, `b = y₂ - x₂`. Each free chain `F[E]·g` is split on its own.
//!
//! * When `b = -a`, on the chain basis `E^k g`: `A` sends `E^{2k} g` to
//!   `E^{2k+1} g` and multiplies `E^{2k+1} g` by `a`.
//! * Otherwise, on the basis `c_k = Z^k g`, `d_k = E c_k` with
//!   `Z = E(E - a - b)`: `A c_k = a c_k` and `A d_k = c_{k+1} + a(a+b) c_k`.
//!   Then `B = E - A` preserves each plane `span(c_k, d_k)`, where its matrix
//!   `[[-a, -a(a+b)], [1, a+b]]` has trace `b` and determinant `0`.
//!
//! `A` commutes with `Z`, so writing `t^k = q₀(Z) + t·q₁(Z)` gives
//! `A E^k g = (a q₀ + (Z + a(a+b)) q₁)(E) g`. The family never builds the
//! `Z`-basis. It enumerates the chains of `W = E - base` for a scalar `base`
//! chosen by the caller (typically one that makes `W` sparse, such as the
//! unshifted operator), and computes on polynomials in `t`.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::family::{BasisFamily, FamilySpec, LazyHandle, DEFAULT_BASIS_BUDGET};
use crate::field::{FieldSpec, Scalar};
use crate::operator::{verify_annihilated, Band, IndexSet, Operator};
use crate::poly::{Polynomial, QuadraticTarget};
use crate::stratification::{ChainRounds, GenSpec};
use crate::vector::VectorFin;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SplitForm {
    /// `b = -a`, on the powers `E^k g`.
    Staggered,
    /// Any `a, b`, on the basis `Z^k g, E Z^k g`.
    Quadratic,
}

/// `E = A + B` on the chains of the free generators `gens` of `E`.
/// Component 0 is `A`, component 1 is `B`.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ChainSplitSpec {
    pub op: Operator,
    pub gens: GenSpec,
    pub a: Scalar,
    pub b: Scalar,
    pub form: SplitForm,
    #[serde(default)]
    pub domain: Option<IndexSet>,
    /// Chains are enumerated for `op - base`; zero when absent.
    #[serde(default)]
    pub base: Option<Scalar>,
    pub budget: usize,
}

/// Per-family polynomial model: a vector `h(E) g` is handled through `h`.
struct Model {
    a: Scalar,
    s: Scalar,
    base: Scalar,
    form: SplitForm,
    z: Polynomial,
    /// Staggered: `A(t^i)`. Quadratic: `A W^k g` in `W`-coordinates.
    a_powers: Vec<Polynomial>,
    /// `(q₀, q₁)` with `W^k = q₀(Z) + W·q₁(Z)`, as polynomials in `W`
    quotient: (Polynomial, Polynomial),
    /// `(t - base)^k`
    chain_polys: Vec<Polynomial>,
}

impl Model {
    /// `A(E^i g)` for the staggered form, as a polynomial in `E`.
    fn a_power(&mut self, i: usize) -> &Polynomial {
        let f = self.a.field();
        while self.a_powers.len() <= i {
            let j = self.a_powers.len();
            let p = if j % 2 == 0 { monomial(f, j + 1) } else { monomial(f, j).scale(&self.a) };
            self.a_powers.push(p);
        }
        &self.a_powers[i]
    }

    /// Coordinates of `A W^k g` on `W^j g`, where `W = E - base`.
    fn image_coords(&mut self, k: usize) -> Polynomial {
        if self.form == SplitForm::Quadratic {
            return self.quadratic_coords(k);
        }
        let f = self.a.field();
        while self.chain_polys.len() <= k {
            let next = match self.chain_polys.last() {
                None => Polynomial::one(f),
                Some(p) => p.mul(&Polynomial::linear(&self.base)),
            };
            self.chain_polys.push(next);
        }
        let h = self.chain_polys[k].clone();
        let mut out = Polynomial::zero(f);
        for (i, c) in h.coeffs().iter().enumerate() {
            if !c.is_zero() {
                out = out.add(&self.a_power(i).scale(c));
            }
        }
        if self.base.is_zero() {
            out
        } else {
            out.shift_arg(&self.base)
        }
    }

    /// In the variable `W`, `Z = W² + βW + γ` with `β = 2·base - s` and
    /// `γ = base(base - s)`. Writing `W^k = q₀(Z) + W q₁(Z)` gives the step
    /// `(q₀, q₁) ↦ ((Z - γ) q₁, q₀ - β q₁)`, and
    /// `A W^k g = a q₀ + (Z + a s - a·base) q₁`.
    fn quadratic_coords(&mut self, k: usize) -> Polynomial {
        let f = self.a.field();
        while self.a_powers.len() <= k {
            if !self.a_powers.is_empty() {
                let beta = &(&self.base + &self.base) - &self.s;
                let z_shift = Polynomial::new(f, vec![Scalar::zero(f), beta.clone(), Scalar::one(f)])
                    .expect("monic");
                let (q0, q1) = &self.quotient;
                self.quotient = (z_shift.mul(q1), q0.add(&q1.scale(&-&beta)));
            }
            let (q0, q1) = &self.quotient;
            let c = &(&self.a * &self.s) - &(&self.a * &self.base);
            let factor = self.z.add(&Polynomial::new(f, vec![c]).expect("constant"));
            self.a_powers.push(q0.scale(&self.a).add(&factor.mul(q1)));
        }
        self.a_powers[k].clone()
    }
}

fn monomial(f: FieldSpec, i: usize) -> Polynomial {
    let mut c = vec![Scalar::zero(f); i + 1];
    c[i] = Scalar::one(f);
    Polynomial::new(f, c).expect("non-zero")
}

struct ChainSplitFamily {
    field: FieldSpec,
    label: String,
    chain_op: Operator,
    rounds: ChainRounds,
    model: Model,
    /// `(generator, k)` of each basis vector `W^k g`
    entries: Vec<(usize, usize)>,
    powers: HashMap<usize, Vec<VectorFin>>,
    domain: IndexSet,
}

impl ChainSplitFamily {
    fn power(&mut self, g: usize, j: usize) -> Result<VectorFin> {
        let chain = self.powers.get_mut(&g).expect("generator seen");
        while chain.len() <= j {
            let next = self.chain_op.apply(chain.last().expect("chain starts at g"))?;
            chain.push(next);
        }
        Ok(chain[j].clone())
    }

    fn image_a(&mut self, i: usize) -> Result<VectorFin> {
        let (g, k) = self.entries[i];
        let p = self.model.image_coords(k);
        let mut out = VectorFin::zero(self.field);
        for (j, c) in p.coeffs().iter().enumerate() {
            if !c.is_zero() {
                out.axpy(c, &self.power(g, j)?);
            }
        }
        Ok(out)
    }
}

impl BasisFamily for ChainSplitFamily {
    fn field(&self) -> FieldSpec {
        self.field
    }
    fn domain(&self) -> IndexSet {
        self.domain.clone()
    }
    fn components(&self) -> usize {
        2
    }
    fn basis_vector(&mut self, _i: usize) -> Result<Option<VectorFin>> {
        let Some((g, k, v)) = self.rounds.next()? else { return Ok(None) };
        let chain = self.powers.entry(g).or_default();
        if chain.len() == k {
            chain.push(v.clone());
        }
        self.entries.push((g, k));
        Ok(Some(v))
    }
    fn image(&mut self, component: usize, i: usize) -> Result<VectorFin> {
        let a = self.image_a(i)?;
        if component == 0 {
            return Ok(a);
        }
        // E W^k g = W^{k+1} g + base·W^k g
        let (g, k) = self.entries[i];
        let e = self.power(g, k + 1)?.add(&self.power(g, k)?.scaled(&self.model.base));
        Ok(e.sub(&a))
    }
    fn label(&self) -> String {
        self.label.clone()
    }
}

impl ChainSplitSpec {
    pub(crate) fn build(&self) -> Result<Box<dyn BasisFamily>> {
        let f = self.op.field();
        f.check(self.a.field())?;
        f.check(self.b.field())?;
        if self.form == SplitForm::Staggered && self.b != -&self.a {
            return Err(Error::Input("the staggered split needs b = -a".into()));
        }
        let base = self.base.clone().unwrap_or_else(|| Scalar::zero(f));
        f.check(base.field())?;
        let s = &self.a + &self.b;
        // `Z = E(E - s)` written in `W = E - base`
        let z = Polynomial::new(
            f,
            vec![&base * &(&base - &s), &(&base + &base) - &s, Scalar::one(f)],
        )?;
        let chain_op = self.op.plus_scalar(&-&base)?;
        Ok(Box::new(ChainSplitFamily {
            field: f,
            label: format!("chain_split({:?}, a={}, b={})", self.form, self.a, self.b),
            rounds: ChainRounds::new(chain_op.clone(), self.gens.resolve()?),
            chain_op,
            model: Model {
                a: self.a.clone(),
                s,
                base,
                form: self.form,
                z,
                a_powers: Vec::new(),
                quotient: (Polynomial::one(f), Polynomial::zero(f)),
                chain_polys: Vec::new(),
            },
            entries: Vec::new(),
            powers: HashMap::new(),
            domain: self.domain.clone().unwrap_or(IndexSet::All),
        }))
    }
}

/// `Shift = A + B` with `A² = B² = 0`: `A e_{2k} = e_{2k+1}`, `B e_{2k+1} = e_{2k+2}`.
pub fn split_shift_squarezero(field: FieldSpec) -> Result<(Operator, Operator)> {
    let (z, o) = (Scalar::zero(field), Scalar::one(field));
    let a = Operator::banded_periodic(field, 2, vec![Band { offset: 1, pattern: vec![o.clone(), z.clone()] }])?;
    let b = Operator::banded_periodic(field, 2, vec![Band { offset: 1, pattern: vec![z, o] }])?;
    Ok((a, b))
}

/// Over characteristic two, `Shift = A + B` with `A² = A` and `B² = B`.
pub fn split_shift_idempotent_char2(field: FieldSpec) -> Result<(Operator, Operator)> {
    if field.characteristic() != 2 {
        return Err(Error::WrongCharacteristic(format!("need characteristic 2, got {}", field.characteristic())));
    }
    let (z, o) = (Scalar::zero(field), Scalar::one(field));
    let a = Operator::banded_periodic(
        field,
        2,
        vec![
            Band { offset: 1, pattern: vec![o.clone(), z.clone()] },
            Band { offset: 0, pattern: vec![z.clone(), o.clone()] },
        ],
    )?;
    let b = Operator::banded_periodic(
        field,
        2,
        vec![Band { offset: 0, pattern: vec![z.clone(), o.clone()] }, Band { offset: 1, pattern: vec![z, o] }],
    )?;
    Ok((a, b))
}

/// Splits `e` (elementary with generators `gens`, supported on `domain`)
/// into `A + B` with `A² = a·A`, `B² = b·B`, lazily. The generators are
/// used for `e - base`, which is elementary along with `e`.
pub fn split_shifted(
    e: &Operator,
    base: &Scalar,
    gens: &GenSpec,
    domain: Option<IndexSet>,
    a: &Scalar,
    b: &Scalar,
) -> Result<(Operator, Operator, SplitForm)> {
    let form = if *b == -a { SplitForm::Staggered } else { SplitForm::Quadratic };
    let spec = ChainSplitSpec {
        op: e.clone(),
        gens: gens.clone(),
        a: a.clone(),
        b: b.clone(),
        form,
        domain,
        base: (!base.is_zero()).then(|| base.clone()),
        budget: DEFAULT_BASIS_BUDGET,
    };
    let mut hs = LazyHandle::build_all(FamilySpec::ChainSplit(spec))?;
    let hb = hs.pop().expect("two components");
    let ha = hs.pop().expect("two components");
    Ok((Operator::lazy(ha), Operator::lazy(hb), form))
}

/// `u = A + B` with `p₁(A) = 0` and `p₂(B) = 0`, for `u` elementary with
/// generators `gens`. Both identities are checked on `prefix` columns
/// before returning.
pub fn split_elementary(
    u: &Operator,
    gens: &GenSpec,
    p1: &QuadraticTarget,
    p2: &QuadraticTarget,
    prefix: usize,
) -> Result<(Operator, Operator)> {
    let f = u.field();
    f.check(p1.field())?;
    f.check(p2.field())?;
    let (x1, y1) = p1.roots();
    let (x2, y2) = p2.roots();
    let c = x1 + x2;
    let e = u.plus_scalar(&-&c)?;
    let (a0, b0, _) = split_shifted(&e, &-&c, gens, None, &(y1 - x1), &(y2 - x2))?;
    let a = a0.plus_scalar(x1)?;
    let b = b0.plus_scalar(x2)?;
    for (op, p, name) in [(&a, p1, "p1(A)"), (&b, p2, "p2(B)")] {
        let r = verify_annihilated(op, p.monic(), prefix);
        if !r.passed {
            return Err(Error::PropertyViolated(format!("{name} ≠ 0: {r}")));
        }
    }
    for n in 0..prefix {
        if a.col(n)?.add(&b.col(n)?) != u.col(n)? {
            return Err(Error::PropertyViolated(format!("A + B ≠ u at column {n}")));
        }
    }
    Ok((a, b))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::operator::{op_compose, op_sub};

    const Q: FieldSpec = FieldSpec::Rationals;

    fn gens0(f: FieldSpec) -> GenSpec {
        GenSpec::List { vectors: vec![VectorFin::unit(f, 0)] }
    }

    #[test]
    fn squarezero_pair_on_shift() {
        let (a, b) = split_shift_squarezero(Q).unwrap();
        assert!(a.apply(&a.col(0).unwrap()).unwrap().is_zero());
        assert!(b.apply(&b.col(1).unwrap()).unwrap().is_zero());
        for n in 0..256 {
            assert_eq!(a.col(n).unwrap().add(&b.col(n).unwrap()), VectorFin::unit(Q, n + 1));
        }
    }

    #[test]
    fn idempotent_pair_char2() {
        let f2 = FieldSpec::Prime(2);
        let (a, b) = split_shift_idempotent_char2(f2).unwrap();
        let a2 = op_compose(&a, &a).unwrap();
        let b2 = op_compose(&b, &b).unwrap();
        for n in 0..256 {
            assert_eq!(a2.col(n).unwrap(), a.col(n).unwrap());
            assert_eq!(b2.col(n).unwrap(), b.col(n).unwrap());
            assert_eq!(a.col(n).unwrap().add(&b.col(n).unwrap()), VectorFin::unit(f2, n + 1));
        }
        assert_eq!(b.col(1).unwrap(), VectorFin::from_i64(f2, &[(1, 1), (2, 1)]));
        assert!(matches!(split_shift_idempotent_char2(Q), Err(Error::WrongCharacteristic(_))));
    }

    #[test]
    fn general_targets_on_shift() {
        let s = Operator::shift(Q);
        let p1 = QuadraticTarget::square_zero(Q);
        let p2 = QuadraticTarget::from_roots(Scalar::one(Q), Scalar::from_i64(Q, -1)).unwrap();
        let (a, b) = split_elementary(&s, &gens0(Q), &p1, &p2, 128).unwrap();
        assert!(op_sub(&s, &a).unwrap().col(5).unwrap() == b.col(5).unwrap());
        let p3 = QuadraticTarget::from_roots(Scalar::from_i64(Q, 2), Scalar::from_i64(Q, 7)).unwrap();
        split_elementary(&s, &gens0(Q), &p3, &p1, 128).unwrap();
    }

    #[test]
    fn two_chains_interleaved() {
        // shift ⊕ shift on even and odd indices
        let s = Operator::shift(Q);
        let u = Operator::direct_sum(&s, &s, crate::operator::Layout::Interleave).unwrap();
        let gens = GenSpec::List { vectors: vec![VectorFin::unit(Q, 0), VectorFin::unit(Q, 1)] };
        let idem = QuadraticTarget::idempotent(Q);
        split_elementary(&u, &gens, &idem, &idem, 128).unwrap();
    }
}
