//! Scalar feasibility and the decomposition of `λ·id`.

use serde::{Deserialize, Serialize};

use crate::certificate::{verify_sum, Evidence, Route, ThreeSumCertificate};
use crate::error::{Error, Result};
use crate::field::Scalar;
use crate::linalg::MatrixFin;
use crate::operator::{Band, Operator};
use crate::poly::QuadraticTarget;

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScalarSumWitness {
    pub parts: [Scalar; 3],
    pub target: Scalar,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TwoByTwoTriple {
    pub a: MatrixFin,
    pub b: MatrixFin,
    pub c: MatrixFin,
}

fn check_fields(lambda: &Scalar, targets: &[QuadraticTarget; 3]) -> Result<()> {
    targets.iter().try_for_each(|t| lambda.field().check(t.field()))
}

/// Searches the eight root choices for `λ = x₁ + x₂ + x₃` with `p_i(x_i) = 0`.
pub fn scalar_is_sum(lambda: &Scalar, targets: &[QuadraticTarget; 3]) -> Result<Option<ScalarSumWitness>> {
    check_fields(lambda, targets)?;
    let roots: Vec<[Scalar; 2]> = targets
        .iter()
        .map(|t| {
            let (x, y) = t.roots();
            [x.clone(), y.clone()]
        })
        .collect();
    for mask in 0..8usize {
        let parts: [Scalar; 3] = std::array::from_fn(|i| roots[i][(mask >> i) & 1].clone());
        if &(&parts[0] + &parts[1]) + &parts[2] == *lambda {
            return Ok(Some(ScalarSumWitness { parts, target: lambda.clone() }));
        }
    }
    Ok(None)
}

/// `2λ = tr p₁ + tr p₂ + tr p₃`
pub fn trace_condition(lambda: &Scalar, targets: &[QuadraticTarget; 3]) -> Result<bool> {
    check_fields(lambda, targets)?;
    let sum = targets.iter().fold(Scalar::zero(lambda.field()), |acc, t| &acc + t.trace());
    Ok(lambda + lambda == sum)
}

/// The 2×2 construction of `λ I₂` as a sum of three matrices annihilated by
/// the targets, valid whenever the trace condition holds.
pub fn two_by_two_identity_triple(lambda: &Scalar, targets: &[QuadraticTarget; 3]) -> Result<TwoByTwoTriple> {
    if !trace_condition(lambda, targets)? {
        return Err(Error::ConditionViolated(format!("2λ=tr p1+tr p2+tr p3 fails for λ={lambda}")));
    }
    let f = lambda.field();
    let (x, _) = targets[0].roots();
    let beta = targets[1].trace();
    let gamma = targets[2].trace();
    // det B = -μ = p₂(0)
    let mu = -targets[1].constant();
    let c00 = lambda - x;
    let c11 = &(gamma + x) - lambda;
    // det C = c00·c11 + ν = p₃(0)
    let nu = &targets[2].constant() - &(&c00 * &c11);
    let zero = Scalar::zero(f);
    let one = Scalar::one(f);
    let b = MatrixFin::from_rows(f, vec![vec![zero.clone(), mu], vec![one.clone(), beta.clone()]])?;
    let c = MatrixFin::from_rows(f, vec![vec![c00, nu], vec![-one, c11]])?;
    let a = MatrixFin::scalar(lambda, 2).sub(&b).sub(&c);
    let triple = TwoByTwoTriple { a, b, c };
    let mats = [&triple.a, &triple.b, &triple.c];
    for (m, t) in mats.iter().zip(targets) {
        if !m.eval_poly(t.monic()).is_zero() {
            return Err(Error::PropertyViolated(format!("2×2 construction: {m} is not annihilated by {t}")));
        }
    }
    Ok(triple)
}

/// Repeats a 2×2 matrix along the pairs `(e_{2k}, e_{2k+1})`.
pub fn tile_2x2(m: &MatrixFin) -> Result<Operator> {
    let f = m.field();
    let z = Scalar::zero(f);
    let bands = vec![
        Band { offset: 0, pattern: vec![m.get(0, 0).clone(), m.get(1, 1).clone()] },
        Band { offset: 1, pattern: vec![m.get(1, 0).clone(), z.clone()] },
        Band { offset: -1, pattern: vec![z, m.get(0, 1).clone()] },
    ];
    Operator::banded_periodic(f, 2, bands)
}

/// Decomposes `λ·id` on the whole space, preferring a diagonal answer.
pub fn scalar_identity_decomposition(
    lambda: &Scalar,
    targets: &[QuadraticTarget; 3],
    prefix: usize,
) -> Result<ThreeSumCertificate> {
    let u = Operator::scalar(lambda);
    let (summands, evidence) = if let Some(w) = scalar_is_sum(lambda, targets)? {
        let s = std::array::from_fn(|i| Operator::scalar(&w.parts[i]));
        (s, Evidence::ScalarWitness { parts: w.parts })
    } else if trace_condition(lambda, targets)? {
        let t = two_by_two_identity_triple(lambda, targets)?;
        let s = [tile_2x2(&t.a)?, tile_2x2(&t.b)?, tile_2x2(&t.c)?];
        (s, Evidence::TwoByTwo { a: t.a, b: t.b, c: t.c })
    } else {
        let two = lambda + lambda;
        let sum = targets.iter().fold(Scalar::zero(lambda.field()), |acc, t| &acc + t.trace());
        return Err(Error::ConditionViolated(format!(
            "λ={lambda} is not a (p1,p2,p3)-sum of roots and 2λ=tr p1+tr p2+tr p3 fails ({two} ≠ {sum})"
        )));
    };
    let report = verify_sum(&u, &summands, targets, prefix);
    if !report.passed {
        return Err(Error::PropertyViolated(format!("scalar decomposition: {report}")));
    }
    Ok(ThreeSumCertificate {
        summands,
        targets: targets.clone(),
        verified_prefix: prefix,
        route: Route::Scalar,
        evidence: vec![evidence],
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::FieldSpec;

    fn sq(f: FieldSpec) -> [QuadraticTarget; 3] {
        std::array::from_fn(|_| QuadraticTarget::square_zero(f))
    }

    fn idem(f: FieldSpec) -> [QuadraticTarget; 3] {
        std::array::from_fn(|_| QuadraticTarget::idempotent(f))
    }

    #[test]
    fn scalar_witness_examples() {
        let q = FieldSpec::Rationals;
        let w = scalar_is_sum(&Scalar::zero(q), &sq(q)).unwrap().unwrap();
        assert!(w.parts.iter().all(|x| x.is_zero()));
        let w = scalar_is_sum(&Scalar::from_i64(q, 2), &idem(q)).unwrap().unwrap();
        let ones = w.parts.iter().filter(|x| x.is_one()).count();
        assert_eq!(ones, 2);
        let f3 = FieldSpec::Prime(3);
        assert!(scalar_is_sum(&Scalar::one(f3), &sq(f3)).unwrap().is_none());
    }

    #[test]
    fn trace_condition_examples() {
        let f2 = FieldSpec::Prime(2);
        assert!(trace_condition(&Scalar::one(f2), &sq(f2)).unwrap());
        let q = FieldSpec::Rationals;
        assert!(trace_condition(&Scalar::zero(q), &sq(q)).unwrap());
        assert!(!trace_condition(&Scalar::one(q), &sq(q)).unwrap());
    }

    #[test]
    fn two_by_two_over_f2() {
        let f2 = FieldSpec::Prime(2);
        let t = two_by_two_identity_triple(&Scalar::one(f2), &sq(f2)).unwrap();
        assert_eq!(t.b, MatrixFin::from_i64(f2, &[&[0, 0], &[1, 0]]));
        assert_eq!(t.c, MatrixFin::from_i64(f2, &[&[1, 1], &[1, 1]]));
        assert_eq!(t.a, MatrixFin::from_i64(f2, &[&[0, 1], &[0, 0]]));
    }

    #[test]
    fn two_by_two_three_halves() {
        let q = FieldSpec::Rationals;
        let l = Scalar::from_ratio(q, 3, 2).unwrap();
        let t = two_by_two_identity_triple(&l, &idem(q)).unwrap();
        let sum = t.a.add(&t.b).add(&t.c);
        assert_eq!(sum, MatrixFin::scalar(&l, 2));
    }

    #[test]
    fn decomposition_routes() {
        let q = FieldSpec::Rationals;
        let c = scalar_identity_decomposition(&Scalar::zero(q), &sq(q), 64).unwrap();
        assert!(matches!(c.evidence[0], Evidence::ScalarWitness { .. }));
        let f2 = FieldSpec::Prime(2);
        let c = scalar_identity_decomposition(&Scalar::one(f2), &sq(f2), 512).unwrap();
        assert!(matches!(c.evidence[0], Evidence::TwoByTwo { .. }));
        let e = scalar_identity_decomposition(&Scalar::one(q), &sq(q), 64).unwrap_err();
        assert!(matches!(e, Error::ConditionViolated(_)));
    }
}
