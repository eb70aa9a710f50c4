mod common;

use common::*;
use proptest::prelude::*;
use quadsum::field::{FieldSpec, Scalar};
use quadsum::operator::{op_sub, verify_annihilated, Layout, Operator};
use quadsum::pipeline::{decompose_three, verify_certificate, Decomposition};
use quadsum::poly::{canonical_shift, Polynomial, QuadraticTarget};
use quadsum::vector::VectorFin;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn field() -> impl Strategy<Value = FieldSpec> {
    prop_oneof![Just(Q), Just(F2), Just(F3), Just(F5), Just(FieldSpec::Prime(7))]
}

fn scalar_in(f: FieldSpec) -> impl Strategy<Value = Scalar> {
    (-20i64..20, 1i64..6).prop_map(move |(n, d)| match f {
        FieldSpec::Rationals => Scalar::from_ratio(f, n, d).unwrap(),
        _ => Scalar::from_i64(f, n),
    })
}

fn triple() -> impl Strategy<Value = (Scalar, Scalar, Scalar)> {
    field().prop_flat_map(|f| (scalar_in(f), scalar_in(f), scalar_in(f)))
}

fn poly_in(f: FieldSpec) -> impl Strategy<Value = Polynomial> {
    prop::collection::vec(-6i64..6, 0..6).prop_map(move |c| Polynomial::from_i64(f, &c))
}

proptest! {
    #[test]
    fn field_axioms((x, y, z) in triple()) {
        prop_assert_eq!(&x + &y, &y + &x);
        prop_assert_eq!(&x * &y, &y * &x);
        prop_assert_eq!(&(&x + &y) + &z, &x + &(&y + &z));
        prop_assert_eq!(&(&x * &y) * &z, &x * &(&y * &z));
        prop_assert_eq!(&x * &(&y + &z), &(&x * &y) + &(&x * &z));
        prop_assert_eq!(&(&x - &y) + &y, x.clone());
        prop_assert!((&x + &-&x).is_zero());
        if !x.is_zero() {
            prop_assert!((&x * &x.inv().unwrap()).is_one());
        } else {
            prop_assert!(x.inv().is_err());
        }
    }

    #[test]
    fn polynomial_ring_laws(
        (f, p, q, x) in field().prop_flat_map(|f| (Just(f), poly_in(f), poly_in(f), scalar_in(f)))
    ) {
        prop_assert_eq!(p.add(&q).eval(&x), &p.eval(&x) + &q.eval(&x));
        prop_assert_eq!(p.mul(&q).eval(&x), &p.eval(&x) * &q.eval(&x));
        prop_assert_eq!(p.mul(&q), q.mul(&p));
        if !q.is_zero() {
            let (d, r) = p.div_rem(&q).unwrap();
            prop_assert_eq!(d.mul(&q).add(&r), p.clone());
            prop_assert!(r.is_zero() || r.degree() < q.degree());
        }
        // shift_arg(c) is p(t + c)
        let c = Scalar::from_i64(f, 3);
        prop_assert_eq!(p.shift_arg(&c).eval(&x), p.eval(&(&x + &c)));
    }

    #[test]
    fn split_targets_have_their_roots((x, y, _) in triple()) {
        let t = QuadraticTarget::from_roots(x.clone(), y.clone()).unwrap();
        prop_assert!(t.monic().eval(&x).is_zero());
        prop_assert!(t.monic().eval(&y).is_zero());
        prop_assert!(t.has_root(&x) && t.has_root(&y));
        prop_assert_eq!(t.gap(), &y - &x);
    }
}

/// Operators with no dominant eigenvalue that the pipeline decomposes.
fn non_dominant(f: FieldSpec, pick: usize) -> Operator {
    match pick % 5 {
        0 => Operator::shift(f),
        1 => Operator::downshift(f),
        2 => companion(f, &[&[0, 0, 1]]),
        3 => companion(f, &[&[0, 0, 0, 1], &[0, 0, 1]]),
        _ => shift_plus_line(f),
    }
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 12, ..ProptestConfig::default() })]

    /// A certificate built on one prefix still checks on twice that prefix.
    #[test]
    fn certificates_hold_beyond_their_prefix(pick in 0usize..5, fi in 0usize..3, r in prop::array::uniform3((0i64..3, 0i64..3))) {
        let f = [Q, F3, F5][fi];
        let u = non_dominant(f, pick);
        let targets = r.map(|(x, y)| QuadraticTarget::from_roots(s(f, x), s(f, x + y)).unwrap());
        match decompose_three(&u, &targets, 24) {
            Decomposition::Verified(c) => {
                let report = verify_certificate(&u, &c, 48);
                prop_assert!(report.passed, "{}", report);
            }
            Decomposition::Refused(reason) => prop_assert!(false, "refused: {}", reason),
            Decomposition::Unresolved(_) => {}
        }
    }
}

/// Recentering: summands for general targets are the square-zero or
/// `t(t - a_k)` summands of `u - c` moved back by the first roots.
#[test]
fn recentred_summands_match_the_canonical_shift() {
    let u = Operator::shift(Q);
    let targets = [
        QuadraticTarget::from_roots(s(Q, 1), s(Q, 3)).unwrap(),
        QuadraticTarget::from_roots(s(Q, -2), s(Q, 0)).unwrap(),
        QuadraticTarget::from_roots(s(Q, 5), s(Q, 5)).unwrap(),
    ];
    let (c, a) = canonical_shift(&targets).unwrap();
    assert_eq!(c, s(Q, 4));
    assert_eq!(a, [s(Q, 2), s(Q, 2), s(Q, 0)]);
    let Decomposition::Verified(cert) = decompose_three(&u, &targets, 48) else { panic!("not verified") };
    assert!(verify_certificate(&u, &cert, 48).passed);
    let mut total = Operator::zero(Q);
    for (k, (v, t)) in cert.summands.iter().zip(&targets).enumerate() {
        let centred = op_sub(v, &Operator::scalar(t.roots().0)).unwrap();
        let p = QuadraticTarget::t2_minus_at(&a[k]);
        let r = verify_annihilated(&centred, p.monic(), 48);
        assert!(r.passed, "summand {k}: {r}");
        total = quadsum::operator::op_add(&total, &centred).unwrap();
    }
    let shifted = op_sub(&u, &Operator::scalar(&c)).unwrap();
    for n in 0..48 {
        assert_eq!(total.col(n).unwrap(), shifted.col(n).unwrap(), "column {n}");
    }
}

/// Fifty operators against the three-square-zero targets: refusals happen
/// exactly for a non-zero dominant eigenvalue or a finite-rank part with
/// non-zero trace, and every other case decomposes.
#[test]
fn square_zero_refusal_corpus() {
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let mut cases: Vec<(String, Operator, Option<&str>)> = Vec::new();
    for i in 0..20 {
        let f = [Q, F2, F3, F5][i % 4];
        let u = match i / 4 {
            4 => Operator::direct_sum(&Operator::shift(f), &Operator::downshift(f), Layout::Interleave).unwrap(),
            k => non_dominant(f, k + i),
        };
        cases.push((format!("non-dominant {i} over {f}"), u, None));
    }
    for i in 0..30 {
        let f = [Q, F3, F5][i % 3];
        let lambda = s(f, rng.gen_range(0..3));
        let n = rng.gen_range(1..=3);
        let mut trace = Scalar::zero(f);
        let mut cols = Vec::new();
        for j in 0..n {
            let mut w = VectorFin::zero(f);
            for r in 0..n {
                // every other case gets a trace-free part
                let x = if r == j && i % 2 == 0 { 0 } else { rng.gen_range(-2..=2) };
                w.add_at(r, &s(f, x));
            }
            trace = &trace + &w.get(j);
            let mut col = w;
            col.add_at(j, &lambda);
            cols.push((j, col));
        }
        let expect = if !lambda.is_zero() {
            Some("non-zero dominant eigenvalue")
        } else if !trace.is_zero() {
            Some("finite rank and non-zero trace")
        } else {
            None
        };
        cases.push((format!("patch {i} over {f}, λ = {lambda}, tr = {trace}"), scalar_patch(&lambda, &cols), expect));
    }
    assert_eq!(cases.len(), 50);
    for (name, u, expect) in &cases {
        match (decompose_three(u, &sq(u.field()), 32), expect) {
            (Decomposition::Refused(r), Some(want)) => assert_eq!(&r, want, "{name}"),
            (Decomposition::Verified(c), None) => assert!(verify_certificate(u, &c, 32).passed, "{name}"),
            (other, _) => panic!("{name}: expected {expect:?}, got {other:?}"),
        }
    }
}
