use std::collections::BTreeMap;

use super::*;
use crate::field::FieldSpec;
use crate::linalg::Echelon;
use crate::operator::{op_compose, op_sub, verify_annihilated};
use crate::poly::Polynomial;

const Q: FieldSpec = FieldSpec::Rationals;
const F2: FieldSpec = FieldSpec::Prime(2);

fn e(f: FieldSpec, n: usize) -> VectorFin {
    VectorFin::unit(f, n)
}

fn pair(f: FieldSpec, n: usize) -> ExplicitStratum {
    ExplicitStratum { generator: e(f, n), dim: Dim::Finite(2) }
}

/// `x_k = e_{2k+1}` with `n_k = 2` for the down-shift.
fn downshift_pairs(f: FieldSpec) -> Arc<Stratification> {
    let d = Operator::downshift(f);
    Stratification::explicit(&d, vec![], Some(PeriodicTail { strata: vec![pair(f, 1)], shift: 2 })).unwrap()
}

/// The strata's Krylov vectors span `e_0 … e_{prefix-1}` and stay independent.
fn exhausts(s: &Stratification, prefix: usize) -> bool {
    let f = s.op().field();
    let mut ech = Echelon::new(f);
    let mut i = 0;
    while (0..prefix).any(|n| !ech.contains(&e(f, n))) {
        let Some(st) = s.stratum(i).unwrap() else { return false };
        let Dim::Finite(d) = st.dim else { return false };
        let mut v = st.generator.clone();
        for _ in 0..d {
            if ech.insert(&v, 0).is_err() {
                return false;
            }
            v = s.op().apply(&v).unwrap();
        }
        i += 1;
        if i > prefix * prefix {
            return false;
        }
    }
    true
}

#[test]
fn flags_of_explicit_stratifications() {
    let d = Operator::downshift(Q);
    let good = Stratification::explicit(&d, vec![], Some(PeriodicTail { strata: vec![pair(Q, 1)], shift: 2 })).unwrap();
    assert_eq!(check_properties(&good), PropertyFlags { pa: true, pa_plus: true, pm: true });

    let s = Operator::shift(Q);
    let single = Stratification::explicit(&s, vec![ExplicitStratum { generator: e(Q, 0), dim: Dim::Infinite }], None)
        .unwrap();
    assert!(!check_properties(&single).pm);

    let first_line = Stratification::explicit(
        &d,
        vec![ExplicitStratum { generator: e(Q, 0), dim: Dim::Finite(1) }],
        Some(PeriodicTail { strata: vec![pair(Q, 2)], shift: 2 }),
    )
    .unwrap();
    let flags = check_properties(&first_line);
    assert!(flags.pa && !flags.pa_plus && flags.pm);
}

#[test]
fn downshift_connector_is_square_zero() {
    let v = connector(&downshift_pairs(Q), &Scalar::zero(Q)).unwrap();
    for k in 0..40 {
        assert_eq!(v.col(2 * k).unwrap(), e(Q, 2 * k + 3).scaled(&Scalar::from_i64(Q, -1)));
        assert!(v.col(2 * k + 1).unwrap().is_zero());
    }
    let t2 = Polynomial::from_i64(Q, &[0, 0, 1]);
    assert!(verify_annihilated(&v, &t2, 256).passed);
}

#[test]
fn downshift_connector_idempotent_char2() {
    let v = connector(&downshift_pairs(F2), &Scalar::one(F2)).unwrap();
    for k in 0..40 {
        assert_eq!(v.col(2 * k).unwrap(), e(F2, 2 * k).add(&e(F2, 2 * k + 3)));
    }
    let idem = Polynomial::from_i64(F2, &[0, -1, 1]);
    assert!(verify_annihilated(&v, &idem, 256).passed);
}

#[test]
fn infinite_strata_give_zero_connector() {
    // two shift chains on the even and odd indices
    let s = Operator::shift(Q);
    let u = Operator::direct_sum(&s, &s, crate::operator::Layout::Interleave).unwrap();
    let inf = |n| ExplicitStratum { generator: e(Q, n), dim: Dim::Infinite };
    let st = Stratification::explicit(&u, vec![inf(0), inf(1)], None).unwrap();
    let v = connector(&st, &Scalar::from_i64(Q, 5)).unwrap();
    for n in 0..32 {
        assert!(v.col(n).unwrap().is_zero());
    }
}

#[test]
fn elementary_checks() {
    let gens0 = |f| GenSpec::List { vectors: vec![e(f, 0)] };
    let c = verify_elementary(&Operator::shift(Q), &gens0(Q), 64).unwrap();
    assert_eq!(c.verified_prefix, 64);

    let d = Operator::downshift(Q);
    let v = connector(&downshift_pairs(Q), &Scalar::zero(Q)).unwrap();
    let w = op_sub(&d, &v).unwrap();
    verify_elementary(&w, &GenSpec::List { vectors: vec![e(Q, 1)] }, 64).unwrap();

    assert!(matches!(verify_elementary(&d, &gens0(Q), 2), Err(Error::NotFreeOnPrefix(_))));
}

#[test]
fn index2_on_square_zero_blocks() {
    let t2 = Polynomial::from_i64(Q, &[0, 0, 1]);
    let u = Operator::companion_blocks(Q, vec![t2]).unwrap();
    let s = good_strat_index2(&u, &Scalar::zero(Q)).unwrap();
    for i in 0..64 {
        assert_eq!(s.stratum(i).unwrap().unwrap().dim, Dim::Finite(2));
    }
    assert!(check_properties(&s).good());
    assert!(exhausts(&s, 96));
}

#[test]
fn index2_with_interleaved_lines() {
    let t2 = Polynomial::from_i64(Q, &[0, 0, 1]);
    let t = Polynomial::from_i64(Q, &[0, 1]);
    let u = Operator::companion_blocks(Q, vec![t2, t]).unwrap();
    let s = good_strat_index2(&u, &Scalar::zero(Q)).unwrap();
    assert!(check_properties(&s).good());
    assert!(exhausts(&s, 96));
    // the lines sit at positions without a predecessor
    for i in 0..64 {
        let st = s.stratum(i).unwrap().unwrap();
        if st.dim.is_one() {
            assert!(!s.has_predecessor(&st.index).unwrap(), "line at {}", st.index);
        }
    }
}

#[test]
fn zero_operator_has_no_good_torsion_strat() {
    let z = Operator::zero(Q);
    assert!(matches!(torsion_good_strat(&z, 64), Err(Error::ConditionViolated(_))));
    assert!(good_strat_index2(&z, &Scalar::zero(Q)).is_err());
}

#[test]
fn torsion_builder_on_downshift() {
    let s = torsion_good_strat(&Operator::downshift(Q), DEFAULT_SCAN_BUDGET).unwrap();
    for k in 0..32 {
        let st = s.stratum(k).unwrap().unwrap();
        assert_eq!(st.dim, Dim::Finite(2));
        assert_eq!(st.generator, e(Q, 2 * k + 1));
    }
    assert!(check_properties(&s).good());
    assert!(exhausts(&s, 128));
}

#[test]
fn torsion_builder_on_cubic_blocks() {
    let t3 = Polynomial::from_i64(Q, &[0, 0, 0, 1]);
    let u = Operator::companion_blocks(Q, vec![t3]).unwrap();
    let s = torsion_good_strat(&u, DEFAULT_SCAN_BUDGET).unwrap();
    for k in 0..32 {
        let Dim::Finite(d) = s.stratum(k).unwrap().unwrap().dim else { panic!("infinite stratum") };
        assert!((2..=3).contains(&d));
    }
    assert!(check_properties(&s).good());
    assert!(exhausts(&s, 96));
}

#[test]
fn tower_of_downshift_pairs() {
    let d = Operator::downshift(Q);
    let lower = Stratification::explicit(&d, vec![pair(Q, 1)], None).unwrap();
    let upper = Stratification::explicit(&d, vec![], Some(PeriodicTail { strata: vec![pair(Q, 3)], shift: 2 })).unwrap();
    let t = tower_compose(&lower, &upper).unwrap();
    assert!(check_properties(&t).good());
    assert!(exhausts(&t, 64));
    let v = connector(&t, &Scalar::zero(Q)).unwrap();
    let t2 = Polynomial::from_i64(Q, &[0, 0, 1]);
    assert!(verify_annihilated(&v, &t2, 128).passed);
}

#[test]
fn tower_rejects_bad_parts() {
    let d = Operator::downshift(Q);
    let empty = Stratification::explicit(&d, vec![], None).unwrap();
    let upper = downshift_pairs(Q);
    assert!(tower_compose(&empty, &upper).is_err());
    let lower = Stratification::explicit(&d, vec![pair(Q, 1)], None).unwrap();
    let capped = Stratification::explicit(&d, vec![pair(Q, 3)], None).unwrap();
    assert!(matches!(tower_compose(&lower, &capped), Err(Error::PreconditionUnverifiable(_))));
}

#[test]
fn dominant_split_examples() {
    let lambda = Scalar::from_i64(Q, 3);

    let mut cols = BTreeMap::new();
    cols.insert(0, e(Q, 1));
    cols.insert(1, VectorFin::zero(Q));
    let u = Operator::patch(&Operator::zero(Q), cols).unwrap();
    let sp = split_dominant(&u).unwrap();
    assert!(sp.mu.is_zero());
    assert_eq!(sp.blocks.len(), 1);
    assert_eq!(sp.blocks[0].1, 2);
    let h: Vec<VectorFin> = sp.h.cursor().take(5).collect();
    assert!(h.iter().all(|v| !v.support().any(|n| n < 2)));

    let sp = split_dominant(&Operator::scalar(&lambda)).unwrap();
    assert!(sp.blocks.is_empty());
    assert_eq!(sp.mu, lambda);

    let mut cols = BTreeMap::new();
    cols.insert(4, e(Q, 4).scaled(&lambda).add(&e(Q, 7)));
    let u = Operator::patch(&Operator::scalar(&lambda), cols).unwrap();
    let sp = split_dominant(&u).unwrap();
    assert_eq!(sp.blocks.len(), 1);
    assert_eq!(sp.blocks[0].1, 2);
    let w = op_sub(&u, &Operator::scalar(&lambda)).unwrap();
    let g = &sp.blocks[0].0;
    assert!(!w.apply(g).unwrap().is_zero());
    assert!(op_compose(&w, &w).unwrap().apply(g).unwrap().is_zero());
}

