#![allow(dead_code)]

use std::collections::BTreeMap;

use quadsum::field::{FieldSpec, Scalar};
use quadsum::linalg::MatrixFin;
use quadsum::operator::{Layout, Operator};
use quadsum::poly::{Polynomial, QuadraticTarget};
use quadsum::vector::VectorFin;
use rand::Rng;

pub const Q: FieldSpec = FieldSpec::Rationals;
pub const F2: FieldSpec = FieldSpec::Prime(2);
pub const F3: FieldSpec = FieldSpec::Prime(3);
pub const F5: FieldSpec = FieldSpec::Prime(5);

pub fn s(f: FieldSpec, v: i64) -> Scalar {
    Scalar::from_i64(f, v)
}

pub fn e(f: FieldSpec, n: usize) -> VectorFin {
    VectorFin::unit(f, n)
}

pub fn sq(f: FieldSpec) -> [QuadraticTarget; 3] {
    std::array::from_fn(|_| QuadraticTarget::square_zero(f))
}

pub fn idem(f: FieldSpec) -> [QuadraticTarget; 3] {
    std::array::from_fn(|_| QuadraticTarget::idempotent(f))
}

pub fn poly(f: FieldSpec, c: &[i64]) -> Polynomial {
    Polynomial::from_i64(f, c)
}

/// `λ·id` with the listed columns replaced.
pub fn scalar_patch(lambda: &Scalar, cols: &[(usize, VectorFin)]) -> Operator {
    let m: BTreeMap<usize, VectorFin> = cols.iter().cloned().collect();
    Operator::patch(&Operator::scalar(lambda), m).unwrap()
}

/// `λ·id + w` with `w` the rank-one map `e_0 ↦ c·e_0`.
pub fn rank_one_diagonal(lambda: &Scalar, c: &Scalar) -> Operator {
    let f = lambda.field();
    scalar_patch(lambda, &[(0, e(f, 0).scaled(&(lambda + c)))])
}

/// `λ·id + N` with the nilpotent rank-one `N: e_0 ↦ e_1`.
pub fn rank_one_nilpotent(lambda: &Scalar) -> Operator {
    let f = lambda.field();
    scalar_patch(lambda, &[(0, e(f, 0).scaled(lambda).add(&e(f, 1)))])
}

/// The shift with a single zero line in front (`f_0 = e_0`).
pub fn shift_plus_line(f: FieldSpec) -> Operator {
    let line = Operator::matrix(MatrixFin::zero(f, 1, 1)).unwrap();
    Operator::direct_sum(&line, &Operator::shift(f), Layout::Prefix { len: 1 }).unwrap()
}

pub fn companion(f: FieldSpec, blocks: &[&[i64]]) -> Operator {
    Operator::companion_blocks(f, blocks.iter().map(|c| poly(f, c)).collect()).unwrap()
}

/// A matrix as a map of columns on `e_0 … e_{n-1}`.
pub fn columns(m: &MatrixFin) -> Vec<(usize, VectorFin)> {
    let f = m.field();
    (0..m.ncols())
        .map(|j| {
            let mut v = VectorFin::zero(f);
            for i in 0..m.nrows() {
                v.add_at(i, m.get(i, j));
            }
            (j, v)
        })
        .collect()
}

/// A random unimodular integer matrix and its inverse, as products of
/// elementary row operations.
pub fn unimodular<R: Rng>(rng: &mut R, f: FieldSpec, n: usize) -> (MatrixFin, MatrixFin) {
    let mut p = MatrixFin::identity(f, n);
    let mut inv = MatrixFin::identity(f, n);
    if n < 2 {
        return (p, inv);
    }
    for _ in 0..3 * n {
        let i = rng.gen_range(0..n);
        let mut j = rng.gen_range(0..n - 1);
        if j >= i {
            j += 1;
        }
        let c: i64 = rng.gen_range(-2..=2);
        let mut el = MatrixFin::identity(f, n);
        el.set(i, j, s(f, c));
        let mut el_inv = MatrixFin::identity(f, n);
        el_inv.set(i, j, s(f, -c));
        p = el.mul(&p);
        inv = inv.mul(&el_inv);
    }
    (p, inv)
}

/// A random `n×n` matrix annihilated by `(t - x)(t - y)`.
pub fn random_quadratic<R: Rng>(rng: &mut R, n: usize, x: &Scalar, y: &Scalar) -> MatrixFin {
    let f = x.field();
    let mut d = MatrixFin::zero(f, n, n);
    if x == y {
        let r = rng.gen_range(0..=n / 2);
        for i in 0..n {
            d.set(i, i, x.clone());
        }
        for k in 0..r {
            d.set(k, r + k, Scalar::one(f));
        }
    } else {
        for i in 0..n {
            d.set(i, i, if rng.gen_bool(0.5) { x.clone() } else { y.clone() });
        }
    }
    let (p, inv) = unimodular(rng, f, n);
    p.mul(&d).mul(&inv)
}
