//! Finite-dimensional `F[t]`-modules: cyclic decomposition of `F^n` under a
//! matrix `A` from the Smith normal form of `tI - A`.

use crate::error::{Error, Result};
use crate::field::{FieldSpec, Scalar};
use crate::linalg::{Echelon, MatrixFin};
use crate::poly::{monicize, Polynomial};
use crate::vector::VectorFin;

/// A cyclic summand `F[t]·generator ≅ F[t]/(factor)`.
#[derive(Clone, Debug)]
pub struct CyclicSummand {
    pub generator: VectorFin,
    /// Monic invariant factor; its degree is the summand's dimension.
    pub factor: Polynomial,
}

impl CyclicSummand {
    pub fn dim(&self) -> usize {
        self.factor.degree().unwrap_or(0)
    }
}

type PolyMat = Vec<Vec<Polynomial>>;

fn neg(p: &Polynomial) -> Polynomial {
    p.scale(&-Scalar::one(p.field()))
}

fn sub(a: &Polynomial, b: &Polynomial) -> Polynomial {
    a.add(&neg(b))
}

fn deg(p: &Polynomial) -> usize {
    p.degree().unwrap_or(usize::MAX)
}

struct Smith {
    m: PolyMat,
    /// Inverse of the accumulated row transformation.
    pinv: PolyMat,
    n: usize,
}

impl Smith {
    /// `row_i += c·row_j`, keeping `pinv` the inverse of the row operations.
    fn row_add(&mut self, i: usize, j: usize, c: &Polynomial) {
        for k in 0..self.n {
            let t = self.m[j][k].mul(c);
            self.m[i][k] = self.m[i][k].add(&t);
        }
        for r in 0..self.n {
            let t = self.pinv[r][i].mul(c);
            self.pinv[r][j] = sub(&self.pinv[r][j], &t);
        }
    }

    fn row_swap(&mut self, i: usize, j: usize) {
        self.m.swap(i, j);
        for r in 0..self.n {
            self.pinv[r].swap(i, j);
        }
    }

    fn row_scale(&mut self, i: usize, c: &Scalar) -> Result<()> {
        let inv = c.inv()?;
        for k in 0..self.n {
            self.m[i][k] = self.m[i][k].scale(c);
        }
        for r in 0..self.n {
            self.pinv[r][i] = self.pinv[r][i].scale(&inv);
        }
        Ok(())
    }

    fn col_add(&mut self, i: usize, j: usize, c: &Polynomial) {
        for r in 0..self.n {
            let t = self.m[r][j].mul(c);
            self.m[r][i] = self.m[r][i].add(&t);
        }
    }

    fn col_swap(&mut self, i: usize, j: usize) {
        for r in 0..self.n {
            self.m[r].swap(i, j);
        }
    }

    fn diagonalize(&mut self) -> Result<()> {
        for k in 0..self.n {
            loop {
                // smallest-degree non-zero entry of the trailing block
                let mut best: Option<(usize, usize)> = None;
                for i in k..self.n {
                    for j in k..self.n {
                        if !self.m[i][j].is_zero()
                            && best.map_or(true, |(a, b)| deg(&self.m[i][j]) < deg(&self.m[a][b]))
                        {
                            best = Some((i, j));
                        }
                    }
                }
                let Some((i, j)) = best else { return Ok(()) };
                self.row_swap(k, i);
                self.col_swap(k, j);
                let pivot = self.m[k][k].clone();
                let mut clean = true;
                for i in k + 1..self.n {
                    let (q, r) = self.m[i][k].div_rem(&pivot)?;
                    self.row_add(i, k, &neg(&q));
                    clean &= r.is_zero();
                }
                for j in k + 1..self.n {
                    let (q, r) = self.m[k][j].div_rem(&pivot)?;
                    self.col_add(j, k, &neg(&q));
                    clean &= r.is_zero();
                }
                if !clean {
                    continue;
                }
                // divisibility of the trailing block by the pivot
                let bad = (k + 1..self.n)
                    .flat_map(|i| (k + 1..self.n).map(move |j| (i, j)))
                    .find(|&(i, j)| !self.m[i][j].div_rem(&pivot).map(|(_, r)| r.is_zero()).unwrap_or(true));
                match bad {
                    Some((i, _)) => {
                        let one = Polynomial::one(pivot.field());
                        self.row_add(k, i, &one);
                    }
                    None => break,
                }
            }
            let lead = self.m[k][k].leading().cloned().ok_or(Error::ZeroPolynomial)?;
            self.row_scale(k, &lead.inv()?)?;
        }
        Ok(())
    }
}

/// `p(A)·x`
pub fn apply_poly(a: &MatrixFin, p: &Polynomial, x: &[Scalar]) -> Vec<Scalar> {
    let f = a.field();
    let n = a.nrows();
    let mut acc = vec![Scalar::zero(f); n];
    for c in p.coeffs().iter().rev() {
        let mut next = vec![Scalar::zero(f); n];
        for (i, slot) in next.iter_mut().enumerate() {
            let mut s = &x[i] * c;
            for (j, v) in acc.iter().enumerate() {
                if !v.is_zero() {
                    s = &s + &(a.get(i, j) * v);
                }
            }
            *slot = s;
        }
        acc = next;
    }
    acc
}

fn to_vector(f: FieldSpec, x: &[Scalar]) -> VectorFin {
    VectorFin::from_entries(f, x.iter().cloned().enumerate()).unwrap()
}

/// Decomposes `F^n` into cyclic `A`-submodules, one per non-unit invariant
/// factor, in divisibility order. Generators are in standard coordinates.
pub fn cyclic_decomposition(a: &MatrixFin) -> Result<Vec<CyclicSummand>> {
    let f = a.field();
    let n = a.nrows();
    if !a.is_square() {
        return Err(Error::Input("cyclic decomposition needs a square matrix".into()));
    }
    let t = Polynomial::from_i64(f, &[0, 1]);
    let mut m: PolyMat = vec![vec![Polynomial::zero(f); n]; n];
    let mut pinv: PolyMat = vec![vec![Polynomial::zero(f); n]; n];
    for i in 0..n {
        for j in 0..n {
            let c = Polynomial::new(f, vec![-a.get(i, j)])?;
            m[i][j] = if i == j { t.add(&c) } else { c };
        }
        pinv[i][i] = Polynomial::one(f);
    }
    let mut s = Smith { m, pinv, n };
    s.diagonalize()?;
    let mut out = Vec::new();
    for i in 0..n {
        let factor = monicize(&s.m[i][i])?;
        if factor.degree() == Some(0) {
            continue;
        }
        let mut g = vec![Scalar::zero(f); n];
        for j in 0..n {
            let mut ej = vec![Scalar::zero(f); n];
            ej[j] = Scalar::one(f);
            let v = apply_poly(a, &s.pinv[j][i], &ej);
            for (k, x) in v.into_iter().enumerate() {
                g[k] = &g[k] + &x;
            }
        }
        out.push(CyclicSummand { generator: to_vector(f, &g), factor });
    }
    check_decomposition(a, &out)?;
    Ok(out)
}

/// The Krylov vectors `x, Ax, …, A^{d-1}x` of every summand form a basis.
fn check_decomposition(a: &MatrixFin, parts: &[CyclicSummand]) -> Result<()> {
    let f = a.field();
    let mut ech = Echelon::new(f);
    let mut label = 0;
    for p in parts {
        let mut x: Vec<Scalar> = (0..a.nrows()).map(|i| p.generator.get(i)).collect();
        for _ in 0..p.dim() {
            ech.insert(&to_vector(f, &x), label)
                .map_err(|_| Error::PropertyViolated("cyclic decomposition is not direct".into()))?;
            label += 1;
            x = apply_poly(a, &Polynomial::from_i64(f, &[0, 1]), &x);
        }
        let y: Vec<Scalar> = (0..a.nrows()).map(|i| p.generator.get(i)).collect();
        if apply_poly(a, &p.factor, &y).iter().any(|c| !c.is_zero()) {
            return Err(Error::PropertyViolated("invariant factor does not annihilate its generator".into()));
        }
    }
    if ech.dim() != a.nrows() {
        return Err(Error::PropertyViolated("cyclic summands do not span".into()));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn nilpotent_block_plus_line() {
        let q = FieldSpec::Rationals;
        // e0 -> e1 -> 0, e2 -> 0
        let a = MatrixFin::from_i64(q, &[&[0, 0, 0], &[1, 0, 0], &[0, 0, 0]]);
        let parts = cyclic_decomposition(&a).unwrap();
        let dims: Vec<usize> = parts.iter().map(|p| p.dim()).collect();
        assert_eq!(dims, vec![1, 2]);
        assert_eq!(parts[1].factor, Polynomial::from_i64(q, &[0, 0, 1]));
    }

    #[test]
    fn diagonal_distinct_is_cyclic() {
        let f5 = FieldSpec::Prime(5);
        let a = MatrixFin::from_i64(f5, &[&[1, 0, 0], &[0, 2, 0], &[0, 0, 3]]);
        let parts = cyclic_decomposition(&a).unwrap();
        assert_eq!(parts.len(), 1);
        assert_eq!(parts[0].dim(), 3);
    }

    #[test]
    fn scalar_matrix_splits_into_lines() {
        let q = FieldSpec::Rationals;
        let a = MatrixFin::scalar(&Scalar::from_i64(q, 7), 3);
        let parts = cyclic_decomposition(&a).unwrap();
        assert_eq!(parts.len(), 3);
        assert!(parts.iter().all(|p| p.factor == Polynomial::from_i64(q, &[-7, 1])));
    }

    #[test]
    fn random_matrices_decompose() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
        for p in [2u64, 3, 5] {
            let f = FieldSpec::Prime(p);
            for _ in 0..30 {
                let n = rng.gen_range(1..6);
                let rows: Vec<Vec<Scalar>> =
                    (0..n).map(|_| (0..n).map(|_| Scalar::residue(f, rng.gen_range(0..p))).collect()).collect();
                let a = MatrixFin::from_rows(f, rows).unwrap();
                let parts = cyclic_decomposition(&a).unwrap();
                assert_eq!(parts.iter().map(|p| p.dim()).sum::<usize>(), n);
                for w in parts.windows(2) {
                    assert!(w[1].factor.div_rem(&w[0].factor).unwrap().1.is_zero());
                }
            }
        }
    }
}
