//! Exact elimination on sparse vectors and small dense matrices.

use std::collections::BTreeMap;
use std::fmt;

use crate::error::{Error, Result};
use crate::field::{FieldSpec, Scalar};
use crate::poly::Polynomial;
use crate::vector::VectorFin;

#[derive(Clone, Debug)]
struct Row {
    vec: VectorFin,
    combo: VectorFin,
}

/// Incremental echelon basis of a finite-dimensional subspace.
///
/// Rows are keyed by their largest index (the pivot) with pivot
/// coefficient 1, so the largest index of any non-zero combination of rows
/// is a pivot. Each row remembers which inserted vectors (by label) it is a
/// combination of, which lets [`Echelon::express`] write members of the span
/// in terms of the inserted family.
#[derive(Clone, Debug)]
pub struct Echelon {
    field: FieldSpec,
    rows: BTreeMap<usize, Row>,
    log: Vec<usize>,
}

/// Outcome of reducing a vector against an [`Echelon`].
#[derive(Clone, Debug)]
pub struct Reduction {
    /// `v - Σ combo_l b_l`
    pub remainder: VectorFin,
    pub combo: VectorFin,
}

impl Echelon {
    pub fn new(field: FieldSpec) -> Self {
        Echelon { field, rows: BTreeMap::new(), log: Vec::new() }
    }

    pub fn field(&self) -> FieldSpec {
        self.field
    }

    pub fn dim(&self) -> usize {
        self.rows.len()
    }

    pub fn pivots(&self) -> impl Iterator<Item = usize> + '_ {
        self.rows.keys().copied()
    }

    pub fn has_pivot(&self, i: usize) -> bool {
        self.rows.contains_key(&i)
    }

    /// Reduces until the leading index is not a pivot (or the vector
    /// vanishes). The remainder is zero iff `v` lies in the span.
    pub fn reduce(&self, v: &VectorFin) -> Reduction {
        let mut rem = v.clone();
        let mut combo = VectorFin::zero(self.field);
        while let Some(m) = rem.max_index() {
            let Some(row) = self.rows.get(&m) else { break };
            let c = rem.get(m);
            rem.axpy(&-&c, &row.vec);
            combo.axpy(&c, &row.combo);
        }
        Reduction { remainder: rem, combo }
    }

    pub fn contains(&self, v: &VectorFin) -> bool {
        self.reduce(v).remainder.is_zero()
    }

    /// Coefficients of `v` over the inserted labels, if `v` is in the span.
    pub fn express(&self, v: &VectorFin) -> Option<VectorFin> {
        let r = self.reduce(v);
        r.remainder.is_zero().then_some(r.combo)
    }

    /// Inserts `v` under `label`. Returns `Ok(pivot)` when independent and
    /// `Err(combo)` with `v = Σ combo_l b_l` when dependent.
    pub fn insert(&mut self, v: &VectorFin, label: usize) -> std::result::Result<usize, VectorFin> {
        let r = self.reduce(v);
        let Some(m) = r.remainder.max_index() else {
            return Err(r.combo);
        };
        let inv = r.remainder.get(m).inv().expect("pivot is non-zero");
        let mut combo = r.combo.scaled(&-Scalar::one(self.field));
        combo.add_at(label, &Scalar::one(self.field));
        let row = Row { vec: r.remainder.scaled(&inv), combo: combo.scaled(&inv) };
        self.rows.insert(m, row);
        self.log.push(m);
        Ok(m)
    }

    /// Number of insertions so far; pass to [`Echelon::rollback`].
    pub fn checkpoint(&self) -> usize {
        self.log.len()
    }

    pub fn rollback(&mut self, mark: usize) {
        while self.log.len() > mark {
            let p = self.log.pop().unwrap();
            self.rows.remove(&p);
        }
    }
}

/// Dense matrix with exact entries; `m[i][j]` is row `i`, column `j`.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct MatrixFin {
    field: FieldSpec,
    rows: usize,
    cols: usize,
    data: Vec<Scalar>,
}

impl MatrixFin {
    pub fn zero(field: FieldSpec, rows: usize, cols: usize) -> Self {
        MatrixFin { field, rows, cols, data: vec![Scalar::zero(field); rows * cols] }
    }

    pub fn identity(field: FieldSpec, n: usize) -> Self {
        let mut m = MatrixFin::zero(field, n, n);
        for i in 0..n {
            m.set(i, i, Scalar::one(field));
        }
        m
    }

    pub fn scalar(c: &Scalar, n: usize) -> Self {
        MatrixFin::identity(c.field(), n).scale(c)
    }

    pub fn from_rows(field: FieldSpec, rows: Vec<Vec<Scalar>>) -> Result<Self> {
        let r = rows.len();
        let c = rows.first().map_or(0, |x| x.len());
        let mut data = Vec::with_capacity(r * c);
        for row in rows {
            if row.len() != c {
                return Err(Error::Input("ragged matrix".into()));
            }
            for x in row {
                field.check(x.field())?;
                data.push(x);
            }
        }
        Ok(MatrixFin { field, rows: r, cols: c, data })
    }

    pub fn from_i64(field: FieldSpec, rows: &[&[i64]]) -> Self {
        MatrixFin::from_rows(
            field,
            rows.iter().map(|r| r.iter().map(|&x| Scalar::from_i64(field, x)).collect()).collect(),
        )
        .unwrap()
    }

    pub fn field(&self) -> FieldSpec {
        self.field
    }

    pub fn nrows(&self) -> usize {
        self.rows
    }

    pub fn ncols(&self) -> usize {
        self.cols
    }

    pub fn is_square(&self) -> bool {
        self.rows == self.cols
    }

    pub fn get(&self, i: usize, j: usize) -> &Scalar {
        &self.data[i * self.cols + j]
    }

    pub fn set(&mut self, i: usize, j: usize, v: Scalar) {
        self.data[i * self.cols + j] = v;
    }

    pub fn row(&self, i: usize) -> &[Scalar] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn column(&self, j: usize) -> Vec<Scalar> {
        (0..self.rows).map(|i| self.get(i, j).clone()).collect()
    }

    pub fn add(&self, o: &MatrixFin) -> MatrixFin {
        assert_eq!((self.rows, self.cols), (o.rows, o.cols));
        let data = self.data.iter().zip(&o.data).map(|(a, b)| a + b).collect();
        MatrixFin { data, ..self.clone() }
    }

    pub fn sub(&self, o: &MatrixFin) -> MatrixFin {
        assert_eq!((self.rows, self.cols), (o.rows, o.cols));
        let data = self.data.iter().zip(&o.data).map(|(a, b)| a - b).collect();
        MatrixFin { data, ..self.clone() }
    }

    pub fn scale(&self, c: &Scalar) -> MatrixFin {
        MatrixFin { data: self.data.iter().map(|a| a * c).collect(), ..self.clone() }
    }

    pub fn mul(&self, o: &MatrixFin) -> MatrixFin {
        assert_eq!(self.cols, o.rows);
        let mut out = MatrixFin::zero(self.field, self.rows, o.cols);
        for i in 0..self.rows {
            for k in 0..self.cols {
                let a = self.get(i, k);
                if a.is_zero() {
                    continue;
                }
                for j in 0..o.cols {
                    let v = &out.data[i * o.cols + j] + &(a * o.get(k, j));
                    out.data[i * o.cols + j] = v;
                }
            }
        }
        out
    }

    pub fn trace(&self) -> Scalar {
        (0..self.rows.min(self.cols)).fold(Scalar::zero(self.field), |acc, i| &acc + self.get(i, i))
    }

    pub fn is_zero(&self) -> bool {
        self.data.iter().all(|x| x.is_zero())
    }

    /// `p(M)` by Horner's rule.
    pub fn eval_poly(&self, p: &Polynomial) -> MatrixFin {
        let n = self.rows;
        let mut acc = MatrixFin::zero(self.field, n, n);
        for c in p.coeffs().iter().rev() {
            acc = acc.mul(self).add(&MatrixFin::scalar(c, n));
        }
        acc
    }

    /// Block diagonal `self ⊕ o`.
    pub fn direct_sum(&self, o: &MatrixFin) -> MatrixFin {
        let mut m = MatrixFin::zero(self.field, self.rows + o.rows, self.cols + o.cols);
        for i in 0..self.rows {
            for j in 0..self.cols {
                m.set(i, j, self.get(i, j).clone());
            }
        }
        for i in 0..o.rows {
            for j in 0..o.cols {
                m.set(self.rows + i, self.cols + j, o.get(i, j).clone());
            }
        }
        m
    }

    pub fn rank(&self) -> usize {
        let mut ech = Echelon::new(self.field);
        for j in 0..self.cols {
            let v = VectorFin::from_entries(self.field, self.column(j).into_iter().enumerate()).unwrap();
            let _ = ech.insert(&v, j);
        }
        ech.dim()
    }
}

impl fmt::Display for MatrixFin {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let rows: Vec<String> = (0..self.rows)
            .map(|i| {
                let r: Vec<String> = self.row(i).iter().map(|x| x.to_string()).collect();
                format!("[{}]", r.join(", "))
            })
            .collect();
        write!(f, "[{}]", rows.join(", "))
    }
}

impl serde::Serialize for MatrixFin {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        let rows: Vec<&[Scalar]> = (0..self.rows).map(|i| self.row(i)).collect();
        rows.serialize(s)
    }
}

impl<'de> serde::Deserialize<'de> for MatrixFin {
    /// A list of rows. An empty list is the 0×0 matrix.
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        use serde::de::Error as _;
        let rows: Vec<Vec<Scalar>> = Vec::deserialize(d)?;
        let field = crate::field::context_field()
            .ok_or_else(|| D::Error::custom("matrix parsed outside a field context"))?;
        MatrixFin::from_rows(field, rows).map_err(D::Error::custom)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn echelon_membership_and_expression() {
        let q = FieldSpec::Rationals;
        let mut e = Echelon::new(q);
        let b0 = VectorFin::from_i64(q, &[(0, 1), (2, 1)]);
        let b1 = VectorFin::from_i64(q, &[(1, 2)]);
        assert!(e.insert(&b0, 0).is_ok());
        assert!(e.insert(&b1, 1).is_ok());
        let v = VectorFin::from_i64(q, &[(0, 3), (1, 4), (2, 3)]);
        let c = e.express(&v).unwrap();
        assert_eq!(c.get(0).to_string(), "3");
        assert_eq!(c.get(1).to_string(), "2");
        assert!(!e.contains(&VectorFin::unit(q, 0)));
        let dep = e.insert(&v, 2).unwrap_err();
        assert_eq!(dep, c);
        let mark = e.checkpoint();
        e.insert(&VectorFin::unit(q, 5), 3).unwrap();
        e.rollback(mark);
        assert!(!e.contains(&VectorFin::unit(q, 5)));
    }

    #[test]
    fn matrix_basics() {
        let f2 = FieldSpec::Prime(2);
        let n = MatrixFin::from_i64(f2, &[&[0, 1], &[0, 0]]);
        assert!(n.mul(&n).is_zero());
        assert_eq!(n.rank(), 1);
        let p = Polynomial::from_i64(f2, &[0, 0, 1]);
        assert!(n.eval_poly(&p).is_zero());
        assert_eq!(MatrixFin::identity(f2, 3).trace().to_string(), "1");
    }
}
