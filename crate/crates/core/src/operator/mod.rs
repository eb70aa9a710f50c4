//! Column-finite endomorphisms of `V = ⊕_{n∈ℕ} F·e_n` given by finite
//! constructor trees and evaluated lazily, one column at a time.

mod classify;

pub use classify::{
    anatomy, analyze, classify_structure, embed_path, locate_path, path_bound, peel_scalar, Analysis,
    Dominance, IndexSet, Leaf, LeafKind, OperatorClassTags, Path, Tri,
};

use std::collections::BTreeMap;
use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};
use crate::family::LazyHandle;
use crate::field::{FieldSpec, Scalar};
use crate::linalg::MatrixFin;
use crate::poly::Polynomial;
use crate::vector::VectorFin;

/// How the two halves of a [`Node::DirectSum`] share the basis.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(tag = "layout", rename_all = "snake_case")]
pub enum Layout {
    /// Left acts on `e_{2k}`, right on `e_{2k+1}`.
    Interleave,
    /// Left acts on `e_0..e_{len-1}` and must keep that span; right acts on
    /// `e_{len+k}`.
    Prefix { len: usize },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Side {
    Left,
    Right,
}

impl Layout {
    /// Ambient index of the local index `j` on `side`.
    pub fn embed(&self, side: Side, j: usize) -> usize {
        match (self, side) {
            (Layout::Interleave, Side::Left) => 2 * j,
            (Layout::Interleave, Side::Right) => 2 * j + 1,
            (Layout::Prefix { .. }, Side::Left) => j,
            (Layout::Prefix { len }, Side::Right) => j + len,
        }
    }

    /// Which side owns ambient index `n`, and its local index there.
    pub fn locate(&self, n: usize) -> (Side, usize) {
        match self {
            Layout::Interleave if n % 2 == 0 => (Side::Left, n / 2),
            Layout::Interleave => (Side::Right, n / 2),
            Layout::Prefix { len } if n < *len => (Side::Left, n),
            Layout::Prefix { len } => (Side::Right, n - len),
        }
    }
}

/// One diagonal band of a [`Node::BandedPeriodic`] operator: column `n`
/// receives `pattern[n % period]` at row `n + offset`. Rows that would be
/// negative are dropped.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Band {
    pub offset: i64,
    pub pattern: Vec<Scalar>,
}

/// A column rule `n ↦ Σ c·e_{n+offset}`.
pub type ColumnRule = Vec<(i64, Scalar)>;

/// Column maps keyed by basis index. JSON object keys are strings, and
/// buffered (tagged) deserialization does not convert them back to integers.
mod column_map {
    use std::collections::BTreeMap;

    use serde::de::Error as _;
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    use crate::vector::VectorFin;

    pub fn serialize<S: Serializer>(m: &BTreeMap<usize, VectorFin>, s: S) -> Result<S::Ok, S::Error> {
        m.serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<BTreeMap<usize, VectorFin>, D::Error> {
        BTreeMap::<String, VectorFin>::deserialize(d)?
            .into_iter()
            .map(|(k, v)| k.parse().map(|k| (k, v)).map_err(|_| D::Error::custom(format!("bad column index `{k}`"))))
            .collect()
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Node {
    Shift,
    DownShift,
    /// `λ·id`
    Scalar {
        value: Scalar,
    },
    DiagonalPeriodic {
        pattern: Vec<Scalar>,
    },
    BandedPeriodic {
        period: usize,
        bands: Vec<Band>,
    },
    /// Companion matrices of the listed monic polynomials placed along the
    /// diagonal, the list repeated forever.
    CompanionBlockSum {
        blocks: Vec<Polynomial>,
    },
    /// Square matrix acting on the first `n` basis vectors; zero elsewhere.
    Matrix {
        matrix: MatrixFin,
    },
    FiniteRankPatch {
        base: Operator,
        #[serde(with = "column_map")]
        columns: BTreeMap<usize, VectorFin>,
    },
    DirectSum {
        left: Operator,
        right: Operator,
        #[serde(flatten)]
        layout: Layout,
    },
    Sum {
        left: Operator,
        right: Operator,
    },
    Difference {
        left: Operator,
        right: Operator,
    },
    Scale {
        factor: Scalar,
        inner: Operator,
    },
    /// `outer ∘ inner`
    Compose {
        outer: Operator,
        inner: Operator,
    },
    /// Explicit exceptional columns, zero columns below `tail_start`, then
    /// the periodic rules `tail[(n - tail_start) % tail.len()]`.
    RuleTable {
        #[serde(with = "column_map")]
        exceptions: BTreeMap<usize, VectorFin>,
        tail_start: usize,
        tail: Vec<ColumnRule>,
    },
    /// An operator defined on a computed basis (connectors, sewing maps,
    /// chain splits); see [`crate::family`].
    Lazy {
        #[serde(flatten)]
        handle: LazyHandle,
    },
}

struct Inner {
    field: FieldSpec,
    node: Node,
}

/// Shared handle to an immutable operator tree.
#[derive(Clone)]
pub struct Operator(Arc<Inner>);

/// Outcome of a prefix check.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Report {
    pub passed: bool,
    pub checked: usize,
    pub first_failure: Option<usize>,
    pub detail: Option<String>,
}

impl Report {
    pub fn pass(checked: usize) -> Self {
        Report { passed: true, checked, first_failure: None, detail: None }
    }

    pub fn fail(checked: usize, column: usize, detail: impl Into<String>) -> Self {
        Report { passed: false, checked, first_failure: Some(column), detail: Some(detail.into()) }
    }
}

impl fmt::Display for Report {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match (&self.first_failure, &self.detail) {
            (None, _) => write!(f, "pass ({} columns)", self.checked),
            (Some(c), Some(d)) => write!(f, "fail at column {c}: {d}"),
            (Some(c), None) => write!(f, "fail at column {c}"),
        }
    }
}

fn check_all(field: FieldSpec, xs: &[&Scalar]) -> Result<()> {
    xs.iter().try_for_each(|x| field.check(x.field()))
}

impl Operator {
    /// Wraps a node after checking that every child and coefficient lives
    /// over `field`.
    pub fn new(field: FieldSpec, node: Node) -> Result<Self> {
        match &node {
            Node::Shift | Node::DownShift => {}
            Node::Scalar { value } => field.check(value.field())?,
            Node::DiagonalPeriodic { pattern } => {
                if pattern.is_empty() {
                    return Err(Error::Input("empty diagonal pattern".into()));
                }
                check_all(field, &pattern.iter().collect::<Vec<_>>())?;
            }
            Node::BandedPeriodic { period, bands } => {
                if *period == 0 {
                    return Err(Error::Input("band period must be positive".into()));
                }
                for b in bands {
                    if b.pattern.len() != *period {
                        return Err(Error::Input("band pattern length differs from the period".into()));
                    }
                    check_all(field, &b.pattern.iter().collect::<Vec<_>>())?;
                }
            }
            Node::CompanionBlockSum { blocks } => {
                if blocks.is_empty() {
                    return Err(Error::Input("companion block list is empty".into()));
                }
                for p in blocks {
                    field.check(p.field())?;
                    match (p.degree(), p.leading()) {
                        (Some(d), Some(l)) if d >= 1 && l.is_one() => {}
                        _ => return Err(Error::Input(format!("companion block {p} is not monic of degree ≥ 1"))),
                    }
                }
            }
            Node::Matrix { matrix } => {
                field.check(matrix.field())?;
                if !matrix.is_square() {
                    return Err(Error::Input("matrix node must be square".into()));
                }
            }
            Node::FiniteRankPatch { base, columns } => {
                field.check(base.field())?;
                for v in columns.values() {
                    field.check(v.field())?;
                }
            }
            Node::DirectSum { left, right, .. }
            | Node::Sum { left, right }
            | Node::Difference { left, right } => {
                field.check(left.field())?;
                field.check(right.field())?;
            }
            Node::Scale { factor, inner } => {
                field.check(factor.field())?;
                field.check(inner.field())?;
            }
            Node::Compose { outer, inner } => {
                field.check(outer.field())?;
                field.check(inner.field())?;
            }
            Node::RuleTable { exceptions, tail, .. } => {
                for v in exceptions.values() {
                    field.check(v.field())?;
                }
                for r in tail {
                    check_all(field, &r.iter().map(|(_, c)| c).collect::<Vec<_>>())?;
                }
            }
            Node::Lazy { handle } => field.check(handle.field())?,
        }
        Ok(Operator(Arc::new(Inner { field, node })))
    }

    pub fn field(&self) -> FieldSpec {
        self.0.field
    }

    pub fn node(&self) -> &Node {
        &self.0.node
    }

    pub fn ptr_eq(&self, o: &Operator) -> bool {
        Arc::ptr_eq(&self.0, &o.0)
    }

    pub fn shift(field: FieldSpec) -> Self {
        Operator::new(field, Node::Shift).unwrap()
    }

    pub fn downshift(field: FieldSpec) -> Self {
        Operator::new(field, Node::DownShift).unwrap()
    }

    pub fn scalar(value: &Scalar) -> Self {
        Operator::new(value.field(), Node::Scalar { value: value.clone() }).unwrap()
    }

    pub fn identity(field: FieldSpec) -> Self {
        Operator::scalar(&Scalar::one(field))
    }

    pub fn zero(field: FieldSpec) -> Self {
        Operator::scalar(&Scalar::zero(field))
    }

    pub fn diagonal_periodic(field: FieldSpec, pattern: Vec<Scalar>) -> Result<Self> {
        Operator::new(field, Node::DiagonalPeriodic { pattern })
    }

    pub fn banded_periodic(field: FieldSpec, period: usize, bands: Vec<Band>) -> Result<Self> {
        Operator::new(field, Node::BandedPeriodic { period, bands })
    }

    pub fn companion_blocks(field: FieldSpec, blocks: Vec<Polynomial>) -> Result<Self> {
        Operator::new(field, Node::CompanionBlockSum { blocks })
    }

    pub fn matrix(matrix: MatrixFin) -> Result<Self> {
        Operator::new(matrix.field(), Node::Matrix { matrix })
    }

    pub fn patch(base: &Operator, columns: BTreeMap<usize, VectorFin>) -> Result<Self> {
        Operator::new(base.field(), Node::FiniteRankPatch { base: base.clone(), columns })
    }

    pub fn direct_sum(left: &Operator, right: &Operator, layout: Layout) -> Result<Self> {
        Operator::new(
            left.field(),
            Node::DirectSum { left: left.clone(), right: right.clone(), layout },
        )
    }

    pub fn rule_table(
        field: FieldSpec,
        exceptions: BTreeMap<usize, VectorFin>,
        tail_start: usize,
        tail: Vec<ColumnRule>,
    ) -> Result<Self> {
        Operator::new(field, Node::RuleTable { exceptions, tail_start, tail })
    }

    pub fn lazy(handle: LazyHandle) -> Self {
        Operator::new(handle.field(), Node::Lazy { handle }).unwrap()
    }

    /// The image `u(e_n)`.
    pub fn col(&self, n: usize) -> Result<VectorFin> {
        let f = self.field();
        Ok(match self.node() {
            Node::Shift => VectorFin::unit(f, n + 1),
            Node::DownShift if n == 0 => VectorFin::zero(f),
            Node::DownShift => VectorFin::unit(f, n - 1),
            Node::Scalar { value } => VectorFin::unit(f, n).scaled(value),
            Node::DiagonalPeriodic { pattern } => VectorFin::unit(f, n).scaled(&pattern[n % pattern.len()]),
            Node::BandedPeriodic { period, bands } => {
                let mut v = VectorFin::zero(f);
                for b in bands {
                    let row = n as i64 + b.offset;
                    if row >= 0 {
                        v.add_at(row as usize, &b.pattern[n % period]);
                    }
                }
                v
            }
            Node::CompanionBlockSum { blocks } => companion_column(f, blocks, n),
            Node::Matrix { matrix } => {
                if n >= matrix.ncols() {
                    VectorFin::zero(f)
                } else {
                    VectorFin::from_entries(f, matrix.column(n).into_iter().enumerate())?
                }
            }
            Node::FiniteRankPatch { base, columns } => match columns.get(&n) {
                Some(v) => v.clone(),
                None => base.col(n)?,
            },
            Node::DirectSum { left, right, layout } => {
                let (side, j) = layout.locate(n);
                let local = match side {
                    Side::Left => left.col(j)?,
                    Side::Right => right.col(j)?,
                };
                if let (Layout::Prefix { len }, Side::Left) = (layout, side) {
                    if local.max_index().is_some_and(|m| m >= *len) {
                        return Err(Error::Input(format!(
                            "left summand of a prefix direct sum leaves e_0..e_{} at column {n}",
                            len - 1
                        )));
                    }
                }
                local.remap(|k| layout.embed(side, k))
            }
            Node::Sum { left, right } => left.col(n)?.add(&right.col(n)?),
            Node::Difference { left, right } => left.col(n)?.sub(&right.col(n)?),
            Node::Scale { factor, inner } => inner.col(n)?.scaled(factor),
            Node::Compose { outer, inner } => outer.apply(&inner.col(n)?)?,
            Node::RuleTable { exceptions, tail_start, tail } => {
                if let Some(v) = exceptions.get(&n) {
                    v.clone()
                } else if n < *tail_start || tail.is_empty() {
                    VectorFin::zero(f)
                } else {
                    let mut v = VectorFin::zero(f);
                    for (off, c) in &tail[(n - tail_start) % tail.len()] {
                        let row = n as i64 + off;
                        if row >= 0 {
                            v.add_at(row as usize, c);
                        }
                    }
                    v
                }
            }
            Node::Lazy { handle } => handle.column(n)?,
        })
    }

    /// Exact image of a finitely supported vector.
    pub fn apply(&self, x: &VectorFin) -> Result<VectorFin> {
        self.field().check(x.field())?;
        let mut out = VectorFin::zero(self.field());
        for (n, c) in x.iter() {
            out.axpy(c, &self.col(n)?);
        }
        Ok(out)
    }

    /// `u^k(x)`
    pub fn apply_pow(&self, x: &VectorFin, k: usize) -> Result<VectorFin> {
        let mut y = x.clone();
        for _ in 0..k {
            y = self.apply(&y)?;
        }
        Ok(y)
    }

    /// `u + c·id`, or `u` itself when `c = 0`.
    pub fn plus_scalar(&self, c: &Scalar) -> Result<Operator> {
        if c.is_zero() {
            return Ok(self.clone());
        }
        op_add(self, &Operator::scalar(c))
    }

    /// Compression onto `e_0..e_{n-1}`: the `n×n` block of the matrix.
    pub fn leading_block(&self, n: usize) -> Result<MatrixFin> {
        let f = self.field();
        let mut m = MatrixFin::zero(f, n, n);
        for j in 0..n {
            for (i, c) in self.col(j)?.iter() {
                if i < n {
                    m.set(i, j, c.clone());
                }
            }
        }
        Ok(m)
    }
}

fn companion_column(f: FieldSpec, blocks: &[Polynomial], n: usize) -> VectorFin {
    let cycle: usize = blocks.iter().map(|p| p.degree().unwrap()).sum();
    let mut start = n - n % cycle;
    let mut r = n % cycle;
    for p in blocks {
        let d = p.degree().unwrap();
        if r < d {
            if r + 1 < d {
                return VectorFin::unit(f, n + 1);
            }
            let mut v = VectorFin::zero(f);
            for i in 0..d {
                v.add_at(start + i, &-p.coeff(i));
            }
            return v;
        }
        r -= d;
        start += d;
    }
    unreachable!("offset falls inside one cycle")
}

pub fn op_add(a: &Operator, b: &Operator) -> Result<Operator> {
    Operator::new(a.field(), Node::Sum { left: a.clone(), right: b.clone() })
}

pub fn op_sub(a: &Operator, b: &Operator) -> Result<Operator> {
    Operator::new(a.field(), Node::Difference { left: a.clone(), right: b.clone() })
}

pub fn op_scale(c: &Scalar, a: &Operator) -> Result<Operator> {
    Operator::new(a.field(), Node::Scale { factor: c.clone(), inner: a.clone() })
}

/// `a ∘ b`
pub fn op_compose(a: &Operator, b: &Operator) -> Result<Operator> {
    Operator::new(a.field(), Node::Compose { outer: a.clone(), inner: b.clone() })
}

/// `p(u)(x)` by Horner's rule.
pub fn eval_poly(p: &Polynomial, u: &Operator, x: &VectorFin) -> Result<VectorFin> {
    u.field().check(p.field())?;
    u.field().check(x.field())?;
    let mut acc = VectorFin::zero(u.field());
    for c in p.coeffs().iter().rev() {
        acc = u.apply(&acc)?;
        acc.axpy(c, x);
    }
    Ok(acc)
}

/// Checks `p(u)(e_n) = 0` for every `n < prefix`.
pub fn verify_annihilated(u: &Operator, p: &Polynomial, prefix: usize) -> Report {
    for n in 0..prefix {
        match eval_poly(p, u, &VectorFin::unit(u.field(), n)) {
            Ok(v) if v.is_zero() => {}
            Ok(v) => return Report::fail(n, n, format!("p(u)(e_{n}) = {v}")),
            Err(e) => return Report::fail(n, n, e.to_string()),
        }
    }
    Report::pass(prefix)
}

impl fmt::Debug for Operator {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self)
    }
}

impl fmt::Display for Operator {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.node() {
            Node::Shift => write!(f, "S"),
            Node::DownShift => write!(f, "D"),
            Node::Scalar { value } => write!(f, "{value}·id"),
            Node::DiagonalPeriodic { pattern } => {
                let p: Vec<String> = pattern.iter().map(|x| x.to_string()).collect();
                write!(f, "diag({})", p.join(","))
            }
            Node::BandedPeriodic { period, bands } => write!(f, "banded(period {period}, {} bands)", bands.len()),
            Node::CompanionBlockSum { blocks } => {
                let p: Vec<String> = blocks.iter().map(|x| x.to_string()).collect();
                write!(f, "companion({})", p.join("; "))
            }
            Node::Matrix { matrix } => write!(f, "matrix{matrix}"),
            Node::FiniteRankPatch { base, columns } => write!(f, "patch({base}, {} columns)", columns.len()),
            Node::DirectSum { left, right, layout } => match layout {
                Layout::Interleave => write!(f, "({left} ⊕ {right})"),
                Layout::Prefix { len } => write!(f, "({left} ⊕[{len}] {right})"),
            },
            Node::Sum { left, right } => write!(f, "({left} + {right})"),
            Node::Difference { left, right } => write!(f, "({left} - {right})"),
            Node::Scale { factor, inner } => write!(f, "{factor}·{inner}"),
            Node::Compose { outer, inner } => write!(f, "({outer} ∘ {inner})"),
            Node::RuleTable { exceptions, tail_start, tail } => {
                write!(f, "rules({} exceptions, tail from {tail_start}, period {})", exceptions.len(), tail.len())
            }
            Node::Lazy { handle } => write!(f, "{}", handle.label()),
        }
    }
}

impl Serialize for Operator {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        self.node().serialize(s)
    }
}

impl<'de> Deserialize<'de> for Operator {
    /// Operators carry no field of their own in files; see
    /// [`crate::field::with_field`].
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        use serde::de::Error as _;
        let node = Node::deserialize(d)?;
        let field = crate::field::context_field()
            .ok_or_else(|| D::Error::custom("operator parsed outside a field context"))?;
        Operator::new(field, node).map_err(D::Error::custom)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn q() -> FieldSpec {
        FieldSpec::Rationals
    }

    fn e(n: usize) -> VectorFin {
        VectorFin::unit(q(), n)
    }

    /// `A e_{2k} = e_{2k+1}`, `A e_{2k+1} = 0`
    fn staggered(f: FieldSpec) -> Operator {
        let one = Scalar::one(f);
        let zero = Scalar::zero(f);
        Operator::banded_periodic(f, 2, vec![Band { offset: 1, pattern: vec![one, zero] }]).unwrap()
    }

    #[test]
    fn apply_examples() {
        assert_eq!(Operator::shift(q()).apply(&e(0)).unwrap(), e(1));
        assert!(Operator::downshift(q()).apply(&e(0)).unwrap().is_zero());
        let mut cols = BTreeMap::new();
        cols.insert(0, e(0).add(&e(2)));
        let p = Operator::patch(&Operator::shift(q()), cols).unwrap();
        assert_eq!(p.apply(&e(0)).unwrap(), e(0).add(&e(2)));
        assert_eq!(p.apply(&e(4)).unwrap(), e(5));
    }

    #[test]
    fn combinator_examples() {
        let s = Operator::shift(q());
        assert!(op_sub(&s, &s).unwrap().apply(&e(5)).unwrap().is_zero());
        assert_eq!(op_compose(&s, &s).unwrap().apply(&e(0)).unwrap(), e(2));
        let two = Scalar::from_i64(q(), 2);
        let d = op_scale(&two, &Operator::downshift(q())).unwrap();
        assert_eq!(d.apply(&e(1)).unwrap(), e(0).scaled(&two));
    }

    #[test]
    fn eval_poly_examples() {
        let t2 = Polynomial::from_i64(q(), &[0, 0, 1]);
        let a = staggered(q());
        for n in 0..10 {
            assert!(eval_poly(&t2, &a, &e(n)).unwrap().is_zero());
        }
        let idem = Polynomial::from_i64(q(), &[0, -1, 1]);
        assert!(eval_poly(&idem, &Operator::identity(q()), &e(3)).unwrap().is_zero());
        assert_eq!(eval_poly(&t2, &Operator::shift(q()), &e(0)).unwrap(), e(2));
    }

    #[test]
    fn verify_annihilated_examples() {
        let t2 = Polynomial::from_i64(q(), &[0, 0, 1]);
        assert!(verify_annihilated(&staggered(q()), &t2, 512).passed);
        let r = verify_annihilated(&Operator::shift(q()), &t2, 4);
        assert_eq!(r.first_failure, Some(0));
        let idem = Polynomial::from_i64(q(), &[0, -1, 1]);
        assert!(verify_annihilated(&Operator::identity(q()), &idem, 100).passed);
    }

    #[test]
    fn companion_and_direct_sum_columns() {
        // blocks t^2 and t - 3, repeated
        let blocks = vec![Polynomial::from_i64(q(), &[0, 0, 1]), Polynomial::from_i64(q(), &[-3, 1])];
        let c = Operator::companion_blocks(q(), blocks).unwrap();
        assert_eq!(c.col(0).unwrap(), e(1));
        assert!(c.col(1).unwrap().is_zero());
        assert_eq!(c.col(2).unwrap(), e(2).scaled(&Scalar::from_i64(q(), 3)));
        assert_eq!(c.col(3).unwrap(), e(4));
        let zero_line = Operator::matrix(MatrixFin::zero(q(), 1, 1)).unwrap();
        let ds = Operator::direct_sum(&zero_line, &Operator::shift(q()), Layout::Prefix { len: 1 }).unwrap();
        assert!(ds.col(0).unwrap().is_zero());
        assert_eq!(ds.col(1).unwrap(), e(2));
        let il = Operator::direct_sum(&Operator::shift(q()), &Operator::downshift(q()), Layout::Interleave).unwrap();
        assert_eq!(il.col(2).unwrap(), e(4));
        assert_eq!(il.col(3).unwrap(), e(1));
        assert!(il.col(1).unwrap().is_zero());
    }
}
