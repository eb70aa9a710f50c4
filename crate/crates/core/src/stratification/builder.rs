use std::sync::Mutex;

use serde::{Deserialize, Serialize};

use super::{lock, Dim, StratIndex, Stratum};
use crate::error::{Error, Result};
use crate::field::Scalar;
use crate::fmodule::cyclic_decomposition;
use crate::linalg::{Echelon, MatrixFin};
use crate::operator::{embed_path, IndexSet, Leaf, LeafKind, Operator, Path};
use crate::poly::Polynomial;
use crate::vector::VectorFin;

/// Labels at or above this value mark temporary Krylov vectors.
const TEMP: usize = 1 << 40;

/// Greedy stratification of a torsion operator without dominant eigenvalue,
/// indexed by `ℕ`.
///
/// Step `n` takes the first domain vector `x₀ = e_n` outside the span `V`
/// of the strata so far. If `x₀` is not an eigenvector modulo `V`, its
/// cyclic module becomes the next stratum. Otherwise, with eigenvalue `μ`
/// and `N = u - μ`, later basis vectors are scanned for one whose cyclic
/// module modulo `V` has dimension at least two and contains `x₀` (that
/// module becomes the stratum), or whose minimal polynomial modulo `V` is
/// `(t-μ)^J q` with `q ≠ 1` (stratum `x₀ + N^J e_m`) or with `J ≥ 3`
/// (strata from `y = N^{J-3} e_m`).
pub(crate) struct TorsionBuilder {
    op: Operator,
    domain: IndexSet,
    budget: usize,
    span: Echelon,
    labels: usize,
    strata: Vec<(VectorFin, usize)>,
    next: usize,
    done: bool,
}

impl TorsionBuilder {
    pub(crate) fn new(op: Operator, domain: IndexSet, budget: usize) -> Self {
        let span = Echelon::new(op.field());
        TorsionBuilder { op, domain, budget, span, labels: 0, strata: Vec::new(), next: 0, done: false }
    }

    pub(crate) fn finite_count(&mut self) -> Option<usize> {
        if !self.domain.is_finite() {
            return None;
        }
        while !self.done {
            if self.step().is_err() {
                return None;
            }
        }
        Some(self.strata.len())
    }

    pub(crate) fn stratum(&mut self, i: usize) -> Result<Option<Stratum>> {
        while self.strata.len() <= i && !self.done {
            self.step()?;
        }
        Ok(self.strata.get(i).map(|(g, d)| Stratum {
            index: StratIndex::N(i),
            generator: g.clone(),
            dim: Dim::Finite(*d),
        }))
    }

    /// Dimension of the cyclic module of `x` modulo the current span, with
    /// the minimal polynomial of `x` modulo that span.
    fn krylov_mod(&mut self, x: &VectorFin) -> Result<(usize, Polynomial)> {
        let f = self.op.field();
        let mark = self.span.checkpoint();
        let mut cur = x.clone();
        let mut d = 0;
        let out = loop {
            match self.span.insert(&cur, TEMP + d) {
                Ok(_) => {
                    d += 1;
                    if d > self.budget {
                        break Err(Error::CapExceeded(format!("cyclic module longer than {}", self.budget)));
                    }
                    match self.op.apply(&cur) {
                        Ok(next) => cur = next,
                        Err(e) => break Err(e),
                    }
                }
                Err(combo) => {
                    let mut c: Vec<Scalar> = (0..d).map(|j| -combo.get(TEMP + j)).collect();
                    c.push(Scalar::one(f));
                    break Polynomial::new(f, c).map(|p| (d, p));
                }
            }
        };
        self.span.rollback(mark);
        out
    }

    /// Whether `x0` lies in the current span plus the first `d` Krylov
    /// vectors of `x`.
    fn cyclic_contains(&mut self, x: &VectorFin, d: usize, x0: &VectorFin) -> Result<bool> {
        let mark = self.span.checkpoint();
        let mut cur = x.clone();
        let mut out = Ok(());
        for i in 0..d {
            let _ = self.span.insert(&cur, TEMP + i);
            match self.op.apply(&cur) {
                Ok(next) => cur = next,
                Err(e) => {
                    out = Err(e);
                    break;
                }
            }
        }
        let inside = self.span.contains(x0);
        self.span.rollback(mark);
        out.map(|_| inside)
    }

    fn add_stratum(&mut self, x: VectorFin) -> Result<()> {
        let (d, _) = self.krylov_mod(&x)?;
        if d < 2 {
            return Err(Error::PropertyViolated(format!("torsion builder produced a stratum of dimension {d}")));
        }
        let mut cur = x.clone();
        for _ in 0..d {
            self.span.insert(&cur, self.labels).map_err(|_| Error::PropertyViolated("stratum not independent".into()))?;
            self.labels += 1;
            cur = self.op.apply(&cur)?;
        }
        self.strata.push((x, d));
        Ok(())
    }

    fn n_pow(&self, mu: &Scalar, x: &VectorFin, k: usize) -> Result<VectorFin> {
        let mut y = x.clone();
        for _ in 0..k {
            y = self.op.apply(&y)?.sub(&y.scaled(mu));
        }
        Ok(y)
    }

    fn step(&mut self) -> Result<()> {
        let f = self.op.field();
        let n = loop {
            let Some(n) = self.domain.next_member(self.next) else {
                self.done = true;
                return Ok(());
            };
            self.next = n + 1;
            if !self.span.contains(&VectorFin::unit(f, n)) {
                break n;
            }
        };
        let x0 = VectorFin::unit(f, n);
        let (d, p) = self.krylov_mod(&x0)?;
        if d >= 2 {
            return self.add_stratum(x0);
        }
        let mu = -p.coeff(0);
        let mut from = n + 1;
        for _ in 0..self.budget {
            let Some(m) = self.domain.next_member(from) else { break };
            from = m + 1;
            let em = VectorFin::unit(f, m);
            if self.span.contains(&em) {
                continue;
            }
            let (dm, mut q) = self.krylov_mod(&em)?;
            if dm >= 2 && self.cyclic_contains(&em, dm, &x0)? {
                return self.add_stratum(em);
            }
            let root = Polynomial::linear(&mu);
            let mut j = 0;
            while q.degree().unwrap_or(0) > 0 && q.eval(&mu).is_zero() {
                q = q.div_rem(&root)?.0;
                j += 1;
            }
            if q.degree().unwrap_or(0) > 0 {
                let y = self.n_pow(&mu, &em, j)?;
                return self.add_stratum(x0.add(&y));
            }
            if j >= 3 {
                let y = self.n_pow(&mu, &em, j - 3)?;
                let ny = self.n_pow(&mu, &y, 1)?;
                let nny = self.n_pow(&mu, &ny, 1)?;
                let mark = self.span.checkpoint();
                for (i, v) in [&y, &ny, &nny].into_iter().enumerate() {
                    let _ = self.span.insert(v, TEMP + i);
                }
                let inside = self.span.contains(&x0);
                self.span.rollback(mark);
                if inside {
                    return self.add_stratum(y);
                }
                self.add_stratum(ny.add(&x0))?;
                return self.add_stratum(y);
            }
        }
        Err(Error::CapExceeded(format!(
            "torsion builder: no usable vector after e_{n} within {} basis vectors",
            self.budget
        )))
    }
}

/// Where the lines and pairs of an index-two stratification come from.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "source", rename_all = "snake_case")]
pub enum Index2Source {
    /// Every basis vector of the summand is an eigenvector.
    Lines { path: Path },
    /// Repeated companion blocks of degrees one (lines) and two (pairs,
    /// generated by the first block vector).
    Blocks { path: Path, degrees: Vec<usize> },
    /// Finitely many lines and pairs, in ambient coordinates.
    Finite { lines: Vec<VectorFin>, pairs: Vec<VectorFin> },
}

enum Cursor {
    Unit { path: Path, next: usize },
    Blocks { path: Path, degrees: Vec<usize>, want: usize, start: usize, idx: usize },
    List { vectors: Vec<VectorFin>, next: usize },
}

impl Cursor {
    fn new(src: &Index2Source, want: usize) -> Option<Cursor> {
        match src {
            Index2Source::Lines { path } if want == 1 => Some(Cursor::Unit { path: path.clone(), next: 0 }),
            Index2Source::Lines { .. } => None,
            Index2Source::Blocks { path, degrees } => degrees.contains(&want).then(|| Cursor::Blocks {
                path: path.clone(),
                degrees: degrees.clone(),
                want,
                start: 0,
                idx: 0,
            }),
            Index2Source::Finite { lines, pairs } => {
                let v = if want == 1 { lines } else { pairs };
                (!v.is_empty()).then(|| Cursor::List { vectors: v.clone(), next: 0 })
            }
        }
    }

    fn is_finite(&self) -> Option<usize> {
        match self {
            Cursor::List { vectors, .. } => Some(vectors.len()),
            _ => None,
        }
    }

    fn pull(&mut self, f: crate::field::FieldSpec) -> Option<VectorFin> {
        match self {
            Cursor::Unit { path, next } => {
                *next += 1;
                Some(VectorFin::unit(f, embed_path(path, *next - 1)))
            }
            Cursor::Blocks { path, degrees, want, start, idx } => loop {
                let d = degrees[*idx];
                let s = *start;
                *start += d;
                *idx = (*idx + 1) % degrees.len();
                if d == *want {
                    return Some(VectorFin::unit(f, embed_path(path, s)));
                }
            },
            Cursor::List { vectors, next } => {
                let v = vectors.get(*next).cloned();
                *next += 1;
                v
            }
        }
    }
}

/// Round-robin merge of several generator sequences.
struct Stream {
    field: crate::field::FieldSpec,
    cache: Vec<VectorFin>,
    cursors: Vec<Option<Cursor>>,
    turn: usize,
}

impl Stream {
    fn get(&mut self, i: usize) -> Option<VectorFin> {
        while self.cache.len() <= i {
            if self.cursors.iter().all(Option::is_none) {
                return None;
            }
            let k = self.turn % self.cursors.len();
            self.turn += 1;
            if let Some(c) = &mut self.cursors[k] {
                match c.pull(self.field) {
                    Some(v) => self.cache.push(v),
                    None => self.cursors[k] = None,
                }
            }
        }
        Some(self.cache[i].clone())
    }
}

/// Index-two layout. Lines sit at `(k,0)` for `1 ≤ k ≤ L`; pairs fill the
/// remaining positions of `ℕ²` in diagonal order, so row `k` starts early
/// enough for lazy evaluation. `D` is `ℕ²` in lexicographic order and the
/// enumeration order is diagonal.
pub(crate) struct Index2 {
    lines: Mutex<Stream>,
    pairs: Mutex<Stream>,
    line_count: Option<usize>,
}

fn diag(k: usize, l: usize) -> usize {
    let s = k + l;
    s * (s + 1) / 2 + k
}

fn undiag(i: usize) -> (usize, usize) {
    let mut s = ((((8 * i + 1) as f64).sqrt() - 1.0) / 2.0) as usize;
    while s * (s + 1) / 2 > i {
        s -= 1;
    }
    while (s + 1) * (s + 2) / 2 <= i {
        s += 1;
    }
    let k = i - s * (s + 1) / 2;
    (k, s - k)
}

impl Index2 {
    pub(crate) fn new(field: crate::field::FieldSpec, sources: &[Index2Source]) -> Result<Self> {
        let make = |want| Stream {
            field,
            cache: Vec::new(),
            cursors: sources.iter().map(|s| Cursor::new(s, want)).collect(),
            turn: 0,
        };
        let lines = make(1);
        let pairs = make(2);
        if pairs.cursors.iter().flatten().all(|c| c.is_finite().is_some()) {
            return Err(Error::PreconditionUnverifiable("index-two layout needs infinitely many pairs".into()));
        }
        let line_count = lines.cursors.iter().flatten().map(|c| c.is_finite()).sum::<Option<usize>>();
        Ok(Index2 { lines: Mutex::new(lines), pairs: Mutex::new(pairs), line_count })
    }

    fn is_line(&self, k: usize, l: usize) -> bool {
        l == 0 && k >= 1 && self.line_count.map_or(true, |c| k <= c)
    }

    /// Number of pair positions before `(k,l)` in diagonal order.
    fn pair_rank(&self, k: usize, l: usize) -> usize {
        let c = diag(k, l);
        let mut lines_before = 0;
        let mut j = 1;
        while diag(j, 0) < c && self.line_count.map_or(true, |lc| j <= lc) {
            lines_before += 1;
            j += 1;
        }
        c - lines_before
    }

    pub(crate) fn at(&self, k: usize, l: usize) -> Result<Stratum> {
        let index = StratIndex::Lex(k, l);
        if self.is_line(k, l) {
            let g = lock(&self.lines).get(k - 1).ok_or_else(|| Error::PropertyViolated("missing line".into()))?;
            return Ok(Stratum { index, generator: g, dim: Dim::Finite(1) });
        }
        let r = self.pair_rank(k, l);
        let g = lock(&self.pairs).get(r).ok_or_else(|| Error::PropertyViolated("missing pair".into()))?;
        Ok(Stratum { index, generator: g, dim: Dim::Finite(2) })
    }

    pub(crate) fn at_position(&self, i: usize) -> Result<Option<Stratum>> {
        let (k, l) = undiag(i);
        self.at(k, l).map(Some)
    }
}

fn square_root_of(p: &Polynomial) -> Option<Scalar> {
    if p.degree() != Some(2) {
        return None;
    }
    let f = p.field();
    let two = Scalar::from_i64(f, 2);
    let r = match two.inv() {
        Ok(h) => -(&p.coeff(1) * &h),
        Err(_) => p.coeff(0).sqrt()?,
    };
    let lin = Polynomial::linear(&r);
    (lin.mul(&lin) == *p).then_some(r)
}

/// Lines and pairs of `(u - μ)² = 0` read from the leaves, when every leaf
/// exposes that structure with a common `μ` and some leaf repeats pairs.
pub fn index2_sources(leaves: &[Leaf]) -> Result<Option<(Scalar, Vec<Index2Source>)>> {
    let mut mu: Option<Scalar> = None;
    let mut agree = |m: Scalar| -> bool {
        match &mu {
            Some(x) => *x == m,
            None => {
                mu = Some(m);
                true
            }
        }
    };
    let mut sources = Vec::new();
    let mut finite = Vec::new();
    for leaf in leaves {
        match &leaf.kind {
            LeafKind::Eigen { lambda } => {
                if !agree(lambda.clone()) {
                    return Ok(None);
                }
                sources.push(Index2Source::Lines { path: leaf.path.clone() });
            }
            LeafKind::Companion { blocks, offset } => {
                let mut degrees = Vec::new();
                for p in blocks {
                    let r = match p.degree() {
                        Some(1) => -p.coeff(0),
                        Some(2) => match square_root_of(p) {
                            Some(r) => r,
                            None => return Ok(None),
                        },
                        _ => return Ok(None),
                    };
                    if !agree(&r + offset) {
                        return Ok(None);
                    }
                    degrees.push(p.degree().unwrap());
                }
                sources.push(Index2Source::Blocks { path: leaf.path.clone(), degrees });
            }
            LeafKind::Finite { matrix } => finite.push((leaf.path.clone(), matrix.clone())),
            _ => return Ok(None),
        }
    }
    let Some(mu) = mu else { return Ok(None) };
    if !sources.iter().any(|s| matches!(s, Index2Source::Blocks { degrees, .. } if degrees.contains(&2))) {
        return Ok(None);
    }
    for (path, m) in finite {
        let n = m.nrows();
        let nm = m.sub(&MatrixFin::scalar(&mu, n));
        if n > 0 && !nm.mul(&nm).is_zero() {
            return Ok(None);
        }
        let mut lines = Vec::new();
        let mut pairs = Vec::new();
        for part in cyclic_decomposition(&m)? {
            let v = part.generator.remap(|j| embed_path(&path, j));
            if part.dim() == 1 {
                lines.push(v);
            } else {
                pairs.push(v);
            }
        }
        sources.push(Index2Source::Finite { lines, pairs });
    }
    Ok(Some((mu, sources)))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn diagonal_order_round_trips() {
        for i in 0..500 {
            let (k, l) = undiag(i);
            assert_eq!(diag(k, l), i);
        }
    }
}
