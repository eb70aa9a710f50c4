//! Finite-dimensional support: the invariant subspace lemma, the
//! similarity class `[w]` of a finite-rank perturbation, `λ`-stable matrix
//! sums and the decomposition of `λ·id + w` built from them.
//!
//! The matrix search is bounded. Over `𝔽_p` every annihilated matrix of a
//! size is enumerated when there are at most [`EXHAUSTIVE_LIMIT`] matrices
//! of that size, which covers `𝔽₂` up to 4×4 and `𝔽₃` up to 3×3. Before that
//! a structured attempt handles targets with double roots when the shifted
//! matrix is nilpotent, over any field. A failed search is reported as
//! [`Error::SearchFailed`] and never read as impossibility.

use std::collections::{BTreeSet, HashMap, HashSet};
use std::sync::{Arc, Mutex, OnceLock};

use serde::{Deserialize, Serialize};

use crate::certificate::{verify_sum, Evidence, Route, ThreeSumCertificate};
use crate::error::{Error, Result};
use crate::family::{BasisFamily, FamilySpec, LazyHandle};
use crate::field::{FieldSpec, Scalar};
use crate::fmodule::cyclic_decomposition;
use crate::linalg::{Echelon, MatrixFin};
use crate::operator::{analyze, eval_poly, Dominance, IndexSet, Operator};
use crate::poly::QuadraticTarget;
use crate::scalar_sums::{scalar_identity_decomposition, scalar_is_sum, trace_condition, two_by_two_identity_triple};
use crate::vector::VectorFin;

/// Largest number of `N×N` matrices over `𝔽_p` the exhaustive search will scan.
pub const EXHAUSTIVE_LIMIT: u64 = 1 << 16;
pub const DEFAULT_Q_MAX: usize = 4;

// ---------------------------------------------------------------------------
// invariant subspace lemma

/// `W + Σ e(W) + Σ (ef)(W)` over `e, f ∈ {a, b, c}`, without any check.
pub fn closure_span(w: &[VectorFin], ops: &[Operator; 3]) -> Result<Vec<VectorFin>> {
    let Some(first) = w.first() else { return Ok(Vec::new()) };
    let mut ech = Echelon::new(first.field());
    let mut basis = Vec::new();
    let mut push = |v: VectorFin, basis: &mut Vec<VectorFin>| {
        if ech.insert(&v, basis.len()).is_ok() {
            basis.push(v);
        }
    };
    for x in w {
        push(x.clone(), &mut basis);
        for e in ops {
            let ex = e.apply(x)?;
            for f in ops {
                push(f.apply(&ex)?, &mut basis);
            }
            push(ex, &mut basis);
        }
    }
    Ok(basis)
}

/// The closure of the invariant subspace lemma, checked: each operator is
/// annihilated by its target on the closure and maps the closure into
/// itself. Stability needs the lemma's hypothesis `a + b + c = λ + w` with
/// `im w ⊂ W`; when it fails the result is [`Error::PropertyViolated`].
pub fn invariant_closure(w: &[VectorFin], ops: &[(Operator, QuadraticTarget); 3]) -> Result<Vec<VectorFin>> {
    let plain: [Operator; 3] = std::array::from_fn(|i| ops[i].0.clone());
    let basis = closure_span(w, &plain)?;
    let Some(first) = basis.first() else { return Ok(basis) };
    let mut ech = Echelon::new(first.field());
    for (i, b) in basis.iter().enumerate() {
        let _ = ech.insert(b, i);
    }
    for (k, (op, target)) in ops.iter().enumerate() {
        for (i, b) in basis.iter().enumerate() {
            if !eval_poly(target.monic(), op, b)?.is_zero() {
                return Err(Error::NotQuadratic(format!("operator {k} is not annihilated by {target} on closure vector {i}")));
            }
            if !ech.contains(&op.apply(b)?) {
                return Err(Error::PropertyViolated(format!("closure is not stable under operator {k} at vector {i}")));
            }
        }
    }
    Ok(basis)
}

// ---------------------------------------------------------------------------
// the class [w]

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct FiniteRankClass {
    /// Matrix of `w` restricted to `W` in the basis `w_basis`.
    pub representative: MatrixFin,
    pub n_of_w: usize,
    /// Basis of a minimal `W`, in ambient coordinates.
    pub w_basis: Vec<VectorFin>,
    /// A complement of `W` inside `ker w ∩ span(e_block)`.
    pub kernel_complement: Vec<VectorFin>,
    /// Ambient indices where `w` lives; every other `e_n` lies in `ker w`.
    pub block: Vec<usize>,
}

fn kernel_basis(m: &MatrixFin) -> Vec<Vec<Scalar>> {
    // reduced row echelon form of m, then one kernel vector per free column
    let f = m.field();
    let (rows, cols) = (m.nrows(), m.ncols());
    let mut a: Vec<Vec<Scalar>> = (0..rows).map(|i| m.row(i).to_vec()).collect();
    let mut pivots = Vec::new();
    let mut r = 0;
    for c in 0..cols {
        let Some(p) = (r..rows).find(|&i| !a[i][c].is_zero()) else { continue };
        a.swap(r, p);
        let inv = a[r][c].inv().expect("non-zero pivot");
        for x in a[r].iter_mut() {
            *x = &*x * &inv;
        }
        for i in 0..rows {
            if i != r && !a[i][c].is_zero() {
                let k = a[i][c].clone();
                for j in 0..cols {
                    let d = &k * &a[r][j];
                    a[i][j] = &a[i][j] - &d;
                }
            }
        }
        pivots.push(c);
        r += 1;
    }
    (0..cols)
        .filter(|c| !pivots.contains(c))
        .map(|free| {
            let mut v = vec![Scalar::zero(f); cols];
            v[free] = Scalar::one(f);
            for (i, &pc) in pivots.iter().enumerate() {
                v[pc] = -&a[i][free];
            }
            v
        })
        .collect()
}

fn to_vec(f: FieldSpec, xs: &[Scalar]) -> VectorFin {
    VectorFin::from_entries(f, xs.iter().cloned().enumerate()).expect("same field")
}

/// `u = λ·id + w` with `w` of finite rank, read off the operator structure.
pub fn finite_rank_class(u: &Operator) -> Result<(Scalar, FiniteRankClass)> {
    let f = u.field();
    let (lambda, support) = match analyze(u).dominance {
        Dominance::Dom { lambda, support } => (lambda, support),
        _ => {
            return Err(Error::PreconditionUnverifiable(
                "the operator is not visibly a scalar plus a finite-rank perturbation".into(),
            ))
        }
    };
    let mut block: BTreeSet<usize> = support.iter().copied().collect();
    for &s in &support {
        let w = u.col(s)?.sub(&VectorFin::unit(f, s).scaled(&lambda));
        block.extend(w.support());
    }
    let block: Vec<usize> = block.into_iter().collect();
    let m = block.len();
    let pos = |n: usize| block.binary_search(&n).expect("block is closed under w");
    let mut mat = MatrixFin::zero(f, m, m);
    for (j, &n) in block.iter().enumerate() {
        if support.contains(&n) {
            let w = u.col(n)?.sub(&VectorFin::unit(f, n).scaled(&lambda));
            for (r, c) in w.iter() {
                mat.set(pos(r), j, c.clone());
            }
        }
    }
    let cols: Vec<VectorFin> = (0..m).map(|j| to_vec(f, &mat.column(j))).collect();
    let kernel: Vec<VectorFin> = kernel_basis(&mat).iter().map(|k| to_vec(f, k)).collect();
    // image basis
    let mut img = Echelon::new(f);
    let mut image = Vec::new();
    for c in &cols {
        if img.insert(c, image.len()).is_ok() {
            image.push(c.clone());
        }
    }
    let mut kech = Echelon::new(f);
    for (i, k) in kernel.iter().enumerate() {
        let _ = kech.insert(k, i);
    }
    // im w ∩ ker w, as the kernel of w restricted to im w
    let mut both = Echelon::new(f);
    let mut inter = Vec::new();
    let mut wimg = MatrixFin::zero(f, m, image.len());
    for (j, v) in image.iter().enumerate() {
        let wv = apply_mat(&mat, v);
        for (r, c) in wv.iter() {
            wimg.set(r, j, c.clone());
        }
    }
    for coeffs in kernel_basis(&wimg) {
        let mut v = VectorFin::zero(f);
        for (j, c) in coeffs.iter().enumerate() {
            v.axpy(c, &image[j]);
        }
        if both.insert(&v, inter.len()).is_ok() {
            inter.push(v);
        }
    }
    let mut g_ech = kech;
    let mut g = Vec::new();
    for v in &image {
        // a vector of im w depending on ker w + G differs from G by an element of im w ∩ ker w
        if g_ech.insert(v, kernel.len() + g.len()).is_ok() {
            g.push(v.clone());
        }
    }
    for j in 0..m {
        let e = VectorFin::unit(f, j);
        if g_ech.insert(&e, kernel.len() + g.len()).is_ok() {
            g.push(e);
        }
    }
    // W = G ⊕ (im w ∩ ker w), with G a complement of ker w containing C
    let mut w_local: Vec<VectorFin> = g.clone();
    w_local.extend(inter.iter().cloned());
    let n = w_local.len();
    let mut wech = Echelon::new(f);
    for (i, v) in w_local.iter().enumerate() {
        wech.insert(v, i).map_err(|_| Error::PropertyViolated("W basis is dependent".into()))?;
    }
    let mut rep = MatrixFin::zero(f, n, n);
    for (j, v) in w_local.iter().enumerate() {
        let coords = wech
            .express(&apply_mat(&mat, v))
            .ok_or_else(|| Error::PropertyViolated("im w is not inside W".into()))?;
        for (i, c) in coords.iter() {
            rep.set(i, j, c.clone());
        }
    }
    let mut kernel_complement = Vec::new();
    for k in &kernel {
        if wech.insert(k, n + kernel_complement.len()).is_ok() {
            kernel_complement.push(k.clone());
        }
    }
    let ambient = |v: &VectorFin| v.remap(|i| block[i]);
    Ok((
        lambda,
        FiniteRankClass {
            representative: rep,
            n_of_w: n,
            w_basis: w_local.iter().map(ambient).collect(),
            kernel_complement: kernel_complement.iter().map(ambient).collect(),
            block,
        },
    ))
}

fn apply_mat(m: &MatrixFin, v: &VectorFin) -> VectorFin {
    let f = m.field();
    let mut out = VectorFin::zero(f);
    for (j, c) in v.iter() {
        out.axpy(c, &to_vec(f, &m.column(j)));
    }
    out
}

// ---------------------------------------------------------------------------
// λ-stable search

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct StableWitness {
    pub q: usize,
    /// Summands of `(A + λI_n) ⊕ λI_q`, annihilated by the targets in order.
    pub matrices: [MatrixFin; 3],
}

/// `(A + λI_n) ⊕ λI_q`
fn padded(a: &MatrixFin, lambda: &Scalar, q: usize) -> MatrixFin {
    let n = a.nrows();
    a.add(&MatrixFin::scalar(lambda, n)).direct_sum(&MatrixFin::scalar(lambda, q))
}

/// Possible traces of an `N×N` matrix annihilated by `(t - x)(t - y)`.
fn traces(t: &QuadraticTarget, size: usize) -> Vec<Scalar> {
    let (x, y) = t.roots();
    let f = x.field();
    let mut out: Vec<Scalar> = (0..=size)
        .map(|k| &(&Scalar::from_i64(f, k as i64) * x) + &(&Scalar::from_i64(f, (size - k) as i64) * y))
        .collect();
    out.sort();
    out.dedup();
    out
}

fn trace_feasible(tr: &Scalar, targets: &[QuadraticTarget; 3], size: usize) -> bool {
    let (t1, t2, t3) = (traces(&targets[0], size), traces(&targets[1], size), traces(&targets[2], size));
    let s3: HashSet<Scalar> = t3.into_iter().collect();
    t1.iter().any(|a| t2.iter().any(|b| s3.contains(&(tr - &(a + b)))))
}

/// Whether the trace equation can hold for some size `n + q`, `q ≥ 0`, when
/// every target has a double root. `None` when the targets have a simple root.
fn double_root_trace_possible(a: &MatrixFin, lambda: &Scalar, targets: &[QuadraticTarget; 3]) -> Option<bool> {
    if targets.iter().any(|t| t.roots().0 != t.roots().1) {
        return None;
    }
    let f = lambda.field();
    // tr A + Nλ = N·s  ⇔  tr A = N(s - λ)
    let s = targets.iter().fold(Scalar::zero(f), |acc, t| &acc + t.roots().0);
    let d = &s - lambda;
    let tr = a.trace();
    let n = a.nrows() as i64;
    if d.is_zero() {
        return Some(tr.is_zero());
    }
    let ratio = tr.try_div(&d).ok()?;
    Some(match f {
        FieldSpec::Rationals => {
            let r = ratio.as_rational().expect("rational");
            r.is_integer() && *r >= num_rational::BigRational::from_integer(n.into())
        }
        FieldSpec::Prime(_) => true,
    })
}

/// Whether the trace alone rules out every `λ`-stable witness.
pub fn trace_obstruction(a: &MatrixFin, lambda: &Scalar, targets: &[QuadraticTarget; 3]) -> bool {
    double_root_trace_possible(a, lambda, targets) == Some(false)
}

/// Matrices in the standard basis of maps given on the basis `basis` by
/// their images.
fn from_basis_images<const K: usize>(
    f: FieldSpec,
    basis: &[VectorFin],
    images: &[Vec<VectorFin>; K],
) -> Result<[MatrixFin; K]> {
    let size = basis.len();
    let mut ech = Echelon::new(f);
    for (i, c) in basis.iter().enumerate() {
        ech.insert(c, i).map_err(|_| Error::PropertyViolated("chain basis is dependent".into()))?;
    }
    let mut m: [MatrixFin; K] = std::array::from_fn(|_| MatrixFin::zero(f, size, size));
    for j in 0..size {
        let coords = ech.express(&VectorFin::unit(f, j)).expect("chains span");
        for (k, mk) in m.iter_mut().enumerate() {
            let mut col = VectorFin::zero(f);
            for (l, c) in coords.iter() {
                col.axpy(c, &images[k][l]);
            }
            for (r, c) in col.iter() {
                mk.set(r, j, c.clone());
            }
        }
    }
    Ok(m)
}

/// A cyclic vector of `b`, tried among unit vectors and a few fixed
/// combinations of them.
fn cyclic_vector(b: &MatrixFin) -> Option<Vec<VectorFin>> {
    let f = b.field();
    let n = b.nrows();
    let mut candidates: Vec<VectorFin> = (0..n).map(|j| VectorFin::unit(f, j)).collect();
    for k in 0..=n {
        let mut v = VectorFin::zero(f);
        for j in 0..n {
            v.add_at(j, &Scalar::from_i64(f, (j as i64 + 1).pow(k as u32)));
        }
        candidates.push(v);
    }
    candidates.into_iter().find_map(|g| {
        let mut ech = Echelon::new(f);
        let mut chain = Vec::with_capacity(n);
        let mut v = g;
        for i in 0..n {
            ech.insert(&v, i).ok()?;
            let next = apply_mat(b, &v);
            chain.push(v);
            v = next;
        }
        Some(chain)
    })
}

/// Witness for double-root targets. With `B = T - (x₁+x₂+x₃)I`:
/// a nilpotent `B` is split along its chains into two square-zero parts;
/// a cyclic `B` of trace zero is, in a Krylov basis, the shift plus a
/// last column whose own coordinate is `tr B = 0`, so that column is a
/// third square-zero part.
fn structured_witness(t: &MatrixFin, targets: &[QuadraticTarget; 3]) -> Result<Option<[MatrixFin; 3]>> {
    if targets.iter().any(|p| p.roots().0 != p.roots().1) {
        return Ok(None);
    }
    let f = t.field();
    let size = t.nrows();
    let xs: Vec<Scalar> = targets.iter().map(|p| p.roots().0.clone()).collect();
    let s = xs.iter().fold(Scalar::zero(f), |acc, x| &acc + x);
    let b = t.sub(&MatrixFin::scalar(&s, size));
    let mut power = MatrixFin::identity(f, size);
    for _ in 0..size {
        power = power.mul(&b);
    }
    let shifted = |m: [MatrixFin; 3]| {
        let [m1, m2, m3] = m;
        [
            m1.add(&MatrixFin::scalar(&xs[0], size)),
            m2.add(&MatrixFin::scalar(&xs[1], size)),
            m3.add(&MatrixFin::scalar(&xs[2], size)),
        ]
    };
    if power.is_zero() {
        let mut chain = Vec::new();
        let mut images: [Vec<VectorFin>; 3] = Default::default();
        for part in cyclic_decomposition(&b)? {
            let mut v = part.generator.clone();
            for i in 0..part.dim() {
                let next = apply_mat(&b, &v);
                images[i % 2].push(next.clone());
                images[1 - i % 2].push(VectorFin::zero(f));
                images[2].push(VectorFin::zero(f));
                chain.push(v);
                v = next;
            }
        }
        return Ok(Some(shifted(from_basis_images(f, &chain, &images)?)));
    }
    if !b.trace().is_zero() {
        return Ok(None);
    }
    let Some(chain) = cyclic_vector(&b) else { return Ok(None) };
    let mut images: [Vec<VectorFin>; 3] = Default::default();
    for i in 0..size {
        let next = apply_mat(&b, &chain[i]);
        let last = i + 1 == size;
        images[i % 2].push(if last { VectorFin::zero(f) } else { next.clone() });
        images[1 - i % 2].push(VectorFin::zero(f));
        images[2].push(if last { next } else { VectorFin::zero(f) });
    }
    Ok(Some(shifted(from_basis_images(f, &chain, &images)?)))
}

type Small = Vec<u8>;

fn small_mul(a: &[u8], b: &[u8], n: usize, p: u32) -> Small {
    let mut out = vec![0u8; n * n];
    for i in 0..n {
        for j in 0..n {
            let mut s = 0u32;
            for k in 0..n {
                s += a[i * n + k] as u32 * b[k * n + j] as u32;
            }
            out[i * n + j] = (s % p) as u8;
        }
    }
    out
}

fn small_shift(a: &[u8], n: usize, x: u8, p: u32) -> Small {
    let mut out = a.to_vec();
    for i in 0..n {
        out[i * n + i] = ((out[i * n + i] as u32 + p - x as u32) % p) as u8;
    }
    out
}

type CacheKey = (u64, usize, u8, u8);

fn cache() -> &'static Mutex<HashMap<CacheKey, Arc<Vec<Small>>>> {
    static CACHE: OnceLock<Mutex<HashMap<CacheKey, Arc<Vec<Small>>>>> = OnceLock::new();
    CACHE.get_or_init(Default::default)
}

fn residue(s: &Scalar) -> u8 {
    s.as_residue().expect("prime field") as u8
}

/// All `N×N` matrices over `𝔽_p` annihilated by `(t - x)(t - y)`, in
/// lexicographic order of their row-major entries. Cached.
pub fn annihilated_matrices(p: u64, size: usize, x: u8, y: u8) -> Result<Arc<Vec<Small>>> {
    let key = (p, size, x.min(y), x.max(y));
    if let Some(v) = cache().lock().expect("cache lock").get(&key) {
        return Ok(v.clone());
    }
    let cells = size * size;
    let total = (p as u128).checked_pow(cells as u32).unwrap_or(u128::MAX);
    if total > EXHAUSTIVE_LIMIT as u128 {
        return Err(Error::CapExceeded(format!("{total} matrices of size {size} over F_{p}")));
    }
    let pp = p as u32;
    let mut out = Vec::new();
    let mut m = vec![0u8; cells];
    for _ in 0..total {
        let prod = small_mul(&small_shift(&m, size, x, pp), &small_shift(&m, size, y, pp), size, pp);
        if prod.iter().all(|&c| c == 0) {
            out.push(m.clone());
        }
        for c in (0..cells).rev() {
            m[c] += 1;
            if (m[c] as u64) < p {
                break;
            }
            m[c] = 0;
        }
    }
    let out = Arc::new(out);
    cache().lock().expect("cache lock").insert(key, out.clone());
    Ok(out)
}

fn exhaustive_witness(t: &MatrixFin, targets: &[QuadraticTarget; 3], p: u64) -> Result<Option<[MatrixFin; 3]>> {
    let f = t.field();
    let n = t.nrows();
    let pp = p as u32;
    let lists: Vec<Arc<Vec<Small>>> = targets
        .iter()
        .map(|q| {
            let (x, y) = q.roots();
            annihilated_matrices(p, n, residue(x), residue(y))
        })
        .collect::<Result<_>>()?;
    let third: HashSet<&Small> = lists[2].iter().collect();
    let ts: Small = (0..n * n).map(|k| residue(t.get(k / n, k % n))).collect();
    for m1 in lists[0].iter() {
        for m2 in lists[1].iter() {
            let m3: Small = (0..n * n)
                .map(|k| ((ts[k] as u32 + 2 * pp - m1[k] as u32 - m2[k] as u32) % pp) as u8)
                .collect();
            if third.contains(&m3) {
                let conv = |m: &Small| {
                    let mut out = MatrixFin::zero(f, n, n);
                    for k in 0..n * n {
                        out.set(k / n, k % n, Scalar::residue(f, m[k] as u64));
                    }
                    out
                };
                return Ok(Some([conv(m1), conv(m2), conv(&m3)]));
            }
        }
    }
    Ok(None)
}

/// Looks for `q ≤ q_max` and matrices `M_i` with `p_i(M_i) = 0` summing to
/// `(A + λI_n) ⊕ λI_q`. Returns the first witness found, by increasing `q`.
pub fn lambda_stable_search(
    a: &MatrixFin,
    lambda: &Scalar,
    targets: &[QuadraticTarget; 3],
    q_max: usize,
) -> Result<StableWitness> {
    let f = lambda.field();
    f.check(a.field())?;
    for t in targets {
        f.check(t.field())?;
    }
    if scalar_is_sum(lambda, targets)?.is_none() && !trace_condition(lambda, targets)? {
        return Err(Error::ConditionViolated(format!(
            "λ={lambda} is neither a sum of roots nor satisfies 2λ=tr p1+tr p2+tr p3"
        )));
    }
    if double_root_trace_possible(a, lambda, targets) == Some(false) {
        return Err(Error::ConditionViolated(format!(
            "trace {} of A cannot match a sum of matrices annihilated by the targets at any size",
            a.trace()
        )));
    }
    let n = a.nrows();
    let mut exhaustive_sizes = Vec::new();
    for q in 0..=q_max {
        let t = padded(a, lambda, q);
        let size = n + q;
        if !trace_feasible(&t.trace(), targets, size) {
            continue;
        }
        if let Some(m) = structured_witness(&t, targets)? {
            return Ok(StableWitness { q, matrices: m });
        }
        if let FieldSpec::Prime(p) = f {
            match exhaustive_witness(&t, targets, p) {
                Ok(Some(m)) => return Ok(StableWitness { q, matrices: m }),
                Ok(None) => exhaustive_sizes.push(size),
                Err(Error::CapExceeded(_)) => {}
                Err(e) => return Err(e),
            }
        }
    }
    Err(Error::SearchFailed(format!(
        "no witness for q in 0..={q_max}; sizes searched exhaustively: {exhaustive_sizes:?}"
    )))
}

// ---------------------------------------------------------------------------
// decomposition of λ·id + w

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(tag = "scalar_part", rename_all = "snake_case")]
pub enum ScalarPart {
    Diagonal { parts: [Scalar; 3] },
    /// Repeated on consecutive pairs of the remaining basis.
    Tiles { matrices: [MatrixFin; 3] },
}

/// Basis `W ⊕ W'₁` carrying the matrix witness, then the rest of `ker w`
/// carrying the scalar decomposition. Components are the three summands.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct FiniteRankSpec {
    pub field: FieldSpec,
    pub class: FiniteRankClass,
    pub witness: StableWitness,
    pub scalar: ScalarPart,
}

struct FiniteRankFamily {
    spec: FiniteRankSpec,
    /// `(vector, images)` in basis order
    entries: Vec<(VectorFin, [VectorFin; 3])>,
    finite_done: bool,
    complement_pos: usize,
    next_e: usize,
    blocked: BTreeSet<usize>,
}

impl FiniteRankFamily {
    fn next_kernel_vector(&mut self) -> VectorFin {
        if let Some(v) = self.spec.class.kernel_complement.get(self.complement_pos) {
            self.complement_pos += 1;
            return v.clone();
        }
        while self.blocked.contains(&self.next_e) {
            self.next_e += 1;
        }
        self.next_e += 1;
        VectorFin::unit(self.spec.field, self.next_e - 1)
    }

    fn fill(&mut self) {
        let f = self.spec.field;
        if !self.finite_done {
            self.finite_done = true;
            let q = self.spec.witness.q;
            let mut basis = self.spec.class.w_basis.clone();
            for _ in 0..q {
                let v = self.next_kernel_vector();
                basis.push(v);
            }
            let mats = &self.spec.witness.matrices;
            for (j, b) in basis.iter().enumerate() {
                let images = std::array::from_fn(|k| {
                    let mut img = VectorFin::zero(f);
                    for (i, bi) in basis.iter().enumerate() {
                        img.axpy(mats[k].get(i, j), bi);
                    }
                    img
                });
                self.entries.push((b.clone(), images));
            }
            if !self.entries.is_empty() {
                return;
            }
        }
        match self.spec.scalar.clone() {
            ScalarPart::Diagonal { parts } => {
                let v = self.next_kernel_vector();
                let images = std::array::from_fn(|k| v.scaled(&parts[k]));
                self.entries.push((v, images));
            }
            ScalarPart::Tiles { matrices } => {
                let v0 = self.next_kernel_vector();
                let v1 = self.next_kernel_vector();
                let img = |m: &MatrixFin, j: usize| v0.scaled(m.get(0, j)).add(&v1.scaled(m.get(1, j)));
                let i0 = std::array::from_fn(|k| img(&matrices[k], 0));
                let i1 = std::array::from_fn(|k| img(&matrices[k], 1));
                self.entries.push((v0.clone(), i0));
                self.entries.push((v1.clone(), i1));
            }
        }
    }
}

impl BasisFamily for FiniteRankFamily {
    fn field(&self) -> FieldSpec {
        self.spec.field
    }
    fn domain(&self) -> IndexSet {
        IndexSet::All
    }
    fn components(&self) -> usize {
        3
    }
    fn basis_vector(&mut self, i: usize) -> Result<Option<VectorFin>> {
        while self.entries.len() <= i {
            self.fill();
        }
        Ok(Some(self.entries[i].0.clone()))
    }
    fn image(&mut self, component: usize, i: usize) -> Result<VectorFin> {
        Ok(self.entries[i].1[component].clone())
    }
    fn label(&self) -> String {
        format!("finite_rank(n={}, q={})", self.spec.class.n_of_w, self.spec.witness.q)
    }
}

impl FiniteRankSpec {
    pub(crate) fn build(&self) -> Result<Box<dyn BasisFamily>> {
        let size = self.class.n_of_w + self.witness.q;
        if self.witness.matrices.iter().any(|m| m.nrows() != size) {
            return Err(Error::Input(format!("witness matrices must be {size}×{size}")));
        }
        Ok(Box::new(FiniteRankFamily {
            spec: self.clone(),
            entries: Vec::new(),
            finite_done: false,
            complement_pos: 0,
            next_e: 0,
            blocked: self.class.block.iter().copied().collect(),
        }))
    }
}

/// Decomposes `u = λ·id + w` (finite rank `w`) from a `λ`-stable witness of
/// a representative of `[w]`, verified on `prefix` columns.
pub fn finite_rank_decompose(
    u: &Operator,
    targets: &[QuadraticTarget; 3],
    q_max: usize,
    prefix: usize,
) -> Result<ThreeSumCertificate> {
    let (lambda, class) = finite_rank_class(u)?;
    if class.n_of_w == 0 {
        return scalar_identity_decomposition(&lambda, targets, prefix);
    }
    let witness = lambda_stable_search(&class.representative, &lambda, targets, q_max)?;
    finite_rank_assemble(u, targets, &lambda, class, witness, prefix)
}

/// Builds and verifies the decomposition of `u = λ·id + w` from a witness
/// for the representative of `class`.
pub fn finite_rank_assemble(
    u: &Operator,
    targets: &[QuadraticTarget; 3],
    lambda: &Scalar,
    class: FiniteRankClass,
    witness: StableWitness,
    prefix: usize,
) -> Result<ThreeSumCertificate> {
    let f = u.field();
    let (scalar, scalar_evidence) = match scalar_is_sum(lambda, targets)? {
        Some(w) => (ScalarPart::Diagonal { parts: w.parts.clone() }, Evidence::ScalarWitness { parts: w.parts }),
        None => {
            let t = two_by_two_identity_triple(lambda, targets)?;
            (
                ScalarPart::Tiles { matrices: [t.a.clone(), t.b.clone(), t.c.clone()] },
                Evidence::TwoByTwo { a: t.a, b: t.b, c: t.c },
            )
        }
    };
    let evidence = vec![
        Evidence::MatrixWitness {
            lambda: lambda.clone(),
            representative: class.representative.clone(),
            q: witness.q,
            matrices: witness.matrices.clone(),
        },
        scalar_evidence,
    ];
    let spec = FiniteRankSpec { field: f, class, witness, scalar };
    let handles = LazyHandle::build_all(FamilySpec::FiniteRank(spec))?;
    let summands: [Operator; 3] = std::array::from_fn(|k| Operator::lazy(handles[k].clone()));
    let report = verify_sum(u, &summands, targets, prefix);
    if !report.passed {
        return Err(Error::PropertyViolated(format!("finite-rank decomposition: {report}")));
    }
    Ok(ThreeSumCertificate {
        summands,
        targets: targets.clone(),
        verified_prefix: prefix,
        route: Route::FiniteRank,
        evidence,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::BTreeMap;

    const Q: FieldSpec = FieldSpec::Rationals;
    const F2: FieldSpec = FieldSpec::Prime(2);

    fn sq(f: FieldSpec) -> [QuadraticTarget; 3] {
        std::array::from_fn(|_| QuadraticTarget::square_zero(f))
    }

    fn patched(f: FieldSpec, lambda: i64, cols: &[(usize, &[(usize, i64)])]) -> Operator {
        let base = Operator::scalar(&Scalar::from_i64(f, lambda));
        let mut m = BTreeMap::new();
        for (c, entries) in cols {
            let mut v = VectorFin::unit(f, *c).scaled(&Scalar::from_i64(f, lambda));
            v = v.add(&VectorFin::from_i64(f, entries));
            m.insert(*c, v);
        }
        Operator::patch(&base, m).unwrap()
    }

    #[test]
    fn class_of_scalar_is_empty() {
        let (l, c) = finite_rank_class(&Operator::scalar(&Scalar::from_i64(Q, 3))).unwrap();
        assert_eq!(l, Scalar::from_i64(Q, 3));
        assert_eq!(c.n_of_w, 0);
    }

    #[test]
    fn class_of_nilpotent_two_block() {
        let u = patched(Q, 0, &[(0, &[(1, 1)])]);
        let (_, c) = finite_rank_class(&u).unwrap();
        assert_eq!(c.n_of_w, 2);
        assert_eq!(c.representative, MatrixFin::from_i64(Q, &[&[0, 0], &[1, 0]]));
    }

    #[test]
    fn class_of_rank_one_idempotent() {
        let u = patched(Q, 0, &[(0, &[(0, 1)])]);
        let (_, c) = finite_rank_class(&u).unwrap();
        assert_eq!(c.n_of_w, 1);
        assert_eq!(c.representative, MatrixFin::from_i64(Q, &[&[1]]));
    }

    #[test]
    fn cyclic_trace_zero_splits_into_three_square_zero() {
        // distinct eigenvalues, so cyclic; not nilpotent
        let a = MatrixFin::from_i64(Q, &[&[1, 4, 0], &[0, 2, -1], &[2, 0, -3]]);
        let w = lambda_stable_search(&a, &Scalar::zero(Q), &sq(Q), 0).unwrap();
        assert_eq!(w.q, 0);
        assert_eq!(w.matrices[0].add(&w.matrices[1]).add(&w.matrices[2]), a);
        for m in &w.matrices {
            assert!(m.mul(m).is_zero());
        }
    }

    #[test]
    fn search_trivial_and_refusal() {
        let w = lambda_stable_search(&MatrixFin::zero(F2, 1, 1), &Scalar::zero(F2), &sq(F2), 4).unwrap();
        assert_eq!(w.q, 0);
        assert!(w.matrices.iter().all(|m| m.is_zero()));
        let e = lambda_stable_search(&MatrixFin::from_i64(F2, &[&[1]]), &Scalar::zero(F2), &sq(F2), 4).unwrap_err();
        assert!(matches!(e, Error::ConditionViolated(_)));
    }

    #[test]
    fn search_identity_two_over_f2() {
        let a = MatrixFin::identity(F2, 2);
        let w = lambda_stable_search(&a, &Scalar::zero(F2), &sq(F2), 4).unwrap();
        let sum = w.matrices[0].add(&w.matrices[1]).add(&w.matrices[2]);
        assert_eq!(sum, padded(&a, &Scalar::zero(F2), w.q));
        assert!(w.matrices.iter().all(|m| m.mul(m).is_zero()));
    }

    #[test]
    fn decompose_nilpotent_patch_f2() {
        let u = patched(F2, 0, &[(0, &[(1, 1)])]);
        let c = finite_rank_decompose(&u, &sq(F2), 4, 128).unwrap();
        assert_eq!(c.route, Route::FiniteRank);
    }

    #[test]
    fn decompose_refuses_trace_one_over_q() {
        let u = patched(Q, 0, &[(0, &[(0, 1)])]);
        assert!(matches!(finite_rank_decompose(&u, &sq(Q), 4, 64), Err(Error::ConditionViolated(_))));
    }

    #[test]
    fn closure_of_shift_splitters_is_not_stable() {
        let (a, b) = crate::elementary_split::split_shift_squarezero(Q).unwrap();
        let ops = [a.clone(), b.clone(), Operator::zero(Q)];
        let span = closure_span(&[VectorFin::unit(Q, 0)], &ops).unwrap();
        let mut ech = Echelon::new(Q);
        for (i, v) in span.iter().enumerate() {
            ech.insert(v, i).unwrap();
        }
        for k in 0..3 {
            assert!(ech.contains(&VectorFin::unit(Q, k)));
        }
        let t = QuadraticTarget::square_zero(Q);
        let checked = invariant_closure(&[VectorFin::unit(Q, 0)], &[(a, t.clone()), (b, t.clone()), (Operator::zero(Q), t)]);
        assert!(matches!(checked, Err(Error::PropertyViolated(_))));
    }

    #[test]
    fn closure_of_zero_operators() {
        let t = QuadraticTarget::square_zero(Q);
        let z = Operator::zero(Q);
        let c = invariant_closure(&[VectorFin::unit(Q, 0)], &[(z.clone(), t.clone()), (z.clone(), t.clone()), (z, t)]).unwrap();
        assert_eq!(c, vec![VectorFin::unit(Q, 0)]);
    }
}
