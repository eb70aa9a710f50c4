//! Non-torsion operators: free parts, the sewing construction, and the
//! assembly of `v` with `v² = a·v` and `u - v` elementary.
//!
//! Everything works on the direct-sum anatomy of the operator. The free
//! leaves form a free submodule `Fr` and the remaining leaves a torsion
//! summand `T`, so `V = Fr ⊕ T`. Three situations arise:
//!
//! * `T = 0`: `u` is already elementary and `v = 0`.
//! * `T` has no dominant eigenvalue: a good stratification of `T` and its
//!   connector turn `T` into a free module, `Fr` is left alone.
//! * `T` has a dominant eigenvalue `λ`: `T = G ⊕ H` with `G` a finite sum of
//!   monogenous blocks of dimension at least two and `u = λ` on `H`. The
//!   blocks are chained onto the first free generator `x` and `H` is sewn
//!   into the tail `F[t]·U^d x`, where `U = u - λ` and `d = dim G`.

use std::collections::BTreeSet;
use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::family::{BasisFamily, FamilySpec, LazyHandle, DEFAULT_BASIS_BUDGET};
use crate::field::{FieldSpec, Scalar};
use crate::linalg::Echelon;
use crate::operator::{anatomy, embed_path, path_bound, IndexSet, Leaf, LeafKind, Operator, Path};
use crate::stratification::{
    check_properties, connector_with_budget, split_dominant_on, GenSpec, HSpec, Stratification, DEFAULT_SCAN_BUDGET,
};
use crate::vector::VectorFin;

/// `V = W ⊕ H` with `F ⊆ W` free, `W/F` finite-dimensional and `u = λ` on `H`.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct NonTorsionSplit {
    /// Free generators; the first one receives the blocks and `H`.
    pub f_generators: Vec<VectorFin>,
    /// Monogenous blocks `(generator, dimension)` spanning `W/F`, each of
    /// dimension at least two, in stratification order.
    pub w_extra: Vec<(VectorFin, usize)>,
    pub h: HSpec,
    pub lambda: Scalar,
}

/// Where the torsion part of a direct-sum operator stands.
pub enum TorsionPart {
    Empty,
    /// No dominant eigenvalue; carries the domain and the leaves.
    NonDominant(IndexSet, Vec<Leaf>),
    /// Dominant eigenvalue `λ` (any value when `T` is finite) and the
    /// ambient columns where `u - λ` may be non-zero.
    Dominant { domain: IndexSet, lambda: Option<Scalar>, support: BTreeSet<usize> },
}

fn torsion_domain(leaves: &[Leaf]) -> IndexSet {
    IndexSet::Paths { paths: leaves.iter().map(|l| l.path.clone()).collect::<Vec<Path>>() }
}

/// Splits the anatomy of `u` into free leaves and the torsion part.
pub fn torsion_part(u: &Operator) -> Result<(Vec<Leaf>, TorsionPart)> {
    let (free, torsion): (Vec<Leaf>, Vec<Leaf>) = anatomy(u).into_iter().partition(|l| l.is_free());
    if torsion.is_empty() {
        return Ok((free, TorsionPart::Empty));
    }
    let mut lambda: Option<Scalar> = None;
    let mut support = BTreeSet::new();
    let mut dominant = true;
    for leaf in &torsion {
        match &leaf.kind {
            LeafKind::Eigen { lambda: l } | LeafKind::DomPatch { lambda: l, .. } => {
                if lambda.as_ref().is_some_and(|x| x != l) {
                    dominant = false;
                }
                lambda = Some(l.clone());
                if let LeafKind::DomPatch { support: s, .. } = &leaf.kind {
                    support.extend(s.iter().map(|&j| embed_path(&leaf.path, j)));
                }
            }
            LeafKind::Finite { matrix } => {
                let _ = path_bound(&leaf.path);
                support.extend((0..matrix.nrows()).map(|j| embed_path(&leaf.path, j)));
            }
            LeafKind::Companion { .. } | LeafKind::TorsionOther => dominant = false,
            LeafKind::Free { .. } => unreachable!(),
            LeafKind::Other => {
                return Err(Error::PreconditionUnverifiable(
                    "a direct summand is neither free nor recognisably torsion".into(),
                ))
            }
        }
    }
    let domain = torsion_domain(&torsion);
    if dominant {
        Ok((free, TorsionPart::Dominant { domain, lambda, support }))
    } else {
        Ok((free, TorsionPart::NonDominant(domain, torsion)))
    }
}

/// Generators of the free leaves; the quotient by their span is torsion.
pub fn quasi_maximal_free(u: &Operator) -> Result<Vec<VectorFin>> {
    let f = u.field();
    let (free, _) = torsion_part(u)?;
    if free.is_empty() {
        return Err(Error::PreconditionUnverifiable("no free summand is visible in the operator structure".into()));
    }
    Ok(free.iter().map(|l| VectorFin::unit(f, embed_path(&l.path, 0))).collect())
}

/// The decomposition lemma on a direct-sum tree whose torsion part has a
/// dominant eigenvalue or finite dimension.
pub fn nontorsion_decompose(u: &Operator) -> Result<NonTorsionSplit> {
    let f = u.field();
    let (free, part) = torsion_part(u)?;
    if free.is_empty() {
        return Err(Error::PreconditionUnverifiable("no free summand is visible in the operator structure".into()));
    }
    let f_generators: Vec<VectorFin> = free.iter().map(|l| VectorFin::unit(f, embed_path(&l.path, 0))).collect();
    match part {
        TorsionPart::Empty => Ok(NonTorsionSplit {
            f_generators,
            w_extra: Vec::new(),
            h: HSpec { field: f, extra: Vec::new(), domain: IndexSet::Paths { paths: vec![] }, exclude: BTreeSet::new() },
            lambda: Scalar::zero(f),
        }),
        TorsionPart::NonDominant(..) => Err(Error::PreconditionUnverifiable(
            "the torsion part has no dominant eigenvalue; use its good stratification".into(),
        )),
        TorsionPart::Dominant { domain, lambda, support } => {
            let lambda = lambda.unwrap_or_else(|| Scalar::zero(f));
            let split = split_dominant_on(u, &domain, &lambda, &support)?;
            Ok(NonTorsionSplit { f_generators, w_extra: split.blocks, h: split.h, lambda: split.mu })
        }
    }
}

/// The sewing and assembly map on the basis
/// `U^i x (i < d)`, `G₂`, `U^k g` for the other free generators `g`, and the
/// sewing triples `U^{d+3n} x, U^{d+3n+1} x, U^{d+3n+2} x, f_n`.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct AssemblySpec {
    /// `U = u - λ`
    pub op: Operator,
    pub a: Scalar,
    pub x: VectorFin,
    pub others: Vec<VectorFin>,
    pub blocks: Vec<(VectorFin, usize)>,
    pub h: HSpec,
    pub budget: usize,
}

struct AssemblyFamily {
    field: FieldSpec,
    op: Operator,
    a: Scalar,
    /// `(vector, image)` in basis order
    entries: Vec<(VectorFin, VectorFin)>,
    pending: VecDeque<(VectorFin, VectorFin)>,
    /// next `U^{d+k} x`, its index `k`
    tail: (VectorFin, usize),
    h: HSpec,
    h_pos: usize,
    h_done: bool,
    chains: Vec<VectorFin>,
}

impl AssemblyFamily {
    fn next_e(&mut self) -> Result<VectorFin> {
        let w = self.op.apply(&self.tail.0)?;
        self.tail.1 += 1;
        Ok(std::mem::replace(&mut self.tail.0, w))
    }

    fn refill(&mut self) -> Result<()> {
        let zero = VectorFin::zero(self.field);
        let f_n = if self.h_done { None } else { self.h.nth(self.h_pos) };
        match f_n {
            Some(fv) => {
                self.h_pos += 1;
                let e0 = self.next_e()?;
                let e1 = self.next_e()?;
                let e2 = self.next_e()?;
                let v_e0 = e1.sub(&fv);
                let (v_e1, v_fn) = if self.a.is_zero() {
                    (fv.sub(&e1), fv.sub(&e1))
                } else {
                    (zero.clone(), fv.sub(&e1).scaled(&self.a))
                };
                self.pending.push_back((e0, v_e0));
                self.pending.push_back((e1, v_e1));
                self.pending.push_back((e2, zero.clone()));
                self.pending.push_back((fv, v_fn));
            }
            None => {
                self.h_done = true;
                let e = self.next_e()?;
                self.pending.push_back((e, zero.clone()));
            }
        }
        for g in &mut self.chains {
            let w = self.op.apply(g)?;
            self.pending.push_back((std::mem::replace(g, w), zero.clone()));
        }
        Ok(())
    }
}

impl BasisFamily for AssemblyFamily {
    fn field(&self) -> FieldSpec {
        self.field
    }
    fn domain(&self) -> IndexSet {
        IndexSet::All
    }
    fn components(&self) -> usize {
        1
    }
    fn basis_vector(&mut self, _i: usize) -> Result<Option<VectorFin>> {
        if self.pending.is_empty() {
            self.refill()?;
        }
        let e = self.pending.pop_front().expect("refill always produces vectors");
        let v = e.0.clone();
        self.entries.push(e);
        Ok(Some(v))
    }
    fn image(&mut self, _component: usize, i: usize) -> Result<VectorFin> {
        Ok(self.entries[i].1.clone())
    }
    fn label(&self) -> String {
        format!("assembly(a={})", self.a)
    }
}

impl AssemblySpec {
    pub(crate) fn build(&self) -> Result<Box<dyn BasisFamily>> {
        let field = self.op.field();
        field.check(self.a.field())?;
        let u = &self.op;
        let zero = VectorFin::zero(field);
        let mut pending = VecDeque::new();
        // chain vectors of the blocks, the very last one excluded
        let mut b: Vec<(VectorFin, VectorFin)> = Vec::new();
        let nblocks = self.blocks.len();
        let mut last = None;
        for (k, (g, n)) in self.blocks.iter().enumerate() {
            if *n < 2 {
                return Err(Error::PropertyViolated(format!("block {k} has dimension {n} < 2")));
            }
            let mut c = g.clone();
            for j in 0..*n {
                if k + 1 == nblocks && j + 1 == *n {
                    last = Some(c.clone());
                    break;
                }
                let img = if j + 1 == *n { c.scaled(&self.a).sub(&self.blocks[k + 1].0) } else { zero.clone() };
                b.push((c.clone(), img));
                c = u.apply(&c)?;
            }
        }
        let d: usize = self.blocks.iter().map(|(_, n)| n).sum();
        let mut xi = self.x.clone();
        for _ in 0..d {
            let w = u.apply(&xi)?;
            pending.push_back((std::mem::replace(&mut xi, w), zero.clone()));
        }
        if let Some(last) = last {
            let mut ech = Echelon::new(field);
            for (i, (v, _)) in b.iter().enumerate() {
                ech.insert(v, i).map_err(|_| Error::PropertyViolated("block chains are dependent".into()))?;
            }
            // y_{k+1} = (U - f) y_k, with y_k in the span of the first k chain vectors
            let mut y = self.blocks[0].0.clone();
            for _ in 1..d {
                let combo = ech
                    .express(&y)
                    .ok_or_else(|| Error::PropertyViolated("chain vector left the span of the blocks".into()))?;
                let mut fy = VectorFin::zero(field);
                for (i, c) in combo.iter() {
                    fy.axpy(c, &b[i].1);
                }
                y = u.apply(&y)?.sub(&fy);
            }
            if ech.contains(&y) {
                return Err(Error::PropertyViolated("y_M lies in the span of the other chain vectors".into()));
            }
            let _ = last;
            for e in b {
                pending.push_back(e);
            }
            let fy = y.scaled(&self.a).sub(&self.x);
            pending.push_back((y, fy));
        }
        Ok(Box::new(AssemblyFamily {
            field,
            op: u.clone(),
            a: self.a.clone(),
            entries: Vec::new(),
            pending,
            tail: (xi, 0),
            h: self.h.clone(),
            h_pos: 0,
            h_done: false,
            chains: self.others.clone(),
        }))
    }
}

/// `v` with `v² = a·v` together with free generators of `u - v`.
#[derive(Clone, Debug)]
pub struct AElementary {
    pub v: Operator,
    pub gens: GenSpec,
}

/// The sewing map for `V = F[t]x ⊕ V₂` with `u = λ` on `V₂ = span(h)`.
pub fn sewing(u: &Operator, x: &VectorFin, h: &HSpec, lambda: &Scalar, a: &Scalar) -> Result<Operator> {
    let spec = AssemblySpec {
        op: u.plus_scalar(&-lambda)?,
        a: a.clone(),
        x: x.clone(),
        others: Vec::new(),
        blocks: Vec::new(),
        h: h.clone(),
        budget: DEFAULT_BASIS_BUDGET,
    };
    Ok(Operator::lazy(LazyHandle::build(FamilySpec::Assembly(spec), 0)?))
}

/// Final assembly from a decomposition-lemma split.
pub fn assemble_a_elementary(u: &Operator, split: &NonTorsionSplit, a: &Scalar) -> Result<AElementary> {
    let f = u.field();
    let Some((x, others)) = split.f_generators.split_first() else {
        return Err(Error::PreconditionUnverifiable("the split has no free generator".into()));
    };
    if split.w_extra.is_empty() && split.h.count() == Some(0) {
        return Ok(AElementary {
            v: Operator::zero(f),
            gens: GenSpec::List { vectors: split.f_generators.clone() },
        });
    }
    let spec = AssemblySpec {
        op: u.plus_scalar(&-&split.lambda)?,
        a: a.clone(),
        x: x.clone(),
        others: others.to_vec(),
        blocks: split.w_extra.clone(),
        h: split.h.clone(),
        budget: DEFAULT_BASIS_BUDGET,
    };
    let v = Operator::lazy(LazyHandle::build(FamilySpec::Assembly(spec), 0)?);
    let first = split.w_extra.first().map_or_else(|| x.clone(), |(g, _)| g.clone());
    let mut vectors = vec![first];
    vectors.extend(others.iter().cloned());
    Ok(AElementary { v, gens: GenSpec::List { vectors } })
}

/// `v² = a·v` with `u - v` elementary, for a non-torsion direct-sum tree.
pub fn a_elementary_nontorsion(u: &Operator, a: &Scalar) -> Result<AElementary> {
    let f = u.field();
    let (free, part) = torsion_part(u)?;
    if free.is_empty() {
        return Err(Error::PreconditionUnverifiable("no free summand is visible in the operator structure".into()));
    }
    match part {
        TorsionPart::NonDominant(domain, leaves) => {
            let strat = crate::stratification::torsion_strat_on(u, &leaves, domain, DEFAULT_SCAN_BUDGET)?;
            let flags = check_properties(&strat);
            if !flags.good() {
                return Err(Error::PropertyViolated(format!("torsion part stratification is not good: {flags:?}")));
            }
            let v = connector_with_budget(&strat, a, DEFAULT_BASIS_BUDGET)?;
            let extra = free.iter().map(|l| VectorFin::unit(f, embed_path(&l.path, 0))).collect();
            Ok(AElementary { v, gens: GenSpec::Roots { strat: Stratification::spec(&strat).clone(), extra } })
        }
        _ => assemble_a_elementary(u, &nontorsion_decompose(u)?, a),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::MatrixFin;
    use crate::operator::{op_compose, op_sub, verify_annihilated, Layout};
    use crate::poly::Polynomial;
    use crate::stratification::verify_elementary;

    const Q: FieldSpec = FieldSpec::Rationals;

    fn shift_plus_line(f: FieldSpec) -> Operator {
        let line = Operator::matrix(MatrixFin::zero(f, 1, 1)).unwrap();
        Operator::direct_sum(&line, &Operator::shift(f), Layout::Prefix { len: 1 }).unwrap()
    }

    fn check_v(u: &Operator, ae: &AElementary, a: &Scalar, prefix: usize) {
        let v2 = op_compose(&ae.v, &ae.v).unwrap();
        for n in 0..prefix {
            assert_eq!(v2.col(n).unwrap(), ae.v.col(n).unwrap().scaled(a), "column {n}");
        }
        let e = op_sub(u, &ae.v).unwrap();
        verify_elementary(&e, &ae.gens, prefix).unwrap();
    }

    #[test]
    fn quasi_maximal_examples() {
        assert_eq!(quasi_maximal_free(&Operator::shift(Q)).unwrap(), vec![VectorFin::unit(Q, 0)]);
        assert_eq!(quasi_maximal_free(&shift_plus_line(Q)).unwrap(), vec![VectorFin::unit(Q, 1)]);
        let c = Operator::companion_blocks(Q, vec![Polynomial::from_i64(Q, &[0, 0, 1])]).unwrap();
        assert!(matches!(quasi_maximal_free(&c), Err(Error::PreconditionUnverifiable(_))));
    }

    #[test]
    fn sewing_finite_line_table() {
        let u = shift_plus_line(Q);
        let s = nontorsion_decompose(&u).unwrap();
        assert!(s.w_extra.is_empty());
        assert_eq!(s.h.count(), Some(1));
        let x = VectorFin::unit(Q, 1);
        let v = sewing(&u, &x, &s.h, &s.lambda, &Scalar::zero(Q)).unwrap();
        let e = |k: usize| VectorFin::unit(Q, k + 1);
        let f0 = VectorFin::unit(Q, 0);
        assert_eq!(v.col(1).unwrap(), e(1).sub(&f0));
        assert_eq!(v.col(2).unwrap(), f0.sub(&e(1)));
        assert!(v.col(3).unwrap().is_zero());
        assert_eq!(v.col(0).unwrap(), f0.sub(&e(1)));
        for k in 3..40 {
            assert!(v.col(k + 1).unwrap().is_zero());
        }
        let w = op_sub(&u, &v).unwrap();
        assert_eq!(w.col(1).unwrap(), f0);
    }

    #[test]
    fn sewing_infinite_char2() {
        let f2 = FieldSpec::Prime(2);
        let u = Operator::direct_sum(&Operator::shift(f2), &Operator::zero(f2), Layout::Interleave).unwrap();
        let one = Scalar::one(f2);
        let ae = a_elementary_nontorsion(&u, &one).unwrap();
        check_v(&u, &ae, &one, 256);
    }

    #[test]
    fn assembly_with_square_zero_block() {
        let c = Operator::matrix(MatrixFin::from_i64(Q, &[&[0, 0], &[1, 0]])).unwrap();
        let u = Operator::direct_sum(&c, &Operator::shift(Q), Layout::Prefix { len: 2 }).unwrap();
        let s = nontorsion_decompose(&u).unwrap();
        assert_eq!(s.w_extra.len(), 1);
        assert_eq!(s.w_extra[0].1, 2);
        for a in [0, 1, 2] {
            let a = Scalar::from_i64(Q, a);
            let ae = assemble_a_elementary(&u, &s, &a).unwrap();
            check_v(&u, &ae, &a, 128);
        }
    }

    #[test]
    fn square_zero_when_a_is_zero() {
        let u = shift_plus_line(Q);
        let ae = a_elementary_nontorsion(&u, &Scalar::zero(Q)).unwrap();
        assert!(verify_annihilated(&ae.v, &Polynomial::from_i64(Q, &[0, 0, 1]), 256).passed);
        check_v(&u, &ae, &Scalar::zero(Q), 256);
    }
}
