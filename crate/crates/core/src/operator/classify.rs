//! Structural classification of operator trees.
//!
//! Nothing here evaluates semantics beyond a few leading blocks: every tag is
//! read off the constructor tree by fixed rules, and `Unknown` is returned
//! whenever no rule applies.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use super::{Layout, Node, Operator, Side};
use crate::field::Scalar;
use crate::linalg::MatrixFin;
use crate::poly::Polynomial;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Tri {
    Yes,
    No,
    Unknown,
}

impl Tri {
    fn and(self, o: Tri) -> Tri {
        match (self, o) {
            (Tri::Yes, Tri::Yes) => Tri::Yes,
            (Tri::No, _) | (_, Tri::No) => Tri::No,
            _ => Tri::Unknown,
        }
    }
}

/// Whether `u - λ·id` has finite rank for some `λ`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Dominance {
    /// `u - λ·id` vanishes on every `e_n` with `n` outside `support`.
    Dom { lambda: Scalar, support: BTreeSet<usize> },
    /// `u - λ·id` has infinite rank for every `λ`.
    None,
    Unknown,
}

#[derive(Clone, Debug)]
pub struct Analysis {
    pub dominance: Dominance,
    pub torsion: Tri,
}

/// Route from the root of a direct-sum tree down to one summand.
pub type Path = Vec<(Layout, Side)>;

/// Ambient index of local index `j` of the summand at `path`.
pub fn embed_path(path: &[(Layout, Side)], j: usize) -> usize {
    path.iter().rev().fold(j, |k, (layout, side)| layout.embed(*side, k))
}

/// Local index of ambient `n` inside the summand at `path`, if it lies there.
pub fn locate_path(path: &[(Layout, Side)], n: usize) -> Option<usize> {
    let mut k = n;
    for (layout, side) in path {
        let (s, j) = layout.locate(k);
        if s != *side {
            return None;
        }
        k = j;
    }
    Some(k)
}

/// Upper bound on the ambient indices of a summand sitting under a finite
/// prefix block, or `None` when the summand is infinite-dimensional.
pub fn path_bound(path: &[(Layout, Side)]) -> Option<usize> {
    let i = path.iter().position(|(l, s)| matches!((l, s), (Layout::Prefix { .. }, Side::Left)))?;
    let Layout::Prefix { len } = path[i].0 else { unreachable!() };
    if len == 0 {
        return Some(0);
    }
    Some(embed_path(&path[..i], len - 1))
}

/// A set of basis indices: everything, or the union of some summands.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "set", rename_all = "snake_case")]
pub enum IndexSet {
    All,
    Paths { paths: Vec<Path> },
}

impl IndexSet {
    pub fn contains(&self, n: usize) -> bool {
        match self {
            IndexSet::All => true,
            IndexSet::Paths { paths } => paths.iter().any(|p| locate_path(p, n).is_some()),
        }
    }

    /// Largest possible member, or `None` if the set is infinite.
    pub fn bound(&self) -> Option<usize> {
        match self {
            IndexSet::All => None,
            IndexSet::Paths { paths } => {
                let mut b = 0;
                for p in paths {
                    b = b.max(path_bound(p)?);
                }
                Some(b)
            }
        }
    }

    pub fn is_finite(&self) -> bool {
        self.bound().is_some()
    }

    /// Smallest member `≥ from`.
    pub fn next_member(&self, from: usize) -> Option<usize> {
        let bound = self.bound();
        let mut n = from;
        loop {
            if bound.is_some_and(|b| n > b) {
                return None;
            }
            if self.contains(n) {
                return Some(n);
            }
            n += 1;
        }
    }

    /// All members of a finite set, in increasing order.
    pub fn members(&self) -> Option<Vec<usize>> {
        let b = self.bound()?;
        Some((0..=b).filter(|&n| self.contains(n)).collect())
    }
}

/// What a direct summand of the anatomy looks like, up to an added scalar.
#[derive(Clone, Debug)]
pub enum LeafKind {
    /// `Shift + offset·id`; free of rank one, generated by local `e_0`.
    Free { offset: Scalar },
    /// `λ·id`
    Eigen { lambda: Scalar },
    /// `λ·id` plus a finite-rank deviation supported on local columns `support`.
    DomPatch { lambda: Scalar, support: BTreeSet<usize> },
    /// Companion blocks repeated forever, plus `offset·id`.
    Companion { blocks: Vec<Polynomial>, offset: Scalar },
    /// Left part of a prefix direct sum; the whole summand is this matrix.
    Finite { matrix: MatrixFin },
    /// Torsion with no dominant eigenvalue, no finer structure exposed.
    TorsionOther,
    Other,
}

#[derive(Clone, Debug)]
pub struct Leaf {
    pub path: Path,
    pub op: Operator,
    pub kind: LeafKind,
}

impl Leaf {
    pub fn domain(&self) -> IndexSet {
        IndexSet::Paths { paths: vec![self.path.clone()] }
    }

    pub fn is_free(&self) -> bool {
        matches!(self.kind, LeafKind::Free { .. })
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct OperatorClassTags {
    pub is_torsion: Tri,
    pub free_part_generators: Vec<usize>,
    pub dominant_candidate: Option<Scalar>,
    pub deviation_rank_finite: Tri,
    /// Columns outside which `u - λ·id` vanishes, when dominant.
    pub deviation_support: Option<BTreeSet<usize>>,
}

fn union(a: &BTreeSet<usize>, b: &BTreeSet<usize>) -> BTreeSet<usize> {
    a.union(b).copied().collect()
}

fn dom(lambda: Scalar, support: BTreeSet<usize>) -> Dominance {
    Dominance::Dom { lambda, support }
}

fn constant(pattern: &[Scalar]) -> Option<&Scalar> {
    let first = pattern.first()?;
    pattern.iter().all(|x| x == first).then_some(first)
}

/// Dominance of `Σ` over a periodic family of column rules `n ↦ Σ c e_{n+off}`.
fn periodic_rules_dominance(rules: &[Vec<(i64, Scalar)>]) -> Option<Dominance> {
    let off_diagonal = rules.iter().flatten().any(|(o, c)| *o != 0 && !c.is_zero());
    if off_diagonal {
        return Some(Dominance::None);
    }
    let f = rules.iter().flatten().next().map(|(_, c)| c.field())?;
    let diag: Vec<Scalar> = rules
        .iter()
        .map(|r| r.iter().filter(|(o, _)| *o == 0).fold(Scalar::zero(f), |acc, (_, c)| &acc + c))
        .collect();
    Some(match constant(&diag) {
        Some(l) => dom(l.clone(), BTreeSet::new()),
        None => Dominance::None,
    })
}

/// Structural dominance and torsion tags, computed recursively.
pub fn analyze(u: &Operator) -> Analysis {
    let f = u.field();
    let (dominance, torsion) = match u.node() {
        Node::Shift => (Dominance::None, Tri::No),
        Node::DownShift => (Dominance::None, Tri::Yes),
        Node::Scalar { value } => (dom(value.clone(), BTreeSet::new()), Tri::Yes),
        Node::DiagonalPeriodic { pattern } => match constant(pattern) {
            Some(l) => (dom(l.clone(), BTreeSet::new()), Tri::Yes),
            None => (Dominance::None, Tri::Yes),
        },
        Node::BandedPeriodic { period, bands } => {
            let rules: Vec<Vec<(i64, Scalar)>> = (0..*period)
                .map(|r| bands.iter().map(|b| (b.offset, b.pattern[r].clone())).collect())
                .collect();
            let d = if bands.is_empty() {
                dom(crate::field::Scalar::zero(f), BTreeSet::new())
            } else {
                periodic_rules_dominance(&rules).unwrap_or(Dominance::Unknown)
            };
            let lower = bands.iter().all(|b| b.offset <= 0 || b.pattern.iter().all(|c| c.is_zero()));
            (d, if lower { Tri::Yes } else { Tri::Unknown })
        }
        Node::CompanionBlockSum { blocks } => {
            let roots: Option<Vec<Scalar>> = blocks
                .iter()
                .map(|p| (p.degree() == Some(1)).then(|| -p.coeff(0)))
                .collect();
            let d = match roots.as_deref().and_then(constant) {
                Some(l) => dom(l.clone(), BTreeSet::new()),
                None => Dominance::None,
            };
            (d, Tri::Yes)
        }
        Node::Matrix { matrix } => (dom(Scalar::zero(f), (0..matrix.nrows()).collect()), Tri::Yes),
        Node::FiniteRankPatch { base, columns } => {
            let b = analyze(base);
            let cols: BTreeSet<usize> = columns.keys().copied().collect();
            match b.dominance {
                Dominance::Dom { lambda, support } => (dom(lambda, union(&support, &cols)), Tri::Yes),
                Dominance::None => (Dominance::None, Tri::Unknown),
                Dominance::Unknown => (Dominance::Unknown, Tri::Unknown),
            }
        }
        Node::DirectSum { left, right, layout } => {
            let l = analyze(left);
            let r = analyze(right);
            let torsion = match layout {
                Layout::Interleave => l.torsion.and(r.torsion),
                Layout::Prefix { .. } => r.torsion,
            };
            let d = match layout {
                Layout::Interleave => match (&l.dominance, &r.dominance) {
                    (Dominance::Dom { lambda: a, support: s }, Dominance::Dom { lambda: b, support: t }) => {
                        if a == b {
                            let s: BTreeSet<usize> = s.iter().map(|&i| 2 * i).chain(t.iter().map(|&i| 2 * i + 1)).collect();
                            dom(a.clone(), s)
                        } else {
                            Dominance::None
                        }
                    }
                    (Dominance::None, _) | (_, Dominance::None) => Dominance::None,
                    _ => Dominance::Unknown,
                },
                Layout::Prefix { len } => match &r.dominance {
                    Dominance::Dom { lambda, support } => {
                        let s = (0..*len).chain(support.iter().map(|&i| i + len)).collect();
                        dom(lambda.clone(), s)
                    }
                    other => other.clone(),
                },
            };
            (d, torsion)
        }
        Node::Sum { left, right } | Node::Difference { left, right } => {
            let minus = matches!(u.node(), Node::Difference { .. });
            let l = analyze(left);
            let r = analyze(right);
            let d = match (&l.dominance, &r.dominance) {
                (Dominance::Dom { lambda: a, support: s }, Dominance::Dom { lambda: b, support: t }) => {
                    dom(if minus { a - b } else { a + b }, union(s, t))
                }
                (Dominance::None, Dominance::Dom { .. }) | (Dominance::Dom { .. }, Dominance::None) => Dominance::None,
                _ => Dominance::Unknown,
            };
            let scalar_l = matches!(&l.dominance, Dominance::Dom { support, .. } if support.is_empty());
            let scalar_r = matches!(&r.dominance, Dominance::Dom { support, .. } if support.is_empty());
            let t = if scalar_r {
                l.torsion
            } else if scalar_l {
                r.torsion
            } else {
                Tri::Unknown
            };
            (d, t)
        }
        Node::Scale { factor, inner } => {
            if factor.is_zero() {
                (dom(Scalar::zero(f), BTreeSet::new()), Tri::Yes)
            } else {
                let a = analyze(inner);
                let d = match a.dominance {
                    Dominance::Dom { lambda, support } => dom(&lambda * factor, support),
                    other => other,
                };
                (d, a.torsion)
            }
        }
        Node::Compose { outer, inner } => {
            let o = analyze(outer);
            let i = analyze(inner);
            match (&o.dominance, &i.dominance) {
                (Dominance::Dom { lambda: a, support: s }, Dominance::Dom { lambda: b, support: t }) => {
                    (dom(a * b, union(s, t)), Tri::Yes)
                }
                (Dominance::Dom { lambda, support }, Dominance::None) if support.is_empty() && !lambda.is_zero() => {
                    (Dominance::None, i.torsion)
                }
                (Dominance::None, Dominance::Dom { lambda, support }) if support.is_empty() && !lambda.is_zero() => {
                    (Dominance::None, o.torsion)
                }
                _ => (Dominance::Unknown, Tri::Unknown),
            }
        }
        Node::RuleTable { exceptions, tail_start, tail } => {
            let d = if tail.is_empty() {
                Some(dom(Scalar::zero(f), BTreeSet::new()))
            } else if tail.iter().all(|r| r.iter().all(|(_, c)| c.is_zero())) {
                Some(dom(Scalar::zero(f), BTreeSet::new()))
            } else {
                periodic_rules_dominance(tail)
            };
            let d = match d {
                Some(Dominance::Dom { lambda, .. }) => {
                    let s = (0..*tail_start).chain(exceptions.keys().copied()).collect();
                    dom(lambda, s)
                }
                Some(other) => other,
                None => Dominance::Unknown,
            };
            (d, Tri::Unknown)
        }
        Node::Lazy { .. } => (Dominance::Unknown, Tri::Unknown),
    };
    let torsion = if matches!(dominance, Dominance::Dom { .. }) { Tri::Yes } else { torsion };
    Analysis { dominance, torsion }
}

/// Strips added scalars: `u = base + offset·id`.
pub fn peel_scalar(u: &Operator) -> (Operator, Scalar) {
    let f = u.field();
    match u.node() {
        Node::Sum { left, right } => {
            if let Node::Scalar { value } = right.node() {
                let (b, o) = peel_scalar(left);
                return (b, &o + value);
            }
            if let Node::Scalar { value } = left.node() {
                let (b, o) = peel_scalar(right);
                return (b, &o + value);
            }
        }
        Node::Difference { left, right } => {
            if let Node::Scalar { value } = right.node() {
                let (b, o) = peel_scalar(left);
                return (b, &o - value);
            }
        }
        _ => {}
    }
    (u.clone(), Scalar::zero(f))
}

fn leaf_kind(u: &Operator) -> LeafKind {
    let (base, offset) = peel_scalar(u);
    match base.node() {
        Node::Shift => return LeafKind::Free { offset },
        Node::CompanionBlockSum { blocks } if blocks.iter().any(|p| p.degree() != Some(1)) => {
            return LeafKind::Companion { blocks: blocks.clone(), offset };
        }
        _ => {}
    }
    let a = analyze(u);
    match a.dominance {
        Dominance::Dom { lambda, support } if support.is_empty() => LeafKind::Eigen { lambda },
        Dominance::Dom { lambda, support } => LeafKind::DomPatch { lambda, support },
        Dominance::None if a.torsion == Tri::Yes => LeafKind::TorsionOther,
        _ => LeafKind::Other,
    }
}

/// Splits `u` along its direct-sum nodes. The leaves partition the basis.
pub fn anatomy(u: &Operator) -> Vec<Leaf> {
    let mut out = Vec::new();
    walk(u, &mut Vec::new(), &mut out);
    out
}

fn walk(u: &Operator, path: &mut Path, out: &mut Vec<Leaf>) {
    if let Node::DirectSum { left, right, layout } = u.node() {
        path.push((layout.clone(), Side::Left));
        match layout {
            Layout::Prefix { len } => {
                let kind = match left.leading_block(*len) {
                    Ok(matrix) => LeafKind::Finite { matrix },
                    Err(_) => LeafKind::Other,
                };
                out.push(Leaf { path: path.clone(), op: left.clone(), kind });
            }
            Layout::Interleave => walk(left, path, out),
        }
        path.pop();
        path.push((layout.clone(), Side::Right));
        walk(right, path, out);
        path.pop();
        return;
    }
    out.push(Leaf { path: path.clone(), op: u.clone(), kind: leaf_kind(u) });
}

/// The structural tags of `u`.
pub fn classify_structure(u: &Operator) -> OperatorClassTags {
    let a = analyze(u);
    let free_part_generators = anatomy(u)
        .iter()
        .filter(|l| l.is_free())
        .map(|l| embed_path(&l.path, 0))
        .collect();
    let (dominant_candidate, deviation_rank_finite, deviation_support) = match a.dominance {
        Dominance::Dom { lambda, support } => (Some(lambda), Tri::Yes, Some(support)),
        Dominance::None => (None, Tri::No, None),
        Dominance::Unknown => (None, Tri::Unknown, None),
    };
    OperatorClassTags {
        is_torsion: a.torsion,
        free_part_generators,
        dominant_candidate,
        deviation_rank_finite,
        deviation_support,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::FieldSpec;
    use crate::vector::VectorFin;
    use std::collections::BTreeMap;

    const Q: FieldSpec = FieldSpec::Rationals;

    #[test]
    fn shift_is_free_without_dominant() {
        let t = classify_structure(&Operator::shift(Q));
        assert_eq!(t.is_torsion, Tri::No);
        assert_eq!(t.free_part_generators, vec![0]);
        assert_eq!(t.dominant_candidate, None);
        assert_eq!(t.deviation_rank_finite, Tri::No);
    }

    #[test]
    fn scalar_patch_is_dominant() {
        let lam = Scalar::from_i64(Q, 3);
        let mut cols = BTreeMap::new();
        cols.insert(4, VectorFin::from_i64(Q, &[(0, 1), (4, 2)]));
        let u = Operator::patch(&Operator::scalar(&lam), cols).unwrap();
        let t = classify_structure(&u);
        assert_eq!(t.dominant_candidate, Some(lam));
        assert_eq!(t.deviation_rank_finite, Tri::Yes);
        assert_eq!(t.is_torsion, Tri::Yes);
        assert_eq!(t.deviation_support.unwrap().into_iter().collect::<Vec<_>>(), vec![4]);
    }

    #[test]
    fn companion_square_blocks_are_torsion_without_dominant() {
        let u = Operator::companion_blocks(Q, vec![Polynomial::from_i64(Q, &[0, 0, 1])]).unwrap();
        let t = classify_structure(&u);
        assert_eq!(t.is_torsion, Tri::Yes);
        assert_eq!(t.dominant_candidate, None);
        assert_eq!(t.deviation_rank_finite, Tri::No);
    }

    #[test]
    fn prefix_sum_anatomy() {
        let line = Operator::matrix(MatrixFin::zero(Q, 1, 1)).unwrap();
        let u = Operator::direct_sum(&line, &Operator::shift(Q), Layout::Prefix { len: 1 }).unwrap();
        let leaves = anatomy(&u);
        assert_eq!(leaves.len(), 2);
        assert!(matches!(leaves[0].kind, LeafKind::Finite { .. }));
        assert!(leaves[1].is_free());
        assert_eq!(classify_structure(&u).free_part_generators, vec![1]);
        assert_eq!(classify_structure(&u).is_torsion, Tri::No);
        assert_eq!(leaves[0].domain().members(), Some(vec![0]));
        assert_eq!(leaves[1].domain().next_member(0), Some(1));
    }

    #[test]
    fn paths_round_trip() {
        let path: Path = vec![(Layout::Interleave, Side::Right), (Layout::Prefix { len: 3 }, Side::Right)];
        for j in 0..20 {
            let n = embed_path(&path, j);
            assert_eq!(locate_path(&path, n), Some(j));
        }
        assert_eq!(locate_path(&path, 0), None);
    }

    #[test]
    fn interleaved_eigenvalues_differ() {
        let one = Operator::identity(Q);
        let zero = Operator::zero(Q);
        let u = Operator::direct_sum(&one, &zero, Layout::Interleave).unwrap();
        assert_eq!(analyze(&u).dominance, Dominance::None);
        let v = Operator::direct_sum(&one, &one, Layout::Interleave).unwrap();
        assert!(matches!(analyze(&v).dominance, Dominance::Dom { .. }));
    }
}
