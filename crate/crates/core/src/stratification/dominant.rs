use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::Scalar;
use crate::fmodule::cyclic_decomposition;
use crate::linalg::MatrixFin;
use crate::operator::{analyze, Dominance, IndexSet, Operator};
use crate::vector::VectorFin;

/// An eigenspace given as explicit vectors followed by the domain's basis
/// vectors minus an excluded finite set.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct HSpec {
    pub field: crate::field::FieldSpec,
    pub extra: Vec<VectorFin>,
    pub domain: IndexSet,
    pub exclude: BTreeSet<usize>,
}

impl HSpec {
    pub fn cursor(&self) -> HCursor<'_> {
        HCursor { spec: self, i: 0, next: 0, count: 0 }
    }

    pub fn is_finite(&self) -> bool {
        self.domain.is_finite()
    }

    /// Dimension when finite.
    pub fn count(&self) -> Option<usize> {
        let members = self.domain.members()?;
        Some(self.extra.len() + members.iter().filter(|n| !self.exclude.contains(n)).count())
    }

    /// The `i`-th basis vector of `H`.
    pub fn nth(&self, i: usize) -> Option<VectorFin> {
        self.cursor().nth(i)
    }
}

pub struct HCursor<'a> {
    spec: &'a HSpec,
    i: usize,
    next: usize,
    count: usize,
}

impl Iterator for HCursor<'_> {
    type Item = VectorFin;

    fn next(&mut self) -> Option<VectorFin> {
        if self.i < self.spec.extra.len() {
            self.i += 1;
            self.count += 1;
            return Some(self.spec.extra[self.i - 1].clone());
        }
        loop {
            let n = self.spec.domain.next_member(self.next)?;
            self.next = n + 1;
            if !self.spec.exclude.contains(&n) {
                self.count += 1;
                return Some(VectorFin::unit(self.spec.field, n));
            }
        }
    }
}

/// `V = (⊕ monogenous blocks of dimension ≥ 2) ⊕ H` with `u = μ` on `H`.
#[derive(Clone, Debug)]
pub struct DominantSplit {
    pub blocks: Vec<(VectorFin, usize)>,
    pub mu: Scalar,
    pub h: HSpec,
}

/// Splits an operator with a dominant eigenvalue.
pub fn split_dominant(u: &Operator) -> Result<DominantSplit> {
    match analyze(u).dominance {
        Dominance::Dom { lambda, support } => split_dominant_on(u, &IndexSet::All, &lambda, &support),
        Dominance::None => Err(Error::ConditionViolated("no dominant eigenvalue".into())),
        Dominance::Unknown => {
            Err(Error::PreconditionUnverifiable("a dominant eigenvalue is not visible in the operator structure".into()))
        }
    }
}

/// [`split_dominant`] for the restriction of `u` to the invariant `domain`,
/// where `u - λ` vanishes on the domain's `e_n` with `n ∉ support`.
pub fn split_dominant_on(
    u: &Operator,
    domain: &IndexSet,
    lambda: &Scalar,
    support: &BTreeSet<usize>,
) -> Result<DominantSplit> {
    let f = u.field();
    // an invariant finite block containing the image of u - λ
    let block: Vec<usize> = match domain.members() {
        Some(m) => m,
        None => {
            let mut t: BTreeSet<usize> = support.clone();
            for &s in support {
                let w = u.col(s)?.sub(&VectorFin::unit(f, s).scaled(lambda));
                t.extend(w.support());
            }
            t.into_iter().collect()
        }
    };
    let pos = |n: usize| block.binary_search(&n).ok();
    let mut a = MatrixFin::zero(f, block.len(), block.len());
    for (j, &n) in block.iter().enumerate() {
        for (r, c) in u.col(n)?.iter() {
            let i = pos(r).ok_or_else(|| {
                Error::PropertyViolated(format!("u(e_{n}) leaves the finite block at e_{r}; the deviation support is wrong"))
            })?;
            a.set(i, j, c.clone());
        }
    }
    let parts = if block.is_empty() { Vec::new() } else { cyclic_decomposition(&a)? };
    let ambient = |v: &VectorFin| v.remap(|i| block[i]);
    let mut blocks = Vec::new();
    let mut lines = Vec::new();
    let mut line_value = None;
    for p in &parts {
        if p.dim() == 1 {
            line_value = Some(-p.factor.coeff(0));
            lines.push(ambient(&p.generator));
        } else {
            blocks.push((ambient(&p.generator), p.dim()));
        }
    }
    if domain.is_finite() {
        let mu = line_value.unwrap_or_else(|| lambda.clone());
        let h = HSpec { field: f, extra: lines, domain: IndexSet::Paths { paths: vec![] }, exclude: BTreeSet::new() };
        return Ok(DominantSplit { blocks, mu, h });
    }
    let mut exclude: BTreeSet<usize> = block.iter().copied().collect();
    let extra = match line_value {
        Some(m) if &m != lambda => {
            // pair each stray line with a fresh λ-eigenvector into a block of dimension two
            let mut from = 0;
            for e in lines {
                let n = loop {
                    let n = domain.next_member(from).expect("infinite domain");
                    from = n + 1;
                    if !exclude.contains(&n) {
                        break n;
                    }
                };
                exclude.insert(n);
                blocks.push((e.add(&VectorFin::unit(f, n)), 2));
            }
            Vec::new()
        }
        _ => lines,
    };
    Ok(DominantSplit { blocks, mu: lambda.clone(), h: HSpec { field: f, extra, domain: domain.clone(), exclude } })
}
