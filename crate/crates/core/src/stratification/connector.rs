use std::collections::VecDeque;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::{check_properties, Dim, StratSpec, Stratification, Stratum};
use crate::error::{Error, Result};
use crate::family::{BasisFamily, FamilySpec, LazyHandle, DEFAULT_BASIS_BUDGET};
use crate::field::{FieldSpec, Scalar};
use crate::linalg::Echelon;
use crate::operator::{IndexSet, Operator};
use crate::vector::VectorFin;

/// The connector `v` of a stratification: on the chain basis
/// `u^j x_α` it sends the last vector `u^{n_α-1} x_α` to
/// `a·u^{n_α-1} x_α - x_{α⁺}` and every other chain vector to zero.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ConnectorSpec {
    pub strat: StratSpec,
    pub a: Scalar,
    pub budget: usize,
}

struct Entry {
    stratum: Stratum,
    j: usize,
    vector: VectorFin,
}

/// Chain vectors of a stratification, finite chains whole and infinite
/// chains one vector per round.
pub(crate) struct ChainEnumerator {
    strat: Arc<Stratification>,
    next_stratum: usize,
    strata_done: bool,
    pending: VecDeque<Entry>,
    infinite: Vec<(Stratum, usize, VectorFin)>,
}

impl ChainEnumerator {
    fn new(strat: Arc<Stratification>) -> Self {
        ChainEnumerator { strat, next_stratum: 0, strata_done: false, pending: VecDeque::new(), infinite: Vec::new() }
    }

    fn refill(&mut self) -> Result<bool> {
        let op = self.strat.op().clone();
        if !self.strata_done {
            match self.strat.stratum(self.next_stratum)? {
                Some(s) => {
                    self.next_stratum += 1;
                    match s.dim {
                        Dim::Finite(n) => {
                            let mut v = s.generator.clone();
                            for j in 0..n {
                                let next = if j + 1 < n { Some(op.apply(&v)?) } else { None };
                                self.pending.push_back(Entry { stratum: s.clone(), j, vector: v });
                                match next {
                                    Some(w) => v = w,
                                    None => break,
                                }
                            }
                        }
                        Dim::Infinite => {
                            let g = s.generator.clone();
                            self.infinite.push((s, 0, g));
                        }
                    }
                }
                None => self.strata_done = true,
            }
        }
        for (s, j, v) in &mut self.infinite {
            let w = op.apply(v)?;
            self.pending.push_back(Entry { stratum: s.clone(), j: *j, vector: std::mem::replace(v, w) });
            *j += 1;
        }
        Ok(!self.pending.is_empty())
    }

    fn next(&mut self) -> Result<Option<Entry>> {
        while self.pending.is_empty() {
            if !self.refill()? && self.strata_done && self.infinite.is_empty() {
                return Ok(None);
            }
        }
        Ok(self.pending.pop_front())
    }
}

struct ConnectorFamily {
    field: FieldSpec,
    a: Scalar,
    chains: ChainEnumerator,
    entries: Vec<Entry>,
}

impl BasisFamily for ConnectorFamily {
    fn field(&self) -> FieldSpec {
        self.field
    }
    fn domain(&self) -> IndexSet {
        self.chains.strat.domain()
    }
    fn components(&self) -> usize {
        1
    }
    fn basis_vector(&mut self, i: usize) -> Result<Option<VectorFin>> {
        debug_assert_eq!(i, self.entries.len());
        match self.chains.next()? {
            Some(e) => {
                let v = e.vector.clone();
                self.entries.push(e);
                Ok(Some(v))
            }
            None => Ok(None),
        }
    }
    fn image(&mut self, _component: usize, i: usize) -> Result<VectorFin> {
        let e = &self.entries[i];
        if e.stratum.dim != Dim::Finite(e.j + 1) {
            return Ok(VectorFin::zero(self.field));
        }
        let succ = self.chains.strat.successor(&e.stratum.index)?.ok_or_else(|| {
            Error::PropertyViolated(format!("stratum {} is the maximum; the connector needs a successor", e.stratum.index))
        })?;
        Ok(e.vector.scaled(&self.a).sub(&succ.generator))
    }
    fn label(&self) -> String {
        format!("connector(a={})", self.a)
    }
}

impl ConnectorSpec {
    pub(crate) fn build(&self) -> Result<Box<dyn BasisFamily>> {
        let strat = Stratification::build_cached(&self.strat)?;
        let field = strat.op().field();
        field.check(self.a.field())?;
        Ok(Box::new(ConnectorFamily { field, a: self.a.clone(), chains: ChainEnumerator::new(strat), entries: Vec::new() }))
    }
}

/// The connector with `v² = a·v`. Needs property A, and no maximum unless
/// every stratum is infinite (then no chain ends and `v = 0`).
pub fn connector(s: &Stratification, a: &Scalar) -> Result<Operator> {
    connector_with_budget(s, a, DEFAULT_BASIS_BUDGET)
}

fn all_infinite(s: &Stratification) -> Result<bool> {
    let Some(c) = s.count() else { return Ok(false) };
    for i in 0..c {
        if s.stratum(i)?.is_some_and(|st| st.dim != Dim::Infinite) {
            return Ok(false);
        }
    }
    Ok(true)
}

pub fn connector_with_budget(s: &Stratification, a: &Scalar, budget: usize) -> Result<Operator> {
    let flags = check_properties(s);
    if !flags.pa {
        return Err(Error::PropertyViolated("property A fails: a stratum with a predecessor has dimension 1".into()));
    }
    if !flags.pm && !all_infinite(s)? {
        return Err(Error::PropertyViolated("the index set has a maximum".into()));
    }
    let spec = ConnectorSpec { strat: s.spec().clone(), a: a.clone(), budget };
    Ok(Operator::lazy(LazyHandle::build(FamilySpec::Connector(spec), 0)?))
}

/// Free generators of an elementary operator.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(tag = "gens", rename_all = "snake_case")]
pub enum GenSpec {
    List { vectors: Vec<VectorFin> },
    /// `extra` followed by the root strata of `strat`.
    Roots { strat: StratSpec, extra: Vec<VectorFin> },
}

/// A resolved [`GenSpec`].
pub struct Generators {
    list: Vec<VectorFin>,
    strat: Option<Arc<Stratification>>,
}

impl GenSpec {
    pub fn resolve(&self) -> Result<Generators> {
        Ok(match self {
            GenSpec::List { vectors } => Generators { list: vectors.clone(), strat: None },
            GenSpec::Roots { strat, extra } => {
                Generators { list: extra.clone(), strat: Some(Stratification::build_cached(strat)?) }
            }
        })
    }
}

impl Generators {
    pub fn get(&self, i: usize) -> Result<Option<VectorFin>> {
        if let Some(v) = self.list.get(i) {
            return Ok(Some(v.clone()));
        }
        match &self.strat {
            Some(s) => Ok(s.root(i - self.list.len())?.map(|r| r.generator)),
            None => Ok(None),
        }
    }

    pub fn is_finite(&self) -> bool {
        self.strat.is_none()
    }
}

/// Round-robin enumeration of the chains `E^k g_i`, one new generator per
/// round. Index-two stratifications have infinitely many roots whose chains
/// each cover only about the square root of the prefix, so roots have to
/// start early.
pub(crate) struct ChainRounds {
    op: Operator,
    gens: Generators,
    next_gen: usize,
    gens_done: bool,
    round: usize,
    active: Vec<(usize, usize, VectorFin)>,
    queue: VecDeque<(usize, usize, VectorFin)>,
}

impl ChainRounds {
    pub(crate) fn new(op: Operator, gens: Generators) -> Self {
        ChainRounds {
            op,
            gens,
            next_gen: 0,
            gens_done: false,
            round: 0,
            active: Vec::new(),
            queue: VecDeque::new(),
        }
    }

    pub(crate) fn generators_started(&self) -> usize {
        self.next_gen
    }

    /// Next chain vector `(generator, power, vector)`.
    pub(crate) fn next(&mut self) -> Result<Option<(usize, usize, VectorFin)>> {
        while self.queue.is_empty() {
            if !self.gens_done && (self.active.is_empty() || self.round >= self.next_gen) {
                match self.gens.get(self.next_gen)? {
                    Some(g) => {
                        self.active.push((self.next_gen, 0, g));
                        self.next_gen += 1;
                    }
                    None => self.gens_done = true,
                }
            }
            if self.active.is_empty() {
                return Ok(None);
            }
            for (g, k, v) in &mut self.active {
                let w = self.op.apply(v)?;
                self.queue.push_back((*g, *k, std::mem::replace(v, w)));
                *k += 1;
            }
            self.round += 1;
        }
        Ok(self.queue.pop_front())
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ElementaryCertificate {
    pub verified_prefix: usize,
    pub generators_used: usize,
    pub vectors_used: usize,
}

/// Checks on a prefix that `u` is elementary with the given generators:
/// the chain vectors `u^k g_i` stay independent and span every `e_n`,
/// `n < prefix`.
pub fn verify_elementary(u: &Operator, gens: &GenSpec, prefix: usize) -> Result<ElementaryCertificate> {
    verify_elementary_on(u, gens, &IndexSet::All, prefix)
}

/// Like [`verify_elementary`] for the restriction of `u` to `domain`.
pub fn verify_elementary_on(
    u: &Operator,
    gens: &GenSpec,
    domain: &IndexSet,
    prefix: usize,
) -> Result<ElementaryCertificate> {
    let f = u.field();
    let budget = 64 * prefix + 1024;
    let mut rounds = ChainRounds::new(u.clone(), gens.resolve()?);
    let mut ech = Echelon::new(f);
    let mut front = 0;
    let mut used = 0;
    loop {
        while front < prefix && (!domain.contains(front) || ech.contains(&VectorFin::unit(f, front))) {
            front += 1;
        }
        if front >= prefix {
            return Ok(ElementaryCertificate {
                verified_prefix: prefix,
                generators_used: rounds.generators_started(),
                vectors_used: used,
            });
        }
        if used >= budget {
            return Err(Error::SpanGapOnPrefix(front));
        }
        let Some((g, k, v)) = rounds.next()? else { return Err(Error::SpanGapOnPrefix(front)) };
        if let Some(bad) = v.support().find(|&n| !domain.contains(n)) {
            return Err(Error::NotFreeOnPrefix(format!("u^{k} g_{g} leaves the domain at e_{bad}")));
        }
        if ech.insert(&v, used).is_err() {
            return Err(Error::NotFreeOnPrefix(format!("u^{k} g_{g} depends on earlier chain vectors")));
        }
        used += 1;
    }
}
