//! Stratifications of torsion modules.
//!
//! A stratification is a totally ordered index set `D` with one generator
//! `x_α` and one dimension `n_α` per index, such that the Krylov blocks
//! `x_α, u x_α, …, u^{n_α-1} x_α` are independent modulo the earlier strata
//! and together span the module. Strata are produced lazily; the four
//! shapes are an explicit (eventually periodic) list, the greedy torsion
//! builder, the index-two layout on `ℕ²`, and a tower of two of these.

mod builder;
mod connector;
mod dominant;

pub use builder::{index2_sources, Index2Source};
pub use connector::{
    connector, connector_with_budget, verify_elementary, verify_elementary_on, ConnectorSpec, ElementaryCertificate,
    GenSpec, Generators,
};
pub use dominant::{split_dominant, split_dominant_on, DominantSplit, HCursor, HSpec};

use std::collections::HashMap;
use std::fmt;
use std::sync::{Arc, Mutex, OnceLock, Weak};

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};
use crate::field::Scalar;
use crate::operator::{analyze, anatomy, Dominance, IndexSet, Operator, Tri};
use crate::vector::VectorFin;

use builder::{Index2, TorsionBuilder};
pub(crate) use connector::ChainRounds;

/// Default scan budget of the torsion builder.
pub const DEFAULT_SCAN_BUDGET: usize = 4096;

/// Dimension of a stratum.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Dim {
    Finite(usize),
    Infinite,
}

impl Dim {
    pub fn is_one(&self) -> bool {
        *self == Dim::Finite(1)
    }
}

impl fmt::Display for Dim {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Dim::Finite(n) => write!(f, "{n}"),
            Dim::Infinite => write!(f, "∞"),
        }
    }
}

impl Serialize for Dim {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        match self {
            Dim::Finite(n) => s.serialize_u64(*n as u64),
            Dim::Infinite => s.serialize_str("inf"),
        }
    }
}

impl<'de> Deserialize<'de> for Dim {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Repr {
            N(u64),
            S(String),
        }
        match Repr::deserialize(d)? {
            Repr::N(n) => Ok(Dim::Finite(n as usize)),
            Repr::S(s) if s == "inf" => Ok(Dim::Infinite),
            Repr::S(s) => Err(serde::de::Error::custom(format!("bad stratum dimension {s:?}"))),
        }
    }
}

/// Position of a stratum in its ordered index set.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StratIndex {
    /// `ℕ` in its usual order.
    N(usize),
    /// `ℕ²` in lexicographic order.
    Lex(usize, usize),
    /// `0` for the lower part of a tower, `1` for the upper part.
    Tower(u8, Box<StratIndex>),
}

impl fmt::Display for StratIndex {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            StratIndex::N(n) => write!(f, "{n}"),
            StratIndex::Lex(k, l) => write!(f, "({k},{l})"),
            StratIndex::Tower(s, i) => write!(f, "{s}:{i}"),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Stratum {
    pub index: StratIndex,
    pub generator: VectorFin,
    pub dim: Dim,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExplicitStratum {
    pub generator: VectorFin,
    pub dim: Dim,
}

/// Strata repeated forever after the explicit list; repetition `k` shifts
/// every generator index by `k·shift`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PeriodicTail {
    pub strata: Vec<ExplicitStratum>,
    pub shift: usize,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct PropertyFlags {
    /// Every stratum with a predecessor has dimension at least two.
    pub pa: bool,
    /// `pa`, and the minimum (if any) has dimension at least two.
    pub pa_plus: bool,
    /// The index set has no maximum.
    pub pm: bool,
}

impl PropertyFlags {
    pub fn good(&self) -> bool {
        self.pa && self.pa_plus && self.pm
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(tag = "strat", rename_all = "snake_case")]
pub enum StratSpec {
    Explicit {
        op: Operator,
        domain: IndexSet,
        strata: Vec<ExplicitStratum>,
        #[serde(default)]
        tail: Option<PeriodicTail>,
    },
    /// The greedy builder for torsion operators without a dominant eigenvalue.
    Torsion {
        op: Operator,
        domain: IndexSet,
        budget: usize,
    },
    /// Lines at `(k,0)` and pairs everywhere else, for `(u - μ)² = 0`.
    Index2 {
        op: Operator,
        mu: Scalar,
        domain: IndexSet,
        sources: Vec<Index2Source>,
    },
    Tower {
        lower: Box<StratSpec>,
        upper: Box<StratSpec>,
    },
}

impl StratSpec {
    pub fn op(&self) -> &Operator {
        match self {
            StratSpec::Explicit { op, .. } | StratSpec::Torsion { op, .. } | StratSpec::Index2 { op, .. } => op,
            StratSpec::Tower { upper, .. } => upper.op(),
        }
    }
}

enum Kind {
    Explicit { strata: Vec<ExplicitStratum>, tail: Option<PeriodicTail> },
    Torsion(Mutex<TorsionBuilder>),
    Index2(Index2),
    Tower(Arc<Stratification>, Arc<Stratification>),
}

pub struct Stratification {
    spec: StratSpec,
    kind: Kind,
}

impl fmt::Debug for Stratification {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let name = match &self.kind {
            Kind::Explicit { .. } => "explicit",
            Kind::Torsion(_) => "torsion",
            Kind::Index2(_) => "index2",
            Kind::Tower(..) => "tower",
        };
        write!(f, "Stratification({name})")
    }
}

fn lock<T>(m: &Mutex<T>) -> std::sync::MutexGuard<'_, T> {
    m.lock().unwrap_or_else(|p| p.into_inner())
}

fn cache() -> &'static Mutex<HashMap<String, Weak<Stratification>>> {
    static CACHE: OnceLock<Mutex<HashMap<String, Weak<Stratification>>>> = OnceLock::new();
    CACHE.get_or_init(|| Mutex::new(HashMap::new()))
}

impl Stratification {
    pub fn build(spec: StratSpec) -> Result<Arc<Stratification>> {
        let kind = match &spec {
            StratSpec::Explicit { strata, tail, op, .. } => {
                for s in strata.iter().chain(tail.iter().flat_map(|t| t.strata.iter())) {
                    op.field().check(s.generator.field())?;
                }
                if tail.as_ref().is_some_and(|t| t.strata.is_empty()) {
                    return Err(Error::Input("periodic tail without strata".into()));
                }
                Kind::Explicit { strata: strata.clone(), tail: tail.clone() }
            }
            StratSpec::Torsion { op, domain, budget } => {
                Kind::Torsion(Mutex::new(TorsionBuilder::new(op.clone(), domain.clone(), *budget)))
            }
            StratSpec::Index2 { sources, op, .. } => Kind::Index2(Index2::new(op.field(), sources)?),
            StratSpec::Tower { lower, upper } => {
                let lower = Stratification::build_cached(lower)?;
                let upper = Stratification::build_cached(upper)?;
                if lower.count().is_none() {
                    return Err(Error::Input("the lower part of a tower must be finite".into()));
                }
                Kind::Tower(lower, upper)
            }
        };
        Ok(Arc::new(Stratification { spec, kind }))
    }

    /// Like [`Stratification::build`], sharing live instances with equal
    /// descriptions so that lazily built strata are computed once.
    pub fn build_cached(spec: &StratSpec) -> Result<Arc<Stratification>> {
        let key = serde_json::to_string(spec).map_err(|e| Error::Input(e.to_string()))?;
        if let Some(s) = lock(cache()).get(&key).and_then(Weak::upgrade) {
            return Ok(s);
        }
        let s = Stratification::build(spec.clone())?;
        let mut c = lock(cache());
        c.retain(|_, w| w.strong_count() > 0);
        c.insert(key, Arc::downgrade(&s));
        Ok(s)
    }

    pub fn explicit(op: &Operator, strata: Vec<ExplicitStratum>, tail: Option<PeriodicTail>) -> Result<Arc<Self>> {
        Stratification::build_cached(&StratSpec::Explicit { op: op.clone(), domain: IndexSet::All, strata, tail })
    }

    pub fn spec(&self) -> &StratSpec {
        &self.spec
    }

    pub fn op(&self) -> &Operator {
        self.spec.op()
    }

    pub fn domain(&self) -> IndexSet {
        match &self.spec {
            StratSpec::Explicit { domain, .. } | StratSpec::Torsion { domain, .. } | StratSpec::Index2 { domain, .. } => {
                domain.clone()
            }
            StratSpec::Tower { .. } => match &self.kind {
                Kind::Tower(_, upper) => upper.domain(),
                _ => unreachable!(),
            },
        }
    }

    /// Number of strata, or `None` when `D` is infinite.
    pub fn count(&self) -> Option<usize> {
        match &self.kind {
            Kind::Explicit { strata, tail } => tail.is_none().then_some(strata.len()),
            Kind::Torsion(b) => lock(b).finite_count(),
            Kind::Index2(_) => None,
            Kind::Tower(lo, up) => Some(lo.count()? + up.count()?),
        }
    }

    /// The `i`-th stratum in enumeration order. Every stratum appears
    /// exactly once; the enumeration order need not be the order of `D`.
    pub fn stratum(&self, i: usize) -> Result<Option<Stratum>> {
        match &self.kind {
            Kind::Explicit { strata, tail } => Ok(explicit_at(strata, tail, i)),
            Kind::Torsion(b) => lock(b).stratum(i),
            Kind::Index2(x) => x.at_position(i),
            Kind::Tower(lo, up) => {
                let c = lo.count().unwrap_or(0);
                if i < c {
                    Ok(lo.stratum(i)?.map(|s| wrap(0, s)))
                } else {
                    Ok(up.stratum(i - c)?.map(|s| wrap(1, s)))
                }
            }
        }
    }

    /// The stratum at a given index.
    pub fn get(&self, index: &StratIndex) -> Result<Option<Stratum>> {
        match (&self.kind, index) {
            (Kind::Explicit { .. } | Kind::Torsion(_), StratIndex::N(i)) => self.stratum(*i),
            (Kind::Index2(x), StratIndex::Lex(k, l)) => x.at(*k, *l).map(Some),
            (Kind::Tower(lo, _), StratIndex::Tower(0, i)) => Ok(lo.get(i)?.map(|s| wrap(0, s))),
            (Kind::Tower(_, up), StratIndex::Tower(1, i)) => Ok(up.get(i)?.map(|s| wrap(1, s))),
            _ => Err(Error::Input(format!("index {index} does not belong to this stratification"))),
        }
    }

    /// The minimum of `D`.
    pub fn first(&self) -> Result<Option<Stratum>> {
        match &self.kind {
            Kind::Index2(x) => x.at(0, 0).map(Some),
            Kind::Tower(lo, up) => match lo.first()? {
                Some(s) => Ok(Some(wrap(0, s))),
                None => Ok(up.first()?.map(|s| wrap(1, s))),
            },
            _ => self.stratum(0),
        }
    }

    /// The maximum of `D`, when `D` is finite and non-empty.
    pub fn last(&self) -> Result<Option<Stratum>> {
        match &self.kind {
            Kind::Tower(lo, up) => {
                if up.count() == Some(0) {
                    Ok(lo.last()?.map(|s| wrap(0, s)))
                } else {
                    Ok(up.last()?.map(|s| wrap(1, s)))
                }
            }
            _ => match self.count() {
                Some(c) if c > 0 => self.stratum(c - 1),
                _ => Ok(None),
            },
        }
    }

    /// The successor of `index` in `D`.
    pub fn successor(&self, index: &StratIndex) -> Result<Option<Stratum>> {
        match (&self.kind, index) {
            (Kind::Explicit { .. } | Kind::Torsion(_), StratIndex::N(i)) => self.stratum(i + 1),
            (Kind::Index2(x), StratIndex::Lex(k, l)) => x.at(*k, l + 1).map(Some),
            (Kind::Tower(lo, up), StratIndex::Tower(0, i)) => match lo.successor(i)? {
                Some(s) => Ok(Some(wrap(0, s))),
                None => Ok(up.first()?.map(|s| wrap(1, s))),
            },
            (Kind::Tower(_, up), StratIndex::Tower(1, i)) => Ok(up.successor(i)?.map(|s| wrap(1, s))),
            _ => Err(Error::Input(format!("index {index} does not belong to this stratification"))),
        }
    }

    /// The dimension of the immediate predecessor, if `index` has one.
    pub fn predecessor_dim(&self, index: &StratIndex) -> Result<Option<Dim>> {
        match (&self.kind, index) {
            (Kind::Explicit { .. } | Kind::Torsion(_), StratIndex::N(i)) => {
                if *i == 0 {
                    return Ok(None);
                }
                Ok(self.stratum(i - 1)?.map(|s| s.dim))
            }
            (Kind::Index2(x), StratIndex::Lex(k, l)) => {
                if *l == 0 {
                    return Ok(None);
                }
                Ok(Some(x.at(*k, l - 1)?.dim))
            }
            (Kind::Tower(lo, _), StratIndex::Tower(0, i)) => lo.predecessor_dim(i),
            (Kind::Tower(lo, up), StratIndex::Tower(1, i)) => {
                if let Some(d) = up.predecessor_dim(i)? {
                    return Ok(Some(d));
                }
                let is_min = up.first()?.is_some_and(|s| s.index == **i);
                if is_min {
                    Ok(lo.last()?.map(|s| s.dim))
                } else {
                    Ok(None)
                }
            }
            _ => Err(Error::Input(format!("index {index} does not belong to this stratification"))),
        }
    }

    pub fn has_predecessor(&self, index: &StratIndex) -> Result<bool> {
        Ok(self.predecessor_dim(index)?.is_some())
    }

    /// The `j`-th stratum not reached by the connector from a predecessor:
    /// no predecessor, or an infinite-dimensional one. These generators
    /// generate `u - v` freely.
    pub fn root(&self, j: usize) -> Result<Option<Stratum>> {
        match &self.kind {
            Kind::Explicit { strata, tail } => Ok(explicit_root(strata, tail, j)),
            Kind::Torsion(_) => {
                if j == 0 {
                    self.stratum(0)
                } else {
                    Ok(None)
                }
            }
            Kind::Index2(x) => x.at(j, 0).map(Some),
            Kind::Tower(lo, up) => {
                let c = lo.count().unwrap_or(0);
                let mut lower_roots = Vec::new();
                for i in 0..c {
                    let s = lo.stratum(i)?.expect("finite lower part");
                    if !lo.predecessor_dim(&s.index)?.is_some_and(|d| d != Dim::Infinite) {
                        lower_roots.push(s);
                    }
                }
                if j < lower_roots.len() {
                    return Ok(Some(wrap(0, lower_roots.swap_remove(j))));
                }
                let mut k = j - lower_roots.len();
                let mut r = 0;
                loop {
                    let Some(s) = up.root(r)? else { return Ok(None) };
                    r += 1;
                    let w = wrap(1, s);
                    if self.predecessor_dim(&w.index)?.is_some_and(|d| d != Dim::Infinite) {
                        continue;
                    }
                    if k == 0 {
                        return Ok(Some(w));
                    }
                    k -= 1;
                }
            }
        }
    }
}

fn wrap(side: u8, s: Stratum) -> Stratum {
    Stratum { index: StratIndex::Tower(side, Box::new(s.index)), ..s }
}

fn explicit_at(strata: &[ExplicitStratum], tail: &Option<PeriodicTail>, i: usize) -> Option<Stratum> {
    let to = |s: &ExplicitStratum, shift: usize| Stratum {
        index: StratIndex::N(i),
        generator: s.generator.remap(|k| k + shift),
        dim: s.dim,
    };
    if i < strata.len() {
        return Some(to(&strata[i], 0));
    }
    let t = tail.as_ref()?;
    let r = i - strata.len();
    let (k, m) = (r / t.strata.len(), r % t.strata.len());
    Some(to(&t.strata[m], k * t.shift))
}

fn explicit_root(strata: &[ExplicitStratum], tail: &Option<PeriodicTail>, j: usize) -> Option<Stratum> {
    let is_root = |i: usize| i == 0 || explicit_at(strata, tail, i - 1).is_some_and(|s| s.dim == Dim::Infinite);
    let tlen = tail.as_ref().map_or(0, |t| t.strata.len());
    let head = strata.len() + tlen;
    let roots: Vec<usize> = (0..head).filter(|&i| is_root(i)).collect();
    if j < roots.len() {
        return explicit_at(strata, tail, roots[j]);
    }
    // every later period repeats the roots of the first full one
    let periodic: Vec<usize> = (head..head + tlen).filter(|&i| is_root(i)).collect();
    if periodic.is_empty() {
        return None;
    }
    let r = j - roots.len();
    let (k, m) = (r / periodic.len(), r % periodic.len());
    explicit_at(strata, tail, periodic[m] + k * tlen)
}

/// Flags read off the index structure and the dimensions of a window of
/// strata. Strata that cannot be computed make `pa` false.
pub fn check_properties(s: &Stratification) -> PropertyFlags {
    let window = match (&s.kind, s.count()) {
        (_, Some(c)) => c,
        (Kind::Explicit { strata, tail }, None) => strata.len() + 2 * tail.as_ref().map_or(0, |t| t.strata.len()),
        _ => 64,
    };
    let mut pa = true;
    for i in 0..window {
        match s.stratum(i) {
            Ok(Some(st)) => {
                if st.dim == Dim::Finite(0) {
                    pa = false;
                }
                match s.has_predecessor(&st.index) {
                    Ok(true) if st.dim.is_one() => pa = false,
                    Ok(_) => {}
                    Err(_) => pa = false,
                }
            }
            Ok(None) => break,
            Err(_) => {
                pa = false;
                break;
            }
        }
    }
    let first_ok = matches!(s.first(), Ok(Some(st)) if !st.dim.is_one());
    let empty = matches!(s.first(), Ok(None));
    PropertyFlags { pa, pa_plus: pa && (first_ok || empty), pm: s.count().is_none() }
}

/// The index-two stratification of `u` with `(u - λ)² = 0`, read from the
/// direct-sum anatomy of `u`.
pub fn good_strat_index2(u: &Operator, lambda: &Scalar) -> Result<Arc<Stratification>> {
    let leaves = anatomy(u);
    let (mu, sources) = index2_sources(&leaves)?.ok_or_else(|| {
        Error::PreconditionUnverifiable(
            "(u-λ)²=0 with infinitely many index-two pairs is not visible in the operator structure".into(),
        )
    })?;
    if &mu != lambda {
        return Err(Error::ConditionViolated(format!("(u-{lambda})² ≠ 0: the structure has eigenvalue {mu}")));
    }
    let spec = StratSpec::Index2 { op: u.clone(), mu, domain: IndexSet::All, sources };
    Stratification::build_cached(&spec)
}

/// A good stratification of a torsion operator with no dominant eigenvalue.
pub fn torsion_good_strat(u: &Operator, budget: usize) -> Result<Arc<Stratification>> {
    let a = analyze(u);
    match (&a.dominance, a.torsion) {
        (Dominance::Dom { lambda, .. }, _) => {
            return Err(Error::ConditionViolated(format!("u has the dominant eigenvalue {lambda}")))
        }
        (_, Tri::No) => return Err(Error::ConditionViolated("u is not torsion".into())),
        (Dominance::Unknown, _) | (_, Tri::Unknown) => {
            return Err(Error::PreconditionUnverifiable(
                "torsion without a dominant eigenvalue cannot be read from the operator structure".into(),
            ))
        }
        _ => {}
    }
    torsion_strat_on(u, &anatomy(u), IndexSet::All, budget)
}

/// Good stratification of `u` restricted to the union of `leaves`.
pub(crate) fn torsion_strat_on(
    u: &Operator,
    leaves: &[crate::operator::Leaf],
    domain: IndexSet,
    budget: usize,
) -> Result<Arc<Stratification>> {
    let spec = match index2_sources(leaves)? {
        Some((mu, sources)) => StratSpec::Index2 { op: u.clone(), mu, domain, sources },
        None => StratSpec::Torsion { op: u.clone(), domain, budget },
    };
    let s = Stratification::build_cached(&spec)?;
    // surface builder failures early
    for i in 0..4 {
        if s.stratum(i)?.is_none() {
            break;
        }
    }
    Ok(s)
}

/// Stacks `upper`, a stratification of the quotient by the span of
/// `lower`, above the finite stratification `lower`.
pub fn tower_compose(lower: &Stratification, upper: &Stratification) -> Result<Arc<Stratification>> {
    lower.op().field().check(upper.op().field())?;
    if lower.first()?.is_none() {
        return Err(Error::Input("the lower part of a tower must be non-empty".into()));
    }
    if upper.count().is_some() {
        return Err(Error::PreconditionUnverifiable("the upper part of a tower has a maximum".into()));
    }
    Stratification::build_cached(&StratSpec::Tower {
        lower: Box::new(lower.spec().clone()),
        upper: Box::new(upper.spec().clone()),
    })
}

#[cfg(test)]
mod tests;
