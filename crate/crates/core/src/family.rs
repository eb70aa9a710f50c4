//! Operators defined by their values on a computed basis.
//!
//! A [`BasisFamily`] enumerates basis vectors `b_0, b_1, …` of the subspace
//! spanned by the `e_n` with `n` in its domain, together with prescribed
//! images of each `b_i`. The column `e_n` is evaluated by writing `e_n` in
//! the basis, pulling in new basis vectors until the expression closes, and
//! combining the images. Outside the domain the operator is zero.
//!
//! All state lives behind one mutex per family, shared by every component
//! handle built from it. The state only grows and every stored value is a
//! pure function of the family description, so caching is invisible.

use std::collections::HashMap;
use std::fmt;
use std::sync::{Arc, Mutex};

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};
use crate::field::FieldSpec;
use crate::linalg::Echelon;
use crate::operator::IndexSet;
use crate::vector::VectorFin;

/// Default cap on the number of basis vectors a single family may generate.
pub const DEFAULT_BASIS_BUDGET: usize = 250_000;

pub trait BasisFamily: Send {
    fn field(&self) -> FieldSpec;
    /// The `e_n` spanned by the basis; the operator vanishes on the others.
    fn domain(&self) -> IndexSet;
    fn components(&self) -> usize;
    /// The `i`-th basis vector, or `None` once a finite family is exhausted.
    /// Called with `i = 0, 1, 2, …` in order.
    fn basis_vector(&mut self, i: usize) -> Result<Option<VectorFin>>;
    /// Image of the `i`-th basis vector under `component`. Only called for
    /// `i` already produced by [`BasisFamily::basis_vector`].
    fn image(&mut self, component: usize, i: usize) -> Result<VectorFin>;
    /// Short human-readable name.
    fn label(&self) -> String;
}

struct State {
    family: Box<dyn BasisFamily>,
    domain: IndexSet,
    ech: Echelon,
    produced: usize,
    exhausted: bool,
    budget: usize,
    images: HashMap<(usize, usize), VectorFin>,
    columns: HashMap<(usize, usize), VectorFin>,
}

impl State {
    fn grow(&mut self) -> Result<bool> {
        if self.exhausted {
            return Ok(false);
        }
        if self.produced >= self.budget {
            return Err(Error::CapExceeded(format!(
                "{} needed more than {} basis vectors",
                self.family.label(),
                self.budget
            )));
        }
        match self.family.basis_vector(self.produced)? {
            None => {
                self.exhausted = true;
                Ok(false)
            }
            Some(b) => {
                let i = self.produced;
                if let Some(bad) = b.support().find(|&n| !self.domain.contains(n)) {
                    return Err(Error::PropertyViolated(format!(
                        "{}: basis vector {i} leaves the domain at e_{bad}",
                        self.family.label()
                    )));
                }
                self.ech.insert(&b, i).map_err(|_| {
                    Error::PropertyViolated(format!("{}: basis vector {i} is dependent on earlier ones", self.family.label()))
                })?;
                self.produced += 1;
                Ok(true)
            }
        }
    }

    /// Coordinates of `e_n` in the basis.
    fn coordinates(&mut self, n: usize) -> Result<VectorFin> {
        let f = self.family.field();
        let mut combo = VectorFin::zero(f);
        let mut rem = VectorFin::unit(f, n);
        loop {
            let r = self.ech.reduce(&rem);
            combo = combo.add(&r.combo);
            rem = r.remainder;
            if rem.is_zero() {
                return Ok(combo);
            }
            if !self.grow()? {
                return Err(Error::PropertyViolated(format!(
                    "{}: e_{n} lies outside the span of the basis",
                    self.family.label()
                )));
            }
        }
    }

    fn image(&mut self, component: usize, i: usize) -> Result<VectorFin> {
        if let Some(v) = self.images.get(&(component, i)) {
            return Ok(v.clone());
        }
        let v = self.family.image(component, i)?;
        self.images.insert((component, i), v.clone());
        Ok(v)
    }

    fn column(&mut self, component: usize, n: usize) -> Result<VectorFin> {
        let f = self.family.field();
        if !self.domain.contains(n) {
            return Ok(VectorFin::zero(f));
        }
        if let Some(v) = self.columns.get(&(component, n)) {
            return Ok(v.clone());
        }
        let coords = self.coordinates(n)?;
        let mut out = VectorFin::zero(f);
        for (i, c) in coords.iter() {
            let img = self.image(component, i)?;
            out.axpy(c, &img);
        }
        self.columns.insert((component, n), out.clone());
        Ok(out)
    }
}

/// One component of a lazily evaluated family.
#[derive(Clone)]
pub struct LazyHandle {
    spec: Arc<FamilySpec>,
    component: usize,
    field: FieldSpec,
    label: String,
    state: Arc<Mutex<State>>,
}

impl LazyHandle {
    /// Builds the family described by `spec` and returns one handle per
    /// component, all sharing the evaluation state.
    pub fn build_all(spec: FamilySpec) -> Result<Vec<LazyHandle>> {
        let family = spec.build()?;
        let field = family.field();
        let label = family.label();
        let k = family.components();
        let domain = family.domain();
        let state = State {
            domain,
            ech: Echelon::new(field),
            produced: 0,
            exhausted: false,
            budget: spec.budget(),
            images: HashMap::new(),
            columns: HashMap::new(),
            family,
        };
        let state = Arc::new(Mutex::new(state));
        let spec = Arc::new(spec);
        Ok((0..k)
            .map(|component| LazyHandle {
                spec: spec.clone(),
                component,
                field,
                label: if k == 1 { label.clone() } else { format!("{label}[{component}]") },
                state: state.clone(),
            })
            .collect())
    }

    pub fn build(spec: FamilySpec, component: usize) -> Result<LazyHandle> {
        let mut all = LazyHandle::build_all(spec)?;
        if component >= all.len() {
            return Err(Error::Input(format!("family has no component {component}")));
        }
        Ok(all.swap_remove(component))
    }

    pub fn field(&self) -> FieldSpec {
        self.field
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn spec(&self) -> &FamilySpec {
        &self.spec
    }

    pub fn component(&self) -> usize {
        self.component
    }

    pub fn column(&self, n: usize) -> Result<VectorFin> {
        let mut st = self.state.lock().unwrap_or_else(|p| p.into_inner());
        st.column(self.component, n)
    }

    /// Number of basis vectors generated so far.
    pub fn basis_len(&self) -> usize {
        self.state.lock().unwrap_or_else(|p| p.into_inner()).produced
    }
}

impl fmt::Debug for LazyHandle {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.label)
    }
}

#[derive(Serialize, Deserialize)]
struct HandleRepr {
    family: FamilySpec,
    component: usize,
}

impl Serialize for LazyHandle {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        #[derive(Serialize)]
        struct Ref<'a> {
            family: &'a FamilySpec,
            component: usize,
        }
        Ref { family: &self.spec, component: self.component }.serialize(s)
    }
}

impl<'de> Deserialize<'de> for LazyHandle {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let r = HandleRepr::deserialize(d)?;
        LazyHandle::build(r.family, r.component).map_err(serde::de::Error::custom)
    }
}

/// A finite basis with explicit images: the operator on `span(basis)` given
/// by `images[c][i]` for component `c`.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ExplicitSpec {
    pub domain: IndexSet,
    pub basis: Vec<VectorFin>,
    pub images: Vec<Vec<VectorFin>>,
}

struct ExplicitFamily {
    field: FieldSpec,
    spec: ExplicitSpec,
}

impl BasisFamily for ExplicitFamily {
    fn field(&self) -> FieldSpec {
        self.field
    }
    fn domain(&self) -> IndexSet {
        self.spec.domain.clone()
    }
    fn components(&self) -> usize {
        self.spec.images.len()
    }
    fn basis_vector(&mut self, i: usize) -> Result<Option<VectorFin>> {
        Ok(self.spec.basis.get(i).cloned())
    }
    fn image(&mut self, component: usize, i: usize) -> Result<VectorFin> {
        Ok(self.spec.images[component][i].clone())
    }
    fn label(&self) -> String {
        format!("explicit({} vectors)", self.spec.basis.len())
    }
}

/// Serializable description of every lazily evaluated family.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum FamilySpec {
    Explicit(ExplicitSpec),
    Connector(crate::stratification::ConnectorSpec),
    ChainSplit(crate::elementary_split::ChainSplitSpec),
    Assembly(crate::nontorsion::AssemblySpec),
    FiniteRank(crate::finite_dim::FiniteRankSpec),
}

impl FamilySpec {
    fn build(&self) -> Result<Box<dyn BasisFamily>> {
        match self {
            FamilySpec::Explicit(s) => {
                let field = s
                    .basis
                    .first()
                    .map(|b| b.field())
                    .or_else(crate::field::context_field)
                    .ok_or_else(|| Error::Input("explicit family needs a field".into()))?;
                if s.images.iter().any(|c| c.len() != s.basis.len()) {
                    return Err(Error::Input("explicit family: image count differs from basis size".into()));
                }
                Ok(Box::new(ExplicitFamily { field, spec: s.clone() }))
            }
            FamilySpec::Connector(s) => s.build(),
            FamilySpec::ChainSplit(s) => s.build(),
            FamilySpec::Assembly(s) => s.build(),
            FamilySpec::FiniteRank(s) => s.build(),
        }
    }

    fn budget(&self) -> usize {
        match self {
            FamilySpec::Explicit(s) => s.basis.len() + 1,
            FamilySpec::Connector(s) => s.budget,
            FamilySpec::ChainSplit(s) => s.budget,
            FamilySpec::Assembly(s) => s.budget,
            FamilySpec::FiniteRank(_) => DEFAULT_BASIS_BUDGET,
        }
    }
}
