//! Finitely supported vectors of `V = ⊕ F·e_n`.

use std::collections::BTreeMap;
use std::fmt;

use crate::error::Result;
use crate::field::{FieldSpec, Scalar};

/// Sparse vector; never stores a zero coefficient.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct VectorFin {
    field: FieldSpec,
    entries: BTreeMap<usize, Scalar>,
}

impl VectorFin {
    pub fn zero(field: FieldSpec) -> Self {
        VectorFin { field, entries: BTreeMap::new() }
    }

    /// The basis vector `e_n`.
    pub fn unit(field: FieldSpec, n: usize) -> Self {
        let mut v = VectorFin::zero(field);
        v.entries.insert(n, Scalar::one(field));
        v
    }

    pub fn from_entries<I: IntoIterator<Item = (usize, Scalar)>>(field: FieldSpec, it: I) -> Result<Self> {
        let mut v = VectorFin::zero(field);
        for (i, c) in it {
            field.check(c.field())?;
            v.add_at(i, &c);
        }
        Ok(v)
    }

    pub fn from_i64(field: FieldSpec, pairs: &[(usize, i64)]) -> Self {
        VectorFin::from_entries(field, pairs.iter().map(|&(i, c)| (i, Scalar::from_i64(field, c))))
            .unwrap()
    }

    pub fn field(&self) -> FieldSpec {
        self.field
    }

    pub fn is_zero(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn get(&self, i: usize) -> Scalar {
        self.entries.get(&i).cloned().unwrap_or_else(|| Scalar::zero(self.field))
    }

    pub fn coeff(&self, i: usize) -> Option<&Scalar> {
        self.entries.get(&i)
    }

    pub fn iter(&self) -> impl Iterator<Item = (usize, &Scalar)> {
        self.entries.iter().map(|(i, c)| (*i, c))
    }

    pub fn support(&self) -> impl Iterator<Item = usize> + '_ {
        self.entries.keys().copied()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Largest index with a non-zero coefficient.
    pub fn max_index(&self) -> Option<usize> {
        self.entries.keys().next_back().copied()
    }

    pub fn add_at(&mut self, i: usize, c: &Scalar) {
        if c.is_zero() {
            return;
        }
        let remove = match self.entries.get_mut(&i) {
            Some(x) => {
                x.add_assign(c);
                x.is_zero()
            }
            None => {
                self.entries.insert(i, c.clone());
                false
            }
        };
        if remove {
            self.entries.remove(&i);
        }
    }

    /// `self += c * other`
    pub fn axpy(&mut self, c: &Scalar, other: &VectorFin) {
        if c.is_zero() {
            return;
        }
        for (i, x) in other.iter() {
            self.add_at(i, &(c * x));
        }
    }

    pub fn scaled(&self, c: &Scalar) -> VectorFin {
        if c.is_zero() {
            return VectorFin::zero(self.field);
        }
        VectorFin {
            field: self.field,
            entries: self.entries.iter().map(|(i, x)| (*i, x * c)).collect(),
        }
    }

    pub fn add(&self, o: &VectorFin) -> VectorFin {
        let mut v = self.clone();
        v.axpy(&Scalar::one(self.field), o);
        v
    }

    pub fn sub(&self, o: &VectorFin) -> VectorFin {
        let mut v = self.clone();
        v.axpy(&-Scalar::one(self.field), o);
        v
    }

    /// Re-indexes the support through `map`.
    pub fn remap(&self, map: impl Fn(usize) -> usize) -> VectorFin {
        let mut v = VectorFin::zero(self.field);
        for (i, c) in self.iter() {
            v.add_at(map(i), c);
        }
        v
    }
}

impl fmt::Display for VectorFin {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.is_zero() {
            return write!(f, "0");
        }
        let parts: Vec<String> = self
            .iter()
            .map(|(i, c)| if c.is_one() { format!("e{i}") } else { format!("{c}·e{i}") })
            .collect();
        write!(f, "{}", parts.join(" + "))
    }
}

impl serde::Serialize for VectorFin {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        use serde::ser::SerializeSeq;
        let mut seq = s.serialize_seq(Some(self.len()))?;
        for (i, c) in self.iter() {
            seq.serialize_element(&(i, c))?;
        }
        seq.end()
    }
}

impl<'de> serde::Deserialize<'de> for VectorFin {
    /// A list of `[index, coefficient]` pairs; repeated indices add up.
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let pairs: Vec<(usize, Scalar)> = Vec::deserialize(d)?;
        let field = crate::field::context_field()
            .ok_or_else(|| serde::de::Error::custom("vector parsed outside a field context"))?;
        VectorFin::from_entries(field, pairs).map_err(serde::de::Error::custom)
    }
}
