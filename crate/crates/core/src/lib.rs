//! Exact decompositions of column-finite endomorphisms of a countable-dimensional
//! vector space into sums of three operators annihilated by given split
//! quadratics, with certificates checked on finite prefixes.

pub mod certificate;
pub mod elementary_split;
pub mod error;
pub mod family;
pub mod field;
pub mod finite_dim;
pub mod fmodule;
pub mod format;
pub mod linalg;
pub mod nontorsion;
pub mod operator;
pub mod pipeline;
pub mod poly;
pub mod scalar_sums;
pub mod stratification;
pub mod vector;
