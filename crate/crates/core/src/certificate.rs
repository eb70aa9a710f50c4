//! Three-sum certificates and their exact prefix checks.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::field::{FieldSpec, Scalar};
use crate::linalg::MatrixFin;
use crate::operator::{eval_poly, Operator, Report};
use crate::poly::QuadraticTarget;
use crate::stratification::{GenSpec, PropertyFlags, StratSpec};
use crate::vector::VectorFin;

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "route", content = "reason")]
pub enum Route {
    Scalar,
    FiniteRank,
    #[serde(rename = "NoDominant_Torsion")]
    NoDominantTorsion,
    #[serde(rename = "NoDominant_NonTorsion")]
    NoDominantNonTorsion,
    Refused(String),
    Unresolved(String),
}

impl Route {
    pub fn name(&self) -> &'static str {
        match self {
            Route::Scalar => "Scalar",
            Route::FiniteRank => "FiniteRank",
            Route::NoDominantTorsion => "NoDominant_Torsion",
            Route::NoDominantNonTorsion => "NoDominant_NonTorsion",
            Route::Refused(_) => "Refused",
            Route::Unresolved(_) => "Unresolved",
        }
    }

    pub fn is_decomposable(&self) -> bool {
        !matches!(self, Route::Refused(_) | Route::Unresolved(_))
    }
}

impl fmt::Display for Route {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Route::Refused(r) | Route::Unresolved(r) => write!(f, "{}({r})", self.name()),
            _ => write!(f, "{}", self.name()),
        }
    }
}

/// Intermediate objects that justify a certificate and can be re-checked.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(tag = "evidence", rename_all = "snake_case")]
pub enum Evidence {
    ScalarWitness {
        parts: [Scalar; 3],
    },
    TwoByTwo {
        a: MatrixFin,
        b: MatrixFin,
        c: MatrixFin,
    },
    /// `operator` is elementary with the given free generators.
    Elementary {
        operator: Operator,
        generators: GenSpec,
    },
    Stratification {
        strat: StratSpec,
        flags: PropertyFlags,
    },
    /// `(A + λI_n) ⊕ λI_q` written as a sum of the three matrices.
    MatrixWitness {
        lambda: Scalar,
        representative: MatrixFin,
        q: usize,
        matrices: [MatrixFin; 3],
    },
    /// Coefficients of a linear combination of idempotents.
    Combination {
        coefficients: [Scalar; 3],
    },
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ThreeSumCertificate {
    pub summands: [Operator; 3],
    pub targets: [QuadraticTarget; 3],
    pub verified_prefix: usize,
    pub route: Route,
    pub evidence: Vec<Evidence>,
}

impl ThreeSumCertificate {
    pub fn field(&self) -> FieldSpec {
        self.summands[0].field()
    }
}

/// Checks `u = v₁ + v₂ + v₃` and `p_i(v_i) = 0` on `e_0, …, e_{prefix-1}`.
pub fn verify_sum(u: &Operator, summands: &[Operator; 3], targets: &[QuadraticTarget; 3], prefix: usize) -> Report {
    let f = u.field();
    for n in 0..prefix {
        let e = VectorFin::unit(f, n);
        let step = || -> crate::error::Result<Option<String>> {
            let mut s = VectorFin::zero(f);
            for v in summands {
                s = s.add(&v.col(n)?);
            }
            let un = u.col(n)?;
            if s != un {
                return Ok(Some(format!("sum of summands differs from u: {s} vs {un}")));
            }
            for (i, (v, t)) in summands.iter().zip(targets).enumerate() {
                let r = eval_poly(t.monic(), v, &e)?;
                if !r.is_zero() {
                    return Ok(Some(format!("p{}(v{}) e_{n} = {r}", i + 1, i + 1)));
                }
            }
            Ok(None)
        };
        match step() {
            Ok(None) => {}
            Ok(Some(msg)) => return Report::fail(n, n, msg),
            Err(e) => return Report::fail(n, n, e.to_string()),
        }
    }
    Report::pass(prefix)
}
