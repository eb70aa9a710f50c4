//! Classification, three-summand decomposition, linear combinations of
//! idempotents, and the certificate verifier.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::certificate::{verify_sum, Evidence, Route, ThreeSumCertificate};
use crate::elementary_split::split_shifted;
use crate::error::{Error, Result};
use crate::field::{FieldSpec, Scalar};
use crate::finite_dim::{
    finite_rank_assemble, finite_rank_class, finite_rank_decompose, lambda_stable_search, StableWitness,
    DEFAULT_Q_MAX,
};
use crate::linalg::{Echelon, MatrixFin};
use crate::nontorsion::a_elementary_nontorsion;
use crate::operator::{analyze, op_scale, Dominance, Operator, Report, Tri};
use crate::poly::{canonical_shift, QuadraticTarget};
use crate::scalar_sums::{scalar_identity_decomposition, scalar_is_sum, trace_condition};
use crate::stratification::{
    check_properties, connector, torsion_good_strat, verify_elementary, GenSpec, Stratification, DEFAULT_SCAN_BUDGET,
};
use crate::vector::VectorFin;

pub const DEFAULT_PREFIX: usize = 256;

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DeviationRank {
    Finite(usize),
    Infinite,
    Unknown,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClassificationReport {
    pub dominant: Option<Scalar>,
    pub deviation_rank: DeviationRank,
    pub torsion: Tri,
    pub route: Route,
}

impl fmt::Display for ClassificationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let dom = self.dominant.as_ref().map_or_else(|| "none".to_string(), |l| l.to_string());
        let rank = match &self.deviation_rank {
            DeviationRank::Finite(n) => n.to_string(),
            DeviationRank::Infinite => "infinite".into(),
            DeviationRank::Unknown => "unknown".into(),
        };
        write!(f, "dominant={dom} deviation_rank={rank} torsion={:?} route={}", self.torsion, self.route)
    }
}

fn all_targets(targets: &[QuadraticTarget; 3], t: &QuadraticTarget) -> bool {
    targets.iter().all(|x| x.monic() == t.monic())
}

/// Why a dominant eigenvalue fails the scalar necessity condition.
fn scalar_refusal(lambda: &Scalar, targets: &[QuadraticTarget; 3]) -> String {
    let f = lambda.field();
    if all_targets(targets, &QuadraticTarget::square_zero(f)) {
        "non-zero dominant eigenvalue".into()
    } else if f.characteristic() == 2 && all_targets(targets, &QuadraticTarget::idempotent(f)) {
        "dominant eigenvalue outside of {0,1}".into()
    } else {
        format!("dominant eigenvalue {lambda} is not a (p1,p2,p3)-sum and 2λ=tr p1+tr p2+tr p3 fails")
    }
}

fn trace_refusal(lambda: &Scalar, targets: &[QuadraticTarget; 3]) -> String {
    let f = lambda.field();
    if all_targets(targets, &QuadraticTarget::square_zero(f)) {
        if f.characteristic() == 2 {
            "finite-rank deviation with trace different from 0 and λ".into()
        } else {
            "finite rank and non-zero trace".into()
        }
    } else {
        "the trace of the finite-rank deviation is incompatible with the targets".into()
    }
}

fn check_targets(u: &Operator, targets: &[QuadraticTarget; 3]) -> Result<()> {
    for t in targets {
        u.field().check(t.field())?;
    }
    Ok(())
}

/// Routes `u` according to its structure and the target conditions.
pub fn classify(u: &Operator, targets: &[QuadraticTarget; 3]) -> ClassificationReport {
    let a = analyze(u);
    let mut report =
        ClassificationReport { dominant: None, deviation_rank: DeviationRank::Unknown, torsion: a.torsion, route: Route::Scalar };
    if let Err(e) = check_targets(u, targets) {
        report.route = Route::Unresolved(e.to_string());
        return report;
    }
    match a.dominance {
        Dominance::Unknown => {
            report.route = Route::Unresolved("dominant eigenvalue not decidable from the operator structure".into());
        }
        Dominance::None => {
            report.deviation_rank = DeviationRank::Infinite;
            report.route = match a.torsion {
                Tri::Yes => Route::NoDominantTorsion,
                Tri::No => Route::NoDominantNonTorsion,
                Tri::Unknown => Route::Unresolved("torsion not decidable from the operator structure".into()),
            };
        }
        Dominance::Dom { lambda, .. } => {
            report.dominant = Some(lambda.clone());
            let admissible = matches!(scalar_is_sum(&lambda, targets), Ok(Some(_)))
                || trace_condition(&lambda, targets).unwrap_or(false);
            let class = finite_rank_class(u);
            if let Ok((_, c)) = &class {
                report.deviation_rank = DeviationRank::Finite(c.representative.rank());
            }
            report.route = if !admissible {
                Route::Refused(scalar_refusal(&lambda, targets))
            } else {
                match class {
                    Err(e) => Route::Unresolved(e.to_string()),
                    Ok((_, c)) if c.n_of_w == 0 => Route::Scalar,
                    Ok((_, c)) => match crate::finite_dim::trace_obstruction(&c.representative, &lambda, targets) {
                        true => Route::Refused(trace_refusal(&lambda, targets)),
                        false => Route::FiniteRank,
                    },
                }
            };
        }
    }
    report
}

/// Outcome of a decomposition attempt.
#[derive(Clone, Debug)]
pub enum Decomposition {
    Verified(Box<ThreeSumCertificate>),
    Refused(String),
    Unresolved(String),
}

impl Decomposition {
    pub fn certificate(&self) -> Option<&ThreeSumCertificate> {
        match self {
            Decomposition::Verified(c) => Some(c),
            _ => None,
        }
    }

    fn from_error(e: Error) -> Self {
        match e {
            Error::ConditionViolated(r) => Decomposition::Refused(r),
            e => Decomposition::Unresolved(e.to_string()),
        }
    }
}

/// `v₁` with `v₁² = a·v₁` and `u' - v₁` elementary, with its generators.
fn a_elementary(
    u: &Operator,
    a: &Scalar,
    torsion: bool,
    budget: usize,
    evidence: &mut Vec<Evidence>,
) -> Result<(Operator, GenSpec)> {
    if torsion {
        let strat = torsion_good_strat(u, budget)?;
        let flags = check_properties(&strat);
        evidence.push(Evidence::Stratification { strat: strat.spec().clone(), flags });
        let v = connector(&strat, a)?;
        Ok((v, GenSpec::Roots { strat: strat.spec().clone(), extra: Vec::new() }))
    } else {
        let ae = a_elementary_nontorsion(u, a)?;
        if let GenSpec::Roots { strat, .. } = &ae.gens {
            let s = Stratification::build_cached(strat)?;
            evidence.push(Evidence::Stratification { strat: strat.clone(), flags: check_properties(&s) });
        }
        Ok((ae.v, ae.gens))
    }
}

fn no_dominant(
    u: &Operator,
    targets: &[QuadraticTarget; 3],
    prefix: usize,
    budget: usize,
    torsion: bool,
) -> Result<ThreeSumCertificate> {
    let (c, a) = canonical_shift(targets)?;
    let shifted = u.plus_scalar(&-&c)?;
    let mut evidence = Vec::new();
    let (v1, gens) = a_elementary(&shifted, &a[0], torsion, budget, &mut evidence)?;
    let e = crate::operator::op_sub(&shifted, &v1)?;
    verify_elementary(&e, &gens, prefix)?;
    let (a0, b0, _) = split_shifted(&e, &-&c, &gens, None, &a[1], &a[2])?;
    let summands = [
        v1.plus_scalar(targets[0].roots().0)?,
        a0.plus_scalar(targets[1].roots().0)?,
        b0.plus_scalar(targets[2].roots().0)?,
    ];
    evidence.push(Evidence::Elementary { operator: e, generators: gens });
    let report = verify_sum(u, &summands, targets, prefix);
    if !report.passed {
        return Err(Error::PropertyViolated(format!("assembled decomposition fails: {report}")));
    }
    Ok(ThreeSumCertificate {
        summands,
        targets: targets.clone(),
        verified_prefix: prefix,
        route: if torsion { Route::NoDominantTorsion } else { Route::NoDominantNonTorsion },
        evidence,
    })
}

/// Writes `u` as a sum of three operators annihilated by the targets,
/// verified on `prefix` columns.
pub fn decompose_three(u: &Operator, targets: &[QuadraticTarget; 3], prefix: usize) -> Decomposition {
    decompose_three_with(u, targets, prefix, DEFAULT_Q_MAX)
}

pub fn decompose_three_with(u: &Operator, targets: &[QuadraticTarget; 3], prefix: usize, q_max: usize) -> Decomposition {
    decompose_three_opts(u, targets, &DecomposeOptions { prefix, q_max, ..DecomposeOptions::default() })
}

/// Settings of [`decompose_three_opts`].
#[derive(Clone, Copy, Debug)]
pub struct DecomposeOptions {
    pub prefix: usize,
    /// Largest kernel padding tried by the finite-rank search.
    pub q_max: usize,
    /// Scan budget of the torsion stratification builder.
    pub scan_budget: usize,
}

impl Default for DecomposeOptions {
    fn default() -> Self {
        DecomposeOptions { prefix: DEFAULT_PREFIX, q_max: DEFAULT_Q_MAX, scan_budget: DEFAULT_SCAN_BUDGET }
    }
}

pub fn decompose_three_opts(u: &Operator, targets: &[QuadraticTarget; 3], opts: &DecomposeOptions) -> Decomposition {
    let DecomposeOptions { prefix, q_max, scan_budget } = *opts;
    let report = classify(u, targets);
    let result = match &report.route {
        Route::Refused(r) => return Decomposition::Refused(r.clone()),
        Route::Unresolved(r) => return Decomposition::Unresolved(r.clone()),
        Route::NoDominantTorsion => no_dominant(u, targets, prefix, scan_budget, true),
        Route::NoDominantNonTorsion => no_dominant(u, targets, prefix, scan_budget, false),
        Route::Scalar => {
            let lambda = report.dominant.clone().expect("scalar route has a dominant eigenvalue");
            scalar_identity_decomposition(&lambda, targets, prefix).and_then(|c| {
                let r = verify_sum(u, &c.summands, targets, prefix);
                if r.passed {
                    Ok(c)
                } else {
                    Err(Error::PropertyViolated(format!("scalar decomposition does not match u: {r}")))
                }
            })
        }
        Route::FiniteRank => finite_rank_decompose(u, targets, q_max, prefix),
    };
    match result {
        Ok(c) => Decomposition::Verified(Box::new(c)),
        Err(e) => Decomposition::from_error(e),
    }
}

/// `u = Σ c_i q_i` with idempotent `q_i`.
#[derive(Clone, Debug)]
pub struct Lc3Certificate {
    pub coefficients: [Scalar; 3],
    pub idempotents: [Operator; 3],
    pub certificate: ThreeSumCertificate,
}

/// `t² - a t` for `a ≠ 0`, `t² - t` for `a = 0`; coefficient `a` or `1`.
fn lc3_targets(a: &[Scalar; 3]) -> ([QuadraticTarget; 3], [Scalar; 3]) {
    let targets = std::array::from_fn(|i| {
        if a[i].is_zero() {
            QuadraticTarget::idempotent(a[i].field())
        } else {
            QuadraticTarget::t2_minus_at(&a[i])
        }
    });
    let coeffs = std::array::from_fn(|i| if a[i].is_zero() { Scalar::one(a[i].field()) } else { a[i].clone() });
    (targets, coeffs)
}

fn finish_lc3(cert: ThreeSumCertificate, coefficients: [Scalar; 3], prefix: usize) -> Result<Lc3Certificate> {
    let mut idempotents = Vec::new();
    for (v, c) in cert.summands.iter().zip(&coefficients) {
        let q = op_scale(&c.inv()?, v)?;
        let r = crate::operator::verify_annihilated(&q, &QuadraticTarget::idempotent(c.field()).monic().clone(), prefix);
        if !r.passed {
            return Err(Error::PropertyViolated(format!("rescaled summand is not idempotent: {r}")));
        }
        idempotents.push(q);
    }
    let idempotents: [Operator; 3] = idempotents.try_into().expect("three summands");
    let mut cert = cert;
    cert.evidence.push(Evidence::Combination { coefficients: coefficients.clone() });
    Ok(Lc3Certificate { coefficients, idempotents, certificate: cert })
}

/// Splits of `λ` into `a₁ + a₂ + a₃` to try, most idempotent-like first.
fn lambda_splits(lambda: &Scalar) -> Vec<[Scalar; 3]> {
    let f = lambda.field();
    let o = Scalar::one(f);
    let mut out = vec![[o.clone(), o.clone(), o.clone()]];
    if !lambda.is_zero() && scalar_is_sum(lambda, &lc3_targets(&out[0]).0).ok().flatten().is_none() {
        out.push([lambda.clone(), o.clone(), o.clone()]);
    }
    out
}

/// For `A² = 0`, an idempotent `E` with `ker E = ker A`, so that `E + A`
/// is idempotent too and `A = (E + A) - E`. `E` projects onto the span of
/// the pivot columns along `ker A`.
fn square_zero_projection(a: &MatrixFin) -> MatrixFin {
    let f = a.field();
    let n = a.ncols();
    let col = |j: usize| {
        let mut v = VectorFin::zero(f);
        for i in 0..a.nrows() {
            v.add_at(i, a.get(i, j));
        }
        v
    };
    let mut span = Echelon::new(f);
    for j in 0..n {
        let _ = span.insert(&col(j), j);
    }
    let mut e = MatrixFin::zero(f, n, n);
    for j in 0..n {
        let y = span.express(&col(j)).expect("a column lies in the column space");
        for (i, c) in y.iter() {
            e.set(i, j, c.clone());
        }
    }
    e
}

/// `u` as a linear combination of three idempotents. With `coefficients`
/// given, they are the `a_i` of the targets `t² - a_i t`.
pub fn lc3(u: &Operator, coefficients: Option<[Scalar; 3]>, prefix: usize) -> Result<Lc3Certificate> {
    let f = u.field();
    let report = classify(u, &lc3_targets(&[Scalar::one(f), Scalar::one(f), Scalar::one(f)]).0);
    let dominant = match (&report.route, report.dominant.clone()) {
        (Route::Unresolved(r), _) if report.dominant.is_none() => return Err(Error::PreconditionUnverifiable(r.clone())),
        (_, d) => d,
    };
    let Some(lambda) = dominant else {
        let a = coefficients.unwrap_or_else(|| [Scalar::one(f), Scalar::one(f), Scalar::one(f)]);
        let (targets, coeffs) = lc3_targets(&a);
        return match decompose_three(u, &targets, prefix) {
            Decomposition::Verified(c) => finish_lc3(*c, coeffs, prefix),
            Decomposition::Refused(r) => Err(Error::ConditionViolated(r)),
            Decomposition::Unresolved(r) => Err(Error::SearchFailed(r)),
        };
    };
    let (_, class) = finite_rank_class(u)?;
    let mut attempts: Vec<[Scalar; 3]> = match &coefficients {
        Some(a) => vec![a.clone()],
        None => lambda_splits(&lambda),
    };
    // rank-one class [α]: a = (λ, α, 0) gives the witness ([λ], [α], [0]) at q = 0
    let rank_one = (coefficients.is_none() && class.n_of_w == 1).then(|| class.representative.get(0, 0).clone());
    if let Some(alpha) = &rank_one {
        attempts.insert(0, [lambda.clone(), alpha.clone(), Scalar::zero(f)]);
    }
    // square-zero class: a = (λ, 1, -1) with ([λ], [E + A], [-E]) at q = 0
    let a_rep = &class.representative;
    let square_zero = coefficients.is_none() && !a_rep.is_zero() && a_rep.mul(a_rep).is_zero();
    if square_zero {
        attempts.insert(0, [lambda.clone(), Scalar::one(f), -Scalar::one(f)]);
    }
    let mut last = String::from("no split of the dominant eigenvalue was tried");
    for a in attempts {
        let (targets, coeffs) = lc3_targets(&a);
        let witness = match (&rank_one, class.n_of_w) {
            (Some(alpha), 1) if a[1] == *alpha => Ok(StableWitness {
                q: 0,
                matrices: [
                    MatrixFin::scalar(&lambda, 1),
                    MatrixFin::scalar(alpha, 1),
                    MatrixFin::zero(f, 1, 1),
                ],
            }),
            _ if square_zero && a[1].is_one() && a[2] == -Scalar::one(f) => {
                let e = square_zero_projection(a_rep);
                let n = a_rep.nrows();
                Ok(StableWitness { q: 0, matrices: [MatrixFin::scalar(&lambda, n), e.add(a_rep), e.scale(&-Scalar::one(f))] })
            }
            (_, 0) => {
                match scalar_identity_decomposition(&lambda, &targets, prefix) {
                    Ok(c) if verify_sum(u, &c.summands, &targets, prefix).passed => return finish_lc3(c, coeffs, prefix),
                    Ok(_) => Err(Error::PropertyViolated("scalar decomposition does not match u".into())),
                    Err(e) => Err(e),
                }
            }
            _ => lambda_stable_search(&class.representative, &lambda, &targets, DEFAULT_Q_MAX),
        };
        match witness.and_then(|w| finite_rank_assemble(u, &targets, &lambda, class.clone(), w, prefix)) {
            Ok(c) => return finish_lc3(c, coeffs, prefix),
            Err(e) => last = e.to_string(),
        }
    }
    Err(Error::SearchFailed(last))
}

fn check_matrix_witness(
    lambda: &Scalar,
    representative: &MatrixFin,
    q: usize,
    matrices: &[MatrixFin; 3],
    targets: &[QuadraticTarget; 3],
) -> std::result::Result<(), String> {
    let n = representative.nrows();
    let t = representative.add(&MatrixFin::scalar(lambda, n)).direct_sum(&MatrixFin::scalar(lambda, q));
    let sum = matrices[0].add(&matrices[1]).add(&matrices[2]);
    if sum != t {
        return Err("matrix witness does not sum to (A + λI) ⊕ λI_q".into());
    }
    for (i, (m, p)) in matrices.iter().zip(targets).enumerate() {
        if !m.eval_poly(p.monic()).is_zero() {
            return Err(format!("matrix witness {} is not annihilated by p{}", i + 1, i + 1));
        }
    }
    Ok(())
}

/// Re-checks a certificate against `u` on `prefix` columns: the sum and
/// annihilation identities, then every piece of evidence.
pub fn verify_certificate(u: &Operator, cert: &ThreeSumCertificate, prefix: usize) -> Report {
    let report = verify_sum(u, &cert.summands, &cert.targets, prefix);
    if !report.passed {
        return report;
    }
    for ev in &cert.evidence {
        let problem: Option<String> = match ev {
            Evidence::ScalarWitness { parts } => {
                (!parts.iter().zip(&cert.targets).all(|(x, t)| t.has_root(x))).then(|| "scalar witness is not made of roots".into())
            }
            Evidence::TwoByTwo { a, b, c } => [a, b, c]
                .iter()
                .zip(&cert.targets)
                .any(|(m, t)| !m.eval_poly(t.monic()).is_zero())
                .then(|| "2×2 witness is not annihilated by the targets".into()),
            Evidence::Elementary { operator, generators } => {
                verify_elementary(operator, generators, prefix).err().map(|e| format!("elementary part: {e}"))
            }
            Evidence::Stratification { strat, flags } => match Stratification::build_cached(strat) {
                Ok(s) => {
                    let now = check_properties(&s);
                    (now != *flags || !now.good()).then(|| format!("stratification flags {now:?} differ from {flags:?}"))
                }
                Err(e) => Some(format!("stratification: {e}")),
            },
            Evidence::MatrixWitness { lambda, representative, q, matrices } => {
                check_matrix_witness(lambda, representative, *q, matrices, &cert.targets).err()
            }
            Evidence::Combination { coefficients } => {
                let bad = coefficients.iter().zip(&cert.targets).any(|(c, t)| {
                    c.is_zero() || !(t.has_root(&Scalar::zero(c.field())) && (t.has_root(c) || c.is_one()))
                });
                bad.then(|| "combination coefficients do not match the targets".into())
            }
        };
        if let Some(p) = problem {
            return Report::fail(prefix, 0, p);
        }
    }
    report
}

pub fn field_of(targets: &[QuadraticTarget; 3]) -> FieldSpec {
    targets[0].field()
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::BTreeMap;

    use crate::linalg::MatrixFin;
    use crate::operator::Layout;
    use crate::vector::VectorFin;

    const Q: FieldSpec = FieldSpec::Rationals;
    const F2: FieldSpec = FieldSpec::Prime(2);

    fn sq(f: FieldSpec) -> [QuadraticTarget; 3] {
        std::array::from_fn(|_| QuadraticTarget::square_zero(f))
    }

    fn idem(f: FieldSpec) -> [QuadraticTarget; 3] {
        std::array::from_fn(|_| QuadraticTarget::idempotent(f))
    }

    #[test]
    fn classify_examples() {
        assert_eq!(classify(&Operator::shift(Q), &sq(Q)).route, Route::NoDominantNonTorsion);
        assert_eq!(classify(&Operator::downshift(Q), &sq(Q)).route, Route::NoDominantTorsion);
        let r = classify(&Operator::identity(Q), &sq(Q));
        assert_eq!(r.route, Route::Refused("non-zero dominant eigenvalue".into()));
        let mut m = BTreeMap::new();
        m.insert(0, VectorFin::unit(Q, 0));
        let p = Operator::patch(&Operator::zero(Q), m).unwrap();
        assert_eq!(classify(&p, &sq(Q)).route, Route::Refused("finite rank and non-zero trace".into()));
    }

    #[test]
    fn decompose_examples() {
        let d = decompose_three(&Operator::downshift(F2), &sq(F2), 256);
        let c = d.certificate().expect("downshift decomposes");
        assert!(verify_certificate(&Operator::downshift(F2), c, 512).passed);
        let line = Operator::matrix(MatrixFin::zero(Q, 1, 1)).unwrap();
        let u = Operator::direct_sum(&line, &Operator::shift(Q), Layout::Prefix { len: 1 }).unwrap();
        let c = decompose_three(&u, &sq(Q), 128);
        assert!(c.certificate().is_some(), "{c:?}");
        let c = decompose_three(&Operator::shift(F2), &idem(F2), 128);
        assert!(c.certificate().is_some(), "{c:?}");
    }

    #[test]
    fn tampered_certificate_fails_at_column() {
        let u = Operator::shift(Q);
        let Decomposition::Verified(mut c) = decompose_three(&u, &sq(Q), 64) else { panic!() };
        let mut cols = BTreeMap::new();
        cols.insert(7, c.summands[0].col(7).unwrap().add(&VectorFin::unit(Q, 3)));
        c.summands[0] = Operator::patch(&c.summands[0], cols).unwrap();
        let r = verify_certificate(&u, &c, 64);
        assert!(!r.passed);
        assert_eq!(r.first_failure, Some(7));
    }

    #[test]
    fn lc3_examples() {
        let l = lc3(&Operator::shift(Q), None, 64).unwrap();
        assert!(l.coefficients.iter().all(|c| c.is_one()));
        let f5 = FieldSpec::Prime(5);
        let l = lc3(&Operator::scalar(&Scalar::from_i64(f5, 2)), None, 64).unwrap();
        assert_eq!(l.certificate.route, Route::Scalar);
        lc3(&Operator::zero(Q), None, 64).unwrap();
    }
}
