//! Job and certificate files.
//!
//! Both are JSON documents with a top-level `field` ("Q" or "F<p>"). Scalars
//! inside are strings such as `"-3/4"` (integers may be bare numbers) and are
//! read in the field named at top level.

use serde::{Deserialize, Serialize};

use crate::certificate::{Evidence, Route, ThreeSumCertificate};
use crate::error::{Error, Result};
use crate::field::{with_field, FieldSpec};
use crate::operator::Operator;
use crate::poly::QuadraticTarget;

pub const CERTIFICATE_VERSION: u32 = 1;

/// An operator plus optional run settings.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct JobSpec {
    pub field: FieldSpec,
    pub op: Operator,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub command: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub targets: Option<[QuadraticTarget; 3]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub prefix: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub q_max: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub budget: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output: Option<String>,
}

#[derive(Serialize, Deserialize)]
struct CertificateFile {
    version: u32,
    field: FieldSpec,
    route: Route,
    verified_prefix: usize,
    targets: [QuadraticTarget; 3],
    summands: [Operator; 3],
    evidence: Vec<Evidence>,
}

fn positioned(e: serde_json::Error) -> Error {
    Error::Input(format!("line {}, column {}: {e}", e.line(), e.column()))
}

/// Reads the top-level `field` before anything else.
fn field_of(text: &str) -> Result<FieldSpec> {
    #[derive(Deserialize)]
    struct Head {
        field: FieldSpec,
    }
    let head: Head = serde_json::from_str(text).map_err(positioned)?;
    Ok(head.field)
}

pub fn parse_job(text: &str) -> Result<JobSpec> {
    let field = field_of(text)?;
    with_field(field, || serde_json::from_str(text)).map_err(positioned)
}

pub fn write_job(job: &JobSpec) -> Result<String> {
    serde_json::to_string_pretty(job).map_err(|e| Error::Input(e.to_string()))
}

pub fn parse_certificate(text: &str) -> Result<ThreeSumCertificate> {
    let field = field_of(text)?;
    let file: CertificateFile = with_field(field, || serde_json::from_str(text)).map_err(positioned)?;
    if file.version != CERTIFICATE_VERSION {
        return Err(Error::Input(format!("unsupported certificate version {}", file.version)));
    }
    Ok(ThreeSumCertificate {
        summands: file.summands,
        targets: file.targets,
        verified_prefix: file.verified_prefix,
        route: file.route,
        evidence: file.evidence,
    })
}

pub fn write_certificate(cert: &ThreeSumCertificate) -> Result<String> {
    let file = CertificateFile {
        version: CERTIFICATE_VERSION,
        field: cert.field(),
        route: cert.route.clone(),
        verified_prefix: cert.verified_prefix,
        targets: cert.targets.clone(),
        summands: cert.summands.clone(),
        evidence: cert.evidence.clone(),
    };
    serde_json::to_string_pretty(&file).map_err(|e| Error::Input(e.to_string()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn job_round_trip() {
        let text = r#"{"field": "F2", "op": {"kind": "shift"}, "targets": [[0, 0, 1], [0, 0, 1], [0, 0, 1]], "prefix": 64}"#;
        let job = parse_job(text).unwrap();
        assert_eq!(job.field, FieldSpec::Prime(2));
        let again = parse_job(&write_job(&job).unwrap()).unwrap();
        assert_eq!(write_job(&again).unwrap(), write_job(&job).unwrap());
    }

    #[test]
    fn diagnostics_carry_position() {
        let e = parse_job("{\"field\": \"Q\",\n \"op\": {\"kind\": \"nope\"}}").unwrap_err();
        assert!(e.to_string().contains("line 2"), "{e}");
    }
}
