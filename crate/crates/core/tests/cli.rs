use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use quadsum::format::{parse_certificate, parse_job, write_certificate, write_job};
use quadsum::operator::op_add;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_quadsum"))
}

fn data(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/data").join(name)
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exit code")
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn decompose(job: &str, dir: &Path, prefix: &str) -> (Output, PathBuf) {
    let cert = dir.join(format!("{job}.cert.json"));
    let o = run(&["decompose", data(job).to_str().unwrap(), "--prefix", prefix, "--out", cert.to_str().unwrap()]);
    (o, cert)
}

#[test]
fn decompose_then_verify_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    for job in ["shift_q.json", "downshift_q.json", "sewing_q.json", "shift_f2_idem.json", "companion_f5.json", "scalar_two_f5.json"] {
        let (o, cert) = decompose(job, dir.path(), "48");
        assert_eq!(code(&o), 0, "{job}: {}", stderr(&o));
        let v = run(&["verify", data(job).to_str().unwrap(), cert.to_str().unwrap()]);
        assert_eq!(code(&v), 0, "{job}: {}", stderr(&v));
        let v = run(&["verify", data(job).to_str().unwrap(), cert.to_str().unwrap(), "--prefix", "64"]);
        assert_eq!(code(&v), 0, "{job} beyond the certified prefix: {}", stderr(&v));
    }
}

#[test]
fn refusals_exit_with_two_and_name_the_condition() {
    let dir = tempfile::tempdir().unwrap();
    for (job, reason) in [
        ("identity_q.json", "non-zero dominant eigenvalue"),
        ("trace_one_q.json", "finite rank and non-zero trace"),
    ] {
        let (o, cert) = decompose(job, dir.path(), "32");
        assert_eq!(code(&o), 2, "{job}");
        assert!(stderr(&o).contains(reason), "{job}: {}", stderr(&o));
        assert!(!cert.exists());
    }
}

#[test]
fn tampered_certificate_fails_verification() {
    let dir = tempfile::tempdir().unwrap();
    let (o, cert) = decompose("shift_q.json", dir.path(), "32");
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let mut c = parse_certificate(&std::fs::read_to_string(&cert).unwrap()).unwrap();
    let u = parse_job(&std::fs::read_to_string(data("shift_q.json")).unwrap()).unwrap().op;
    c.summands[0] = op_add(&c.summands[0], &u).unwrap();
    std::fs::write(&cert, write_certificate(&c).unwrap()).unwrap();
    let v = run(&["verify", data("shift_q.json").to_str().unwrap(), cert.to_str().unwrap()]);
    assert_eq!(code(&v), 1, "{}", stderr(&v));
}

#[test]
fn certificate_over_the_wrong_field_is_an_input_error() {
    let dir = tempfile::tempdir().unwrap();
    let (o, cert) = decompose("shift_f2_idem.json", dir.path(), "16");
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let v = run(&["verify", data("shift_q.json").to_str().unwrap(), cert.to_str().unwrap()]);
    assert_eq!(code(&v), 4);
}

#[test]
fn input_errors_exit_with_four() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.json");
    std::fs::write(&bad, r#"{"field": "Q", "op": {"kind": "no_such_operator"}}"#).unwrap();
    assert_eq!(code(&run(&["classify", bad.to_str().unwrap()])), 4);
    assert_eq!(code(&run(&["classify", dir.path().join("missing.json").to_str().unwrap()])), 4);
    assert_eq!(code(&run(&["frobnicate"])), 4);
    assert_eq!(code(&run(&["demo", "no-such-demo"])), 4);
    let job = data("shift_q.json");
    assert_eq!(code(&run(&["decompose", job.to_str().unwrap(), "--targets", "sz,sz"])), 4);
    assert_eq!(code(&run(&["decompose", job.to_str().unwrap(), "--targets", "sz,sz,bogus"])), 4);
}

#[test]
fn classify_reports_the_route() {
    let o = run(&["classify", data("downshift_q.json").to_str().unwrap()]);
    assert_eq!(code(&o), 0);
    assert!(String::from_utf8_lossy(&o.stdout).contains("Torsion"));
}

#[test]
fn explicit_targets_flag() {
    let dir = tempfile::tempdir().unwrap();
    let cert = dir.path().join("c.json");
    let job = data("shift_q.json");
    let o = run(&[
        "decompose",
        job.to_str().unwrap(),
        "--targets",
        "idem,inv,roots:0:2",
        "--prefix",
        "24",
        "--out",
        cert.to_str().unwrap(),
    ]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let c = parse_certificate(&std::fs::read_to_string(&cert).unwrap()).unwrap();
    assert_eq!(c.targets[2].to_string(), quadsum::poly::QuadraticTarget::t2_minus_at(&quadsum::field::Scalar::from_i64(quadsum::field::FieldSpec::Rationals, 2)).to_string());
}

#[test]
fn demos_run() {
    for name in ["shift-3sz", "downshift-3sz", "sewing-example", "char2-idem"] {
        let o = run(&["demo", name, "--prefix", "32"]);
        assert_eq!(code(&o), 0, "{name}: {}", stderr(&o));
    }
}

#[test]
fn job_files_survive_parse_and_serialize() {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/data");
    let mut n = 0;
    for entry in std::fs::read_dir(dir).unwrap() {
        let path = entry.unwrap().path();
        let text = std::fs::read_to_string(&path).unwrap();
        let job = parse_job(&text).unwrap_or_else(|e| panic!("{}: {e}", path.display()));
        let again = write_job(&job).unwrap();
        assert_eq!(again.trim_end(), text.trim_end(), "{}", path.display());
        assert_eq!(write_job(&parse_job(&again).unwrap()).unwrap(), again);
        n += 1;
    }
    assert!(n >= 8);
}
