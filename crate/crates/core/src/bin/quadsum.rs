use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use quadsum::certificate::ThreeSumCertificate;
use quadsum::error::Error;
use quadsum::field::{FieldSpec, Scalar};
use quadsum::format::{parse_certificate, parse_job, write_certificate, JobSpec};
use quadsum::linalg::MatrixFin;
use quadsum::operator::{verify_annihilated, Layout, Operator};
use quadsum::pipeline::{
    classify, decompose_three_opts, lc3, verify_certificate, DecomposeOptions, Decomposition, DEFAULT_PREFIX,
};
use quadsum::poly::{split_quadratic, Polynomial, QuadraticTarget};

const EXIT_VERIFIED: u8 = 0;
const EXIT_VERIFY_FAILED: u8 = 1;
const EXIT_REFUSED: u8 = 2;
const EXIT_UNRESOLVED: u8 = 3;
const EXIT_INPUT: u8 = 4;

#[derive(Parser)]
#[command(name = "quadsum", version, about = "Sums of three quadratic operators, with certificates")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Report the dominant eigenvalue, deviation rank, torsion and route.
    Classify {
        job: PathBuf,
        #[arg(long)]
        targets: Option<String>,
    },
    /// Decompose the job's operator and write a certificate.
    Decompose {
        job: PathBuf,
        /// Three targets separated by commas: `sz`, `idem`, `inv`,
        /// `roots:x:y` or `poly:c0:c1:c2` (ascending coefficients).
        #[arg(long)]
        targets: Option<String>,
        #[arg(long)]
        prefix: Option<usize>,
        #[arg(long)]
        q_max: Option<usize>,
        /// Scan budget of the torsion stratification builder.
        #[arg(long)]
        budget: Option<usize>,
        /// Certificate path; the job's `output`, else standard output.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Seed for randomized search; every search is currently
        /// deterministic, so the value only appears in the report.
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Re-check a certificate against the job's operator.
    Verify {
        job: PathBuf,
        certificate: PathBuf,
        #[arg(long)]
        prefix: Option<usize>,
    },
    /// Run a named example: shift-3sz, downshift-3sz, sewing-example,
    /// char2-idem, lc3-shift.
    Demo {
        name: String,
        #[arg(long, default_value_t = DEFAULT_PREFIX)]
        prefix: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

/// A failure that ends the run with an exit code.
struct Exit(u8, String);

impl From<Error> for Exit {
    fn from(e: Error) -> Self {
        Exit(EXIT_INPUT, e.to_string())
    }
}

fn read(path: &Path) -> Result<String, Exit> {
    fs::read_to_string(path).map_err(|e| Exit(EXIT_INPUT, format!("{}: {e}", path.display())))
}

fn load_job(path: &Path) -> Result<JobSpec, Exit> {
    parse_job(&read(path)?).map_err(|e| Exit(EXIT_INPUT, format!("{}: {e}", path.display())))
}

fn parse_target(field: FieldSpec, s: &str) -> Result<QuadraticTarget, Error> {
    let parts: Vec<&str> = s.trim().split(':').collect();
    match parts.as_slice() {
        ["sz"] => Ok(QuadraticTarget::square_zero(field)),
        ["idem"] => Ok(QuadraticTarget::idempotent(field)),
        ["inv"] => QuadraticTarget::from_roots(Scalar::from_i64(field, -1), Scalar::one(field)),
        ["roots", x, y] => QuadraticTarget::from_roots(Scalar::parse(field, x)?, Scalar::parse(field, y)?),
        ["poly", c @ ..] => {
            let coeffs = c.iter().map(|x| Scalar::parse(field, x)).collect::<Result<Vec<_>, _>>()?;
            split_quadratic(&Polynomial::new(field, coeffs)?)
        }
        _ => Err(Error::Input(format!("unknown target `{s}`"))),
    }
}

fn targets_for(job: &JobSpec, flag: Option<&str>) -> Result<[QuadraticTarget; 3], Exit> {
    let f = job.field;
    if let Some(s) = flag {
        let list = s.split(',').map(|t| parse_target(f, t)).collect::<Result<Vec<_>, _>>()?;
        return <[QuadraticTarget; 3]>::try_from(list)
            .map_err(|l| Exit(EXIT_INPUT, format!("expected three targets, got {}", l.len())));
    }
    Ok(job.targets.clone().unwrap_or_else(|| std::array::from_fn(|_| QuadraticTarget::square_zero(f))))
}

fn show_targets(t: &[QuadraticTarget; 3]) -> String {
    format!("{}, {}, {}", t[0], t[1], t[2])
}

fn run(cli: Cli) -> Result<u8, Exit> {
    match cli.command {
        Command::Classify { job, targets } => {
            let job = load_job(&job)?;
            let targets = targets_for(&job, targets.as_deref())?;
            println!("{}", classify(&job.op, &targets));
            Ok(EXIT_VERIFIED)
        }
        Command::Decompose { job: path, targets, prefix, q_max, budget, out, seed } => {
            let job = load_job(&path)?;
            let targets = targets_for(&job, targets.as_deref())?;
            let defaults = DecomposeOptions::default();
            let opts = DecomposeOptions {
                prefix: prefix.or(job.prefix).unwrap_or(defaults.prefix),
                q_max: q_max.or(job.q_max).unwrap_or(defaults.q_max),
                scan_budget: budget.or(job.budget).unwrap_or(defaults.scan_budget),
            };
            let out = out.or(job.output.as_ref().map(PathBuf::from));
            match decompose_three_opts(&job.op, &targets, &opts) {
                Decomposition::Verified(cert) => {
                    let text = write_certificate(&cert)?;
                    match &out {
                        Some(p) => {
                            fs::write(p, text).map_err(|e| Exit(EXIT_INPUT, format!("{}: {e}", p.display())))?;
                            println!(
                                "verified: route {}, prefix {}, seed {seed}, certificate {}",
                                cert.route,
                                cert.verified_prefix,
                                p.display()
                            );
                        }
                        None => println!("{text}"),
                    }
                    Ok(EXIT_VERIFIED)
                }
                Decomposition::Refused(r) => Err(Exit(EXIT_REFUSED, format!("refused: {r}"))),
                Decomposition::Unresolved(r) => Err(Exit(EXIT_UNRESOLVED, format!("unresolved: {r}"))),
            }
        }
        Command::Verify { job, certificate, prefix } => {
            let job = load_job(&job)?;
            let cert = parse_certificate(&read(&certificate)?)
                .map_err(|e| Exit(EXIT_INPUT, format!("{}: {e}", certificate.display())))?;
            if cert.field() != job.field {
                return Err(Exit(
                    EXIT_INPUT,
                    format!("certificate over {} but operator over {}", cert.field(), job.field),
                ));
            }
            let prefix = prefix.unwrap_or(cert.verified_prefix);
            let r = verify_certificate(&job.op, &cert, prefix);
            if r.passed {
                println!("verified on prefix {prefix}");
                Ok(EXIT_VERIFIED)
            } else {
                Err(Exit(EXIT_VERIFY_FAILED, format!("verification failed: {r}")))
            }
        }
        Command::Demo { name, prefix, seed } => demo(&name, prefix, seed),
    }
}

fn print_certificate(u: &Operator, cert: &ThreeSumCertificate, prefix: usize) -> u8 {
    println!("route: {}", cert.route);
    for (i, (v, t)) in cert.summands.iter().zip(&cert.targets).enumerate() {
        let r = verify_annihilated(v, t.monic(), prefix);
        println!("p{}(v{}) = 0 with p{} = {}: {}", i + 1, i + 1, i + 1, t, r);
    }
    let r = verify_certificate(u, cert, prefix);
    println!("u = v1 + v2 + v3 and all certificate checks: {r}");
    if r.passed {
        EXIT_VERIFIED
    } else {
        EXIT_VERIFY_FAILED
    }
}

fn demo(name: &str, prefix: usize, seed: u64) -> Result<u8, Exit> {
    let q = FieldSpec::Rationals;
    let f2 = FieldSpec::Prime(2);
    let sz = |f| std::array::from_fn(|_| QuadraticTarget::square_zero(f));
    let (u, targets): (Operator, [QuadraticTarget; 3]) = match name {
        "shift-3sz" => (Operator::shift(q), sz(q)),
        "downshift-3sz" => (Operator::downshift(q), sz(q)),
        "sewing-example" => {
            let line = Operator::matrix(MatrixFin::zero(q, 1, 1))?;
            (Operator::direct_sum(&line, &Operator::shift(q), Layout::Prefix { len: 1 })?, sz(q))
        }
        "char2-idem" => (Operator::shift(f2), std::array::from_fn(|_| QuadraticTarget::idempotent(f2))),
        "lc3-shift" => {
            let u = Operator::shift(q);
            println!("demo lc3-shift over Q, prefix {prefix}, seed {seed}");
            let c = lc3(&u, None, prefix).map_err(|e| Exit(EXIT_UNRESOLVED, format!("unresolved: {e}")))?;
            let [a, b, d] = &c.coefficients;
            println!("u = {a}·q1 + {b}·q2 + {d}·q3");
            for (i, q_i) in c.idempotents.iter().enumerate() {
                let r = verify_annihilated(q_i, QuadraticTarget::idempotent(q).monic(), prefix);
                println!("q{}² = q{}: {r}", i + 1, i + 1);
            }
            return Ok(print_certificate(&u, &c.certificate, prefix));
        }
        _ => {
            return Err(Exit(
                EXIT_INPUT,
                format!(
                    "unknown demo `{name}`; expected shift-3sz, downshift-3sz, sewing-example, char2-idem or lc3-shift"
                ),
            ))
        }
    };
    println!("demo {name} over {}, targets {}, prefix {prefix}, seed {seed}", u.field(), show_targets(&targets));
    let opts = DecomposeOptions { prefix, ..DecomposeOptions::default() };
    match decompose_three_opts(&u, &targets, &opts) {
        Decomposition::Verified(cert) => Ok(print_certificate(&u, &cert, prefix)),
        Decomposition::Refused(r) => Err(Exit(EXIT_REFUSED, format!("refused: {r}"))),
        Decomposition::Unresolved(r) => Err(Exit(EXIT_UNRESOLVED, format!("unresolved: {r}"))),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_INPUT } else { EXIT_VERIFIED };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(code) => ExitCode::from(code),
        Err(Exit(code, msg)) => {
            eprintln!("{msg}");
            ExitCode::from(code)
        }
    }
}
