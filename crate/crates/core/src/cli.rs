//! `bgpc` command-line front end.
//!
//! Exit codes: 0 success, 1 input error, 2 verdict is `NotCertified` /
//! `Ambiguous` (or a failed construction check), 3 budget or feasibility refusal.

use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};
use serde::de::DeserializeOwned;
use serde::Serialize;

use crate::certify::{
    certify_joint_sparse, certify_subspace, CertificateReport, CertifyOptions, DEFAULT_SUPPORT_BUDGET,
};
use crate::construct::{construct_claim1, verify_claim1_rank, ConstructedInstance};
use crate::cxmat::ComplexMatrix;
use crate::error::{BgpcError, Result};
use crate::experiment::{run_sweep, write_csv, SweepConfig};
use crate::fmt::to_json_string;
use crate::model::{align_scale, align_scale_slices, random_instance, BgpcInstance, ScaleAlignment};
use crate::recover::{recover, recover_joint_sparse, RecoverOptions, RecoveryResult, RecoveryStatus};

pub const EXIT_OK: i32 = 0;
pub const EXIT_INPUT: i32 = 1;
pub const EXIT_VERDICT: i32 = 2;
pub const EXIT_REFUSED: i32 = 3;

/// Environment variable supplying the default rank tolerance.
pub const TOL_ENV: &str = "BGPC_TOL";

#[derive(Debug, Parser)]
#[command(
    name = "bgpc",
    version,
    about = "Blind gain and phase calibration: identifiability certificates and recovery"
)]
pub struct Cli {
    /// Worker threads (default: available parallelism).
    #[arg(long, global = true)]
    pub threads: Option<usize>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Write a seeded random instance.
    Gen {
        #[arg(long)]
        n: usize,
        #[arg(long)]
        m: usize,
        #[arg(long = "N", value_name = "N")]
        snapshots: usize,
        /// Joint sparsity level; omit for a dense X0.
        #[arg(long)]
        s: Option<usize>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: Option<PathBuf>,
        /// Also write the measurements Y = diag(lambda0) A X0.
        #[arg(long = "y-out")]
        y_out: Option<PathBuf>,
        /// Also write A on its own.
        #[arg(long = "a-out")]
        a_out: Option<PathBuf>,
    },
    /// Certify identifiability under the subspace model.
    Certify {
        #[arg(long)]
        instance: PathBuf,
        #[arg(long)]
        tol: Option<f64>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Certify identifiability under the joint-sparsity model.
    CertifySparse {
        #[arg(long)]
        instance: PathBuf,
        /// Sparsity level (default: size of the instance's support).
        #[arg(long)]
        s: Option<usize>,
        #[arg(long)]
        tol: Option<f64>,
        #[arg(long, default_value_t = DEFAULT_SUPPORT_BUDGET)]
        budget: u64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Write the explicit DFT-based construction for (n, m, N).
    Construct {
        #[arg(long)]
        n: usize,
        #[arg(long)]
        m: usize,
        #[arg(long = "N", value_name = "N")]
        snapshots: usize,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Check the ranks of a constructed instance.
    VerifyConstruct {
        #[arg(long = "in", value_name = "FILE")]
        input: PathBuf,
        #[arg(long)]
        tol: Option<f64>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Recover (lambda, X) up to scale from Y and A.
    Recover {
        #[arg(long = "Y", value_name = "FILE")]
        y: PathBuf,
        #[arg(long = "A", value_name = "FILE")]
        a: PathBuf,
        #[arg(long)]
        tol: Option<f64>,
        /// Instance holding the ground truth; adds alignment errors to the output.
        #[arg(long)]
        truth: Option<PathBuf>,
        /// On inconsistent (e.g. noisy) Y, return the smallest singular vector
        /// instead of failing. No accuracy guarantee.
        #[arg(long = "least-squares")]
        least_squares: bool,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Joint-sparse recovery by support enumeration.
    RecoverSparse {
        #[arg(long = "Y", value_name = "FILE")]
        y: PathBuf,
        #[arg(long = "A", value_name = "FILE")]
        a: PathBuf,
        #[arg(long)]
        s: usize,
        #[arg(long)]
        tol: Option<f64>,
        #[arg(long, default_value_t = DEFAULT_SUPPORT_BUDGET)]
        budget: u64,
        #[arg(long)]
        truth: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run a phase-transition sweep.
    Sweep {
        #[arg(long)]
        config: PathBuf,
        /// CSV destination (default: the config's `output`, else stdout).
        #[arg(long)]
        csv: Option<PathBuf>,
        /// Optional JSON mirror of the cells.
        #[arg(long)]
        json: Option<PathBuf>,
    },
}

/// Parses `args` (including the program name), runs the command and returns the exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_INPUT } else { EXIT_OK };
        }
    };
    if let Some(t) = cli.threads {
        // a pool may already exist when run() is called more than once in-process
        let _ = rayon::ThreadPoolBuilder::new().num_threads(t).build_global();
    }
    match execute(cli.command) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            if e.is_refusal() {
                EXIT_REFUSED
            } else {
                EXIT_INPUT
            }
        }
    }
}

fn env_tol() -> Result<Option<f64>> {
    match std::env::var(TOL_ENV) {
        Ok(v) => v
            .trim()
            .parse::<f64>()
            .map(Some)
            .map_err(|_| BgpcError::Input(format!("{TOL_ENV}={v:?} is not a number"))),
        Err(_) => Ok(None),
    }
}

fn resolve_tol(flag: Option<f64>) -> Result<Option<f64>> {
    match flag {
        Some(t) => Ok(Some(t)),
        None => env_tol(),
    }
}

/// Reads a JSON file, reporting the path of the offending field on failure.
pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).map_err(|source| BgpcError::Io {
        path: path.display().to_string(),
        source,
    })?;
    let de = &mut serde_json::Deserializer::from_str(&text);
    serde_path_to_error::deserialize(de).map_err(|e| {
        let field = e.path().to_string();
        BgpcError::Parse {
            path: path.display().to_string(),
            message: format!("field `{field}`: {}", e.inner()),
        }
    })
}

fn emit<T: Serialize>(value: &T, out: Option<&Path>) -> Result<()> {
    let text = to_json_string(value).map_err(|e| BgpcError::Input(e.to_string()))?;
    write_text(&text, out)
}

fn write_text(text: &str, out: Option<&Path>) -> Result<()> {
    match out {
        Some(p) => fs::write(p, text).map_err(|source| BgpcError::Io {
            path: p.display().to_string(),
            source,
        }),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn verdict_code(ok: bool) -> i32 {
    if ok {
        EXIT_OK
    } else {
        EXIT_VERDICT
    }
}

#[derive(Serialize)]
struct Alignment {
    x: ScaleAlignment,
    lambda: ScaleAlignment,
}

#[derive(Serialize)]
struct RecoverReport {
    #[serde(flatten)]
    result: RecoveryResult,
    #[serde(skip_serializing_if = "Option::is_none")]
    alignment: Option<Alignment>,
}

fn align_against(res: &RecoveryResult, truth: &BgpcInstance) -> Result<Option<Alignment>> {
    match (&res.x, &res.lambda) {
        (Some(x), Some(lambda)) => Ok(Some(Alignment {
            x: align_scale(x, &truth.x0)?,
            lambda: align_scale_slices(lambda, &truth.lambda0)?,
        })),
        _ => Ok(None),
    }
}

fn finish_recovery(res: RecoveryResult, truth: Option<&BgpcInstance>, out: Option<&Path>) -> Result<i32> {
    let alignment = match truth {
        Some(t) => align_against(&res, t)?,
        None => None,
    };
    if let Some(al) = &alignment {
        eprintln!(
            "relative error: X {:.3e}, lambda {:.3e}",
            al.x.relative_error, al.lambda.relative_error
        );
    }
    let ok = matches!(res.status, RecoveryStatus::Unique | RecoveryStatus::Approximate);
    emit(&RecoverReport { result: res, alignment }, out)?;
    Ok(verdict_code(ok))
}

fn execute(cmd: Command) -> Result<i32> {
    match cmd {
        Command::Gen {
            n,
            m,
            snapshots,
            s,
            seed,
            out,
            y_out,
            a_out,
        } => {
            let inst = random_instance(n, m, snapshots, seed, s)?;
            if let Some(p) = &y_out {
                emit(&inst.forward()?, Some(p))?;
            }
            if let Some(p) = &a_out {
                emit(&inst.a, Some(p))?;
            }
            emit(&inst, out.as_deref())?;
            Ok(EXIT_OK)
        }
        Command::Certify { instance, tol, out } => {
            let inst: BgpcInstance = read_json(&instance)?;
            let tol = resolve_tol(tol)?;
            let rep = certify_subspace(&inst.a, &inst.x0, &inst.lambda0, tol)?;
            emit(&rep, out.as_deref())?;
            Ok(verdict_code(rep.is_certified()))
        }
        Command::CertifySparse {
            instance,
            s,
            tol,
            budget,
            out,
        } => {
            let inst: BgpcInstance = read_json(&instance)?;
            let s = s
                .or(inst.sparsity())
                .ok_or_else(|| BgpcError::Input("instance has no support; pass --s".into()))?;
            let opts = CertifyOptions {
                tol: resolve_tol(tol)?,
                support_budget: budget,
            };
            let rep: CertificateReport = certify_joint_sparse(&inst.a, &inst.x0, &inst.lambda0, s, opts)?;
            emit(&rep, out.as_deref())?;
            Ok(verdict_code(rep.is_certified()))
        }
        Command::Construct { n, m, snapshots, out } => {
            let ci = construct_claim1(n, m, snapshots)?;
            emit(&ci, out.as_deref())?;
            Ok(EXIT_OK)
        }
        Command::VerifyConstruct { input, tol, out } => {
            let ci: ConstructedInstance = read_json(&input)?;
            let rec = verify_claim1_rank(&ci, resolve_tol(tol)?)?;
            emit(&rec, out.as_deref())?;
            Ok(verdict_code(rec.pass))
        }
        Command::Recover {
            y,
            a,
            tol,
            truth,
            least_squares,
            out,
        } => {
            let y: ComplexMatrix = read_json(&y)?;
            let a: ComplexMatrix = read_json(&a)?;
            let truth: Option<BgpcInstance> = truth.as_deref().map(read_json).transpose()?;
            if least_squares {
                eprintln!("warning: --least-squares returns a heuristic solution for inconsistent data, with no accuracy guarantee");
            }
            let opts = RecoverOptions {
                tol: resolve_tol(tol)?,
                allow_inconsistent: least_squares,
                ..Default::default()
            };
            let res = recover(&y, &a, opts)?;
            finish_recovery(res, truth.as_ref(), out.as_deref())
        }
        Command::RecoverSparse {
            y,
            a,
            s,
            tol,
            budget,
            truth,
            out,
        } => {
            let y: ComplexMatrix = read_json(&y)?;
            let a: ComplexMatrix = read_json(&a)?;
            let truth: Option<BgpcInstance> = truth.as_deref().map(read_json).transpose()?;
            let opts = RecoverOptions {
                tol: resolve_tol(tol)?,
                support_budget: budget,
                ..Default::default()
            };
            let res = recover_joint_sparse(&y, &a, s, opts)?;
            finish_recovery(res, truth.as_ref(), out.as_deref())
        }
        Command::Sweep { config, csv, json } => {
            let mut cfg: SweepConfig = read_json(&config)?;
            if cfg.tolerance.is_none() {
                cfg.tolerance = env_tol()?;
            }
            let cells = run_sweep(&cfg)?;
            let mut buf = Vec::new();
            write_csv(&cells, &mut buf)?;
            let text = String::from_utf8(buf).expect("csv is utf-8");
            write_text(&text, csv.as_deref().or(cfg.output.as_deref()))?;
            if let Some(p) = json {
                emit(&cells, Some(&p))?;
            }
            Ok(EXIT_OK)
        }
    }
}
