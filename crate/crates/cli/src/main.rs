//! Batch front end: loads a system, runs one stage of the pipeline and writes
//! CSV/JSON artifacts into the output directory.
//!
//! Exit codes: 0 success, 1 invalid input, 2 numerical failure.

mod commands;
mod output;
mod pipeline;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use resurgence::{Error, C64};

#[derive(Parser, Debug)]
#[command(
    name = "resurgence",
    version,
    about = "Trans-series, Borel-plane solvers, Stokes data and Laplace resummation"
)]
pub struct Cli {
    /// System config file (JSON).
    #[arg(long, global = true, conflicts_with = "case")]
    pub system: Option<PathBuf>,
    /// Shipped case name (exa1, eqpert, quad).
    #[arg(long, global = true)]
    pub case: Option<String>,
    /// Directory receiving the artifacts.
    #[arg(long, global = true, default_value = "out")]
    pub out: PathBuf,
    /// Truncation order N of the formal series.
    #[arg(long, global = true)]
    pub order: Option<usize>,
    /// Highest exponential level.
    #[arg(long, global = true)]
    pub kmax: Option<usize>,
    /// Length of the Borel-plane grid.
    #[arg(long, global = true)]
    pub pmax: Option<f64>,
    /// Comma-separated ray angles.
    #[arg(long, global = true, value_delimiter = ',', allow_hyphen_values = true)]
    pub phi: Option<Vec<f64>>,
    /// Comma-separated real sample points x.
    #[arg(long, global = true, value_delimiter = ',')]
    pub x: Option<Vec<f64>>,
    /// Trans-series constant `re[,im]`.
    #[arg(long, global = true, allow_hyphen_values = true)]
    pub c: Option<String>,
    /// Initial value at the left end of the trajectory window (stokes-jump), `re[,im]`.
    #[arg(long, global = true, allow_hyphen_values = true)]
    pub y0: Option<String>,
    /// Acceptance tolerance of identity and resummation checks.
    #[arg(long, global = true)]
    pub tol: Option<f64>,
    /// Gauss nodes per mesh cell.
    #[arg(long, global = true)]
    pub q: Option<usize>,
    /// Largest mesh cell.
    #[arg(long, global = true)]
    pub h_max: Option<f64>,
    /// Mesh cells touching an integer.
    #[arg(long, global = true)]
    pub h_min: Option<f64>,
    /// Ratio of consecutive cells in graded zones.
    #[arg(long, global = true)]
    pub grading: Option<f64>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug, Clone, Copy, PartialEq, Eq)]
pub enum Command {
    /// Trans-series coefficients (series.csv).
    Series,
    /// Borel germs at p = 0 (borel.csv, borel.json).
    Borel,
    /// Convolution-equation solutions on a ray or the Stokes line (borel_solve.csv, borel_solve.json).
    BorelSolve,
    /// Stokes constant estimate (stokes.json).
    Stokes,
    /// Balanced average and its checks (average.csv, average.json).
    Average,
    /// Resurgence identity residuals (verify.csv, verify.json).
    Verify,
    /// Laplace resummation against an oracle (resum.csv, resum.json).
    Resum,
    /// C(phi) from one trajectory (stokes_jump.csv, stokes_jump.json).
    StokesJump,
    /// Whole pipeline with pass/fail per check (summary.json).
    All,
}

/// A failure with its exit code.
#[derive(Debug)]
pub enum Failure {
    Validation(Vec<String>),
    Numerical(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::InvalidSystem(v) => Failure::Validation(v),
            e if e.is_validation() => Failure::Validation(vec![e.to_string()]),
            e => Failure::Numerical(e.to_string()),
        }
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::Validation(vec![format!("i/o: {e}")])
    }
}

impl From<csv::Error> for Failure {
    fn from(e: csv::Error) -> Self {
        Failure::Validation(vec![format!("csv: {e}")])
    }
}

pub type Outcome<T> = std::result::Result<T, Failure>;

/// Parses `re` or `re,im`.
pub fn parse_complex(s: &str) -> Outcome<C64> {
    let parts: Vec<&str> = s.split(',').map(str::trim).collect();
    let num = |t: &str| t.parse::<f64>().map_err(|_| Failure::Validation(vec![format!("not a number: '{t}'")]));
    match parts.as_slice() {
        [re] => Ok(C64::new(num(re)?, 0.0)),
        [re, im] => Ok(C64::new(num(re)?, num(im)?)),
        _ => Err(Failure::Validation(vec![format!("expected re[,im], got '{s}'")])),
    }
}

fn configure_threads() -> Outcome<()> {
    let Ok(v) = std::env::var("RESURGENCE_THREADS") else {
        return Ok(());
    };
    let n: usize = v.trim().parse().ok().filter(|n| *n > 0).ok_or_else(|| {
        Failure::Validation(vec![format!("RESURGENCE_THREADS must be a positive integer, got '{v}'")])
    })?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| Failure::Numerical(format!("thread pool: {e}")))
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match configure_threads().and_then(|_| commands::run(&cli)) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Validation(v)) => {
            for line in v {
                eprintln!("error: {line}");
            }
            ExitCode::from(1)
        }
        Err(Failure::Numerical(m)) => {
            eprintln!("numerical failure: {m}");
            ExitCode::from(2)
        }
    }
}
