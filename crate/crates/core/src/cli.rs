//! Command-line front end: argument parsing, validation, JSON reports and exit codes.
//!
//! | flag          | default | meaning                                   |
//! |---------------|---------|-------------------------------------------|
//! | `--seed`      | 42      | seed of every randomized start vector     |
//! | `--grid`      | 16      | lattice cells per axis                    |
//! | `--tol`       | 1e-6    | power-iteration relative tolerance        |
//! | `--max-iter`  | 10000   | power-iteration cap                       |
//! | `--point-cap` | 20000   | largest admissible quadrature point count |
//! | `--d`         | 3       | dimension                                 |
//! | `--delta`     | 0.25    | weight parameter in `(0, 1/2)`            |
//!
//! `UCKL_THREADS` sets the worker count; `UCKL_THREADS=1` runs sequentially.

use std::ffi::OsString;
use std::path::PathBuf;
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};
use num_complex::Complex64;
use serde::Serialize;
use serde_json::{json, Value};

use crate::classes::{class_scan, sandwich_operator, scan_centers, ClassKind};
use crate::discretize::{maybe_dump, spectral_norm, Multiplier};
use crate::error::{Error, Result};
use crate::grid::{GridParams, Region, DEFAULT_MAX_ITER, DEFAULT_POINT_CAP, DEFAULT_SEED, DEFAULT_TOL};
use crate::kernels::{KernelEvaluator, KernelSpec};
use crate::potentials::Potential;
use crate::verify::{
    check_binom_bound, check_e_estimates, check_identity, check_inclusions, check_kato_contraction, check_lemma1,
    check_lemma2, check_prop_ourlem, check_strichartz, gamma_grid, lemma1_t_grid, lemma2_t_grid, theta_grid,
    LemmaReport, ManufacturedSolution, BINOM_GROWTH,
};

pub const SCHEMA_VERSION: u32 = 1;
pub const DEFAULT_GRID_N: usize = 16;
pub const DEFAULT_DIM: usize = 3;
pub const DEFAULT_DELTA: f64 = 0.25;

pub const EXIT_OK: i32 = 0;
pub const EXIT_INVALID: i32 = 2;
pub const EXIT_NON_CONVERGENCE: i32 = 3;
pub const EXIT_CAPACITY: i32 = 4;

#[derive(Debug, Parser)]
#[command(name = "uckl", version, about = "Truncated Riesz kernels, potential-class norms and their numerical checks")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Kernel evaluations.
    #[command(subcommand)]
    Kernel(KernelCommand),
    /// `τ(V, x0, ρ)`: the 2→2 norm of the potential-weighted Riesz sandwich.
    Tau(TauArgs),
    /// Scan a class functional over centres and dyadic radii.
    Certify(CertifyArgs),
    /// Run one of the numerical checks.
    Lemma(LemmaArgs),
    /// Merge JSON reports into one document.
    ReportMerge(MergeArgs),
}

#[derive(Debug, Subcommand)]
enum KernelCommand {
    /// Print the real and imaginary parts of the weighted truncated kernel.
    Eval(KernelEvalArgs),
}

#[derive(Debug, Clone, Args, Serialize)]
#[serde(rename_all = "camelCase")]
struct Common {
    #[arg(long, default_value_t = DEFAULT_SEED)]
    seed: u64,
    #[arg(long = "grid", default_value_t = DEFAULT_GRID_N)]
    grid: usize,
    #[arg(long, default_value_t = DEFAULT_TOL)]
    tol: f64,
    #[arg(long = "max-iter", default_value_t = DEFAULT_MAX_ITER)]
    max_iter: usize,
    #[arg(long = "point-cap", default_value_t = DEFAULT_POINT_CAP)]
    point_cap: usize,
    /// JSON report path (stdout when absent).
    #[arg(long)]
    out: Option<PathBuf>,
}

impl Common {
    fn grid(&self) -> Result<GridParams> {
        let g = GridParams {
            n: self.grid,
            point_cap: self.point_cap,
            seed: self.seed,
            tol: self.tol,
            max_iter: self.max_iter,
        };
        g.validate()?;
        Ok(g)
    }
}

#[derive(Debug, Clone, Args, Serialize)]
#[serde(rename_all = "camelCase")]
struct KernelEvalArgs {
    #[arg(long, default_value_t = DEFAULT_DIM)]
    d: usize,
    #[arg(long = "z-re", allow_negative_numbers = true)]
    z_re: f64,
    #[arg(long = "z-im", default_value_t = 0.0, allow_negative_numbers = true)]
    z_im: f64,
    /// Truncation order.
    #[arg(long = "N", default_value_t = 0)]
    #[serde(rename = "N")]
    n: usize,
    /// Weight exponent.
    #[arg(long, default_value_t = 0.0, allow_negative_numbers = true)]
    w: f64,
    #[arg(long, allow_hyphen_values = true)]
    x: String,
    #[arg(long, allow_hyphen_values = true)]
    y: String,
    #[command(flatten)]
    #[serde(flatten)]
    common: Common,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "camelCase")]
enum TauOrder {
    /// `z = d - 1`, multiplier `|V|^{(d-1)/4}`.
    Fd,
    /// `z = 2`, multiplier `|V|^{1/2}`.
    F3,
}

#[derive(Debug, Clone, Args, Serialize)]
#[serde(rename_all = "camelCase")]
struct TauArgs {
    #[arg(long)]
    potential: String,
    #[arg(long, default_value_t = DEFAULT_DIM)]
    d: usize,
    #[arg(long, allow_hyphen_values = true)]
    center: String,
    #[arg(long)]
    rho: f64,
    #[arg(long, value_enum, default_value_t = TauOrder::Fd)]
    class: TauOrder,
    /// Write the assembled matrix as CSV rows `row,col,re,im`.
    #[arg(long = "dump-matrix")]
    dump_matrix: Option<PathBuf>,
    #[command(flatten)]
    #[serde(flatten)]
    common: Common,
}

#[derive(Debug, Clone, Args, Serialize)]
#[serde(rename_all = "camelCase")]
struct CertifyArgs {
    /// One of fd, f3, kato, morrey, lorentz.
    #[arg(long)]
    class: String,
    /// Exponent of the Morrey or weak-Lorentz class (default d/2).
    #[arg(long)]
    p: Option<f64>,
    #[arg(long)]
    potential: String,
    #[arg(long, default_value_t = DEFAULT_DIM)]
    d: usize,
    /// Cube of centres `c1,..,cd:half_side`.
    #[arg(long = "center-box", allow_hyphen_values = true)]
    center_box: String,
    #[arg(long = "per-axis", default_value_t = 1)]
    per_axis: usize,
    #[arg(long)]
    rho0: f64,
    #[arg(long, default_value_t = 3)]
    levels: usize,
    /// CSV of the scan values.
    #[arg(long)]
    csv: Option<PathBuf>,
    #[command(flatten)]
    #[serde(flatten)]
    common: Common,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
enum Which {
    #[value(name = "1")]
    #[serde(rename = "1")]
    One,
    #[value(name = "2")]
    #[serde(rename = "2")]
    Two,
    Binom,
    Ourlem,
    EEst,
    KatoContraction,
    Identity,
    Inclusions,
    Strichartz,
}

#[derive(Debug, Clone, Args, Serialize)]
#[serde(rename_all = "camelCase")]
struct LemmaArgs {
    #[arg(long, value_enum)]
    which: Which,
    #[arg(long, default_value_t = DEFAULT_DIM)]
    d: usize,
    /// Largest truncation order (default 30 for `1`, 20 for `2`).
    #[arg(long = "n-max")]
    n_max: Option<usize>,
    /// Number of angles in `[0, π]` (default 64 for `1`, 33 for `2`).
    #[arg(long)]
    thetas: Option<usize>,
    /// Largest `|γ|` (default 4 for `2`, 10 for `binom`).
    #[arg(long = "gamma-max")]
    gamma_max: Option<f64>,
    /// Step of the `γ` grid (default 0.5 for `2`, 0.25 for `binom`).
    #[arg(long = "gamma-step")]
    gamma_step: Option<f64>,
    #[arg(long, default_value_t = 200)]
    kmax: usize,
    /// Growth constant of the coefficient bound (default π²/48).
    #[arg(long)]
    c: Option<f64>,
    /// Potential (default `hardy:beta=0.5`).
    #[arg(long)]
    potential: Option<String>,
    #[arg(long, default_value_t = 0.5)]
    rho: f64,
    #[arg(long, default_value_t = 0.1)]
    a: f64,
    #[arg(long, default_value_t = DEFAULT_DELTA)]
    delta: f64,
    /// Truncation orders, `1-10` or `1,2,5`.
    #[arg(long = "n-list", default_value = "1-10")]
    n_list: String,
    /// Cutoff index of the cutoff estimates.
    #[arg(long, default_value_t = 4)]
    j: usize,
    /// Regression envelope for the largest ratio.
    #[arg(long)]
    envelope: Option<f64>,
    /// Vanishing order `2m` of the manufactured solution.
    #[arg(long, default_value_t = 2)]
    m: usize,
    #[arg(long = "r-inner", default_value_t = 0.5)]
    r_inner: f64,
    #[arg(long = "r-outer", default_value_t = 1.0)]
    r_outer: f64,
    /// Truncation order of the reconstruction identity.
    #[arg(long = "n-trunc", default_value_t = 3)]
    n_trunc: usize,
    /// Ball centre of the Strichartz check (default origin).
    #[arg(long, allow_hyphen_values = true)]
    center: Option<String>,
    #[command(flatten)]
    #[serde(flatten)]
    common: Common,
}

#[derive(Debug, Clone, Args, Serialize)]
#[serde(rename_all = "camelCase")]
struct MergeArgs {
    /// Reports to merge.
    #[arg(required = true)]
    inputs: Vec<PathBuf>,
    #[command(flatten)]
    #[serde(flatten)]
    common: Common,
}

#[derive(Debug, Serialize)]
#[serde(rename_all = "camelCase")]
struct Estimate {
    value: f64,
    residual: f64,
    iterations: usize,
}

#[derive(Debug, Serialize)]
#[serde(rename_all = "camelCase")]
struct GridInfo {
    n: usize,
    h: Option<f64>,
    points: usize,
}

#[derive(Debug, Serialize)]
#[serde(rename_all = "camelCase")]
struct Report {
    schema_version: u32,
    command: String,
    params: Value,
    estimate: Estimate,
    grid: GridInfo,
    wall_time_ms: u64,
    seed: u64,
    result: Value,
}

/// Parses `argv` (program name first), runs the command and returns the exit code.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_INVALID } else { EXIT_OK };
        }
    };
    if let Err(e) = configure_threads() {
        eprintln!("error: {e}");
        return exit_code(&e);
    }
    match execute(cli.command) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}

pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::NonConvergence { .. } => EXIT_NON_CONVERGENCE,
        Error::Capacity { .. } => EXIT_CAPACITY,
        _ => EXIT_INVALID,
    }
}

fn configure_threads() -> Result<()> {
    let Ok(raw) = std::env::var("UCKL_THREADS") else {
        return Ok(());
    };
    let n: usize = raw
        .trim()
        .parse()
        .ok()
        .filter(|n| *n > 0)
        .ok_or_else(|| Error::InvalidParameter(format!("UCKL_THREADS must be a positive integer, got '{raw}'")))?;
    // a second initialization in the same process keeps the first pool
    let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    Ok(())
}

fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidParameter(msg.into())
}

/// Parses `x1,..,xd`.
pub fn parse_point(s: &str, d: usize) -> Result<Vec<f64>> {
    let v = s
        .split(',')
        .map(|t| t.trim().parse::<f64>().map_err(|_| invalid(format!("not a number: '{t}' in '{s}'"))))
        .collect::<Result<Vec<_>>>()?;
    if v.len() != d {
        return Err(invalid(format!("expected {d} coordinates, got {} in '{s}'", v.len())));
    }
    if v.iter().any(|x| !x.is_finite()) {
        return Err(invalid(format!("non-finite coordinate in '{s}'")));
    }
    Ok(v)
}

/// Parses `a-b` (inclusive) or `n1,n2,...`.
pub fn parse_n_list(s: &str) -> Result<Vec<usize>> {
    let bad = || invalid(format!("bad truncation list '{s}'"));
    let list: Vec<usize> = if let Some((a, b)) = s.split_once('-') {
        let a: usize = a.trim().parse().map_err(|_| bad())?;
        let b: usize = b.trim().parse().map_err(|_| bad())?;
        if a > b {
            return Err(bad());
        }
        (a..=b).collect()
    } else {
        s.split(',').map(|t| t.trim().parse().map_err(|_| bad())).collect::<Result<_>>()?
    };
    if list.is_empty() {
        return Err(bad());
    }
    Ok(list)
}

fn positive(name: &str, v: f64) -> Result<f64> {
    if v > 0.0 && v.is_finite() {
        Ok(v)
    } else {
        Err(invalid(format!("--{name} must be positive, got {v}")))
    }
}

fn dimension(d: usize) -> Result<usize> {
    if d >= 3 {
        Ok(d)
    } else {
        Err(invalid(format!("--d must be >= 3, got {d}")))
    }
}

fn potential(spec: &str, d: usize) -> Result<Potential> {
    Potential::parse(spec, d)
}

fn params<T: Serialize>(args: &T) -> Result<Value> {
    Ok(serde_json::to_value(args)?)
}

fn emit(report: &Report, out: Option<&PathBuf>) -> Result<()> {
    let text = serde_json::to_string_pretty(report)?;
    match out {
        Some(p) => std::fs::write(p, text + "\n")?,
        None => print_stdout(&text)?,
    }
    Ok(())
}

fn print_stdout(line: &str) -> Result<()> {
    use std::io::Write;
    let mut out = std::io::stdout().lock();
    match writeln!(out, "{line}").and_then(|_| out.flush()) {
        Err(e) if e.kind() != std::io::ErrorKind::BrokenPipe => Err(e.into()),
        _ => Ok(()),
    }
}

fn elapsed_ms(t: Instant) -> u64 {
    t.elapsed().as_millis() as u64
}

fn execute(command: Command) -> Result<()> {
    let start = Instant::now();
    match command {
        Command::Kernel(KernelCommand::Eval(args)) => kernel_eval(&args, start),
        Command::Tau(args) => tau_command(&args, start),
        Command::Certify(args) => certify(&args, start),
        Command::Lemma(args) => lemma(&args, start),
        Command::ReportMerge(args) => merge(&args, start),
    }
}

fn kernel_eval(args: &KernelEvalArgs, start: Instant) -> Result<()> {
    let d = dimension(args.d)?;
    args.common.grid()?;
    let x = parse_point(&args.x, d)?;
    let y = parse_point(&args.y, d)?;
    let spec = KernelSpec::new(d, Complex64::new(args.z_re, args.z_im), args.n, args.w).map_err(|e| invalid(e.to_string()))?;
    let k = KernelEvaluator::new(&spec)?.weighted(&x, &y)?;
    print_stdout(&format!("{:.15} {:.15}", k.re, k.im))?;
    if let Some(out) = &args.common.out {
        let report = Report {
            schema_version: SCHEMA_VERSION,
            command: "kernel eval".into(),
            params: params(args)?,
            estimate: Estimate {
                value: k.norm(),
                residual: 0.0,
                iterations: 0,
            },
            grid: GridInfo { n: args.common.grid, h: None, points: 1 },
            wall_time_ms: elapsed_ms(start),
            seed: args.common.seed,
            result: json!({ "re": k.re, "im": k.im }),
        };
        emit(&report, Some(out))?;
    }
    Ok(())
}

fn tau_command(args: &TauArgs, start: Instant) -> Result<()> {
    let d = dimension(args.d)?;
    let grid = args.common.grid()?;
    let x0 = parse_point(&args.center, d)?;
    let rho = positive("rho", args.rho)?;
    let v = potential(&args.potential, d)?;
    let df = d as f64;
    let (z, power) = match args.class {
        TauOrder::Fd => (df - 1.0, (df - 1.0) / 4.0),
        TauOrder::F3 => (2.0, 0.5),
    };
    let op = sandwich_operator(&Multiplier::new(v.clone(), power), z, &x0, rho, &grid)?;
    maybe_dump(&op, args.dump_matrix.as_deref())?;
    let est = spectral_norm(&op, grid.tol, grid.max_iter, grid.seed)?;
    let report = Report {
        schema_version: SCHEMA_VERSION,
        command: "tau".into(),
        params: params(args)?,
        estimate: Estimate {
            value: est.value,
            residual: est.residual,
            iterations: est.iterations,
        },
        grid: GridInfo {
            n: est.grid_n,
            h: Some(est.h),
            points: est.points,
        },
        wall_time_ms: elapsed_ms(start),
        seed: grid.seed,
        result: json!({ "potential": v, "center": x0, "rho": rho, "norm": est }),
    };
    emit(&report, args.common.out.as_ref())
}

fn parse_box(s: &str, d: usize) -> Result<Region> {
    let (c, h) = s
        .rsplit_once(':')
        .ok_or_else(|| invalid(format!("--center-box expects 'c1,..,cd:half', got '{s}'")))?;
    let half: f64 = h.trim().parse().map_err(|_| invalid(format!("bad half side '{h}'")))?;
    Region::cube(parse_point(c, d)?, positive("center-box half side", half)?)
}

fn certify(args: &CertifyArgs, start: Instant) -> Result<()> {
    let d = dimension(args.d)?;
    let grid = args.common.grid()?;
    let class = ClassKind::parse(&args.class, args.p, d)?;
    if let Some(p) = args.p {
        positive("p", p)?;
    }
    let compact = parse_box(&args.center_box, d)?;
    let rho0 = positive("rho0", args.rho0)?;
    if args.levels < 2 {
        return Err(invalid("--levels must be >= 2"));
    }
    let v = potential(&args.potential, d)?;
    let centers = scan_centers(&compact, args.per_axis)?;
    let scan = class_scan(&v, &centers, rho0, args.levels, class, &grid)?;
    if let Some(path) = &args.csv {
        scan.write_csv(path)?;
    }
    let report = Report {
        schema_version: SCHEMA_VERSION,
        command: "certify".into(),
        params: params(args)?,
        estimate: Estimate {
            value: scan.beta_hat,
            residual: 0.0,
            iterations: centers.len() * args.levels,
        },
        grid: GridInfo {
            n: grid.n,
            h: None,
            points: centers.len(),
        },
        wall_time_ms: elapsed_ms(start),
        seed: grid.seed,
        result: serde_json::to_value(&scan)?,
    };
    emit(&report, args.common.out.as_ref())
}

fn lemma(args: &LemmaArgs, start: Instant) -> Result<()> {
    let d = dimension(args.d)?;
    let grid = args.common.grid()?;
    let n_list = parse_n_list(&args.n_list)?;
    if !(args.delta > 0.0 && args.delta < 0.5) {
        return Err(invalid(format!("--delta must lie in (0, 1/2), got {}", args.delta)));
    }
    positive("rho", args.rho)?;
    if let Some(e) = args.envelope {
        positive("envelope", e)?;
    }
    let v = || potential(args.potential.as_deref().unwrap_or("hardy:beta=0.5"), d);
    let gammas = |max: f64, step: f64| gamma_grid(args.gamma_max.unwrap_or(max), args.gamma_step.unwrap_or(step));
    let reports: Vec<LemmaReport> = match args.which {
        Which::One => vec![check_lemma1(
            d,
            args.n_max.unwrap_or(30),
            &lemma1_t_grid(),
            &theta_grid(args.thetas.unwrap_or(64)),
        )?],
        Which::Two => vec![check_lemma2(
            d,
            &gammas(4.0, 0.5)?,
            args.n_max.unwrap_or(20),
            &lemma2_t_grid(),
            &theta_grid(args.thetas.unwrap_or(33)),
        )?],
        Which::Binom => vec![check_binom_bound(&gammas(10.0, 0.25)?, args.kmax, args.c.unwrap_or(BINOM_GROWTH))?],
        Which::Ourlem => vec![check_prop_ourlem(
            &v()?,
            args.rho,
            args.a,
            args.delta,
            &n_list,
            &grid,
            args.envelope,
        )?],
        Which::EEst => check_e_estimates(&v()?, args.rho, args.a, args.j, args.delta, &n_list, &grid, args.envelope)?.to_vec(),
        Which::KatoContraction => vec![check_kato_contraction(&v()?, args.rho, &n_list, &grid)?],
        Which::Identity => {
            let ms = ManufacturedSolution::new(d, args.m, args.r_inner, args.r_outer)?;
            vec![check_identity(&ms, args.n_trunc, &grid, &ms.default_samples())?]
        }
        Which::Inclusions => vec![check_inclusions(d, &grid)?],
        Which::Strichartz => {
            let x0 = match &args.center {
                Some(c) => parse_point(c, d)?,
                None => vec![0.0; d],
            };
            vec![check_strichartz(&v()?, &x0, args.rho, &grid)?]
        }
    };
    let value = reports.iter().map(|r| r.empirical_constant).fold(f64::NEG_INFINITY, f64::max);
    let samples = reports.iter().map(|r| r.samples).sum();
    let result = if reports.len() == 1 {
        serde_json::to_value(&reports[0])?
    } else {
        serde_json::to_value(&reports)?
    };
    let report = Report {
        schema_version: SCHEMA_VERSION,
        command: "lemma".into(),
        params: params(args)?,
        estimate: Estimate {
            value,
            residual: 0.0,
            iterations: samples,
        },
        grid: GridInfo {
            n: grid.n,
            h: None,
            points: samples,
        },
        wall_time_ms: elapsed_ms(start),
        seed: grid.seed,
        result,
    };
    emit(&report, args.common.out.as_ref())
}

fn report_passes(result: &Value) -> Option<bool> {
    match result {
        Value::Object(m) => m.get("pass").and_then(Value::as_bool),
        Value::Array(items) => items
            .iter()
            .map(report_passes)
            .try_fold(true, |acc, p| p.map(|p| acc && p)),
        _ => None,
    }
}

fn merge(args: &MergeArgs, start: Instant) -> Result<()> {
    let mut reports = Vec::with_capacity(args.inputs.len());
    for path in &args.inputs {
        let text = std::fs::read_to_string(path)
            .map_err(|e| invalid(format!("{}: {e}", path.display())))?;
        let doc: Value = serde_json::from_str(&text).map_err(|e| invalid(format!("{}: {e}", path.display())))?;
        if doc.get("schemaVersion").and_then(Value::as_u64) != Some(SCHEMA_VERSION as u64) {
            return Err(invalid(format!("{}: not a schema-version {SCHEMA_VERSION} report", path.display())));
        }
        reports.push(doc);
    }
    let verdicts: Vec<Option<bool>> = reports.iter().map(|r| report_passes(&r["result"])).collect();
    let all_pass = verdicts.iter().all(|p| p.unwrap_or(true));
    let report = Report {
        schema_version: SCHEMA_VERSION,
        command: "report-merge".into(),
        params: params(args)?,
        estimate: Estimate {
            value: verdicts.iter().filter(|p| **p == Some(false)).count() as f64,
            residual: 0.0,
            iterations: reports.len(),
        },
        grid: GridInfo {
            n: args.common.grid,
            h: None,
            points: reports.len(),
        },
        wall_time_ms: elapsed_ms(start),
        seed: args.common.seed,
        result: json!({ "reports": reports, "pass": verdicts, "allPass": all_pass }),
    };
    emit(&report, args.common.out.as_ref())
}
