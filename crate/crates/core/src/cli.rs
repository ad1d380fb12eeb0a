//! Command-line front end: `ffl inspect | flow | verify`.
//!
//! Exit codes: 0 success, 2 configuration error, 3 degenerate metric,
//! 4 extinction or degeneration during a flow, 5 failed verification.

use std::ffi::OsString;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::flow::{run_flow, FlowConfig, FlowMode};
use crate::format::to_json;
use crate::geometry::{coordinate_completion, curvature_report, flag_from_parts, CurvatureReport};
use crate::metric::{build_metric, validate_metric, MetricSpec, ValidationReport};
use crate::verify::{run_verification, VerifyOptions};

pub const EXIT_OK: i32 = 0;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_DEGENERATE: i32 = 3;
pub const EXIT_STOPPED: i32 = 4;
pub const EXIT_VERIFY_FAILED: i32 = 5;

#[derive(Parser, Debug)]
#[command(name = "ffl", about = "Finsler Ricci flow laboratory", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Print every curvature quantity at one point `(x, y)`.
    Inspect(InspectArgs),
    /// Integrate the flow and write the monitor series.
    Flow(FlowArgs),
    /// Run the verification suite and print the JSON report.
    Verify(VerifyArgs),
}

#[derive(Args, Debug)]
struct InspectArgs {
    /// Family shorthand such as `sphere:r=2`, or a path to a metric JSON file.
    #[arg(long)]
    metric: String,
    /// Base point, comma separated.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    x: Vec<f64>,
    /// Tangent vector, comma separated.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    y: Vec<f64>,
    /// Write the report here instead of stdout.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct FlowArgs {
    #[arg(long)]
    metric: String,
    #[arg(long, default_value = "grid")]
    mode: String,
    #[arg(long, default_value_t = 32)]
    nx: usize,
    #[arg(long, default_value_t = 32)]
    ntheta: usize,
    #[arg(long, default_value_t = 1e-3)]
    dt: f64,
    #[arg(long, default_value_t = 0.1)]
    t_end: f64,
    #[arg(long, default_value_t = 0.01)]
    cadence: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Output directory for `monitors.csv` and grid snapshots; the CSV goes
    /// to stdout when absent.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct VerifyArgs {
    /// Run the pointwise sections on this metric instead of the built-in corpus.
    #[arg(long)]
    metric: Option<String>,
    /// Comma-separated sections to run.
    #[arg(long, value_delimiter = ',')]
    only: Option<Vec<String>>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Write the report here instead of stdout.
    #[arg(long)]
    out: Option<PathBuf>,
}

/// Exit code for an error.
pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::DegenerateMetric(_)
        | Error::ChartBoundary(_)
        | Error::NonPositive(_)
        | Error::NotOrthogonal(_) => EXIT_DEGENERATE,
        Error::Extinction { .. } => EXIT_STOPPED,
        _ => EXIT_CONFIG,
    }
}

/// A metric argument: a JSON file if the path exists or ends in `.json`,
/// otherwise the `family:key=value,...` shorthand.
pub fn parse_metric_arg(arg: &str) -> Result<MetricSpec> {
    let spec = if arg.ends_with(".json") || Path::new(arg).is_file() {
        let text = fs::read_to_string(arg)
            .map_err(|e| Error::Config(format!("cannot read {arg}: {e}")))?;
        MetricSpec::from_json(&text)?
    } else {
        MetricSpec::from_shorthand(arg)?
    };
    spec.validate()?;
    Ok(spec)
}

#[derive(Serialize)]
struct InspectReport {
    metric: MetricSpec,
    #[serde(flatten)]
    report: CurvatureReport,
    /// Flag curvatures for the coordinate-seeded orthonormal completion of `l`.
    flag_curvature: Vec<f64>,
    validation: ValidationReport,
}

fn inspect(a: &InspectArgs) -> Result<String> {
    let spec = parse_metric_arg(&a.metric)?;
    let n = spec.dim;
    if a.x.len() != n || a.y.len() != n {
        return Err(Error::Config(format!(
            "--x and --y need {n} components (got {} and {})",
            a.x.len(),
            a.y.len()
        )));
    }
    let metric = build_metric(&spec)?;
    let validation = validate_metric(&metric, 64)?;
    let report = curvature_report(&metric, &a.x, &a.y, true)?;
    let g = report.g_matrix();
    let reduced = report.reduced();
    let flag_curvature = coordinate_completion(&g, &a.y)
        .iter()
        .map(|v| {
            let v: Vec<f64> = v.iter().copied().collect();
            flag_from_parts(&g, &reduced, &a.y, &v, 1e-8)
        })
        .collect::<Result<_>>()?;
    Ok(to_json(&InspectReport {
        metric: spec,
        report,
        flag_curvature,
        validation,
    }))
}

fn write_out(path: &Option<PathBuf>, text: &str, stdout: &mut dyn Write) -> Result<()> {
    match path {
        Some(p) => {
            if let Some(dir) = p.parent().filter(|d| !d.as_os_str().is_empty()) {
                fs::create_dir_all(dir)?;
            }
            fs::write(p, text)?;
        }
        None => writeln!(stdout, "{text}")?,
    }
    Ok(())
}

fn flow(a: &FlowArgs, stdout: &mut dyn Write, stderr: &mut dyn Write) -> Result<i32> {
    let spec = parse_metric_arg(&a.metric)?;
    let mode = FlowMode::parse(&a.mode)?;
    let mut cfg = FlowConfig::new(spec, mode);
    cfg.nx = a.nx;
    cfg.ntheta = a.ntheta;
    cfg.dt = a.dt;
    cfg.t_end = a.t_end;
    cfg.cadence = a.cadence;
    cfg.seed = a.seed;
    cfg.snapshots = a.out.is_some() && mode == FlowMode::Grid;
    let run = run_flow(&cfg)?;
    match &a.out {
        Some(dir) => {
            fs::create_dir_all(dir)?;
            fs::write(dir.join("monitors.csv"), run.csv())?;
            fs::write(dir.join("config.json"), to_json(&cfg))?;
            if !run.snapshots.is_empty() {
                let snaps = dir.join("snapshots");
                fs::create_dir_all(&snaps)?;
                for (k, s) in run.snapshots.iter().enumerate() {
                    fs::write(
                        snaps.join(format!("snapshot_{k:05}.json")),
                        s.to_snapshot_json(),
                    )?;
                }
            }
        }
        None => write!(stdout, "{}", run.csv())?,
    }
    match &run.stop {
        None => Ok(EXIT_OK),
        Some(e) => {
            writeln!(stderr, "flow stopped: {e}; last valid t = {}", run.final_t)?;
            Ok(EXIT_STOPPED)
        }
    }
}

fn verify(a: &VerifyArgs, stdout: &mut dyn Write, stderr: &mut dyn Write) -> Result<i32> {
    let mut opts = VerifyOptions {
        only: a.only.clone(),
        seed: a.seed,
        ..Default::default()
    };
    if let Some(m) = &a.metric {
        let spec = parse_metric_arg(m)?;
        build_metric(&spec)?;
        opts.metrics = Some(vec![spec]);
    }
    let report = run_verification(&opts)?;
    write_out(&a.out, &report.to_json(), stdout)?;
    if report.passed() {
        Ok(EXIT_OK)
    } else {
        for f in report.failures() {
            writeln!(stderr, "failed: {f}")?;
        }
        Ok(EXIT_VERIFY_FAILED)
    }
}

/// Applies `FFL_THREADS` to the global worker pool.
fn configure_threads(stderr: &mut dyn Write) {
    if let Ok(v) = std::env::var("FFL_THREADS") {
        match v.trim().parse::<usize>() {
            Ok(n) if n > 0 => {
                // fails only if the pool already exists, e.g. on a second call in-process
                let _ = rayon::ThreadPoolBuilder::new()
                    .num_threads(n)
                    .build_global();
            }
            _ => {
                let _ = writeln!(
                    stderr,
                    "ignoring FFL_THREADS={v}: expected a positive integer"
                );
            }
        }
    }
}

/// Parses `args` (program name first), runs the command and returns the
/// exit code.
pub fn run<I, T>(args: I, stdout: &mut dyn Write, stderr: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = write!(stderr, "{}", e.render());
            return if e.use_stderr() { EXIT_CONFIG } else { EXIT_OK };
        }
    };
    configure_threads(stderr);
    let result = match &cli.command {
        Command::Inspect(a) => {
            inspect(a).and_then(|text| write_out(&a.out, &text, stdout).map(|_| EXIT_OK))
        }
        Command::Flow(a) => flow(a, stdout, stderr),
        Command::Verify(a) => verify(a, stdout, stderr),
    };
    match result {
        Ok(code) => code,
        Err(e) => {
            let _ = writeln!(stderr, "error: {e}");
            exit_code(&e)
        }
    }
}
