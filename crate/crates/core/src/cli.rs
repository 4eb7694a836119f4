//! Command-line front end. Configuration is merged as flags, then job file,
//! then defaults; each command returns its exit code and output text so the
//! binary only has to print and exit.

use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::chart_io::{read_chart, write_chart, ChartFormatError};
use crate::field::{FieldError, ScalarField, Window};
use crate::regularity::{
    default_trace_tol, run_checks, CheckSettings, HypothesisReport, RegularityError, Verdict,
};
use crate::render::{render_svg, RenderOptions};
use crate::straighten::{build_chart, verify_straightening, StraightenSettings, VerificationReport, VerifyOptions};

pub const DEFAULT_WINDOW: [f64; 4] = [-1.0, 1.0, -1.0, 1.0];
pub const DEFAULT_GRID: usize = 128;
pub const DEFAULT_LEVELS: usize = 64;
pub const DEFAULT_STRIPS: usize = 8;
pub const DEFAULT_ROWS: usize = 17;
pub const DEFAULT_VERIFY_TOL: f64 = 1e-2;
pub const SEED_VAR: &str = "LEVELFLOW_SEED";

#[derive(Debug, Error)]
pub enum CliError {
    #[error("no expression given (use --expr or a job file)")]
    MissingExpression,
    #[error("{what} must be positive")]
    NotPositive { what: &'static str },
    #[error("cannot read {path}: {source}")]
    Read {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("cannot write {path}: {source}")]
    Write {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("job file {path}: {source}")]
    Job {
        path: PathBuf,
        source: serde_json::Error,
    },
    #[error("{SEED_VAR} must be an unsigned integer, got `{0}`")]
    Seed(String),
    #[error(transparent)]
    Field(#[from] FieldError),
    #[error(transparent)]
    Check(#[from] RegularityError),
    #[error("chart file: {0}")]
    Chart(#[from] ChartFormatError),
}

#[derive(Debug, Parser)]
#[command(name = "levelflow", version, about = "Decide whether a planar field is equivalent to a projection and straighten it")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Test both hypotheses; exit 0 equivalent, 1 not equivalent, 2 inconclusive or error.
    Check(JobArgs),
    /// Build and verify the straightening chart; exit 0 pass, 1 hypothesis failure, 2 inconclusive or error, 3 numeric failure.
    Straighten(JobArgs),
    /// Draw level curves, cross-sections and optionally a chart grid as SVG.
    Render(RenderArgs),
}

#[derive(Debug, Clone, Default, Args)]
pub struct JobArgs {
    /// Field expression in x and y.
    #[arg(long)]
    pub expr: Option<String>,
    /// Window bounds [default: -1 1 -1 1].
    #[arg(long, num_args = 4, value_names = ["XMIN", "XMAX", "YMIN", "YMAX"], allow_negative_numbers = true)]
    pub window: Option<Vec<f64>>,
    /// Grid nodes per axis [default: 128 128].
    #[arg(long, num_args = 2, value_names = ["NX", "NY"])]
    pub grid: Option<Vec<usize>>,
    /// Number of levels tested for connectedness [default: 64].
    #[arg(long)]
    pub levels: Option<usize>,
    /// Number of strips of the chart [default: 8].
    #[arg(long)]
    pub strips: Option<usize>,
    /// Sampled levels per strip [default: 17].
    #[arg(long)]
    pub rows: Option<usize>,
    /// Level tracing tolerance [default: 1e-10 times the value span].
    #[arg(long)]
    pub tol_trace: Option<f64>,
    /// Vanishing-gradient threshold [default: 1e-6 times span over diagonal].
    #[arg(long)]
    pub tol_grad: Option<f64>,
    /// Allowed drift between strips [default: 2 cell sizes].
    #[arg(long)]
    pub tol_seam: Option<f64>,
    /// Residual gate |f(phi(x, y)) - y| [default: 1e-2].
    #[arg(long)]
    pub tol_verify: Option<f64>,
    /// Output file: report (check), chart (straighten) or SVG (render).
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// JSON job file; flags override its values.
    #[arg(long)]
    pub job: Option<PathBuf>,
}

#[derive(Debug, Clone, Default, Args)]
pub struct RenderArgs {
    #[command(flatten)]
    pub job: JobArgs,
    /// Chart file whose grid image is drawn on top.
    #[arg(long)]
    pub chart: Option<PathBuf>,
}

/// Job file contents; every field is optional.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct JobFile {
    pub expr: Option<String>,
    pub window: Option<[f64; 4]>,
    pub grid: Option<[usize; 2]>,
    pub levels: Option<usize>,
    pub strips: Option<usize>,
    pub rows: Option<usize>,
    #[serde(default)]
    pub tolerances: ToleranceFile,
    #[serde(default)]
    pub outputs: Outputs,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ToleranceFile {
    pub trace: Option<f64>,
    pub grad: Option<f64>,
    pub seam: Option<f64>,
    pub verify: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Outputs {
    pub report: Option<PathBuf>,
    pub chart: Option<PathBuf>,
    pub svg: Option<PathBuf>,
}

/// Fully resolved configuration. Tolerances left `None` take
/// field-dependent defaults once the field is sampled.
#[derive(Debug, Clone, PartialEq)]
pub struct JobConfig {
    pub expr: String,
    pub window: Window,
    pub levels: usize,
    pub strips: usize,
    pub rows: usize,
    pub tolerances: ToleranceFile,
    pub outputs: Outputs,
    pub seed: u64,
}

impl JobConfig {
    /// Merges flags over the job file (if any) over defaults.
    pub fn resolve(args: &JobArgs, seed: u64) -> Result<Self, CliError> {
        let job = match &args.job {
            Some(path) => {
                let text = std::fs::read_to_string(path).map_err(|source| CliError::Read {
                    path: path.clone(),
                    source,
                })?;
                serde_json::from_str::<JobFile>(&text).map_err(|source| CliError::Job {
                    path: path.clone(),
                    source,
                })?
            }
            None => JobFile::default(),
        };
        Self::merge(args, job, seed)
    }

    pub fn merge(args: &JobArgs, job: JobFile, seed: u64) -> Result<Self, CliError> {
        let expr = args
            .expr
            .clone()
            .or(job.expr)
            .ok_or(CliError::MissingExpression)?;
        let b = args
            .window
            .as_deref()
            .map(|w| [w[0], w[1], w[2], w[3]])
            .or(job.window)
            .unwrap_or(DEFAULT_WINDOW);
        let g = args
            .grid
            .as_deref()
            .map(|g| [g[0], g[1]])
            .or(job.grid)
            .unwrap_or([DEFAULT_GRID, DEFAULT_GRID]);
        let window = Window::new(b[0], b[1], b[2], b[3], g[0], g[1])?;
        let count = |flag: Option<usize>, file: Option<usize>, default, what| {
            let v = flag.or(file).unwrap_or(default);
            if v == 0 {
                Err(CliError::NotPositive { what })
            } else {
                Ok(v)
            }
        };
        let levels = count(args.levels, job.levels, DEFAULT_LEVELS, "levels")?;
        let strips = count(args.strips, job.strips, DEFAULT_STRIPS, "strips")?;
        let rows = count(args.rows, job.rows, DEFAULT_ROWS, "rows")?;
        let t = job.tolerances;
        let tolerances = ToleranceFile {
            trace: args.tol_trace.or(t.trace),
            grad: args.tol_grad.or(t.grad),
            seam: args.tol_seam.or(t.seam),
            verify: args.tol_verify.or(t.verify),
        };
        for (v, what) in [
            (tolerances.trace, "tol-trace"),
            (tolerances.grad, "tol-grad"),
            (tolerances.seam, "tol-seam"),
            (tolerances.verify, "tol-verify"),
        ] {
            if v.is_some_and(|v| !(v > 0.0)) {
                return Err(CliError::NotPositive { what });
            }
        }
        Ok(JobConfig {
            expr,
            window,
            levels,
            strips,
            rows,
            tolerances,
            outputs: job.outputs,
            seed,
        })
    }

    pub fn field(&self) -> Result<ScalarField, CliError> {
        Ok(ScalarField::parse(&self.expr, self.window)?)
    }

    pub fn check_settings(&self, field: &ScalarField) -> CheckSettings {
        let mut s = CheckSettings::for_field(field, self.levels);
        if let Some(t) = self.tolerances.trace {
            s.trace_tol = t;
        }
        if let Some(g) = self.tolerances.grad {
            s.eps_grad = g;
        }
        s
    }

    pub fn straighten_settings(&self, field: &ScalarField) -> StraightenSettings {
        let trace = self.tolerances.trace.unwrap_or_else(|| default_trace_tol(field));
        let mut s = StraightenSettings::for_window(&self.window, self.strips, trace);
        s.sampling.rows = self.rows.max(2);
        if let Some(v) = self.tolerances.seam {
            s.tolerances.seam = v;
        }
        s.tolerances.verify = self.tolerances.verify.unwrap_or(DEFAULT_VERIFY_TOL);
        s
    }
}

/// Seed from `LEVELFLOW_SEED`, zero when unset.
pub fn seed_from_env() -> Result<u64, CliError> {
    match std::env::var(SEED_VAR) {
        Ok(v) => v.trim().parse().map_err(|_| CliError::Seed(v)),
        Err(_) => Ok(0),
    }
}

/// What a command produced.
#[derive(Debug, Clone, PartialEq)]
pub struct Outcome {
    pub code: i32,
    pub stdout: String,
    pub stderr: String,
}

impl Outcome {
    fn error(e: impl std::fmt::Display) -> Self {
        Outcome {
            code: 2,
            stdout: String::new(),
            stderr: format!("error: {e}\n"),
        }
    }
}

/// Exit code of `check` for a report.
pub fn check_exit_code(report: &HypothesisReport) -> i32 {
    match report.verdict {
        Verdict::Equivalent => 0,
        Verdict::NotEquivalent => 1,
        Verdict::Inconclusive => 2,
    }
}

/// Summary of the glued chart for reports.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChartSummary {
    pub levels: Vec<f64>,
    pub offsets: Vec<f64>,
    pub reference: usize,
    pub half_widths: Vec<f64>,
    pub seam_drift: f64,
}

/// Output of `straighten`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StraightenReport {
    pub check: HypothesisReport,
    pub chart: Option<ChartSummary>,
    pub verification: Option<VerificationReport>,
    /// Why no chart was produced, when the construction itself failed.
    pub failure: Option<String>,
}

/// Exit code of `straighten` for a report.
pub fn straighten_exit_code(report: &StraightenReport) -> i32 {
    match report.check.verdict {
        Verdict::NotEquivalent => 1,
        Verdict::Inconclusive => 2,
        Verdict::Equivalent => match &report.verification {
            Some(v) if v.pass && report.failure.is_none() => 0,
            _ => 3,
        },
    }
}

pub fn to_json<T: Serialize>(value: &T) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("reports serialize");
    s.push('\n');
    s
}

fn write_file(path: &Path, contents: &str) -> Result<(), CliError> {
    std::fs::write(path, contents).map_err(|source| CliError::Write {
        path: path.to_path_buf(),
        source,
    })
}

pub fn cmd_check(config: &JobConfig, out: Option<&Path>) -> Outcome {
    let run = || -> Result<Outcome, CliError> {
        let field = config.field()?;
        let (report, _) = run_checks(&field, &config.check_settings(&field))
    ?;
        let json = to_json(&report);
        for path in out.into_iter().chain(config.outputs.report.as_deref()) {
            write_file(path, &json)?;
        }
        Ok(Outcome {
            code: check_exit_code(&report),
            stdout: json,
            stderr: String::new(),
        })
    };
    run().unwrap_or_else(Outcome::error)
}

/// Runs the checks and, when they pass, builds, verifies and writes the
/// chart.
pub fn straighten_report(config: &JobConfig) -> Result<(StraightenReport, Option<String>), CliError> {
    let field = config.field()?;
    let (check, plan) = run_checks(&field, &config.check_settings(&field))
?;
    let mut report = StraightenReport {
        check,
        chart: None,
        verification: None,
        failure: None,
    };
    if report.check.verdict != Verdict::Equivalent {
        return Ok((report, None));
    }
    let Some(spine) = plan.spine else {
        report.failure = Some("no transversal through the window centre".into());
        return Ok((report, None));
    };
    let settings = config.straighten_settings(&field);
    let chart = match build_chart(&field, &spine, field.window().center(), &settings) {
        Ok(c) => c,
        Err(e) => {
            report.failure = Some(e.to_string());
            return Ok((report, None));
        }
    };
    let options = VerifyOptions {
        grid: (config.window.nx, config.window.ny),
        roundtrip_samples: 1000,
        seed: config.seed,
        order_check: true,
    };
    let verification = verify_straightening(&field, &chart, options);
    report.chart = Some(ChartSummary {
        levels: chart.levels(),
        offsets: chart.offsets.clone(),
        reference: chart.reference,
        half_widths: chart.strips.iter().map(|s| s.half_width()).collect(),
        seam_drift: chart.seam_drift,
    });
    report.verification = Some(verification);
    Ok((report, Some(write_chart(&chart))))
}

pub fn cmd_straighten(config: &JobConfig, out: Option<&Path>) -> Outcome {
    let run = || -> Result<Outcome, CliError> {
        let (report, chart) = straighten_report(config)?;
        let json = to_json(&report);
        if let Some(text) = &chart {
            for path in out.into_iter().chain(config.outputs.chart.as_deref()) {
                write_file(path, text)?;
            }
        }
        if let Some(path) = &config.outputs.report {
            write_file(path, &json)?;
        }
        let stderr = report
            .failure
            .as_ref()
            .map(|f| format!("straightening failed: {f}\n"))
            .unwrap_or_default();
        Ok(Outcome {
            code: straighten_exit_code(&report),
            stdout: json,
            stderr,
        })
    };
    run().unwrap_or_else(Outcome::error)
}

/// Renders the configured field. With a chart file and no expression the
/// chart's own expression is drawn.
pub fn cmd_render(args: &RenderArgs, seed: u64) -> Outcome {
    let run = || -> Result<Outcome, CliError> {
        let chart = match &args.chart {
            Some(path) => {
                let text = std::fs::read_to_string(path).map_err(|source| CliError::Read {
                    path: path.clone(),
                    source,
                })?;
                Some(read_chart(&text)?)
            }
            None => None,
        };
        let mut job = args.job.clone();
        if job.expr.is_none() && job.job.is_none() {
            job.expr = chart.as_ref().map(|c| c.expression.clone());
        }
        let config = JobConfig::resolve(&job, seed)?;
        let field = config.field()?;
        let trace = config.tolerances.trace.unwrap_or_else(|| default_trace_tol(&field));
        let mut options = RenderOptions::for_field(&field, config.levels.min(32), trace);
        if let Some(c) = &chart {
            options.levels = c.levels();
        }
        let svg = render_svg(&field, chart.as_ref(), &options);
        match out_path(args.job.out.as_deref(), config.outputs.svg.as_deref()) {
            Some(path) => {
                write_file(path, &svg)?;
                Ok(Outcome {
                    code: 0,
                    stdout: String::new(),
                    stderr: String::new(),
                })
            }
            None => Ok(Outcome {
                code: 0,
                stdout: svg,
                stderr: String::new(),
            }),
        }
    };
    run().unwrap_or_else(Outcome::error)
}

fn out_path<'a>(flag: Option<&'a Path>, file: Option<&'a Path>) -> Option<&'a Path> {
    flag.or(file)
}

/// Entry point used by the binary.
pub fn run(cli: Cli) -> Outcome {
    let seed = match seed_from_env() {
        Ok(s) => s,
        Err(e) => return Outcome::error(e),
    };
    match cli.command {
        Command::Check(args) => match JobConfig::resolve(&args, seed) {
            Ok(config) => cmd_check(&config, args.out.as_deref()),
            Err(e) => Outcome::error(e),
        },
        Command::Straighten(args) => match JobConfig::resolve(&args, seed) {
            Ok(config) => cmd_straighten(&config, args.out.as_deref()),
            Err(e) => Outcome::error(e),
        },
        Command::Render(args) => cmd_render(&args, seed),
    }
}
