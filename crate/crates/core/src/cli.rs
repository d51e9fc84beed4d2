//! Command-line front end: run configuration and solution documents, and the
//! `solve`, `curves`, `interval`, `naive`, `mc-check` and `sweep` commands.
//!
//! Commands write their primary output to the supplied writer (standard
//! output for the binary) or to files named on the command line.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::bsfun::{knots_with_step, IntervalShape, NaiveBs, SEndCondition};
use crate::dist::DegreesOfFreedom;
use crate::error::{invalid, Error, Result};
use crate::mcheck::{compare, McComparison, McSettings};
use crate::optimize::{sensitivity_sweep, solve, InitMode, SolveConfig, SolveReport, Sweep};
use crate::perfeval::{curve, gamma_grid, minimum_coverage, EvalSettings};
use crate::regress::{
    factorial_2x2, fit, realize_interval, standard_interval, ConfidenceInterval, ExternalScale, Geometry,
    RegressionProblem,
};

pub const TOOL_VERSION: &str = env!("CARGO_PKG_VERSION");

// ---------------------------------------------------------------------------
// documents

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum DesignSpec {
    /// Coded `2 x 2` factorial, columns `1, x1, x2, x1 x2`.
    Factorial2x2 { replicates: usize },
    /// CSV with a header row; every column is a column of `X`.
    Csv { path: PathBuf },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ResponseSpec {
    pub path: PathBuf,
    #[serde(default = "default_column")]
    pub column: String,
}

fn default_column() -> String {
    "y".into()
}

fn default_alpha() -> f64 {
    0.05
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProblemSection {
    pub design: DesignSpec,
    pub a: Vec<f64>,
    pub c: Vec<f64>,
    #[serde(default)]
    pub t: f64,
    #[serde(default = "default_alpha")]
    pub alpha: f64,
    /// External estimate of sigma; otherwise the residual estimate is used.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sigma: Option<ExternalScale>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub response: Option<ResponseSpec>,
}

/// The optimizer fields of [`SolveConfig`]; `rho`, `dof` and `alpha` come
/// from the problem.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolveSection {
    pub lambda: f64,
    pub d: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub knots: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub knot_step: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub constraint_delta: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub constraint_count: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub feasibility_tol: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub objective_tol: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_iterations: Option<usize>,
    #[serde(default)]
    pub s_end_condition: SEndCondition,
    #[serde(default)]
    pub init: InitMode,
    #[serde(default)]
    pub multi_start: bool,
    #[serde(default)]
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfigDocument {
    pub problem: ProblemSection,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub solve: Option<SolveSection>,
    #[serde(default)]
    pub eval: EvalSettings,
    #[serde(default)]
    pub mc: McSettings,
}

/// A parsed configuration together with where it came from.
#[derive(Debug, Clone)]
pub struct LoadedConfig {
    pub document: RunConfigDocument,
    pub base_dir: PathBuf,
    pub sha256: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Provenance {
    pub config_sha256: String,
    pub tool_version: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolutionDocument {
    pub report: SolveReport,
    pub provenance: Provenance,
}

fn read_bytes(path: &Path) -> Result<Vec<u8>> {
    fs::read(path).map_err(|source| Error::Io { path: path.display().to_string(), source })
}

fn write_file(path: &Path, contents: &[u8]) -> Result<()> {
    fs::write(path, contents).map_err(|source| Error::Io { path: path.display().to_string(), source })
}

fn hex_digest(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

impl RunConfigDocument {
    pub fn load(path: &Path) -> Result<LoadedConfig> {
        let bytes = read_bytes(path)?;
        let document: Self = serde_json::from_slice(&bytes)?;
        let base_dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Ok(LoadedConfig { document, base_dir, sha256: hex_digest(&bytes) })
    }
}

impl SolutionDocument {
    pub fn load(path: &Path) -> Result<Self> {
        Ok(serde_json::from_slice(&read_bytes(path)?)?)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut text = serde_json::to_string_pretty(self)?;
        text.push('\n');
        write_file(path, text.as_bytes())
    }
}

fn read_numeric_csv(path: &Path) -> Result<(Vec<String>, Vec<Vec<f64>>)> {
    let bytes = read_bytes(path)?;
    let mut reader = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(bytes.as_slice());
    let headers: Vec<String> = reader.headers()?.iter().map(str::to_string).collect();
    let mut rows = Vec::new();
    for (i, record) in reader.records().enumerate() {
        let record = record?;
        let row: Result<Vec<f64>> = record
            .iter()
            .map(|field| {
                field.parse::<f64>().map_err(|_| {
                    invalid(format!("{}: row {}: '{field}' is not a number", path.display(), i + 1))
                })
            })
            .collect();
        rows.push(row?);
    }
    Ok((headers, rows))
}

/// Read column `column` of a CSV file.
pub fn read_response(path: &Path, column: &str) -> Result<DVector<f64>> {
    let (headers, rows) = read_numeric_csv(path)?;
    let j = headers
        .iter()
        .position(|h| h == column)
        .ok_or_else(|| invalid(format!("{} has no column '{column}'", path.display())))?;
    Ok(DVector::from_iterator(rows.len(), rows.iter().map(|r| r[j])))
}

impl LoadedConfig {
    fn resolve(&self, path: &Path) -> PathBuf {
        if path.is_absolute() {
            path.to_path_buf()
        } else {
            self.base_dir.join(path)
        }
    }

    pub fn design(&self) -> Result<DMatrix<f64>> {
        match &self.document.problem.design {
            DesignSpec::Factorial2x2 { replicates } => {
                if *replicates == 0 {
                    return Err(invalid("the factorial design needs at least one replicate"));
                }
                Ok(factorial_2x2(*replicates))
            }
            DesignSpec::Csv { path } => {
                let path = self.resolve(path);
                let (headers, rows) = read_numeric_csv(&path)?;
                if rows.is_empty() {
                    return Err(invalid(format!("{} has no rows", path.display())));
                }
                Ok(DMatrix::from_fn(rows.len(), headers.len(), |i, j| rows[i][j]))
            }
        }
    }

    /// The regression problem, with the response taken from `response`
    /// if given, else from the config's own response entry, if any.
    pub fn problem(&self, response: Option<DVector<f64>>) -> Result<RegressionProblem> {
        let p = &self.document.problem;
        let x = self.design()?;
        let y = match response {
            Some(y) => Some(y),
            None => match &p.response {
                Some(spec) => Some(read_response(&self.resolve(&spec.path), &spec.column)?),
                None => None,
            },
        };
        if let Some(y) = &y {
            if y.len() != x.nrows() {
                return Err(invalid(format!(
                    "the response has {} rows but the design has {}",
                    y.len(),
                    x.nrows()
                )));
            }
        }
        Ok(RegressionProblem {
            x,
            y,
            a: DVector::from_vec(p.a.clone()),
            c: DVector::from_vec(p.c.clone()),
            t: p.t,
            alpha: p.alpha,
            external_scale: p.sigma,
        })
    }

    pub fn geometry(&self) -> Result<Geometry> {
        fit(&self.problem(None)?)
    }

    pub fn solve_config(&self, geom: &Geometry) -> Result<SolveConfig> {
        let s = self
            .document
            .solve
            .as_ref()
            .ok_or_else(|| invalid("the configuration has no 'solve' section"))?;
        let knots = match (&s.knots, s.knot_step) {
            (Some(k), None) => k.clone(),
            (None, Some(step)) => knots_with_step(s.d, step)?,
            (None, None) => knots_with_step(s.d, 1.0)?,
            (Some(_), Some(_)) => return Err(invalid("give either 'knots' or 'knot_step', not both")),
        };
        let mut config = SolveConfig::new(s.lambda, s.d, knots, geom.rho, geom.dof);
        config.alpha = geom.alpha;
        config.eval = self.document.eval.clone();
        config.constraint_count = s.constraint_count;
        config.s_end_condition = s.s_end_condition;
        config.init = s.init;
        config.multi_start = s.multi_start;
        config.seed = s.seed;
        if let Some(v) = s.constraint_delta {
            config.constraint_delta = v;
        }
        if let Some(v) = s.feasibility_tol {
            config.feasibility_tol = v;
        }
        if let Some(v) = s.objective_tol {
            config.objective_tol = v;
        }
        if let Some(v) = s.max_iterations {
            config.max_iterations = v;
        }
        config.validate()?;
        Ok(config)
    }
}

// ---------------------------------------------------------------------------
// command line

#[derive(Debug, Parser)]
#[command(name = "priorci", version, about = "Confidence intervals that use uncertain prior information")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Optimise b and s for a configuration and write the solution JSON.
    Solve(SolveArgs),
    /// Coverage and e^2 of a solution over a gamma grid, as CSV.
    Curves(CurvesArgs),
    /// Standard and new intervals for observed data.
    Interval(IntervalArgs),
    /// Coverage of the interval chosen by a preliminary test.
    Naive(NaiveArgs),
    /// Compare quadrature with Monte Carlo for a solution.
    McCheck(McCheckArgs),
    /// Solve once per value of lambda, d or the knot spacing.
    Sweep(SweepArgs),
}

#[derive(Debug, Args)]
pub struct SolveArgs {
    #[arg(long)]
    pub config: PathBuf,
    /// Where to write the solution (default: solution.json beside the config).
    #[arg(long)]
    pub output: Option<PathBuf>,
    #[arg(long)]
    pub lambda: Option<f64>,
    #[arg(long)]
    pub d: Option<f64>,
    #[arg(long)]
    pub knot_step: Option<f64>,
    #[arg(long)]
    pub max_iterations: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub multi_start: bool,
}

#[derive(Debug, Args)]
pub struct CurvesArgs {
    #[arg(long)]
    pub solution: PathBuf,
    #[arg(long, default_value_t = 10.0)]
    pub gamma_max: f64,
    #[arg(long, default_value_t = 0.05)]
    pub step: f64,
    /// CSV destination (default: standard output).
    #[arg(long)]
    pub output: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct IntervalArgs {
    #[arg(long)]
    pub config: PathBuf,
    #[arg(long)]
    pub solution: PathBuf,
    /// CSV holding the response column.
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long, default_value = "y")]
    pub column: String,
}

#[derive(Debug, Args)]
pub struct NaiveArgs {
    #[arg(long, allow_hyphen_values = true)]
    pub rho: f64,
    /// Critical value of the preliminary test (default: two-sided level `alpha`).
    #[arg(long)]
    pub q: Option<f64>,
    #[arg(long, default_value_t = 0.05)]
    pub alpha: f64,
    #[arg(long)]
    pub dof: DegreesOfFreedom,
    #[arg(long, default_value_t = 10.0)]
    pub gamma_max: f64,
    #[arg(long, default_value_t = 0.05)]
    pub step: f64,
    /// CSV destination; the summary then goes to standard output.
    #[arg(long)]
    pub output: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct McCheckArgs {
    #[arg(long)]
    pub solution: PathBuf,
    #[arg(long, value_delimiter = ',', default_values_t = vec![0.0, 1.0, 2.0, 6.0])]
    pub gammas: Vec<f64>,
    #[arg(long, default_value_t = 1_000_000)]
    pub samples: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub antithetic: bool,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum SweepField {
    Lambda,
    D,
    KnotStep,
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    #[arg(long)]
    pub config: PathBuf,
    #[arg(long, value_enum)]
    pub vary: SweepField,
    #[arg(long, value_delimiter = ',', required = true)]
    pub values: Vec<f64>,
    #[arg(long)]
    pub output_dir: PathBuf,
}

/// How a command finished when it did not fail outright.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Outcome {
    Success,
    NotConverged,
}

impl Outcome {
    pub fn exit_code(self) -> i32 {
        match self {
            Outcome::Success => 0,
            Outcome::NotConverged => 1,
        }
    }
}

/// Exit code for a failed command: 1 for numerical failure, 2 for bad input.
pub fn exit_code(err: &Error) -> i32 {
    match err {
        Error::Subproblem(_) => 1,
        _ => 2,
    }
}

/// Machine-readable error for standard error.
pub fn error_json(err: &Error) -> String {
    let kind = match err {
        Error::InvalidArgument(_) => "invalid_argument",
        Error::SingularDesign(_) => "singular_design",
        Error::DegenerateCorrelation => "degenerate_correlation",
        Error::InfiniteDofUnsupported(_) => "infinite_dof_unsupported",
        Error::Validation(_) => "validation",
        Error::Subproblem(_) => "non_convergence",
        Error::Io { .. } => "io",
        Error::Json(_) => "json",
        Error::Csv(_) => "csv",
    };
    serde_json::json!({ "error": { "kind": kind, "message": err.to_string() } }).to_string()
}

pub fn run(cli: Cli, out: &mut dyn Write) -> Result<Outcome> {
    match cli.command {
        Command::Solve(args) => cmd_solve(&args, out),
        Command::Curves(args) => cmd_curves(&args, out),
        Command::Interval(args) => cmd_interval(&args, out),
        Command::Naive(args) => cmd_naive(&args, out),
        Command::McCheck(args) => cmd_mc_check(&args, out),
        Command::Sweep(args) => cmd_sweep(&args, out),
    }
}

fn io_err(path: &str) -> impl FnOnce(std::io::Error) -> Error + '_ {
    move |source| Error::Io { path: path.to_string(), source }
}

fn print_summary(report: &SolveReport, out: &mut dyn Write) -> Result<()> {
    let lines = [
        format!("lambda                  {}", report.lambda),
        format!("expected gain           {:.4}", report.expected_gain),
        format!("maximum potential loss  {:.4}", report.max_potential_loss),
        format!("gain / loss             {:.4}", report.gain_loss_ratio),
        format!("e^2(0)                  {:.4}", report.e_squared_at_zero),
        format!(
            "min coverage            {:.6} at gamma = {}",
            report.min_coverage_on_fine_grid, report.min_coverage_gamma
        ),
        format!("converged               {} ({} iterations)", report.converged, report.iterations),
    ];
    for line in lines {
        writeln!(out, "{line}").map_err(io_err("stdout"))?;
    }
    Ok(())
}

pub fn cmd_solve(args: &SolveArgs, out: &mut dyn Write) -> Result<Outcome> {
    let mut loaded = RunConfigDocument::load(&args.config)?;
    if let Some(section) = loaded.document.solve.as_mut() {
        if let Some(v) = args.lambda {
            section.lambda = v;
        }
        if let Some(v) = args.d {
            section.d = v;
            if section.knots.is_some() && args.knot_step.is_none() {
                return Err(invalid("overriding d needs --knot-step when the config lists knots"));
            }
        }
        if let Some(v) = args.knot_step {
            section.knots = None;
            section.knot_step = Some(v);
        }
        if let Some(v) = args.max_iterations {
            section.max_iterations = Some(v);
        }
        if let Some(v) = args.seed {
            section.seed = v;
        }
        section.multi_start |= args.multi_start;
    }
    let geom = loaded.geometry()?;
    let config = loaded.solve_config(&geom)?;
    let report = solve(&config)?;
    let converged = report.converged;
    let doc = SolutionDocument {
        report,
        provenance: Provenance { config_sha256: loaded.sha256.clone(), tool_version: TOOL_VERSION.into() },
    };
    let path = args.output.clone().unwrap_or_else(|| loaded.base_dir.join("solution.json"));
    doc.save(&path)?;
    print_summary(&doc.report, out)?;
    Ok(if converged { Outcome::Success } else { Outcome::NotConverged })
}

pub fn cmd_curves(args: &CurvesArgs, out: &mut dyn Write) -> Result<Outcome> {
    let doc = SolutionDocument::load(&args.solution)?;
    let grid = gamma_grid(args.gamma_max, args.step)?;
    let c = curve(&doc.report.bs, doc.report.rho, &grid, &EvalSettings::default())?;
    let text = c.to_csv_string();
    match &args.output {
        Some(path) => write_file(path, text.as_bytes())?,
        None => out.write_all(text.as_bytes()).map_err(io_err("stdout"))?,
    }
    Ok(Outcome::Success)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct IntervalReport {
    pub theta_hat: f64,
    pub tau_hat: f64,
    pub sigma_hat: f64,
    pub test_statistic: f64,
    pub standard: ConfidenceInterval,
    pub new: ConfidenceInterval,
}

pub fn cmd_interval(args: &IntervalArgs, out: &mut dyn Write) -> Result<Outcome> {
    let loaded = RunConfigDocument::load(&args.config)?;
    let doc = SolutionDocument::load(&args.solution)?;
    let y = read_response(&args.data, &args.column)?;
    let geom = fit(&loaded.problem(Some(y))?)?;
    if (geom.rho - doc.report.rho).abs() > 1e-9 {
        return Err(invalid(format!(
            "the solution was computed for rho = {} but this design gives rho = {}",
            doc.report.rho, geom.rho
        )));
    }
    let e = geom.estimates.expect("response supplied");
    let report = IntervalReport {
        theta_hat: e.theta_hat,
        tau_hat: e.tau_hat,
        sigma_hat: e.sigma_hat,
        test_statistic: geom.test_statistic()?,
        standard: standard_interval(&geom)?,
        new: realize_interval(&geom, &doc.report.bs)?,
    };
    writeln!(out, "{}", serde_json::to_string_pretty(&report)?).map_err(io_err("stdout"))?;
    Ok(Outcome::Success)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct NaiveSummary {
    pub rho: f64,
    pub q: f64,
    pub alpha: f64,
    pub dof: DegreesOfFreedom,
    pub grid_min_coverage: f64,
    pub grid_min_gamma: f64,
    pub refined_min_coverage: f64,
    pub refined_min_gamma: f64,
}

pub fn cmd_naive(args: &NaiveArgs, out: &mut dyn Write) -> Result<Outcome> {
    let naive = match args.q {
        Some(q) => NaiveBs::new(q, args.rho, args.alpha, args.dof)?,
        None => NaiveBs::from_test_level(args.alpha, args.rho, args.alpha, args.dof)?,
    };
    let settings = EvalSettings::default();
    let grid = gamma_grid(args.gamma_max, args.step)?;
    let c = curve(&naive, args.rho, &grid, &settings)?;
    let (grid_gamma, grid_min) = c.min_coverage();
    let (refined_gamma, refined_min) =
        minimum_coverage(&naive, args.rho, args.gamma_max, args.step, &settings)?;
    let summary = NaiveSummary {
        rho: args.rho,
        q: naive.q(),
        alpha: args.alpha,
        dof: args.dof,
        grid_min_coverage: grid_min,
        grid_min_gamma: grid_gamma,
        refined_min_coverage: refined_min,
        refined_min_gamma: refined_gamma,
    };
    let summary_text = serde_json::to_string_pretty(&summary)?;
    match &args.output {
        Some(path) => {
            write_file(path, c.to_csv_string().as_bytes())?;
            writeln!(out, "{summary_text}").map_err(io_err("stdout"))?;
        }
        None => {
            out.write_all(c.to_csv_string().as_bytes()).map_err(io_err("stdout"))?;
            eprintln!("{summary_text}");
        }
    }
    Ok(Outcome::Success)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct McCheckReport {
    pub samples: usize,
    pub seed: u64,
    pub antithetic: bool,
    pub rho: f64,
    pub comparisons: Vec<McComparison>,
    pub all_pass: bool,
}

pub fn cmd_mc_check(args: &McCheckArgs, out: &mut dyn Write) -> Result<Outcome> {
    let doc = SolutionDocument::load(&args.solution)?;
    let mc = McSettings { sample_count: args.samples, rng_seed: args.seed, antithetic: args.antithetic };
    mc.validate()?;
    let comparisons = compare(&doc.report.bs, doc.report.rho, &args.gammas, &mc, &EvalSettings::default())?;
    let all_pass = comparisons.iter().all(|c| c.coverage_pass && c.length_pass);
    let report = McCheckReport {
        samples: args.samples,
        seed: args.seed,
        antithetic: args.antithetic,
        rho: doc.report.rho,
        comparisons,
        all_pass,
    };
    writeln!(out, "{}", serde_json::to_string_pretty(&report)?).map_err(io_err("stdout"))?;
    Ok(Outcome::Success)
}

/// Header of the sweep summary CSV.
pub const SWEEP_HEADER: &str =
    "value,lambda,d,knot_step,expected_gain,max_potential_loss,gain_loss_ratio,e_squared_at_zero,min_coverage,converged,error";

pub fn cmd_sweep(args: &SweepArgs, out: &mut dyn Write) -> Result<Outcome> {
    let loaded = RunConfigDocument::load(&args.config)?;
    let geom = loaded.geometry()?;
    let base = loaded.solve_config(&geom)?;
    let sweep = match args.vary {
        SweepField::Lambda => Sweep::Lambda(args.values.clone()),
        SweepField::D => Sweep::Cutoff(args.values.clone()),
        SweepField::KnotStep => Sweep::KnotStep(args.values.clone()),
    };
    let results = sensitivity_sweep(&base, &sweep)?;
    fs::create_dir_all(&args.output_dir).map_err(io_err(&args.output_dir.display().to_string()))?;

    let mut summary = String::from(SWEEP_HEADER);
    summary.push('\n');
    let mut all_converged = true;
    for (i, (value, result)) in args.values.iter().zip(results).enumerate() {
        match result {
            Ok(report) => {
                all_converged &= report.converged;
                let knots = report.bs.knots();
                let line = format!(
                    "{value},{},{},{},{},{},{},{},{},{},\n",
                    report.lambda,
                    report.bs.cutoff(),
                    knots[1] - knots[0],
                    report.expected_gain,
                    report.max_potential_loss,
                    report.gain_loss_ratio,
                    report.e_squared_at_zero,
                    report.min_coverage_on_fine_grid,
                    report.converged,
                );
                summary.push_str(&line);
                let doc = SolutionDocument {
                    report,
                    provenance: Provenance {
                        config_sha256: loaded.sha256.clone(),
                        tool_version: TOOL_VERSION.into(),
                    },
                };
                doc.save(&args.output_dir.join(format!("solution_{i}.json")))?;
            }
            Err(err) => {
                all_converged = false;
                let message = err.to_string().replace([',', '\n'], ";");
                summary.push_str(&format!("{value},,,,,,,,,false,{message}\n"));
            }
        }
    }
    write_file(&args.output_dir.join("summary.csv"), summary.as_bytes())?;
    out.write_all(summary.as_bytes()).map_err(io_err("stdout"))?;
    Ok(if all_converged { Outcome::Success } else { Outcome::NotConverged })
}
