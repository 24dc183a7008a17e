//! Command-line front end. Parsing lives in [`Cli`]; [`run`] does the work
//! and reports failures as a [`CliError`] carrying the process exit code.

use std::f64::consts::PI;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use crate::criterion::CriterionContext;
use crate::error::Error;
use crate::fourier::{CurveSet, SpectralTable, WeightAssessment, WeightScheme, WeightSpec};
use crate::inference::{infer, CovarianceReport};
use crate::landmark::{align_by_max_each, Bandwidth, LandmarkConfig};
use crate::optimizer::{minimize, EstimationResult, OptimizerConfig};
use crate::simulate::{self, CustomPattern, MonteCarloSummary, Pattern, SimulationSpec};

pub const SCHEMA_VERSION: u32 = 1;

const SWEEP_SIGMAS: [f64; 4] = [1.0, 3.0, 5.0, 7.0];

#[derive(Debug, Parser)]
#[command(
    name = "shiftest",
    version,
    about = "Shift estimation among noisy periodic curves"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Estimate shifts, intervals and the aligned mean from a CSV file.
    Estimate(EstimateArgs),
    /// Run a Monte Carlo study on synthetic curves.
    Simulate(SimulateArgs),
    /// Compare with landmark (curve maximum) alignment.
    CompareLandmark(CompareArgs),
}

#[derive(Debug, Clone, Args)]
pub struct FitArgs {
    /// Period T; inferred from a `t` column when absent, else 2 pi.
    #[arg(long)]
    pub period: Option<f64>,
    /// `power:<beta>`, `unit` or `file:<path>` (delta_1..delta_L, one per line).
    #[arg(long, default_value = "power:1.3")]
    pub weights: String,
    #[arg(long, default_value_t = 0.95)]
    pub confidence: f64,
    #[arg(long, default_value_t = 500)]
    pub max_iters: usize,
    #[arg(long, default_value_t = 1e-8)]
    pub grad_tol: f64,
}

#[derive(Debug, Clone, Args)]
pub struct EstimateArgs {
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long)]
    pub output_dir: PathBuf,
    #[command(flatten)]
    pub fit: FitArgs,
    /// Drop the last sample when n is even instead of failing.
    #[arg(long)]
    pub truncate_even: bool,
}

#[derive(Debug, Clone, Args)]
pub struct StudyArgs {
    /// `sinc15`, `cosine` or `file:<path>` (one period of samples, one per line).
    #[arg(long, default_value = "sinc15")]
    pub pattern: String,
    #[arg(long, default_value_t = 10)]
    pub n_curves: usize,
    #[arg(long, default_value_t = 101)]
    pub n_samples: usize,
    #[arg(long, default_value_t = 1.0)]
    pub sigma: f64,
    #[arg(long, default_value_t = 200)]
    pub replicates: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Landmark smoothing bandwidth: `cv`, `rule` or a positive number.
    #[arg(long, default_value = "cv")]
    pub bandwidth: String,
}

#[derive(Debug, Clone, Args)]
pub struct SimulateArgs {
    #[arg(long)]
    pub output_dir: PathBuf,
    #[command(flatten)]
    pub fit: FitArgs,
    #[command(flatten)]
    pub study: StudyArgs,
}

#[derive(Debug, Clone, Args)]
pub struct CompareArgs {
    /// Curves to compare; without it a simulated study is run.
    #[arg(long)]
    pub input: Option<PathBuf>,
    #[arg(long)]
    pub output_dir: PathBuf,
    #[command(flatten)]
    pub fit: FitArgs,
    #[command(flatten)]
    pub study: StudyArgs,
    #[arg(long)]
    pub truncate_even: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Stage {
    Input,
    Estimation,
    Inference,
    Output,
}

#[derive(Debug)]
pub struct CliError {
    pub stage: Stage,
    pub message: String,
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self.stage {
            Stage::Input => 2,
            Stage::Estimation => 3,
            Stage::Inference => 4,
            Stage::Output => 1,
        }
    }

    fn at(stage: Stage) -> impl Fn(Error) -> CliError {
        move |e| CliError {
            stage,
            message: e.to_string(),
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let stage = match self.stage {
            Stage::Input => "input",
            Stage::Estimation => "estimation",
            Stage::Inference => "inference",
            Stage::Output => "output",
        };
        write!(f, "{stage} failed: {}", self.message)
    }
}

impl std::error::Error for CliError {}

type CliResult<T> = std::result::Result<T, CliError>;

fn input_err(msg: impl Into<String>) -> CliError {
    CliError {
        stage: Stage::Input,
        message: msg.into(),
    }
}

fn output_err(e: impl std::fmt::Display) -> CliError {
    CliError {
        stage: Stage::Output,
        message: e.to_string(),
    }
}

/// Curves read from a CSV file.
#[derive(Debug, Clone, PartialEq)]
pub struct InputData {
    pub names: Vec<String>,
    /// The `t` column, when present.
    pub times: Option<Vec<f64>>,
    /// One vector per curve.
    pub samples: Vec<Vec<f64>>,
}

impl InputData {
    pub fn n_samples(&self) -> usize {
        self.samples.first().map_or(0, Vec::len)
    }

    /// `n * dt` from the `t` column.
    pub fn inferred_period(&self) -> Option<f64> {
        let t = self.times.as_ref()?;
        (t.len() >= 2).then(|| (t[1] - t[0]) * t.len() as f64)
    }

    fn truncate_last(&mut self) {
        for s in &mut self.samples {
            s.pop();
        }
        if let Some(t) = &mut self.times {
            t.pop();
        }
    }
}

fn parse_number(field: &str, line: usize, column: &str) -> CliResult<f64> {
    let v: f64 = field.trim().parse().map_err(|_| {
        input_err(format!(
            "line {line}, column '{column}': cannot parse '{field}' as a number"
        ))
    })?;
    if !v.is_finite() {
        return Err(input_err(format!(
            "line {line}, column '{column}': value is not finite"
        )));
    }
    Ok(v)
}

/// Header row, optional leading `t` column (must be equispaced), one column
/// per curve.
pub fn read_csv(path: &Path) -> CliResult<InputData> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_path(path)
        .map_err(|e| input_err(format!("{}: {e}", path.display())))?;
    let headers: Vec<String> = reader
        .headers()
        .map_err(|e| input_err(format!("{}: {e}", path.display())))?
        .iter()
        .map(|h| h.trim().to_string())
        .collect();
    let has_time = headers.first().is_some_and(|h| h == "t");
    let names: Vec<String> = headers[usize::from(has_time)..].to_vec();
    if names.len() < 2 {
        return Err(input_err(format!(
            "need at least two curve columns, found {}",
            names.len()
        )));
    }
    let mut times = Vec::new();
    let mut samples = vec![Vec::new(); names.len()];
    for (k, record) in reader.records().enumerate() {
        let line = k + 2;
        let record = record.map_err(|e| input_err(format!("line {line}: {e}")))?;
        if record.len() != headers.len() {
            return Err(input_err(format!(
                "line {line}: expected {} fields, found {}",
                headers.len(),
                record.len()
            )));
        }
        let mut fields = record.iter();
        if has_time {
            times.push(parse_number(fields.next().unwrap_or(""), line, "t")?);
        }
        for ((field, name), column) in fields.zip(&names).zip(samples.iter_mut()) {
            column.push(parse_number(field, line, name)?);
        }
    }
    if samples[0].len() < 3 {
        return Err(input_err(format!(
            "need at least 3 samples per curve, found {}",
            samples[0].len()
        )));
    }
    if has_time {
        let step = times[1] - times[0];
        if !(step > 0.0) {
            return Err(input_err("t column must be increasing"));
        }
        let tol = 1e-6 * step;
        for (i, w) in times.windows(2).enumerate() {
            if ((w[1] - w[0]) - step).abs() > tol {
                return Err(input_err(format!(
                    "t column is not equispaced at row {}",
                    i + 3
                )));
            }
        }
    }
    Ok(InputData {
        names,
        times: has_time.then_some(times),
        samples,
    })
}

/// Non-empty, non-comment lines of a file as numbers.
fn read_number_list(path: &str) -> CliResult<Vec<f64>> {
    let text = fs::read_to_string(path).map_err(|e| input_err(format!("{path}: {e}")))?;
    text.lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.trim()))
        .filter(|(_, l)| !l.is_empty() && !l.starts_with('#'))
        .map(|(i, l)| parse_number(l, i, path))
        .collect()
}

pub fn parse_weights(spec: &str) -> CliResult<WeightSpec> {
    match spec.trim().strip_prefix("file:") {
        Some(path) => Ok(WeightSpec::Positive(read_number_list(path)?)),
        None => spec.parse().map_err(CliError::at(Stage::Input)),
    }
}

pub fn parse_pattern(spec: &str) -> CliResult<Pattern> {
    match spec.trim() {
        "sinc15" => Ok(Pattern::Sinc15),
        "cosine" => Ok(Pattern::Cosine),
        other => match other.strip_prefix("file:") {
            Some(path) => Ok(Pattern::Custom(
                CustomPattern::new(read_number_list(path)?).map_err(CliError::at(Stage::Input))?,
            )),
            None => Err(input_err(format!(
                "unknown pattern '{other}', expected sinc15, cosine or file:<path>"
            ))),
        },
    }
}

pub fn parse_bandwidth(spec: &str) -> CliResult<LandmarkConfig> {
    let bandwidth = match spec.trim() {
        "cv" => Bandwidth::CrossValidated,
        "rule" => Bandwidth::RuleOfThumb,
        other => {
            let h: f64 = other
                .parse()
                .map_err(|_| input_err(format!("bad bandwidth '{other}'")))?;
            return LandmarkConfig::fixed(h).map_err(CliError::at(Stage::Input));
        }
    };
    Ok(LandmarkConfig { bandwidth })
}

fn optimizer_config(fit: &FitArgs) -> CliResult<OptimizerConfig> {
    let config = OptimizerConfig {
        max_iterations: fit.max_iters,
        gradient_tolerance: fit.grad_tol,
        ..OptimizerConfig::default()
    };
    config.validate().map_err(CliError::at(Stage::Input))?;
    Ok(config)
}

fn check_confidence(level: f64) -> CliResult<()> {
    if level > 0.0 && level < 1.0 {
        Ok(())
    } else {
        Err(CliError::at(Stage::Input)(Error::InvalidConfidence(level)))
    }
}

fn warn(warnings: &mut Vec<String>, message: String) {
    eprintln!("warning: {message}");
    warnings.push(message);
}

fn weight_warning(weights: &WeightScheme) -> Option<String> {
    match weights.assessment() {
        WeightAssessment::Satisfied => None,
        WeightAssessment::Unverified(m) | WeightAssessment::Violated(m) => Some(m),
    }
}

/// Validated curves ready for fitting.
struct Prepared {
    data: InputData,
    curves: CurveSet,
    truncated: bool,
    warnings: Vec<String>,
}

fn prepare(input: &Path, fit: &FitArgs, truncate_even: bool) -> CliResult<Prepared> {
    let mut data = read_csv(input)?;
    let mut warnings = Vec::new();
    let n = data.n_samples();
    let period = match (fit.period, data.inferred_period()) {
        (Some(p), _) => p,
        (None, Some(p)) => p,
        (None, None) => 2.0 * PI,
    };
    if !(period > 0.0 && period.is_finite()) {
        return Err(input_err(format!("period must be positive, got {period}")));
    }
    let mut truncated = false;
    let mut period_used = period;
    if n.is_multiple_of(2) {
        if !truncate_even {
            return Err(CliError::at(Stage::Input)(Error::EvenSampleCount(n)));
        }
        data.truncate_last();
        period_used = period * (n - 1) as f64 / n as f64;
        truncated = true;
        warn(
            &mut warnings,
            format!(
                "even sample count {n}: dropped the last sample, period {period} becomes {period_used}"
            ),
        );
    }
    let curves =
        CurveSet::new(data.samples.clone(), period_used).map_err(CliError::at(Stage::Input))?;
    Ok(Prepared {
        data,
        curves,
        truncated,
        warnings,
    })
}

struct Fitted {
    ctx: CriterionContext,
    fit: EstimationResult,
}

fn fit_curves(curves: &CurveSet, fit: &FitArgs, warnings: &mut Vec<String>) -> CliResult<Fitted> {
    let spec = parse_weights(&fit.weights)?;
    let config = optimizer_config(fit)?;
    let table = SpectralTable::from_curves(curves).map_err(CliError::at(Stage::Input))?;
    let weights = spec
        .build(table.cutoff())
        .map_err(CliError::at(Stage::Input))?;
    if let Some(w) = weight_warning(&weights) {
        warn(warnings, w);
    }
    let ctx = CriterionContext::new(table, weights).map_err(CliError::at(Stage::Estimation))?;
    let fit = minimize(&ctx, &config).map_err(CliError::at(Stage::Estimation))?;
    if !fit.converged {
        warn(
            warnings,
            format!(
                "optimizer stopped after {} iterations with gradient norm {:e}",
                fit.iterations, fit.gradient_norm
            ),
        );
    }
    Ok(Fitted { ctx, fit })
}

fn time_axis(data: &InputData, curves: &CurveSet) -> Vec<f64> {
    match &data.times {
        Some(t) => t.clone(),
        None => curves.times(),
    }
}

fn fmt(x: f64) -> String {
    // normalise negative zero so outputs do not depend on rounding paths
    if x == 0.0 {
        "0".into()
    } else {
        format!("{x}")
    }
}

fn csv_writer(path: &Path) -> CliResult<csv::Writer<fs::File>> {
    csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_path(path)
        .map_err(|e| output_err(format!("{}: {e}", path.display())))
}

fn write_rows(path: &Path, header: &[String], rows: &[Vec<String>]) -> CliResult<()> {
    let mut w = csv_writer(path)?;
    w.write_record(header).map_err(output_err)?;
    for r in rows {
        w.write_record(r).map_err(output_err)?;
    }
    w.flush().map_err(output_err)
}

fn write_json(path: &Path, value: &impl Serialize) -> CliResult<()> {
    let mut text = serde_json::to_string_pretty(value).map_err(output_err)?;
    text.push('\n');
    fs::write(path, text).map_err(|e| output_err(format!("{}: {e}", path.display())))
}

fn create_dir(path: &Path) -> CliResult<()> {
    fs::create_dir_all(path).map_err(|e| output_err(format!("{}: {e}", path.display())))
}

/// Columns `j..` of the data in curve-major order as CSV rows.
fn curve_rows(times: Option<&[f64]>, curves: &[Vec<f64>]) -> Vec<Vec<String>> {
    let n = curves.first().map_or(0, Vec::len);
    (0..n)
        .map(|i| {
            times
                .map(|t| fmt(t[i]))
                .into_iter()
                .chain(curves.iter().map(|c| fmt(c[i])))
                .collect()
        })
        .collect()
}

#[derive(Debug, Serialize)]
struct Convergence {
    converged: bool,
    iterations: usize,
    gradient_norm: f64,
    starts: usize,
}

#[derive(Debug, Serialize)]
struct Identifiability {
    passed: bool,
    threshold: f64,
    active_frequencies: Vec<i64>,
    coprime_pair: Option<(i64, i64)>,
}

#[derive(Debug, Serialize)]
struct EstimateReport {
    schema_version: u32,
    command: &'static str,
    input: String,
    curves: Vec<String>,
    n_curves: usize,
    n_samples: usize,
    period: f64,
    truncated: bool,
    weights: String,
    criterion_value: f64,
    alpha_hat: Vec<f64>,
    theta_hat: Vec<f64>,
    sigma2_hat: f64,
    gamma_scalar: f64,
    confidence: f64,
    convergence: Convergence,
    identifiability: Identifiability,
    warnings: Vec<String>,
}

pub fn cmd_estimate(args: &EstimateArgs) -> CliResult<()> {
    check_confidence(args.fit.confidence)?;
    let Prepared {
        data,
        curves,
        truncated,
        mut warnings,
    } = prepare(&args.input, &args.fit, args.truncate_even)?;
    let Fitted { ctx, fit } = fit_curves(&curves, &args.fit, &mut warnings)?;
    let period = curves.period();
    let report =
        infer(&ctx, &fit, period, args.fit.confidence).map_err(CliError::at(Stage::Inference))?;
    let check = ctx.identifiability(report.sigma2_hat);
    if !check.passed() {
        warn(
            &mut warnings,
            format!(
                "no pair of coprime frequencies with weight and mean modulus above {:e}; shifts may not be identifiable",
                check.threshold
            ),
        );
    }

    let aligned = ctx
        .table()
        .rephase(&fit.alpha_hat.lift())
        .and_then(|t| t.to_curves(period))
        .map_err(CliError::at(Stage::Estimation))?;

    create_dir(&args.output_dir)?;
    write_shifts(
        &args.output_dir.join("shifts.csv"),
        &data.names,
        &fit,
        &report,
        period,
    )?;

    let times = time_axis(&data, &curves);
    let header: Vec<String> = data
        .times
        .as_ref()
        .map(|_| "t".to_string())
        .into_iter()
        .chain(data.names.iter().cloned())
        .collect();
    write_rows(
        &args.output_dir.join("aligned.csv"),
        &header,
        &curve_rows(data.times.as_deref(), aligned.curves()),
    )?;

    let raw_mean = curves.mean_curve();
    let aligned_mean = aligned.mean_curve();
    let rows: Vec<Vec<String>> = (0..times.len())
        .map(|i| vec![fmt(times[i]), fmt(raw_mean[i]), fmt(aligned_mean[i])])
        .collect();
    write_rows(
        &args.output_dir.join("mean.csv"),
        &["t".into(), "raw_mean".into(), "aligned_mean".into()],
        &rows,
    )?;

    let cov = report.alpha_covariance();
    let rows: Vec<Vec<String>> = (0..cov.nrows())
        .map(|a| (0..cov.ncols()).map(|b| fmt(cov[(a, b)])).collect())
        .collect();
    write_rows(
        &args.output_dir.join("covariance.csv"),
        &data.names[1..],
        &rows,
    )?;

    let json = EstimateReport {
        schema_version: SCHEMA_VERSION,
        command: "estimate",
        input: args.input.display().to_string(),
        curves: data.names.clone(),
        n_curves: curves.n_curves(),
        n_samples: curves.n_samples(),
        period,
        truncated,
        weights: ctx.weights().describe(),
        criterion_value: fit.criterion_value,
        alpha_hat: fit.alpha_hat.lift(),
        theta_hat: fit
            .alpha_hat
            .lift()
            .iter()
            .map(|a| a * period / (2.0 * PI))
            .collect(),
        sigma2_hat: report.sigma2_hat,
        gamma_scalar: report.gamma_scalar,
        confidence: report.level,
        convergence: Convergence {
            converged: fit.converged,
            iterations: fit.iterations,
            gradient_norm: fit.gradient_norm,
            starts: fit.starts,
        },
        identifiability: Identifiability {
            passed: check.passed(),
            threshold: check.threshold,
            active_frequencies: check.active.clone(),
            coprime_pair: check.coprime_pair,
        },
        warnings,
    };
    write_json(&args.output_dir.join("report.json"), &json)
}

fn write_shifts(
    path: &Path,
    names: &[String],
    fit: &EstimationResult,
    report: &CovarianceReport,
    period: f64,
) -> CliResult<()> {
    let header: Vec<String> = [
        "j",
        "curve",
        "theta_hat",
        "alpha_hat",
        "std_error",
        "ci_lower",
        "ci_upper",
        "ci_lower_time",
        "ci_upper_time",
    ]
    .iter()
    .map(|s| s.to_string())
    .collect();
    let theta = fit.alpha_hat.to_time(period);
    let mut rows = vec![vec![
        "1".to_string(),
        names[0].clone(),
        "0".into(),
        "0".into(),
        "0".into(),
        "0".into(),
        "0".into(),
        "0".into(),
        "0".into(),
    ]];
    for (k, iv) in report.intervals.iter().enumerate() {
        rows.push(vec![
            (k + 2).to_string(),
            names[k + 1].clone(),
            fmt(theta[k + 1]),
            fmt(iv.estimate),
            fmt(report.std_errors[k]),
            fmt(iv.lower),
            fmt(iv.upper),
            fmt(iv.lower_time),
            fmt(iv.upper_time),
        ]);
    }
    write_rows(path, &header, &rows)
}

fn study_spec(fit: &FitArgs, study: &StudyArgs) -> CliResult<SimulationSpec> {
    check_confidence(fit.confidence)?;
    let spec = SimulationSpec {
        pattern: parse_pattern(&study.pattern)?,
        n_curves: study.n_curves,
        n_samples: study.n_samples,
        period: fit.period.unwrap_or(2.0 * PI),
        sigma: study.sigma,
        shift_law: Default::default(),
        weights: parse_weights(&fit.weights)?,
        replicates: study.replicates,
        seed: study.seed,
        optimizer: optimizer_config(fit)?,
        landmark: Some(parse_bandwidth(&study.bandwidth)?),
        confidence: fit.confidence,
    };
    spec.validate().map_err(CliError::at(Stage::Input))?;
    Ok(spec)
}

#[derive(Debug, Serialize)]
struct SweepEntry {
    sigma: f64,
    weights: String,
    argmin: f64,
    plotdata: String,
}

#[derive(Debug, Serialize)]
struct SimulateReport<'a> {
    schema_version: u32,
    command: &'static str,
    study: &'a MonteCarloSummary,
    weight_sweep: Vec<SweepEntry>,
    warnings: Vec<String>,
}

fn sweep_file_stem(sigma: f64, weights: &str) -> String {
    format!("criterion_sigma{}_{}", fmt(sigma), weights.replace(':', ""))
}

pub fn cmd_simulate(args: &SimulateArgs) -> CliResult<()> {
    let spec = study_spec(&args.fit, &args.study)?;
    let mut warnings = Vec::new();
    if let Ok(w) = spec.weights.build(spec.cutoff()) {
        if let Some(m) = weight_warning(&w) {
            warn(&mut warnings, m);
        }
    }
    let summary = simulate::run_study(&spec).map_err(CliError::at(Stage::Estimation))?;
    if summary.estimation_failures > 0 {
        warn(
            &mut warnings,
            format!(
                "{} replicates failed to estimate",
                summary.estimation_failures
            ),
        );
    }
    if summary.not_converged > 0 {
        warn(
            &mut warnings,
            format!("{} replicates hit the iteration cap", summary.not_converged),
        );
    }

    let sweep_base = SimulationSpec {
        shift_law: simulate::ShiftLaw::Explicit(vec![PI / 3.0]),
        n_curves: 2,
        landmark: None,
        ..spec.clone()
    };
    let sweep_weights = [
        WeightSpec::Unit,
        WeightSpec::Power(1.3),
        WeightSpec::Power(2.0),
    ];
    let cells = simulate::weight_sweep(&sweep_base, &SWEEP_SIGMAS, &sweep_weights)
        .map_err(CliError::at(Stage::Estimation))?;

    let out = &args.output_dir;
    create_dir(&out.join("plotdata"))?;
    create_dir(&out.join("figures"))?;
    let mut sweep = Vec::with_capacity(cells.len());
    for cell in &cells {
        let stem = sweep_file_stem(cell.sigma, &cell.weights);
        let rows: Vec<Vec<String>> = cell
            .points
            .iter()
            .map(|&(a, v)| vec![fmt(a), fmt(v)])
            .collect();
        let data_path = out.join("plotdata").join(format!("{stem}.csv"));
        write_rows(&data_path, &["alpha".into(), "criterion".into()], &rows)?;
        let svg = line_chart(
            &format!("sigma = {}, weights {}", fmt(cell.sigma), cell.weights),
            "alpha",
            "criterion",
            &cell.points,
            Some(PI / 3.0),
        );
        fs::write(out.join("figures").join(format!("{stem}.svg")), svg).map_err(output_err)?;
        sweep.push(SweepEntry {
            sigma: cell.sigma,
            weights: cell.weights.clone(),
            argmin: cell.argmin,
            plotdata: format!("plotdata/{stem}.csv"),
        });
    }

    write_replicates(&out.join("replicates.csv"), &summary, spec.period)?;
    write_json(
        &out.join("summary.json"),
        &SimulateReport {
            schema_version: SCHEMA_VERSION,
            command: "simulate",
            study: &summary,
            weight_sweep: sweep,
            warnings,
        },
    )
}

fn opt(x: Option<f64>) -> String {
    x.map(fmt).unwrap_or_default()
}

fn write_replicates(path: &Path, summary: &MonteCarloSummary, period: f64) -> CliResult<()> {
    let header: Vec<String> = [
        "replicate",
        "j",
        "alpha_true",
        "alpha_hat",
        "theta_true",
        "theta_hat",
        "std_error",
        "covered",
        "alpha_landmark",
        "converged",
    ]
    .iter()
    .map(|s| s.to_string())
    .collect();
    let scale = period / (2.0 * PI);
    let mut rows = Vec::new();
    for r in &summary.records {
        for (k, &truth) in r.alpha_true.iter().enumerate() {
            let hat = r.alpha_hat.as_ref().map(|a| a[k]);
            rows.push(vec![
                r.index.to_string(),
                (k + 2).to_string(),
                fmt(truth),
                opt(hat),
                fmt(truth * scale),
                opt(hat.map(|a| a * scale)),
                opt(r.std_errors.as_ref().map(|s| s[k])),
                r.covered
                    .as_ref()
                    .map(|c| c[k].to_string())
                    .unwrap_or_default(),
                opt(r.landmark_alpha.as_ref().and_then(|l| l[k])),
                r.converged.to_string(),
            ]);
        }
    }
    write_rows(path, &header, &rows)
}

#[derive(Debug, Serialize)]
struct CompareReport {
    schema_version: u32,
    command: &'static str,
    mode: &'static str,
    landmark_bandwidth: String,
    rmse_m_estimator: Option<f64>,
    rmse_landmark: Option<f64>,
    flagged: usize,
    replicates: usize,
    warnings: Vec<String>,
}

fn bandwidth_label(config: &LandmarkConfig) -> String {
    match config.bandwidth {
        Bandwidth::Fixed(h) => fmt(h),
        Bandwidth::CrossValidated => "cv".into(),
        Bandwidth::RuleOfThumb => "rule".into(),
    }
}

pub fn cmd_compare_landmark(args: &CompareArgs) -> CliResult<()> {
    let landmark = parse_bandwidth(&args.study.bandwidth)?;
    let header: Vec<String> = [
        "replicate",
        "j",
        "curve",
        "theta_true",
        "theta_m_estimator",
        "theta_landmark",
        "landmark_flag",
    ]
    .iter()
    .map(|s| s.to_string())
    .collect();
    let mut rows = Vec::new();
    let report = match &args.input {
        Some(input) => {
            check_confidence(args.fit.confidence)?;
            let Prepared {
                data,
                curves,
                mut warnings,
                ..
            } = prepare(input, &args.fit, args.truncate_even)?;
            let Fitted { fit, .. } = fit_curves(&curves, &args.fit, &mut warnings)?;
            let theta = fit.alpha_hat.to_time(curves.period());
            let lm = align_by_max_each(&curves, &landmark);
            let mut flagged = 0;
            for (j, (name, l)) in data.names.iter().zip(&lm).enumerate() {
                let (value, flag) = match l {
                    Ok(v) => (fmt(*v), String::new()),
                    Err(e) => {
                        flagged += 1;
                        (String::new(), e.to_string())
                    }
                };
                if !flag.is_empty() {
                    warn(&mut warnings, format!("curve '{name}': {flag}"));
                }
                rows.push(vec![
                    "0".into(),
                    (j + 1).to_string(),
                    name.clone(),
                    String::new(),
                    fmt(theta[j]),
                    value,
                    flag,
                ]);
            }
            CompareReport {
                schema_version: SCHEMA_VERSION,
                command: "compare-landmark",
                mode: "data",
                landmark_bandwidth: bandwidth_label(&landmark),
                rmse_m_estimator: None,
                rmse_landmark: None,
                flagged,
                replicates: 1,
                warnings,
            }
        }
        None => {
            let mut spec = study_spec(&args.fit, &args.study)?;
            spec.landmark = Some(landmark);
            let summary = simulate::run_study(&spec).map_err(CliError::at(Stage::Estimation))?;
            let scale = spec.period / (2.0 * PI);
            for r in &summary.records {
                rows.push(vec![
                    r.index.to_string(),
                    "1".into(),
                    "curve1".into(),
                    "0".into(),
                    "0".into(),
                    "0".into(),
                    String::new(),
                ]);
                for (k, &truth) in r.alpha_true.iter().enumerate() {
                    let lm = r.landmark_alpha.as_ref().and_then(|l| l[k]);
                    rows.push(vec![
                        r.index.to_string(),
                        (k + 2).to_string(),
                        format!("curve{}", k + 2),
                        fmt(truth * scale),
                        opt(r.alpha_hat.as_ref().map(|a| a[k] * scale)),
                        opt(lm.map(|a| a * scale)),
                        if lm.is_none() {
                            "landmark undefined".into()
                        } else {
                            String::new()
                        },
                    ]);
                }
            }
            let mut warnings = Vec::new();
            if summary.landmark_failures > 0 {
                warn(
                    &mut warnings,
                    format!("{} landmark shifts undefined", summary.landmark_failures),
                );
            }
            CompareReport {
                schema_version: SCHEMA_VERSION,
                command: "compare-landmark",
                mode: "simulation",
                landmark_bandwidth: bandwidth_label(&landmark),
                rmse_m_estimator: summary.rmse,
                rmse_landmark: summary.rmse_landmark,
                flagged: summary.landmark_failures,
                replicates: spec.replicates,
                warnings,
            }
        }
    };
    create_dir(&args.output_dir)?;
    write_rows(&args.output_dir.join("comparison.csv"), &header, &rows)?;
    write_json(&args.output_dir.join("report.json"), &report)
}

pub fn run(cli: &Cli) -> CliResult<()> {
    match &cli.command {
        Command::Estimate(a) => cmd_estimate(a),
        Command::Simulate(a) => cmd_simulate(a),
        Command::CompareLandmark(a) => cmd_compare_landmark(a),
    }
}

/// Static SVG line chart, with an optional dashed vertical marker.
pub fn line_chart(
    title: &str,
    xlabel: &str,
    ylabel: &str,
    points: &[(f64, f64)],
    marker: Option<f64>,
) -> String {
    const W: f64 = 640.0;
    const H: f64 = 400.0;
    const PAD: f64 = 56.0;
    let finite = || points.iter().filter(|p| p.0.is_finite() && p.1.is_finite());
    let (x0, x1) = finite().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), p| {
        (a.min(p.0), b.max(p.0))
    });
    let (mut y0, mut y1) = finite().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), p| {
        (a.min(p.1), b.max(p.1))
    });
    if !(y1 > y0) {
        y0 -= 0.5;
        y1 += 0.5;
    }
    let (x0, x1) = if x1 > x0 {
        (x0, x1)
    } else {
        (x0 - 0.5, x0 + 0.5)
    };
    let sx = |x: f64| PAD + (x - x0) / (x1 - x0) * (W - 2.0 * PAD);
    let sy = |y: f64| H - PAD - (y - y0) / (y1 - y0) * (H - 2.0 * PAD);

    let mut svg = String::new();
    let _ = writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" viewBox="0 0 {W} {H}">"#
    );
    let _ = writeln!(
        svg,
        "<!-- generator: shiftest {} -->",
        env!("CARGO_PKG_VERSION")
    );
    let _ = writeln!(svg, r#"<rect width="{W}" height="{H}" fill="white"/>"#);
    let _ = writeln!(
        svg,
        r#"<text x="{}" y="24" text-anchor="middle" font-family="sans-serif" font-size="15">{}</text>"#,
        W / 2.0,
        escape(title)
    );
    let _ = writeln!(
        svg,
        r#"<path d="M{PAD} {PAD} V{} H{}" fill="none" stroke="black"/>"#,
        H - PAD,
        W - PAD
    );
    for (v, anchor_x, anchor_y, align) in [
        (x0, sx(x0), H - PAD + 18.0, "middle"),
        (x1, sx(x1), H - PAD + 18.0, "middle"),
    ] {
        let _ = writeln!(
            svg,
            r#"<text x="{anchor_x:.2}" y="{anchor_y:.2}" text-anchor="{align}" font-family="sans-serif" font-size="11">{v:.3}</text>"#
        );
    }
    for v in [y0, y1] {
        let _ = writeln!(
            svg,
            r#"<text x="{:.2}" y="{:.2}" text-anchor="end" font-family="sans-serif" font-size="11">{:.3}</text>"#,
            PAD - 6.0,
            sy(v) + 4.0,
            v
        );
    }
    let _ = writeln!(
        svg,
        r#"<text x="{}" y="{}" text-anchor="middle" font-family="sans-serif" font-size="12">{}</text>"#,
        W / 2.0,
        H - 14.0,
        escape(xlabel)
    );
    let _ = writeln!(
        svg,
        r#"<text x="16" y="{}" text-anchor="middle" font-family="sans-serif" font-size="12" transform="rotate(-90 16 {})">{}</text>"#,
        H / 2.0,
        H / 2.0,
        escape(ylabel)
    );
    if let Some(m) = marker.filter(|m| *m >= x0 && *m <= x1) {
        let _ = writeln!(
            svg,
            r#"<line x1="{0:.2}" y1="{PAD}" x2="{0:.2}" y2="{1}" stroke="grey" stroke-dasharray="4 3"/>"#,
            sx(m),
            H - PAD
        );
    }
    let path: Vec<String> = finite()
        .map(|&(x, y)| format!("{:.2},{:.2}", sx(x), sy(y)))
        .collect();
    let _ = writeln!(
        svg,
        r#"<polyline points="{}" fill="none" stroke="steelblue" stroke-width="1.5"/>"#,
        path.join(" ")
    );
    svg.push_str("</svg>\n");
    svg
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    fn write_tmp(dir: &Path, name: &str, text: &str) -> PathBuf {
        let p = dir.join(name);
        let mut f = fs::File::create(&p).unwrap();
        f.write_all(text.as_bytes()).unwrap();
        p
    }

    #[test]
    fn reads_time_column() {
        let dir = tempfile::tempdir().unwrap();
        let p = write_tmp(dir.path(), "a.csv", "t,a,b\n0,1,2\n0.5,3,4\n1,5,6\n");
        let d = read_csv(&p).unwrap();
        assert_eq!(d.names, vec!["a", "b"]);
        assert_eq!(d.times, Some(vec![0.0, 0.5, 1.0]));
        assert_eq!(d.samples, vec![vec![1.0, 3.0, 5.0], vec![2.0, 4.0, 6.0]]);
        assert_eq!(d.inferred_period(), Some(1.5));
    }

    #[test]
    fn rejects_bad_csv() {
        let dir = tempfile::tempdir().unwrap();
        for (name, text) in [
            ("uneven.csv", "t,a,b\n0,1,2\n0.5,3,4\n1.2,5,6\n"),
            ("text.csv", "a,b\n1,x\n2,3\n4,5\n"),
            ("short.csv", "a,b\n1,2\n3,4\n"),
            ("one.csv", "a\n1\n2\n3\n"),
            ("ragged.csv", "a,b\n1,2\n3\n4,5\n"),
        ] {
            let p = write_tmp(dir.path(), name, text);
            let err = read_csv(&p).unwrap_err();
            assert_eq!(err.exit_code(), 2, "{name}: {err}");
        }
    }

    #[test]
    fn weight_and_pattern_specs() {
        let dir = tempfile::tempdir().unwrap();
        let p = write_tmp(dir.path(), "w.txt", "# delta_1..\n1\n0.5\n\n0.25\n");
        let w = parse_weights(&format!("file:{}", p.display())).unwrap();
        assert_eq!(w, WeightSpec::Positive(vec![1.0, 0.5, 0.25]));
        assert_eq!(parse_weights("unit").unwrap(), WeightSpec::Unit);
        assert_eq!(parse_weights("power:2").unwrap(), WeightSpec::Power(2.0));
        assert_eq!(parse_weights("bogus").unwrap_err().exit_code(), 2);
        assert_eq!(parse_pattern("cosine").unwrap(), Pattern::Cosine);
        assert!(parse_pattern("square").is_err());
        let p = write_tmp(dir.path(), "p.txt", "1\n2\n3\n");
        assert!(matches!(
            parse_pattern(&format!("file:{}", p.display())).unwrap(),
            Pattern::Custom(_)
        ));
        assert_eq!(
            parse_bandwidth("0.3").unwrap(),
            LandmarkConfig::fixed(0.3).unwrap()
        );
        assert!(parse_bandwidth("-1").is_err());
        assert_eq!(
            parse_bandwidth("rule").unwrap().bandwidth,
            Bandwidth::RuleOfThumb
        );
    }

    #[test]
    fn svg_is_deterministic() {
        let pts: Vec<(f64, f64)> = (0..10).map(|i| (i as f64, (i * i) as f64)).collect();
        let a = line_chart("x<y", "a", "b", &pts, Some(3.0));
        assert_eq!(a, line_chart("x<y", "a", "b", &pts, Some(3.0)));
        assert!(a.contains("x&lt;y"));
        assert!(a.contains("generator: shiftest"));
        assert!(line_chart("flat", "a", "b", &[(0.0, 1.0), (1.0, 1.0)], None).contains("polyline"));
    }

    #[test]
    fn sweep_names() {
        assert_eq!(
            sweep_file_stem(1.0, "power:1.3"),
            "criterion_sigma1_power1.3"
        );
        assert_eq!(sweep_file_stem(7.0, "unit"), "criterion_sigma7_unit");
    }
}
