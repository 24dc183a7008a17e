//! Synthetic data and replicated Monte Carlo studies of the estimator.
//!
//! Each replicate draws its shifts and noise from a ChaCha20 stream keyed by
//! `(seed, replicate index)`, so replicates can run in any order or in
//! parallel and still produce the same numbers. Normal deviates come from
//! the inverse normal CDF applied to 53-bit uniforms.

use std::f64::consts::PI;

use rand::RngCore;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha20Rng;
use rayon::prelude::*;
use rustfft::num_complex::Complex64;
use serde::Serialize;

use crate::criterion::{ConstrainedShift, CriterionContext};
use crate::error::{Error, Result};
use crate::fourier::{forward_dft, frequencies, CurveSet, SpectralTable, WeightSpec};
use crate::inference::{gamma_matrix, gamma_scalar, infer};
use crate::landmark::{align_by_max_each, LandmarkConfig};
use crate::optimizer::{minimize, OptimizerConfig};
use crate::stats::{mean, median, normal_from_bits, pairwise_sum, sample_covariance};
use crate::wrap_angle;

/// Points of the criterion profile grid over `[-pi, pi]`, ends included.
pub const PROFILE_POINTS: usize = 629;

/// Minimum number of Simpson intervals for the true Fourier coefficients.
const SIMPSON_INTERVALS: usize = 1 << 14;

#[derive(Debug, Clone, PartialEq)]
pub struct CustomPattern {
    samples: Vec<f64>,
    coeffs: Vec<Complex64>,
}

impl CustomPattern {
    /// One period of equispaced samples, odd length.
    pub fn new(samples: Vec<f64>) -> Result<Self> {
        let coeffs = forward_dft(&samples)?;
        Ok(CustomPattern { samples, coeffs })
    }

    pub fn samples(&self) -> &[f64] {
        &self.samples
    }

    fn cutoff(&self) -> usize {
        (self.samples.len() - 1) / 2
    }

    /// Trigonometric interpolant at `u` radians.
    fn eval(&self, u: f64) -> f64 {
        frequencies(self.cutoff())
            .zip(&self.coeffs)
            .map(|(l, c)| (c * Complex64::cis(l as f64 * u)).re)
            .sum()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Pattern {
    /// `15 sin(4u) / (4u)` with `u` in `[-pi, pi)`, the peak placed at the
    /// middle of the period.
    Sinc15,
    /// `cos(2 pi t / T)`.
    Cosine,
    Custom(CustomPattern),
}

impl Pattern {
    pub fn name(&self) -> &'static str {
        match self {
            Pattern::Sinc15 => "sinc15",
            Pattern::Cosine => "cosine",
            Pattern::Custom(_) => "custom",
        }
    }

    /// Value at time `t` for period `period`.
    pub fn eval(&self, t: f64, period: f64) -> f64 {
        let u = 2.0 * PI * t / period;
        match self {
            Pattern::Sinc15 => {
                let v = u.rem_euclid(2.0 * PI) - PI;
                if v == 0.0 {
                    15.0
                } else {
                    15.0 * (4.0 * v).sin() / (4.0 * v)
                }
            }
            Pattern::Cosine => u.cos(),
            Pattern::Custom(p) => p.eval(u),
        }
    }

    /// `f(t_i - theta)` on the grid `t_i = i T / n`.
    pub fn sample(&self, n: usize, period: f64, theta: f64) -> Vec<f64> {
        (0..n)
            .map(|i| self.eval(i as f64 * period / n as f64 - theta, period))
            .collect()
    }

    /// `c_l = (1/T) int_0^T f(t) e^{-i 2 pi l t / T} dt` for `|l| <= cutoff`.
    /// Composite Simpson for the closed-form patterns, exact for custom ones.
    pub fn fourier_coefficients(&self, cutoff: usize) -> Vec<Complex64> {
        if let Pattern::Custom(p) = self {
            let own = p.cutoff() as i64;
            return frequencies(cutoff)
                .map(|l| {
                    if l.abs() <= own {
                        p.coeffs[(l + own) as usize]
                    } else {
                        Complex64::new(0.0, 0.0)
                    }
                })
                .collect();
        }
        let m = SIMPSON_INTERVALS.max(64 * cutoff).next_multiple_of(2);
        let h = 2.0 * PI / m as f64;
        let values: Vec<f64> = (0..=m).map(|k| self.eval(k as f64 * h, 2.0 * PI)).collect();
        frequencies(cutoff)
            .map(|l| {
                let terms: Vec<Complex64> = values
                    .iter()
                    .enumerate()
                    .map(|(k, v)| {
                        let w = if k == 0 || k == m {
                            1.0
                        } else if k % 2 == 1 {
                            4.0
                        } else {
                            2.0
                        };
                        Complex64::cis(-(l as f64) * k as f64 * h) * (w * v)
                    })
                    .collect();
                let re = pairwise_sum(&terms.iter().map(|c| c.re).collect::<Vec<_>>());
                let im = pairwise_sum(&terms.iter().map(|c| c.im).collect::<Vec<_>>());
                Complex64::new(re, im) * (h / 3.0 / (2.0 * PI))
            })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum ShiftLaw {
    /// `alpha_2..alpha_J` i.i.d. uniform on `[-half_width, half_width]`.
    Uniform { half_width: f64 },
    /// Fixed `alpha_2..alpha_J` in radians.
    Explicit(Vec<f64>),
}

impl Default for ShiftLaw {
    fn default() -> Self {
        ShiftLaw::Uniform {
            half_width: PI / 4.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimulationSpec {
    pub pattern: Pattern,
    pub n_curves: usize,
    pub n_samples: usize,
    pub period: f64,
    pub sigma: f64,
    pub shift_law: ShiftLaw,
    pub weights: WeightSpec,
    pub replicates: usize,
    pub seed: u64,
    pub optimizer: OptimizerConfig,
    /// Run the landmark baseline alongside when set.
    pub landmark: Option<LandmarkConfig>,
    pub confidence: f64,
}

impl SimulationSpec {
    /// Defaults: period `2 pi`, uniform shifts on `[-pi/4, pi/4]`, power
    /// weights with exponent 1.3, 200 replicates, seed 0, 95% intervals.
    pub fn new(pattern: Pattern, n_curves: usize, n_samples: usize, sigma: f64) -> Result<Self> {
        let spec = SimulationSpec {
            pattern,
            n_curves,
            n_samples,
            period: 2.0 * PI,
            sigma,
            shift_law: ShiftLaw::default(),
            weights: WeightSpec::default(),
            replicates: 200,
            seed: 0,
            optimizer: OptimizerConfig::default(),
            landmark: None,
            confidence: 0.95,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_samples.is_multiple_of(2) {
            return Err(Error::EvenSampleCount(self.n_samples));
        }
        if self.n_samples < 3 {
            return Err(Error::InvalidInput(format!(
                "need at least 3 samples per curve, got {}",
                self.n_samples
            )));
        }
        if self.n_curves < 2 {
            return Err(Error::SingleCurve);
        }
        if !(self.sigma >= 0.0 && self.sigma.is_finite()) {
            return Err(Error::InvalidInput(format!(
                "noise level must be finite and non-negative, got {}",
                self.sigma
            )));
        }
        if !(self.period > 0.0 && self.period.is_finite()) {
            return Err(Error::InvalidInput(format!(
                "period must be positive, got {}",
                self.period
            )));
        }
        if self.replicates == 0 {
            return Err(Error::InvalidInput("need at least one replicate".into()));
        }
        if !(self.confidence > 0.0 && self.confidence < 1.0) {
            return Err(Error::InvalidConfidence(self.confidence));
        }
        match &self.shift_law {
            ShiftLaw::Uniform { half_width } => {
                if !(*half_width >= 0.0 && *half_width <= PI) {
                    return Err(Error::InvalidInput(format!(
                        "uniform shift half width must lie in [0, pi], got {half_width}"
                    )));
                }
            }
            ShiftLaw::Explicit(alpha) => {
                if alpha.len() != self.n_curves - 1 {
                    return Err(Error::DimensionMismatch {
                        what: "explicit shift vector",
                        expected: self.n_curves - 1,
                        actual: alpha.len(),
                    });
                }
                ConstrainedShift::new(alpha.clone())?;
            }
        }
        if let Pattern::Custom(p) = &self.pattern {
            if p.samples.is_empty() {
                return Err(Error::InvalidInput("custom pattern has no samples".into()));
            }
        }
        self.optimizer.validate()?;
        self.weights.build(self.cutoff())?;
        Ok(())
    }

    pub fn cutoff(&self) -> usize {
        (self.n_samples - 1) / 2
    }
}

/// One synthetic data set with its true shifts.
#[derive(Debug, Clone, PartialEq)]
pub struct Replicate {
    pub curves: CurveSet,
    pub alpha_true: ConstrainedShift,
}

fn uniform(rng: &mut ChaCha20Rng) -> f64 {
    ((rng.next_u64() >> 11) as f64 + 0.5) / (1u64 << 53) as f64
}

/// Replicate `index` of `spec`: shifts first, then the noise row by row.
pub fn generate(spec: &SimulationSpec, index: u64) -> Result<Replicate> {
    spec.validate()?;
    let mut rng = ChaCha20Rng::seed_from_u64(spec.seed);
    rng.set_stream(index);
    let free = match &spec.shift_law {
        ShiftLaw::Uniform { half_width } => (1..spec.n_curves)
            .map(|_| half_width * (2.0 * uniform(&mut rng) - 1.0))
            .collect(),
        ShiftLaw::Explicit(alpha) => alpha.clone(),
    };
    let alpha_true = ConstrainedShift::new(free)?;
    let rows = alpha_true
        .to_time(spec.period)
        .iter()
        .map(|&theta| {
            let mut row = spec.pattern.sample(spec.n_samples, spec.period, theta);
            for v in row.iter_mut() {
                *v += spec.sigma * normal_from_bits(rng.next_u64());
            }
            row
        })
        .collect();
    Ok(Replicate {
        curves: CurveSet::new(rows, spec.period)?,
        alpha_true,
    })
}

/// What one replicate produced. Errors are kept as messages; a failed
/// stage does not stop the study.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ReplicateRecord {
    pub index: u64,
    pub alpha_true: Vec<f64>,
    pub alpha_hat: Option<Vec<f64>>,
    pub criterion_value: Option<f64>,
    pub iterations: usize,
    pub converged: bool,
    pub sigma2_hat: Option<f64>,
    pub std_errors: Option<Vec<f64>>,
    pub covered: Option<Vec<bool>>,
    /// Landmark shifts in radians; `None` entries failed.
    pub landmark_alpha: Option<Vec<Option<f64>>>,
    pub estimation_error: Option<String>,
    pub inference_error: Option<String>,
}

impl ReplicateRecord {
    /// `alpha_hat - alpha*` wrapped into `[-pi, pi]`.
    pub fn errors(&self) -> Option<Vec<f64>> {
        self.alpha_hat.as_ref().map(|hat| {
            hat.iter()
                .zip(&self.alpha_true)
                .map(|(h, t)| wrap_angle(h - t))
                .collect()
        })
    }

    pub fn landmark_errors(&self) -> Option<Vec<Option<f64>>> {
        self.landmark_alpha.as_ref().map(|lm| {
            lm.iter()
                .zip(&self.alpha_true)
                .map(|(h, t)| h.map(|h| wrap_angle(h - t)))
                .collect()
        })
    }

    pub fn max_abs_error(&self) -> Option<f64> {
        self.errors()
            .map(|e| e.iter().fold(0.0f64, |m, x| m.max(x.abs())))
    }
}

/// Estimation, inference and (optionally) the landmark baseline on one
/// data set.
pub fn analyse(spec: &SimulationSpec, data: &Replicate, index: u64) -> ReplicateRecord {
    let mut record = ReplicateRecord {
        index,
        alpha_true: data.alpha_true.free().to_vec(),
        alpha_hat: None,
        criterion_value: None,
        iterations: 0,
        converged: false,
        sigma2_hat: None,
        std_errors: None,
        covered: None,
        landmark_alpha: None,
        estimation_error: None,
        inference_error: None,
    };
    if let Some(config) = &spec.landmark {
        let scale = 2.0 * PI / spec.period;
        record.landmark_alpha = Some(
            align_by_max_each(&data.curves, config)
                .into_iter()
                .skip(1)
                .map(|r| r.ok().map(|t| t * scale))
                .collect(),
        );
    }
    let fitted = SpectralTable::from_curves(&data.curves).and_then(|table| {
        let weights = spec.weights.build(table.cutoff())?;
        let ctx = CriterionContext::new(table, weights)?;
        let fit = minimize(&ctx, &spec.optimizer)?;
        Ok((ctx, fit))
    });
    let (ctx, fit) = match fitted {
        Ok(v) => v,
        Err(e) => {
            record.estimation_error = Some(e.to_string());
            return record;
        }
    };
    record.alpha_hat = Some(fit.alpha_hat.free().to_vec());
    record.criterion_value = Some(fit.criterion_value);
    record.iterations = fit.iterations;
    record.converged = fit.converged;
    match infer(&ctx, &fit, spec.period, spec.confidence) {
        Ok(report) => {
            let errors = record.errors().unwrap_or_default();
            let z_se: Vec<f64> = report
                .intervals
                .iter()
                .map(|iv| iv.upper - iv.estimate)
                .collect();
            record.covered = Some(
                errors
                    .iter()
                    .zip(&z_se)
                    .map(|(e, w)| e.abs() <= *w)
                    .collect(),
            );
            record.sigma2_hat = Some(report.sigma2_hat);
            record.std_errors = Some(report.std_errors);
        }
        Err(e) => record.inference_error = Some(e.to_string()),
    }
    record
}

/// Echo of the settings that produced a summary.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StudySettings {
    pub pattern: String,
    pub n_curves: usize,
    pub n_samples: usize,
    pub period: f64,
    pub sigma: f64,
    pub weights: String,
    pub shift_law: String,
    pub replicates: usize,
    pub seed: u64,
    pub confidence: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MonteCarloSummary {
    pub settings: StudySettings,
    /// `S4 / S2^2` from the pattern's true coefficients.
    pub gamma_scalar: Option<f64>,
    /// `sigma^2 Gamma`, the limit covariance of `sqrt(n)(alpha_hat - alpha*)`.
    pub theoretical_covariance: Option<Vec<Vec<f64>>>,
    pub empirical_covariance: Option<Vec<Vec<f64>>>,
    pub bias: Vec<f64>,
    /// Share of replicates whose interval holds the true shift, per shift.
    pub coverage: Vec<Option<f64>>,
    pub rmse: Option<f64>,
    pub rmse_landmark: Option<f64>,
    pub median_abs_error: Option<f64>,
    pub mean_sigma2_hat: Option<f64>,
    pub estimation_failures: usize,
    pub not_converged: usize,
    pub inference_failures: usize,
    pub landmark_failures: usize,
    pub records: Vec<ReplicateRecord>,
}

fn settings(spec: &SimulationSpec) -> StudySettings {
    StudySettings {
        pattern: spec.pattern.name().into(),
        n_curves: spec.n_curves,
        n_samples: spec.n_samples,
        period: spec.period,
        sigma: spec.sigma,
        weights: spec.weights.label(),
        shift_law: match &spec.shift_law {
            ShiftLaw::Uniform { half_width } => format!("uniform:{half_width}"),
            ShiftLaw::Explicit(_) => "explicit".into(),
        },
        replicates: spec.replicates,
        seed: spec.seed,
        confidence: spec.confidence,
    }
}

/// `sigma^2 S4/S2^2 (I + U)` from the true coefficients, with the scalar.
pub fn theoretical_covariance(spec: &SimulationSpec) -> Result<(f64, Vec<Vec<f64>>)> {
    let weights = spec.weights.build(spec.cutoff())?;
    let power: Vec<f64> = spec
        .pattern
        .fourier_coefficients(spec.cutoff())
        .iter()
        .map(|c| c.norm_sqr())
        .collect();
    let scalar = gamma_scalar(&weights, &power)?;
    let m = gamma_matrix(scalar, spec.n_curves - 1) * spec.sigma.powi(2);
    let rows = (0..m.nrows())
        .map(|a| (0..m.ncols()).map(|b| m[(a, b)]).collect())
        .collect();
    Ok((scalar, rows))
}

fn rms(xs: &[f64]) -> Option<f64> {
    if xs.is_empty() {
        None
    } else {
        Some(mean(&xs.iter().map(|x| x * x).collect::<Vec<_>>()).sqrt())
    }
}

/// Aggregates records in index order.
pub fn summarize(spec: &SimulationSpec, records: Vec<ReplicateRecord>) -> MonteCarloSummary {
    let dim = spec.n_curves - 1;
    let errors: Vec<Vec<f64>> = records.iter().filter_map(|r| r.errors()).collect();
    let root_n = (spec.n_samples as f64).sqrt();
    let scaled: Vec<Vec<f64>> = errors
        .iter()
        .map(|e| e.iter().map(|x| x * root_n).collect())
        .collect();
    let bias = (0..dim)
        .map(|k| {
            if errors.is_empty() {
                0.0
            } else {
                mean(&errors.iter().map(|e| e[k]).collect::<Vec<_>>())
            }
        })
        .collect();
    let flat: Vec<f64> = errors.iter().flatten().copied().collect();
    let coverage = (0..dim)
        .map(|k| {
            let hits: Vec<f64> = records
                .iter()
                .filter_map(|r| r.covered.as_ref())
                .map(|c| if c[k] { 1.0 } else { 0.0 })
                .collect();
            (!hits.is_empty()).then(|| mean(&hits))
        })
        .collect();
    let landmark: Vec<Option<f64>> = records
        .iter()
        .filter_map(|r| r.landmark_errors())
        .flatten()
        .collect();
    let landmark_ok: Vec<f64> = landmark.iter().flatten().copied().collect();
    let sigma2: Vec<f64> = records.iter().filter_map(|r| r.sigma2_hat).collect();
    let theory = theoretical_covariance(spec).ok();
    MonteCarloSummary {
        settings: settings(spec),
        gamma_scalar: theory.as_ref().map(|t| t.0),
        theoretical_covariance: theory.map(|t| t.1),
        empirical_covariance: (scaled.len() >= 2).then(|| sample_covariance(&scaled)),
        bias,
        coverage,
        rmse: rms(&flat),
        rmse_landmark: rms(&landmark_ok),
        median_abs_error: (!flat.is_empty())
            .then(|| median(&flat.iter().map(|x| x.abs()).collect::<Vec<_>>())),
        mean_sigma2_hat: (!sigma2.is_empty()).then(|| mean(&sigma2)),
        estimation_failures: records
            .iter()
            .filter(|r| r.estimation_error.is_some())
            .count(),
        not_converged: records
            .iter()
            .filter(|r| r.alpha_hat.is_some() && !r.converged)
            .count(),
        inference_failures: records
            .iter()
            .filter(|r| r.inference_error.is_some())
            .count(),
        landmark_failures: landmark.iter().filter(|x| x.is_none()).count(),
        records,
    }
}

/// Runs every replicate (in parallel) and aggregates in index order.
pub fn run_study(spec: &SimulationSpec) -> Result<MonteCarloSummary> {
    spec.validate()?;
    let records = (0..spec.replicates as u64)
        .into_par_iter()
        .map(|r| generate(spec, r).map(|data| analyse(spec, &data, r)))
        .collect::<Result<Vec<_>>>()?;
    Ok(summarize(spec, records))
}

/// The grid `-pi + 2 pi k / (PROFILE_POINTS - 1)`.
pub fn profile_grid() -> Vec<f64> {
    (0..PROFILE_POINTS)
        .map(|k| -PI + 2.0 * PI * k as f64 / (PROFILE_POINTS - 1) as f64)
        .collect()
}

/// Criterion along the second shift for a two-curve context.
pub fn criterion_profile(ctx: &CriterionContext) -> Result<Vec<(f64, f64)>> {
    if ctx.n_curves() != 2 {
        return Err(Error::DimensionMismatch {
            what: "curves in a profile",
            expected: 2,
            actual: ctx.n_curves(),
        });
    }
    profile_grid()
        .into_iter()
        .map(|a| Ok((a, ctx.eval_full(&[0.0, a])?)))
        .collect()
}

/// Grid point with the smallest criterion; the first one wins ties.
pub fn profile_argmin(profile: &[(f64, f64)]) -> Option<f64> {
    profile
        .iter()
        .fold(None, |best: Option<(f64, f64)>, &(a, v)| match best {
            Some((_, bv)) if bv <= v => best,
            _ => Some((a, v)),
        })
        .map(|(a, _)| a)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ProfileCell {
    pub sigma: f64,
    pub weights: String,
    pub argmin: f64,
    pub points: Vec<(f64, f64)>,
}

/// Criterion profiles of one two-curve replicate per `(sigma, weights)`
/// cell. All cells of the same `sigma` share the same data.
pub fn weight_sweep(
    base: &SimulationSpec,
    sigmas: &[f64],
    weights: &[WeightSpec],
) -> Result<Vec<ProfileCell>> {
    let mut cells = Vec::with_capacity(sigmas.len() * weights.len());
    for &sigma in sigmas {
        let spec = SimulationSpec {
            sigma,
            n_curves: 2,
            ..base.clone()
        };
        let data = generate(&spec, 0)?;
        let table = SpectralTable::from_curves(&data.curves)?;
        for w in weights {
            let ctx = CriterionContext::new(table.clone(), w.build(table.cutoff())?)?;
            let points = criterion_profile(&ctx)?;
            let argmin = profile_argmin(&points).unwrap_or(0.0);
            cells.push(ProfileCell {
                sigma,
                weights: w.label(),
                argmin,
                points,
            });
        }
    }
    Ok(cells)
}
