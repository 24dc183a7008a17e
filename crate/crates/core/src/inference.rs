//! Plug-in asymptotic covariance and confidence intervals for the shifts.
//!
//! `sqrt(n) (alpha_hat - alpha*)` is asymptotically centred normal with
//! covariance `sigma^2 Gamma`, where
//!
//! ```text
//! Gamma = S4 / S2^2 * (I + U),   S4 = sum_l delta_l^4 l^2 |c_l|^2,
//!                                S2 = sum_l delta_l^2 l^2 |c_l|^2
//! ```
//!
//! and `U` is the all-ones matrix. The unknown `|c_l|^2` are replaced by
//! `|c^_l(alpha_hat)|^2 - sigma^2 / (n J)`, floored at zero.

use nalgebra::DMatrix;

use crate::criterion::ConstrainedShift;
use crate::error::{Error, Result};
use crate::fourier::{frequencies, SpectralTable, WeightScheme};
use crate::optimizer::EstimationResult;
use crate::stats::normal_quantile;
use crate::CriterionContext;

/// `sigma^2 = n J / (J - 1) * mean_l (1/J) sum_j |c~_jl - c^_l|^2`, from
/// `E |c~_jl(alpha*) - c^_l(alpha*)|^2 = (1 - 1/J) sigma^2 / n`.
pub fn estimate_noise_variance(table: &SpectralTable, alpha_hat: &ConstrainedShift) -> Result<f64> {
    let j = table.n_curves();
    if j < 2 {
        return Err(Error::SingleCurve);
    }
    if alpha_hat.dim() != j - 1 {
        return Err(Error::DimensionMismatch {
            what: "free phase vector",
            expected: j - 1,
            actual: alpha_hat.dim(),
        });
    }
    let rephased = table.rephase(&alpha_hat.lift())?;
    let mean = rephased.column_mean();
    let width = table.width();
    let mut total = 0.0;
    for (k, m) in mean.iter().enumerate() {
        total += (0..j)
            .map(|r| (rephased.row(r)[k] - m).norm_sqr())
            .sum::<f64>();
    }
    // mean over l of (1/J) sum_j, times n J / (J - 1)
    let n = width as f64;
    Ok((n / (j - 1) as f64) * total / width as f64)
}

/// `S4 / S2^2` for a given power spectrum `|c_l|^2`, `l = -L..=L`.
pub fn gamma_scalar(weights: &WeightScheme, power: &[f64]) -> Result<f64> {
    if power.len() != weights.values().len() {
        return Err(Error::DimensionMismatch {
            what: "power spectrum",
            expected: weights.values().len(),
            actual: power.len(),
        });
    }
    let (mut s2, mut s4) = (0.0, 0.0);
    for (l, p) in frequencies(weights.cutoff()).zip(power) {
        let d2 = weights.delta(l).powi(2);
        let l2 = (l * l) as f64;
        s2 += d2 * l2 * p;
        s4 += d2 * d2 * l2 * p;
    }
    if !(s2 > 0.0) {
        return Err(Error::SignalIndistinguishableFromNoise);
    }
    Ok(s4 / (s2 * s2))
}

/// `scalar * (I + U)` of size `dim`.
pub fn gamma_matrix(scalar: f64, dim: usize) -> DMatrix<f64> {
    DMatrix::from_fn(dim, dim, |a, b| if a == b { 2.0 * scalar } else { scalar })
}

#[derive(Debug, Clone, PartialEq)]
pub struct GammaEstimate {
    pub scalar: f64,
    pub matrix: DMatrix<f64>,
}

/// Debiased power spectrum `max(|c^_l(alpha)|^2 - sigma^2 / (n J), 0)`.
///
/// Power at or below the transform's rounding level, relative to the total,
/// is set to zero so that constant curves carry no signal.
pub fn debiased_power(
    table: &SpectralTable,
    alpha_hat: &ConstrainedShift,
    sigma2_hat: f64,
) -> Result<Vec<f64>> {
    let n = table.width() as f64;
    let bias = sigma2_hat / (n * table.n_curves() as f64);
    let mean = table.mean_rephased(&alpha_hat.lift())?;
    let total: f64 = mean.iter().map(|c| c.norm_sqr()).sum();
    let floor = (n * f64::EPSILON).powi(2) * total;
    Ok(mean
        .into_iter()
        .map(|c| {
            let p = c.norm_sqr();
            if p <= floor {
                0.0
            } else {
                (p - bias).max(0.0)
            }
        })
        .collect())
}

pub fn estimate_gamma(
    table: &SpectralTable,
    weights: &WeightScheme,
    alpha_hat: &ConstrainedShift,
    sigma2_hat: f64,
) -> Result<GammaEstimate> {
    if table.cutoff() != weights.cutoff() {
        return Err(Error::DimensionMismatch {
            what: "weight frequency range",
            expected: table.width(),
            actual: weights.values().len(),
        });
    }
    let power = debiased_power(table, alpha_hat, sigma2_hat)?;
    let scalar = gamma_scalar(weights, &power)?;
    Ok(GammaEstimate {
        scalar,
        matrix: gamma_matrix(scalar, table.n_curves() - 1),
    })
}

/// Interval for one free shift, in radians and in time units.
#[derive(Debug, Clone, PartialEq)]
pub struct ShiftInterval {
    pub estimate: f64,
    pub lower: f64,
    pub upper: f64,
    pub estimate_time: f64,
    pub lower_time: f64,
    pub upper_time: f64,
}

impl ShiftInterval {
    pub fn contains(&self, alpha: f64) -> bool {
        self.lower <= alpha && alpha <= self.upper
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CovarianceReport {
    pub gamma_hat: DMatrix<f64>,
    pub gamma_scalar: f64,
    pub sigma2_hat: f64,
    pub level: f64,
    pub n_samples: usize,
    /// `sqrt(sigma^2 Gamma_jj / n)` in radians, one per free shift.
    pub std_errors: Vec<f64>,
    pub intervals: Vec<ShiftInterval>,
}

impl CovarianceReport {
    /// Estimated covariance of `alpha_hat`, `sigma^2 Gamma / n`.
    pub fn alpha_covariance(&self) -> DMatrix<f64> {
        &self.gamma_hat * (self.sigma2_hat / self.n_samples as f64)
    }
}

/// Normal intervals `alpha_j +- z_{(1+level)/2} sqrt(sigma^2 Gamma_jj / n)`.
pub fn confidence_intervals(
    alpha_hat: &ConstrainedShift,
    gamma: &GammaEstimate,
    sigma2_hat: f64,
    n_samples: usize,
    period: f64,
    level: f64,
) -> Result<CovarianceReport> {
    if !(level > 0.0 && level < 1.0) {
        return Err(Error::InvalidConfidence(level));
    }
    if gamma.matrix.nrows() != alpha_hat.dim() {
        return Err(Error::DimensionMismatch {
            what: "covariance size",
            expected: alpha_hat.dim(),
            actual: gamma.matrix.nrows(),
        });
    }
    if !(sigma2_hat >= 0.0) || n_samples == 0 {
        return Err(Error::InvalidInput(format!(
            "noise variance {sigma2_hat} and sample count {n_samples} must be non-negative and positive"
        )));
    }
    let z = normal_quantile(0.5 * (1.0 + level));
    let to_time = period / (2.0 * std::f64::consts::PI);
    let std_errors: Vec<f64> = (0..alpha_hat.dim())
        .map(|k| (sigma2_hat * gamma.matrix[(k, k)] / n_samples as f64).sqrt())
        .collect();
    let intervals = alpha_hat
        .free()
        .iter()
        .zip(&std_errors)
        .map(|(&a, &se)| ShiftInterval {
            estimate: a,
            lower: a - z * se,
            upper: a + z * se,
            estimate_time: a * to_time,
            lower_time: (a - z * se) * to_time,
            upper_time: (a + z * se) * to_time,
        })
        .collect();
    Ok(CovarianceReport {
        gamma_hat: gamma.matrix.clone(),
        gamma_scalar: gamma.scalar,
        sigma2_hat,
        level,
        n_samples,
        std_errors,
        intervals,
    })
}

/// Noise variance, plug-in `Gamma` and intervals for a fitted context.
pub fn infer(
    ctx: &CriterionContext,
    fit: &EstimationResult,
    period: f64,
    level: f64,
) -> Result<CovarianceReport> {
    let sigma2 = estimate_noise_variance(ctx.table(), &fit.alpha_hat)?;
    let gamma = estimate_gamma(ctx.table(), ctx.weights(), &fit.alpha_hat, sigma2)?;
    confidence_intervals(
        &fit.alpha_hat,
        &gamma,
        sigma2,
        ctx.table().width(),
        period,
        level,
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use rustfft::num_complex::Complex64;

    fn cosine_table(alphas: &[f64]) -> SpectralTable {
        SpectralTable::from_rows(
            alphas
                .iter()
                .map(|&a| {
                    frequencies(3)
                        .map(|l| {
                            if l.abs() == 1 {
                                Complex64::cis(-(l as f64) * a) * 0.5
                            } else {
                                Complex64::new(0.0, 0.0)
                            }
                        })
                        .collect()
                })
                .collect(),
        )
        .unwrap()
    }

    fn first_harmonic_weights() -> WeightScheme {
        WeightScheme::from_positive_frequencies(&[1.0, 0.0, 0.0]).unwrap()
    }

    #[test]
    fn noiseless_variance_is_zero() {
        let alphas = [0.0, 0.5, -1.0];
        let table = cosine_table(&alphas);
        let s2 = estimate_noise_variance(&table, &ConstrainedShift::new(vec![0.5, -1.0]).unwrap())
            .unwrap();
        assert!(s2.abs() < 1e-28);
    }

    #[test]
    fn single_curve_rejected() {
        let table = cosine_table(&[0.0]);
        assert!(matches!(
            estimate_noise_variance(&table, &ConstrainedShift::zeros(0)),
            Err(Error::SingleCurve)
        ));
    }

    #[test]
    fn single_cosine_gamma() {
        // S4 = 2 * 1/4, S2 = 2 * 1/4 -> scalar 1/2 / (1/2)^2 = 2.
        let table = cosine_table(&[0.0, 0.3, 0.9, -0.4]);
        let alpha = ConstrainedShift::new(vec![0.3, 0.9, -0.4]).unwrap();
        let g = estimate_gamma(&table, &first_harmonic_weights(), &alpha, 0.0).unwrap();
        assert!((g.scalar - 2.0).abs() < 1e-12);
        for a in 0..3 {
            for b in 0..3 {
                let expected = if a == b { 4.0 } else { 2.0 };
                assert!((g.matrix[(a, b)] - expected).abs() < 1e-12);
            }
        }
        let table = cosine_table(&[0.0, 1.0]);
        let g = estimate_gamma(
            &table,
            &first_harmonic_weights(),
            &ConstrainedShift::new(vec![1.0]).unwrap(),
            0.0,
        )
        .unwrap();
        assert!((g.matrix[(0, 0)] - 4.0).abs() < 1e-12);
    }

    #[test]
    fn pure_noise_level_spectrum_rejected() {
        let table = cosine_table(&[0.0, 0.0]);
        let err = estimate_gamma(
            &table,
            &first_harmonic_weights(),
            &ConstrainedShift::zeros(1),
            1e6,
        );
        assert!(matches!(err, Err(Error::SignalIndistinguishableFromNoise)));
    }

    #[test]
    fn constant_curves_carry_no_signal() {
        let curves = crate::CurveSet::new(vec![vec![2.0; 21]; 3], 1.0).unwrap();
        let table = SpectralTable::from_curves(&curves).unwrap();
        let weights = WeightScheme::power(1.3, table.cutoff()).unwrap();
        let alpha = ConstrainedShift::zeros(2);
        let s2 = estimate_noise_variance(&table, &alpha).unwrap();
        let err = estimate_gamma(&table, &weights, &alpha, s2);
        assert!(matches!(err, Err(Error::SignalIndistinguishableFromNoise)));
    }

    #[test]
    fn interval_half_width() {
        let gamma = GammaEstimate {
            scalar: 2.0,
            matrix: gamma_matrix(2.0, 1),
        };
        let alpha = ConstrainedShift::new(vec![0.25]).unwrap();
        let r = confidence_intervals(&alpha, &gamma, 1.0, 100, 2.0 * std::f64::consts::PI, 0.95)
            .unwrap();
        let half = r.intervals[0].upper - r.intervals[0].estimate;
        assert!((half - 0.392).abs() < 1e-4, "half width {half}");
        assert!((half - 1.959_963_984_540_054 * 0.2).abs() < 1e-8);
        assert!(r.intervals[0].contains(0.25));
        assert!((r.intervals[0].upper_time - r.intervals[0].upper).abs() < 1e-15);

        let zero = confidence_intervals(&alpha, &gamma, 0.0, 100, 1.0, 0.5).unwrap();
        assert_eq!(zero.intervals[0].lower, zero.intervals[0].upper);

        for bad in [0.0, 1.0, -0.1, 1.5, f64::NAN] {
            assert!(matches!(
                confidence_intervals(&alpha, &gamma, 1.0, 100, 1.0, bad),
                Err(Error::InvalidConfidence(_))
            ));
        }
    }

    #[test]
    fn gamma_spectrum_has_two_eigenvalues() {
        for dim in 1..6 {
            let m = gamma_matrix(0.7, dim);
            let mut eig: Vec<f64> = m.symmetric_eigen().eigenvalues.iter().copied().collect();
            eig.sort_by(f64::total_cmp);
            for e in &eig[..dim - 1] {
                assert!((e - 0.7).abs() < 1e-12);
            }
            assert!((eig[dim - 1] - 0.7 * (dim + 1) as f64).abs() < 1e-12);
        }
    }
}
