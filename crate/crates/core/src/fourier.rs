//! Frequency-domain representation of sampled periodic curves.
//!
//! Each curve of `n` (odd) equispaced samples on `[0, T)` is mapped to its
//! discrete Fourier coefficients `d_l`, `l = -L..=L` with `L = (n - 1) / 2`,
//! using the zero-based convention `d_l = (1/n) sum_m y_m e^{-2 pi i m l / n}`.
//! A curve delayed by `theta` picks up the factor `e^{-i l alpha}` with
//! `alpha = 2 pi theta / T`, which is what [`SpectralTable::rephase`] undoes.

use std::f64::consts::PI;
use std::sync::Arc;

use rustfft::num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

use crate::error::{Error, Result};

/// `J` curves sampled at the same `n` equispaced times `t_i = i T / n`.
#[derive(Debug, Clone, PartialEq)]
pub struct CurveSet {
    samples: Vec<Vec<f64>>,
    period: f64,
}

impl CurveSet {
    pub fn new(samples: Vec<Vec<f64>>, period: f64) -> Result<Self> {
        if !(period.is_finite() && period > 0.0) {
            return Err(Error::InvalidInput(format!(
                "period must be positive and finite, got {period}"
            )));
        }
        if samples.len() < 2 {
            return Err(Error::InvalidInput(format!(
                "need at least two curves, got {}",
                samples.len()
            )));
        }
        let n = samples[0].len();
        if n < 3 {
            return Err(Error::InvalidInput(format!(
                "need at least three samples per curve, got {n}"
            )));
        }
        for (j, row) in samples.iter().enumerate() {
            if row.len() != n {
                return Err(Error::DimensionMismatch {
                    what: "curve length",
                    expected: n,
                    actual: row.len(),
                });
            }
            if let Some(i) = row.iter().position(|v| !v.is_finite()) {
                return Err(Error::InvalidInput(format!(
                    "non-finite sample at curve {}, index {i}",
                    j + 1
                )));
            }
        }
        Ok(Self { samples, period })
    }

    pub fn n_curves(&self) -> usize {
        self.samples.len()
    }

    pub fn n_samples(&self) -> usize {
        self.samples[0].len()
    }

    pub fn period(&self) -> f64 {
        self.period
    }

    pub fn curve(&self, j: usize) -> &[f64] {
        &self.samples[j]
    }

    pub fn curves(&self) -> &[Vec<f64>] {
        &self.samples
    }

    pub fn times(&self) -> Vec<f64> {
        let n = self.n_samples();
        (0..n).map(|i| i as f64 * self.period / n as f64).collect()
    }

    /// Drops the last sample of every curve when `n` is even, keeping the
    /// sampling step (so the period shrinks by one step). Returns whether
    /// anything was dropped.
    pub fn truncate_to_odd(self) -> Result<(Self, bool)> {
        let n = self.n_samples();
        if n % 2 == 1 {
            return Ok((self, false));
        }
        let step = self.period / n as f64;
        let samples = self
            .samples
            .into_iter()
            .map(|mut row| {
                row.truncate(n - 1);
                row
            })
            .collect();
        Ok((CurveSet::new(samples, step * (n - 1) as f64)?, true))
    }

    /// Cross-sectional mean curve.
    pub fn mean_curve(&self) -> Vec<f64> {
        let j = self.n_curves() as f64;
        (0..self.n_samples())
            .map(|i| self.samples.iter().map(|row| row[i]).sum::<f64>() / j)
            .collect()
    }
}

/// Forward/inverse DFT plans for one transform length.
pub struct Dft {
    n: usize,
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
}

impl Dft {
    pub fn new(n: usize) -> Result<Self> {
        if n.is_multiple_of(2) {
            return Err(Error::EvenSampleCount(n));
        }
        let mut planner = FftPlanner::new();
        Ok(Self {
            n,
            forward: planner.plan_fft_forward(n),
            inverse: planner.plan_fft_inverse(n),
        })
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    /// Coefficients ordered by frequency `-L..=L`.
    pub fn forward(&self, curve: &[f64]) -> Result<Vec<Complex64>> {
        if curve.len() != self.n {
            return Err(Error::DimensionMismatch {
                what: "curve length",
                expected: self.n,
                actual: curve.len(),
            });
        }
        if curve.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput("non-finite sample".into()));
        }
        let mut buf: Vec<Complex64> = curve.iter().map(|&v| Complex64::new(v, 0.0)).collect();
        self.forward.process(&mut buf);
        let scale = 1.0 / self.n as f64;
        let cutoff = (self.n - 1) / 2;
        let mut out = Vec::with_capacity(self.n);
        out.extend(buf[self.n - cutoff..].iter().map(|c| c * scale));
        out.extend(buf[..=cutoff].iter().map(|c| c * scale));
        Ok(out)
    }

    /// Real part of the trigonometric sum `sum_l c_l e^{2 pi i m l / n}`.
    pub fn inverse(&self, coeffs: &[Complex64]) -> Result<Vec<f64>> {
        if coeffs.len() != self.n {
            return Err(Error::DimensionMismatch {
                what: "coefficient count",
                expected: self.n,
                actual: coeffs.len(),
            });
        }
        let cutoff = (self.n - 1) / 2;
        let mut buf = vec![Complex64::new(0.0, 0.0); self.n];
        buf[..=cutoff].copy_from_slice(&coeffs[cutoff..]);
        buf[self.n - cutoff..].copy_from_slice(&coeffs[..cutoff]);
        self.inverse.process(&mut buf);
        Ok(buf.into_iter().map(|c| c.re).collect())
    }
}

/// Discrete Fourier coefficients of one real curve, indexed `-L..=L`.
pub fn forward_dft(curve: &[f64]) -> Result<Vec<Complex64>> {
    Dft::new(curve.len())?.forward(curve)
}

/// Inverse of [`forward_dft`].
pub fn inverse_dft(coeffs: &[Complex64]) -> Result<Vec<f64>> {
    Dft::new(coeffs.len())?.inverse(coeffs)
}

/// Frequencies `-L..=L`.
pub fn frequencies(cutoff: usize) -> impl Iterator<Item = i64> + Clone {
    let c = cutoff as i64;
    -c..=c
}

/// Complex coefficients `d_{jl}` for `J` curves, `l = -L..=L`.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectralTable {
    coeffs: Vec<Complex64>,
    n_curves: usize,
    cutoff: usize,
}

impl SpectralTable {
    pub fn from_curves(curves: &CurveSet) -> Result<Self> {
        let dft = Dft::new(curves.n_samples())?;
        let mut coeffs = Vec::with_capacity(curves.n_curves() * curves.n_samples());
        for row in curves.curves() {
            coeffs.extend(dft.forward(row)?);
        }
        Ok(Self {
            coeffs,
            n_curves: curves.n_curves(),
            cutoff: (curves.n_samples() - 1) / 2,
        })
    }

    /// Builds a table from explicit rows, each of odd length `2L + 1`.
    pub fn from_rows(rows: Vec<Vec<Complex64>>) -> Result<Self> {
        let width = rows
            .first()
            .map(|r| r.len())
            .ok_or_else(|| Error::InvalidInput("empty spectral table".into()))?;
        if width.is_multiple_of(2) {
            return Err(Error::EvenSampleCount(width));
        }
        let n_curves = rows.len();
        let mut coeffs = Vec::with_capacity(n_curves * width);
        for row in rows {
            if row.len() != width {
                return Err(Error::DimensionMismatch {
                    what: "spectral row width",
                    expected: width,
                    actual: row.len(),
                });
            }
            if row.iter().any(|c| !(c.re.is_finite() && c.im.is_finite())) {
                return Err(Error::InvalidInput("non-finite coefficient".into()));
            }
            coeffs.extend(row);
        }
        Ok(Self {
            coeffs,
            n_curves,
            cutoff: (width - 1) / 2,
        })
    }

    pub fn n_curves(&self) -> usize {
        self.n_curves
    }

    pub fn cutoff(&self) -> usize {
        self.cutoff
    }

    /// Number of frequencies, equal to the sample count `n`.
    pub fn width(&self) -> usize {
        2 * self.cutoff + 1
    }

    pub fn row(&self, j: usize) -> &[Complex64] {
        let w = self.width();
        &self.coeffs[j * w..(j + 1) * w]
    }

    pub fn get(&self, j: usize, l: i64) -> Complex64 {
        self.row(j)[(l + self.cutoff as i64) as usize]
    }

    fn check_alpha(&self, alpha: &[f64]) -> Result<()> {
        if alpha.len() != self.n_curves {
            return Err(Error::DimensionMismatch {
                what: "shift vector",
                expected: self.n_curves,
                actual: alpha.len(),
            });
        }
        if alpha.iter().any(|a| !a.is_finite()) {
            return Err(Error::InvalidInput("non-finite shift".into()));
        }
        Ok(())
    }

    /// `c~_{jl}(alpha) = e^{i l alpha_j} d_{jl}` for a full length-`J` phase vector.
    pub fn rephase(&self, alpha: &[f64]) -> Result<SpectralTable> {
        self.check_alpha(alpha)?;
        let w = self.width();
        let mut coeffs = Vec::with_capacity(self.coeffs.len());
        for (j, &a) in alpha.iter().enumerate() {
            let row = &self.coeffs[j * w..(j + 1) * w];
            coeffs.extend(
                frequencies(self.cutoff)
                    .zip(row)
                    .map(|(l, d)| Complex64::cis(l as f64 * a) * d),
            );
        }
        Ok(SpectralTable {
            coeffs,
            n_curves: self.n_curves,
            cutoff: self.cutoff,
        })
    }

    /// `c^_l(alpha) = (1/J) sum_j c~_{jl}(alpha)`.
    pub fn mean_rephased(&self, alpha: &[f64]) -> Result<Vec<Complex64>> {
        let rephased = self.rephase(alpha)?;
        Ok(rephased.column_mean())
    }

    pub(crate) fn column_mean(&self) -> Vec<Complex64> {
        let w = self.width();
        let scale = 1.0 / self.n_curves as f64;
        (0..w)
            .map(|k| {
                (0..self.n_curves)
                    .map(|j| self.coeffs[j * w + k])
                    .sum::<Complex64>()
                    * scale
            })
            .collect()
    }

    /// Back to the time domain, one row per curve.
    pub fn to_curves(&self, period: f64) -> Result<CurveSet> {
        let dft = Dft::new(self.width())?;
        let rows = (0..self.n_curves)
            .map(|j| dft.inverse(self.row(j)))
            .collect::<Result<Vec<_>>>()?;
        CurveSet::new(rows, period)
    }
}

/// Circularly resamples a curve at `t - shift` by spectral phase shifting.
pub fn shift_curve(curve: &[f64], shift: f64, period: f64) -> Result<Vec<f64>> {
    let dft = Dft::new(curve.len())?;
    let cutoff = (curve.len() - 1) / 2;
    let alpha = 2.0 * PI * shift / period;
    let shifted: Vec<Complex64> = frequencies(cutoff)
        .zip(dft.forward(curve)?)
        .map(|(l, d)| Complex64::cis(-(l as f64) * alpha) * d)
        .collect();
    dft.inverse(&shifted)
}

/// Which family a weight sequence was built from.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum WeightKind {
    /// `delta_l = |l|^-beta` for `l != 0`.
    Power(f64),
    /// `delta_l = 1` for `l != 0`.
    Unit,
    /// User supplied values.
    Custom,
}

/// How a weight sequence stands against the fluctuation assumptions that
/// back the asymptotic covariance.
#[derive(Debug, Clone, PartialEq)]
pub enum WeightAssessment {
    Satisfied,
    Unverified(String),
    Violated(String),
}

/// Frequency weights `delta_l` for `|l| <= L`, with `delta_0 = 0` and
/// `delta_l = delta_{-l}`.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightScheme {
    kind: WeightKind,
    values: Vec<f64>,
    cutoff: usize,
}

impl WeightScheme {
    pub fn power(beta: f64, cutoff: usize) -> Result<Self> {
        if !(beta.is_finite() && beta >= 0.0) {
            return Err(Error::InvalidInput(format!(
                "power weight exponent must be finite and non-negative, got {beta}"
            )));
        }
        let values = frequencies(cutoff)
            .map(|l| {
                if l == 0 {
                    0.0
                } else {
                    (l.abs() as f64).powf(-beta)
                }
            })
            .collect();
        Ok(Self {
            kind: WeightKind::Power(beta),
            values,
            cutoff,
        })
    }

    pub fn unit(cutoff: usize) -> Self {
        let values = frequencies(cutoff)
            .map(|l| if l == 0 { 0.0 } else { 1.0 })
            .collect();
        Self {
            kind: WeightKind::Unit,
            values,
            cutoff,
        }
    }

    /// Full sequence indexed `-L..=L`.
    pub fn custom(values: Vec<f64>) -> Result<Self> {
        if values.len().is_multiple_of(2) {
            return Err(Error::InvalidInput(format!(
                "weight sequence must have odd length 2L+1, got {}",
                values.len()
            )));
        }
        let cutoff = (values.len() - 1) / 2;
        if values.iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
            return Err(Error::InvalidInput(
                "weights must be finite and non-negative".into(),
            ));
        }
        if values[cutoff] != 0.0 {
            return Err(Error::InvalidInput(format!(
                "weight at frequency 0 must be 0, got {}",
                values[cutoff]
            )));
        }
        for k in 1..=cutoff {
            if values[cutoff + k] != values[cutoff - k] {
                return Err(Error::InvalidInput(format!(
                    "weights must be symmetric, frequency {k} differs from {}",
                    -(k as i64)
                )));
            }
        }
        Ok(Self {
            kind: WeightKind::Custom,
            values,
            cutoff,
        })
    }

    /// Symmetric extension of `delta_1..=delta_L`.
    pub fn from_positive_frequencies(positive: &[f64]) -> Result<Self> {
        let mut values: Vec<f64> = positive.iter().rev().copied().collect();
        values.push(0.0);
        values.extend_from_slice(positive);
        Self::custom(values)
    }

    pub fn kind(&self) -> WeightKind {
        self.kind
    }

    pub fn cutoff(&self) -> usize {
        self.cutoff
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn delta(&self, l: i64) -> f64 {
        self.values[(l + self.cutoff as i64) as usize]
    }

    pub fn is_all_zero(&self) -> bool {
        self.values.iter().all(|&v| v == 0.0)
    }

    pub fn assessment(&self) -> WeightAssessment {
        match self.kind {
            WeightKind::Power(beta) if beta > 1.25 => WeightAssessment::Satisfied,
            WeightKind::Power(beta) => WeightAssessment::Unverified(format!(
                "power weights with exponent {beta} <= 1.25 are not covered by the asymptotic normality conditions"
            )),
            WeightKind::Unit => WeightAssessment::Violated(
                "unit weights do not damp the random part of the criterion; confidence intervals are not asymptotically valid".into(),
            ),
            WeightKind::Custom => WeightAssessment::Unverified(
                "custom weights: decay conditions not checked".into(),
            ),
        }
    }

    pub fn describe(&self) -> String {
        match self.kind {
            WeightKind::Power(beta) => format!("power:{beta}"),
            WeightKind::Unit => "unit".into(),
            WeightKind::Custom => "custom".into(),
        }
    }
}

/// A weight family that does not yet know the frequency cutoff.
#[derive(Debug, Clone, PartialEq)]
pub enum WeightSpec {
    Power(f64),
    Unit,
    /// `delta_1..=delta_L`; the cutoff must match the data.
    Positive(Vec<f64>),
}

impl Default for WeightSpec {
    fn default() -> Self {
        WeightSpec::Power(1.3)
    }
}

impl WeightSpec {
    pub fn build(&self, cutoff: usize) -> Result<WeightScheme> {
        match self {
            WeightSpec::Power(beta) => WeightScheme::power(*beta, cutoff),
            WeightSpec::Unit => Ok(WeightScheme::unit(cutoff)),
            WeightSpec::Positive(values) => {
                if values.len() != cutoff {
                    return Err(Error::DimensionMismatch {
                        what: "positive-frequency weights",
                        expected: cutoff,
                        actual: values.len(),
                    });
                }
                WeightScheme::from_positive_frequencies(values)
            }
        }
    }

    pub fn label(&self) -> String {
        match self {
            WeightSpec::Power(beta) => format!("power:{beta}"),
            WeightSpec::Unit => "unit".into(),
            WeightSpec::Positive(_) => "custom".into(),
        }
    }
}

impl std::str::FromStr for WeightSpec {
    type Err = Error;

    /// Parses `unit` or `power:<beta>`.
    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        if s == "unit" {
            return Ok(WeightSpec::Unit);
        }
        if let Some(rest) = s.strip_prefix("power:") {
            let beta: f64 = rest
                .trim()
                .parse()
                .map_err(|_| Error::InvalidInput(format!("bad power exponent '{rest}'")))?;
            if !(beta.is_finite() && beta >= 0.0) {
                return Err(Error::InvalidInput(format!(
                    "power weight exponent must be finite and non-negative, got {beta}"
                )));
            }
            return Ok(WeightSpec::Power(beta));
        }
        Err(Error::InvalidInput(format!(
            "unknown weight family '{s}', expected unit or power:<beta>"
        )))
    }
}
