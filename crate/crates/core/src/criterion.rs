//! The weighted empirical contrast and its analytic derivatives.
//!
//! For phases `alpha` (with `alpha_1 = 0`) the contrast is
//!
//! ```text
//! M(alpha) = (1/J) sum_j sum_l delta_l^2 |c~_jl(alpha) - c^_l(alpha)|^2
//! ```
//!
//! where `c~_jl = e^{i l alpha_j} d_jl` and `c^_l` is their mean over curves.
//! Derivatives are with respect to the free phases `alpha_2..alpha_J`.

use std::f64::consts::PI;

use nalgebra::DMatrix;
use rustfft::num_complex::Complex64;

use crate::error::{Error, Result};
use crate::fourier::{SpectralTable, WeightScheme};
use crate::stats::gcd;

/// Free phases `(alpha_2, ..., alpha_J)`, each in `[-pi, pi]`; `alpha_1 = 0`.
#[derive(Debug, Clone, PartialEq)]
pub struct ConstrainedShift {
    free: Vec<f64>,
}

impl ConstrainedShift {
    pub fn new(free: Vec<f64>) -> Result<Self> {
        if let Some(a) = free.iter().find(|a| !(a.is_finite() && a.abs() <= PI)) {
            return Err(Error::InvalidInput(format!("phase {a} outside [-pi, pi]")));
        }
        Ok(Self { free })
    }

    /// Wraps every coordinate into `[-pi, pi]`.
    pub fn wrapped(free: Vec<f64>) -> Self {
        Self {
            free: free.into_iter().map(crate::wrap_angle).collect(),
        }
    }

    pub fn zeros(dim: usize) -> Self {
        Self {
            free: vec![0.0; dim],
        }
    }

    pub fn free(&self) -> &[f64] {
        &self.free
    }

    pub fn dim(&self) -> usize {
        self.free.len()
    }

    /// Full phase vector `(0, alpha_2, ..., alpha_J)`.
    pub fn lift(&self) -> Vec<f64> {
        let mut full = Vec::with_capacity(self.free.len() + 1);
        full.push(0.0);
        full.extend_from_slice(&self.free);
        full
    }

    /// Time-domain shifts `theta_j = T alpha_j / (2 pi)`, length `J`.
    pub fn to_time(&self, period: f64) -> Vec<f64> {
        self.lift()
            .into_iter()
            .map(|a| period * a / (2.0 * PI))
            .collect()
    }
}

/// Spectral data and weights, with the summation order fixed once.
#[derive(Debug, Clone)]
pub struct CriterionContext {
    table: SpectralTable,
    weights: WeightScheme,
    // (frequency, delta^2) for non-zero weights, ascending delta^2, larger |l| first on ties.
    terms: Vec<(i64, f64)>,
}

/// Plausibility check of the two-coprime-frequencies identifiability condition.
#[derive(Debug, Clone, PartialEq)]
pub struct IdentifiabilityCheck {
    /// Magnitude threshold `3 sigma / sqrt(n)` applied to `(1/J) sum_j |d_jl|`.
    pub threshold: f64,
    /// Weighted frequencies whose mean magnitude clears the threshold.
    pub active: Vec<i64>,
    pub coprime_pair: Option<(i64, i64)>,
}

impl IdentifiabilityCheck {
    pub fn passed(&self) -> bool {
        self.coprime_pair.is_some()
    }
}

impl CriterionContext {
    pub fn new(table: SpectralTable, weights: WeightScheme) -> Result<Self> {
        if table.cutoff() != weights.cutoff() {
            return Err(Error::DimensionMismatch {
                what: "weight frequency range",
                expected: table.width(),
                actual: weights.values().len(),
            });
        }
        if table.n_curves() < 2 {
            return Err(Error::InvalidInput(format!(
                "the criterion needs at least two curves, got {}",
                table.n_curves()
            )));
        }
        let mut terms: Vec<(i64, f64)> = crate::fourier::frequencies(table.cutoff())
            .map(|l| (l, weights.delta(l).powi(2)))
            .filter(|&(_, w2)| w2 != 0.0)
            .collect();
        terms.sort_by(|a, b| {
            a.1.total_cmp(&b.1)
                .then(b.0.abs().cmp(&a.0.abs()))
                .then(a.0.cmp(&b.0))
        });
        Ok(Self {
            table,
            weights,
            terms,
        })
    }

    pub fn table(&self) -> &SpectralTable {
        &self.table
    }

    pub fn weights(&self) -> &WeightScheme {
        &self.weights
    }

    pub fn n_curves(&self) -> usize {
        self.table.n_curves()
    }

    /// Number of free phases, `J - 1`.
    pub fn dim(&self) -> usize {
        self.table.n_curves() - 1
    }

    fn check_free(&self, free: &[f64]) -> Result<()> {
        if free.len() != self.dim() {
            return Err(Error::DimensionMismatch {
                what: "free phase vector",
                expected: self.dim(),
                actual: free.len(),
            });
        }
        Ok(())
    }

    fn check_full(&self, phases: &[f64]) -> Result<()> {
        if phases.len() != self.n_curves() {
            return Err(Error::DimensionMismatch {
                what: "phase vector",
                expected: self.n_curves(),
                actual: phases.len(),
            });
        }
        Ok(())
    }

    /// Fills `buf` with `c~_jl` for one frequency and returns their mean.
    fn rephase_column(&self, l: i64, phases: &[f64], buf: &mut [Complex64]) -> Complex64 {
        let mut sum = Complex64::new(0.0, 0.0);
        for (j, (slot, &a)) in buf.iter_mut().zip(phases).enumerate() {
            let c = Complex64::cis(l as f64 * a) * self.table.get(j, l);
            *slot = c;
            sum += c;
        }
        sum / phases.len() as f64
    }

    /// Contrast at a point of the constrained space.
    pub fn eval(&self, alpha: &ConstrainedShift) -> Result<f64> {
        self.check_free(alpha.free())?;
        Ok(self.eval_unchecked(&alpha.lift()))
    }

    /// Contrast for an arbitrary full phase vector of length `J`.
    pub fn eval_full(&self, phases: &[f64]) -> Result<f64> {
        self.check_full(phases)?;
        Ok(self.eval_unchecked(phases))
    }

    fn eval_unchecked(&self, phases: &[f64]) -> f64 {
        let jn = phases.len() as f64;
        let mut buf = vec![Complex64::new(0.0, 0.0); phases.len()];
        let mut total = 0.0;
        for &(l, w2) in &self.terms {
            let mean = self.rephase_column(l, phases, &mut buf);
            let disp: f64 = buf.iter().map(|c| (c - mean).norm_sqr()).sum();
            total += w2 * disp / jn;
        }
        total
    }

    /// Same value through `sum_l delta_l^2 [(1/J) sum_j |c~_jl|^2 - |c^_l|^2]`.
    pub fn eval_decomposed(&self, phases: &[f64]) -> Result<f64> {
        self.check_full(phases)?;
        let jn = phases.len() as f64;
        let mut buf = vec![Complex64::new(0.0, 0.0); phases.len()];
        let mut total = 0.0;
        for &(l, w2) in &self.terms {
            let mean = self.rephase_column(l, phases, &mut buf);
            let energy: f64 = buf.iter().map(|c| c.norm_sqr()).sum::<f64>() / jn;
            total += w2 * (energy - mean.norm_sqr());
        }
        Ok(total)
    }

    pub fn gradient(&self, alpha: &ConstrainedShift) -> Result<Vec<f64>> {
        self.check_free(alpha.free())?;
        Ok(self.value_and_gradient_free(alpha.free()).1)
    }

    /// Value and gradient for free phases that need not be wrapped.
    pub fn value_and_gradient_free(&self, free: &[f64]) -> (f64, Vec<f64>) {
        let mut phases = Vec::with_capacity(free.len() + 1);
        phases.push(0.0);
        phases.extend_from_slice(free);
        let jn = phases.len() as f64;
        let mut buf = vec![Complex64::new(0.0, 0.0); phases.len()];
        let mut value = 0.0;
        let mut grad = vec![0.0; free.len()];
        for &(l, w2) in &self.terms {
            let mean = self.rephase_column(l, &phases, &mut buf);
            let disp: f64 = buf.iter().map(|c| (c - mean).norm_sqr()).sum();
            value += w2 * disp / jn;
            let scale = 2.0 / jn * w2 * l as f64;
            for (g, c) in grad.iter_mut().zip(&buf[1..]) {
                *g += scale * (c * mean.conj()).im;
            }
        }
        (value, grad)
    }

    pub fn hessian(&self, alpha: &ConstrainedShift) -> Result<DMatrix<f64>> {
        self.check_free(alpha.free())?;
        Ok(self.hessian_free(alpha.free()))
    }

    pub fn hessian_free(&self, free: &[f64]) -> DMatrix<f64> {
        let mut phases = Vec::with_capacity(free.len() + 1);
        phases.push(0.0);
        phases.extend_from_slice(free);
        let jn = phases.len() as f64;
        let dim = free.len();
        let mut buf = vec![Complex64::new(0.0, 0.0); phases.len()];
        let mut h = DMatrix::zeros(dim, dim);
        for &(l, w2) in &self.terms {
            let mean = self.rephase_column(l, &phases, &mut buf);
            let total = mean * jn;
            let scale = 2.0 / (jn * jn) * w2 * (l * l) as f64;
            for k in 0..dim {
                let ck = buf[k + 1];
                h[(k, k)] += scale * (ck * (total - ck).conj()).re;
                for m in (k + 1)..dim {
                    let v = -scale * (ck * buf[m + 1].conj()).re;
                    h[(k, m)] += v;
                    h[(m, k)] += v;
                }
            }
        }
        h
    }

    /// Checks for two coprime frequencies among the weighted frequencies
    /// whose mean coefficient modulus `(1/J) sum_j |d_jl|` exceeds
    /// `3 sigma / sqrt(n)`.
    pub fn identifiability(&self, sigma2: f64) -> IdentifiabilityCheck {
        let n = self.table.width() as f64;
        let threshold = 3.0 * sigma2.max(0.0).sqrt() / n.sqrt();
        let jn = self.n_curves() as f64;
        let mut active: Vec<i64> = self
            .terms
            .iter()
            .map(|&(l, _)| l)
            .filter(|&l| {
                let m: f64 = (0..self.n_curves())
                    .map(|j| self.table.get(j, l).norm())
                    .sum::<f64>()
                    / jn;
                m > threshold
            })
            .collect();
        active.sort_unstable();
        let mut coprime_pair = None;
        'outer: for (i, &a) in active.iter().enumerate() {
            for &b in &active[i + 1..] {
                if gcd(a, b) == 1 {
                    coprime_pair = Some((a, b));
                    break 'outer;
                }
            }
        }
        IdentifiabilityCheck {
            threshold,
            active,
            coprime_pair,
        }
    }
}
