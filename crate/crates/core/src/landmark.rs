//! Landmark registration baseline: smooth each curve with a circular
//! Nadaraya-Watson estimator, locate its maximum and line the maxima up.

use std::f64::consts::PI;

use crate::error::{Error, Result};
use crate::fourier::CurveSet;
use crate::wrap_time;

/// Number of candidate bandwidths tried by leave-one-out cross-validation.
const CV_GRID: usize = 30;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Bandwidth {
    /// Fixed bandwidth in time units.
    Fixed(f64),
    /// Leave-one-out cross-validation over a log grid, per curve.
    CrossValidated,
    /// `1.06 * s * n^(-1/5)` with `s = T / sqrt(12)`, the spread of the
    /// uniform design on one period.
    RuleOfThumb,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LandmarkConfig {
    pub bandwidth: Bandwidth,
}

impl Default for LandmarkConfig {
    fn default() -> Self {
        LandmarkConfig {
            bandwidth: Bandwidth::CrossValidated,
        }
    }
}

impl LandmarkConfig {
    pub fn fixed(h: f64) -> Result<Self> {
        check_bandwidth(h)?;
        Ok(LandmarkConfig {
            bandwidth: Bandwidth::Fixed(h),
        })
    }
}

fn check_bandwidth(h: f64) -> Result<()> {
    if h > 0.0 && h.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidBandwidth(h))
    }
}

/// Wrapped-Gaussian weights `w_k` for grid offsets `k = 0..n`, summing the
/// periodic images that matter.
fn kernel_weights(n: usize, period: f64, h: f64) -> Vec<f64> {
    let step = period / n as f64;
    let images = (8.0 * h / period).ceil() as i64 + 1;
    (0..n)
        .map(|k| {
            let d = k as f64 * step;
            (-images..=images)
                .map(|m| {
                    let z = (d + m as f64 * period) / h;
                    (-0.5 * z * z).exp()
                })
                .sum()
        })
        .collect()
}

/// Circular convolution `sum_k w_k y_{i-k}`, and the weight total.
fn convolve(curve: &[f64], w: &[f64]) -> (Vec<f64>, f64) {
    let n = curve.len();
    let total: f64 = w.iter().sum();
    let out = (0..n)
        .map(|i| {
            w.iter()
                .enumerate()
                .map(|(k, wk)| wk * curve[(i + n - k) % n])
                .sum()
        })
        .collect();
    (out, total)
}

/// Nadaraya-Watson estimate on the sampling grid with a fixed bandwidth.
pub fn smooth_with(curve: &[f64], period: f64, h: f64) -> Result<Vec<f64>> {
    check_bandwidth(h)?;
    if curve.len() < 3 {
        return Err(Error::InvalidInput(format!(
            "smoothing needs at least 3 samples, got {}",
            curve.len()
        )));
    }
    if !(period > 0.0) {
        return Err(Error::InvalidInput(format!(
            "period must be positive, got {period}"
        )));
    }
    let w = kernel_weights(curve.len(), period, h);
    let (num, total) = convolve(curve, &w);
    Ok(num.into_iter().map(|v| v / total).collect())
}

/// Candidate bandwidths for cross-validation, from half a grid step to a
/// quarter period.
pub fn bandwidth_grid(n: usize, period: f64) -> Vec<f64> {
    let lo = 0.5 * period / n as f64;
    let hi = 0.25 * period;
    let ratio = (hi / lo).ln() / (CV_GRID - 1) as f64;
    (0..CV_GRID)
        .map(|k| lo * (ratio * k as f64).exp())
        .collect()
}

/// Leave-one-out prediction error for bandwidth `h`.
pub fn cv_score(curve: &[f64], period: f64, h: f64) -> f64 {
    let w = kernel_weights(curve.len(), period, h);
    let (num, total) = convolve(curve, &w);
    let rest = total - w[0];
    if !(rest > 0.0) {
        return f64::INFINITY;
    }
    curve
        .iter()
        .zip(&num)
        .map(|(y, s)| {
            let loo = (s - w[0] * y) / rest;
            (y - loo).powi(2)
        })
        .sum()
}

/// Bandwidth actually used for `curve` under `config`.
pub fn resolve_bandwidth(curve: &[f64], period: f64, config: &LandmarkConfig) -> Result<f64> {
    let n = curve.len();
    match config.bandwidth {
        Bandwidth::Fixed(h) => check_bandwidth(h).map(|_| h),
        Bandwidth::RuleOfThumb => Ok(1.06 * period / 12f64.sqrt() * (n as f64).powf(-0.2)),
        Bandwidth::CrossValidated => {
            let mut best = (f64::INFINITY, f64::NAN);
            for h in bandwidth_grid(n, period) {
                let score = cv_score(curve, period, h);
                // strict comparison keeps the smallest bandwidth on ties
                if score < best.0 {
                    best = (score, h);
                }
            }
            if best.1.is_nan() {
                return Err(Error::InvalidInput(
                    "cross-validation failed for every bandwidth".into(),
                ));
            }
            Ok(best.1)
        }
    }
}

pub fn smooth(curve: &[f64], period: f64, config: &LandmarkConfig) -> Result<Vec<f64>> {
    let h = resolve_bandwidth(curve, period, config)?;
    smooth_with(curve, period, h)
}

/// Location in `[0, T)` of the maximum of a sampled periodic curve, refined
/// by a parabola through the argmax and its two neighbours.
pub fn max_location(values: &[f64], period: f64) -> Result<f64> {
    let n = values.len();
    if n < 3 {
        return Err(Error::InvalidInput("need at least 3 samples".into()));
    }
    let top = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let low = values.iter().copied().fold(f64::INFINITY, f64::min);
    if !top.is_finite() || !low.is_finite() {
        return Err(Error::InvalidInput("non-finite values".into()));
    }
    let tol = 1e-9 * top.abs().max(low.abs()).max(1.0);
    if top - low <= tol {
        return Err(Error::LandmarkUndefined("curve is flat".into()));
    }
    let near: Vec<usize> = (0..n).filter(|&i| values[i] >= top - tol).collect();
    // The near-maximal indices must form a single circular run.
    let runs = (0..n)
        .filter(|&i| values[i] >= top - tol && values[(i + n - 1) % n] < top - tol)
        .count();
    if runs != 1 {
        return Err(Error::LandmarkUndefined(format!(
            "{} separate maxima within tolerance",
            runs
        )));
    }
    let step = period / n as f64;
    if near.len() > 1 {
        let start = (0..n)
            .find(|&i| values[i] >= top - tol && values[(i + n - 1) % n] < top - tol)
            .unwrap_or(0);
        let centre = start as f64 + 0.5 * (near.len() - 1) as f64;
        return Ok((centre * step).rem_euclid(period));
    }
    let i = near[0];
    let (left, mid, right) = (values[(i + n - 1) % n], values[i], values[(i + 1) % n]);
    let curvature = left - 2.0 * mid + right;
    let offset = if curvature < 0.0 {
        (0.5 * (left - right) / curvature).clamp(-0.5, 0.5)
    } else {
        0.0
    };
    Ok(((i as f64 + offset) * step).rem_euclid(period))
}

/// Smoothed-maximum location of every curve; failures stay per curve.
pub fn locate_maxima(curves: &CurveSet, config: &LandmarkConfig) -> Vec<Result<f64>> {
    curves
        .curves()
        .iter()
        .map(|c| max_location(&smooth(c, curves.period(), config)?, curves.period()))
        .collect()
}

/// Per-curve shifts relative to curve 1, with failures reported per curve.
/// If curve 1 has no landmark every entry fails.
pub fn align_by_max_each(curves: &CurveSet, config: &LandmarkConfig) -> Vec<Result<f64>> {
    let period = curves.period();
    let mut locs = locate_maxima(curves, config);
    let reference = match &locs[0] {
        Ok(r) => *r,
        Err(e) => {
            let msg = format!("reference curve: {e}");
            return locs
                .iter()
                .map(|_| Err(Error::LandmarkUndefined(msg.clone())))
                .collect();
        }
    };
    locs[0] = Ok(reference);
    locs.into_iter()
        .enumerate()
        .map(|(j, loc)| {
            if j == 0 {
                Ok(0.0)
            } else {
                loc.map(|l| wrap_time(l - reference, period))
            }
        })
        .collect()
}

/// Shifts `theta_j = loc_j - loc_1` wrapped into `(-T/2, T/2]`.
pub fn align_by_max(curves: &CurveSet, config: &LandmarkConfig) -> Result<Vec<f64>> {
    align_by_max_each(curves, config).into_iter().collect()
}

/// Shifts in radians, `2 pi theta / T`.
pub fn align_by_max_radians(curves: &CurveSet, config: &LandmarkConfig) -> Result<Vec<f64>> {
    let scale = 2.0 * PI / curves.period();
    Ok(align_by_max(curves, config)?
        .into_iter()
        .map(|t| t * scale)
        .collect())
}
