//! Minimisation of the contrast over the constrained phase space.
//!
//! Starting points come from circular cross-correlation with the reference
//! curve (plus the origin); each start is refined by Polak-Ribiere conjugate
//! gradients with a backtracking line search. Coordinates are wrapped into
//! `[-pi, pi]` after every step since the contrast is `2 pi`-periodic in each
//! phase.

use std::cmp::Ordering;
use std::f64::consts::PI;

use rustfft::num_complex::Complex64;

use crate::criterion::{ConstrainedShift, CriterionContext};
use crate::error::{Error, Result};
use crate::fourier::{frequencies, Dft};
use crate::wrap_angle;

// Largest coordinate displacement tried by a single line search.
const MAX_MOVE: f64 = 0.5;
// Displacement used for the directional curvature probe.
const PROBE: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq)]
pub struct OptimizerConfig {
    pub max_iterations: usize,
    /// Stop once the gradient max-norm falls to this value.
    pub gradient_tolerance: f64,
    /// Extra starts, spread evenly around the circle from the correlation start.
    pub restarts: usize,
    /// Backtracking contraction factor, in `(0, 1)`.
    pub contraction: f64,
    /// Armijo sufficient-decrease constant.
    pub sufficient_decrease: f64,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        Self {
            max_iterations: 500,
            gradient_tolerance: 1e-8,
            restarts: 0,
            contraction: 0.5,
            sufficient_decrease: 1e-4,
        }
    }
}

impl OptimizerConfig {
    pub fn validate(&self) -> Result<()> {
        if self.max_iterations == 0 {
            return Err(Error::InvalidInput(
                "max_iterations must be positive".into(),
            ));
        }
        if !(self.gradient_tolerance > 0.0 && self.gradient_tolerance.is_finite()) {
            return Err(Error::InvalidInput(format!(
                "gradient tolerance must be positive, got {}",
                self.gradient_tolerance
            )));
        }
        if !(self.contraction > 0.0 && self.contraction < 1.0) {
            return Err(Error::InvalidInput(format!(
                "contraction must lie in (0, 1), got {}",
                self.contraction
            )));
        }
        if !(self.sufficient_decrease > 0.0 && self.sufficient_decrease < 1.0) {
            return Err(Error::InvalidInput(format!(
                "sufficient decrease constant must lie in (0, 1), got {}",
                self.sufficient_decrease
            )));
        }
        Ok(())
    }
}

/// The M-estimate and how it was reached.
#[derive(Debug, Clone, PartialEq)]
pub struct EstimationResult {
    pub alpha_hat: ConstrainedShift,
    pub criterion_value: f64,
    pub gradient_norm: f64,
    pub iterations: usize,
    pub converged: bool,
    pub starts: usize,
}

impl EstimationResult {
    /// `theta_j = T alpha_j / (2 pi)` with `theta_1 = 0`.
    pub fn theta_hat(&self, period: f64) -> Vec<f64> {
        self.alpha_hat.to_time(period)
    }
}

/// One conjugate-gradient run.
#[derive(Debug, Clone)]
pub struct Descent {
    pub point: Vec<f64>,
    pub value: f64,
    pub gradient_norm: f64,
    pub iterations: usize,
    pub converged: bool,
    /// Criterion value at the start and after every accepted step.
    pub values: Vec<f64>,
}

fn max_norm(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn axpy(x: &[f64], t: f64, d: &[f64]) -> Vec<f64> {
    x.iter().zip(d).map(|(a, b)| a + t * b).collect()
}

/// Cross-correlation starts.
///
/// Coordinate `j` is the lag `2 pi k / n` maximising
/// `Re sum_{l != 0} e^{i l 2 pi k / n} d_jl conj(d_1l)`; coordinates whose
/// correlation is flat are set to zero. The origin is always included, and
/// is the only candidate when every correlation is flat.
pub fn initialize(ctx: &CriterionContext) -> Vec<ConstrainedShift> {
    let table = ctx.table();
    let n = table.width();
    let cutoff = table.cutoff();
    let zero = ConstrainedShift::zeros(ctx.dim());
    let Ok(dft) = Dft::new(n) else {
        return vec![zero];
    };
    let reference = table.row(0);
    let mut coords = Vec::with_capacity(ctx.dim());
    let mut informative = false;
    for j in 1..table.n_curves() {
        let row = table.row(j);
        let cross: Vec<Complex64> = frequencies(cutoff)
            .zip(row.iter().zip(reference))
            .map(|(l, (d, r))| {
                if l == 0 {
                    Complex64::new(0.0, 0.0)
                } else {
                    d * r.conj()
                }
            })
            .collect();
        let scale: f64 = cross.iter().map(|c| c.norm()).sum();
        let corr = match dft.inverse(&cross) {
            Ok(c) => c,
            Err(_) => {
                coords.push(0.0);
                continue;
            }
        };
        let (mut best_k, mut best, mut worst) = (0usize, f64::NEG_INFINITY, f64::INFINITY);
        for (k, &v) in corr.iter().enumerate() {
            if v > best {
                best = v;
                best_k = k;
            }
            worst = worst.min(v);
        }
        if !(scale > 0.0) || best - worst <= 1e-12 * scale {
            coords.push(0.0);
        } else {
            informative = true;
            coords.push(wrap_angle(2.0 * PI * best_k as f64 / n as f64));
        }
    }
    if !informative {
        return vec![zero];
    }
    let start = ConstrainedShift::wrapped(coords);
    if start == zero {
        vec![zero]
    } else {
        vec![start, zero]
    }
}

/// Conjugate-gradient descent from one starting point.
pub fn descend(ctx: &CriterionContext, start: &[f64], config: &OptimizerConfig) -> Descent {
    let mut x: Vec<f64> = start.iter().map(|&a| wrap_angle(a)).collect();
    let (mut f, mut g) = ctx.value_and_gradient_free(&x);
    let mut values = vec![f];
    let mut gnorm = max_norm(&g);
    let mut converged = gnorm <= config.gradient_tolerance;
    let mut iterations = 0;
    let mut d: Vec<f64> = g.iter().map(|v| -v).collect();

    while !converged && iterations < config.max_iterations && f.is_finite() {
        iterations += 1;
        let mut slope = dot(&g, &d);
        if slope >= 0.0 {
            d = g.iter().map(|v| -v).collect();
            slope = -dot(&g, &g);
        }
        let dmax = max_norm(&d);
        if dmax == 0.0 {
            break;
        }
        // Secant estimate of the minimising step along d.
        let eps = PROBE / dmax;
        let (_, g_probe) = ctx.value_and_gradient_free(&axpy(&x, eps, &d));
        let curvature = (dot(&g_probe, &d) - slope) / eps;
        let cap = MAX_MOVE / dmax;
        let mut t = if curvature > 0.0 {
            (-slope / curvature).min(cap)
        } else {
            cap
        };

        let accepted = loop {
            let trial = axpy(&x, t, &d);
            let (f_new, g_new) = ctx.value_and_gradient_free(&trial);
            if f_new.is_finite() {
                let armijo = f_new <= f + config.sufficient_decrease * t * slope;
                // Near the optimum the decrease drops below the rounding of f;
                // fall back to a curvature test on the directional derivative.
                let flat = f_new - f <= 1e-13 * f.abs().max(f64::MIN_POSITIVE)
                    && dot(&g_new, &d).abs() < slope.abs();
                if armijo || flat {
                    break Some((trial, f_new, g_new));
                }
            }
            t *= config.contraction;
            if t * dmax < 1e-15 {
                break None;
            }
        };
        let Some((x_new, f_new, g_new)) = accepted else {
            break;
        };

        let gg = dot(&g, &g);
        let beta = if gg > 0.0 {
            (dot(&g_new, &g_new) - dot(&g_new, &g)) / gg
        } else {
            0.0
        }
        .max(0.0);
        d = g_new
            .iter()
            .zip(&d)
            .map(|(gn, di)| -gn + beta * di)
            .collect();
        x = x_new.into_iter().map(wrap_angle).collect();
        f = f_new;
        g = g_new;
        values.push(f);
        gnorm = max_norm(&g);
        converged = gnorm <= config.gradient_tolerance;
    }

    Descent {
        point: x,
        value: f,
        gradient_norm: gnorm,
        iterations,
        converged,
        values,
    }
}

fn better(a: &Descent, b: &Descent) -> bool {
    let tol = 1e-12 * a.value.abs().max(b.value.abs());
    if (a.value - b.value).abs() > tol {
        return a.value < b.value;
    }
    for (x, y) in a.point.iter().zip(&b.point) {
        match x.total_cmp(y) {
            Ordering::Less => return true,
            Ordering::Greater => return false,
            Ordering::Equal => {}
        }
    }
    false
}

/// Minimises the contrast from every candidate start and keeps the lowest.
pub fn minimize(ctx: &CriterionContext, config: &OptimizerConfig) -> Result<EstimationResult> {
    config.validate()?;
    if ctx.weights().is_all_zero() {
        return Err(Error::CriterionIdenticallyZero);
    }
    let mut starts: Vec<Vec<f64>> = Vec::new();
    for s in initialize(ctx) {
        let base = s.free().to_vec();
        for r in 1..=config.restarts {
            let offset = 2.0 * PI * r as f64 / (config.restarts + 1) as f64;
            starts.push(base.iter().map(|a| wrap_angle(a + offset)).collect());
        }
        starts.insert(starts.len() - config.restarts, base);
    }

    let mut best: Option<Descent> = None;
    for start in &starts {
        let run = descend(ctx, start, config);
        if !run.value.is_finite() {
            continue;
        }
        if best.as_ref().is_none_or(|b| better(&run, b)) {
            best = Some(run);
        }
    }
    let best = best.ok_or_else(|| {
        Error::EstimationFailed("no starting point produced a finite criterion value".into())
    })?;
    Ok(EstimationResult {
        alpha_hat: ConstrainedShift::wrapped(best.point),
        criterion_value: best.value,
        gradient_norm: best.gradient_norm,
        iterations: best.iterations,
        converged: best.converged,
        starts: starts.len(),
    })
}
