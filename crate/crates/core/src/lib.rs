//! Estimation of translation parameters among noisy, shifted copies of an
//! unknown periodic pattern.
//!
//! Curves are moved to the frequency domain, where a shift becomes a phase
//! factor `e^{-i l alpha_j}` on every coefficient. The shifts are then
//! estimated by minimising a weighted dispersion of the rephased
//! coefficients around their cross-curve mean, with the first curve pinned
//! as the reference. The crate also provides the plug-in asymptotic
//! covariance of the estimator, a landmark (curve maximum) baseline, and a
//! Monte Carlo harness for synthetic studies.
//!
//! ```
//! use shiftest::{CurveSet, SpectralTable, WeightScheme, CriterionContext};
//! use shiftest::optimizer::{minimize, OptimizerConfig};
//! use std::f64::consts::PI;
//!
//! let n = 31;
//! let curve = |shift: f64| -> Vec<f64> {
//!     (0..n).map(|i| (2.0 * PI * i as f64 / n as f64 - shift).cos()).collect()
//! };
//! let curves = CurveSet::new(vec![curve(0.0), curve(0.7)], 2.0 * PI).unwrap();
//! let table = SpectralTable::from_curves(&curves).unwrap();
//! let weights = WeightScheme::power(1.3, table.cutoff()).unwrap();
//! let ctx = CriterionContext::new(table, weights).unwrap();
//! let fit = minimize(&ctx, &OptimizerConfig::default()).unwrap();
//! assert!((fit.alpha_hat.free()[0] - 0.7).abs() < 1e-6);
//! ```

pub mod cli;
pub mod criterion;
pub mod error;
pub mod fourier;
pub mod inference;
pub mod landmark;
pub mod optimizer;
pub mod simulate;
pub mod stats;

pub use criterion::{ConstrainedShift, CriterionContext};
pub use error::{Error, Result};
pub use fourier::{CurveSet, SpectralTable, WeightScheme, WeightSpec};

/// Wraps an angle into `[-pi, pi]`.
///
/// Values already inside the closed interval are returned unchanged, so
/// `pi` and `-pi` both survive.
pub fn wrap_angle(x: f64) -> f64 {
    use std::f64::consts::PI;
    if (-PI..=PI).contains(&x) {
        return x;
    }
    let tau = 2.0 * PI;
    let mut y = (x + PI).rem_euclid(tau) - PI;
    if y < -PI {
        y += tau;
    }
    y
}

/// Wraps a time shift into `(-period/2, period/2]`.
pub fn wrap_time(x: f64, period: f64) -> f64 {
    let half = 0.5 * period;
    let mut y = (x + half).rem_euclid(period) - half;
    if y <= -half {
        y += period;
    }
    y
}
