//! Small statistical helpers: the standard normal quantile and moment
//! accumulation used by the Monte Carlo summaries.

// Acklam's rational approximation, relative error below 1.15e-9 on (0, 1).
const A: [f64; 6] = [
    -3.969683028665376e+01,
    2.209460984245205e+02,
    -2.759285104469687e+02,
    1.383577518672690e+02,
    -3.066479806614716e+01,
    2.506628277459239e+00,
];
const B: [f64; 5] = [
    -5.447609879822406e+01,
    1.615858368580409e+02,
    -1.556989798598866e+02,
    6.680131188771972e+01,
    -1.328068155288572e+01,
];
const C: [f64; 6] = [
    -7.784894002430293e-03,
    -3.223964580411365e-01,
    -2.400758277161838e+00,
    -2.549732539343734e+00,
    4.374664141464968e+00,
    2.938163982698783e+00,
];
const D: [f64; 4] = [
    7.784695709041462e-03,
    3.224671290700398e-01,
    2.445134137142996e+00,
    3.754408661907416e+00,
];
const P_LOW: f64 = 0.02425;

/// Quantile function of the standard normal distribution.
///
/// Returns `-inf`/`+inf` at 0 and 1 and NaN outside `[0, 1]`.
pub fn normal_quantile(p: f64) -> f64 {
    if !(0.0..=1.0).contains(&p) || p.is_nan() {
        return f64::NAN;
    }
    if p == 0.0 {
        return f64::NEG_INFINITY;
    }
    if p == 1.0 {
        return f64::INFINITY;
    }
    if p < P_LOW {
        let q = (-2.0 * p.ln()).sqrt();
        (((((C[0] * q + C[1]) * q + C[2]) * q + C[3]) * q + C[4]) * q + C[5])
            / ((((D[0] * q + D[1]) * q + D[2]) * q + D[3]) * q + 1.0)
    } else if p <= 1.0 - P_LOW {
        let q = p - 0.5;
        let r = q * q;
        (((((A[0] * r + A[1]) * r + A[2]) * r + A[3]) * r + A[4]) * r + A[5]) * q
            / (((((B[0] * r + B[1]) * r + B[2]) * r + B[3]) * r + B[4]) * r + 1.0)
    } else {
        let q = (-2.0 * (1.0 - p).ln()).sqrt();
        -(((((C[0] * q + C[1]) * q + C[2]) * q + C[3]) * q + C[4]) * q + C[5])
            / ((((D[0] * q + D[1]) * q + D[2]) * q + D[3]) * q + 1.0)
    }
}

/// Standard normal deviate from 53 random bits by inversion.
///
/// The bits are mapped to the open interval `(0, 1)` as `(k + 0.5) / 2^53`.
pub fn normal_from_bits(bits: u64) -> f64 {
    const TOP: u64 = 1 << 53;
    let k = bits >> 11;
    let scale = 1.0 / TOP as f64;
    // mirror the upper half so 1 - u never rounds to exactly 1
    if k < TOP / 2 {
        normal_quantile((k as f64 + 0.5) * scale)
    } else {
        -normal_quantile(((TOP - 1 - k) as f64 + 0.5) * scale)
    }
}

/// Pairwise (cascade) summation; the result does not depend on thread
/// scheduling, only on the slice order.
pub fn pairwise_sum(xs: &[f64]) -> f64 {
    if xs.len() <= 8 {
        return xs.iter().sum();
    }
    let mid = xs.len() / 2;
    pairwise_sum(&xs[..mid]) + pairwise_sum(&xs[mid..])
}

pub fn mean(xs: &[f64]) -> f64 {
    if xs.is_empty() {
        return f64::NAN;
    }
    pairwise_sum(xs) / xs.len() as f64
}

/// Median of a slice (average of the two middle values for even length).
pub fn median(xs: &[f64]) -> f64 {
    if xs.is_empty() {
        return f64::NAN;
    }
    let mut v = xs.to_vec();
    v.sort_by(|a, b| a.total_cmp(b));
    let m = v.len() / 2;
    if v.len() % 2 == 1 {
        v[m]
    } else {
        0.5 * (v[m - 1] + v[m])
    }
}

/// Unbiased sample covariance of row vectors `rows[r][k]`.
pub fn sample_covariance(rows: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let r = rows.len();
    let dim = rows.first().map_or(0, |x| x.len());
    let means: Vec<f64> = (0..dim)
        .map(|k| mean(&rows.iter().map(|x| x[k]).collect::<Vec<_>>()))
        .collect();
    let mut cov = vec![vec![0.0; dim]; dim];
    if r < 2 {
        return cov;
    }
    for a in 0..dim {
        for b in a..dim {
            let prods: Vec<f64> = rows
                .iter()
                .map(|x| (x[a] - means[a]) * (x[b] - means[b]))
                .collect();
            let v = pairwise_sum(&prods) / (r - 1) as f64;
            cov[a][b] = v;
            cov[b][a] = v;
        }
    }
    cov
}

pub fn gcd(a: i64, b: i64) -> i64 {
    let (mut a, mut b) = (a.abs(), b.abs());
    while b != 0 {
        let t = a % b;
        a = b;
        b = t;
    }
    a
}

#[cfg(test)]
mod tests {
    use super::*;
    use statrs::distribution::{ContinuousCDF, Normal};

    #[test]
    fn quantile_matches_reference_to_1e8() {
        let reference = Normal::new(0.0, 1.0).unwrap();
        let mut worst: f64 = 0.0;
        for i in 1..20_000 {
            let p = i as f64 / 20_000.0;
            let z = normal_quantile(p);
            let zr = reference.inverse_cdf(p);
            worst = worst.max((z - zr).abs() / zr.abs().max(1.0));
        }
        for &p in &[1e-12, 1e-8, 1e-4, 0.02, 0.975, 1.0 - 1e-9] {
            let z = normal_quantile(p);
            let zr = reference.inverse_cdf(p);
            worst = worst.max((z - zr).abs() / zr.abs().max(1.0));
        }
        assert!(worst < 1e-8, "worst deviation {worst}");
    }

    #[test]
    fn quantile_edges() {
        assert_eq!(normal_quantile(0.5), 0.0);
        assert!((normal_quantile(0.975) - 1.959_963_984_540_054).abs() < 1e-8);
        assert_eq!(normal_quantile(0.0), f64::NEG_INFINITY);
        assert_eq!(normal_quantile(1.0), f64::INFINITY);
        assert!(normal_quantile(1.5).is_nan());
    }

    #[test]
    fn deviates_are_finite_at_extreme_bits() {
        assert!(normal_from_bits(0).is_finite());
        assert!(normal_from_bits(u64::MAX).is_finite());
        assert!(normal_from_bits(0) < -8.0);
        assert_eq!(normal_from_bits(0), -normal_from_bits(u64::MAX));
    }

    #[test]
    fn summary_helpers() {
        assert_eq!(median(&[3.0, 1.0, 2.0]), 2.0);
        assert_eq!(median(&[4.0, 1.0, 2.0, 3.0]), 2.5);
        assert_eq!(gcd(-4, 6), 2);
        assert_eq!(gcd(1, -1), 1);
        let rows = vec![vec![1.0, 2.0], vec![3.0, 6.0], vec![5.0, 10.0]];
        let c = sample_covariance(&rows);
        assert!((c[0][0] - 4.0).abs() < 1e-12);
        assert!((c[0][1] - 8.0).abs() < 1e-12);
        assert!((c[1][1] - 16.0).abs() < 1e-12);
        let xs: Vec<f64> = (0..1000).map(|i| i as f64 * 0.1).collect();
        assert!((pairwise_sum(&xs) - 49_950.0).abs() < 1e-9);
    }
}
