//! Reference implementations used as test oracles. Nothing here calls into
//! the transform or criterion code of the crate.
#![allow(dead_code)]

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rustfft::num_complex::Complex64;

/// `d_l = (1/n) sum_m x_m e^{-i 2 pi l m / n}` for `l = -L..=L`, by the
/// definition.
pub fn brute_dft(x: &[f64]) -> Vec<Complex64> {
    let n = x.len();
    let cutoff = (n as i64 - 1) / 2;
    (-cutoff..=cutoff)
        .map(|l| {
            let mut acc = Complex64::new(0.0, 0.0);
            for (m, v) in x.iter().enumerate() {
                let angle = -2.0 * PI * (l * m as i64) as f64 / n as f64;
                acc += Complex64::new(angle.cos(), angle.sin()) * v;
            }
            acc / n as f64
        })
        .collect()
}

/// `(1/J) sum_j sum_l delta_l^2 |e^{i l a_j} d_jl - (1/J) sum_k e^{i l a_k} d_kl|^2`
/// with `delta` indexed `-L..=L`.
pub fn brute_criterion(rows: &[Vec<Complex64>], delta: &[f64], phases: &[f64]) -> f64 {
    let j = rows.len();
    let width = rows[0].len();
    let cutoff = (width as i64 - 1) / 2;
    let mut total = 0.0;
    for r in 0..j {
        for (k, l) in (-cutoff..=cutoff).enumerate() {
            let rot = |q: usize| {
                let a = l as f64 * phases[q];
                Complex64::new(a.cos(), a.sin()) * rows[q][k]
            };
            let mut centre = Complex64::new(0.0, 0.0);
            for q in 0..j {
                centre += rot(q);
            }
            centre /= j as f64;
            total += delta[k] * delta[k] * (rot(r) - centre).norm_sqr();
        }
    }
    total / j as f64
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn odd_in(rng: &mut ChaCha8Rng, lo: usize, hi: usize) -> usize {
    loop {
        let n = rng.random_range(lo..=hi);
        if n % 2 == 1 {
            return n;
        }
    }
}

/// `cos(2 pi t / T - a)` at `t_i = i T / n`.
pub fn cosine(n: usize, a: f64) -> Vec<f64> {
    (0..n)
        .map(|i| (2.0 * PI * i as f64 / n as f64 - a).cos())
        .collect()
}

/// Circular shift by `k` samples to the right.
pub fn roll(x: &[f64], k: usize) -> Vec<f64> {
    let n = x.len();
    (0..n).map(|i| x[(i + n - k % n) % n]).collect()
}

pub fn wrap(x: f64) -> f64 {
    let y = (x + PI).rem_euclid(2.0 * PI) - PI;
    if y == -PI && x > 0.0 {
        PI
    } else {
        y
    }
}

pub fn sample_mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

pub fn sample_std(xs: &[f64]) -> f64 {
    let m = sample_mean(xs);
    (xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (xs.len() - 1) as f64).sqrt()
}

pub fn fixtures() -> serde_json::Value {
    serde_json::from_str(include_str!("../fixtures/calibration.json")).expect("fixture json")
}
