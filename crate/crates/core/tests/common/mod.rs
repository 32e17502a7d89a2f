#![allow(dead_code)]

use carbon_core::tsa::TimeSeries;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

pub fn noise(seed: u64, n: usize) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n).map(|_| StandardNormal.sample(&mut rng)).collect()
}

/// `x_t = φ x_{t−1} + ε_t` after a burn-in of 100 draws.
pub fn ar1(seed: u64, n: usize, phi: f64) -> TimeSeries {
    let e = noise(seed, n + 100);
    let mut x = vec![0.0];
    for t in 1..e.len() {
        x.push(phi * x[t - 1] + e[t]);
    }
    TimeSeries::new(2000, x[100..].to_vec()).unwrap()
}

pub fn random_walk(seed: u64, n: usize) -> TimeSeries {
    let e = noise(seed, n);
    let mut y = vec![0.0];
    for t in 1..n {
        y.push(y[t - 1] + e[t]);
    }
    TimeSeries::new(2000, y).unwrap()
}

/// Integrated MA(1): `Δy_t = ε_t + θ ε_{t−1}`.
pub fn ima1(seed: u64, n: usize, theta: f64) -> TimeSeries {
    let e = noise(seed, n + 1);
    let mut y = vec![0.0];
    for t in 1..n {
        y.push(y[t - 1] + e[t + 1] + theta * e[t]);
    }
    TimeSeries::new(2000, y).unwrap()
}

pub fn rel_diff(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(f64::MIN_POSITIVE)
}
