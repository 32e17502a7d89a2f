mod common;

use carbon_core::tsa::{acf, adf_test, difference, ljung_box, pacf, LagSpec, TimeSeries};
use common::{ar1, noise, random_walk};

fn rejects(s: &TimeSeries) -> bool {
    adf_test(s, LagSpec::Auto).unwrap().reject_at_5pct
}

#[test]
fn random_walks_rarely_reject_a_unit_root() {
    assert!(!rejects(&random_walk(1, 200)));
    let hits = (0..500).filter(|&s| rejects(&random_walk(10_000 + s, 200))).count();
    assert!(hits <= 50, "{hits}/500 random walks rejected");
}

#[test]
fn weakly_persistent_ar1_is_detected() {
    assert!(rejects(&ar1(1, 200, 0.3)));
    let hits = (0..500).filter(|&s| rejects(&ar1(20_000 + s, 200, 0.3))).count();
    assert!(hits >= 450, "power {hits}/500");
}

#[test]
fn differenced_walks_are_stationary() {
    let hits = (0..100)
        .filter(|&s| rejects(&difference(&random_walk(30_000 + s, 200), 1).unwrap()))
        .count();
    assert!(hits >= 95, "{hits}/100");
}

#[test]
fn white_noise_acf_stays_in_bartlett_band() {
    let n = 1000;
    let s = TimeSeries::new(0, noise(7, n)).unwrap();
    let r = acf(&s, 5).unwrap();
    assert_eq!(r[0], 1.0);
    let band = 3.0 / (n as f64).sqrt();
    for (k, v) in r.iter().enumerate().skip(1) {
        assert!(v.abs() < band, "lag {k}: {v}");
    }
}

#[test]
fn ar1_acf_decays_geometrically() {
    let s = ar1(3, 2000, 0.8);
    let r = acf(&s, 3).unwrap();
    assert!((r[1] - 0.8).abs() < 0.05, "{}", r[1]);
    assert!((r[2] - 0.64).abs() < 0.08, "{}", r[2]);
    let p = pacf(&s, 3).unwrap();
    assert!((p[1] - r[1]).abs() < 1e-15);
    assert!(p[2].abs() < 3.0 / 2000f64.sqrt() * 1.5, "{}", p[2]);
}

#[test]
fn ljung_box_accepts_white_noise() {
    let ok = (0..200)
        .filter(|&seed| {
            let s = TimeSeries::new(0, noise(40_000 + seed, 200)).unwrap();
            ljung_box(&s, 10, 0).unwrap().1 > 0.05
        })
        .count();
    assert!(ok >= 180, "{ok}/200");
}

#[test]
fn ljung_box_flags_strong_autocorrelation() {
    for seed in 0..20 {
        let (_, p) = ljung_box(&ar1(50_000 + seed, 200, 0.9), 10, 0).unwrap();
        assert!(p < 0.01, "seed {seed}: p = {p}");
    }
}
