mod common;

use std::collections::BTreeMap;

use carbon_core::accounting::{derive_identity_factors, IdentityFactors, ProvinceFactors};
use carbon_core::dataio::{EnergyType, Sector};
use carbon_core::fixtures;
use carbon_core::lmdi::{decompose_pair, decompose_series, ADDITIVITY_TOL};
use carbon_core::synthetic::random_panel;
use common::rel_diff;
use proptest::prelude::*;

fn identity_series(seed: u64) -> BTreeMap<i32, IdentityFactors> {
    let (panel, econ, factors) = random_panel(seed).unwrap();
    derive_identity_factors(&panel, &econ, &factors).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn effects_add_up_to_the_total(seed in any::<u64>()) {
        let ids = identity_series(seed);
        let table = decompose_series(&ids).unwrap();
        for r in table.rows.iter().chain([&table.cumulative]) {
            prop_assert_eq!(r.dc_f, 0.0);
            prop_assert!(r.additivity_gap() <= ADDITIVITY_TOL, "gap {}", r.additivity_gap());
        }
    }

    #[test]
    fn swapping_years_negates_every_effect(seed in any::<u64>()) {
        let ids = identity_series(seed);
        let years: Vec<_> = ids.values().collect();
        let fwd = decompose_pair(years[0], years[1]).unwrap();
        let back = decompose_pair(years[1], years[0]).unwrap().negated();
        prop_assert_eq!((fwd.from_year, fwd.year), (back.from_year, back.year));
        let scale = fwd.effects().iter().map(|x| x.abs()).fold(fwd.total.abs(), f64::max).max(1.0);
        for (a, b) in fwd.effects().iter().zip(back.effects()) {
            prop_assert!((a - b).abs() <= 1e-9 * scale, "{} vs {}", a, b);
        }
        prop_assert!((fwd.total - back.total).abs() <= 1e-9 * scale);
    }

    #[test]
    fn cumulative_row_chains_the_annual_rows(seed in any::<u64>()) {
        let ids = identity_series(seed);
        let table = decompose_series(&ids).unwrap();
        let first = ids.values().next().unwrap();
        let last = ids.values().last().unwrap();
        prop_assert_eq!(table.rows.len(), ids.len() - 1);
        prop_assert_eq!((table.cumulative.from_year, table.cumulative.year), (first.year, last.year));
        let total = last.emissions() - first.emissions();
        prop_assert!((table.cumulative.total - total).abs() <= 1e-12 * total.abs().max(1.0));
        let summed: f64 = table.rows.iter().map(|r| r.total).sum();
        prop_assert!((summed - total).abs() <= 1e-9 * total.abs().max(1.0));
        for k in 0..5 {
            let s: f64 = table.rows.iter().map(|r| r.effects()[k]).sum();
            prop_assert_eq!(s, table.cumulative.effects()[k]);
        }
    }
}

struct Year {
    coal: f64,
    oil: f64,
    gdp: [f64; 3],
    pop: f64,
}

const F_COAL: f64 = 2.77;
const F_OIL: f64 = 2.15;

fn factors(year: i32, y: &Year) -> IdentityFactors {
    let consumption = BTreeMap::from([
        ((Sector::Secondary, EnergyType::Coal), y.coal),
        ((Sector::Secondary, EnergyType::Petroleum), y.oil),
    ]);
    let coefficients = BTreeMap::from([
        ((Sector::Secondary, EnergyType::Coal), F_COAL),
        ((Sector::Secondary, EnergyType::Petroleum), F_OIL),
    ]);
    let pf = ProvinceFactors::from_raw(&consumption, &coefficients, y.gdp, y.pop).unwrap();
    IdentityFactors { year, provinces: BTreeMap::from([("X".to_string(), pf)]) }
}

/// Textbook LMDI-I written out term by term, for comparison.
fn by_hand(a: &Year, b: &Year) -> [f64; 6] {
    let lm = |x: f64, y: f64| if x == y { x } else { (x - y) / (x.ln() - y.ln()) };
    let e_i = |y: &Year| y.coal + y.oil;
    let g = |y: &Year| y.gdp.iter().sum::<f64>();
    let mut out = [0.0; 6];
    for (ea, eb, f) in [(a.coal, b.coal, F_COAL), (a.oil, b.oil, F_OIL)] {
        let w = lm(eb * f, ea * f);
        let ratios = [
            (eb / e_i(b)) / (ea / e_i(a)),
            (e_i(b) / b.gdp[1]) / (e_i(a) / a.gdp[1]),
            (b.gdp[1] / g(b)) / (a.gdp[1] / g(a)),
            (g(b) / b.pop) / (g(a) / a.pop),
            b.pop / a.pop,
        ];
        for (k, r) in ratios.iter().enumerate() {
            out[k] += w * r.ln();
        }
        out[5] += eb * f - ea * f;
    }
    out
}

#[test]
fn two_cell_example_matches_hand_formula() {
    let a = Year { coal: 120.0, oil: 30.0, gdp: [20.0, 90.0, 60.0], pop: 40.0 };
    let b = Year { coal: 105.0, oil: 48.0, gdp: [21.0, 101.0, 75.0], pop: 40.6 };
    let row = decompose_pair(&factors(2020, &a), &factors(2021, &b)).unwrap();
    let want = by_hand(&a, &b);
    let got = [row.dc_s, row.dc_e, row.dc_n, row.dc_r, row.dc_p, row.total];
    for (g, w) in got.iter().zip(want) {
        assert!(rel_diff(*g, w) < 1e-12, "{g} vs {w}");
    }
    assert_eq!(row.dc_f, 0.0);
}

#[test]
fn population_growth_alone_is_all_population_effect() {
    let k = 1.07;
    let a = Year { coal: 80.0, oil: 20.0, gdp: [10.0, 50.0, 40.0], pop: 25.0 };
    let b = Year { coal: 80.0 * k, oil: 20.0 * k, gdp: a.gdp.map(|g| g * k), pop: 25.0 * k };
    let row = decompose_pair(&factors(2000, &a), &factors(2001, &b)).unwrap();
    for x in [row.dc_s, row.dc_e, row.dc_n, row.dc_r] {
        assert!(x.abs() < 1e-10, "{x}");
    }
    assert!(rel_diff(row.dc_p, row.total) < 1e-12);
    assert!(row.total > 0.0);
}

#[test]
fn published_first_row_adds_up_exactly() {
    let rows = fixtures::annual_effects().unwrap();
    assert_eq!(rows[0].year, 2024);
    assert_eq!(rows[0].effects_sum(), rows[0].gross);
    assert_eq!(rows[0].gross, -110_036);
}

#[test]
fn zero_cells_do_not_break_additivity() {
    let a = Year { coal: 0.0, oil: 30.0, gdp: [20.0, 90.0, 60.0], pop: 40.0 };
    let b = Year { coal: 50.0, oil: 0.0, gdp: [21.0, 101.0, 75.0], pop: 40.6 };
    let row = decompose_pair(&factors(2020, &a), &factors(2021, &b)).unwrap();
    assert!(row.additivity_gap() <= ADDITIVITY_TOL);
    assert!(row.effects().iter().all(|x| x.is_finite()));
    assert!(rel_diff(row.total, 50.0 * F_COAL - 30.0 * F_OIL) < 1e-12);
}
