//! The work behind each command, kept apart from argument handling.

use std::collections::BTreeMap;

use carbon_core::accounting::{
    compute_emissions, derive_identity_factors, series_table, EmissionSeries, IdentityFactors, Scope,
};
use carbon_core::analysis::{
    centroid_path, classic_anova, ellipse_table, summarize, welch_test, CentroidStep, GroupSummary, Observation,
    Scheme, TestMethod, WelchResult,
};
use carbon_core::arima::ArimaOrder;
use carbon_core::dataio::{format_number, Cell, EnergyType, RunConfig, Sector, Table};
use carbon_core::hybrid::{
    assemble_projection, driver_series, forecast_driver, metrics_table, CorrectionMode, Driver, HybridForecast,
    HybridForecaster, SplitMetrics,
};
use carbon_core::lmdi::{decompose_series, DecompositionTable};
use carbon_core::tsa::TimeSeries;
use carbon_core::{fixtures, Error};
use rayon::prelude::*;
use serde_json::json;

use crate::inputs::{series_seed, Inputs};
use crate::output::{Manifest, Staging};
use crate::{invalid, CliError, Label, OrderArgs, Weights};

pub(crate) const NATIONAL: &str = "national";

/// File-name form of a series name.
pub(crate) fn slug(name: &str) -> String {
    name.chars()
        .map(|c| if c.is_ascii_alphanumeric() { c.to_ascii_lowercase() } else { '_' })
        .collect()
}

pub(crate) struct Accounts {
    pub provinces: Vec<EmissionSeries>,
    pub national: EmissionSeries,
    pub sectors: Vec<EmissionSeries>,
}

impl Accounts {
    pub fn last_year(&self) -> i32 {
        self.national.points[self.national.points.len() - 1].0
    }

    pub fn first_year(&self) -> i32 {
        self.national.points[0].0
    }
}

pub(crate) fn account(inputs: &Inputs) -> Result<Accounts, CliError> {
    let excluded = inputs
        .energy
        .records()
        .iter()
        .filter(|r| r.sector == Sector::Residential && matches!(r.energy, EnergyType::Power | EnergyType::Heat))
        .filter(|r| r.consumption.is_some_and(|v| v > 0.0))
        .count();
    if excluded > 0 {
        log::warn!("{excluded} residential power/heat records are excluded from emissions");
    }
    let provinces = inputs
        .energy
        .provinces()
        .iter()
        .map(|p| compute_emissions(&inputs.energy, &inputs.factors, &Scope::province(p)))
        .collect::<Result<Vec<_>, _>>()?;
    let national = compute_emissions(&inputs.energy, &inputs.factors, &Scope::national())?;
    let sectors = Sector::ALL
        .iter()
        .map(|s| compute_emissions(&inputs.energy, &inputs.factors, &Scope::sector(*s)))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(Accounts { provinces, national, sectors })
}

pub(crate) fn write_accounts(acc: &Accounts, out: &Staging) -> Result<(), CliError> {
    out.table("account/national", &acc.national.to_table())?;
    out.table("account/sectors", &series_table(&acc.sectors))?;
    out.table("account/provinces", &series_table(&acc.provinces))?;
    for s in &acc.provinces {
        out.table(&format!("account/province/{}", slug(&s.province)), &s.to_table())?;
    }
    Ok(())
}

/// Builds the hybrid model, honouring `--order` and `--fallback-order`.
/// The flag is true when the fallback order was used.
fn fit_hybrid(
    name: &str,
    series: &TimeSeries,
    config: &RunConfig,
    seed: u64,
    orders: &OrderArgs,
) -> Result<(HybridForecaster, bool), CliError> {
    if let Some(order) = orders.order {
        let h = HybridForecaster::build_with(series, config, seed, CorrectionMode::Trained, Some(order))?;
        return Ok((h, false));
    }
    match HybridForecaster::build(series, config, seed) {
        Ok(h) => Ok((h, false)),
        Err(e) if matches!(e.root(), Error::NoStationaryOrder { .. }) => match orders.fallback_order {
            Some(order) => {
                log::warn!("{name}: {e}; using the fallback order {order}");
                let h = HybridForecaster::build_with(series, config, seed, CorrectionMode::Trained, Some(order))?;
                Ok((h, true))
            }
            None => Err(e.into()),
        },
        Err(e) => Err(e.into()),
    }
}

pub(crate) struct SeriesForecast {
    pub name: String,
    pub forecast: HybridForecast,
    pub metrics: SplitMetrics,
    pub fallback: bool,
}

fn check_horizon(config: &RunConfig, last: i32, to_year: i32) -> Result<(), CliError> {
    let cfg = RunConfig { forecast_horizon_end_year: to_year, ..config.clone() };
    cfg.check_horizon(last)?;
    if to_year == last {
        return Err(invalid(format!("nothing to forecast: {to_year} is the last observed year")));
    }
    Ok(())
}

/// Forecasts `national` and/or province emissions to `to_year`; an empty
/// selection means every series. Results come back in selection order.
pub(crate) fn forecast(
    inputs: &Inputs,
    acc: &Accounts,
    names: &[String],
    to_year: i32,
    orders: &OrderArgs,
) -> Result<Vec<SeriesForecast>, CliError> {
    check_horizon(&inputs.config, acc.last_year(), to_year)?;
    let mut available: Vec<&EmissionSeries> = vec![&acc.national];
    available.extend(&acc.provinces);
    let name_of = |s: &EmissionSeries| if s.province == carbon_core::accounting::ALL { NATIONAL.to_string() } else { s.province.clone() };
    let chosen: Vec<(String, &EmissionSeries)> = if names.is_empty() {
        available.iter().map(|s| (name_of(s), *s)).collect()
    } else {
        names
            .iter()
            .map(|n| {
                available
                    .iter()
                    .find(|s| name_of(s) == *n)
                    .map(|s| (n.clone(), *s))
                    .ok_or_else(|| invalid(format!("unknown series `{n}`; expected `{NATIONAL}` or a province name")))
            })
            .collect::<Result<_, _>>()?
    };
    let config = &inputs.config;
    let results: Vec<Result<SeriesForecast, CliError>> = chosen
        .par_iter()
        .map(|(name, s)| {
            let run = || -> Result<SeriesForecast, CliError> {
                let ts = s.to_time_series()?;
                let (h, fallback) = fit_hybrid(name, &ts, config, series_seed(config.seed, name), orders)?;
                Ok(SeriesForecast {
                    name: name.clone(),
                    forecast: h.forecast_to(to_year)?,
                    metrics: h.evaluate_split()?,
                    fallback,
                })
            };
            run().label(format!("series `{name}`"))
        })
        .collect();
    results.into_iter().collect()
}

pub(crate) fn write_forecasts(fcs: &[SeriesForecast], out: &Staging, manifest: &mut Manifest) -> Result<(), CliError> {
    for f in fcs {
        out.table(&format!("forecast/{}", slug(&f.name)), &f.forecast.to_table())?;
        manifest.series(
            f.name.clone(),
            json!({
                "order": f.forecast.order.to_string(),
                "fallback_order_used": f.fallback,
                "metrics": f.metrics,
            }),
        );
    }
    let rows: Vec<(String, SplitMetrics)> = fcs.iter().map(|f| (f.name.clone(), f.metrics)).collect();
    out.table("forecast/metrics", &metrics_table(&rows))
}

fn cents(v: i64) -> String {
    let sign = if v < 0 { "-" } else { "" };
    format!("{sign}{}.{:02}", v.abs() / 100, v.abs() % 100)
}

/// Checks that every row of the shipped effects table adds up to its gross
/// effect within 0.01, printing one PASS/FAIL line per row.
pub(crate) fn verify_effects_fixture(out: &Staging) -> Result<Vec<(i32, bool)>, CliError> {
    let rows = fixtures::annual_effects()?;
    let mut table = Table::new(["year", "effects_sum", "gross", "gap", "status"]);
    let mut verdicts = Vec::with_capacity(rows.len());
    for r in &rows {
        let pass = r.gap() <= 1;
        let status = if pass { "PASS" } else { "FAIL" };
        println!(
            "{status} {}: effects sum to {}, gross effect {} (gap {})",
            r.year,
            cents(r.effects_sum()),
            cents(r.gross),
            cents(r.gap())
        );
        table.push(vec![
            r.year.into(),
            Cell::Text(cents(r.effects_sum())),
            Cell::Text(cents(r.gross)),
            Cell::Text(cents(r.gap())),
            status.into(),
        ]);
        verdicts.push((r.year, pass));
    }
    out.table("decompose/fixture_check", &table)?;
    Ok(verdicts)
}

pub(crate) struct DriverFit {
    pub name: String,
    pub order: Option<ArimaOrder>,
    pub fallback: bool,
}

pub(crate) struct Decomposition {
    pub historical: DecompositionTable,
    pub projected: Option<DecompositionTable>,
    pub drivers: Vec<DriverFit>,
}

pub(crate) fn decompose(inputs: &Inputs, to_year: Option<i32>, orders: &OrderArgs) -> Result<Decomposition, CliError> {
    let years = inputs.energy.years();
    if years.len() < 2 {
        return Err(invalid(format!("need ≥ 2 years to decompose; the panel covers {}", years.len())));
    }
    let history = derive_identity_factors(&inputs.energy, &inputs.economic, &inputs.factors)?;
    let historical = decompose_series(&history)?;
    let Some(to_year) = to_year else {
        return Ok(Decomposition { historical, projected: None, drivers: Vec::new() });
    };
    let (&last, last_factors) = history.iter().next_back().expect("at least two years");
    check_horizon(&inputs.config, last, to_year)?;
    let (projected, drivers) = project(inputs, &history, to_year, orders)?;
    let mut span = BTreeMap::new();
    span.insert(last, last_factors.clone());
    span.extend(projected);
    Ok(Decomposition { historical, projected: Some(decompose_series(&span)?), drivers })
}

/// Forecasts every driver of every province and assembles national factor
/// sets for the years after the history.
fn project(
    inputs: &Inputs,
    history: &BTreeMap<i32, IdentityFactors>,
    to_year: i32,
    orders: &OrderArgs,
) -> Result<(BTreeMap<i32, IdentityFactors>, Vec<DriverFit>), CliError> {
    let config = &inputs.config;
    let provinces: Vec<String> = history.values().next().expect("non-empty").provinces.keys().cloned().collect();
    let mut jobs: Vec<(String, Driver, TimeSeries)> = Vec::new();
    for p in &provinces {
        for (d, s) in driver_series(history, p)? {
            jobs.push((p.clone(), d, s));
        }
    }
    let results: Vec<Result<(TimeSeries, Option<ArimaOrder>, bool), CliError>> = jobs
        .par_iter()
        .map(|(p, d, s)| {
            let name = format!("{p}/{d}");
            let seed = series_seed(config.seed, &name);
            let run = || -> Result<_, CliError> {
                let v = s.values();
                if orders.order.is_none() && v.iter().all(|x| *x == v[0]) {
                    let (f, order) = forecast_driver(s, to_year, config, seed)?;
                    return Ok((f, order, false));
                }
                let (h, fallback) = fit_hybrid(&name, s, config, seed, orders)?;
                let fc = h.forecast_to(to_year)?;
                Ok((fc.combined.slice_years(s.end_year() + 1, to_year)?, Some(fc.order), fallback))
            };
            run().label(format!("driver {name}"))
        })
        .collect();
    let mut forecasts: BTreeMap<&str, BTreeMap<Driver, TimeSeries>> = BTreeMap::new();
    let mut fits = Vec::with_capacity(jobs.len());
    for ((p, d, _), r) in jobs.iter().zip(results) {
        let (series, order, fallback) = r?;
        forecasts.entry(p.as_str()).or_default().insert(*d, series);
        fits.push(DriverFit { name: format!("{p}/{d}"), order, fallback });
    }
    let mut out: BTreeMap<i32, IdentityFactors> = BTreeMap::new();
    for p in &provinces {
        let projected = assemble_projection(history, p, &forecasts[p.as_str()], to_year, config).label(p.as_str())?;
        for (year, f) in projected {
            let entry = out.entry(year).or_insert_with(|| IdentityFactors { year, provinces: BTreeMap::new() });
            entry.provinces.extend(f.provinces);
        }
    }
    Ok((out, fits))
}

pub(crate) fn write_decomposition(dec: &Decomposition, out: &Staging, manifest: &mut Manifest) -> Result<(), CliError> {
    out.table("decompose/effects", &dec.historical.to_table())?;
    if let Some(p) = &dec.projected {
        out.table("decompose/projected_effects", &p.to_table())?;
    }
    for d in &dec.drivers {
        manifest.series(
            format!("driver/{}", d.name),
            json!({
                "order": d.order.map(|o| o.to_string()),
                "fallback_order_used": d.fallback,
            }),
        );
    }
    Ok(())
}

pub(crate) fn spatial(acc: &Accounts, weights: Weights) -> Result<Vec<CentroidStep>, CliError> {
    let coords = fixtures::province_centroids()?;
    let mut yearly: BTreeMap<i32, BTreeMap<String, f64>> = BTreeMap::new();
    for s in &acc.provinces {
        for &(year, v) in &s.points {
            let w = match weights {
                Weights::Emissions => v,
                Weights::Uniform => 1.0,
            };
            yearly.entry(year).or_default().insert(s.province.clone(), w);
        }
    }
    Ok(centroid_path(&yearly, &coords)?)
}

pub(crate) fn write_spatial(path: &[CentroidStep], out: &Staging) -> Result<(), CliError> {
    out.table("spatial/ellipses", &ellipse_table(path))
}

/// One line describing how far the centre moved over the whole span.
pub(crate) fn drift_line(path: &[CentroidStep]) -> String {
    let (first, last) = (&path[0], &path[path.len() - 1]);
    if path.iter().all(|s| s.drift.is_none_or(|d| d == (0.0, 0.0))) {
        return format!(
            "zero drift: the centre stays at ({}, {}) over {}-{}",
            format_number(first.ellipse.center_x),
            format_number(first.ellipse.center_y),
            first.year,
            last.year
        );
    }
    format!(
        "centre drift {}-{}: dx={}, dy={}",
        first.year,
        last.year,
        format_number(last.ellipse.center_x - first.ellipse.center_x),
        format_number(last.ellipse.center_y - first.ellipse.center_y)
    )
}

pub(crate) struct GroupTest {
    pub name: String,
    pub groups: Vec<GroupSummary>,
    pub result: WelchResult,
    /// Reported F, reported p and whether the report is reproducible.
    pub reported: Option<(f64, f64, bool)>,
}

pub(crate) struct GroupReport {
    pub tests: Vec<GroupTest>,
}

fn run_test(method: TestMethod, groups: &[GroupSummary]) -> Result<WelchResult, CliError> {
    Ok(match method {
        TestMethod::Welch => welch_test(groups)?,
        TestMethod::ClassicAnova => classic_anova(groups)?,
    })
}

/// Tests emissions by digital-economy group and emission intensity by
/// region and by industry structure.
pub(crate) fn group_tests(inputs: &Inputs, acc: &Accounts) -> Result<GroupReport, CliError> {
    let mut emissions = Vec::new();
    let mut intensity = Vec::new();
    let mut ratio = BTreeMap::new();
    for s in &acc.provinces {
        for &(year, v) in &s.points {
            let econ = inputs.economic.get(&s.province, year).ok_or_else(|| {
                CliError::from(Error::Alignment(format!("no economic data for {} in {year}", s.province)))
            })?;
            let obs = |value| Observation { province: s.province.clone(), year, value };
            emissions.push(obs(v));
            intensity.push(obs(v / econ.total_gdp()));
            ratio.insert((s.province.clone(), year), econ.gdp[2] / econ.gdp[1]);
        }
    }
    let plan = [
        ("digital_economy_emissions", &emissions, Scheme::DigitalEconomy, TestMethod::Welch),
        ("region_intensity", &intensity, Scheme::RegionEcw, TestMethod::Welch),
        ("industry_structure_intensity", &intensity, Scheme::IndustryStructureRatio(ratio), TestMethod::ClassicAnova),
    ];
    let tests = plan
        .into_iter()
        .map(|(name, obs, scheme, method)| {
            let groups = summarize(obs, &scheme).label(name)?;
            let result = run_test(method, &groups).label(name)?;
            Ok(GroupTest { name: name.to_string(), groups, result, reported: None })
        })
        .collect::<Result<_, CliError>>()?;
    Ok(GroupReport { tests })
}

/// Recomputes every shipped comparison from its group summaries.
pub(crate) fn group_tests_fixture() -> Result<GroupReport, CliError> {
    let tests = fixtures::group_summaries()?
        .into_iter()
        .map(|t| {
            let result = run_test(t.method, &t.groups).label(t.name.as_str())?;
            Ok(GroupTest {
                name: t.name,
                groups: t.groups,
                result,
                reported: Some((t.reported_f, t.reported_p, t.verifiable)),
            })
        })
        .collect::<Result<_, CliError>>()?;
    Ok(GroupReport { tests })
}

impl GroupReport {
    pub fn lines(&self) -> Vec<String> {
        self.tests
            .iter()
            .map(|t| {
                let r = &t.result;
                let mut line = format!(
                    "{}: {} F={} p={} (df {}, {})",
                    t.name,
                    r.method,
                    format_number(r.f),
                    format_number(r.p_value),
                    format_number(r.df1),
                    format_number(r.df2)
                );
                if let Some((f, p, verifiable)) = t.reported {
                    line.push_str(&format!("; reported F={} p={}", format_number(f), format_number(p)));
                    if !verifiable {
                        line.push_str(" [reported statistic cannot be reproduced from its summaries]");
                    }
                }
                line
            })
            .collect()
    }

    pub fn report_table(&self) -> Table {
        let replay = self.tests.iter().any(|t| t.reported.is_some());
        let mut cols = vec!["test", "method", "f", "df1", "df2", "p_value"];
        if replay {
            cols.extend(["reported_f", "reported_p", "verifiable"]);
        }
        let mut t = Table::new(cols);
        for g in &self.tests {
            let r = &g.result;
            let mut row: Vec<Cell> = vec![
                g.name.as_str().into(),
                r.method.to_string().into(),
                r.f.into(),
                r.df1.into(),
                r.df2.into(),
                r.p_value.into(),
            ];
            if let Some((f, p, v)) = g.reported {
                row.extend([f.into(), p.into(), Cell::from(if v { "yes" } else { "no" })]);
            }
            t.push(row);
        }
        t
    }

    pub fn summary_table(&self) -> Table {
        let mut t = Table::new(["test", "group", "n", "mean", "sd"]);
        for g in &self.tests {
            for s in &g.groups {
                t.push(vec![g.name.as_str().into(), s.name.as_str().into(), s.n.into(), s.mean.into(), s.sd.into()]);
            }
        }
        t
    }
}

pub(crate) fn write_group_tests(report: &GroupReport, out: &Staging) -> Result<(), CliError> {
    out.table("group_test/report", &report.report_table())?;
    out.table("group_test/summaries", &report.summary_table())
}
