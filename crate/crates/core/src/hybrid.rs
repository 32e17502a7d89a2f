//! ARIMA trend forecasts corrected by a BP network trained on the ARIMA
//! one-step errors through a rolling window.

use std::collections::BTreeMap;
use std::fmt;

use serde::Serialize;

use crate::accounting::{IdentityFactors, ProvinceFactors};
use crate::arima::{self, ArimaModel, ArimaOrder};
use crate::bpnet::{self, BpNetwork, MetricReport, Sample, Scaling, TrainReport};
use crate::dataio::{Cell, EnergyType, RunConfig, Sector, Table};
use crate::error::{Error, Result, StageExt};
use crate::tsa::TimeSeries;

/// Longest extrapolation accepted past the last observed year.
pub const MAX_HORIZON_YEARS: i32 = 50;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Segment {
    Train,
    Test,
    Forecast,
}

impl fmt::Display for Segment {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Segment::Train => "train",
            Segment::Test => "test",
            Segment::Forecast => "forecast",
        })
    }
}

/// Whether the error-correction network is trained or fixed at zero.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum CorrectionMode {
    #[default]
    Trained,
    Zeroed,
}

/// A fitted hybrid model for one series.
#[derive(Debug, Clone)]
pub struct HybridForecaster {
    series: TimeSeries,
    n_train: usize,
    model: ArimaModel,
    network: BpNetwork,
    window_len: usize,
    /// Level-scale one-step errors over the training years, with their first year.
    errors: TimeSeries,
    fitted: TimeSeries,
    training: Option<TrainReport>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct HybridForecast {
    pub base: TimeSeries,
    pub correction: TimeSeries,
    pub combined: TimeSeries,
    pub segments: Vec<Segment>,
    pub window_len: usize,
    /// Observed training and test years.
    pub split: (usize, usize),
    pub order: ArimaOrder,
}

impl HybridForecast {
    pub fn to_table(&self) -> Table {
        let mut t = Table::new(["year", "base", "correction", "combined", "segment"]);
        for (i, year) in self.base.years().enumerate() {
            t.push(vec![
                year.into(),
                self.base.values()[i].into(),
                self.correction.values()[i].into(),
                self.combined.values()[i].into(),
                Cell::from(self.segments[i].to_string()),
            ]);
        }
        t
    }

    pub fn combined_at(&self, year: i32) -> Option<f64> {
        self.combined.get(year)
    }
}

/// Train and test metrics of the combined forecast, with the ARIMA-only
/// baseline for comparison.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SplitMetrics {
    pub train: MetricReport,
    pub test: MetricReport,
    pub arima_train: MetricReport,
    pub arima_test: MetricReport,
}

fn windows(errors: &[f64], w: usize, scaling: &Scaling) -> Vec<Sample> {
    (w..errors.len())
        .map(|t| Sample {
            input: errors[t - w..t].iter().map(|e| scaling.scale_input(*e)).collect(),
            target: vec![scaling.scale_target(errors[t])],
        })
        .collect()
}

impl HybridForecaster {
    /// Splits the series, fits ARIMA on the training part and trains the
    /// error-correction network.
    pub fn build(series: &TimeSeries, config: &RunConfig, seed: u64) -> Result<Self> {
        Self::build_with(series, config, seed, CorrectionMode::Trained, None)
    }

    /// As [`build`](Self::build), optionally with a zeroed network or a fixed ARIMA order.
    pub fn build_with(
        series: &TimeSeries,
        config: &RunConfig,
        seed: u64,
        mode: CorrectionMode,
        order: Option<ArimaOrder>,
    ) -> Result<Self> {
        config.validate()?;
        let w = config.bp.input_width;
        let n = series.len();
        if n < w + 10 {
            return Err(Error::TooShort { needed: w + 10, got: n }).stage("split");
        }
        let n_train = ((config.train_fraction * n as f64).round() as usize).clamp(1, n);
        let train = TimeSeries::new(series.start_year(), series.values()[..n_train].to_vec())?;
        let order = match order {
            Some(o) => o,
            None => arima::select_order(&train, config.arima_max_p, config.arima_max_d, config.arima_max_q)
                .stage("arima order selection")?,
        };
        let model = arima::fit(&train, order).stage("arima fit")?;
        let ins = arima::in_sample_residuals(&model).stage("arima residuals")?;
        let errors = ins.level_errors;
        let e = errors.values();
        if e.len() <= w {
            return Err(Error::TooShort { needed: w + 1, got: e.len() }).stage("bp windows");
        }
        let layers = config.bp.layer_sizes();
        let max_abs = e.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        let level_scale = train.values().iter().fold(0.0f64, |m, v| m.max(v.abs()));
        let negligible = max_abs <= 1e-12 * level_scale.max(f64::MIN_POSITIVE);
        let (network, training) = if mode == CorrectionMode::Zeroed || negligible {
            let mut net = BpNetwork::zeroed(&layers, config.bp.learning_rate).stage("bp init")?;
            net.set_scaling(Scaling { input_min: 0.0, input_max: 0.0, target_scale: 0.0 });
            (net, None)
        } else {
            let (lo, hi) = e.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| (a.min(*v), b.max(*v)));
            let scaling = Scaling { input_min: lo, input_max: hi, target_scale: max_abs };
            let samples = windows(e, w, &scaling);
            let mut net = BpNetwork::init(&layers, config.bp.learning_rate, seed)
                .stage("bp init")?
                .with_update_rule(config.bp.update_rule);
            net.set_scaling(scaling);
            let report = net
                .train(&samples, config.bp.max_epochs, config.bp.target_mse)
                .stage("bp training")?;
            (net, Some(report))
        };
        Ok(HybridForecaster {
            series: series.clone(),
            n_train,
            model,
            network,
            window_len: w,
            errors,
            fitted: ins.fitted_levels,
            training,
        })
    }

    pub fn model(&self) -> &ArimaModel {
        &self.model
    }

    pub fn network(&self) -> &BpNetwork {
        &self.network
    }

    pub fn training_report(&self) -> Option<&TrainReport> {
        self.training.as_ref()
    }

    pub fn last_observed_year(&self) -> i32 {
        self.series.end_year()
    }

    pub fn n_train(&self) -> usize {
        self.n_train
    }

    fn predict_error(&self, window: &[f64]) -> Result<f64> {
        if self.network.is_zero() {
            return Ok(0.0);
        }
        let scaling = self.network.scaling().copied().expect("trained network carries its scaling");
        let x: Vec<f64> = window.iter().map(|e| scaling.scale_input(*e)).collect();
        Ok(scaling.unscale_target(self.network.predict(&x)?[0]))
    }

    /// Rows for every year with a one-step fit, then `h` recursive steps past the training data.
    fn assemble(&self, h: usize) -> Result<HybridForecast> {
        let w = self.window_len;
        let e = self.errors.values();
        let mut base = Vec::new();
        let mut correction = Vec::new();
        let mut segments = Vec::new();
        for (i, &fit) in self.fitted.values().iter().enumerate() {
            let c = if i >= w { self.predict_error(&e[i - w..i])? } else { 0.0 };
            base.push(fit);
            correction.push(c);
            segments.push(Segment::Train);
        }
        if h > 0 {
            let path = arima::forecast(&self.model, h)?;
            let mut window: Vec<f64> = e[e.len() - w..].to_vec();
            let n_test = self.series.len() - self.n_train;
            for (k, &b) in path.values().iter().enumerate() {
                let c = self.predict_error(&window)?;
                window.remove(0);
                window.push(c);
                base.push(b);
                correction.push(c);
                segments.push(if k < n_test { Segment::Test } else { Segment::Forecast });
            }
        }
        let start = self.fitted.start_year();
        let combined: Vec<f64> = base.iter().zip(&correction).map(|(b, c)| b + c).collect();
        Ok(HybridForecast {
            base: TimeSeries::new(start, base)?,
            correction: TimeSeries::new(start, correction)?,
            combined: TimeSeries::new(start, combined)?,
            segments,
            window_len: w,
            split: (self.n_train, self.series.len() - self.n_train),
            order: self.model.order,
        })
    }

    /// Fitted and forecast values over the observed years only.
    pub fn in_sample(&self) -> Result<HybridForecast> {
        self.assemble(self.series.len() - self.n_train)
    }

    /// Extends the combined forecast to `end_year`.
    pub fn forecast_to(&self, end_year: i32) -> Result<HybridForecast> {
        let last = self.last_observed_year();
        if end_year <= last {
            return Err(Error::InvalidArgument(format!(
                "nothing to forecast: end year {end_year} is not after the last observed year {last}"
            )));
        }
        if end_year - last > MAX_HORIZON_YEARS {
            return Err(Error::InvalidArgument(format!(
                "refusing to extrapolate {} years past {last}; the limit is {MAX_HORIZON_YEARS}",
                end_year - last
            )));
        }
        let h = (end_year - self.series.start_year()) as usize + 1 - self.n_train;
        self.assemble(h)
    }

    /// Metrics on the original scale for the training and test segments.
    pub fn evaluate_split(&self) -> Result<SplitMetrics> {
        let fc = self.in_sample()?;
        let mut parts: BTreeMap<bool, (Vec<f64>, Vec<f64>, Vec<f64>)> = BTreeMap::new();
        for (i, year) in fc.base.years().enumerate() {
            let truth = self.series.get(year).expect("observed year");
            let entry = parts.entry(fc.segments[i] == Segment::Test).or_default();
            entry.0.push(fc.combined.values()[i]);
            entry.1.push(fc.base.values()[i]);
            entry.2.push(truth);
        }
        let test = parts
            .get(&true)
            .ok_or_else(|| Error::InvalidArgument("test segment is empty".into()))?;
        let train = parts
            .get(&false)
            .ok_or_else(|| Error::InvalidArgument("training segment is empty".into()))?;
        Ok(SplitMetrics {
            train: bpnet::evaluate(&train.0, &train.2)?,
            test: bpnet::evaluate(&test.0, &test.2)?,
            arima_train: bpnet::evaluate(&train.1, &train.2)?,
            arima_test: bpnet::evaluate(&test.1, &test.2)?,
        })
    }
}

/// Table with one row per segment and the five metrics.
pub fn metrics_table(rows: &[(String, SplitMetrics)]) -> Table {
    let mut t = Table::new(["series", "segment", "mse", "rmse", "mae", "mape", "r2"]);
    for (name, m) in rows {
        for (seg, r) in [("train", &m.train), ("test", &m.test)] {
            t.push(vec![
                Cell::from(name.as_str()),
                Cell::from(seg),
                r.mse.into(),
                r.rmse.into(),
                r.mae.into(),
                r.mape.into(),
                r.r2.into(),
            ]);
        }
    }
    t
}

/// Name of one driver series of the factor identity.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Driver {
    Population,
    Gdp,
    GdpShare(Sector),
    Intensity(Sector),
    EnergyShare(Sector, EnergyType),
}

impl fmt::Display for Driver {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Driver::Population => f.write_str("population"),
            Driver::Gdp => f.write_str("gdp"),
            Driver::GdpShare(s) => write!(f, "gdp_share/{s}"),
            Driver::Intensity(s) => write!(f, "intensity/{s}"),
            Driver::EnergyShare(s, e) => write!(f, "energy_share/{s}/{e}"),
        }
    }
}

/// Historical driver series of one province, in a fixed order.
pub fn driver_series(
    history: &BTreeMap<i32, IdentityFactors>,
    province: &str,
) -> Result<Vec<(Driver, TimeSeries)>> {
    let years: Vec<i32> = history.keys().copied().collect();
    let first = *years
        .first()
        .ok_or_else(|| Error::InvalidArgument("no factor history".into()))?;
    if years.windows(2).any(|w| w[1] != w[0] + 1) {
        return Err(Error::Alignment("factor history has gaps".into()));
    }
    let rows: Vec<&ProvinceFactors> = years
        .iter()
        .map(|y| {
            history[y]
                .provinces
                .get(province)
                .ok_or_else(|| Error::Alignment(format!("no factors for {province} in {y}")))
        })
        .collect::<Result<_>>()?;
    let cells: Vec<(Sector, EnergyType)> = rows[0].cells.keys().copied().collect();
    if rows.iter().any(|r| r.cells.keys().copied().collect::<Vec<_>>() != cells) {
        return Err(Error::Alignment(format!("cell set of {province} changes over time")));
    }
    let mut out: Vec<(Driver, Vec<f64>)> = vec![
        (Driver::Population, rows.iter().map(|r| r.population).collect()),
        (Driver::Gdp, rows.iter().map(|r| r.gdp).collect()),
    ];
    let sectors: Vec<Sector> = rows[0].sectors.keys().copied().collect();
    for &s in &sectors {
        out.push((Driver::GdpShare(s), rows.iter().map(|r| r.sectors[&s].gdp_share).collect()));
    }
    for &s in &sectors {
        out.push((Driver::Intensity(s), rows.iter().map(|r| r.sectors[&s].intensity).collect()));
    }
    for &(s, e) in &cells {
        out.push((Driver::EnergyShare(s, e), rows.iter().map(|r| r.cells[&(s, e)].share).collect()));
    }
    out.into_iter()
        .map(|(d, v)| Ok((d, TimeSeries::new(first, v)?)))
        .collect()
}

/// Forecasts one driver; constant histories are carried flat.
pub fn forecast_driver(
    series: &TimeSeries,
    end_year: i32,
    config: &RunConfig,
    seed: u64,
) -> Result<(TimeSeries, Option<ArimaOrder>)> {
    let v = series.values();
    if v.iter().all(|x| *x == v[0]) {
        let h = (end_year - series.end_year()).max(0) as usize;
        return Ok((TimeSeries::new(series.end_year() + 1, vec![v[0]; h.max(1)])?, None));
    }
    let f = HybridForecaster::build(series, config, seed)?;
    let fc = f.forecast_to(end_year)?;
    let future = fc.combined.slice_years(series.end_year() + 1, end_year)?;
    Ok((future, Some(fc.order)))
}

fn renormalize(values: &mut [f64]) -> bool {
    for v in values.iter_mut() {
        *v = v.max(0.0);
    }
    let total: f64 = values.iter().sum();
    if total > 0.0 {
        values.iter_mut().for_each(|v| *v /= total);
        true
    } else {
        false
    }
}

/// Builds factor sets for the years after the history from driver
/// forecasts. GDP follows its forecast until `gdp_growth_start_year` and
/// then grows at `gdp_growth_rate`; shares are clipped at zero and
/// renormalised; emission coefficients stay at their last observed values.
pub fn assemble_projection(
    history: &BTreeMap<i32, IdentityFactors>,
    province: &str,
    forecasts: &BTreeMap<Driver, TimeSeries>,
    end_year: i32,
    config: &RunConfig,
) -> Result<BTreeMap<i32, IdentityFactors>> {
    let (&last_year, last) = history
        .iter()
        .next_back()
        .ok_or_else(|| Error::InvalidArgument("no factor history".into()))?;
    let last = last
        .provinces
        .get(province)
        .ok_or_else(|| Error::Alignment(format!("no factors for {province} in {last_year}")))?;
    let value = |d: Driver, year: i32| -> Result<f64> {
        forecasts
            .get(&d)
            .and_then(|s| s.get(year))
            .ok_or_else(|| Error::MissingData { gaps: vec![format!("forecast of {d} for {year}")] })
    };
    let sectors: Vec<Sector> = last.sectors.keys().copied().collect();
    let mut out = BTreeMap::new();
    let mut prev_gdp = last.gdp;
    let mut prev_shares: BTreeMap<Sector, f64> = sectors.iter().map(|s| (*s, last.sectors[s].gdp_share)).collect();
    let mut prev_cell_shares: BTreeMap<(Sector, EnergyType), f64> =
        last.cells.iter().map(|(k, c)| (*k, c.share)).collect();
    for year in last_year + 1..=end_year {
        let population = value(Driver::Population, year)?.max(f64::MIN_POSITIVE);
        let gdp = if year >= config.gdp_growth_start_year {
            prev_gdp * (1.0 + config.gdp_growth_rate)
        } else {
            value(Driver::Gdp, year)?.max(f64::MIN_POSITIVE)
        };
        prev_gdp = gdp;
        let mut shares: Vec<f64> = sectors.iter().map(|s| value(Driver::GdpShare(*s), year)).collect::<Result<_>>()?;
        if renormalize(&mut shares) && shares.iter().all(|s| *s > 0.0) {
            for (s, v) in sectors.iter().zip(&shares) {
                prev_shares.insert(*s, *v);
            }
        }
        let gdp_by_sector: Vec<f64> = sectors.iter().map(|s| prev_shares[s] * gdp).collect();
        let mut gdp_arr = [0.0; 3];
        for (s, g) in sectors.iter().zip(&gdp_by_sector) {
            gdp_arr[s.gdp_index().expect("industry")] = *g;
        }
        let mut consumption = BTreeMap::new();
        let mut coefficients = BTreeMap::new();
        for (si, &s) in sectors.iter().enumerate() {
            let intensity = value(Driver::Intensity(s), year)?.max(0.0);
            let energy = intensity * gdp_by_sector[si];
            let keys: Vec<(Sector, EnergyType)> = last.cells.keys().copied().filter(|k| k.0 == s).collect();
            let mut cell_shares: Vec<f64> =
                keys.iter().map(|&(s, e)| value(Driver::EnergyShare(s, e), year)).collect::<Result<_>>()?;
            if renormalize(&mut cell_shares) {
                for (k, v) in keys.iter().zip(&cell_shares) {
                    prev_cell_shares.insert(*k, *v);
                }
            }
            for k in keys {
                consumption.insert(k, prev_cell_shares[&k] * energy);
                coefficients.insert(k, last.cells[&k].coefficient);
            }
        }
        let pf = ProvinceFactors::from_raw(&consumption, &coefficients, gdp_arr, population)?;
        let mut provinces = BTreeMap::new();
        provinces.insert(province.to_string(), pf);
        out.insert(year, IdentityFactors { year, provinces });
    }
    Ok(out)
}

/// Sequential convenience wrapper: forecasts every driver and assembles
/// the projected factors.
pub fn project_drivers(
    history: &BTreeMap<i32, IdentityFactors>,
    province: &str,
    end_year: i32,
    config: &RunConfig,
    seed_for: impl Fn(&str) -> u64,
) -> Result<BTreeMap<i32, IdentityFactors>> {
    let mut forecasts = BTreeMap::new();
    for (driver, series) in driver_series(history, province)? {
        let name = driver.to_string();
        let (f, _) = forecast_driver(&series, end_year, config, seed_for(&name))
            .map_err(|e| e.in_stage("driver forecast"))?;
        forecasts.insert(driver, f);
    }
    assemble_projection(history, province, &forecasts, end_year, config)
}
