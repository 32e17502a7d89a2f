use std::fmt::Write;

use carbon_core::analysis::CentroidStep;
use carbon_core::dataio::format_number;

use crate::inputs::Inputs;
use crate::stages::{drift_line, Accounts, Decomposition, GroupReport, SeriesForecast, NATIONAL};

pub(crate) struct Parts<'a> {
    pub inputs: &'a Inputs,
    pub accounts: &'a Accounts,
    pub forecasts: &'a [SeriesForecast],
    pub to_year: i32,
    pub decomposition: &'a Decomposition,
    pub path: &'a [CentroidStep],
    pub groups: &'a GroupReport,
}

fn pct(x: f64) -> String {
    format!("{:.1}%", 100.0 * x)
}

/// Plain-text overview of a pipeline run.
pub(crate) fn render(p: &Parts) -> String {
    let mut s = String::new();
    let acc = p.accounts;
    let (first, last) = (acc.first_year(), acc.last_year());
    let national = |y| acc.national.get(y).expect("year in range");
    // writing to a String cannot fail
    let _ = writeln!(s, "Carbon emission pipeline summary");
    let _ = writeln!(s, "provinces: {}, years: {first}-{last}, seed: {}", acc.provinces.len(), p.inputs.config.seed);

    let _ = writeln!(s, "\n1. Emission accounting (10^4 t CO2)");
    let (e0, e1) = (national(first), national(last));
    let _ = writeln!(
        s,
        "national total {first}: {}; {last}: {} ({} change)",
        format_number(e0),
        format_number(e1),
        pct(e1 / e0 - 1.0)
    );
    let mut ranked: Vec<(&str, f64)> =
        acc.provinces.iter().map(|x| (x.province.as_str(), x.get(last).unwrap_or(0.0))).collect();
    ranked.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(b.0)));
    let top: Vec<String> = ranked.iter().take(5).map(|(n, v)| format!("{n} {}", format_number(*v))).collect();
    let _ = writeln!(s, "largest emitters in {last}: {}", top.join(", "));
    let shares: Vec<String> = acc
        .sectors
        .iter()
        .map(|x| format!("{} {}", x.sector, pct(x.get(last).unwrap_or(0.0) / e1)))
        .collect();
    let _ = writeln!(s, "sector shares in {last}: {}", shares.join(", "));

    let _ = writeln!(s, "\n2. Hybrid forecast to {}", p.to_year);
    if let Some(n) = p.forecasts.iter().find(|f| f.name == NATIONAL) {
        let end = n.forecast.combined_at(p.to_year).unwrap_or(f64::NAN);
        let _ = writeln!(
            s,
            "national: ARIMA{}, {} in {}; test RMSE {} (ARIMA alone {})",
            n.forecast.order,
            format_number(end),
            p.to_year,
            format_number(n.metrics.test.rmse),
            format_number(n.metrics.arima_test.rmse)
        );
    }
    let provinces: Vec<&SeriesForecast> = p.forecasts.iter().filter(|f| f.name != NATIONAL).collect();
    let mut ahead: Vec<(&str, f64)> = provinces
        .iter()
        .map(|f| (f.name.as_str(), f.forecast.combined_at(p.to_year).unwrap_or(f64::NAN)))
        .collect();
    ahead.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(b.0)));
    let top: Vec<String> = ahead.iter().take(5).map(|(n, v)| format!("{n} {}", format_number(*v))).collect();
    let _ = writeln!(s, "highest provincial forecasts for {}: {}", p.to_year, top.join(", "));
    let better = p.forecasts.iter().filter(|f| f.metrics.test.rmse < f.metrics.arima_test.rmse).count();
    let _ = writeln!(s, "network correction lowered test RMSE for {better} of {} series", p.forecasts.len());
    let fallbacks = p.forecasts.iter().filter(|f| f.fallback).count();
    if fallbacks > 0 {
        let _ = writeln!(s, "fallback ARIMA order used for {fallbacks} series");
    }

    let c = &p.decomposition.historical.cumulative;
    let _ = writeln!(s, "\n3. LMDI decomposition {}-{} (10^4 t CO2)", c.from_year, c.year);
    for (label, v) in [
        ("energy structure", c.dc_s),
        ("energy intensity", c.dc_e),
        ("industrial structure", c.dc_n),
        ("per-capita GDP", c.dc_r),
        ("population", c.dc_p),
        ("total change", c.total),
    ] {
        let _ = writeln!(s, "{label}: {}", format_number(v));
    }

    let _ = writeln!(s, "\n4. Spatial distribution");
    let (a, b) = (&p.path[0].ellipse, &p.path[p.path.len() - 1].ellipse);
    let _ = writeln!(
        s,
        "emission centre {}: ({}, {}); {}: ({}, {})",
        p.path[0].year,
        format_number(a.center_x),
        format_number(a.center_y),
        p.path[p.path.len() - 1].year,
        format_number(b.center_x),
        format_number(b.center_y)
    );
    let _ = writeln!(s, "{}", drift_line(p.path));
    let _ = writeln!(
        s,
        "ellipse area {} -> {}, orientation {} -> {} rad",
        format_number(a.area),
        format_number(b.area),
        format_number(a.theta),
        format_number(b.theta)
    );

    let _ = writeln!(s, "\n5. Group differences");
    for line in p.groups.lines() {
        let _ = writeln!(s, "{line}");
    }
    s
}
