use std::collections::BTreeMap;

use super::GroupSummary;
use crate::error::{Error, Result};
use crate::fixtures;

/// One value of the tested variable for a province-year.
#[derive(Debug, Clone, PartialEq)]
pub struct Observation {
    pub province: String,
    pub year: i32,
    pub value: f64,
}

/// How observations are split into groups.
#[derive(Debug, Clone, PartialEq)]
pub enum Scheme {
    /// Shipped high/low digital-economy province lists.
    DigitalEconomy,
    /// Shipped east/central/west province table.
    RegionEcw,
    /// Mean split on the tertiary/secondary output ratio per province-year.
    IndustryStructureRatio(BTreeMap<(String, i32), f64>),
    /// Mean split on a caller-supplied productivity index per province-year.
    NewProductivity(BTreeMap<(String, i32), f64>),
}

fn mean_split(
    obs: &[Observation],
    covariate: &BTreeMap<(String, i32), f64>,
    what: &str,
) -> Result<Vec<&'static str>> {
    let values: Vec<f64> = obs
        .iter()
        .map(|o| {
            covariate.get(&(o.province.clone(), o.year)).copied().ok_or_else(|| {
                Error::InvalidArgument(format!("no {what} for {} in {}", o.province, o.year))
            })
        })
        .collect::<Result<_>>()?;
    if values.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidArgument(format!("non-finite {what}")));
    }
    let mean = values.iter().sum::<f64>() / values.len() as f64;
    if values.iter().all(|v| *v == values[0]) {
        return Err(Error::Degenerate(format!(
            "every {what} equals {}; a mean split needs distinct values",
            values[0]
        )));
    }
    Ok(values.iter().map(|v| if *v > mean { "high" } else { "low" }).collect())
}

fn lookup(table: &BTreeMap<String, String>, obs: &[Observation], what: &str) -> Result<Vec<&'static str>> {
    obs.iter()
        .map(|o| {
            let g = table.get(&o.province).ok_or_else(|| {
                Error::InvalidArgument(format!("province `{}` is absent from the {what} table", o.province))
            })?;
            Ok(match g.as_str() {
                "high" => "high",
                "low" => "low",
                "east" => "east",
                "central" => "central",
                "west" => "west",
                other => return Err(Error::InvalidArgument(format!("unknown group `{other}` in {what} table"))),
            })
        })
        .collect()
}

/// Group label of every observation, and the order in which groups are reported.
pub fn assign_groups(obs: &[Observation], scheme: &Scheme) -> Result<(Vec<&'static str>, Vec<&'static str>)> {
    if obs.is_empty() {
        return Err(Error::InvalidArgument("no observations to group".into()));
    }
    Ok(match scheme {
        Scheme::DigitalEconomy => (lookup(&fixtures::digital_economy_groups()?, obs, "digital-economy")?, vec!["high", "low"]),
        Scheme::RegionEcw => (lookup(&fixtures::regions()?, obs, "region")?, vec!["east", "central", "west"]),
        Scheme::IndustryStructureRatio(r) => (mean_split(obs, r, "industry-structure ratio")?, vec!["low", "high"]),
        Scheme::NewProductivity(c) => (mean_split(obs, c, "productivity index")?, vec!["high", "low"]),
    })
}

/// Splits observations by `scheme` and summarises each group (sample SD).
pub fn summarize(obs: &[Observation], scheme: &Scheme) -> Result<Vec<GroupSummary>> {
    let (labels, order) = assign_groups(obs, scheme)?;
    let mut by_group: BTreeMap<&str, Vec<f64>> = BTreeMap::new();
    for (o, g) in obs.iter().zip(&labels) {
        by_group.entry(g).or_default().push(o.value);
    }
    order
        .iter()
        .map(|g| {
            let v = by_group.get(g).map(Vec::as_slice).unwrap_or(&[]);
            if v.len() < 2 {
                return Err(Error::InvalidArgument(format!(
                    "group `{g}` has {} observations; at least 2 are needed",
                    v.len()
                )));
            }
            let n = v.len() as f64;
            let mean = v.iter().sum::<f64>() / n;
            let sd = (v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt();
            Ok(GroupSummary::new(g, v.len(), mean, sd))
        })
        .collect()
}
