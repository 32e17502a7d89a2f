//! Reference tables compiled into the library.

use std::collections::BTreeMap;

use crate::analysis::{GroupSummary, TestMethod};
use crate::dataio::{EmissionFactorTable, EnergyType};
use crate::error::{Error, Result};
use crate::lmdi::{parse_effects_fixture, EffectsFixtureRow};

pub const ANNUAL_EFFECTS: &str = include_str!("../fixtures/annual_effects.csv");
pub const GROUP_SUMMARIES: &str = include_str!("../fixtures/group_summaries.csv");
pub const DIGITAL_ECONOMY_GROUPS: &str = include_str!("../fixtures/digital_economy_groups.csv");
pub const REGIONS: &str = include_str!("../fixtures/regions.csv");
pub const PROVINCE_CENTROIDS: &str = include_str!("../fixtures/province_centroids.csv");
pub const EMISSION_FACTORS: &str = include_str!("../fixtures/emission_factors.csv");

/// `(file name, contents)` of every shipped fixture.
pub fn all() -> Vec<(&'static str, &'static str)> {
    vec![
        ("annual_effects.csv", ANNUAL_EFFECTS),
        ("digital_economy_groups.csv", DIGITAL_ECONOMY_GROUPS),
        ("emission_factors.csv", EMISSION_FACTORS),
        ("group_summaries.csv", GROUP_SUMMARIES),
        ("province_centroids.csv", PROVINCE_CENTROIDS),
        ("regions.csv", REGIONS),
    ]
}

fn records(name: &str, text: &str, header: &[&str]) -> Result<Vec<csv::StringRecord>> {
    let mut reader = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let found = reader
        .headers()
        .map_err(|e| Error::InvalidArgument(format!("{name}: {e}")))?
        .clone();
    if found.iter().collect::<Vec<_>>() != header {
        return Err(Error::InvalidArgument(format!("{name}: header must be `{}`", header.join(","))));
    }
    reader
        .records()
        .map(|r| r.map_err(|e| Error::InvalidArgument(format!("{name}: {e}"))))
        .collect()
}

fn number<T: std::str::FromStr>(name: &str, field: &str) -> Result<T> {
    field
        .parse()
        .map_err(|_| Error::InvalidArgument(format!("{name}: cannot parse `{field}`")))
}

fn pairs(name: &str, text: &str, header: &[&str]) -> Result<BTreeMap<String, String>> {
    Ok(records(name, text, header)?
        .into_iter()
        .map(|r| (r[0].to_string(), r[1].to_string()))
        .collect())
}

/// Province to `high`/`low`.
pub fn digital_economy_groups() -> Result<BTreeMap<String, String>> {
    pairs("digital_economy_groups.csv", DIGITAL_ECONOMY_GROUPS, &["province", "group"])
}

/// Province to `east`/`central`/`west`.
pub fn regions() -> Result<BTreeMap<String, String>> {
    pairs("regions.csv", REGIONS, &["province", "region"])
}

/// Province to planar `(x, y)`.
pub fn province_centroids() -> Result<BTreeMap<String, (f64, f64)>> {
    let name = "province_centroids.csv";
    records(name, PROVINCE_CENTROIDS, &["province", "x", "y"])?
        .into_iter()
        .map(|r| Ok((r[0].to_string(), (number(name, &r[1])?, number(name, &r[2])?))))
        .collect()
}

pub fn default_factor_table() -> Result<EmissionFactorTable> {
    let name = "emission_factors.csv";
    let rows = records(name, EMISSION_FACTORS, &["energy", "factor"])?
        .into_iter()
        .map(|r| Ok((r[0].parse::<EnergyType>()?, number::<f64>(name, &r[1])?)))
        .collect::<Result<Vec<_>>>()?;
    EmissionFactorTable::constant(rows)
}

pub fn annual_effects() -> Result<Vec<EffectsFixtureRow>> {
    parse_effects_fixture(ANNUAL_EFFECTS)
}

/// A reference group comparison: the summaries and the reported statistic.
#[derive(Debug, Clone, PartialEq)]
pub struct PublishedTest {
    pub name: String,
    pub method: TestMethod,
    pub groups: Vec<GroupSummary>,
    pub reported_f: f64,
    pub reported_p: f64,
    /// `false` for comparisons whose reported statistic contradicts its own summaries.
    pub verifiable: bool,
}

/// Parses a group summary table, preserving test and group order.
pub fn parse_group_summaries(text: &str) -> Result<Vec<PublishedTest>> {
    let name = "group summaries";
    let header = ["test", "group", "n", "mean", "sd", "method", "reported_f", "reported_p", "status"];
    let mut out: Vec<PublishedTest> = Vec::new();
    for r in records(name, text, &header)? {
        let method = match &r[5] {
            "welch" => TestMethod::Welch,
            "classic" => TestMethod::ClassicAnova,
            other => return Err(Error::InvalidArgument(format!("{name}: unknown method `{other}`"))),
        };
        let group = GroupSummary::new(&r[1], number(name, &r[2])?, number(name, &r[3])?, number(name, &r[4])?);
        match out.last_mut() {
            Some(t) if t.name == r[0] => t.groups.push(group),
            _ => out.push(PublishedTest {
                name: r[0].to_string(),
                method,
                groups: vec![group],
                reported_f: number(name, &r[6])?,
                reported_p: number(name, &r[7])?,
                verifiable: &r[8] == "ok",
            }),
        }
    }
    Ok(out)
}

pub fn group_summaries() -> Result<Vec<PublishedTest>> {
    parse_group_summaries(GROUP_SUMMARIES)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn shipped_fixtures_parse() {
        assert_eq!(digital_economy_groups().unwrap().len(), 30);
        assert_eq!(regions().unwrap().len(), 30);
        assert_eq!(province_centroids().unwrap().len(), 30);
        assert_eq!(annual_effects().unwrap().len(), 12);
        let tests = group_summaries().unwrap();
        assert_eq!(tests.len(), 4);
        assert_eq!(tests[1].groups.len(), 3);
        assert!(!tests[3].verifiable);
        assert_eq!(default_factor_table().unwrap().projected(EnergyType::Coal).unwrap(), 0.7559);
    }

    #[test]
    fn province_lists_agree() {
        let a: Vec<_> = digital_economy_groups().unwrap().into_keys().collect();
        let b: Vec<_> = regions().unwrap().into_keys().collect();
        let c: Vec<_> = province_centroids().unwrap().into_keys().collect();
        assert_eq!(a, b);
        assert_eq!(b, c);
    }
}
