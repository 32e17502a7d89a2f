//! Emission-factor accounting and the factor identity behind the LMDI
//! decomposition.
//!
//! Emissions of a cell are `E · r · 44/12` where `E` is consumption and `r`
//! the carbon coefficient of the energy type. Power and heat consumed by
//! households are accepted in the input but carry a zero effective factor.

use std::collections::BTreeMap;

use serde::Serialize;

use crate::dataio::{
    Cell, EconomicPanel, EmissionFactorTable, EnergyPanel, EnergyType, Sector, Table, CARBON_TO_CO2,
};
use crate::error::{Error, Result};
use crate::tsa::TimeSeries;

/// Label used for aggregates over every province or sector.
pub const ALL: &str = "ALL";

/// Which sectors an emission total covers.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum SectorFilter {
    #[default]
    All,
    /// Primary, secondary and tertiary industry; households excluded.
    Industries,
    Only(Sector),
}

impl SectorFilter {
    fn admits(self, sector: Sector) -> bool {
        match self {
            SectorFilter::All => true,
            SectorFilter::Industries => sector.is_industry(),
            SectorFilter::Only(s) => s == sector,
        }
    }

    fn label(self) -> String {
        match self {
            SectorFilter::All => ALL.to_string(),
            SectorFilter::Industries => "industries".to_string(),
            SectorFilter::Only(s) => s.to_string(),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Scope {
    pub province: Option<String>,
    pub sectors: SectorFilter,
}

impl Scope {
    pub fn national() -> Self {
        Scope::default()
    }

    pub fn province(name: &str) -> Self {
        Scope {
            province: Some(name.to_string()),
            sectors: SectorFilter::All,
        }
    }

    pub fn sector(sector: Sector) -> Self {
        Scope {
            province: None,
            sectors: SectorFilter::Only(sector),
        }
    }

    pub fn with_sectors(mut self, sectors: SectorFilter) -> Self {
        self.sectors = sectors;
        self
    }
}

/// Annual CO₂ emissions, in ten-thousand tonnes.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EmissionSeries {
    pub province: String,
    pub sector: String,
    pub points: Vec<(i32, f64)>,
}

impl EmissionSeries {
    pub fn years(&self) -> Vec<i32> {
        self.points.iter().map(|p| p.0).collect()
    }

    pub fn values(&self) -> Vec<f64> {
        self.points.iter().map(|p| p.1).collect()
    }

    pub fn get(&self, year: i32) -> Option<f64> {
        self.points.iter().find(|p| p.0 == year).map(|p| p.1)
    }

    /// Converts to an annual series; years must be contiguous.
    pub fn to_time_series(&self) -> Result<TimeSeries> {
        let first = self
            .points
            .first()
            .ok_or_else(|| Error::InvalidArgument("empty emission series".into()))?
            .0;
        for (i, (y, _)) in self.points.iter().enumerate() {
            if *y != first + i as i32 {
                return Err(Error::Alignment(format!(
                    "emission series for {}/{} skips year {}",
                    self.province,
                    self.sector,
                    first + i as i32
                )));
            }
        }
        TimeSeries::new(first, self.values())
    }

    pub fn to_table(&self) -> Table {
        let mut t = Table::new(["year", "emissions"]);
        for &(y, v) in &self.points {
            t.push(vec![y.into(), v.into()]);
        }
        t
    }
}

/// Factor actually applied to a cell: households' power and heat are excluded.
pub fn effective_factor(
    factors: &EmissionFactorTable,
    sector: Sector,
    energy: EnergyType,
    year: i32,
) -> Result<f64> {
    if sector == Sector::Residential && matches!(energy, EnergyType::Power | EnergyType::Heat) {
        return Ok(0.0);
    }
    factors.factor(energy, year)
}

fn warn_excluded(panel: &EnergyPanel, scope: &Scope) {
    let excluded = panel
        .records()
        .iter()
        .filter(|r| scope_admits(scope, r.province.as_str(), r.sector))
        .filter(|r| r.sector == Sector::Residential)
        .filter(|r| matches!(r.energy, EnergyType::Power | EnergyType::Heat))
        .filter(|r| r.consumption.is_some_and(|v| v > 0.0))
        .count();
    if excluded > 0 {
        log::warn!(
            "{excluded} residential power/heat records carry a zero effective emission factor"
        );
    }
}

fn scope_admits(scope: &Scope, province: &str, sector: Sector) -> bool {
    scope.province.as_deref().is_none_or(|p| p == province) && scope.sectors.admits(sector)
}

/// Annual emissions over the scope.
///
/// Records are summed per province in key order, then province subtotals
/// are added in province order, so the national total equals
/// [`aggregate_national`] over per-province series bit for bit.
pub fn compute_emissions(
    panel: &EnergyPanel,
    factors: &EmissionFactorTable,
    scope: &Scope,
) -> Result<EmissionSeries> {
    warn_excluded(panel, scope);
    // province -> year -> subtotal
    let mut by_province: BTreeMap<&str, BTreeMap<i32, f64>> = BTreeMap::new();
    for r in panel.records() {
        if !scope_admits(scope, &r.province, r.sector) {
            continue;
        }
        let e = EnergyPanel::value(r)?;
        let f = effective_factor(factors, r.sector, r.energy, r.year)?;
        *by_province
            .entry(&r.province)
            .or_default()
            .entry(r.year)
            .or_insert(0.0) += e * f * CARBON_TO_CO2;
    }
    if by_province.is_empty() {
        return Err(Error::InvalidArgument(format!(
            "no records match province {:?}, sectors {}",
            scope.province,
            scope.sectors.label()
        )));
    }
    let mut totals: BTreeMap<i32, f64> = BTreeMap::new();
    for years in by_province.values() {
        for (&y, &v) in years {
            *totals.entry(y).or_insert(0.0) += v;
        }
    }
    Ok(EmissionSeries {
        province: scope.province.clone().unwrap_or_else(|| ALL.to_string()),
        sector: scope.sectors.label(),
        points: totals.into_iter().collect(),
    })
}

/// Pointwise sum of series that share one year range.
pub fn aggregate_national(series: &[EmissionSeries]) -> Result<EmissionSeries> {
    let first = series
        .first()
        .ok_or_else(|| Error::InvalidArgument("nothing to aggregate".into()))?;
    let years = first.years();
    let mut totals = vec![0.0; years.len()];
    for s in series {
        if s.years() != years {
            return Err(Error::Alignment(format!(
                "series {}/{} covers different years",
                s.province, s.sector
            )));
        }
        for (t, (_, v)) in totals.iter_mut().zip(&s.points) {
            *t += v;
        }
    }
    let sector = if series.iter().all(|s| s.sector == first.sector) {
        first.sector.clone()
    } else {
        ALL.to_string()
    };
    Ok(EmissionSeries {
        province: ALL.to_string(),
        sector,
        points: years.into_iter().zip(totals).collect(),
    })
}

/// Long-format table `province,sector,year,emissions` for several series.
pub fn series_table(series: &[EmissionSeries]) -> Table {
    let mut t = Table::new(["province", "sector", "year", "emissions"]);
    for s in series {
        for &(y, v) in &s.points {
            t.push(vec![
                Cell::from(s.province.as_str()),
                Cell::from(s.sector.as_str()),
                y.into(),
                v.into(),
            ]);
        }
    }
    t
}

/// Factors of one (sector, energy) cell.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CellFactors {
    /// Consumption E_ij.
    pub energy_use: f64,
    /// Emissions C_ij.
    pub emissions: f64,
    /// Share of the energy type within the sector, E_ij / E_i.
    pub share: f64,
    /// Emission coefficient, C_ij / E_ij.
    pub coefficient: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SectorFactors {
    /// E_i
    pub energy_use: f64,
    /// G_i
    pub gdp: f64,
    /// Energy intensity E_i / G_i.
    pub intensity: f64,
    /// GDP share G_i / G.
    pub gdp_share: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ProvinceFactors {
    pub gdp: f64,
    pub population: f64,
    /// Per-capita GDP, G / P.
    pub per_capita_gdp: f64,
    pub sectors: BTreeMap<Sector, SectorFactors>,
    pub cells: BTreeMap<(Sector, EnergyType), CellFactors>,
}

impl ProvinceFactors {
    /// Builds the factors from raw consumption, GDP and population.
    pub fn from_raw(
        consumption: &BTreeMap<(Sector, EnergyType), f64>,
        coefficients: &BTreeMap<(Sector, EnergyType), f64>,
        gdp: [f64; 3],
        population: f64,
    ) -> Result<Self> {
        let total_gdp = gdp[0] + gdp[1] + gdp[2];
        if !(total_gdp > 0.0) || gdp.iter().any(|g| !(*g > 0.0)) {
            return Err(Error::InvalidArgument("GDP must be positive in every industry".into()));
        }
        if !(population > 0.0) {
            return Err(Error::InvalidArgument("population must be positive".into()));
        }
        let mut sector_energy: BTreeMap<Sector, f64> = BTreeMap::new();
        for (&(sector, _), &e) in consumption {
            if !sector.is_industry() {
                return Err(Error::InvalidArgument(format!(
                    "the factor identity covers industries only, got {sector}"
                )));
            }
            *sector_energy.entry(sector).or_insert(0.0) += e;
        }
        let mut sectors = BTreeMap::new();
        for (&sector, &energy_use) in &sector_energy {
            let g = gdp[sector.gdp_index().expect("industry")];
            sectors.insert(
                sector,
                SectorFactors {
                    energy_use,
                    gdp: g,
                    intensity: energy_use / g,
                    gdp_share: g / total_gdp,
                },
            );
        }
        let mut cells = BTreeMap::new();
        for (&key, &e) in consumption {
            let coefficient = *coefficients
                .get(&key)
                .ok_or(Error::MissingFactor(key.1))?;
            let sector_total = sector_energy[&key.0];
            let share = if sector_total > 0.0 {
                e / sector_total
            } else if e > 0.0 {
                return Err(Error::Inconsistent(format!(
                    "{} has zero energy use but a nonzero {} record",
                    key.0, key.1
                )));
            } else {
                0.0
            };
            cells.insert(
                key,
                CellFactors {
                    energy_use: e,
                    emissions: e * coefficient,
                    share,
                    coefficient,
                },
            );
        }
        Ok(ProvinceFactors {
            gdp: total_gdp,
            population,
            per_capita_gdp: total_gdp / population,
            sectors,
            cells,
        })
    }

    /// Σ s·f·e·n·r·p over the cells.
    pub fn reconstruct(&self) -> f64 {
        self.cells
            .iter()
            .map(|(&(sector, _), c)| {
                let s = &self.sectors[&sector];
                c.share
                    * c.coefficient
                    * s.intensity
                    * s.gdp_share
                    * self.per_capita_gdp
                    * self.population
            })
            .sum()
    }

    pub fn emissions(&self) -> f64 {
        self.cells.values().map(|c| c.emissions).sum()
    }
}

/// All identity factors for one year, by province.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct IdentityFactors {
    pub year: i32,
    pub provinces: BTreeMap<String, ProvinceFactors>,
}

impl IdentityFactors {
    /// Σ over provinces of the reconstructed identity.
    pub fn reconstruct(&self) -> f64 {
        self.provinces.values().map(ProvinceFactors::reconstruct).sum()
    }

    /// Σ C_ij over every cell.
    pub fn emissions(&self) -> f64 {
        self.provinces.values().map(ProvinceFactors::emissions).sum()
    }
}

/// Derives s, f, e, n, r and p for every province-year of the panel.
///
/// Only the three industries enter the identity; household records are
/// ignored because they have no GDP component.
pub fn derive_identity_factors(
    panel: &EnergyPanel,
    econ: &EconomicPanel,
    factors: &EmissionFactorTable,
) -> Result<BTreeMap<i32, IdentityFactors>> {
    type Raw = BTreeMap<(Sector, EnergyType), f64>;
    let mut raw: BTreeMap<(i32, &str), (Raw, Raw)> = BTreeMap::new();
    for r in panel.records() {
        if !r.sector.is_industry() {
            continue;
        }
        let e = EnergyPanel::value(r)?;
        let f = effective_factor(factors, r.sector, r.energy, r.year)? * CARBON_TO_CO2;
        let entry = raw.entry((r.year, &r.province)).or_default();
        entry.0.insert((r.sector, r.energy), e);
        entry.1.insert((r.sector, r.energy), f);
    }
    let mut out: BTreeMap<i32, IdentityFactors> = BTreeMap::new();
    for ((year, province), (consumption, coefficients)) in raw {
        let econ_row = econ.get(province, year).ok_or_else(|| {
            Error::Alignment(format!("no economic data for {province} in {year}"))
        })?;
        let pf = ProvinceFactors::from_raw(&consumption, &coefficients, econ_row.gdp, econ_row.population)?;
        out.entry(year)
            .or_insert_with(|| IdentityFactors {
                year,
                provinces: BTreeMap::new(),
            })
            .provinces
            .insert(province.to_string(), pf);
    }
    if out.is_empty() {
        return Err(Error::InvalidArgument("panel has no industry records".into()));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataio::{EconomicRecord, EnergyRecord};

    fn factors() -> EmissionFactorTable {
        EmissionFactorTable::constant([
            (EnergyType::Coal, 0.5),
            (EnergyType::Petroleum, 0.25),
            (EnergyType::Power, 0.2),
            (EnergyType::Heat, 0.6),
        ])
        .unwrap()
    }

    #[test]
    fn single_record_direct_formula() {
        let panel = EnergyPanel::new(vec![EnergyRecord::new(
            "A",
            2020,
            Sector::Secondary,
            EnergyType::Coal,
            100.0,
        )])
        .unwrap();
        let s = compute_emissions(&panel, &factors(), &Scope::national()).unwrap();
        assert_eq!(s.points.len(), 1);
        assert!((s.points[0].1 - 183.333_333_333_333_3).abs() < 1e-9);
    }

    #[test]
    fn zero_consumption_gives_zero() {
        let panel = EnergyPanel::new(vec![
            EnergyRecord::new("A", 2020, Sector::Primary, EnergyType::Coal, 0.0),
            EnergyRecord::new("A", 2020, Sector::Tertiary, EnergyType::Petroleum, 0.0),
        ])
        .unwrap();
        let s = compute_emissions(&panel, &factors(), &Scope::national()).unwrap();
        assert_eq!(s.points, vec![(2020, 0.0)]);
    }

    #[test]
    fn missing_factor_names_energy() {
        let panel = EnergyPanel::new(vec![EnergyRecord::new(
            "A",
            2020,
            Sector::Primary,
            EnergyType::NaturalGas,
            1.0,
        )])
        .unwrap();
        let err = compute_emissions(&panel, &factors(), &Scope::national()).unwrap_err();
        assert!(matches!(err, Error::MissingFactor(EnergyType::NaturalGas)));
        assert!(err.to_string().contains("natural_gas"));
    }

    #[test]
    fn households_power_and_heat_are_excluded() {
        let panel = EnergyPanel::new(vec![
            EnergyRecord::new("A", 2020, Sector::Residential, EnergyType::Power, 50.0),
            EnergyRecord::new("A", 2020, Sector::Residential, EnergyType::Heat, 50.0),
            EnergyRecord::new("A", 2020, Sector::Residential, EnergyType::Coal, 12.0),
            EnergyRecord::new("A", 2020, Sector::Tertiary, EnergyType::Power, 10.0),
        ])
        .unwrap();
        let s = compute_emissions(&panel, &factors(), &Scope::national()).unwrap();
        let expected = 12.0 * 0.5 * CARBON_TO_CO2 + 10.0 * 0.2 * CARBON_TO_CO2;
        assert!((s.points[0].1 - expected).abs() < 1e-12);
    }

    #[test]
    fn mixed_panel_equals_sum_of_single_record_calls() {
        let mut records = Vec::new();
        let mut value = 3.0;
        for sector in Sector::INDUSTRIES {
            for energy in [EnergyType::Coal, EnergyType::Petroleum] {
                records.push(EnergyRecord::new("A", 2020, sector, energy, value));
                value = value * 1.7 + 0.3;
            }
        }
        let table = factors();
        let whole = compute_emissions(&EnergyPanel::new(records.clone()).unwrap(), &table, &Scope::national()).unwrap();
        let oracle: f64 = records
            .iter()
            .map(|r| {
                let single = EnergyPanel::new(vec![r.clone()]).unwrap();
                compute_emissions(&single, &table, &Scope::national()).unwrap().points[0].1
            })
            .sum();
        assert!((whole.points[0].1 - oracle).abs() <= 1e-12 * oracle);
    }

    #[test]
    fn aggregate_two_provinces() {
        let a = EmissionSeries { province: "A".into(), sector: ALL.into(), points: vec![(1, 1.0), (2, 2.0)] };
        let b = EmissionSeries { province: "B".into(), sector: ALL.into(), points: vec![(1, 3.0), (2, 4.0)] };
        let n = aggregate_national(&[a.clone(), b]).unwrap();
        assert_eq!(n.values(), vec![4.0, 6.0]);
        assert_eq!(aggregate_national(std::slice::from_ref(&a)).unwrap().values(), a.values());
    }

    #[test]
    fn aggregate_rejects_misaligned_years() {
        let a = EmissionSeries { province: "A".into(), sector: ALL.into(), points: vec![(1, 1.0), (2, 2.0)] };
        let b = EmissionSeries { province: "B".into(), sector: ALL.into(), points: vec![(2, 3.0), (3, 4.0)] };
        assert!(matches!(aggregate_national(&[a, b]), Err(Error::Alignment(_))));
    }

    fn econ(year: i32) -> EconomicRecord {
        EconomicRecord { province: "A".into(), year, gdp: [10.0, 40.0, 50.0], population: 20.0 }
    }

    #[test]
    fn one_sector_one_energy_identity() {
        let panel = EnergyPanel::new(vec![EnergyRecord::new("A", 2020, Sector::Secondary, EnergyType::Coal, 80.0)]).unwrap();
        let econ = EconomicPanel::new(vec![econ(2020)]).unwrap();
        let f = derive_identity_factors(&panel, &econ, &factors()).unwrap();
        let pf = &f[&2020].provinces["A"];
        let cell = pf.cells[&(Sector::Secondary, EnergyType::Coal)];
        assert_eq!(cell.share, 1.0);
        let direct = compute_emissions(&panel, &factors(), &Scope::national()).unwrap().points[0].1;
        assert!((pf.reconstruct() - direct).abs() <= 1e-12 * direct);
    }

    #[test]
    fn shares_thirty_seventy() {
        let panel = EnergyPanel::new(vec![
            EnergyRecord::new("A", 2020, Sector::Secondary, EnergyType::Coal, 30.0),
            EnergyRecord::new("A", 2020, Sector::Secondary, EnergyType::Petroleum, 70.0),
        ])
        .unwrap();
        let econ = EconomicPanel::new(vec![econ(2020)]).unwrap();
        let f = derive_identity_factors(&panel, &econ, &factors()).unwrap();
        let pf = &f[&2020].provinces["A"];
        assert!((pf.cells[&(Sector::Secondary, EnergyType::Coal)].share - 0.3).abs() < 1e-15);
        assert!((pf.cells[&(Sector::Secondary, EnergyType::Petroleum)].share - 0.7).abs() < 1e-15);
    }

    #[test]
    fn missing_economic_row_is_alignment_error() {
        let panel = EnergyPanel::new(vec![EnergyRecord::new("A", 2021, Sector::Primary, EnergyType::Coal, 1.0)]).unwrap();
        let econ = EconomicPanel::new(vec![econ(2020)]).unwrap();
        assert!(matches!(
            derive_identity_factors(&panel, &econ, &factors()),
            Err(Error::Alignment(_))
        ));
    }
}
