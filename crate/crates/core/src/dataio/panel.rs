use std::collections::{BTreeMap, BTreeSet};
use std::fs::File;
use std::io::Write;
use std::path::Path;

use super::{format_number, EnergyType, MissingPolicy, Sector};
use crate::error::{Error, Result};

const ENERGY_HEADER: [&str; 5] = ["province", "year", "sector", "energy", "consumption"];
const ECONOMIC_HEADER: [&str; 6] = [
    "province",
    "year",
    "gdp_primary",
    "gdp_secondary",
    "gdp_tertiary",
    "population",
];

/// One energy consumption observation. `consumption` is `None` where the
/// source left the cell empty.
#[derive(Debug, Clone, PartialEq)]
pub struct EnergyRecord {
    pub province: String,
    pub year: i32,
    pub sector: Sector,
    pub energy: EnergyType,
    pub consumption: Option<f64>,
}

impl EnergyRecord {
    pub fn new(province: &str, year: i32, sector: Sector, energy: EnergyType, consumption: f64) -> Self {
        EnergyRecord {
            province: province.to_string(),
            year,
            sector,
            energy,
            consumption: Some(consumption),
        }
    }

    fn key(&self) -> (&str, i32, Sector, EnergyType) {
        (&self.province, self.year, self.sector, self.energy)
    }

    fn describe(&self) -> String {
        format!(
            "({}, {}, {}, {})",
            self.province, self.year, self.sector, self.energy
        )
    }
}

/// Province × year × sector × energy consumption panel, kept sorted by key.
#[derive(Debug, Clone, PartialEq)]
pub struct EnergyPanel {
    records: Vec<EnergyRecord>,
}

impl EnergyPanel {
    /// Validates and sorts the records.
    pub fn new(mut records: Vec<EnergyRecord>) -> Result<Self> {
        for (i, r) in records.iter().enumerate() {
            check_consumption(r.consumption, &format!("record {}", i + 1))?;
        }
        records.sort_by(|a, b| a.key().cmp(&b.key()));
        for pair in records.windows(2) {
            if pair[0].key() == pair[1].key() {
                return Err(Error::DuplicateKey {
                    key: pair[1].describe(),
                    location: "panel".into(),
                });
            }
        }
        let panel = EnergyPanel { records };
        panel.check_contiguous_years()?;
        Ok(panel)
    }

    fn check_contiguous_years(&self) -> Result<()> {
        let mut years: BTreeMap<&str, BTreeSet<i32>> = BTreeMap::new();
        for r in &self.records {
            years.entry(&r.province).or_default().insert(r.year);
        }
        for (province, ys) in years {
            let (first, last) = (*ys.first().unwrap(), *ys.last().unwrap());
            if (last - first + 1) as usize != ys.len() {
                let missing: Vec<String> = (first..=last)
                    .filter(|y| !ys.contains(y))
                    .map(|y| y.to_string())
                    .collect();
                return Err(Error::validation(
                    format!("province {province}"),
                    format!("years are not contiguous; missing {}", missing.join(", ")),
                ));
            }
        }
        Ok(())
    }

    pub fn records(&self) -> &[EnergyRecord] {
        &self.records
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn provinces(&self) -> Vec<String> {
        let set: BTreeSet<&str> = self.records.iter().map(|r| r.province.as_str()).collect();
        set.into_iter().map(str::to_string).collect()
    }

    pub fn years(&self) -> Vec<i32> {
        let set: BTreeSet<i32> = self.records.iter().map(|r| r.year).collect();
        set.into_iter().collect()
    }

    /// Locations of empty consumption cells.
    pub fn gaps(&self) -> Vec<String> {
        self.records
            .iter()
            .filter(|r| r.consumption.is_none())
            .map(EnergyRecord::describe)
            .collect()
    }

    /// Errors with the gap list unless every cell holds a value.
    pub fn require_complete(&self) -> Result<()> {
        let gaps = self.gaps();
        if gaps.is_empty() {
            Ok(())
        } else {
            Err(Error::MissingData { gaps })
        }
    }

    /// Consumption of a complete record; gaps are an error.
    pub(crate) fn value(r: &EnergyRecord) -> Result<f64> {
        r.consumption.ok_or_else(|| Error::MissingData {
            gaps: vec![r.describe()],
        })
    }

    /// Sums all provinces into a single pseudo-province per year.
    /// Every province must cover the same years.
    pub fn pooled(&self, name: &str) -> Result<EnergyPanel> {
        self.require_complete()?;
        let mut spans: BTreeMap<&str, (i32, i32)> = BTreeMap::new();
        for r in &self.records {
            let span = spans.entry(&r.province).or_insert((r.year, r.year));
            span.0 = span.0.min(r.year);
            span.1 = span.1.max(r.year);
        }
        let distinct: BTreeSet<(i32, i32)> = spans.values().copied().collect();
        if distinct.len() > 1 {
            return Err(Error::Alignment(
                "provinces cover different year ranges; cannot pool".into(),
            ));
        }
        let mut sums: BTreeMap<(i32, Sector, EnergyType), f64> = BTreeMap::new();
        for r in &self.records {
            *sums.entry((r.year, r.sector, r.energy)).or_insert(0.0) += Self::value(r)?;
        }
        let records = sums
            .into_iter()
            .map(|((year, sector, energy), v)| EnergyRecord::new(name, year, sector, energy, v))
            .collect();
        EnergyPanel::new(records)
    }
}

fn check_consumption(value: Option<f64>, location: &str) -> Result<()> {
    match value {
        Some(v) if !v.is_finite() => Err(Error::validation(location, "consumption is not finite")),
        Some(v) if v < 0.0 => Err(Error::validation(
            location,
            format!("negative consumption {v}"),
        )),
        _ => Ok(()),
    }
}

fn parse_field<T: std::str::FromStr>(
    path: &str,
    row: usize,
    column: &str,
    raw: &str,
) -> Result<T>
where
    T::Err: std::fmt::Display,
{
    raw.trim().parse::<T>().map_err(|e| Error::Parse {
        path: path.to_string(),
        row,
        column: column.to_string(),
        message: format!("cannot parse `{raw}`: {e}"),
    })
}

fn open_csv(path: &Path, expected: &[&str]) -> Result<csv::Reader<File>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut reader = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .from_reader(file);
    let headers = reader.headers().map_err(|e| Error::Parse {
        path: path.display().to_string(),
        row: 1,
        column: "header".into(),
        message: e.to_string(),
    })?;
    let got: Vec<&str> = headers.iter().collect();
    if got != expected {
        return Err(Error::Parse {
            path: path.display().to_string(),
            row: 1,
            column: "header".into(),
            message: format!("expected `{}`, found `{}`", expected.join(","), got.join(",")),
        });
    }
    Ok(reader)
}

fn row_number(record: &csv::StringRecord, fallback: usize) -> usize {
    record
        .position()
        .map(|p| p.line() as usize)
        .unwrap_or(fallback)
}

/// Reads an energy panel CSV (`province,year,sector,energy,consumption`).
/// An empty consumption cell is kept as a gap.
pub fn load_energy_panel(path: impl AsRef<Path>) -> Result<EnergyPanel> {
    let path = path.as_ref();
    let name = path.display().to_string();
    let mut reader = open_csv(path, &ENERGY_HEADER)?;
    let mut records = Vec::new();
    let mut seen: BTreeMap<(String, i32, Sector, EnergyType), usize> = BTreeMap::new();
    for (i, row) in reader.records().enumerate() {
        let row = row.map_err(|e| Error::Parse {
            path: name.clone(),
            row: i + 2,
            column: "*".into(),
            message: e.to_string(),
        })?;
        let line = row_number(&row, i + 2);
        let province = row[0].to_string();
        if province.is_empty() {
            return Err(Error::Parse {
                path: name,
                row: line,
                column: "province".into(),
                message: "empty province".into(),
            });
        }
        let year: i32 = parse_field(&name, line, "year", &row[1])?;
        let sector: Sector = parse_field(&name, line, "sector", &row[2])?;
        let energy: EnergyType = parse_field(&name, line, "energy", &row[3])?;
        let consumption = if row[4].is_empty() {
            None
        } else {
            Some(parse_field::<f64>(&name, line, "consumption", &row[4])?)
        };
        check_consumption(consumption, &format!("{name}: row {line}"))?;
        let key = (province.clone(), year, sector, energy);
        if let Some(first) = seen.insert(key, line) {
            return Err(Error::DuplicateKey {
                key: format!("({province}, {year}, {sector}, {energy})"),
                location: format!("{name}: rows {first} and {line}"),
            });
        }
        records.push(EnergyRecord {
            province,
            year,
            sector,
            energy,
            consumption,
        });
    }
    EnergyPanel::new(records)
}

/// Writes the panel in the same schema `load_energy_panel` reads.
pub fn write_energy_panel(panel: &EnergyPanel, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut out = String::from("province,year,sector,energy,consumption\n");
    for r in panel.records() {
        let value = r.consumption.map(format_number).unwrap_or_default();
        out.push_str(&format!(
            "{},{},{},{},{}\n",
            r.province, r.year, r.sector, r.energy, value
        ));
    }
    let mut file = File::create(path).map_err(|e| Error::io(path, e))?;
    file.write_all(out.as_bytes()).map_err(|e| Error::io(path, e))
}

/// Fills empty consumption cells.
///
/// Each (province, sector, energy) series is treated along years. Under
/// `Linear`, interior gaps are interpolated between the neighbouring
/// observations and boundary gaps take the nearest observed value.
pub fn interpolate_missing(panel: &EnergyPanel, policy: MissingPolicy) -> Result<EnergyPanel> {
    let gaps = panel.gaps();
    if gaps.is_empty() {
        return Ok(panel.clone());
    }
    let mut records = panel.records.clone();
    match policy {
        MissingPolicy::Fail => return Err(Error::MissingData { gaps }),
        MissingPolicy::Zero => {
            for r in &mut records {
                r.consumption.get_or_insert(0.0);
            }
        }
        MissingPolicy::Linear => {
            let mut series: BTreeMap<(String, Sector, EnergyType), Vec<usize>> = BTreeMap::new();
            for (i, r) in records.iter().enumerate() {
                series
                    .entry((r.province.clone(), r.sector, r.energy))
                    .or_default()
                    .push(i);
            }
            for ((province, sector, energy), idx) in series {
                // indices are already in year order because records are sorted
                let observed: Vec<(i32, f64)> = idx
                    .iter()
                    .filter_map(|&i| records[i].consumption.map(|v| (records[i].year, v)))
                    .collect();
                if observed.is_empty() {
                    return Err(Error::MissingData {
                        gaps: vec![format!(
                            "({province}, *, {sector}, {energy}): no observed value to interpolate from"
                        )],
                    });
                }
                for &i in &idx {
                    if records[i].consumption.is_some() {
                        continue;
                    }
                    let year = records[i].year;
                    let after = observed.partition_point(|&(y, _)| y < year);
                    let value = if after == 0 {
                        observed[0].1
                    } else if after == observed.len() {
                        observed[after - 1].1
                    } else {
                        let (y0, v0) = observed[after - 1];
                        let (y1, v1) = observed[after];
                        let w = f64::from(year - y0) / f64::from(y1 - y0);
                        v0 + w * (v1 - v0)
                    };
                    records[i].consumption = Some(value);
                }
            }
        }
    }
    Ok(EnergyPanel { records })
}

/// GDP by industry and population for one province-year.
#[derive(Debug, Clone, PartialEq)]
pub struct EconomicRecord {
    pub province: String,
    pub year: i32,
    /// Primary, secondary and tertiary value added.
    pub gdp: [f64; 3],
    pub population: f64,
}

impl EconomicRecord {
    /// Total GDP, always recomputed from the three components.
    pub fn total_gdp(&self) -> f64 {
        self.gdp[0] + self.gdp[1] + self.gdp[2]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EconomicPanel {
    records: Vec<EconomicRecord>,
}

impl EconomicPanel {
    pub fn new(mut records: Vec<EconomicRecord>) -> Result<Self> {
        for r in &records {
            let location = format!("({}, {})", r.province, r.year);
            if r.gdp.iter().any(|g| !(g.is_finite() && *g > 0.0)) {
                return Err(Error::validation(location, "GDP components must be positive"));
            }
            if !(r.population.is_finite() && r.population > 0.0) {
                return Err(Error::validation(location, "population must be positive"));
            }
        }
        records.sort_by(|a, b| (&a.province, a.year).cmp(&(&b.province, b.year)));
        for pair in records.windows(2) {
            if (&pair[0].province, pair[0].year) == (&pair[1].province, pair[1].year) {
                return Err(Error::DuplicateKey {
                    key: format!("({}, {})", pair[1].province, pair[1].year),
                    location: "economic panel".into(),
                });
            }
        }
        Ok(EconomicPanel { records })
    }

    pub fn records(&self) -> &[EconomicRecord] {
        &self.records
    }

    pub fn get(&self, province: &str, year: i32) -> Option<&EconomicRecord> {
        self.records
            .binary_search_by(|r| (r.province.as_str(), r.year).cmp(&(province, year)))
            .ok()
            .map(|i| &self.records[i])
    }

    pub fn provinces(&self) -> Vec<String> {
        let set: BTreeSet<&str> = self.records.iter().map(|r| r.province.as_str()).collect();
        set.into_iter().map(str::to_string).collect()
    }

    /// Sums GDP components and population across provinces, year by year.
    pub fn pooled(&self, name: &str) -> Result<EconomicPanel> {
        let provinces = self.provinces();
        let mut sums: BTreeMap<i32, ([f64; 3], f64, usize)> = BTreeMap::new();
        for r in &self.records {
            let entry = sums.entry(r.year).or_insert(([0.0; 3], 0.0, 0));
            for k in 0..3 {
                entry.0[k] += r.gdp[k];
            }
            entry.1 += r.population;
            entry.2 += 1;
        }
        if let Some((year, _)) = sums.iter().find(|(_, v)| v.2 != provinces.len()) {
            return Err(Error::Alignment(format!(
                "year {year} is not covered by every province; cannot pool"
            )));
        }
        EconomicPanel::new(
            sums.into_iter()
                .map(|(year, (gdp, population, _))| EconomicRecord {
                    province: name.to_string(),
                    year,
                    gdp,
                    population,
                })
                .collect(),
        )
    }
}

/// Reads `province,year,gdp_primary,gdp_secondary,gdp_tertiary,population`.
pub fn load_economic_panel(path: impl AsRef<Path>) -> Result<EconomicPanel> {
    let path = path.as_ref();
    let name = path.display().to_string();
    let mut reader = open_csv(path, &ECONOMIC_HEADER)?;
    let mut records = Vec::new();
    for (i, row) in reader.records().enumerate() {
        let row = row.map_err(|e| Error::Parse {
            path: name.clone(),
            row: i + 2,
            column: "*".into(),
            message: e.to_string(),
        })?;
        let line = row_number(&row, i + 2);
        let mut gdp = [0.0; 3];
        for (k, column) in ECONOMIC_HEADER[2..5].iter().enumerate() {
            gdp[k] = parse_field(&name, line, column, &row[2 + k])?;
            if !(gdp[k] > 0.0) {
                return Err(Error::validation(
                    format!("{name}: row {line}"),
                    format!("{column} must be positive"),
                ));
            }
        }
        let population: f64 = parse_field(&name, line, "population", &row[5])?;
        if !(population > 0.0) {
            return Err(Error::validation(
                format!("{name}: row {line}"),
                "population must be positive",
            ));
        }
        records.push(EconomicRecord {
            province: row[0].to_string(),
            year: parse_field(&name, line, "year", &row[1])?,
            gdp,
            population,
        });
    }
    EconomicPanel::new(records)
}

pub fn write_economic_panel(panel: &EconomicPanel, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut out = ECONOMIC_HEADER.join(",");
    out.push('\n');
    for r in panel.records() {
        out.push_str(&format!(
            "{},{},{},{},{},{}\n",
            r.province,
            r.year,
            format_number(r.gdp[0]),
            format_number(r.gdp[1]),
            format_number(r.gdp[2]),
            format_number(r.population)
        ));
    }
    std::fs::write(path, out).map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn write(dir: &tempfile::TempDir, name: &str, body: &str) -> std::path::PathBuf {
        let p = dir.path().join(name);
        std::fs::write(&p, body).unwrap();
        p
    }

    const FOUR_ROWS: &str = "province,year,sector,energy,consumption\n\
        Hubei,2020,primary,coal,10\n\
        Hubei,2020,secondary,coal,200\n\
        Hubei,2021,primary,coal,11\n\
        Hubei,2021,secondary,coal,210\n";

    #[test]
    fn loads_well_formed_file() {
        let dir = tempfile::tempdir().unwrap();
        let panel = load_energy_panel(write(&dir, "e.csv", FOUR_ROWS)).unwrap();
        assert_eq!(panel.len(), 4);
        assert_eq!(panel.years(), vec![2020, 2021]);
    }

    #[test]
    fn negative_consumption_names_row() {
        let dir = tempfile::tempdir().unwrap();
        let body = FOUR_ROWS.replace("Hubei,2021,primary,coal,11", "Hubei,2021,primary,coal,-1");
        let err = load_energy_panel(write(&dir, "e.csv", &body)).unwrap_err();
        match err {
            Error::Validation { location, .. } => assert!(location.ends_with("row 4"), "{location}"),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn duplicate_key_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let body = format!("{FOUR_ROWS}Hubei,2020,primary,coal,3\n");
        let err = load_energy_panel(write(&dir, "e.csv", &body)).unwrap_err();
        assert!(matches!(err, Error::DuplicateKey { .. }), "{err}");
    }

    #[test]
    fn header_mismatch_is_parse_error() {
        let dir = tempfile::tempdir().unwrap();
        let body = FOUR_ROWS.replace("consumption", "value");
        let err = load_energy_panel(write(&dir, "e.csv", &body)).unwrap_err();
        assert!(matches!(err, Error::Parse { row: 1, .. }), "{err}");
    }

    #[test]
    fn bad_cell_names_row_and_column() {
        let dir = tempfile::tempdir().unwrap();
        let body = FOUR_ROWS.replace("Hubei,2021,secondary,coal", "Hubei,2021,mining,coal");
        match load_energy_panel(write(&dir, "e.csv", &body)).unwrap_err() {
            Error::Parse { row, column, .. } => {
                assert_eq!(row, 5);
                assert_eq!(column, "sector");
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn empty_cell_is_flagged_not_dropped() {
        let dir = tempfile::tempdir().unwrap();
        let body = FOUR_ROWS.replace("Hubei,2021,primary,coal,11", "Hubei,2021,primary,coal,");
        let panel = load_energy_panel(write(&dir, "e.csv", &body)).unwrap();
        assert_eq!(panel.len(), 4);
        assert_eq!(panel.gaps().len(), 1);
        assert!(panel.require_complete().is_err());
    }

    #[test]
    fn non_contiguous_years_rejected() {
        let records = vec![
            EnergyRecord::new("A", 2000, Sector::Primary, EnergyType::Coal, 1.0),
            EnergyRecord::new("A", 2002, Sector::Primary, EnergyType::Coal, 1.0),
        ];
        assert!(matches!(
            EnergyPanel::new(records),
            Err(Error::Validation { .. })
        ));
    }

    fn gappy(values: &[Option<f64>]) -> EnergyPanel {
        let records = values
            .iter()
            .enumerate()
            .map(|(i, v)| EnergyRecord {
                province: "A".into(),
                year: 2000 + i as i32,
                sector: Sector::Secondary,
                energy: EnergyType::Coal,
                consumption: *v,
            })
            .collect();
        EnergyPanel::new(records).unwrap()
    }

    fn values(panel: &EnergyPanel) -> Vec<f64> {
        panel.records().iter().map(|r| r.consumption.unwrap()).collect()
    }

    #[test]
    fn linear_fills_midpoint() {
        let filled = interpolate_missing(&gappy(&[Some(2.0), None, Some(4.0)]), MissingPolicy::Linear).unwrap();
        assert_eq!(values(&filled), vec![2.0, 3.0, 4.0]);
    }

    #[test]
    fn zero_policy_fills_zero() {
        let filled = interpolate_missing(&gappy(&[Some(2.0), None, Some(4.0)]), MissingPolicy::Zero).unwrap();
        assert_eq!(values(&filled), vec![2.0, 0.0, 4.0]);
    }

    #[test]
    fn boundary_gaps_hold_nearest() {
        let p = gappy(&[None, Some(5.0), None, None, Some(8.0), None]);
        let filled = interpolate_missing(&p, MissingPolicy::Linear).unwrap();
        assert_eq!(values(&filled), vec![5.0, 5.0, 6.0, 7.0, 8.0, 8.0]);
    }

    #[test]
    fn fail_policy_lists_gaps() {
        let err = interpolate_missing(&gappy(&[Some(2.0), None, Some(4.0)]), MissingPolicy::Fail).unwrap_err();
        match err {
            Error::MissingData { gaps } => assert_eq!(gaps, vec!["(A, 2001, secondary, coal)"]),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn gapless_panel_unchanged_under_every_policy() {
        let p = gappy(&[Some(1.0), Some(2.5), Some(4.0)]);
        for policy in [MissingPolicy::Fail, MissingPolicy::Linear, MissingPolicy::Zero] {
            assert_eq!(interpolate_missing(&p, policy).unwrap(), p);
        }
    }

    #[test]
    fn economic_panel_rejects_nonpositive_gdp() {
        let r = EconomicRecord {
            province: "A".into(),
            year: 2000,
            gdp: [1.0, 0.0, 1.0],
            population: 10.0,
        };
        assert!(EconomicPanel::new(vec![r]).is_err());
    }

    #[test]
    fn economic_roundtrip() {
        let dir = tempfile::tempdir().unwrap();
        let p = EconomicPanel::new(vec![EconomicRecord {
            province: "A".into(),
            year: 2000,
            gdp: [1.5, 20.25, 30.0],
            population: 1234.5,
        }])
        .unwrap();
        let path = dir.path().join("econ.csv");
        write_economic_panel(&p, &path).unwrap();
        assert_eq!(load_economic_panel(&path).unwrap(), p);
        assert_eq!(p.records()[0].total_gdp(), 51.75);
    }
}
