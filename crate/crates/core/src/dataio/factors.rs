use std::collections::BTreeMap;
use std::path::Path;

use super::EnergyType;
use crate::error::{Error, Result};

/// Molar-mass ratio converting carbon to carbon dioxide.
pub const CARBON_TO_CO2: f64 = 44.0 / 12.0;

/// Number of most recent observed years averaged into the factor used for
/// years after the observed range.
pub const PROJECTION_WINDOW: usize = 10;

/// Carbon emission coefficient per energy type.
///
/// A table is either constant, or indexed by year; a yearly table answers
/// years past its last observed year with the mean of its ten most recent
/// years, computed once at construction.
#[derive(Debug, Clone, PartialEq)]
pub struct EmissionFactorTable {
    yearly: BTreeMap<i32, BTreeMap<EnergyType, f64>>,
    projected: BTreeMap<EnergyType, f64>,
}

impl EmissionFactorTable {
    pub fn constant(factors: impl IntoIterator<Item = (EnergyType, f64)>) -> Result<Self> {
        let mut projected = BTreeMap::new();
        for (energy, f) in factors {
            check_factor(energy, f)?;
            if projected.insert(energy, f).is_some() {
                return Err(Error::DuplicateKey {
                    key: energy.to_string(),
                    location: "factor table".into(),
                });
            }
        }
        Ok(EmissionFactorTable {
            yearly: BTreeMap::new(),
            projected,
        })
    }

    pub fn from_yearly(rows: impl IntoIterator<Item = (i32, EnergyType, f64)>) -> Result<Self> {
        let mut yearly: BTreeMap<i32, BTreeMap<EnergyType, f64>> = BTreeMap::new();
        for (year, energy, f) in rows {
            check_factor(energy, f)?;
            if yearly.entry(year).or_default().insert(energy, f).is_some() {
                return Err(Error::DuplicateKey {
                    key: format!("({year}, {energy})"),
                    location: "factor table".into(),
                });
            }
        }
        let mut projected = BTreeMap::new();
        for energy in EnergyType::ALL {
            let recent: Vec<f64> = yearly
                .values()
                .rev()
                .filter_map(|m| m.get(&energy).copied())
                .take(PROJECTION_WINDOW)
                .collect();
            if !recent.is_empty() {
                projected.insert(energy, recent.iter().sum::<f64>() / recent.len() as f64);
            }
        }
        Ok(EmissionFactorTable { yearly, projected })
    }

    pub fn is_constant(&self) -> bool {
        self.yearly.is_empty()
    }

    /// Factor applied in `year`. Years before the first tabulated year are an error.
    pub fn factor(&self, energy: EnergyType, year: i32) -> Result<f64> {
        if let Some(row) = self.yearly.get(&year) {
            return row.get(&energy).copied().ok_or(Error::MissingFactor(energy));
        }
        if let Some(&first) = self.yearly.keys().next() {
            if year < first {
                return Err(Error::InvalidArgument(format!(
                    "no emission factors for {year}; table starts in {first}"
                )));
            }
        }
        self.projected
            .get(&energy)
            .copied()
            .ok_or(Error::MissingFactor(energy))
    }

    /// Factor used for years past the observed range.
    pub fn projected(&self, energy: EnergyType) -> Result<f64> {
        self.projected
            .get(&energy)
            .copied()
            .ok_or(Error::MissingFactor(energy))
    }

    /// Reads `energy,factor` or `year,energy,factor`.
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let name = path.display().to_string();
        let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
        let mut reader = csv::ReaderBuilder::new()
            .comment(Some(b'#'))
            .trim(csv::Trim::All)
            .from_reader(file);
        let header: Vec<String> = reader
            .headers()
            .map_err(|e| parse_err(&name, 1, "header", e))?
            .iter()
            .map(str::to_string)
            .collect();
        let yearly = match header.iter().map(String::as_str).collect::<Vec<_>>().as_slice() {
            ["energy", "factor"] => false,
            ["year", "energy", "factor"] => true,
            _ => {
                return Err(parse_err(
                    &name,
                    1,
                    "header",
                    format!("expected `energy,factor` or `year,energy,factor`, found `{}`", header.join(",")),
                ))
            }
        };
        let mut rows = Vec::new();
        for (i, rec) in reader.records().enumerate() {
            let rec = rec.map_err(|e| parse_err(&name, i + 2, "*", e))?;
            let line = rec.position().map(|p| p.line() as usize).unwrap_or(i + 2);
            let off = usize::from(yearly);
            let year = if yearly {
                rec[0]
                    .parse::<i32>()
                    .map_err(|e| parse_err(&name, line, "year", e))?
            } else {
                0
            };
            let energy: EnergyType = rec[off]
                .parse()
                .map_err(|e: Error| parse_err(&name, line, "energy", e))?;
            let factor: f64 = rec[off + 1]
                .parse()
                .map_err(|e| parse_err(&name, line, "factor", e))?;
            rows.push((year, energy, factor));
        }
        if yearly {
            Self::from_yearly(rows)
        } else {
            Self::constant(rows.into_iter().map(|(_, e, f)| (e, f)))
        }
    }

    /// Renders the table as `energy,factor` (or the yearly layout).
    pub fn to_csv(&self) -> String {
        let mut out = String::new();
        if self.is_constant() {
            out.push_str("energy,factor\n");
            for (e, f) in &self.projected {
                out.push_str(&format!("{e},{}\n", super::format_number(*f)));
            }
        } else {
            out.push_str("year,energy,factor\n");
            for (y, row) in &self.yearly {
                for (e, f) in row {
                    out.push_str(&format!("{y},{e},{}\n", super::format_number(*f)));
                }
            }
        }
        out
    }
}

fn check_factor(energy: EnergyType, f: f64) -> Result<()> {
    if f.is_finite() && f >= 0.0 {
        Ok(())
    } else {
        Err(Error::validation(
            format!("factor for {energy}"),
            format!("must be finite and non-negative, got {f}"),
        ))
    }
}

fn parse_err(path: &str, row: usize, column: &str, e: impl std::fmt::Display) -> Error {
    Error::Parse {
        path: path.to_string(),
        row,
        column: column.to_string(),
        message: e.to_string(),
    }
}
