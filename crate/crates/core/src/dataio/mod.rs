//! Panel ingestion, run configuration and result-table export.
//!
//! Energy consumption is carried in kilograms of standard coal, GDP in
//! hundred-million yuan and population in ten-thousand persons. All
//! quantities are `f64`; years are `i32`.

mod config;
mod factors;
mod panel;
mod table;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::Error;

pub use config::{BpConfig, MissingPolicy, RunConfig};
pub use factors::{EmissionFactorTable, CARBON_TO_CO2, PROJECTION_WINDOW};
pub use panel::{
    interpolate_missing, load_economic_panel, load_energy_panel, write_economic_panel,
    write_energy_panel, EconomicPanel, EconomicRecord, EnergyPanel, EnergyRecord,
};
pub use table::{export_table, format_number, render_table, Cell, Format, Table};

/// Consuming sector. The three industries carry a GDP component; the
/// residential sector does not.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Sector {
    Primary,
    Secondary,
    Tertiary,
    Residential,
}

impl Sector {
    pub const ALL: [Sector; 4] = [
        Sector::Primary,
        Sector::Secondary,
        Sector::Tertiary,
        Sector::Residential,
    ];

    pub const INDUSTRIES: [Sector; 3] = [Sector::Primary, Sector::Secondary, Sector::Tertiary];

    pub fn as_str(self) -> &'static str {
        match self {
            Sector::Primary => "primary",
            Sector::Secondary => "secondary",
            Sector::Tertiary => "tertiary",
            Sector::Residential => "residential",
        }
    }

    /// Index into the GDP triple, or `None` for households.
    pub fn gdp_index(self) -> Option<usize> {
        match self {
            Sector::Primary => Some(0),
            Sector::Secondary => Some(1),
            Sector::Tertiary => Some(2),
            Sector::Residential => None,
        }
    }

    pub fn is_industry(self) -> bool {
        self.gdp_index().is_some()
    }
}

impl fmt::Display for Sector {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Sector {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim() {
            "primary" | "primary_industry" => Ok(Sector::Primary),
            "secondary" | "secondary_industry" => Ok(Sector::Secondary),
            "tertiary" | "tertiary_industry" => Ok(Sector::Tertiary),
            "residential" => Ok(Sector::Residential),
            other => Err(Error::InvalidArgument(format!("unknown sector `{other}`"))),
        }
    }
}

/// Energy carrier.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EnergyType {
    Coal,
    Petroleum,
    NaturalGas,
    Power,
    Heat,
    Other,
}

impl EnergyType {
    pub const ALL: [EnergyType; 6] = [
        EnergyType::Coal,
        EnergyType::Petroleum,
        EnergyType::NaturalGas,
        EnergyType::Power,
        EnergyType::Heat,
        EnergyType::Other,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            EnergyType::Coal => "coal",
            EnergyType::Petroleum => "petroleum",
            EnergyType::NaturalGas => "natural_gas",
            EnergyType::Power => "power",
            EnergyType::Heat => "heat",
            EnergyType::Other => "other",
        }
    }
}

impl fmt::Display for EnergyType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for EnergyType {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim() {
            "coal" => Ok(EnergyType::Coal),
            "petroleum" => Ok(EnergyType::Petroleum),
            "natural_gas" => Ok(EnergyType::NaturalGas),
            "power" => Ok(EnergyType::Power),
            "heat" => Ok(EnergyType::Heat),
            "other" => Ok(EnergyType::Other),
            other => Err(Error::InvalidArgument(format!(
                "unknown energy type `{other}`"
            ))),
        }
    }
}
