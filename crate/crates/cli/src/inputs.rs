use std::collections::BTreeMap;
use std::path::Path;

use carbon_core::dataio::{
    interpolate_missing, load_economic_panel, load_energy_panel, EconomicPanel, EmissionFactorTable, EnergyPanel,
    RunConfig,
};
use carbon_core::{fixtures, Error};
use sha2::{Digest, Sha256};

use crate::{CliError, Shared};

pub(crate) const ENERGY_FILE: &str = "energy.csv";
pub(crate) const ECONOMIC_FILE: &str = "economic.csv";
pub(crate) const FACTORS_FILE: &str = "emission_factors.csv";

pub(crate) fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

/// Seed of the named sub-stream: the first eight bytes of
/// SHA-256(seed ‖ name), little endian. Adding or removing a series never
/// changes the seed of another.
pub fn series_seed(seed: u64, name: &str) -> u64 {
    let mut h = Sha256::new();
    h.update(seed.to_le_bytes());
    h.update(name.as_bytes());
    let d = h.finalize();
    u64::from_le_bytes(d[..8].try_into().expect("digest has 32 bytes"))
}

fn read(path: &Path) -> Result<Vec<u8>, CliError> {
    std::fs::read(path).map_err(|e| Error::io(path, e).into())
}

/// SHA-256 of the named files in `dir`.
pub(crate) fn digest_dir(dir: &Path, names: &[&str]) -> Result<BTreeMap<String, String>, CliError> {
    names
        .iter()
        .map(|n| Ok((n.to_string(), sha256_hex(&read(&dir.join(n))?))))
        .collect()
}

/// The run configuration with `--seed` applied, and the digest of the file it came from.
pub(crate) fn load_config(shared: &Shared) -> Result<(RunConfig, BTreeMap<String, String>), CliError> {
    let mut digests = BTreeMap::new();
    let mut config = match &shared.config {
        Some(path) => {
            let bytes = read(path)?;
            let text = String::from_utf8(bytes).map_err(|_| Error::Parse {
                path: path.display().to_string(),
                row: 0,
                column: "*".into(),
                message: "not UTF-8".into(),
            })?;
            digests.insert("config".to_string(), sha256_hex(text.as_bytes()));
            RunConfig::parse(&text)?
        }
        None => RunConfig::default(),
    };
    if let Some(seed) = shared.seed {
        config.seed = seed;
    }
    Ok((config, digests))
}

/// Everything a data-driven command reads.
pub(crate) struct Inputs {
    pub config: RunConfig,
    pub energy: EnergyPanel,
    pub economic: EconomicPanel,
    pub factors: EmissionFactorTable,
    /// SHA-256 of every input file, by name.
    pub digests: BTreeMap<String, String>,
}

impl Inputs {
    pub fn load(shared: &Shared, config: RunConfig, mut digests: BTreeMap<String, String>) -> Result<Self, CliError> {
        let dir = &shared.data_dir;
        let energy_path = dir.join(ENERGY_FILE);
        let raw = load_energy_panel(&energy_path)?;
        let energy = interpolate_missing(&raw, config.missing_policy)?;
        let economic = load_economic_panel(dir.join(ECONOMIC_FILE))?;
        let factors_path = dir.join(FACTORS_FILE);
        let factors = if factors_path.exists() {
            digests.insert(FACTORS_FILE.into(), sha256_hex(&read(&factors_path)?));
            EmissionFactorTable::load(&factors_path)?
        } else {
            log::info!("no {FACTORS_FILE} in {}; using the shipped factors", dir.display());
            fixtures::default_factor_table()?
        };
        digests.extend(digest_dir(dir, &[ENERGY_FILE, ECONOMIC_FILE])?);
        Ok(Inputs { config, energy, economic, factors, digests })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sub_streams_depend_on_seed_and_name() {
        let a = series_seed(42, "national");
        assert_eq!(a, series_seed(42, "national"));
        assert_ne!(a, series_seed(43, "national"));
        assert_ne!(a, series_seed(42, "Beijing"));
    }

    #[test]
    fn digest_is_lowercase_hex() {
        assert_eq!(
            sha256_hex(b"abc"),
            "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad"
        );
    }
}
