//! Seeded generator for a province panel with plausible growth dynamics.
//!
//! Every series is a smooth trend times a random-walk disturbance, so
//! levels are strictly positive and become stationary after differencing.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, Uniform};

use crate::dataio::{
    EconomicPanel, EconomicRecord, EmissionFactorTable, EnergyPanel, EnergyRecord, EnergyType, Sector,
};
use crate::error::{Error, Result};
use crate::fixtures;

/// Shape of a generated panel.
#[derive(Debug, Clone, PartialEq)]
pub struct PanelSpec {
    pub provinces: Vec<String>,
    pub first_year: i32,
    pub last_year: i32,
    pub seed: u64,
}

impl PanelSpec {
    /// The 30 shipped provinces over 2000–2021.
    pub fn standard(seed: u64) -> Result<Self> {
        Ok(PanelSpec {
            provinces: fixtures::regions()?.into_keys().collect(),
            first_year: 2000,
            last_year: 2021,
            seed,
        })
    }
}

/// Base energy mix by sector, in `EnergyType::ALL` order.
fn base_mix(sector: Sector) -> [f64; 6] {
    match sector {
        Sector::Primary => [0.45, 0.35, 0.02, 0.15, 0.0, 0.03],
        Sector::Secondary => [0.62, 0.12, 0.06, 0.12, 0.05, 0.03],
        Sector::Tertiary => [0.20, 0.40, 0.08, 0.25, 0.04, 0.03],
        Sector::Residential => [0.25, 0.15, 0.15, 0.30, 0.12, 0.03],
    }
}

/// Annual log drift of each carrier's share.
const MIX_DRIFT: [f64; 6] = [-0.03, 0.0, 0.05, 0.03, 0.01, 0.0];

struct Walk {
    level: f64,
    noise: Normal<f64>,
}

impl Walk {
    fn new(sd: f64) -> Self {
        Walk { level: 0.0, noise: Normal::new(0.0, sd).expect("positive sd") }
    }

    fn step(&mut self, rng: &mut ChaCha8Rng) -> f64 {
        self.level += self.noise.sample(rng);
        self.level
    }
}

/// Generates matching energy and economic panels.
pub fn generate(spec: &PanelSpec) -> Result<(EnergyPanel, EconomicPanel)> {
    if spec.last_year < spec.first_year || spec.provinces.is_empty() {
        return Err(Error::InvalidArgument("empty panel specification".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let u = |lo: f64, hi: f64| Uniform::new(lo, hi).expect("valid range");
    let mut energy = Vec::new();
    let mut economic = Vec::new();
    for province in &spec.provinces {
        let pop0 = u(800.0, 10_000.0).sample(&mut rng);
        let pop_growth = u(-0.002, 0.012).sample(&mut rng);
        let gdp0 = u(300.0, 9_000.0).sample(&mut rng);
        let gdp_growth = u(0.07, 0.13).sample(&mut rng);
        let shares0 = [u(0.05, 0.25).sample(&mut rng), u(0.40, 0.55).sample(&mut rng), u(0.30, 0.45).sample(&mut rng)];
        let share_drift = [-0.04, -0.01, 0.025];
        // tonnes of standard coal per unit GDP, by industry; per person for households
        let intensity0 = [u(0.3, 0.8).sample(&mut rng), u(1.5, 4.0).sample(&mut rng), u(0.2, 0.6).sample(&mut rng)];
        let intensity_drift = u(-0.06, -0.03).sample(&mut rng);
        let household0 = u(0.15, 0.45).sample(&mut rng);
        let mut pop_walk = Walk::new(0.004);
        let mut gdp_walk = Walk::new(0.02);
        let mut share_walks: Vec<Walk> = (0..3).map(|_| Walk::new(0.02)).collect();
        let mut intensity_walks: Vec<Walk> = (0..4).map(|_| Walk::new(0.03)).collect();
        let mut mix_walks: Vec<Vec<Walk>> = (0..4).map(|_| (0..6).map(|_| Walk::new(0.03)).collect()).collect();
        for year in spec.first_year..=spec.last_year {
            let t = (year - spec.first_year) as f64;
            let population = pop0 * (pop_growth * t + pop_walk.step(&mut rng)).exp();
            let gdp_total = gdp0 * (gdp_growth * t - 0.001 * t * t + gdp_walk.step(&mut rng)).exp();
            let mut shares = [0.0; 3];
            for k in 0..3 {
                shares[k] = shares0[k] * (share_drift[k] * t + share_walks[k].step(&mut rng)).exp();
            }
            let share_sum: f64 = shares.iter().sum();
            let gdp = shares.map(|s| gdp_total * s / share_sum);
            economic.push(EconomicRecord { province: province.clone(), year, gdp, population });
            for (si, &sector) in Sector::ALL.iter().enumerate() {
                let trend = (intensity_drift * t + intensity_walks[si].step(&mut rng)).exp();
                let total = match sector.gdp_index() {
                    Some(k) => intensity0[k] * trend * gdp[k],
                    None => household0 * (0.02 * t).exp() * trend.sqrt() * population,
                };
                let base = base_mix(sector);
                let mut mix = [0.0; 6];
                for (ei, m) in mix.iter_mut().enumerate() {
                    if base[ei] > 0.0 {
                        *m = base[ei] * (MIX_DRIFT[ei] * t + mix_walks[si][ei].step(&mut rng)).exp();
                    }
                }
                let mix_sum: f64 = mix.iter().sum();
                for (ei, &e) in EnergyType::ALL.iter().enumerate() {
                    // three decimals keep the written panel compact
                    let value = (total * mix[ei] / mix_sum * 1000.0).round() / 1000.0;
                    energy.push(EnergyRecord::new(province, year, sector, e, value));
                }
            }
        }
    }
    Ok((EnergyPanel::new(energy)?, EconomicPanel::new(economic)?))
}

/// A small random panel with its own factor table, for property checks.
///
/// Shapes vary with the seed: 1–4 provinces, 2–6 consecutive years and a
/// random non-empty subset of energy types shared by every sector. About
/// one cell in ten is zero.
pub fn random_panel(seed: u64) -> Result<(EnergyPanel, EconomicPanel, EmissionFactorTable)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n_provinces = rng.random_range(1..=4);
    let n_years = rng.random_range(2..=6);
    let first_year = rng.random_range(1990..=2020);
    let mut energies: Vec<EnergyType> = EnergyType::ALL.iter().copied().filter(|_| rng.random_bool(0.6)).collect();
    if energies.is_empty() {
        energies.push(EnergyType::ALL[rng.random_range(0..6)]);
    }
    let factors = EmissionFactorTable::constant(energies.iter().map(|&e| (e, rng.random_range(0.05..1.0))))?;
    let mut energy = Vec::new();
    let mut economic = Vec::new();
    for p in 0..n_provinces {
        let province = format!("P{p}");
        for year in first_year..first_year + n_years {
            let gdp = [rng.random_range(1.0..500.0), rng.random_range(1.0..2000.0), rng.random_range(1.0..2000.0)];
            let population = rng.random_range(10.0..5000.0);
            economic.push(EconomicRecord { province: province.clone(), year, gdp, population });
            for &sector in &Sector::ALL {
                for &e in &energies {
                    let value = if rng.random_bool(0.1) { 0.0 } else { rng.random_range(0.0..1000.0) };
                    energy.push(EnergyRecord::new(&province, year, sector, e, value));
                }
            }
        }
    }
    Ok((EnergyPanel::new(energy)?, EconomicPanel::new(economic)?, factors))
}
