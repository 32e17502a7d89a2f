//! Additive LMDI-I decomposition of emission changes.
//!
//! Emissions of each (province, sector, energy) cell factor as
//! `C = s·f·e·n·r·p`. The change between two years splits into energy
//! structure (s), intensity (e), industrial structure (n), per-capita GDP
//! (r) and population (p) effects. Emission coefficients must stay
//! constant, so the coefficient effect is identically zero.

use std::collections::BTreeMap;

use serde::Serialize;

use crate::accounting::{IdentityFactors, ProvinceFactors};
use crate::dataio::{Cell, EnergyType, Sector, Table};
use crate::error::{Error, Result};

/// Stand-in for zero consumption so that logarithms stay finite.
pub const ZERO_SUBSTITUTE: f64 = 1e-10;

/// Relative additivity tolerance.
pub const ADDITIVITY_TOL: f64 = 1e-9;

/// Logarithmic mean `(a − b)/ln(a/b)`, with `L(a, a) = a`.
pub fn log_mean(a: f64, b: f64) -> Result<f64> {
    if !(a > 0.0 && b > 0.0) || !a.is_finite() || !b.is_finite() {
        return Err(Error::InvalidArgument(format!(
            "logarithmic mean needs positive finite arguments, got ({a}, {b})"
        )));
    }
    Ok(log_mean_unchecked(a, b))
}

fn log_mean_unchecked(a: f64, b: f64) -> f64 {
    if a == b {
        return a;
    }
    let x = (a - b) / b;
    if x.abs() < 1e-4 {
        // series expansion keeps full precision near a = b
        return b * (1.0 + x / 2.0 - x * x / 12.0 + x * x * x / 24.0);
    }
    // a / b is exact to rounding even when a ≪ b, unlike 1 + x
    (a - b) / (a / b).ln()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DecompositionRow {
    pub from_year: i32,
    pub year: i32,
    /// Energy structure effect.
    pub dc_s: f64,
    /// Emission coefficient effect; zero by construction.
    pub dc_f: f64,
    /// Energy intensity effect.
    pub dc_e: f64,
    /// Industrial structure effect.
    pub dc_n: f64,
    /// Per-capita GDP effect.
    pub dc_r: f64,
    /// Population effect.
    pub dc_p: f64,
    pub total: f64,
}

impl DecompositionRow {
    pub fn effects(&self) -> [f64; 5] {
        [self.dc_s, self.dc_e, self.dc_n, self.dc_r, self.dc_p]
    }

    pub fn effects_sum(&self) -> f64 {
        self.dc_s + self.dc_f + self.dc_e + self.dc_n + self.dc_r + self.dc_p
    }

    /// `|Σ effects − total| / max(|total|, 1)`.
    pub fn additivity_gap(&self) -> f64 {
        (self.effects_sum() - self.total).abs() / self.total.abs().max(1.0)
    }

    pub fn negated(&self) -> Self {
        DecompositionRow {
            from_year: self.year,
            year: self.from_year,
            dc_s: -self.dc_s,
            dc_f: -self.dc_f,
            dc_e: -self.dc_e,
            dc_n: -self.dc_n,
            dc_r: -self.dc_r,
            dc_p: -self.dc_p,
            total: -self.total,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DecompositionTable {
    pub rows: Vec<DecompositionRow>,
    pub cumulative: DecompositionRow,
}

impl DecompositionTable {
    /// Errors with an invariant breach if any row is not additive.
    pub fn check_additivity(&self) -> Result<()> {
        for r in self.rows.iter().chain(std::iter::once(&self.cumulative)) {
            if r.additivity_gap() > ADDITIVITY_TOL || r.dc_f != 0.0 {
                return Err(Error::Invariant(format!(
                    "decomposition {}-{} is not additive: effects sum to {}, total is {}",
                    r.from_year,
                    r.year,
                    r.effects_sum(),
                    r.total
                )));
            }
        }
        Ok(())
    }

    /// `year,dC_s,dC_f,dC_e,dC_n,dC_r,dC_p,total`, with a final `cumulative` row.
    pub fn to_table(&self) -> Table {
        let mut t = Table::new(["year", "dC_s", "dC_f", "dC_e", "dC_n", "dC_r", "dC_p", "total"]);
        let row = |label: Cell, r: &DecompositionRow| {
            vec![
                label,
                r.dc_s.into(),
                r.dc_f.into(),
                r.dc_e.into(),
                r.dc_n.into(),
                r.dc_r.into(),
                r.dc_p.into(),
                r.total.into(),
            ]
        };
        for r in &self.rows {
            t.push(row(Cell::Text(r.year.to_string()), r));
        }
        t.push(row(Cell::from("cumulative"), &self.cumulative));
        t
    }
}

type CellKey<'a> = (&'a str, Sector, EnergyType);

struct Regularized {
    share: f64,
    intensity: f64,
    gdp_share: f64,
    per_capita_gdp: f64,
    population: f64,
    emissions: f64,
}

/// Factors of every cell with zero consumption replaced by
/// [`ZERO_SUBSTITUTE`] and the shares and intensities recomputed.
fn regularize(pf: &ProvinceFactors) -> BTreeMap<(Sector, EnergyType), Regularized> {
    let mut sector_energy: BTreeMap<Sector, f64> = BTreeMap::new();
    for (&(s, _), c) in &pf.cells {
        *sector_energy.entry(s).or_insert(0.0) += c.energy_use.max(ZERO_SUBSTITUTE);
    }
    pf.cells
        .iter()
        .map(|(&(s, e), c)| {
            let sec = &pf.sectors[&s];
            let energy = c.energy_use.max(ZERO_SUBSTITUTE);
            let total = sector_energy[&s];
            (
                (s, e),
                Regularized {
                    share: energy / total,
                    intensity: total / sec.gdp,
                    gdp_share: sec.gdp_share,
                    per_capita_gdp: pf.per_capita_gdp,
                    population: pf.population,
                    emissions: energy * c.coefficient,
                },
            )
        })
        .collect()
}

fn cell_keys(f: &IdentityFactors) -> Vec<CellKey<'_>> {
    f.provinces
        .iter()
        .flat_map(|(p, pf)| pf.cells.keys().map(move |&(s, e)| (p.as_str(), s, e)))
        .collect()
}

/// Decomposes the change from `prev` to `curr`.
pub fn decompose_pair(prev: &IdentityFactors, curr: &IdentityFactors) -> Result<DecompositionRow> {
    if cell_keys(prev) != cell_keys(curr) {
        return Err(Error::Alignment(format!(
            "years {} and {} cover different (province, sector, energy) cells",
            prev.year, curr.year
        )));
    }
    let mut row = DecompositionRow {
        from_year: prev.year,
        year: curr.year,
        dc_s: 0.0,
        dc_f: 0.0,
        dc_e: 0.0,
        dc_n: 0.0,
        dc_r: 0.0,
        dc_p: 0.0,
        total: 0.0,
    };
    for (province, a) in &prev.provinces {
        let b = &curr.provinces[province];
        let ra = regularize(a);
        let rb = regularize(b);
        for (key, ca) in &a.cells {
            let cb = &b.cells[key];
            if ca.energy_use < 0.0 || cb.energy_use < 0.0 || ca.emissions < 0.0 || cb.emissions < 0.0 {
                return Err(Error::InvalidArgument(format!(
                    "negative emissions in {province} {} {}",
                    key.0, key.1
                )));
            }
            let (fa, fb) = (ca.coefficient, cb.coefficient);
            if (fa - fb).abs() > 1e-12 * fa.abs().max(fb.abs()) {
                return Err(Error::Inconsistent(format!(
                    "emission coefficient of {province} {} {} changes between {} and {}; the decomposition assumes constant coefficients",
                    key.0, key.1, prev.year, curr.year
                )));
            }
            row.total += cb.emissions - ca.emissions;
            if fa == 0.0 {
                continue;
            }
            let (x, y) = (&ra[key], &rb[key]);
            let w = log_mean_unchecked(y.emissions, x.emissions);
            row.dc_s += w * (y.share / x.share).ln();
            row.dc_e += w * (y.intensity / x.intensity).ln();
            row.dc_n += w * (y.gdp_share / x.gdp_share).ln();
            row.dc_r += w * (y.per_capita_gdp / x.per_capita_gdp).ln();
            row.dc_p += w * (y.population / x.population).ln();
        }
    }
    Ok(row)
}

/// Chained year-on-year decomposition with cumulative sums.
pub fn decompose_series(by_year: &BTreeMap<i32, IdentityFactors>) -> Result<DecompositionTable> {
    if by_year.len() < 2 {
        return Err(Error::InvalidArgument(format!(
            "need at least 2 years to decompose, got {}",
            by_year.len()
        )));
    }
    let years: Vec<&IdentityFactors> = by_year.values().collect();
    let mut rows = Vec::with_capacity(years.len() - 1);
    for pair in years.windows(2) {
        if pair[1].year != pair[0].year + 1 {
            return Err(Error::Alignment(format!(
                "gap between {} and {}",
                pair[0].year, pair[1].year
            )));
        }
        rows.push(decompose_pair(pair[0], pair[1])?);
    }
    let first = rows[0].from_year;
    let last = rows[rows.len() - 1].year;
    let mut cumulative = DecompositionRow {
        from_year: first,
        year: last,
        dc_s: 0.0,
        dc_f: 0.0,
        dc_e: 0.0,
        dc_n: 0.0,
        dc_r: 0.0,
        dc_p: 0.0,
        total: 0.0,
    };
    for r in &rows {
        cumulative.dc_s += r.dc_s;
        cumulative.dc_e += r.dc_e;
        cumulative.dc_n += r.dc_n;
        cumulative.dc_r += r.dc_r;
        cumulative.dc_p += r.dc_p;
    }
    cumulative.total = years[years.len() - 1].emissions() - years[0].emissions();
    let table = DecompositionTable { rows, cumulative };
    table.check_additivity()?;
    Ok(table)
}

/// One row of a reference annual effects table, in hundredths.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct EffectsFixtureRow {
    pub year: i32,
    pub structure: i64,
    pub intensity: i64,
    pub per_capita_gdp: i64,
    pub population: i64,
    pub industrial_structure: i64,
    pub gross: i64,
}

impl EffectsFixtureRow {
    pub fn effects_sum(&self) -> i64 {
        self.structure + self.intensity + self.per_capita_gdp + self.population + self.industrial_structure
    }

    /// `|Σ effects − gross|` in hundredths.
    pub fn gap(&self) -> i64 {
        (self.effects_sum() - self.gross).abs()
    }
}

fn parse_cents(s: &str) -> Result<i64> {
    let s = s.trim().replace(',', "");
    let (neg, digits) = match s.strip_prefix('-') {
        Some(rest) => (true, rest.to_string()),
        None => (false, s.clone()),
    };
    let (int, frac) = digits.split_once('.').unwrap_or((&digits, "0"));
    if frac.len() > 2 || int.is_empty() {
        return Err(Error::InvalidArgument(format!("expected at most two decimals in `{s}`")));
    }
    let int: i64 = int.parse().map_err(|_| Error::InvalidArgument(format!("bad number `{s}`")))?;
    let frac: i64 = format!("{frac:0<2}").parse().map_err(|_| Error::InvalidArgument(format!("bad number `{s}`")))?;
    let v = int * 100 + frac;
    Ok(if neg { -v } else { v })
}

/// Parses `year,structure,intensity,per_capita_gdp,population,industrial_structure,gross`.
pub fn parse_effects_fixture(text: &str) -> Result<Vec<EffectsFixtureRow>> {
    let mut reader = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let expected = ["year", "structure", "intensity", "per_capita_gdp", "population", "industrial_structure", "gross"];
    let header = reader
        .headers()
        .map_err(|e| Error::InvalidArgument(e.to_string()))?
        .clone();
    if header.iter().collect::<Vec<_>>() != expected {
        return Err(Error::InvalidArgument(format!(
            "fixture header must be `{}`",
            expected.join(",")
        )));
    }
    let mut rows = Vec::new();
    for rec in reader.records() {
        let rec = rec.map_err(|e| Error::InvalidArgument(e.to_string()))?;
        rows.push(EffectsFixtureRow {
            year: rec[0].parse().map_err(|_| Error::InvalidArgument(format!("bad year `{}`", &rec[0])))?,
            structure: parse_cents(&rec[1])?,
            intensity: parse_cents(&rec[2])?,
            per_capita_gdp: parse_cents(&rec[3])?,
            population: parse_cents(&rec[4])?,
            industrial_structure: parse_cents(&rec[5])?,
            gross: parse_cents(&rec[6])?,
        });
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::accounting::ProvinceFactors;

    #[test]
    fn log_mean_examples() {
        assert_eq!(log_mean(5.0, 5.0).unwrap(), 5.0);
        assert!((log_mean(1.0, std::f64::consts::E).unwrap() - 1.718_281_828_459_045).abs() < 1e-12);
        assert!((log_mean(2.0, 8.0).unwrap() - 6.0 / 4f64.ln()).abs() < 1e-12);
        assert!(log_mean(0.0, 1.0).is_err());
        assert!(log_mean(-1.0, 1.0).is_err());
    }

    #[test]
    fn log_mean_near_equal_is_smooth() {
        let b: f64 = 3.0;
        let a = b * (1.0 + 1e-9);
        let direct = (a - b) / (a / b).ln();
        assert!((log_mean(a, b).unwrap() - direct).abs() < 1e-6);
        assert!(log_mean(a, b).unwrap() >= b && log_mean(a, b).unwrap() <= a);
    }

    #[test]
    fn log_mean_far_apart_keeps_precision() {
        let (a, b): (f64, f64) = (2e-10, 400.0);
        let want = (b - a) / (b / a).ln();
        assert!((log_mean(a, b).unwrap() - want).abs() < 1e-14 * want);
        assert!((log_mean(b, a).unwrap() - want).abs() < 1e-14 * want);
    }

    fn single(year: i32, population: f64) -> IdentityFactors {
        let consumption = BTreeMap::from([((Sector::Secondary, EnergyType::Coal), 50.0)]);
        let coefs = BTreeMap::from([((Sector::Secondary, EnergyType::Coal), 2.0)]);
        let gdp = 100.0 * population / 10.0;
        let pf = ProvinceFactors::from_raw(&consumption, &coefs, [gdp * 0.1, gdp * 0.5, gdp * 0.4], population).unwrap();
        IdentityFactors { year, provinces: BTreeMap::from([("A".to_string(), pf)]) }
    }

    #[test]
    fn identical_years_give_zero_row() {
        let a = single(2000, 10.0);
        let b = IdentityFactors { year: 2001, ..a.clone() };
        let r = decompose_pair(&a, &b).unwrap();
        assert_eq!(r.effects(), [0.0; 5]);
        assert_eq!(r.total, 0.0);
    }

    #[test]
    fn coefficient_drift_is_rejected() {
        let a = single(2000, 10.0);
        let mut b = IdentityFactors { year: 2001, ..a.clone() };
        b.provinces.get_mut("A").unwrap().cells.values_mut().for_each(|c| c.coefficient *= 1.1);
        assert!(matches!(decompose_pair(&a, &b), Err(Error::Inconsistent(_))));
    }

    #[test]
    fn series_needs_two_years() {
        let one = BTreeMap::from([(2000, single(2000, 10.0))]);
        assert!(decompose_series(&one).is_err());
    }

    #[test]
    fn cents_parsing() {
        assert_eq!(parse_cents("-1,531.48").unwrap(), -153148);
        assert_eq!(parse_cents("36.5").unwrap(), 3650);
        assert_eq!(parse_cents("7").unwrap(), 700);
        assert!(parse_cents("1.234").is_err());
    }
}
