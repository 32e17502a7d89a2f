use std::fmt;

use serde::Serialize;
use statrs::distribution::{ContinuousCDF, FisherSnedecor};

use crate::error::{Error, Result};

/// Size, mean and sample standard deviation of one group.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GroupSummary {
    pub name: String,
    pub n: usize,
    pub mean: f64,
    pub sd: f64,
}

impl GroupSummary {
    pub fn new(name: &str, n: usize, mean: f64, sd: f64) -> Self {
        GroupSummary { name: name.to_string(), n, mean, sd }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum TestMethod {
    Welch,
    ClassicAnova,
}

impl fmt::Display for TestMethod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            TestMethod::Welch => "welch",
            TestMethod::ClassicAnova => "classic_anova",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct WelchResult {
    pub f: f64,
    pub df1: f64,
    pub df2: f64,
    pub p_value: f64,
    pub method: TestMethod,
}

fn check(groups: &[GroupSummary]) -> Result<()> {
    if groups.len() < 2 {
        return Err(Error::InvalidArgument(format!("need at least 2 groups, got {}", groups.len())));
    }
    for g in groups {
        if g.n < 2 {
            return Err(Error::InvalidArgument(format!("group `{}` has fewer than 2 observations", g.name)));
        }
        if !(g.sd > 0.0) || !g.sd.is_finite() || !g.mean.is_finite() {
            return Err(Error::InvalidArgument(format!(
                "group `{}` needs a positive finite standard deviation, got {}",
                g.name, g.sd
            )));
        }
    }
    Ok(())
}

fn f_sf(f: f64, df1: f64, df2: f64) -> Result<f64> {
    if f <= 0.0 {
        return Ok(1.0);
    }
    let dist = FisherSnedecor::new(df1, df2).map_err(|e| Error::InvalidArgument(e.to_string()))?;
    Ok(dist.sf(f).clamp(0.0, 1.0))
}

/// Welch's heteroscedastic one-way ANOVA from summary statistics.
pub fn welch_test(groups: &[GroupSummary]) -> Result<WelchResult> {
    check(groups)?;
    let k = groups.len() as f64;
    let weights: Vec<f64> = groups.iter().map(|g| g.n as f64 / (g.sd * g.sd)).collect();
    let w_total: f64 = weights.iter().sum();
    let weighted_mean = groups.iter().zip(&weights).map(|(g, w)| w * g.mean).sum::<f64>() / w_total;
    let a = groups
        .iter()
        .zip(&weights)
        .map(|(g, w)| w * (g.mean - weighted_mean).powi(2))
        .sum::<f64>()
        / (k - 1.0);
    let tmp: f64 = groups
        .iter()
        .zip(&weights)
        .map(|(g, w)| (1.0 - w / w_total).powi(2) / (g.n as f64 - 1.0))
        .sum();
    let b = 1.0 + 2.0 * (k - 2.0) / (k * k - 1.0) * tmp;
    let f = a / b;
    let df1 = k - 1.0;
    let df2 = (k * k - 1.0) / (3.0 * tmp);
    Ok(WelchResult { f, df1, df2, p_value: f_sf(f, df1, df2)?, method: TestMethod::Welch })
}

/// Pooled-variance one-way ANOVA from summary statistics.
pub fn classic_anova(groups: &[GroupSummary]) -> Result<WelchResult> {
    check(groups)?;
    let k = groups.len() as f64;
    let n_total: f64 = groups.iter().map(|g| g.n as f64).sum();
    let grand = groups.iter().map(|g| g.n as f64 * g.mean).sum::<f64>() / n_total;
    let ssb: f64 = groups.iter().map(|g| g.n as f64 * (g.mean - grand).powi(2)).sum();
    let ssw: f64 = groups.iter().map(|g| (g.n as f64 - 1.0) * g.sd * g.sd).sum();
    let df1 = k - 1.0;
    let df2 = n_total - k;
    let f = (ssb / df1) / (ssw / df2);
    Ok(WelchResult { f, df1, df2, p_value: f_sf(f, df1, df2)?, method: TestMethod::ClassicAnova })
}
