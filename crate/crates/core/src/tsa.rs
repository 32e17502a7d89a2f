//! Time-series utilities for Box–Jenkins modelling: differencing, the
//! augmented Dickey–Fuller test, ACF/PACF, Ljung–Box and AIC.

use nalgebra::{DMatrix, DVector};
use serde::Serialize;
use statrs::distribution::{ChiSquared, ContinuousCDF, Normal};

use crate::error::{Error, Result};

/// An annual series starting at `start_year`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TimeSeries {
    start_year: i32,
    values: Vec<f64>,
}

impl TimeSeries {
    pub fn new(start_year: i32, values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::InvalidArgument("a time series needs at least one value".into()));
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "non-finite value {} in year {}",
                values[i],
                start_year + i as i32
            )));
        }
        Ok(TimeSeries { start_year, values })
    }

    pub fn start_year(&self) -> i32 {
        self.start_year
    }

    pub fn end_year(&self) -> i32 {
        self.start_year + self.values.len() as i32 - 1
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn years(&self) -> impl Iterator<Item = i32> + '_ {
        (0..self.values.len()).map(move |i| self.start_year + i as i32)
    }

    pub fn get(&self, year: i32) -> Option<f64> {
        usize::try_from(year - self.start_year)
            .ok()
            .and_then(|i| self.values.get(i).copied())
    }

    /// The sub-series covering `[from, to]`, clipped to the available years.
    pub fn slice_years(&self, from: i32, to: i32) -> Result<TimeSeries> {
        let lo = from.max(self.start_year);
        let hi = to.min(self.end_year());
        if lo > hi {
            return Err(Error::InvalidArgument(format!(
                "no observations between {from} and {to}"
            )));
        }
        let a = (lo - self.start_year) as usize;
        let b = (hi - self.start_year) as usize;
        TimeSeries::new(lo, self.values[a..=b].to_vec())
    }
}

/// Applies the first difference `d` times.
pub fn difference(series: &TimeSeries, d: usize) -> Result<TimeSeries> {
    if d >= series.len() {
        return Err(Error::TooShort {
            needed: d + 1,
            got: series.len(),
        });
    }
    TimeSeries::new(series.start_year + d as i32, difference_values(&series.values, d))
}

pub(crate) fn difference_values(x: &[f64], d: usize) -> Vec<f64> {
    let mut v = x.to_vec();
    for _ in 0..d {
        v = v.windows(2).map(|w| w[1] - w[0]).collect();
    }
    v
}

/// Deterministic terms in the ADF regression.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Regression {
    #[default]
    Constant,
    ConstantTrend,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum LagSpec {
    /// Choose by AIC up to the Schwert bound.
    #[default]
    Auto,
    Fixed(usize),
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AdfResult {
    pub t_statistic: f64,
    pub p_value: f64,
    pub lags_used: usize,
    pub n_obs: usize,
    /// Finite-sample critical values at 1%, 5% and 10%.
    pub critical_values: [f64; 3],
    pub reject_at_5pct: bool,
}

struct Ols {
    beta: DVector<f64>,
    se0: f64,
    ssr: f64,
    nobs: usize,
    k: usize,
}

impl Ols {
    fn aic(&self) -> f64 {
        let n = self.nobs as f64;
        let llf = -n / 2.0 * ((2.0 * std::f64::consts::PI).ln() + (self.ssr / n).ln() + 1.0);
        aic(llf, self.k)
    }
}

fn ols(x: DMatrix<f64>, y: DVector<f64>) -> Result<Ols> {
    let (nobs, k) = x.shape();
    if nobs <= k {
        return Err(Error::TooShort { needed: k + 1, got: nobs });
    }
    let scale = x.column_iter().map(|c| c.norm()).fold(0.0, f64::max);
    let qr = x.clone().qr();
    let r = qr.r();
    if (0..k).any(|i| r[(i, i)].abs() <= 1e-10 * scale) {
        return Err(Error::Degenerate("regressors are collinear (constant series?)".into()));
    }
    let qty = qr.q().transpose() * &y;
    let beta = r
        .solve_upper_triangular(&qty)
        .ok_or_else(|| Error::Degenerate("singular regression".into()))?;
    let resid = &y - &x * &beta;
    let ssr = resid.norm_squared();
    if ssr <= 1e-20 * y.norm_squared() + f64::MIN_POSITIVE {
        return Err(Error::Degenerate("regression fits exactly".into()));
    }
    let sigma2 = ssr / (nobs - k) as f64;
    let rinv = r
        .try_inverse()
        .ok_or_else(|| Error::Degenerate("singular regression".into()))?;
    let xtx_inv00: f64 = rinv.row(0).norm_squared();
    Ok(Ols {
        beta,
        se0: (sigma2 * xtx_inv00).sqrt(),
        ssr,
        nobs,
        k,
    })
}

/// Regression of Δy_t on y_{t-1}, deterministic terms and `lags` lagged
/// differences, over the rows `first..n` of the level series.
fn adf_regression(y: &[f64], lags: usize, first: usize, regression: Regression) -> Result<Ols> {
    let n = y.len();
    let rows = n - first;
    let k = 2 + usize::from(regression == Regression::ConstantTrend) + lags;
    let mut x = DMatrix::zeros(rows, k);
    let mut dep = DVector::zeros(rows);
    for (row, t) in (first..n).enumerate() {
        dep[row] = y[t] - y[t - 1];
        x[(row, 0)] = y[t - 1];
        x[(row, 1)] = 1.0;
        let mut col = 2;
        if regression == Regression::ConstantTrend {
            x[(row, col)] = t as f64;
            col += 1;
        }
        for l in 1..=lags {
            x[(row, col)] = y[t - l] - y[t - l - 1];
            col += 1;
        }
    }
    ols(x, dep)
}

/// Schwert bound `floor(12·(n/100)^{1/4})`.
pub fn schwert_max_lag(n: usize) -> usize {
    (12.0 * (n as f64 / 100.0).powf(0.25)).floor() as usize
}

/// ADF test with a constant.
pub fn adf_test(series: &TimeSeries, lags: LagSpec) -> Result<AdfResult> {
    adf_test_with(series, lags, Regression::Constant)
}

pub fn adf_test_with(series: &TimeSeries, lags: LagSpec, regression: Regression) -> Result<AdfResult> {
    let y = series.values();
    let n = y.len();
    let ntrend = 1 + usize::from(regression == Regression::ConstantTrend);
    let (max_lag, auto) = match lags {
        LagSpec::Fixed(l) => (l, false),
        LagSpec::Auto => {
            if n < 10 {
                return Err(Error::TooShort { needed: 10, got: n });
            }
            let bound = (n / 2).saturating_sub(ntrend + 1);
            (schwert_max_lag(n).min(bound).min(n - 10), true)
        }
    };
    if n < 10 + max_lag {
        return Err(Error::TooShort {
            needed: 10 + max_lag,
            got: n,
        });
    }
    if y.iter().all(|&v| v == y[0]) {
        return Err(Error::Degenerate("series is constant".into()));
    }
    let used = if auto && max_lag > 0 {
        let mut best = (f64::INFINITY, 0);
        for l in 0..=max_lag {
            let fit = adf_regression(y, l, max_lag + 1, regression)?;
            let a = fit.aic();
            if a < best.0 {
                best = (a, l);
            }
        }
        best.1
    } else {
        max_lag
    };
    let fit = adf_regression(y, used, used + 1, regression)?;
    let t = fit.beta[0] / fit.se0;
    let p = mackinnon_p(t, regression);
    let critical_values = mackinnon_crit(fit.nobs, regression);
    Ok(AdfResult {
        t_statistic: t,
        p_value: p,
        lags_used: used,
        n_obs: fit.nobs,
        critical_values,
        reject_at_5pct: p < 0.05,
    })
}

struct PCoefs {
    star: f64,
    min: f64,
    max: f64,
    small: [f64; 3],
    large: [f64; 4],
}

const P_CONST: PCoefs = PCoefs {
    star: -1.61,
    min: -18.83,
    max: 2.74,
    small: [2.1659, 1.4412, 0.038269],
    large: [1.7339, 0.93202, -0.12745, -0.010368],
};

const P_TREND: PCoefs = PCoefs {
    star: -2.89,
    min: -16.18,
    max: 0.7,
    small: [3.2512, 1.6047, 0.049588],
    large: [2.5261, 0.61654, -0.37956, -0.060285],
};

fn polyval(coefs: &[f64], x: f64) -> f64 {
    coefs.iter().rev().fold(0.0, |acc, c| acc * x + c)
}

/// Asymptotic p-value of an ADF statistic (MacKinnon 1994 response surface).
pub fn mackinnon_p(t: f64, regression: Regression) -> f64 {
    let c = match regression {
        Regression::Constant => &P_CONST,
        Regression::ConstantTrend => &P_TREND,
    };
    if t > c.max {
        return 1.0;
    }
    if t < c.min {
        return 0.0;
    }
    let z = if t <= c.star {
        polyval(&c.small, t)
    } else {
        polyval(&c.large, t)
    };
    Normal::standard().cdf(z)
}

const CRIT_CONST: [[f64; 4]; 3] = [
    [-3.43035, -6.5393, -16.786, -79.433],
    [-2.86154, -2.8903, -4.234, -40.04],
    [-2.56677, -1.5384, -2.809, 0.0],
];

const CRIT_TREND: [[f64; 4]; 3] = [
    [-3.95877, -9.0531, -28.428, -134.155],
    [-3.41049, -4.3904, -9.036, -45.374],
    [-3.12705, -2.5856, -3.925, -22.38],
];

/// Finite-sample critical values at 1%, 5%, 10% (MacKinnon 2010).
pub fn mackinnon_crit(nobs: usize, regression: Regression) -> [f64; 3] {
    let table = match regression {
        Regression::Constant => &CRIT_CONST,
        Regression::ConstantTrend => &CRIT_TREND,
    };
    let inv = 1.0 / nobs as f64;
    table.map(|b| b[0] + b[1] * inv + b[2] * inv * inv + b[3] * inv * inv * inv)
}

fn check_max_lag(n: usize, max_lag: usize) -> Result<()> {
    if 2 * max_lag >= n {
        return Err(Error::InvalidArgument(format!(
            "max_lag {max_lag} must be below half the series length {n}"
        )));
    }
    Ok(())
}

fn autocovariances(x: &[f64], max_lag: usize) -> Vec<f64> {
    let n = x.len() as f64;
    let m = x.iter().sum::<f64>() / n;
    (0..=max_lag)
        .map(|k| {
            x.iter()
                .zip(&x[k..])
                .map(|(a, b)| (a - m) * (b - m))
                .sum::<f64>()
                / n
        })
        .collect()
}

/// Sample autocorrelations `ρ_0..=ρ_max_lag` (biased estimator).
pub fn acf(series: &TimeSeries, max_lag: usize) -> Result<Vec<f64>> {
    check_max_lag(series.len(), max_lag)?;
    let g = autocovariances(series.values(), max_lag);
    if g[0] <= 0.0 {
        return Err(Error::Degenerate("autocorrelation of a constant series".into()));
    }
    Ok(g.iter().map(|v| v / g[0]).collect())
}

/// Partial autocorrelations by the Durbin–Levinson recursion; index 0 holds 1.
pub fn pacf(series: &TimeSeries, max_lag: usize) -> Result<Vec<f64>> {
    let rho = acf(series, max_lag)?;
    let mut out = vec![1.0];
    let mut phi: Vec<f64> = Vec::new();
    for k in 1..=max_lag {
        let num = rho[k] - (1..k).map(|j| phi[j - 1] * rho[k - j]).sum::<f64>();
        let den = 1.0 - (1..k).map(|j| phi[j - 1] * rho[j]).sum::<f64>();
        let pkk = if k == 1 { rho[1] } else { num / den };
        let mut next = Vec::with_capacity(k);
        for j in 1..k {
            next.push(phi[j - 1] - pkk * phi[k - j - 1]);
        }
        next.push(pkk);
        phi = next;
        out.push(pkk);
    }
    Ok(out)
}

/// Ljung–Box portmanteau statistic and p-value.
///
/// A series with zero variance has no autocorrelation to detect and
/// returns `(0, 1)`.
pub fn ljung_box(residuals: &TimeSeries, lags: usize, fitted_params: usize) -> Result<(f64, f64)> {
    if lags <= fitted_params {
        return Err(Error::InvalidArgument(format!(
            "Ljung-Box needs lags ({lags}) > fitted parameters ({fitted_params})"
        )));
    }
    let n = residuals.len();
    if lags >= n {
        return Err(Error::TooShort { needed: lags + 1, got: n });
    }
    let g = autocovariances(residuals.values(), lags);
    if g[0] <= 0.0 {
        return Ok((0.0, 1.0));
    }
    let nf = n as f64;
    let q = nf
        * (nf + 2.0)
        * (1..=lags)
            .map(|k| (g[k] / g[0]).powi(2) / (nf - k as f64))
            .sum::<f64>();
    let dist = ChiSquared::new((lags - fitted_params) as f64)
        .map_err(|e| Error::InvalidArgument(e.to_string()))?;
    Ok((q, dist.sf(q).clamp(0.0, 1.0)))
}

/// Akaike information criterion, `2k − 2·ll`.
pub fn aic(log_likelihood: f64, k_params: usize) -> f64 {
    2.0 * k_params as f64 - 2.0 * log_likelihood
}
