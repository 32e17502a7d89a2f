//! ARIMA(p,d,q) estimation by conditional sum of squares, order
//! selection and forecasting.
//!
//! The differenced series `w_t` follows
//! `w_t = μ + Σ γ_i w_{t-i} + ε_t + Σ θ_j ε_{t-j}`.

use std::fmt;

use nalgebra::{Complex, DMatrix};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::optim::Bfgs;
use crate::tsa::{self, difference_values, LagSpec, TimeSeries};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
pub struct ArimaOrder {
    pub p: usize,
    pub d: usize,
    pub q: usize,
}

impl ArimaOrder {
    pub const fn new(p: usize, d: usize, q: usize) -> Self {
        ArimaOrder { p, d, q }
    }
}

impl fmt::Display for ArimaOrder {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({},{},{})", self.p, self.d, self.q)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ArimaModel {
    pub order: ArimaOrder,
    pub mu: f64,
    pub ar: Vec<f64>,
    pub ma: Vec<f64>,
    pub sigma2: f64,
    /// Residuals on the differenced scale; the first `p` are conditioned and zero.
    pub residuals: TimeSeries,
    pub log_likelihood: f64,
    pub aic: f64,
    #[serde(skip)]
    pub training: TimeSeries,
}

/// One-step in-sample diagnostics for the non-conditioned years.
#[derive(Debug, Clone, PartialEq)]
pub struct InSample {
    /// ε_t on the differenced scale.
    pub residuals: TimeSeries,
    /// One-step-ahead level forecasts.
    pub fitted_levels: TimeSeries,
    /// Observed level minus one-step level forecast.
    pub level_errors: TimeSeries,
}

/// CSS residuals; indices below `p` are left at zero.
fn css_residuals(w: &[f64], mu: f64, ar: &[f64], ma: &[f64]) -> Vec<f64> {
    let p = ar.len();
    let mut e = vec![0.0; w.len()];
    for t in p..w.len() {
        let mut pred = mu;
        for (i, g) in ar.iter().enumerate() {
            pred += g * w[t - i - 1];
        }
        for (j, th) in ma.iter().enumerate() {
            if t > j {
                pred += th * e[t - j - 1];
            }
        }
        e[t] = w[t] - pred;
    }
    e
}

fn sum_sq_from(e: &[f64], from: usize) -> f64 {
    e[from..].iter().map(|v| v * v).sum()
}

fn gaussian_ll(ss: f64, n_eff: usize) -> (f64, f64) {
    let n = n_eff as f64;
    let sigma2 = (ss / n).max(f64::MIN_POSITIVE);
    let ll = -n / 2.0 * ((2.0 * std::f64::consts::PI * sigma2).ln() + 1.0);
    (sigma2, ll)
}

/// Reciprocal roots of `1 + c_1 z + … + c_k z^k`.
fn reciprocal_roots(c: &[f64]) -> Vec<Complex<f64>> {
    let k = c.len();
    if k == 0 {
        return Vec::new();
    }
    let mut m = DMatrix::zeros(k, k);
    for (j, cj) in c.iter().enumerate() {
        m[(0, j)] = -cj;
    }
    for i in 1..k {
        m[(i, i - 1)] = 1.0;
    }
    m.complex_eigenvalues().iter().copied().collect()
}

/// Coefficients `c_1..c_k` of `Π (1 − λ_i z)`.
fn poly_from_reciprocal_roots(roots: &[Complex<f64>]) -> Vec<f64> {
    let mut coef = vec![Complex::new(1.0, 0.0)];
    for r in roots {
        let mut next = vec![Complex::new(0.0, 0.0); coef.len() + 1];
        for (i, c) in coef.iter().enumerate() {
            next[i] += c;
            next[i + 1] -= c * r;
        }
        coef = next;
    }
    coef[1..].iter().map(|c| c.re).collect()
}

/// Smallest modulus among the roots of the AR polynomial `1 − Σ γ_i z^i`.
pub fn ar_min_root_modulus(ar: &[f64]) -> f64 {
    let c: Vec<f64> = ar.iter().map(|g| -g).collect();
    reciprocal_roots(&c)
        .iter()
        .map(|l| 1.0 / l.norm())
        .fold(f64::INFINITY, f64::min)
}

/// Smallest modulus among the roots of the MA polynomial `1 + Σ θ_j z^j`.
pub fn ma_min_root_modulus(ma: &[f64]) -> f64 {
    reciprocal_roots(ma)
        .iter()
        .map(|l| 1.0 / l.norm())
        .fold(f64::INFINITY, f64::min)
}

const AR_ROOT_FLOOR: f64 = 1.001;

/// Moves AR roots outside the unit circle by radial scaling and reflects
/// MA roots that lie inside it. Returns true when anything changed.
fn project(ar: &mut [f64], ma: &mut Vec<f64>) -> bool {
    let mut changed = false;
    let m = ar_min_root_modulus(ar);
    if m < AR_ROOT_FLOOR {
        let s = m / AR_ROOT_FLOOR;
        let mut f = 1.0;
        for g in ar.iter_mut() {
            f *= s;
            *g *= f;
        }
        changed = true;
    }
    let roots = reciprocal_roots(ma);
    if roots.iter().any(|l| l.norm() > 1.0) {
        let reflected: Vec<Complex<f64>> = roots
            .iter()
            .map(|l| if l.norm() > 1.0 { l.conj().inv() } else { *l })
            .collect();
        *ma = poly_from_reciprocal_roots(&reflected);
        changed = true;
    }
    changed
}

struct CssFit {
    mu: f64,
    ar: Vec<f64>,
    ma: Vec<f64>,
}

/// Minimises the conditional sum of squares over `t ≥ cond`.
fn css_fit(w: &[f64], p: usize, q: usize, cond: usize) -> Result<CssFit> {
    let tail = &w[cond..];
    let mean = tail.iter().sum::<f64>() / tail.len() as f64;
    let sd = (tail.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / tail.len() as f64).sqrt();
    if sd == 0.0 || sd <= 1e-13 * mean.abs() {
        if p + q == 0 {
            return Ok(CssFit { mu: mean, ar: Vec::new(), ma: Vec::new() });
        }
        return Err(Error::Degenerate(format!(
            "differenced series is constant; AR/MA terms (p={p}, q={q}) are not identified"
        )));
    }
    // work on the standardised series for conditioning
    let z: Vec<f64> = w.iter().map(|v| (v - mean) / sd).collect();
    let objective = |x: &[f64]| {
        let e = css_residuals(&z, x[0], &x[1..=p], &x[1 + p..]);
        sum_sq_from(&e, cond) / tail.len() as f64
    };
    let mut x0 = vec![0.0; 1 + p + q];
    x0[0] = 0.0;
    let m = Bfgs::default().minimize(objective, &x0);
    if !m.converged && m.f.is_finite() {
        // outside the admissible region the surface is too flat to converge;
        // the caller projects such points back anyway
        let (mut ar, mut ma) = (m.x[1..=p].to_vec(), m.x[1 + p..].to_vec());
        if project(&mut ar, &mut ma) {
            log::debug!("CSS search left the admissible region after {} iterations", m.iterations);
            let ar = m.x[1..=p].to_vec();
            let mu = m.x[0] * sd + mean * (1.0 - ar.iter().sum::<f64>());
            return Ok(CssFit { mu, ar, ma: m.x[1 + p..].to_vec() });
        }
    }
    if !m.converged || !m.f.is_finite() {
        let mut best = m.x.clone();
        best[0] = best[0] * sd + mean * (1.0 - best[1..=p].iter().sum::<f64>());
        return Err(Error::NonConvergence {
            iterations: m.iterations,
            best_objective: m.f * sd * sd * tail.len() as f64,
            best_params: best,
        });
    }
    let ar = m.x[1..=p].to_vec();
    let ma = m.x[1 + p..].to_vec();
    let mu = m.x[0] * sd + mean * (1.0 - ar.iter().sum::<f64>());
    Ok(CssFit { mu, ar, ma })
}

impl ArimaModel {
    /// Builds a model with given parameters, computing residuals and fit statistics.
    pub fn from_parts(
        series: &TimeSeries,
        order: ArimaOrder,
        mu: f64,
        ar: Vec<f64>,
        ma: Vec<f64>,
    ) -> Result<Self> {
        if ar.len() != order.p || ma.len() != order.q {
            return Err(Error::InvalidArgument(format!(
                "coefficient counts ({}, {}) do not match order {order}",
                ar.len(),
                ma.len()
            )));
        }
        if series.len() <= order.d + order.p {
            return Err(Error::TooShort {
                needed: order.d + order.p + 1,
                got: series.len(),
            });
        }
        let w = difference_values(series.values(), order.d);
        let e = css_residuals(&w, mu, &ar, &ma);
        let n_eff = w.len() - order.p;
        let (sigma2, ll) = gaussian_ll(sum_sq_from(&e, order.p), n_eff);
        Ok(ArimaModel {
            order,
            mu,
            ar,
            ma,
            sigma2,
            residuals: TimeSeries::new(series.start_year() + order.d as i32, e)?,
            log_likelihood: ll,
            aic: tsa::aic(ll, order.p + order.q + 2),
            training: series.clone(),
        })
    }

    /// Number of leading residuals fixed at zero by conditioning.
    pub fn conditioned(&self) -> usize {
        self.order.p
    }

    pub fn n_params(&self) -> usize {
        self.order.p + self.order.q + 2
    }

    /// Ljung–Box p-value of the non-conditioned residuals, or `None` when
    /// the residual series is too short.
    pub fn ljung_box_p(&self) -> Option<f64> {
        let r = &self.residuals.values()[self.conditioned()..];
        let fitted = self.order.p + self.order.q;
        let lags = (r.len() / 4).clamp(fitted + 1, 10.max(fitted + 1));
        if lags >= r.len() {
            return None;
        }
        let s = TimeSeries::new(0, r.to_vec()).ok()?;
        tsa::ljung_box(&s, lags, fitted).ok().map(|x| x.1)
    }
}

/// Fits an ARIMA model by conditional sum of squares.
pub fn fit(series: &TimeSeries, order: ArimaOrder) -> Result<ArimaModel> {
    let needed = order.d + order.p.max(order.q) + 10;
    if series.len() < needed {
        return Err(Error::TooShort {
            needed,
            got: series.len(),
        });
    }
    let w = difference_values(series.values(), order.d);
    let CssFit { mu, mut ar, mut ma } = css_fit(&w, order.p, order.q, order.p)?;
    let mut model_mu = mu;
    if project(&mut ar, &mut ma) {
        log::warn!("ARIMA{order} optimum violated stationarity/invertibility; projected back");
        let mean = w[order.p..].iter().sum::<f64>() / (w.len() - order.p) as f64;
        model_mu = mean * (1.0 - ar.iter().sum::<f64>());
    }
    ArimaModel::from_parts(series, order, model_mu, ar, ma)
}

/// Chooses `d` by repeated ADF testing and `(p, q)` by AIC.
///
/// AIC values are compared on a common sample that conditions on `max_p`
/// observations. Series shorter than 15 observations are limited to
/// `p + q ≤ 1`.
pub fn select_order(series: &TimeSeries, max_p: usize, max_d: usize, max_q: usize) -> Result<ArimaOrder> {
    let mut chosen = None;
    for d in 0..=max_d {
        if series.len() <= d + 1 {
            break;
        }
        let w = tsa::difference(series, d)?;
        if w.values().iter().all(|&v| v == w.values()[0]) {
            return Ok(ArimaOrder::new(0, d, 0));
        }
        match tsa::adf_test(&w, LagSpec::Auto) {
            Ok(r) if r.reject_at_5pct => {
                chosen = Some((d, w));
                break;
            }
            Ok(_) | Err(Error::Degenerate(_)) => continue,
            Err(e) => return Err(e),
        }
    }
    let (d, w) = chosen.ok_or(Error::NoStationaryOrder { max_d })?;
    let small = series.len() < 15;
    let w = w.values();
    let mut best: Option<(f64, ArimaOrder)> = None;
    for p in 0..=max_p {
        for q in 0..=max_q {
            if small && p + q > 1 {
                continue;
            }
            if series.len() < d + p.max(q) + 10 {
                continue;
            }
            let cond = max_p;
            let order = ArimaOrder::new(p, d, q);
            let mut fitted = match css_fit(w, p, q, cond) {
                Ok(f) => f,
                Err(Error::NonConvergence { .. }) | Err(Error::Degenerate(_)) => {
                    log::debug!("skipping ARIMA{order} during order search");
                    continue;
                }
                Err(e) => return Err(e),
            };
            // score the admissible model that `fit` would return
            if project(&mut fitted.ar, &mut fitted.ma) {
                let mean = w[cond..].iter().sum::<f64>() / (w.len() - cond) as f64;
                fitted.mu = mean * (1.0 - fitted.ar.iter().sum::<f64>());
            }
            let e = css_residuals(w, fitted.mu, &fitted.ar, &fitted.ma);
            let (_, ll) = gaussian_ll(sum_sq_from(&e, cond), w.len() - cond);
            let a = tsa::aic(ll, p + q + 2);
            let better = match best {
                None => true,
                Some((ba, bo)) => {
                    let tol = 1e-10 * ba.abs().max(1.0);
                    a < ba - tol
                        || (a <= ba + tol
                            && (p + q, q) < (bo.p + bo.q, bo.q))
                }
            };
            if better {
                best = Some((a, order));
            }
        }
    }
    best.map(|b| b.1).ok_or_else(|| Error::TooShort {
        needed: d + 10,
        got: series.len(),
    })
}

/// Selects an order within the bounds and fits it.
pub fn auto_fit(series: &TimeSeries, max_p: usize, max_d: usize, max_q: usize) -> Result<ArimaModel> {
    let order = select_order(series, max_p, max_d, max_q)?;
    fit(series, order)
}

/// Levels of every differencing stage, `stages[k] = Δ^k y`.
fn stages(y: &[f64], d: usize) -> Vec<Vec<f64>> {
    let mut out = vec![y.to_vec()];
    for k in 0..d {
        let next = difference_values(&out[k], 1);
        out.push(next);
    }
    out
}

/// Iterated conditional-expectation forecast of `h` future levels.
pub fn forecast(model: &ArimaModel, h: usize) -> Result<TimeSeries> {
    if h == 0 {
        return Err(Error::InvalidArgument("forecast horizon must be at least 1".into()));
    }
    let d = model.order.d;
    let mut st = stages(model.training.values(), d);
    let mut e = model.residuals.values().to_vec();
    for _ in 0..h {
        let w = &st[d];
        let t = w.len();
        let mut next = model.mu;
        for (i, g) in model.ar.iter().enumerate() {
            next += g * w[t - i - 1];
        }
        for (j, th) in model.ma.iter().enumerate() {
            if t > j {
                next += th * e[t - j - 1];
            }
        }
        e.push(0.0);
        st[d].push(next);
        for k in (0..d).rev() {
            let last = *st[k].last().expect("non-empty stage");
            let inc = *st[k + 1].last().expect("non-empty stage");
            st[k].push(last + inc);
        }
    }
    let n = model.training.len();
    TimeSeries::new(model.training.end_year() + 1, st[0][n..].to_vec())
}

/// Differenced-scale residuals with the companion level-scale errors.
pub fn in_sample_residuals(model: &ArimaModel) -> Result<InSample> {
    let y = model.training.values();
    let d = model.order.d;
    let w = difference_values(y, d);
    let e = model.residuals.values();
    let skip = model.conditioned();
    // y_t − Δ^d y_t = −Σ_{k=1..d} C(d,k)(−1)^k y_{t−k}
    let mut binom = vec![1.0f64; d + 1];
    for k in 1..=d {
        binom[k] = binom[k - 1] * (d - k + 1) as f64 / k as f64;
    }
    let mut fitted = Vec::with_capacity(w.len() - skip);
    let mut errors = Vec::with_capacity(w.len() - skip);
    for i in skip..w.len() {
        let t = i + d;
        let mut carry = 0.0;
        for k in 1..=d {
            let sign = if k % 2 == 1 { 1.0 } else { -1.0 };
            carry += sign * binom[k] * y[t - k];
        }
        let w_hat = w[i] - e[i];
        let level = carry + w_hat;
        fitted.push(level);
        errors.push(y[t] - level);
    }
    let start = model.training.start_year() + (d + skip) as i32;
    Ok(InSample {
        residuals: TimeSeries::new(start, e[skip..].to_vec())?,
        fitted_levels: TimeSeries::new(start, fitted)?,
        level_errors: TimeSeries::new(start, errors)?,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, StandardNormal};

    fn noise(seed: u64, n: usize) -> Vec<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n).map(|_| StandardNormal.sample(&mut rng)).collect()
    }

    #[test]
    fn white_noise_closed_form() {
        let v = noise(1, 200);
        let s = TimeSeries::new(0, v.clone()).unwrap();
        let m = fit(&s, ArimaOrder::new(0, 0, 0)).unwrap();
        let mean = v.iter().sum::<f64>() / 200.0;
        let var = v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / 200.0;
        assert!((m.mu - mean).abs() < 1e-6);
        assert!((m.sigma2 - var).abs() < 1e-6);
        let ins = in_sample_residuals(&m).unwrap();
        for (r, x) in ins.residuals.values().iter().zip(&v) {
            assert!((r - (x - m.mu)).abs() < 1e-12);
        }
    }

    #[test]
    fn random_walk_forecasts() {
        let s = TimeSeries::new(2000, vec![1.0, 4.0, 2.0, 7.0]).unwrap();
        let flat = ArimaModel::from_parts(&s, ArimaOrder::new(0, 1, 0), 0.0, vec![], vec![]).unwrap();
        assert_eq!(forecast(&flat, 3).unwrap().values(), &[7.0, 7.0, 7.0]);
        let drift = ArimaModel::from_parts(&s, ArimaOrder::new(0, 1, 0), 2.0, vec![], vec![]).unwrap();
        let f = forecast(&drift, 3).unwrap();
        assert_eq!(f.values(), &[9.0, 11.0, 13.0]);
        assert_eq!(f.start_year(), 2004);
        assert!(forecast(&drift, 0).is_err());
    }

    #[test]
    fn exact_drift_has_zero_residuals() {
        let s = TimeSeries::new(0, (0..20).map(|i| 5.0 + 3.0 * i as f64).collect()).unwrap();
        let m = fit(&s, ArimaOrder::new(0, 1, 0)).unwrap();
        assert!((m.mu - 3.0).abs() < 1e-12);
        let ins = in_sample_residuals(&m).unwrap();
        assert!(ins.level_errors.values().iter().all(|e| e.abs() < 1e-9));
        assert_eq!(select_order(&s, 3, 2, 3).unwrap(), ArimaOrder::new(0, 1, 0));
    }

    #[test]
    fn level_errors_equal_differenced_residuals() {
        let mut y = vec![0.0, 1.0];
        for (i, z) in noise(3, 60).into_iter().enumerate() {
            let n = y.len();
            y.push(2.0 * y[n - 1] - y[n - 2] + z + 0.01 * i as f64);
        }
        let s = TimeSeries::new(1990, y).unwrap();
        let m = fit(&s, ArimaOrder::new(1, 2, 1)).unwrap();
        let ins = in_sample_residuals(&m).unwrap();
        let scale = s.values().iter().fold(0.0f64, |a, v| a.max(v.abs()));
        for (a, b) in ins.level_errors.values().iter().zip(ins.residuals.values()) {
            assert!((a - b).abs() <= 1e-12 * scale.max(1.0));
        }
        assert_eq!(ins.level_errors.start_year(), 1990 + 2 + 1);
    }

    #[test]
    fn roots_and_projection() {
        assert!((ar_min_root_modulus(&[0.5]) - 2.0).abs() < 1e-12);
        assert!((ma_min_root_modulus(&[0.25]) - 4.0).abs() < 1e-12);
        let mut ar = vec![1.2];
        let mut ma = vec![2.0];
        assert!(project(&mut ar, &mut ma));
        assert!(ar_min_root_modulus(&ar) >= AR_ROOT_FLOOR - 1e-9);
        assert!((ma[0] - 0.5).abs() < 1e-12);
        // complex pair inside the unit circle: 1 + 0.5z + 4z²
        let mut ar2: Vec<f64> = vec![];
        let mut ma2 = vec![0.5, 4.0];
        project(&mut ar2, &mut ma2);
        assert!(ma_min_root_modulus(&ma2) >= 1.0 - 1e-12);
    }

    #[test]
    fn aic_matches_tsa() {
        let s = TimeSeries::new(0, noise(9, 80)).unwrap();
        let m = fit(&s, ArimaOrder::new(1, 0, 1)).unwrap();
        assert_eq!(m.aic, tsa::aic(m.log_likelihood, 4));
    }

    #[test]
    fn too_short_is_rejected() {
        let s = TimeSeries::new(0, noise(2, 12)).unwrap();
        assert!(matches!(fit(&s, ArimaOrder::new(2, 1, 0)), Err(Error::TooShort { needed: 13, .. })));
    }

    #[test]
    fn overdifferenced_short_series_project_instead_of_failing() {
        for seed in [0, 23, 31, 39, 45] {
            let e = noise(seed, 22);
            let mut y = vec![500.0];
            for t in 1..22 {
                y.push(y[t - 1] + 12.0 + 8.0 * e[t]);
            }
            let m = fit(&TimeSeries::new(0, y).unwrap(), ArimaOrder::new(0, 2, 1)).unwrap();
            assert!(ma_min_root_modulus(&m.ma) >= 1.0 - 1e-9, "seed {seed}: {:?}", m.ma);
        }
    }
}
