use std::fmt;
use std::path::Path;
use std::str::FromStr;

use crate::bpnet::UpdateRule;
use crate::error::{Error, Result};

/// What to do with empty consumption cells.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum MissingPolicy {
    #[default]
    Fail,
    Linear,
    Zero,
}

impl FromStr for MissingPolicy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "fail" => Ok(MissingPolicy::Fail),
            "linear" => Ok(MissingPolicy::Linear),
            "zero" => Ok(MissingPolicy::Zero),
            other => Err(Error::InvalidArgument(format!("unknown missing policy `{other}`"))),
        }
    }
}

impl fmt::Display for MissingPolicy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            MissingPolicy::Fail => "fail",
            MissingPolicy::Linear => "linear",
            MissingPolicy::Zero => "zero",
        })
    }
}

/// Error-correction network settings.
#[derive(Debug, Clone, PartialEq)]
pub struct BpConfig {
    /// Rolling window length, i.e. the input width.
    pub input_width: usize,
    pub hidden: Vec<usize>,
    pub learning_rate: f64,
    pub max_epochs: usize,
    /// Stop once the epoch MSE (normalized scale) falls to this value.
    /// A non-finite value disables early stopping.
    pub target_mse: f64,
    pub update_rule: UpdateRule,
}

impl Default for BpConfig {
    fn default() -> Self {
        BpConfig {
            input_width: 4,
            hidden: vec![1, 3],
            learning_rate: 0.1,
            max_epochs: 5000,
            target_mse: 1e-6,
            update_rule: UpdateRule::Gradient,
        }
    }
}

impl BpConfig {
    /// `[input, hidden.., 1]`
    pub fn layer_sizes(&self) -> Vec<usize> {
        let mut sizes = vec![self.input_width];
        sizes.extend(&self.hidden);
        sizes.push(1);
        sizes
    }
}

/// Run configuration, read from a flat `key=value` file.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub train_fraction: f64,
    pub forecast_horizon_end_year: i32,
    pub gdp_growth_rate: f64,
    pub gdp_growth_start_year: i32,
    pub arima_max_p: usize,
    pub arima_max_d: usize,
    pub arima_max_q: usize,
    pub bp: BpConfig,
    pub seed: u64,
    pub missing_policy: MissingPolicy,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            train_fraction: 0.70,
            forecast_horizon_end_year: 2035,
            gdp_growth_rate: 0.04,
            gdp_growth_start_year: 2024,
            arima_max_p: 3,
            arima_max_d: 2,
            arima_max_q: 3,
            bp: BpConfig::default(),
            seed: 42,
            missing_policy: MissingPolicy::Fail,
        }
    }
}

fn parse_value<T: FromStr>(key: &str, raw: &str, line: usize) -> Result<T>
where
    T::Err: fmt::Display,
{
    raw.parse::<T>().map_err(|e| Error::Parse {
        path: "config".into(),
        row: line,
        column: key.to_string(),
        message: format!("cannot parse `{raw}`: {e}"),
    })
}

impl RunConfig {
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text)
    }

    /// Parses `key=value` lines; `#` starts a comment. Unknown keys are an error.
    pub fn parse(text: &str) -> Result<Self> {
        let mut cfg = RunConfig::default();
        for (i, raw) in text.lines().enumerate() {
            let line = i + 1;
            let content = raw.split('#').next().unwrap_or("").trim();
            if content.is_empty() {
                continue;
            }
            let (key, value) = content.split_once('=').ok_or_else(|| Error::Parse {
                path: "config".into(),
                row: line,
                column: "*".into(),
                message: format!("expected key=value, found `{content}`"),
            })?;
            let (key, value) = (key.trim(), value.trim());
            match key {
                "train_fraction" => cfg.train_fraction = parse_value(key, value, line)?,
                "forecast_horizon_end_year" => {
                    cfg.forecast_horizon_end_year = parse_value(key, value, line)?
                }
                "gdp_growth_rate" => cfg.gdp_growth_rate = parse_value(key, value, line)?,
                "gdp_growth_start_year" => cfg.gdp_growth_start_year = parse_value(key, value, line)?,
                "arima_max_p" => cfg.arima_max_p = parse_value(key, value, line)?,
                "arima_max_d" => cfg.arima_max_d = parse_value(key, value, line)?,
                "arima_max_q" => cfg.arima_max_q = parse_value(key, value, line)?,
                "bp_input_width" => cfg.bp.input_width = parse_value(key, value, line)?,
                "bp_hidden" => {
                    cfg.bp.hidden = value
                        .split(',')
                        .map(|v| parse_value(key, v.trim(), line))
                        .collect::<Result<_>>()?
                }
                "bp_learning_rate" => cfg.bp.learning_rate = parse_value(key, value, line)?,
                "bp_max_epochs" => cfg.bp.max_epochs = parse_value(key, value, line)?,
                "bp_target_mse" => cfg.bp.target_mse = parse_value(key, value, line)?,
                "bp_update_rule" => cfg.bp.update_rule = parse_value(key, value, line)?,
                "seed" => cfg.seed = parse_value(key, value, line)?,
                "missing_policy" => cfg.missing_policy = parse_value(key, value, line)?,
                other => {
                    return Err(Error::Parse {
                        path: "config".into(),
                        row: line,
                        column: other.to_string(),
                        message: "unknown key".into(),
                    })
                }
            }
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::validation("config", msg));
        if !(self.train_fraction > 0.0 && self.train_fraction < 1.0) {
            return bad(format!("train_fraction must be in (0,1), got {}", self.train_fraction));
        }
        if self.arima_max_p > 3 || self.arima_max_q > 3 || self.arima_max_d > 2 {
            return bad("ARIMA order bounds are p,q <= 3 and d <= 2".into());
        }
        if self.bp.input_width == 0 || self.bp.hidden.iter().any(|&h| h == 0) {
            return bad("network layer sizes must be at least 1".into());
        }
        if !(self.bp.learning_rate > 0.0 && self.bp.learning_rate.is_finite()) {
            return bad("bp_learning_rate must be positive".into());
        }
        if !self.gdp_growth_rate.is_finite() || self.gdp_growth_rate <= -1.0 {
            return bad("gdp_growth_rate must be finite and above -1".into());
        }
        Ok(())
    }

    /// Errors unless the horizon reaches at least `last_observed`.
    pub fn check_horizon(&self, last_observed: i32) -> Result<()> {
        if self.forecast_horizon_end_year < last_observed {
            return Err(Error::validation(
                "config",
                format!(
                    "forecast_horizon_end_year {} precedes the last observed year {last_observed}",
                    self.forecast_horizon_end_year
                ),
            ));
        }
        Ok(())
    }

    /// Canonical `key=value` rendering with every key, in fixed order.
    pub fn to_canonical_string(&self) -> String {
        let hidden: Vec<String> = self.bp.hidden.iter().map(usize::to_string).collect();
        [
            format!("train_fraction={}", self.train_fraction),
            format!("forecast_horizon_end_year={}", self.forecast_horizon_end_year),
            format!("gdp_growth_rate={}", self.gdp_growth_rate),
            format!("gdp_growth_start_year={}", self.gdp_growth_start_year),
            format!("arima_max_p={}", self.arima_max_p),
            format!("arima_max_d={}", self.arima_max_d),
            format!("arima_max_q={}", self.arima_max_q),
            format!("bp_input_width={}", self.bp.input_width),
            format!("bp_hidden={}", hidden.join(",")),
            format!("bp_learning_rate={}", self.bp.learning_rate),
            format!("bp_max_epochs={}", self.bp.max_epochs),
            format!("bp_target_mse={}", self.bp.target_mse),
            format!("bp_update_rule={}", self.bp.update_rule),
            format!("seed={}", self.seed),
            format!("missing_policy={}", self.missing_policy),
        ]
        .join("\n")
            + "\n"
    }
}
