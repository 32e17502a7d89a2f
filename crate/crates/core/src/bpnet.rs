//! Feed-forward back-propagation network with sigmoid hidden layers and a
//! linear output layer.
//!
//! Hidden units compute `H_k = g(Σ_i x_i w_ik − a_k)` and output units
//! `Q_j = Σ_k H_k w_kj − b_j`; the error is `e_j = Q̂_j − Q_j`.

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// MSE above which training is declared divergent.
pub const DIVERGENCE_MSE: f64 = 1e12;

/// How `train_step` updates the parameters.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum UpdateRule {
    /// Gradient descent on ½Σe² consistent with the subtracted-bias
    /// convention; the learning rate scales every parameter.
    #[default]
    Gradient,
    /// The original threshold rules: `b_j += e_j` without a learning
    /// rate, and `a_k += η H_k(1−H_k)(Σ_i x_i w_ik)(Σ_j e_j)`.
    Literal,
}

impl FromStr for UpdateRule {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "gradient" => Ok(UpdateRule::Gradient),
            "literal" => Ok(UpdateRule::Literal),
            other => Err(Error::InvalidArgument(format!("unknown update rule `{other}`"))),
        }
    }
}

impl fmt::Display for UpdateRule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            UpdateRule::Gradient => "gradient",
            UpdateRule::Literal => "literal",
        })
    }
}

/// Logistic function; saturates cleanly for large |x|.
pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Input and target scaling stored alongside a trained network.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Scaling {
    pub input_min: f64,
    pub input_max: f64,
    pub target_scale: f64,
}

impl Scaling {
    pub fn scale_input(&self, x: f64) -> f64 {
        let span = self.input_max - self.input_min;
        if span > 0.0 {
            (x - self.input_min) / span
        } else {
            0.0
        }
    }

    pub fn unscale_target(&self, y: f64) -> f64 {
        y * self.target_scale
    }

    pub fn scale_target(&self, y: f64) -> f64 {
        if self.target_scale > 0.0 {
            y / self.target_scale
        } else {
            0.0
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BpNetwork {
    layer_sizes: Vec<usize>,
    /// `weights[l][i * n_{l+1} + k]` connects unit `i` of layer `l` to unit `k` of layer `l+1`.
    weights: Vec<Vec<f64>>,
    /// Biases of layers `1..`, subtracted from the net input.
    biases: Vec<Vec<f64>>,
    learning_rate: f64,
    update_rule: UpdateRule,
    seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    scaling: Option<Scaling>,
}

/// Activations of every layer from one forward pass; the last entry is the output.
#[derive(Debug, Clone, PartialEq)]
pub struct Forward {
    pub activations: Vec<Vec<f64>>,
}

impl Forward {
    pub fn output(&self) -> &[f64] {
        self.activations.last().expect("at least two layers")
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TrainReport {
    /// MSE over the dataset after each epoch.
    pub history: Vec<f64>,
    pub reached_target: bool,
}

impl TrainReport {
    pub fn epochs(&self) -> usize {
        self.history.len()
    }

    pub fn final_mse(&self) -> f64 {
        self.history.last().copied().unwrap_or(f64::NAN)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub input: Vec<f64>,
    pub target: Vec<f64>,
}

fn check_sizes(layer_sizes: &[usize]) -> Result<()> {
    if layer_sizes.len() < 2 {
        return Err(Error::InvalidArgument("a network needs input and output layers".into()));
    }
    if layer_sizes.contains(&0) {
        return Err(Error::InvalidArgument(format!(
            "layer sizes must be at least 1, got {layer_sizes:?}"
        )));
    }
    Ok(())
}

impl BpNetwork {
    /// Weights uniform in [−0.5, 0.5] from the seeded generator; biases zero.
    pub fn init(layer_sizes: &[usize], learning_rate: f64, seed: u64) -> Result<Self> {
        check_sizes(layer_sizes)?;
        if !(learning_rate > 0.0 && learning_rate.is_finite()) {
            return Err(Error::InvalidArgument("learning rate must be positive".into()));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(0);
        let weights = layer_sizes
            .windows(2)
            .map(|w| (0..w[0] * w[1]).map(|_| rng.random_range(-0.5..=0.5)).collect())
            .collect();
        let biases = layer_sizes[1..].iter().map(|&n| vec![0.0; n]).collect();
        Ok(BpNetwork {
            layer_sizes: layer_sizes.to_vec(),
            weights,
            biases,
            learning_rate,
            update_rule: UpdateRule::Gradient,
            seed,
            scaling: None,
        })
    }

    /// A network whose weights and biases are all zero; it outputs 0 for any input.
    pub fn zeroed(layer_sizes: &[usize], learning_rate: f64) -> Result<Self> {
        let mut net = Self::init(layer_sizes, learning_rate, 0)?;
        net.weights.iter_mut().flatten().for_each(|w| *w = 0.0);
        Ok(net)
    }

    pub fn with_update_rule(mut self, rule: UpdateRule) -> Self {
        self.update_rule = rule;
        self
    }

    pub fn layer_sizes(&self) -> &[usize] {
        &self.layer_sizes
    }

    pub fn weights(&self) -> &[Vec<f64>] {
        &self.weights
    }

    pub fn biases(&self) -> &[Vec<f64>] {
        &self.biases
    }

    pub fn weights_mut(&mut self) -> &mut [Vec<f64>] {
        &mut self.weights
    }

    pub fn biases_mut(&mut self) -> &mut [Vec<f64>] {
        &mut self.biases
    }

    pub fn learning_rate(&self) -> f64 {
        self.learning_rate
    }

    pub fn update_rule(&self) -> UpdateRule {
        self.update_rule
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn scaling(&self) -> Option<&Scaling> {
        self.scaling.as_ref()
    }

    pub fn set_scaling(&mut self, scaling: Scaling) {
        self.scaling = Some(scaling);
    }

    /// True when every parameter is exactly zero.
    pub fn is_zero(&self) -> bool {
        self.weights.iter().chain(&self.biases).flatten().all(|v| *v == 0.0)
    }

    pub fn forward(&self, x: &[f64]) -> Result<Forward> {
        if x.len() != self.layer_sizes[0] {
            return Err(Error::InvalidArgument(format!(
                "expected {} inputs, got {}",
                self.layer_sizes[0],
                x.len()
            )));
        }
        let last = self.weights.len() - 1;
        let mut activations = vec![x.to_vec()];
        for (l, w) in self.weights.iter().enumerate() {
            let input = &activations[l];
            let n_out = self.layer_sizes[l + 1];
            let out: Vec<f64> = (0..n_out)
                .map(|k| {
                    let net = input
                        .iter()
                        .enumerate()
                        .map(|(i, xi)| xi * w[i * n_out + k])
                        .sum::<f64>()
                        - self.biases[l][k];
                    if l == last {
                        net
                    } else {
                        sigmoid(net)
                    }
                })
                .collect();
            activations.push(out);
        }
        Ok(Forward { activations })
    }

    pub fn predict(&self, x: &[f64]) -> Result<Vec<f64>> {
        Ok(self.forward(x)?.output().to_vec())
    }

    /// One stochastic update on a single sample; returns the pre-update error.
    pub fn train_step(&mut self, x: &[f64], target: &[f64]) -> Result<Vec<f64>> {
        let n_out = *self.layer_sizes.last().expect("checked");
        if target.len() != n_out {
            return Err(Error::InvalidArgument(format!(
                "expected {n_out} targets, got {}",
                target.len()
            )));
        }
        let fwd = self.forward(x)?;
        let e: Vec<f64> = target.iter().zip(fwd.output()).map(|(t, q)| t - q).collect();
        if e.iter().any(|v| !v.is_finite()) {
            return Err(Error::Divergence {
                epoch: 0,
                mse: f64::NAN,
                history: Vec::new(),
            });
        }
        let eta = self.learning_rate;
        let n_layers = self.weights.len();
        // delta[l] = −∂(½Σe²)/∂(net input of layer l+1)
        let mut deltas: Vec<Vec<f64>> = vec![Vec::new(); n_layers];
        deltas[n_layers - 1] = e.clone();
        for l in (0..n_layers - 1).rev() {
            let h = &fwd.activations[l + 1];
            let n_next = self.layer_sizes[l + 2];
            let w = &self.weights[l + 1];
            deltas[l] = h
                .iter()
                .enumerate()
                .map(|(k, hk)| {
                    let back: f64 = (0..n_next).map(|j| w[k * n_next + j] * deltas[l + 1][j]).sum();
                    hk * (1.0 - hk) * back
                })
                .collect();
        }
        let literal_bias_terms: Vec<f64> = if self.update_rule == UpdateRule::Literal {
            // Σ_i x_i w_ik of each hidden unit times Σ_j of the downstream deltas
            (0..n_layers - 1)
                .flat_map(|l| {
                    let input = &fwd.activations[l];
                    let n = self.layer_sizes[l + 1];
                    let w = &self.weights[l];
                    let down: f64 = deltas[l + 1].iter().sum();
                    (0..n)
                        .map(|k| {
                            let s: f64 = input.iter().enumerate().map(|(i, xi)| xi * w[i * n + k]).sum();
                            let h = fwd.activations[l + 1][k];
                            h * (1.0 - h) * s * down
                        })
                        .collect::<Vec<_>>()
                })
                .collect()
        } else {
            Vec::new()
        };
        let mut lit = literal_bias_terms.iter();
        for l in 0..n_layers {
            let input = &fwd.activations[l];
            let n = self.layer_sizes[l + 1];
            let w = &mut self.weights[l];
            for (i, xi) in input.iter().enumerate() {
                for k in 0..n {
                    w[i * n + k] += eta * xi * deltas[l][k];
                }
            }
            let output_layer = l == n_layers - 1;
            for k in 0..n {
                match (self.update_rule, output_layer) {
                    (UpdateRule::Gradient, _) => self.biases[l][k] -= eta * deltas[l][k],
                    (UpdateRule::Literal, true) => self.biases[l][k] += deltas[l][k],
                    (UpdateRule::Literal, false) => {
                        self.biases[l][k] += eta * lit.next().expect("one term per hidden unit")
                    }
                }
            }
        }
        Ok(e)
    }

    /// Mean squared error over a dataset.
    pub fn dataset_mse(&self, data: &[Sample]) -> Result<f64> {
        let mut ss = 0.0;
        let mut count = 0usize;
        for s in data {
            let q = self.predict(&s.input)?;
            for (t, y) in s.target.iter().zip(&q) {
                ss += (t - y).powi(2);
                count += 1;
            }
        }
        Ok(ss / count as f64)
    }

    /// Epoch-wise shuffled training. A non-finite `target_mse` disables
    /// early stopping.
    pub fn train(&mut self, data: &[Sample], max_epochs: usize, target_mse: f64) -> Result<TrainReport> {
        if data.is_empty() {
            return Err(Error::InvalidArgument("training set is empty".into()));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(1);
        let mut order: Vec<usize> = (0..data.len()).collect();
        let mut history = Vec::with_capacity(max_epochs.min(100_000));
        for epoch in 1..=max_epochs {
            order.shuffle(&mut rng);
            for &i in &order {
                if let Err(Error::Divergence { .. }) = self.train_step(&data[i].input, &data[i].target) {
                    return Err(Error::Divergence { epoch, mse: f64::NAN, history });
                }
            }
            let mse = self.dataset_mse(data)?;
            history.push(mse);
            if !mse.is_finite() || mse > DIVERGENCE_MSE {
                return Err(Error::Divergence { epoch, mse, history });
            }
            if target_mse.is_finite() && mse <= target_mse {
                return Ok(TrainReport { history, reached_target: true });
            }
        }
        Ok(TrainReport { history, reached_target: false })
    }

    pub fn to_json(&self) -> Result<String> {
        serde_json::to_string_pretty(self).map_err(|e| Error::InvalidArgument(e.to_string()))
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let net: BpNetwork =
            serde_json::from_str(text).map_err(|e| Error::InvalidArgument(format!("bad checkpoint: {e}")))?;
        check_sizes(&net.layer_sizes)?;
        let shapes_ok = net.weights.len() == net.layer_sizes.len() - 1
            && net.biases.len() == net.weights.len()
            && net
                .layer_sizes
                .windows(2)
                .enumerate()
                .all(|(l, w)| net.weights[l].len() == w[0] * w[1] && net.biases[l].len() == w[1]);
        if !shapes_ok {
            return Err(Error::InvalidArgument("checkpoint shapes do not match layer sizes".into()));
        }
        Ok(net)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_json()?).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        Self::from_json(&std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?)
    }
}

/// Goodness-of-fit summary.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MetricReport {
    pub mse: f64,
    pub rmse: f64,
    pub mae: f64,
    /// Percent.
    pub mape: f64,
    #[serde(serialize_with = "finite_or_null")]
    pub r2: f64,
    /// Points left out of MAPE because the truth was zero.
    pub mape_skipped: usize,
}

fn finite_or_null<S: serde::Serializer>(v: &f64, s: S) -> std::result::Result<S::Ok, S::Error> {
    if v.is_finite() {
        s.serialize_f64(*v)
    } else {
        s.serialize_none()
    }
}

/// MSE, RMSE, MAE, MAPE and R² of predictions against truths.
///
/// `mse` is stored as `rmse²` so the two agree exactly. When the truths
/// have no variance, R² is 1 for a perfect fit and −∞ otherwise.
pub fn evaluate(predictions: &[f64], truths: &[f64]) -> Result<MetricReport> {
    if predictions.len() != truths.len() || truths.is_empty() {
        return Err(Error::InvalidArgument(format!(
            "need equal non-zero lengths, got {} predictions and {} truths",
            predictions.len(),
            truths.len()
        )));
    }
    let n = truths.len() as f64;
    let ss_res: f64 = predictions.iter().zip(truths).map(|(p, t)| (t - p).powi(2)).sum();
    let mae = predictions.iter().zip(truths).map(|(p, t)| (t - p).abs()).sum::<f64>() / n;
    let mut ape = 0.0;
    let mut used = 0usize;
    for (p, t) in predictions.iter().zip(truths) {
        if *t != 0.0 {
            ape += ((t - p) / t).abs();
            used += 1;
        }
    }
    if used == 0 {
        return Err(Error::InvalidArgument("MAPE is undefined when every truth is zero".into()));
    }
    let mean = truths.iter().sum::<f64>() / n;
    let ss_tot: f64 = truths.iter().map(|t| (t - mean).powi(2)).sum();
    let r2 = if ss_tot > 0.0 {
        1.0 - ss_res / ss_tot
    } else if ss_res == 0.0 {
        1.0
    } else {
        f64::NEG_INFINITY
    };
    let rmse = (ss_res / n).sqrt();
    Ok(MetricReport {
        mse: rmse * rmse,
        rmse,
        mae,
        mape: 100.0 * ape / used as f64,
        r2,
        mape_skipped: truths.len() - used,
    })
}
