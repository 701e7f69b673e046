//! Decoupled local models: feature propagation precompute followed by a
//! multinomial logistic regression trained with full-batch gradient descent.
//!
//! Propagation is training-free, so each client runs it once and reuses the
//! result across every round.

use ndarray::{Array1, Array2};
use rand::distributions::{Distribution, Uniform};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{normalize, SparseGraph};
use crate::seed::{rng, Purpose};

/// Feature propagation variants.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PropagationMode {
    /// k-step propagation: the operator applied k times.
    Sgc,
    /// Average of all prefix propagations 0..=k, scaled by 1/(k+1).
    S2gc,
    /// Geometric mixing: sum of beta * (1-beta)^l times the l-step result.
    Gbp,
}

impl std::str::FromStr for PropagationMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "sgc" => Ok(PropagationMode::Sgc),
            "s2gc" => Ok(PropagationMode::S2gc),
            "gbp" => Ok(PropagationMode::Gbp),
            other => Err(Error::InvalidParameter(format!(
                "unknown propagation mode '{other}' (expected sgc, s2gc or gbp)"
            ))),
        }
    }
}

/// Configuration of the propagation precompute.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PrecomputeConfig {
    pub mode: PropagationMode,
    /// Number of propagation steps k (0 leaves features untouched).
    pub steps: usize,
    /// Degree-normalization exponent r in [0, 1]; 0.5 is symmetric.
    pub kernel_coefficient: f64,
    /// Mixing weight for `Gbp`, in (0, 1).
    pub gbp_beta: f64,
}

impl Default for PrecomputeConfig {
    fn default() -> Self {
        PrecomputeConfig {
            mode: PropagationMode::Sgc,
            steps: 2,
            kernel_coefficient: 0.5,
            gbp_beta: 0.5,
        }
    }
}

impl PrecomputeConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.kernel_coefficient) {
            return Err(Error::Config(format!(
                "kernel_coefficient {} outside [0, 1]",
                self.kernel_coefficient
            )));
        }
        if self.mode == PropagationMode::Gbp && !(0.0 < self.gbp_beta && self.gbp_beta < 1.0) {
            return Err(Error::Config(format!(
                "gbp_beta {} outside (0, 1)",
                self.gbp_beta
            )));
        }
        Ok(())
    }
}

/// Runs the configured propagation over the graph's features.
///
/// All modes use the self-loop-augmented operator. The propagated matrix has
/// the same shape as the input features.
pub fn precompute_features(graph: &SparseGraph, cfg: &PrecomputeConfig) -> Result<Array2<f64>> {
    cfg.validate()?;
    if graph.num_features() == 0 {
        return Err(Error::InvalidParameter(
            "graph has no features to propagate".into(),
        ));
    }
    let adj = normalize(graph, cfg.kernel_coefficient, true)?;
    let x = graph.features();
    match cfg.mode {
        PropagationMode::Sgc => {
            let mut cur = x.clone();
            for _ in 0..cfg.steps {
                cur = adj.spmm(&cur)?;
            }
            Ok(cur)
        }
        PropagationMode::S2gc => {
            let mut cur = x.clone();
            let mut sum = x.clone();
            for _ in 0..cfg.steps {
                cur = adj.spmm(&cur)?;
                sum += &cur;
            }
            Ok(sum / (cfg.steps as f64 + 1.0))
        }
        PropagationMode::Gbp => {
            let beta = cfg.gbp_beta;
            let mut cur = x.clone();
            let mut sum = x * beta; // l = 0 term
            let mut coeff = beta;
            for _ in 0..cfg.steps {
                cur = adj.spmm(&cur)?;
                coeff *= 1.0 - beta;
                sum.scaled_add(coeff, &cur);
            }
            Ok(sum)
        }
    }
}

/// Dense parameters of the multinomial logistic regression.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearModelWeights {
    /// Shape (features, classes).
    pub weight: Array2<f64>,
    /// Shape (classes,).
    pub bias: Array1<f64>,
}

impl LinearModelWeights {
    pub fn zeros(num_features: usize, num_classes: usize) -> Self {
        LinearModelWeights {
            weight: Array2::zeros((num_features, num_classes)),
            bias: Array1::zeros(num_classes),
        }
    }

    /// Seeded uniform init on [-1/sqrt(f), 1/sqrt(f)].
    pub fn init_seeded(num_features: usize, num_classes: usize, seed: u64) -> Self {
        let bound = 1.0 / (num_features.max(1) as f64).sqrt();
        let dist = Uniform::new_inclusive(-bound, bound);
        let mut r = rng(seed, Purpose::Init, 0);
        let weight =
            Array2::from_shape_fn((num_features, num_classes), |_| dist.sample(&mut r));
        let bias = Array1::from_shape_fn(num_classes, |_| dist.sample(&mut r));
        LinearModelWeights { weight, bias }
    }

    pub fn num_features(&self) -> usize {
        self.weight.nrows()
    }

    pub fn num_classes(&self) -> usize {
        self.weight.ncols()
    }

    /// Elementwise convex-style accumulate: self += coeff * other.
    pub(crate) fn scaled_add(&mut self, coeff: f64, other: &LinearModelWeights) {
        self.weight.scaled_add(coeff, &other.weight);
        self.bias.scaled_add(coeff, &other.bias);
    }
}

/// Full-batch gradient descent settings for local training.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub local_epochs: usize,
    /// Coefficient of the 0.5 * ||params||^2 penalty.
    pub weight_decay: f64,
    /// Coefficient of the 0.5 * ||params - reference||^2 proximal penalty;
    /// zero disables it.
    pub prox_mu: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            learning_rate: 0.1,
            local_epochs: 3,
            weight_decay: 0.0,
            prox_mu: 0.0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0) {
            return Err(Error::Config(format!(
                "learning_rate {} must be positive",
                self.learning_rate
            )));
        }
        if self.local_epochs == 0 {
            return Err(Error::Config("local_epochs must be at least 1".into()));
        }
        if self.weight_decay < 0.0 || self.prox_mu < 0.0 {
            return Err(Error::Config(
                "weight_decay and prox_mu must be non-negative".into(),
            ));
        }
        Ok(())
    }
}

/// Row-wise softmax with max-shift stabilization.
///
/// Rows always sum to one (within roundoff) regardless of logit magnitude.
pub fn softmax_rows(logits: &Array2<f64>) -> Array2<f64> {
    let mut out = logits.clone();
    for mut row in out.rows_mut() {
        let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let mut sum = 0.0;
        for v in row.iter_mut() {
            *v = (*v - max).exp();
            sum += *v;
        }
        for v in row.iter_mut() {
            *v /= sum;
        }
    }
    out
}

/// Class probabilities for each feature row: softmax(X W + b).
pub fn forward(weights: &LinearModelWeights, features: &Array2<f64>) -> Result<Array2<f64>> {
    if features.ncols() != weights.num_features() {
        return Err(Error::DimensionMismatch(format!(
            "features with {} columns fed to a model expecting {}",
            features.ncols(),
            weights.num_features()
        )));
    }
    let mut logits = features.dot(&weights.weight);
    logits += &weights.bias;
    Ok(softmax_rows(&logits))
}

fn masked_rows(mask: &[bool]) -> Vec<usize> {
    mask.iter()
        .enumerate()
        .filter_map(|(i, &m)| m.then_some(i))
        .collect()
}

fn gather_rows(matrix: &Array2<f64>, rows: &[usize]) -> Array2<f64> {
    let mut out = Array2::zeros((rows.len(), matrix.ncols()));
    for (i, &r) in rows.iter().enumerate() {
        out.row_mut(i).assign(&matrix.row(r));
    }
    out
}

fn check_training_inputs(
    weights: &LinearModelWeights,
    features: &Array2<f64>,
    labels: &[i64],
    mask: &[bool],
) -> Result<Vec<usize>> {
    if features.nrows() != labels.len() || labels.len() != mask.len() {
        return Err(Error::DimensionMismatch(
            "features, labels and mask must agree on the node count".into(),
        ));
    }
    if features.ncols() != weights.num_features() {
        return Err(Error::DimensionMismatch(format!(
            "model expects {} features, got {}",
            weights.num_features(),
            features.ncols()
        )));
    }
    let rows = masked_rows(mask);
    if rows.is_empty() {
        return Err(Error::InvalidParameter("empty training set".into()));
    }
    let c = weights.num_classes();
    for &r in &rows {
        if labels[r] < 0 || labels[r] as usize >= c {
            return Err(Error::InvalidParameter(format!(
                "masked node {r} has label {} outside [0, {c})",
                labels[r]
            )));
        }
    }
    Ok(rows)
}

/// Mean cross-entropy over masked rows plus the decay and proximal penalties.
///
/// This is the exact objective whose gradient [`train_local`] descends; both
/// penalties cover the weight matrix and the bias.
pub fn total_loss(
    weights: &LinearModelWeights,
    global_ref: &LinearModelWeights,
    features: &Array2<f64>,
    labels: &[i64],
    mask: &[bool],
    cfg: &TrainConfig,
) -> Result<f64> {
    let rows = check_training_inputs(weights, features, labels, mask)?;
    let x = gather_rows(features, &rows);
    let probs = forward(weights, &x)?;
    let mut ce = 0.0;
    for (i, &r) in rows.iter().enumerate() {
        ce -= probs[[i, labels[r] as usize]].max(f64::MIN_POSITIVE).ln();
    }
    ce /= rows.len() as f64;
    let sq = |m: &LinearModelWeights| {
        m.weight.iter().map(|v| v * v).sum::<f64>() + m.bias.iter().map(|v| v * v).sum::<f64>()
    };
    let decay = 0.5 * cfg.weight_decay * sq(weights);
    let mut diff = weights.clone();
    diff.scaled_add(-1.0, global_ref);
    let prox = 0.5 * cfg.prox_mu * sq(&diff);
    Ok(ce + decay + prox)
}

/// Analytic gradient of [`total_loss`] with respect to weight and bias.
pub fn loss_gradient(
    weights: &LinearModelWeights,
    global_ref: &LinearModelWeights,
    features: &Array2<f64>,
    labels: &[i64],
    mask: &[bool],
    cfg: &TrainConfig,
) -> Result<LinearModelWeights> {
    let rows = check_training_inputs(weights, features, labels, mask)?;
    let x = gather_rows(features, &rows);
    let mut delta = forward(weights, &x)?; // P - Y, built in place
    for (i, &r) in rows.iter().enumerate() {
        delta[[i, labels[r] as usize]] -= 1.0;
    }
    let scale = 1.0 / rows.len() as f64;
    let mut grad_w = x.t().dot(&delta) * scale;
    let mut grad_b = delta.sum_axis(ndarray::Axis(0)) * scale;
    grad_w.scaled_add(cfg.weight_decay, &weights.weight);
    grad_b.scaled_add(cfg.weight_decay, &weights.bias);
    grad_w.scaled_add(cfg.prox_mu, &weights.weight);
    grad_w.scaled_add(-cfg.prox_mu, &global_ref.weight);
    grad_b.scaled_add(cfg.prox_mu, &weights.bias);
    grad_b.scaled_add(-cfg.prox_mu, &global_ref.bias);
    Ok(LinearModelWeights {
        weight: grad_w,
        bias: grad_b,
    })
}

/// A learning rate below this keeps the first descent step from increasing
/// the loss (derived from the curvature bound of the softmax objective).
pub fn stable_learning_rate_bound(features: &Array2<f64>, cfg: &TrainConfig) -> f64 {
    let max_row_sq = features
        .rows()
        .into_iter()
        .map(|r| r.iter().map(|v| v * v).sum::<f64>())
        .fold(0.0, f64::max);
    1.0 / (max_row_sq / 4.0 + cfg.weight_decay + cfg.prox_mu)
}

/// Runs `cfg.local_epochs` full-batch gradient descent steps from
/// `weights_in`, descending [`total_loss`] anchored at `global_ref`.
///
/// Unlike run-configuration validation, a zero learning rate is accepted
/// here and leaves the weights unchanged.
pub fn train_local(
    weights_in: &LinearModelWeights,
    global_ref: &LinearModelWeights,
    features: &Array2<f64>,
    labels: &[i64],
    mask: &[bool],
    cfg: &TrainConfig,
) -> Result<LinearModelWeights> {
    if cfg.learning_rate < 0.0 || cfg.weight_decay < 0.0 || cfg.prox_mu < 0.0 {
        return Err(Error::Config(
            "learning_rate, weight_decay and prox_mu must be non-negative".into(),
        ));
    }
    check_training_inputs(weights_in, features, labels, mask)?;
    let mut weights = weights_in.clone();
    for _ in 0..cfg.local_epochs {
        let grad = loss_gradient(&weights, global_ref, features, labels, mask, cfg)?;
        weights.scaled_add(-cfg.learning_rate, &grad);
    }
    Ok(weights)
}

/// Counts (correct, evaluated) argmax predictions over masked rows; ties
/// resolve to the lowest class index, and unlabeled masked rows count as
/// incorrect. An empty mask yields (0, 0).
pub fn correct_count(
    weights: &LinearModelWeights,
    features: &Array2<f64>,
    labels: &[i64],
    mask: &[bool],
) -> Result<(usize, usize)> {
    if features.nrows() != labels.len() || labels.len() != mask.len() {
        return Err(Error::DimensionMismatch(
            "features, labels and mask must agree on the node count".into(),
        ));
    }
    let rows = masked_rows(mask);
    if rows.is_empty() {
        return Ok((0, 0));
    }
    let probs = forward(weights, &gather_rows(features, &rows))?;
    let mut correct = 0usize;
    for (i, &r) in rows.iter().enumerate() {
        let row = probs.row(i);
        let mut best = 0usize;
        for (j, &p) in row.iter().enumerate() {
            if p > row[best] {
                best = j;
            }
        }
        if labels[r] >= 0 && labels[r] as usize == best {
            correct += 1;
        }
    }
    Ok((correct, rows.len()))
}

/// Accuracy of the argmax prediction over masked rows; see [`correct_count`]
/// for the tie and unlabeled-row conventions.
pub fn evaluate(
    weights: &LinearModelWeights,
    features: &Array2<f64>,
    labels: &[i64],
    mask: &[bool],
) -> Result<f64> {
    let (correct, total) = correct_count(weights, features, labels, mask)?;
    if total == 0 {
        return Err(Error::InvalidParameter("empty evaluation mask".into()));
    }
    Ok(correct as f64 / total as f64)
}
