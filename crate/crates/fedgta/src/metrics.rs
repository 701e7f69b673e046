//! Client-side upload metrics: parameter-free label propagation over local
//! predictions, a degree-weighted smoothing confidence, and per-step
//! per-order central moments of the propagated soft labels.
//!
//! Together these form the topology-aware fingerprint a client uploads next
//! to its model weights.

use ndarray::Array2;

use crate::error::{Error, Result};
use crate::graph::{normalize, SparseGraph};
use crate::model::LinearModelWeights;

/// The propagated soft-label matrices Y^0 ... Y^k of one client.
#[derive(Debug, Clone)]
pub struct SoftLabelSequence {
    steps: Vec<Array2<f64>>,
    alpha: f64,
    k: usize,
}

impl SoftLabelSequence {
    /// All k+1 matrices, index 0 being the unpropagated input.
    pub fn steps(&self) -> &[Array2<f64>] {
        &self.steps
    }

    pub fn final_step(&self) -> &Array2<f64> {
        self.steps.last().expect("sequence always holds step 0")
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn num_nodes(&self) -> usize {
        self.steps[0].nrows()
    }

    pub fn num_classes(&self) -> usize {
        self.steps[0].ncols()
    }
}

/// Per-entry ceiling of the confidence term: e^-1.
pub fn confidence_ceiling() -> f64 {
    (-1.0f64).exp()
}

/// Label propagation: step s = alpha * Y^0 + (1 - alpha) * S * Y^(s-1) with
/// S the symmetrically normalized self-loop-augmented adjacency.
///
/// The self-loop is included in the neighbor sum (not only in the degrees),
/// so a loop-only graph propagates to itself exactly. On irregular graphs the
/// operator's rows do not sum to exactly 1, so step rows of a stochastic
/// input stay near — but not precisely at — unit sum.
pub fn nonparam_lp(
    graph: &SparseGraph,
    initial_soft_labels: &Array2<f64>,
    alpha: f64,
    k: usize,
) -> Result<SoftLabelSequence> {
    if !(0.0..=1.0).contains(&alpha) {
        return Err(Error::InvalidParameter(format!(
            "alpha {alpha} outside [0, 1]"
        )));
    }
    let n = graph.num_nodes();
    if initial_soft_labels.nrows() != n {
        return Err(Error::DimensionMismatch(format!(
            "soft labels have {} rows for a graph of {n} nodes",
            initial_soft_labels.nrows()
        )));
    }
    if initial_soft_labels.ncols() == 0 {
        return Err(Error::InvalidParameter("soft labels need ≥ 1 class".into()));
    }
    for (i, row) in initial_soft_labels.rows().into_iter().enumerate() {
        let mut sum = 0.0;
        for &p in row.iter() {
            if p < 0.0 {
                return Err(Error::InvalidParameter(format!(
                    "negative probability {p} in initial row {i}"
                )));
            }
            sum += p;
        }
        if (sum - 1.0).abs() > 1e-6 {
            return Err(Error::InvalidParameter(format!(
                "initial row {i} sums to {sum}, not a probability vector"
            )));
        }
    }
    let adj = normalize(graph, 0.5, true)?;
    let mut steps = Vec::with_capacity(k + 1);
    steps.push(initial_soft_labels.clone());
    for _ in 0..k {
        let propagated = adj.spmm(steps.last().unwrap())?;
        let mut next = initial_soft_labels * alpha;
        next.scaled_add(1.0 - alpha, &propagated);
        steps.push(next);
    }
    Ok(SoftLabelSequence { steps, alpha, k })
}

/// One confidence summand: e^-1 minus the entropy term -p ln p, with
/// 0 ln 0 := 0 and probabilities clamped to ≥ 1e-300 before the log.
///
/// For p in [0, 1] the result lies in [0, e^-1], hitting e^-1 exactly at
/// p in {0, 1} and 0 at p = 1/e.
pub fn confidence_term(p: f64) -> Result<f64> {
    if p < 0.0 {
        return Err(Error::InvalidParameter(format!(
            "negative probability entry {p}"
        )));
    }
    let entropy = if p == 0.0 { 0.0 } else { -p * p.max(1e-300).ln() };
    let term = confidence_ceiling() - entropy;
    debug_assert!(
        p > 1.0 || (-1e-12..=confidence_ceiling() + 1e-12).contains(&term),
        "confidence term {term} escaped [0, 1/e] for probability {p}"
    );
    Ok(term)
}

/// Degree-weighted smoothing confidence of the final propagated step:
/// H = sum_i d_i * sum_j (e^-1 - (-Y_ij ln Y_ij)).
///
/// Callers pass the same degrees the propagation used (self-loop included).
pub fn smoothing_confidence(seq: &SoftLabelSequence, degrees: &[f64]) -> Result<f64> {
    let last = seq.final_step();
    if degrees.len() != last.nrows() {
        return Err(Error::DimensionMismatch(format!(
            "{} degrees for {} nodes",
            degrees.len(),
            last.nrows()
        )));
    }
    let mut h = 0.0;
    for (row, &d) in last.rows().into_iter().zip(degrees) {
        let mut row_sum = 0.0;
        for &p in row.iter() {
            row_sum += confidence_term(p)?;
        }
        h += d * row_sum;
    }
    Ok(h)
}

/// Sums values in a node-order-independent way so that relabeling nodes can
/// never change the result, not even in the last bit.
fn permutation_stable_mean(values: &mut [f64]) -> f64 {
    values.sort_unstable_by(f64::total_cmp);
    values.iter().sum::<f64>() / values.len() as f64
}

/// Central moments of the propagated steps: for step s in 1..=k and order
/// o in 1..=K, the node-mean of (y_i - mu_i)^o per class, where mu_i is the
/// node's scalar mean over classes. Flattened step-major, then order, with
/// classes last; length k*K*c.
pub fn mixed_moments(seq: &SoftLabelSequence, moment_order: usize) -> Result<Vec<f64>> {
    if moment_order < 1 {
        return Err(Error::InvalidParameter("moment order K must be ≥ 1".into()));
    }
    if seq.k() < 1 {
        return Err(Error::InvalidParameter(
            "sequence has no propagated steps (k ≥ 1 required)".into(),
        ));
    }
    let n = seq.num_nodes();
    let c = seq.num_classes();
    let mut out = Vec::with_capacity(seq.k() * moment_order * c);
    let mut column = vec![0.0; n];
    for step in &seq.steps()[1..] {
        // Per-node deviation from the node's own mean over classes.
        let mut dev = step.clone();
        for mut row in dev.rows_mut() {
            let mu = row.sum() / c as f64;
            row.mapv_inplace(|v| v - mu);
        }
        for order in 1..=moment_order {
            for class in 0..c {
                for (slot, &d) in column.iter_mut().zip(dev.column(class).iter()) {
                    *slot = d.powi(order as i32);
                }
                out.push(permutation_stable_mean(&mut column));
            }
        }
    }
    Ok(out)
}

/// What a client uploads after local training: its weights plus the
/// topology-aware statistics the server aggregates by.
#[derive(Debug, Clone)]
pub struct ClientReport {
    pub client_id: usize,
    pub weights: LinearModelWeights,
    /// Number of train-masked nodes, the FedAvg weighting mass.
    pub sample_count: usize,
    /// Smoothing confidence H ≥ 0.
    pub confidence: f64,
    /// Flattened moment fingerprint, length k*K*c.
    pub moments: Vec<f64>,
}

/// Metric hyperparameters for report construction.
#[derive(Debug, Clone, Copy)]
pub struct ReportConfig {
    pub lp_alpha: f64,
    pub lp_steps: usize,
    pub moment_order: usize,
}

/// Runs the full client-side metric pipeline over `predictions` (the local
/// model's softmax outputs on the client subgraph).
pub fn build_report(
    client_id: usize,
    weights: &LinearModelWeights,
    graph: &SparseGraph,
    predictions: &Array2<f64>,
    cfg: &ReportConfig,
) -> Result<ClientReport> {
    let seq = nonparam_lp(graph, predictions, cfg.lp_alpha, cfg.lp_steps)?;
    let degrees: Vec<f64> = (0..graph.num_nodes())
        .map(|v| graph.degree(v) as f64 + 1.0)
        .collect();
    let confidence = smoothing_confidence(&seq, &degrees)?;
    let moments = mixed_moments(&seq, cfg.moment_order)?;
    let sample_count = graph.train_mask().iter().filter(|&&m| m).count();
    if sample_count == 0 {
        return Err(Error::InvalidParameter(
            "client has no train-masked nodes".into(),
        ));
    }
    Ok(ClientReport {
        client_id,
        weights: weights.clone(),
        sample_count,
        confidence,
        moments,
    })
}
