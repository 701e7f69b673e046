//! Server-side aggregation: the sample-weighted global average baseline and
//! the personalized, confidence-weighted scheme driven by moment similarity.

use ndarray::Array2;

use crate::error::{Error, Result};
use crate::metrics::ClientReport;
use crate::model::LinearModelWeights;

/// Sample-count-weighted mean of the reported weights (the classic global
/// aggregation rule).
pub fn fedavg(reports: &[ClientReport]) -> Result<LinearModelWeights> {
    let first = reports
        .first()
        .ok_or_else(|| Error::InvalidParameter("no reports to aggregate".into()))?;
    let (f, c) = (first.weights.num_features(), first.weights.num_classes());
    let total: usize = reports.iter().map(|r| r.sample_count).sum();
    if total == 0 {
        return Err(Error::InvalidParameter(
            "all reports have zero samples".into(),
        ));
    }
    let mut out = LinearModelWeights::zeros(f, c);
    for report in reports {
        if report.weights.num_features() != f || report.weights.num_classes() != c {
            return Err(Error::DimensionMismatch(format!(
                "client {} reports weights of a different shape",
                report.client_id
            )));
        }
        out.scaled_add(report.sample_count as f64 / total as f64, &report.weights);
    }
    Ok(out)
}

/// Pairwise cosine similarity of the flattened moment fingerprints.
///
/// A zero fingerprint is uninformative: its similarity to everything
/// (itself included) is defined as 0.
pub fn moment_similarity(reports: &[ClientReport]) -> Result<Array2<f64>> {
    let n = reports.len();
    let len = reports.first().map(|r| r.moments.len()).unwrap_or(0);
    for r in reports {
        if r.moments.len() != len {
            return Err(Error::DimensionMismatch(format!(
                "client {} has a moment vector of length {}, expected {len}",
                r.client_id,
                r.moments.len()
            )));
        }
    }
    let norms: Vec<f64> = reports
        .iter()
        .map(|r| r.moments.iter().map(|v| v * v).sum::<f64>().sqrt())
        .collect();
    let mut sim = Array2::<f64>::zeros((n, n));
    for i in 0..n {
        for j in i..n {
            let value = if norms[i] == 0.0 || norms[j] == 0.0 {
                0.0
            } else if i == j {
                1.0
            } else {
                let dot: f64 = reports[i]
                    .moments
                    .iter()
                    .zip(&reports[j].moments)
                    .map(|(a, b)| a * b)
                    .sum();
                dot / (norms[i] * norms[j])
            };
            sim[[i, j]] = value;
            sim[[j, i]] = value;
        }
    }
    Ok(sim)
}

/// Who aggregates with whom, and at what weight.
#[derive(Debug, Clone)]
pub struct AggregationPlan {
    /// `sets[i]` lists the clients whose models feed client i's aggregate;
    /// always contains i, ascending order.
    pub sets: Vec<Vec<usize>>,
    /// `weights[i][m]` is the weight of `sets[i][m]`; non-negative, sums
    /// to 1.
    pub weights: Vec<Vec<f64>>,
    pub similarity: Array2<f64>,
    pub epsilon: f64,
}

impl AggregationPlan {
    pub fn num_clients(&self) -> usize {
        self.sets.len()
    }

    /// Dense 0/1 membership matrix: row i marks the members of client i's
    /// aggregation set.
    pub fn membership_matrix(&self) -> Array2<u8> {
        let n = self.num_clients();
        let mut m = Array2::<u8>::zeros((n, n));
        for (i, set) in self.sets.iter().enumerate() {
            for &j in set {
                m[[i, j]] = 1;
            }
        }
        m
    }
}

/// Builds each client's aggregation set {j != i : sim(i, j) >= epsilon} ∪ {i}
/// with member weights proportional to their confidences.
///
/// If every confidence in a set is zero the weights fall back to uniform.
pub fn build_plan(
    similarity: &Array2<f64>,
    confidences: &[f64],
    epsilon: f64,
) -> Result<AggregationPlan> {
    if epsilon.is_nan() {
        return Err(Error::InvalidParameter("epsilon is NaN".into()));
    }
    let n = confidences.len();
    if similarity.nrows() != n || similarity.ncols() != n {
        return Err(Error::DimensionMismatch(format!(
            "similarity is {}x{} for {n} confidences",
            similarity.nrows(),
            similarity.ncols()
        )));
    }
    if let Some(bad) = confidences.iter().find(|&&h| h < 0.0 || !h.is_finite()) {
        return Err(Error::InvalidParameter(format!(
            "confidence {bad} is negative or non-finite"
        )));
    }
    let mut sets = Vec::with_capacity(n);
    let mut weights = Vec::with_capacity(n);
    for i in 0..n {
        let mut set: Vec<usize> = (0..n)
            .filter(|&j| j == i || similarity[[i, j]] >= epsilon)
            .collect();
        set.sort_unstable();
        let mass: f64 = set.iter().map(|&j| confidences[j]).sum();
        let w: Vec<f64> = if mass == 0.0 {
            vec![1.0 / set.len() as f64; set.len()]
        } else {
            set.iter().map(|&j| confidences[j] / mass).collect()
        };
        sets.push(set);
        weights.push(w);
    }
    Ok(AggregationPlan {
        sets,
        weights,
        similarity: similarity.clone(),
        epsilon,
    })
}

/// Applies the plan: client i receives sum over its set of weight(j) * W_j.
///
/// A singleton set returns the member's weights bit-for-bit.
pub fn aggregate_personalized(
    plan: &AggregationPlan,
    reports: &[ClientReport],
) -> Result<Vec<LinearModelWeights>> {
    if plan.num_clients() != reports.len() {
        return Err(Error::DimensionMismatch(format!(
            "plan covers {} clients, {} reports given",
            plan.num_clients(),
            reports.len()
        )));
    }
    let mut out = Vec::with_capacity(reports.len());
    for (set, weights) in plan.sets.iter().zip(&plan.weights) {
        for &j in set {
            if j >= reports.len() {
                return Err(Error::InvalidParameter(format!(
                    "plan references client {j} with no report"
                )));
            }
        }
        if set.len() == 1 {
            // Exact self-aggregation: no arithmetic, no rounding.
            out.push(reports[set[0]].weights.clone());
            continue;
        }
        let first = &reports[set[0]].weights;
        let mut agg = LinearModelWeights::zeros(first.num_features(), first.num_classes());
        for (&j, &w) in set.iter().zip(weights) {
            if reports[j].weights.num_features() != first.num_features()
                || reports[j].weights.num_classes() != first.num_classes()
            {
                return Err(Error::DimensionMismatch(format!(
                    "client {j} reports weights of a different shape"
                )));
            }
            agg.scaled_add(w, &reports[j].weights);
        }
        out.push(agg);
    }
    Ok(out)
}
