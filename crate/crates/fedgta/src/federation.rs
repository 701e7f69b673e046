//! The federation driver: per-round client sampling, local training, report
//! collection, server-side aggregation, broadcast, and evaluation.

use std::fmt;
use std::str::FromStr;
use std::time::Instant;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::aggregation::{
    aggregate_personalized, build_plan, fedavg, moment_similarity, AggregationPlan,
};
use crate::error::{Error, Result};
use crate::metrics::{build_report, ClientReport, ReportConfig};
use crate::model::{
    correct_count, forward, precompute_features, train_local, LinearModelWeights,
    PrecomputeConfig, TrainConfig,
};
use crate::partition::PartitionAssignment;
use crate::seed::{rng, Purpose};

/// Server-side aggregation strategy.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Strategy {
    /// Sample-count-weighted averaging into one global model.
    Fedavg,
    /// Fedavg plus a proximal pull toward the received model during local
    /// training.
    Fedprox,
    /// Topology-aware personalized aggregation from moment similarity and
    /// smoothing confidence.
    Fedgta,
}

impl fmt::Display for Strategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let name = match self {
            Strategy::Fedavg => "fedavg",
            Strategy::Fedprox => "fedprox",
            Strategy::Fedgta => "fedgta",
        };
        f.write_str(name)
    }
}

impl FromStr for Strategy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "fedavg" => Ok(Strategy::Fedavg),
            "fedprox" => Ok(Strategy::Fedprox),
            "fedgta" => Ok(Strategy::Fedgta),
            other => Err(Error::Config(format!(
                "unknown strategy {other:?} (expected fedavg, fedprox or fedgta)"
            ))),
        }
    }
}

/// Optimizer settings shared by every local update; the epoch count lives at
/// the top level of [`FederationConfig`].
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainSettings {
    pub learning_rate: f64,
    pub weight_decay: f64,
    /// Proximal coefficient; applied only under [`Strategy::Fedprox`].
    pub prox_mu: f64,
}

impl Default for TrainSettings {
    fn default() -> Self {
        TrainSettings {
            learning_rate: 0.1,
            weight_decay: 0.0,
            prox_mu: 0.0,
        }
    }
}

/// Everything a federation run depends on besides the partition itself.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FederationConfig {
    /// Communication rounds T.
    pub rounds: usize,
    /// Gradient steps per sampled client per round.
    pub local_epochs: usize,
    /// Fraction of clients sampled each round, in (0, 1].
    pub participation_fraction: f64,
    pub strategy: Strategy,
    /// Label-propagation mixing weight.
    pub lp_alpha: f64,
    /// Label-propagation steps k.
    pub lp_steps: usize,
    /// Highest central moment order K.
    pub moment_order: usize,
    /// Moment-similarity threshold for aggregation sets.
    pub epsilon: f64,
    /// Keep non-sampled clients' last reports on the server so they can join
    /// other clients' aggregation sets. Off by default: only the round's
    /// participants aggregate.
    pub stale_reports: bool,
    pub seed: u64,
    pub train: TrainSettings,
    pub precompute: PrecomputeConfig,
}

impl Default for FederationConfig {
    fn default() -> Self {
        FederationConfig {
            rounds: 100,
            local_epochs: 3,
            participation_fraction: 1.0,
            strategy: Strategy::Fedgta,
            lp_alpha: 0.5,
            lp_steps: 5,
            moment_order: 5,
            epsilon: 0.5,
            stale_reports: false,
            seed: 42,
            train: TrainSettings::default(),
            precompute: PrecomputeConfig::default(),
        }
    }
}

impl FederationConfig {
    pub fn validate(&self) -> Result<()> {
        if self.rounds == 0 {
            return Err(Error::Config("rounds must be at least 1".into()));
        }
        if !(self.participation_fraction > 0.0 && self.participation_fraction <= 1.0) {
            return Err(Error::Config(format!(
                "participation_fraction must lie in (0, 1], got {}",
                self.participation_fraction
            )));
        }
        if !(0.0..=1.0).contains(&self.lp_alpha) {
            return Err(Error::Config(format!(
                "lp_alpha must lie in [0, 1], got {}",
                self.lp_alpha
            )));
        }
        if self.lp_steps == 0 {
            return Err(Error::Config("lp_steps must be at least 1".into()));
        }
        if self.moment_order == 0 {
            return Err(Error::Config("moment_order must be at least 1".into()));
        }
        if self.epsilon.is_nan() {
            return Err(Error::Config("epsilon must not be NaN".into()));
        }
        self.effective_train_config().validate()?;
        self.precompute.validate()
    }

    /// The per-client optimizer settings; the proximal term is active only
    /// under fedprox (with mu 0 fedprox coincides with fedavg by definition).
    pub fn effective_train_config(&self) -> TrainConfig {
        TrainConfig {
            learning_rate: self.train.learning_rate,
            local_epochs: self.local_epochs,
            weight_decay: self.train.weight_decay,
            prox_mu: match self.strategy {
                Strategy::Fedprox => self.train.prox_mu,
                _ => 0.0,
            },
        }
    }
}

/// One communication round's outcome. Wall-clock fields are informational
/// and excluded from serialized outputs to keep them run-to-run identical.
#[derive(Debug, Clone)]
pub struct RoundRecord {
    /// 1-based round index.
    pub round: usize,
    /// Sorted ids of the clients that trained this round.
    pub participants: Vec<usize>,
    /// Per-client local test accuracy under each client's current model;
    /// NaN for clients without test nodes.
    pub local_accuracy: Vec<f64>,
    /// Micro-averaged test accuracy across all clients.
    pub global_accuracy: f64,
    pub client_seconds: f64,
    pub server_seconds: f64,
}

/// A finished federation run.
#[derive(Debug, Clone)]
pub struct FederationRun {
    pub records: Vec<RoundRecord>,
    /// Each client's model after the final round.
    pub client_weights: Vec<LinearModelWeights>,
    /// The last personalized-aggregation plan, if the strategy produced one,
    /// together with the client ids its rows refer to.
    pub final_plan: Option<(AggregationPlan, Vec<usize>)>,
}

/// Draws ceil(fraction * num_clients) distinct client ids, sorted ascending,
/// deterministically in (seed, round).
pub fn sample_clients(
    num_clients: usize,
    fraction: f64,
    round: usize,
    seed: u64,
) -> Result<Vec<usize>> {
    sample_clients_attempt(num_clients, fraction, round, seed, 0)
}

fn sample_clients_attempt(
    num_clients: usize,
    fraction: f64,
    round: usize,
    seed: u64,
    attempt: u64,
) -> Result<Vec<usize>> {
    if num_clients == 0 {
        return Err(Error::InvalidParameter("no clients to sample".into()));
    }
    if !(fraction > 0.0 && fraction <= 1.0) {
        return Err(Error::InvalidParameter(format!(
            "participation fraction must lie in (0, 1], got {fraction}"
        )));
    }
    let count = ((fraction * num_clients as f64).ceil() as usize).clamp(1, num_clients);
    if count == num_clients {
        return Ok((0..num_clients).collect());
    }
    let counter = (attempt << 32) | round as u64;
    let mut r = rng(seed, Purpose::Sampling, counter);
    let mut ids = rand::seq::index::sample(&mut r, num_clients, count).into_vec();
    ids.sort_unstable();
    Ok(ids)
}

/// Micro-averaged test accuracy: total correct test predictions over total
/// test nodes, each client evaluated with its own model.
pub fn global_test_accuracy(
    weights: &[LinearModelWeights],
    features: &[Array2<f64>],
    partition: &PartitionAssignment,
) -> Result<f64> {
    if weights.len() != partition.num_clients() || features.len() != partition.num_clients() {
        return Err(Error::DimensionMismatch(format!(
            "{} weight sets and {} feature sets for {} clients",
            weights.len(),
            features.len(),
            partition.num_clients()
        )));
    }
    let mut correct = 0usize;
    let mut total = 0usize;
    for i in 0..partition.num_clients() {
        let g = partition.subgraph(i);
        let (c, t) = correct_count(&weights[i], &features[i], g.labels(), g.test_mask())?;
        correct += c;
        total += t;
    }
    if total == 0 {
        return Err(Error::InvalidParameter(
            "no client has test-masked nodes".into(),
        ));
    }
    Ok(correct as f64 / total as f64)
}

fn train_node_count(partition: &PartitionAssignment, client: usize) -> usize {
    partition
        .subgraph(client)
        .train_mask()
        .iter()
        .filter(|&&m| m)
        .count()
}

/// Runs the full federation loop and returns per-round records plus the
/// final per-client models.
///
/// Per-client feature propagation runs once up front (it is independent of
/// training). Each round samples clients, trains them locally from their
/// current model, aggregates on the server, and evaluates every client.
/// Clients without train-masked nodes never train; a draw that contains no
/// trainable client is re-sampled. Under fedgta only the round's
/// participants receive new weights; under fedavg/fedprox the single global
/// model is broadcast to every client. The run is deterministic in
/// (partition, config).
pub fn run_federation(
    partition: &PartitionAssignment,
    cfg: &FederationConfig,
) -> Result<FederationRun> {
    cfg.validate()?;
    let n = partition.num_clients();
    let mut features = Vec::with_capacity(n);
    for g in partition.subgraphs() {
        features.push(precompute_features(g, &cfg.precompute)?);
    }
    let trainable: Vec<bool> = (0..n).map(|i| train_node_count(partition, i) > 0).collect();
    if !trainable.iter().any(|&t| t) {
        return Err(Error::InvalidParameter(
            "no client has train-masked nodes".into(),
        ));
    }
    let g0 = partition.subgraph(0);
    let init = LinearModelWeights::init_seeded(g0.num_features(), g0.num_classes(), cfg.seed);
    let mut client_weights = vec![init; n];
    let train_cfg = cfg.effective_train_config();
    let report_cfg = ReportConfig {
        lp_alpha: cfg.lp_alpha,
        lp_steps: cfg.lp_steps,
        moment_order: cfg.moment_order,
    };
    let mut stored_reports: Vec<Option<ClientReport>> = vec![None; n];
    let mut records = Vec::with_capacity(cfg.rounds);
    let mut final_plan = None;
    for round in 1..=cfg.rounds {
        let mut participants = Vec::new();
        for attempt in 0..64u64 {
            let drawn =
                sample_clients_attempt(n, cfg.participation_fraction, round, cfg.seed, attempt)?;
            participants = drawn.into_iter().filter(|&i| trainable[i]).collect();
            if !participants.is_empty() {
                break;
            }
        }
        if participants.is_empty() {
            return Err(Error::InvalidParameter(format!(
                "round {round} could not sample any trainable client"
            )));
        }

        let client_start = Instant::now();
        let mut reports = Vec::with_capacity(participants.len());
        for &i in &participants {
            let g = partition.subgraph(i);
            let received = client_weights[i].clone();
            let trained = train_local(
                &received,
                &received,
                &features[i],
                g.labels(),
                g.train_mask(),
                &train_cfg,
            )?;
            let report = if cfg.strategy == Strategy::Fedgta {
                let predictions = forward(&trained, &features[i])?;
                build_report(i, &trained, g, &predictions, &report_cfg)?
            } else {
                ClientReport {
                    client_id: i,
                    weights: trained.clone(),
                    sample_count: train_node_count(partition, i),
                    confidence: 0.0,
                    moments: Vec::new(),
                }
            };
            client_weights[i] = trained;
            reports.push(report);
        }
        let client_seconds = client_start.elapsed().as_secs_f64();

        let server_start = Instant::now();
        match cfg.strategy {
            Strategy::Fedavg | Strategy::Fedprox => {
                let global = fedavg(&reports)?;
                for w in client_weights.iter_mut() {
                    *w = global.clone();
                }
            }
            Strategy::Fedgta => {
                for report in &reports {
                    stored_reports[report.client_id] = Some(report.clone());
                }
                let pool: Vec<ClientReport> = if cfg.stale_reports {
                    stored_reports.iter().flatten().cloned().collect()
                } else {
                    reports.clone()
                };
                let similarity = moment_similarity(&pool)?;
                let confidences: Vec<f64> = pool.iter().map(|r| r.confidence).collect();
                let plan = build_plan(&similarity, &confidences, cfg.epsilon)?;
                let aggregated = aggregate_personalized(&plan, &pool)?;
                let pool_ids: Vec<usize> = pool.iter().map(|r| r.client_id).collect();
                for (slot, new_weights) in aggregated.into_iter().enumerate() {
                    let id = pool_ids[slot];
                    if participants.contains(&id) {
                        client_weights[id] = new_weights;
                    }
                }
                final_plan = Some((plan, pool_ids));
            }
        }

        let mut local_accuracy = Vec::with_capacity(n);
        let mut correct = 0usize;
        let mut total = 0usize;
        for i in 0..n {
            let g = partition.subgraph(i);
            let (c, t) = correct_count(&client_weights[i], &features[i], g.labels(), g.test_mask())?;
            correct += c;
            total += t;
            local_accuracy.push(if t == 0 { f64::NAN } else { c as f64 / t as f64 });
        }
        if total == 0 {
            return Err(Error::InvalidParameter(
                "no client has test-masked nodes".into(),
            ));
        }
        let server_seconds = server_start.elapsed().as_secs_f64();
        records.push(RoundRecord {
            round,
            participants,
            local_accuracy,
            global_accuracy: correct as f64 / total as f64,
            client_seconds,
            server_seconds,
        });
    }
    Ok(FederationRun {
        records,
        client_weights,
        final_plan,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{build_graph_with_classes, Masks, SparseGraph};
    use crate::partition::PartitionAssignment;
    use ndarray::array;

    /// Two 4-node blobs (classes 0/1) joined by one edge; every node gets
    /// distinctive features so training makes progress.
    fn toy_graph() -> SparseGraph {
        let edges = [(0, 1), (1, 2), (2, 3), (4, 5), (5, 6), (6, 7), (3, 4)];
        let mut features = ndarray::Array2::zeros((8, 2));
        for v in 0..8 {
            features[[v, usize::from(v >= 4)]] = 1.0;
            features[[v, usize::from(v < 4)]] = 0.1 * v as f64;
        }
        let labels = vec![0, 0, 0, 0, 1, 1, 1, 1];
        let masks = Masks {
            train: vec![true, false, true, false, true, false, true, false],
            val: vec![false; 8],
            test: vec![false, true, false, true, false, true, false, true],
        };
        build_graph_with_classes(&edges, features, labels, masks, 2).unwrap()
    }

    fn toy_partition() -> PartitionAssignment {
        let g = toy_graph();
        PartitionAssignment::from_assignment(&g, vec![0, 0, 0, 0, 1, 1, 1, 1], 2).unwrap()
    }

    fn fast_cfg(strategy: Strategy) -> FederationConfig {
        FederationConfig {
            rounds: 3,
            local_epochs: 2,
            strategy,
            train: TrainSettings {
                learning_rate: 0.05,
                ..TrainSettings::default()
            },
            ..FederationConfig::default()
        }
    }

    #[test]
    fn sampling_full_fraction_returns_everyone() {
        assert_eq!(sample_clients(4, 1.0, 7, 3).unwrap(), vec![0, 1, 2, 3]);
    }

    #[test]
    fn sampling_counts_and_determinism() {
        let a = sample_clients(10, 0.5, 3, 11).unwrap();
        let b = sample_clients(10, 0.5, 3, 11).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.len(), 5);
        let mut dedup = a.clone();
        dedup.dedup();
        assert_eq!(dedup.len(), 5);
        assert!(a.iter().all(|&i| i < 10));
        assert_eq!(sample_clients(10, 0.5, 4, 11).unwrap().len(), 5);
    }

    #[test]
    fn sampling_rejects_bad_fraction() {
        assert!(sample_clients(4, 0.0, 1, 0).is_err());
        assert!(sample_clients(4, 1.5, 1, 0).is_err());
    }

    #[test]
    fn micro_average_weighs_by_test_count() {
        let g = toy_graph();
        let p = PartitionAssignment::from_assignment(&g, vec![0, 0, 0, 0, 1, 1, 1, 1], 2).unwrap();
        // Predict class 1 whenever the second feature column is positive.
        // Client 0's test nodes (labels 0) have column-1 values 0.1 and 0.3,
        // so both are wrong; client 1's (labels 1) have 1.0, so both are
        // right: micro-average 2/4.
        let toward_one = LinearModelWeights {
            weight: array![[0.0, 0.0], [-4.0, 4.0]],
            bias: array![0.0, 0.0],
        };
        let features: Vec<_> = (0..2).map(|i| p.subgraph(i).features().clone()).collect();
        let acc = global_test_accuracy(&[toward_one.clone(), toward_one], &features, &p).unwrap();
        assert!((acc - 0.5).abs() < 1e-12);
    }

    #[test]
    fn single_client_run_matches_centralized_training() {
        let g = toy_graph();
        let p = PartitionAssignment::from_assignment(&g, vec![0; 8], 1).unwrap();
        for strategy in [Strategy::Fedavg, Strategy::Fedprox, Strategy::Fedgta] {
            let cfg = fast_cfg(strategy);
            let run = run_federation(&p, &cfg).unwrap();
            // Centralized reference: same init, rounds * epochs plain steps.
            let features = precompute_features(&g, &cfg.precompute).unwrap();
            let init =
                LinearModelWeights::init_seeded(g.num_features(), g.num_classes(), cfg.seed);
            let mut reference = init;
            let step = cfg.effective_train_config();
            for _ in 0..cfg.rounds {
                let anchor = reference.clone();
                reference = train_local(
                    &anchor,
                    &anchor,
                    &features,
                    g.labels(),
                    g.train_mask(),
                    &step,
                )
                .unwrap();
            }
            assert_eq!(run.client_weights[0], reference, "strategy {strategy}");
        }
    }

    #[test]
    fn fedgta_epsilon_above_one_is_pure_local_training() {
        let p = toy_partition();
        let mut cfg = fast_cfg(Strategy::Fedgta);
        cfg.epsilon = 1.5;
        let run = run_federation(&p, &cfg).unwrap();
        // Pure local reference per client.
        for i in 0..2 {
            let g = p.subgraph(i);
            let features = precompute_features(g, &cfg.precompute).unwrap();
            let mut reference =
                LinearModelWeights::init_seeded(g.num_features(), g.num_classes(), cfg.seed);
            let step = cfg.effective_train_config();
            for _ in 0..cfg.rounds {
                let anchor = reference.clone();
                reference = train_local(
                    &anchor,
                    &anchor,
                    &features,
                    g.labels(),
                    g.train_mask(),
                    &step,
                )
                .unwrap();
            }
            assert_eq!(run.client_weights[i], reference, "client {i}");
        }
    }

    #[test]
    fn fedavg_broadcasts_one_global_model() {
        let p = toy_partition();
        let run = run_federation(&p, &fast_cfg(Strategy::Fedavg)).unwrap();
        assert_eq!(run.client_weights[0], run.client_weights[1]);
    }

    #[test]
    fn records_carry_all_rounds_and_valid_accuracies() {
        let p = toy_partition();
        let run = run_federation(&p, &fast_cfg(Strategy::Fedgta)).unwrap();
        assert_eq!(run.records.len(), 3);
        for (t, rec) in run.records.iter().enumerate() {
            assert_eq!(rec.round, t + 1);
            assert_eq!(rec.participants, vec![0, 1]);
            assert!((0.0..=1.0).contains(&rec.global_accuracy));
            for &a in &rec.local_accuracy {
                assert!(a.is_nan() || (0.0..=1.0).contains(&a));
            }
        }
    }

    #[test]
    fn reruns_are_identical_and_seeds_differ() {
        let p = toy_partition();
        let cfg = fast_cfg(Strategy::Fedgta);
        let a = run_federation(&p, &cfg).unwrap();
        let b = run_federation(&p, &cfg).unwrap();
        assert_eq!(a.client_weights, b.client_weights);
        for (ra, rb) in a.records.iter().zip(&b.records) {
            assert_eq!(ra.participants, rb.participants);
            assert!(ra.global_accuracy == rb.global_accuracy);
        }
        let mut other = cfg;
        other.seed = 43;
        let c = run_federation(&p, &other).unwrap();
        assert_ne!(a.client_weights, c.client_weights);
    }

    #[test]
    fn validation_rejects_zero_moment_order() {
        let mut cfg = FederationConfig::default();
        cfg.moment_order = 0;
        assert!(cfg.validate().is_err());
    }
}
