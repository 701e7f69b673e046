//! A deterministic simulator for federated learning over graph data, where
//! each client holds a private subgraph of one global graph.
//!
//! The pipeline: build or load a global graph ([`data`]), split it into
//! client subgraphs by community detection or balanced edge-cut
//! ([`partition`]), train decoupled local models — propagation precompute
//! plus logistic regression — on each client ([`model`]), and aggregate on
//! the server ([`aggregation`]) either classically (FedAvg/FedProx) or with
//! topology-aware personalized weighting driven by label-propagation
//! statistics ([`metrics`]). The round loop lives in [`federation`]; all
//! randomness flows from one root seed split per purpose ([`seed`]), so
//! every run is reproducible bit for bit.

pub mod aggregation;
pub mod config;
pub mod data;
pub mod error;
pub mod federation;
pub mod graph;
pub mod io;
pub mod metrics;
pub mod model;
pub mod partition;
pub mod seed;

pub use aggregation::{
    aggregate_personalized, build_plan, fedavg, moment_similarity, AggregationPlan,
};
pub use config::{parse_config, parse_config_str};
pub use data::{generate_sbm, load_dataset, save_dataset, SbmSpec};
pub use error::{Error, Result};
pub use federation::{
    global_test_accuracy, run_federation, sample_clients, FederationConfig, FederationRun,
    RoundRecord, Strategy, TrainSettings,
};
pub use graph::{
    build_graph, build_graph_with_classes, induced_subgraph, normalize, InducedSubgraph, Masks,
    NormalizedAdjacency, SparseGraph, UNLABELED,
};
pub use metrics::{
    build_report, confidence_ceiling, confidence_term, mixed_moments, nonparam_lp,
    smoothing_confidence, ClientReport, ReportConfig, SoftLabelSequence,
};
pub use model::{
    correct_count, evaluate, forward, loss_gradient, precompute_features, softmax_rows,
    stable_learning_rate_bound, total_loss, train_local, LinearModelWeights, PrecomputeConfig,
    PropagationMode, TrainConfig,
};
pub use partition::{
    balanced_edge_cut, communities_to_clients, edge_cut, label_distribution, louvain,
    louvain_with_trace, modularity, PartitionAssignment,
};
