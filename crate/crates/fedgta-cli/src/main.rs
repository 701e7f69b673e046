//! Command-line front end: generate synthetic graphs, split them into
//! clients, run federated training, and evaluate saved models.

use std::path::{Path, PathBuf};
use std::str::FromStr;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};

use fedgta::io::{
    read_assignment_csv, read_weights, write_assignment_csv, write_client_matrix_csv,
    write_label_distribution_csv, write_rounds_csv, write_weights,
};
use fedgta::partition::{
    balanced_edge_cut, communities_to_clients, edge_cut, label_distribution, louvain,
    PartitionAssignment,
};
use fedgta::{
    generate_sbm, global_test_accuracy, load_dataset, parse_config, precompute_features,
    run_federation, save_dataset, FederationConfig, PropagationMode, SbmSpec, SparseGraph,
    Strategy,
};

#[derive(Parser)]
#[command(
    name = "fedgta",
    version,
    about = "Federated graph learning simulator with topology-aware personalized aggregation"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a stochastic-block-model dataset directory.
    GenSbm(GenSbmArgs),
    /// Split a dataset into client subgraphs and write the assignment.
    Partition(PartitionArgs),
    /// Run federated training and write round metrics plus final weights.
    Run(RunArgs),
    /// Evaluate saved per-client weights on a dataset and partition.
    Eval(EvalArgs),
}

#[derive(Args)]
struct GenSbmArgs {
    /// Output dataset directory.
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 4)]
    blocks: usize,
    #[arg(long, default_value_t = 150)]
    nodes_per_block: usize,
    /// Intra-block edge probability.
    #[arg(long, default_value_t = 0.05)]
    p_in: f64,
    /// Inter-block edge probability.
    #[arg(long, default_value_t = 0.002)]
    p_out: f64,
    #[arg(long, default_value_t = 8)]
    feature_dim: usize,
    /// Standard deviation of the Gaussian feature noise.
    #[arg(long, default_value_t = 1.0)]
    feature_noise: f64,
    /// true: label = block id (label-skewed clients under community splits);
    /// false: labels cycle through classes independent of blocks.
    #[arg(long, default_value_t = true, action = clap::ArgAction::Set)]
    classes_equal_blocks: bool,
    #[arg(long, default_value_t = 42)]
    seed: u64,
}

#[derive(Clone, Copy, ValueEnum)]
enum Method {
    /// Community detection; whole communities are packed onto clients.
    Louvain,
    /// Balanced partitioning that minimizes the edge cut.
    EdgeCut,
}

#[derive(Args)]
struct PartitionArgs {
    /// Dataset directory (from gen-sbm, or hand-written in the same format).
    #[arg(long)]
    data: PathBuf,
    /// Output directory for assignment.csv and label_distribution.csv.
    #[arg(long)]
    out: PathBuf,
    #[arg(long, value_enum, default_value_t = Method::Louvain)]
    method: Method,
    #[arg(long, default_value_t = 10)]
    clients: usize,
    #[arg(long, default_value_t = 42)]
    seed: u64,
}

#[derive(Args)]
struct RunArgs {
    /// Dataset directory.
    #[arg(long)]
    data: PathBuf,
    /// assignment.csv written by `partition`.
    #[arg(long)]
    partition: PathBuf,
    /// TOML run configuration; defaults apply when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory: rounds.csv, weights/, and aggregation-plan CSVs.
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    rounds: Option<usize>,
    #[arg(long)]
    local_epochs: Option<usize>,
    #[arg(long)]
    participation_fraction: Option<f64>,
    /// fedavg, fedprox or fedgta.
    #[arg(long)]
    strategy: Option<String>,
    #[arg(long)]
    lp_alpha: Option<f64>,
    #[arg(long)]
    lp_steps: Option<usize>,
    #[arg(long)]
    moment_order: Option<usize>,
    #[arg(long)]
    epsilon: Option<f64>,
    #[arg(long)]
    stale_reports: Option<bool>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    learning_rate: Option<f64>,
    #[arg(long)]
    weight_decay: Option<f64>,
    #[arg(long)]
    prox_mu: Option<f64>,
    /// sgc, s2gc or gbp.
    #[arg(long)]
    precompute_mode: Option<String>,
    #[arg(long)]
    precompute_steps: Option<usize>,
}

#[derive(Args)]
struct EvalArgs {
    /// Dataset directory.
    #[arg(long)]
    data: PathBuf,
    /// assignment.csv written by `partition`.
    #[arg(long)]
    partition: PathBuf,
    /// Directory of client_NNNN.bin weight blobs written by `run`.
    #[arg(long)]
    weights: PathBuf,
    /// Config the run used (for the precompute settings); defaults apply
    /// when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
}

fn main() -> Result<()> {
    match Cli::parse().command {
        Command::GenSbm(args) => gen_sbm(args),
        Command::Partition(args) => partition(args),
        Command::Run(args) => run(args),
        Command::Eval(args) => eval(args),
    }
}

fn gen_sbm(args: GenSbmArgs) -> Result<()> {
    let spec = SbmSpec {
        blocks: args.blocks,
        nodes_per_block: args.nodes_per_block,
        p_in: args.p_in,
        p_out: args.p_out,
        feature_dim: args.feature_dim,
        feature_noise: args.feature_noise,
        classes_equal_blocks: args.classes_equal_blocks,
        seed: args.seed,
    };
    let graph = generate_sbm(&spec).context("generating the graph")?;
    save_dataset(&graph, &args.out)
        .with_context(|| format!("writing dataset to {}", args.out.display()))?;
    println!(
        "wrote {} nodes, {} edges, {} classes to {}",
        graph.num_nodes(),
        graph.num_edges(),
        graph.num_classes(),
        args.out.display()
    );
    Ok(())
}

fn partition(args: PartitionArgs) -> Result<()> {
    let graph = load_dataset(&args.data)
        .with_context(|| format!("loading dataset from {}", args.data.display()))?;
    let assignment = match args.method {
        Method::Louvain => {
            let communities = louvain(&graph, args.seed);
            let distinct = {
                let mut ids = communities.clone();
                ids.sort_unstable();
                ids.dedup();
                ids.len()
            };
            println!("louvain found {distinct} communities");
            communities_to_clients(&graph, &communities, args.clients, args.seed)?
        }
        Method::EdgeCut => balanced_edge_cut(&graph, args.clients, args.seed)?,
    };
    std::fs::create_dir_all(&args.out)?;
    write_assignment_csv(&assignment, &args.out.join("assignment.csv"))?;
    write_label_distribution_csv(
        &label_distribution(&assignment, &graph),
        &args.out.join("label_distribution.csv"),
    )?;
    let sizes: Vec<usize> = (0..assignment.num_clients())
        .map(|c| assignment.client_nodes(c).len())
        .collect();
    println!(
        "{} clients with sizes {:?}, edge cut {}",
        assignment.num_clients(),
        sizes,
        edge_cut(&graph, assignment.assignment())
    );
    println!("wrote {}", args.out.join("assignment.csv").display());
    Ok(())
}

fn load_partition(data: &Path, partition_csv: &Path) -> Result<(SparseGraph, PartitionAssignment)> {
    let graph =
        load_dataset(data).with_context(|| format!("loading dataset from {}", data.display()))?;
    let assignment = read_assignment_csv(partition_csv)
        .with_context(|| format!("reading {}", partition_csv.display()))?;
    let num_clients = assignment.iter().max().map_or(0, |&m| m + 1);
    let partition = PartitionAssignment::from_assignment(&graph, assignment, num_clients)?;
    Ok((graph, partition))
}

fn load_config(path: &Option<PathBuf>) -> Result<FederationConfig> {
    match path {
        Some(p) => {
            parse_config(p).with_context(|| format!("parsing config {}", p.display()))
        }
        None => Ok(FederationConfig::default()),
    }
}

fn apply_overrides(cfg: &mut FederationConfig, args: &RunArgs) -> Result<()> {
    if let Some(v) = args.rounds {
        cfg.rounds = v;
    }
    if let Some(v) = args.local_epochs {
        cfg.local_epochs = v;
    }
    if let Some(v) = args.participation_fraction {
        cfg.participation_fraction = v;
    }
    if let Some(v) = &args.strategy {
        cfg.strategy = Strategy::from_str(v)?;
    }
    if let Some(v) = args.lp_alpha {
        cfg.lp_alpha = v;
    }
    if let Some(v) = args.lp_steps {
        cfg.lp_steps = v;
    }
    if let Some(v) = args.moment_order {
        cfg.moment_order = v;
    }
    if let Some(v) = args.epsilon {
        cfg.epsilon = v;
    }
    if let Some(v) = args.stale_reports {
        cfg.stale_reports = v;
    }
    if let Some(v) = args.seed {
        cfg.seed = v;
    }
    if let Some(v) = args.learning_rate {
        cfg.train.learning_rate = v;
    }
    if let Some(v) = args.weight_decay {
        cfg.train.weight_decay = v;
    }
    if let Some(v) = args.prox_mu {
        cfg.train.prox_mu = v;
    }
    if let Some(v) = &args.precompute_mode {
        cfg.precompute.mode = PropagationMode::from_str(v)?;
    }
    if let Some(v) = args.precompute_steps {
        cfg.precompute.steps = v;
    }
    cfg.validate()?;
    Ok(())
}

fn weights_file(dir: &Path, client: usize) -> PathBuf {
    dir.join(format!("client_{client:04}.bin"))
}

fn run(args: RunArgs) -> Result<()> {
    let (_, partition) = load_partition(&args.data, &args.partition)?;
    let mut cfg = load_config(&args.config)?;
    apply_overrides(&mut cfg, &args)?;
    let outcome = run_federation(&partition, &cfg).context("running the federation")?;

    std::fs::create_dir_all(&args.out)?;
    write_rounds_csv(&outcome.records, &args.out.join("rounds.csv"))?;
    let weights_dir = args.out.join("weights");
    std::fs::create_dir_all(&weights_dir)?;
    for (i, w) in outcome.client_weights.iter().enumerate() {
        write_weights(w, &weights_file(&weights_dir, i))?;
    }
    if let Some((plan, client_ids)) = &outcome.final_plan {
        write_client_matrix_csv(
            &plan.similarity,
            client_ids,
            &args.out.join("similarity.csv"),
        )?;
        write_client_matrix_csv(
            &plan.membership_matrix(),
            client_ids,
            &args.out.join("membership.csv"),
        )?;
    }
    let last = outcome
        .records
        .last()
        .context("the run produced no rounds")?;
    println!(
        "strategy {} finished round {} with global test accuracy {:.4}",
        cfg.strategy, last.round, last.global_accuracy
    );
    println!("wrote {}", args.out.join("rounds.csv").display());
    Ok(())
}

fn eval(args: EvalArgs) -> Result<()> {
    let (_, partition) = load_partition(&args.data, &args.partition)?;
    let cfg = load_config(&args.config)?;
    let mut weights = Vec::with_capacity(partition.num_clients());
    let mut features = Vec::with_capacity(partition.num_clients());
    for i in 0..partition.num_clients() {
        let path = weights_file(&args.weights, i);
        weights.push(
            read_weights(&path).with_context(|| format!("reading {}", path.display()))?,
        );
        features.push(precompute_features(partition.subgraph(i), &cfg.precompute)?);
    }
    for i in 0..partition.num_clients() {
        let g = partition.subgraph(i);
        let (correct, total) =
            fedgta::correct_count(&weights[i], &features[i], g.labels(), g.test_mask())?;
        if total == 0 {
            println!("client {i}: no test nodes");
        } else {
            println!(
                "client {i}: {correct}/{total} test accuracy {:.4}",
                correct as f64 / total as f64
            );
        }
    }
    let global = global_test_accuracy(&weights, &features, &partition)?;
    println!("global test accuracy {global:.4}");
    Ok(())
}
