//! Synthetic stochastic-block-model graphs and the on-disk dataset format
//! (edge list plus headerless per-node CSV files).

use std::fs;
use std::io::{BufWriter, Write};
use std::path::Path;

use ndarray::Array2;
use rand::Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};
use crate::graph::{build_graph, Masks, SparseGraph, UNLABELED};
use crate::seed::{rng, Purpose};

/// Parameters of a planted-partition (stochastic block model) graph.
///
/// Features are the node's block centroid (one-hot) plus isotropic Gaussian
/// noise, which makes block structure and feature signal rise and fall
/// together. With `classes_equal_blocks` the label is the block id, giving
/// community-based client splits a strong label skew; without it labels
/// cycle through the classes independent of the blocks, an iid contrast.
#[derive(Debug, Clone)]
pub struct SbmSpec {
    pub blocks: usize,
    pub nodes_per_block: usize,
    /// Intra-block edge probability.
    pub p_in: f64,
    /// Inter-block edge probability.
    pub p_out: f64,
    pub feature_dim: usize,
    /// Standard deviation of the feature noise.
    pub feature_noise: f64,
    pub classes_equal_blocks: bool,
    pub seed: u64,
}

impl Default for SbmSpec {
    fn default() -> Self {
        SbmSpec {
            blocks: 4,
            nodes_per_block: 150,
            p_in: 0.05,
            p_out: 0.002,
            feature_dim: 8,
            feature_noise: 1.0,
            classes_equal_blocks: true,
            seed: 42,
        }
    }
}

impl SbmSpec {
    pub fn num_nodes(&self) -> usize {
        self.blocks * self.nodes_per_block
    }

    pub fn validate(&self) -> Result<()> {
        if self.blocks == 0 || self.nodes_per_block == 0 {
            return Err(Error::InvalidParameter(
                "blocks and nodes_per_block must be at least 1".into(),
            ));
        }
        if !(0.0..=1.0).contains(&self.p_out)
            || !(0.0..=1.0).contains(&self.p_in)
            || self.p_out > self.p_in
        {
            return Err(Error::InvalidParameter(format!(
                "edge probabilities must satisfy 0 <= p_out <= p_in <= 1, got p_in={} p_out={}",
                self.p_in, self.p_out
            )));
        }
        if self.feature_dim < self.blocks {
            return Err(Error::InvalidParameter(format!(
                "feature_dim {} cannot hold one-hot centroids for {} blocks",
                self.feature_dim, self.blocks
            )));
        }
        if !(self.feature_noise >= 0.0) {
            return Err(Error::InvalidParameter(format!(
                "feature_noise must be non-negative, got {}",
                self.feature_noise
            )));
        }
        Ok(())
    }
}

/// Generates the SBM graph with stratified 20/40/40 train/val/test masks per
/// class. Deterministic in `spec.seed`.
pub fn generate_sbm(spec: &SbmSpec) -> Result<SparseGraph> {
    spec.validate()?;
    let n = spec.num_nodes();
    let block = |v: usize| v / spec.nodes_per_block;

    let mut edge_rng = rng(spec.seed, Purpose::Graph, 0);
    let mut edges = Vec::new();
    for u in 0..n {
        for v in (u + 1)..n {
            let p = if block(u) == block(v) {
                spec.p_in
            } else {
                spec.p_out
            };
            if edge_rng.gen::<f64>() < p {
                edges.push((u, v));
            }
        }
    }

    let noise = Normal::new(0.0, spec.feature_noise)
        .map_err(|e| Error::InvalidParameter(format!("feature noise: {e}")))?;
    let mut feature_rng = rng(spec.seed, Purpose::Graph, 1);
    let mut features = Array2::zeros((n, spec.feature_dim));
    for v in 0..n {
        for d in 0..spec.feature_dim {
            let centroid = if d == block(v) { 1.0 } else { 0.0 };
            features[[v, d]] = centroid + noise.sample(&mut feature_rng);
        }
    }

    let labels: Vec<i64> = (0..n)
        .map(|v| {
            if spec.classes_equal_blocks {
                block(v) as i64
            } else {
                (v % spec.blocks) as i64
            }
        })
        .collect();

    let masks = stratified_masks(&labels, spec.blocks, spec.seed)?;
    build_graph(&edges, features, labels, masks)
}

/// Splits each class's nodes 20/40/40 into train/val/test after a seeded
/// shuffle; every non-empty class keeps at least one train node.
fn stratified_masks(labels: &[i64], num_classes: usize, seed: u64) -> Result<Masks> {
    let n = labels.len();
    let mut masks = Masks {
        train: vec![false; n],
        val: vec![false; n],
        test: vec![false; n],
    };
    let mut mask_rng = rng(seed, Purpose::Graph, 2);
    for class in 0..num_classes {
        let mut members: Vec<usize> = (0..n)
            .filter(|&v| labels[v] == class as i64)
            .collect();
        if members.is_empty() {
            continue;
        }
        rand::seq::SliceRandom::shuffle(&mut members[..], &mut mask_rng);
        let count = members.len();
        let train_count = ((count as f64 * 0.2).round() as usize).clamp(1, count);
        let val_count = ((count as f64 * 0.4).round() as usize).min(count - train_count);
        for (i, &v) in members.iter().enumerate() {
            if i < train_count {
                masks.train[v] = true;
            } else if i < train_count + val_count {
                masks.val[v] = true;
            } else {
                masks.test[v] = true;
            }
        }
    }
    Ok(masks)
}

const EDGES_FILE: &str = "edges.txt";
const FEATURES_FILE: &str = "features.csv";
const LABELS_FILE: &str = "labels.csv";
const MASKS_FILE: &str = "masks.csv";

/// Writes a graph as `edges.txt` (whitespace pairs, '#' comments),
/// `features.csv`, `labels.csv`, and `masks.csv` (headerless, row = node).
///
/// Floats are printed with the shortest representation that parses back to
/// the same value, so a save/load round trip reproduces the graph exactly.
pub fn save_dataset(graph: &SparseGraph, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir)?;

    let mut edges = BufWriter::new(fs::File::create(dir.join(EDGES_FILE))?);
    writeln!(edges, "# one undirected edge per line: u v")?;
    for (u, v) in graph.edges() {
        writeln!(edges, "{u} {v}")?;
    }
    edges.flush()?;

    let mut features = BufWriter::new(fs::File::create(dir.join(FEATURES_FILE))?);
    for row in graph.features().rows() {
        let cells: Vec<String> = row.iter().map(|x| x.to_string()).collect();
        writeln!(features, "{}", cells.join(","))?;
    }
    features.flush()?;

    let mut labels = BufWriter::new(fs::File::create(dir.join(LABELS_FILE))?);
    for &l in graph.labels() {
        writeln!(labels, "{l}")?;
    }
    labels.flush()?;

    let mut masks = BufWriter::new(fs::File::create(dir.join(MASKS_FILE))?);
    for v in 0..graph.num_nodes() {
        writeln!(
            masks,
            "{},{},{}",
            u8::from(graph.train_mask()[v]),
            u8::from(graph.val_mask()[v]),
            u8::from(graph.test_mask()[v])
        )?;
    }
    masks.flush()?;
    Ok(())
}

/// Content lines of a text file with their 1-based line numbers; empty lines
/// and '#' comments are skipped.
fn content_lines(path: &Path) -> Result<Vec<(usize, String)>> {
    let text = fs::read_to_string(path)?;
    Ok(text
        .lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.trim().to_string()))
        .filter(|(_, l)| !l.is_empty() && !l.starts_with('#'))
        .collect())
}

fn parse_error(path: &Path, line: usize, message: impl Into<String>) -> Error {
    Error::Parse {
        path: path.display().to_string(),
        line,
        message: message.into(),
    }
}

/// Loads a dataset directory written by [`save_dataset`] (or by hand in the
/// same format) and validates the full graph.
pub fn load_dataset(dir: &Path) -> Result<SparseGraph> {
    let features_path = dir.join(FEATURES_FILE);
    let mut feature_rows: Vec<Vec<f64>> = Vec::new();
    for (line, text) in content_lines(&features_path)? {
        let row: Vec<f64> = text
            .split(',')
            .map(|cell| {
                cell.trim()
                    .parse::<f64>()
                    .map_err(|e| parse_error(&features_path, line, format!("{cell:?}: {e}")))
            })
            .collect::<Result<_>>()?;
        if let Some(first) = feature_rows.first() {
            if row.len() != first.len() {
                return Err(parse_error(
                    &features_path,
                    line,
                    format!("expected {} columns, found {}", first.len(), row.len()),
                ));
            }
        }
        feature_rows.push(row);
    }
    let n = feature_rows.len();
    let f = feature_rows.first().map_or(0, Vec::len);
    let mut features = Array2::zeros((n, f));
    for (i, row) in feature_rows.iter().enumerate() {
        for (j, &x) in row.iter().enumerate() {
            features[[i, j]] = x;
        }
    }

    let labels_path = dir.join(LABELS_FILE);
    let mut labels = Vec::with_capacity(n);
    for (line, text) in content_lines(&labels_path)? {
        let l: i64 = text
            .parse()
            .map_err(|e| parse_error(&labels_path, line, format!("{text:?}: {e}")))?;
        if l < UNLABELED {
            return Err(parse_error(
                &labels_path,
                line,
                format!("label {l} below the unlabeled sentinel {UNLABELED}"),
            ));
        }
        labels.push(l);
    }
    if labels.len() != n {
        return Err(Error::InvalidGraph(format!(
            "{} labels for {n} feature rows",
            labels.len()
        )));
    }

    let masks_path = dir.join(MASKS_FILE);
    let mut masks = Masks {
        train: Vec::with_capacity(n),
        val: Vec::with_capacity(n),
        test: Vec::with_capacity(n),
    };
    for (line, text) in content_lines(&masks_path)? {
        let cells: Vec<&str> = text.split(',').map(str::trim).collect();
        if cells.len() != 3 {
            return Err(parse_error(
                &masks_path,
                line,
                format!("expected 3 columns (train,val,test), found {}", cells.len()),
            ));
        }
        let mut bits = [false; 3];
        for (slot, cell) in bits.iter_mut().zip(&cells) {
            *slot = match *cell {
                "0" => false,
                "1" => true,
                other => {
                    return Err(parse_error(
                        &masks_path,
                        line,
                        format!("mask cell must be 0 or 1, found {other:?}"),
                    ))
                }
            };
        }
        masks.train.push(bits[0]);
        masks.val.push(bits[1]);
        masks.test.push(bits[2]);
    }
    if masks.train.len() != n {
        return Err(Error::InvalidGraph(format!(
            "{} mask rows for {n} feature rows",
            masks.train.len()
        )));
    }

    let edges_path = dir.join(EDGES_FILE);
    let mut edges = Vec::new();
    for (line, text) in content_lines(&edges_path)? {
        let parts: Vec<&str> = text.split_whitespace().collect();
        if parts.len() != 2 {
            return Err(parse_error(
                &edges_path,
                line,
                format!("expected two node ids, found {} fields", parts.len()),
            ));
        }
        let mut pair = [0usize; 2];
        for (slot, part) in pair.iter_mut().zip(&parts) {
            *slot = part
                .parse()
                .map_err(|e| parse_error(&edges_path, line, format!("{part:?}: {e}")))?;
        }
        if pair[0] >= n || pair[1] >= n {
            return Err(parse_error(
                &edges_path,
                line,
                format!("edge ({}, {}) outside [0, {n})", pair[0], pair[1]),
            ));
        }
        edges.push((pair[0], pair[1]));
    }

    build_graph(&edges, features, labels, masks)
}
