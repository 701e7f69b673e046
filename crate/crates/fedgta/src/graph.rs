//! Undirected attributed graphs in CSR form and degree-normalized propagation.
//!
//! Self-loops are never materialized in the CSR arrays; operators that need
//! the self-loop-augmented adjacency (A + I) account for it implicitly.

use ndarray::{Array1, Array2};

use crate::error::{Error, Result};

/// Label value marking an unlabeled node.
pub const UNLABELED: i64 = -1;

/// An undirected graph with node features, optional labels and split masks.
///
/// Adjacency is stored in compressed sparse row form with both directions of
/// every edge present, rows sorted and deduplicated, and no self-loops.
#[derive(Debug, Clone)]
pub struct SparseGraph {
    num_nodes: usize,
    num_edges: usize,
    row_offsets: Vec<usize>,
    col_indices: Vec<usize>,
    features: Array2<f64>,
    labels: Vec<i64>,
    num_classes: usize,
    train_mask: Vec<bool>,
    val_mask: Vec<bool>,
    test_mask: Vec<bool>,
}

impl SparseGraph {
    pub fn num_nodes(&self) -> usize {
        self.num_nodes
    }

    /// Number of undirected edges (each stored twice internally).
    pub fn num_edges(&self) -> usize {
        self.num_edges
    }

    pub fn num_features(&self) -> usize {
        self.features.ncols()
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    pub fn features(&self) -> &Array2<f64> {
        &self.features
    }

    /// Per-node labels; `UNLABELED` marks missing ones.
    pub fn labels(&self) -> &[i64] {
        &self.labels
    }

    pub fn label_of(&self, node: usize) -> Option<usize> {
        let l = self.labels[node];
        (l >= 0).then_some(l as usize)
    }

    pub fn train_mask(&self) -> &[bool] {
        &self.train_mask
    }

    pub fn val_mask(&self) -> &[bool] {
        &self.val_mask
    }

    pub fn test_mask(&self) -> &[bool] {
        &self.test_mask
    }

    pub fn row_offsets(&self) -> &[usize] {
        &self.row_offsets
    }

    pub fn col_indices(&self) -> &[usize] {
        &self.col_indices
    }

    /// Neighbors of `node` in ascending order, self excluded.
    pub fn neighbors(&self, node: usize) -> &[usize] {
        &self.col_indices[self.row_offsets[node]..self.row_offsets[node + 1]]
    }

    /// Degree without any self-loop contribution.
    pub fn degree(&self, node: usize) -> usize {
        self.row_offsets[node + 1] - self.row_offsets[node]
    }

    /// Iterates each undirected edge once as `(u, v)` with `u < v`.
    pub fn edges(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        (0..self.num_nodes)
            .flat_map(move |u| self.neighbors(u).iter().map(move |&v| (u, v)))
            .filter(|&(u, v)| u < v)
    }

    /// Checks every structural invariant; used by constructors and tests.
    pub fn validate(&self) -> Result<()> {
        let n = self.num_nodes;
        if self.row_offsets.len() != n + 1 || self.row_offsets[0] != 0 {
            return Err(Error::InvalidGraph("malformed row offsets".into()));
        }
        if *self.row_offsets.last().unwrap() != self.col_indices.len() {
            return Err(Error::InvalidGraph(
                "row offsets do not cover column indices".into(),
            ));
        }
        if self.col_indices.len() != 2 * self.num_edges {
            return Err(Error::InvalidGraph("edge count out of sync".into()));
        }
        for u in 0..n {
            if self.row_offsets[u] > self.row_offsets[u + 1] {
                return Err(Error::InvalidGraph("row offsets decrease".into()));
            }
            let row = self.neighbors(u);
            for w in row.windows(2) {
                if w[0] >= w[1] {
                    return Err(Error::InvalidGraph(format!(
                        "row {u} is not sorted and deduplicated"
                    )));
                }
            }
            for &v in row {
                if v >= n {
                    return Err(Error::InvalidGraph(format!("edge ({u}, {v}) out of range")));
                }
                if v == u {
                    return Err(Error::InvalidGraph(format!("self-loop stored at node {u}")));
                }
                if self.neighbors(v).binary_search(&u).is_err() {
                    return Err(Error::InvalidGraph(format!(
                        "edge ({u}, {v}) present without its reverse"
                    )));
                }
            }
        }
        if self.features.nrows() != n
            || self.labels.len() != n
            || self.train_mask.len() != n
            || self.val_mask.len() != n
            || self.test_mask.len() != n
        {
            return Err(Error::DimensionMismatch(
                "features, labels and masks must all have one row per node".into(),
            ));
        }
        for v in 0..n {
            let in_splits = [self.train_mask[v], self.val_mask[v], self.test_mask[v]];
            if in_splits.iter().filter(|&&b| b).count() > 1 {
                return Err(Error::InvalidGraph(format!(
                    "node {v} appears in more than one split"
                )));
            }
            if self.labels[v] != UNLABELED
                && (self.labels[v] < 0 || self.labels[v] as usize >= self.num_classes)
            {
                return Err(Error::InvalidGraph(format!(
                    "label {} of node {v} outside [0, {})",
                    self.labels[v], self.num_classes
                )));
            }
            if self.train_mask[v] && self.labels[v] == UNLABELED {
                return Err(Error::InvalidGraph(format!(
                    "train-masked node {v} has no label"
                )));
            }
        }
        Ok(())
    }
}

/// Per-node split masks, one entry per node in each vector.
#[derive(Debug, Clone, Default)]
pub struct Masks {
    pub train: Vec<bool>,
    pub val: Vec<bool>,
    pub test: Vec<bool>,
}

/// Builds a validated graph from an undirected edge list.
///
/// Duplicate edges and both orientations collapse to one undirected edge;
/// self-loops in the input are dropped (they are modeled implicitly by the
/// normalized operators). The class count is derived as `max(label) + 1`.
pub fn build_graph(
    edge_list: &[(usize, usize)],
    features: Array2<f64>,
    labels: Vec<i64>,
    masks: Masks,
) -> Result<SparseGraph> {
    let num_classes = labels
        .iter()
        .filter(|&&l| l >= 0)
        .map(|&l| l as usize + 1)
        .max()
        .unwrap_or(0);
    build_graph_with_classes(edge_list, features, labels, masks, num_classes)
}

/// [`build_graph`] with an explicit class count (needed when some classes are
/// absent from the labels, e.g. in induced subgraphs).
pub fn build_graph_with_classes(
    edge_list: &[(usize, usize)],
    features: Array2<f64>,
    labels: Vec<i64>,
    masks: Masks,
    num_classes: usize,
) -> Result<SparseGraph> {
    let n = labels.len();
    let mut adjacency: Vec<Vec<usize>> = vec![Vec::new(); n];
    for &(u, v) in edge_list {
        if u >= n || v >= n {
            return Err(Error::InvalidGraph(format!(
                "edge ({u}, {v}) references a node outside [0, {n})"
            )));
        }
        if u == v {
            continue; // implicit self-loops only
        }
        adjacency[u].push(v);
        adjacency[v].push(u);
    }
    let mut row_offsets = Vec::with_capacity(n + 1);
    let mut col_indices = Vec::new();
    row_offsets.push(0);
    for row in &mut adjacency {
        row.sort_unstable();
        row.dedup();
        col_indices.extend_from_slice(row);
        row_offsets.push(col_indices.len());
    }
    let num_edges = col_indices.len() / 2;
    let graph = SparseGraph {
        num_nodes: n,
        num_edges,
        row_offsets,
        col_indices,
        features,
        labels,
        num_classes,
        train_mask: masks.train,
        val_mask: masks.val,
        test_mask: masks.test,
    };
    graph.validate()?;
    Ok(graph)
}

/// A degree-normalized propagation operator D^(r-1) (A + I)^? D^(-r) over a
/// graph, with the self-loop handled implicitly.
///
/// With `kernel_coefficient` r = 0.5 the operator is symmetric; r = 0 yields
/// the row-stochastic random-walk operator and r = 1 its column-stochastic
/// transpose counterpart.
#[derive(Debug)]
pub struct NormalizedAdjacency<'g> {
    graph: &'g SparseGraph,
    kernel_coefficient: f64,
    self_loops: bool,
    /// Degrees used for normalization; includes +1 per node when
    /// `self_loops` is set.
    degrees: Vec<f64>,
}

/// Builds the normalized operator for `graph`.
///
/// Requires `kernel_coefficient` in [0, 1]. Without self-loops every node
/// must have positive degree, otherwise the normalization is undefined.
pub fn normalize(
    graph: &SparseGraph,
    kernel_coefficient: f64,
    self_loops: bool,
) -> Result<NormalizedAdjacency<'_>> {
    if !(0.0..=1.0).contains(&kernel_coefficient) {
        return Err(Error::InvalidParameter(format!(
            "kernel coefficient {kernel_coefficient} outside [0, 1]"
        )));
    }
    let loop_add = if self_loops { 1.0 } else { 0.0 };
    let mut degrees = Vec::with_capacity(graph.num_nodes());
    for v in 0..graph.num_nodes() {
        let d = graph.degree(v) as f64 + loop_add;
        if d == 0.0 {
            return Err(Error::InvalidParameter(format!(
                "node {v} has zero degree and self-loops are disabled"
            )));
        }
        degrees.push(d);
    }
    Ok(NormalizedAdjacency {
        graph,
        kernel_coefficient,
        self_loops,
        degrees,
    })
}

impl<'g> NormalizedAdjacency<'g> {
    pub fn graph(&self) -> &'g SparseGraph {
        self.graph
    }

    pub fn kernel_coefficient(&self) -> f64 {
        self.kernel_coefficient
    }

    pub fn self_loops(&self) -> bool {
        self.self_loops
    }

    /// Normalization degrees (self-loop included when enabled).
    pub fn degrees(&self) -> &[f64] {
        &self.degrees
    }

    /// Sparse-times-dense product: returns the normalized operator applied to
    /// `dense`, one output row per node.
    pub fn spmm(&self, dense: &Array2<f64>) -> Result<Array2<f64>> {
        let n = self.graph.num_nodes();
        if dense.nrows() != n {
            return Err(Error::DimensionMismatch(format!(
                "operator over {n} nodes applied to {} rows",
                dense.nrows()
            )));
        }
        let r = self.kernel_coefficient;
        let cols = dense.ncols();
        // Split the entry d_i^(r-1) * d_j^(-r) into per-node factors so each
        // power is computed once per node instead of once per edge.
        let out_scale: Array1<f64> = self.degrees.iter().map(|&d| d.powf(r - 1.0)).collect();
        let in_scale: Array1<f64> = self.degrees.iter().map(|&d| d.powf(-r)).collect();
        let mut out = Array2::<f64>::zeros((n, cols));
        for i in 0..n {
            let mut acc = vec![0.0; cols];
            for &j in self.graph.neighbors(i) {
                let w = in_scale[j];
                let row = dense.row(j);
                for (a, &x) in acc.iter_mut().zip(row.iter()) {
                    *a += w * x;
                }
            }
            if self.self_loops {
                let w = in_scale[i];
                let row = dense.row(i);
                for (a, &x) in acc.iter_mut().zip(row.iter()) {
                    *a += w * x;
                }
            }
            let s = out_scale[i];
            let mut out_row = out.row_mut(i);
            for (o, a) in out_row.iter_mut().zip(acc.iter()) {
                *o = s * a;
            }
        }
        Ok(out)
    }
}

/// An induced subgraph together with the original ids of its nodes.
#[derive(Debug, Clone)]
pub struct InducedSubgraph {
    pub graph: SparseGraph,
    /// `original_ids[new_id]` is the node's id in the parent graph.
    pub original_ids: Vec<usize>,
}

/// Extracts the subgraph induced by `nodes`, relabeling them to `0..len` in
/// the given order. Features, labels, masks and the class count carry over;
/// edges leaving the node set are dropped.
pub fn induced_subgraph(graph: &SparseGraph, nodes: &[usize]) -> Result<InducedSubgraph> {
    if nodes.is_empty() {
        return Err(Error::InvalidParameter("empty node set".into()));
    }
    let n = graph.num_nodes();
    let mut new_id = vec![usize::MAX; n];
    for (i, &v) in nodes.iter().enumerate() {
        if v >= n {
            return Err(Error::InvalidParameter(format!(
                "node {v} outside [0, {n})"
            )));
        }
        if new_id[v] != usize::MAX {
            return Err(Error::InvalidParameter(format!("node {v} listed twice")));
        }
        new_id[v] = i;
    }
    let mut edges = Vec::new();
    for (i, &v) in nodes.iter().enumerate() {
        for &w in graph.neighbors(v) {
            let j = new_id[w];
            if j != usize::MAX && i < j {
                edges.push((i, j));
            }
        }
    }
    let mut features = Array2::<f64>::zeros((nodes.len(), graph.num_features()));
    let mut labels = Vec::with_capacity(nodes.len());
    let mut masks = Masks::default();
    for &v in nodes {
        labels.push(graph.labels()[v]);
        masks.train.push(graph.train_mask()[v]);
        masks.val.push(graph.val_mask()[v]);
        masks.test.push(graph.test_mask()[v]);
    }
    for (i, &v) in nodes.iter().enumerate() {
        features.row_mut(i).assign(&graph.features().row(v));
    }
    let sub = build_graph_with_classes(&edges, features, labels, masks, graph.num_classes())?;
    Ok(InducedSubgraph {
        graph: sub,
        original_ids: nodes.to_vec(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    pub(crate) fn blank_masks(n: usize) -> Masks {
        Masks {
            train: vec![false; n],
            val: vec![false; n],
            test: vec![false; n],
        }
    }

    fn path_graph(n: usize) -> SparseGraph {
        let edges: Vec<(usize, usize)> = (0..n - 1).map(|i| (i, i + 1)).collect();
        build_graph(
            &edges,
            Array2::zeros((n, 1)),
            vec![UNLABELED; n],
            blank_masks(n),
        )
        .unwrap()
    }

    #[test]
    fn duplicate_and_reversed_edges_collapse() {
        let g = build_graph(
            &[(0, 1), (1, 0), (0, 1)],
            Array2::zeros((2, 1)),
            vec![UNLABELED; 2],
            blank_masks(2),
        )
        .unwrap();
        assert_eq!(g.num_edges(), 1);
        assert_eq!(g.neighbors(0), &[1]);
        assert_eq!(g.neighbors(1), &[0]);
    }

    #[test]
    fn input_self_loops_are_dropped() {
        let g = build_graph(
            &[(0, 0), (0, 1)],
            Array2::zeros((2, 1)),
            vec![UNLABELED; 2],
            blank_masks(2),
        )
        .unwrap();
        assert_eq!(g.num_edges(), 1);
        assert_eq!(g.degree(0), 1);
    }

    #[test]
    fn out_of_range_edge_rejected() {
        let err = build_graph(
            &[(0, 5)],
            Array2::zeros((2, 1)),
            vec![UNLABELED; 2],
            blank_masks(2),
        );
        assert!(matches!(err, Err(Error::InvalidGraph(_))));
    }

    #[test]
    fn overlapping_masks_rejected() {
        let mut masks = blank_masks(2);
        masks.train[0] = true;
        masks.val[0] = true;
        let err = build_graph(&[(0, 1)], Array2::zeros((2, 1)), vec![0, 1], masks);
        assert!(matches!(err, Err(Error::InvalidGraph(_))));
    }

    #[test]
    fn train_masked_node_must_be_labeled() {
        let mut masks = blank_masks(2);
        masks.train[0] = true;
        let err = build_graph(
            &[(0, 1)],
            Array2::zeros((2, 1)),
            vec![UNLABELED, 0],
            masks,
        );
        assert!(matches!(err, Err(Error::InvalidGraph(_))));
    }

    #[test]
    fn class_count_is_max_label_plus_one() {
        let g = build_graph(
            &[(0, 1)],
            Array2::zeros((3, 1)),
            vec![2, 0, UNLABELED],
            blank_masks(3),
        )
        .unwrap();
        assert_eq!(g.num_classes(), 3);
    }

    #[test]
    fn isolated_node_requires_self_loops() {
        let g = build_graph(
            &[(0, 1)],
            Array2::zeros((3, 1)),
            vec![UNLABELED; 3],
            blank_masks(3),
        )
        .unwrap();
        assert!(normalize(&g, 0.5, false).is_err());
        let adj = normalize(&g, 0.5, true).unwrap();
        assert_eq!(adj.degrees()[2], 1.0);
    }

    #[test]
    fn kernel_coefficient_domain_enforced() {
        let g = path_graph(3);
        assert!(normalize(&g, -0.1, true).is_err());
        assert!(normalize(&g, 1.1, true).is_err());
    }

    #[test]
    fn symmetric_normalization_on_a_path() {
        // Path 0-1-2 with self-loops: degrees 2, 3, 2. Row 0 of the operator
        // applied to e_1 must be 1/sqrt(2*3).
        let g = path_graph(3);
        let adj = normalize(&g, 0.5, true).unwrap();
        let x = array![[0.0], [1.0], [0.0]];
        let y = adj.spmm(&x).unwrap();
        assert!((y[[0, 0]] - 1.0 / 6.0f64.sqrt()).abs() < 1e-15);
        assert!((y[[1, 0]] - 1.0 / 3.0).abs() < 1e-15);
        assert!((y[[2, 0]] - 1.0 / 6.0f64.sqrt()).abs() < 1e-15);
    }

    #[test]
    fn row_stochastic_at_zero_column_stochastic_at_one() {
        let g = path_graph(4);
        let ones = Array2::from_elem((4, 1), 1.0);
        // r = 0: D^-1 (A+I), rows sum to one.
        let rw = normalize(&g, 0.0, true).unwrap().spmm(&ones).unwrap();
        for i in 0..4 {
            assert!((rw[[i, 0]] - 1.0).abs() < 1e-12);
        }
        // r = 1: (A+I) D^-1, columns sum to one; check via the transpose
        // action in a dense reconstruction.
        let adj = normalize(&g, 1.0, true).unwrap();
        let mut dense = Array2::<f64>::zeros((4, 4));
        for j in 0..4 {
            let mut e = Array2::<f64>::zeros((4, 1));
            e[[j, 0]] = 1.0;
            let col = adj.spmm(&e).unwrap();
            for i in 0..4 {
                dense[[i, j]] = col[[i, 0]];
            }
        }
        for j in 0..4 {
            let col_sum: f64 = (0..4).map(|i| dense[[i, j]]).sum();
            assert!((col_sum - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn spmm_shape_mismatch_rejected() {
        let g = path_graph(3);
        let adj = normalize(&g, 0.5, true).unwrap();
        assert!(adj.spmm(&Array2::zeros((2, 1))).is_err());
    }

    #[test]
    fn induced_subgraph_keeps_interior_edges_only() {
        // Triangle 0-1-2 plus pendant 3; taking {0, 1, 3} keeps edge (0,1)
        // and drops the ones through node 2.
        let g = build_graph(
            &[(0, 1), (1, 2), (0, 2), (2, 3)],
            array![[0.0], [1.0], [2.0], [3.0]],
            vec![0, 1, 0, 1],
            blank_masks(4),
        )
        .unwrap();
        let sub = induced_subgraph(&g, &[0, 1, 3]).unwrap();
        assert_eq!(sub.graph.num_nodes(), 3);
        assert_eq!(sub.graph.num_edges(), 1);
        assert_eq!(sub.original_ids, vec![0, 1, 3]);
        assert_eq!(sub.graph.features()[[2, 0]], 3.0);
        assert_eq!(sub.graph.labels(), &[0, 1, 1]);
        assert_eq!(sub.graph.num_classes(), 2);
    }

    #[test]
    fn induced_subgraph_rejects_duplicates_and_range() {
        let g = path_graph(3);
        assert!(induced_subgraph(&g, &[0, 0]).is_err());
        assert!(induced_subgraph(&g, &[5]).is_err());
        assert!(induced_subgraph(&g, &[]).is_err());
    }

    #[test]
    fn single_node_subgraph_is_isolated() {
        let g = path_graph(3);
        let sub = induced_subgraph(&g, &[1]).unwrap();
        assert_eq!(sub.graph.num_nodes(), 1);
        assert_eq!(sub.graph.num_edges(), 0);
    }
}
