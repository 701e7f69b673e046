//! Splitting a global graph into client subgraphs: Louvain community
//! detection with greedy community packing, and a metis-like balanced
//! edge-cut built from seeded BFS region growing plus boundary refinement.

use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::Rng;

use crate::error::{Error, Result};
use crate::graph::{induced_subgraph, SparseGraph};
use crate::seed::{rng, Purpose};

/// A disjoint, exhaustive assignment of nodes to clients, with each client's
/// induced subgraph materialized.
#[derive(Debug, Clone)]
pub struct PartitionAssignment {
    num_clients: usize,
    assignment: Vec<usize>,
    client_nodes: Vec<Vec<usize>>,
    client_subgraphs: Vec<SparseGraph>,
}

impl PartitionAssignment {
    /// Validates exact cover (every node in exactly one client, every client
    /// non-empty) and builds the induced subgraphs.
    pub fn from_assignment(
        graph: &SparseGraph,
        assignment: Vec<usize>,
        num_clients: usize,
    ) -> Result<Self> {
        if num_clients == 0 {
            return Err(Error::Partition("no clients".into()));
        }
        if assignment.len() != graph.num_nodes() {
            return Err(Error::Partition(format!(
                "assignment covers {} nodes, graph has {}",
                assignment.len(),
                graph.num_nodes()
            )));
        }
        let mut client_nodes: Vec<Vec<usize>> = vec![Vec::new(); num_clients];
        for (node, &client) in assignment.iter().enumerate() {
            if client >= num_clients {
                return Err(Error::Partition(format!(
                    "node {node} assigned to client {client} of {num_clients}"
                )));
            }
            client_nodes[client].push(node);
        }
        if let Some(empty) = client_nodes.iter().position(|nodes| nodes.is_empty()) {
            return Err(Error::Partition(format!("client {empty} is empty")));
        }
        let mut client_subgraphs = Vec::with_capacity(num_clients);
        for nodes in &client_nodes {
            client_subgraphs.push(induced_subgraph(graph, nodes)?.graph);
        }
        Ok(PartitionAssignment {
            num_clients,
            assignment,
            client_nodes,
            client_subgraphs,
        })
    }

    pub fn num_clients(&self) -> usize {
        self.num_clients
    }

    /// Node-to-client map over the original graph.
    pub fn assignment(&self) -> &[usize] {
        &self.assignment
    }

    /// Original node ids held by `client`, ascending; this is also the
    /// reindex map of the client's subgraph.
    pub fn client_nodes(&self, client: usize) -> &[usize] {
        &self.client_nodes[client]
    }

    pub fn subgraph(&self, client: usize) -> &SparseGraph {
        &self.client_subgraphs[client]
    }

    pub fn subgraphs(&self) -> &[SparseGraph] {
        &self.client_subgraphs
    }
}

/// Number of edges whose endpoints live in different clients.
pub fn edge_cut(graph: &SparseGraph, assignment: &[usize]) -> usize {
    graph
        .edges()
        .filter(|&(u, v)| assignment[u] != assignment[v])
        .count()
}

/// Newman modularity (resolution 1) of a node labeling.
pub fn modularity(graph: &SparseGraph, labels: &[usize]) -> f64 {
    let m = graph.num_edges() as f64;
    if m == 0.0 {
        return 0.0;
    }
    let mut intra: BTreeMap<usize, f64> = BTreeMap::new();
    let mut degree_sum: BTreeMap<usize, f64> = BTreeMap::new();
    for v in 0..graph.num_nodes() {
        *degree_sum.entry(labels[v]).or_default() += graph.degree(v) as f64;
    }
    for (u, v) in graph.edges() {
        if labels[u] == labels[v] {
            *intra.entry(labels[u]).or_default() += 1.0;
        }
    }
    degree_sum
        .iter()
        .map(|(c, &k)| {
            let l = intra.get(c).copied().unwrap_or(0.0);
            l / m - (k / (2.0 * m)).powi(2)
        })
        .sum()
}

/// Weighted multigraph used internally by the Louvain coarsening levels.
struct LevelGraph {
    /// Neighbor lists sorted by id, self excluded.
    adj: Vec<Vec<(usize, f64)>>,
    /// Intra-node (loop) weight, counted once.
    self_weight: Vec<f64>,
    /// Weighted degree including both loop endpoints.
    degree: Vec<f64>,
    /// Total edge weight m including loops once.
    total: f64,
}

impl LevelGraph {
    fn from_sparse(graph: &SparseGraph) -> Self {
        let n = graph.num_nodes();
        let mut adj = Vec::with_capacity(n);
        for u in 0..n {
            adj.push(graph.neighbors(u).iter().map(|&v| (v, 1.0)).collect());
        }
        LevelGraph {
            adj,
            self_weight: vec![0.0; n],
            degree: (0..n).map(|u| graph.degree(u) as f64).collect(),
            total: graph.num_edges() as f64,
        }
    }

    fn num_nodes(&self) -> usize {
        self.adj.len()
    }

    fn modularity(&self, labels: &[usize]) -> f64 {
        let m = self.total;
        let mut intra: BTreeMap<usize, f64> = BTreeMap::new();
        let mut degree_sum: BTreeMap<usize, f64> = BTreeMap::new();
        for u in 0..self.num_nodes() {
            *degree_sum.entry(labels[u]).or_default() += self.degree[u];
            *intra.entry(labels[u]).or_default() += self.self_weight[u];
            for &(v, w) in &self.adj[u] {
                if v > u && labels[v] == labels[u] {
                    *intra.entry(labels[u]).or_default() += w;
                }
            }
        }
        degree_sum
            .iter()
            .map(|(c, &k)| {
                let l = intra.get(c).copied().unwrap_or(0.0);
                l / m - (k / (2.0 * m)).powi(2)
            })
            .sum()
    }

    /// One sweep of local moving over `order`; returns the move count.
    fn local_move_pass(
        &self,
        labels: &mut [usize],
        community_degree: &mut [f64],
        order: &[usize],
        neighbor_weight: &mut [f64],
    ) -> usize {
        let m = self.total;
        let mut moves = 0;
        for &u in order {
            let current = labels[u];
            community_degree[current] -= self.degree[u];
            let mut touched: Vec<usize> = Vec::with_capacity(self.adj[u].len());
            for &(v, w) in &self.adj[u] {
                let c = labels[v];
                if neighbor_weight[c] == 0.0 {
                    touched.push(c);
                }
                neighbor_weight[c] += w;
            }
            touched.sort_unstable();
            // Gain of joining community c with u removed from its own:
            // w(u->c)/m - deg(u) * deg(c) / (2 m^2). Evaluate candidates in
            // ascending id order so ties resolve deterministically; staying
            // put wins ties against moving.
            let gain = |c: usize, w_to: f64| {
                w_to / m - self.degree[u] * community_degree[c] / (2.0 * m * m)
            };
            let mut best = current;
            let mut best_gain = gain(current, neighbor_weight[current]);
            for &c in &touched {
                if c == current {
                    continue;
                }
                let g = gain(c, neighbor_weight[c]);
                if g > best_gain + 1e-12 {
                    best = c;
                    best_gain = g;
                }
            }
            for &c in &touched {
                neighbor_weight[c] = 0.0;
            }
            labels[u] = best;
            community_degree[best] += self.degree[u];
            if best != current {
                moves += 1;
            }
        }
        moves
    }

    /// Collapses communities into single nodes; `labels` must be dense
    /// (0..num_communities).
    fn coarsen(&self, labels: &[usize], num_communities: usize) -> LevelGraph {
        let mut self_weight = vec![0.0; num_communities];
        let mut edges: BTreeMap<(usize, usize), f64> = BTreeMap::new();
        for u in 0..self.num_nodes() {
            self_weight[labels[u]] += self.self_weight[u];
            for &(v, w) in &self.adj[u] {
                if v < u {
                    continue;
                }
                let (cu, cv) = (labels[u], labels[v]);
                if cu == cv {
                    self_weight[cu] += w;
                } else {
                    let key = (cu.min(cv), cu.max(cv));
                    *edges.entry(key).or_default() += w;
                }
            }
        }
        let mut adj: Vec<Vec<(usize, f64)>> = vec![Vec::new(); num_communities];
        for (&(a, b), &w) in &edges {
            adj[a].push((b, w));
            adj[b].push((a, w));
        }
        for row in &mut adj {
            row.sort_unstable_by_key(|&(v, _)| v);
        }
        let degree: Vec<f64> = (0..num_communities)
            .map(|c| adj[c].iter().map(|&(_, w)| w).sum::<f64>() + 2.0 * self_weight[c])
            .collect();
        LevelGraph {
            adj,
            self_weight,
            degree,
            total: self.total,
        }
    }
}

/// Renumbers labels densely by first appearance; returns the count.
fn compress_labels(labels: &mut [usize]) -> usize {
    let mut remap: BTreeMap<usize, usize> = BTreeMap::new();
    let mut next = 0;
    for l in labels.iter_mut() {
        let id = *remap.entry(*l).or_insert_with(|| {
            let id = next;
            next += 1;
            id
        });
        *l = id;
    }
    next
}

/// Louvain community detection, returning the final labeling together with
/// the modularity measured after every local-moving pass.
///
/// Standard two-phase scheme at resolution 1.0: sweeps of greedy local moves
/// until none improves, then coarsening communities into nodes and repeating.
/// Node visit order is shuffled from the seed; for a fixed seed the result is
/// deterministic. The trace is non-decreasing — each pass only applies
/// positive-gain moves, and coarsening preserves modularity.
pub fn louvain_with_trace(graph: &SparseGraph, seed: u64) -> (Vec<usize>, Vec<f64>) {
    let n = graph.num_nodes();
    if graph.num_edges() == 0 {
        // Modularity is undefined without edges; every node stays singleton.
        return ((0..n).collect(), Vec::new());
    }
    let mut rng = rng(seed, Purpose::Partition, 0);
    let mut level = LevelGraph::from_sparse(graph);
    // node_community[v] is the current community of ORIGINAL node v, as an
    // index into the current level's nodes.
    let mut node_community: Vec<usize> = (0..n).collect();
    let mut trace = Vec::new();
    let mut last_q = level.modularity(&(0..level.num_nodes()).collect::<Vec<_>>());
    loop {
        let ln = level.num_nodes();
        let mut labels: Vec<usize> = (0..ln).collect();
        let mut community_degree = level.degree.clone();
        let mut scratch = vec![0.0; ln];
        let mut order: Vec<usize> = (0..ln).collect();
        order.shuffle(&mut rng);
        let mut level_moves = 0;
        for _pass in 0..64 {
            let moves =
                level.local_move_pass(&mut labels, &mut community_degree, &order, &mut scratch);
            let q = level.modularity(&labels);
            debug_assert!(
                q >= last_q - 1e-9,
                "modularity decreased across a pass: {last_q} -> {q}"
            );
            trace.push(q);
            last_q = q;
            level_moves += moves;
            if moves == 0 {
                break;
            }
        }
        if level_moves == 0 {
            break;
        }
        let num_communities = compress_labels(&mut labels);
        for c in node_community.iter_mut() {
            *c = labels[*c];
        }
        if num_communities == ln {
            break;
        }
        level = level.coarsen(&labels, num_communities);
    }
    compress_labels(&mut node_community);
    (node_community, trace)
}

/// Louvain community labels for each node; see [`louvain_with_trace`].
pub fn louvain(graph: &SparseGraph, seed: u64) -> Vec<usize> {
    louvain_with_trace(graph, seed).0
}

/// Packs whole communities onto `num_clients` clients, balancing node counts
/// greedily (largest community first onto the lightest client; ties go to the
/// lower client index).
pub fn communities_to_clients(
    graph: &SparseGraph,
    communities: &[usize],
    num_clients: usize,
    seed: u64,
) -> Result<PartitionAssignment> {
    if communities.len() != graph.num_nodes() {
        return Err(Error::Partition(format!(
            "{} community labels for {} nodes",
            communities.len(),
            graph.num_nodes()
        )));
    }
    if num_clients == 0 {
        return Err(Error::Partition("no clients".into()));
    }
    let mut members: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for (node, &c) in communities.iter().enumerate() {
        members.entry(c).or_default().push(node);
    }
    if num_clients > members.len() {
        return Err(Error::Partition(format!(
            "{num_clients} clients but only {} communities",
            members.len()
        )));
    }
    // Shuffle before the stable size sort so equal-sized communities land in
    // a seed-dependent (but reproducible) order.
    let mut groups: Vec<Vec<usize>> = members.into_values().collect();
    groups.shuffle(&mut rng(seed, Purpose::Partition, 1));
    groups.sort_by_key(|g| std::cmp::Reverse(g.len()));
    let mut load = vec![0usize; num_clients];
    let mut assignment = vec![0usize; graph.num_nodes()];
    for group in groups {
        let lightest = (0..num_clients).min_by_key(|&c| (load[c], c)).unwrap();
        load[lightest] += group.len();
        for node in group {
            assignment[node] = lightest;
        }
    }
    PartitionAssignment::from_assignment(graph, assignment, num_clients)
}

/// BFS over unassigned nodes from `start`, returning the last node reached
/// (a pseudo-peripheral pick when applied twice).
fn bfs_farthest(graph: &SparseGraph, assignment: &[usize], start: usize) -> usize {
    let mut seen = vec![false; graph.num_nodes()];
    let mut queue = std::collections::VecDeque::new();
    seen[start] = true;
    queue.push_back(start);
    let mut last = start;
    while let Some(u) = queue.pop_front() {
        last = u;
        for &v in graph.neighbors(u) {
            if !seen[v] && assignment[v] == usize::MAX {
                seen[v] = true;
                queue.push_back(v);
            }
        }
    }
    last
}

/// Metis-like balanced partitioning: regions grown one at a time by BFS from
/// pseudo-peripheral seeds, then single-node boundary moves that strictly
/// reduce the edge cut while keeping sizes within tolerance.
///
/// Grown sizes differ by at most one node; with n/N ≥ 10 that is within the
/// ±10% balance tolerance the refinement also respects.
pub fn balanced_edge_cut(
    graph: &SparseGraph,
    num_clients: usize,
    seed: u64,
) -> Result<PartitionAssignment> {
    let n = graph.num_nodes();
    if num_clients == 0 {
        return Err(Error::Partition("no clients".into()));
    }
    if num_clients > n {
        return Err(Error::Partition(format!(
            "{num_clients} clients for {n} nodes"
        )));
    }
    let mut assignment = vec![usize::MAX; n];
    let base = n / num_clients;
    let remainder = n % num_clients;
    let mut rng = rng(seed, Purpose::Partition, 2);
    for client in 0..num_clients {
        let target = base + usize::from(client < remainder);
        let mut remaining: Vec<usize> = (0..n).filter(|&v| assignment[v] == usize::MAX).collect();
        let pick = remaining[rng.gen_range(0..remaining.len())];
        // Double BFS pushes the seed toward the periphery of the unassigned
        // region, which keeps grown regions contiguous where possible.
        let start = bfs_farthest(graph, &assignment, bfs_farthest(graph, &assignment, pick));
        let mut queue = std::collections::VecDeque::new();
        let mut queued = vec![false; n];
        queue.push_back(start);
        queued[start] = true;
        let mut grown = 0;
        while grown < target {
            let u = match queue.pop_front() {
                Some(u) => u,
                None => {
                    // Disconnected remainder: jump to the lowest unassigned id.
                    remaining.retain(|&v| assignment[v] == usize::MAX);
                    let jump = remaining[0];
                    queued[jump] = true;
                    jump
                }
            };
            if assignment[u] != usize::MAX {
                continue;
            }
            assignment[u] = client;
            grown += 1;
            for &v in graph.neighbors(u) {
                if !queued[v] && assignment[v] == usize::MAX {
                    queued[v] = true;
                    queue.push_back(v);
                }
            }
        }
    }
    refine_boundary(graph, &mut assignment, num_clients);
    PartitionAssignment::from_assignment(graph, assignment, num_clients)
}

/// Greedy single-node boundary moves; every applied move strictly reduces
/// the edge cut and keeps client sizes within the balance window.
fn refine_boundary(graph: &SparseGraph, assignment: &mut [usize], num_clients: usize) {
    let n = graph.num_nodes();
    let average = n as f64 / num_clients as f64;
    let base = n / num_clients;
    let lo = ((average * 0.9).ceil() as usize).min(base).max(1);
    let hi = ((average * 1.1).floor() as usize).max(base + 1);
    let mut sizes = vec![0usize; num_clients];
    for &c in assignment.iter() {
        sizes[c] += 1;
    }
    let mut cut = edge_cut(graph, assignment);
    let mut neighbor_count = vec![0usize; num_clients];
    for _pass in 0..50 {
        let mut moved = false;
        for u in 0..n {
            let current = assignment[u];
            if sizes[current] <= lo {
                continue;
            }
            for &v in graph.neighbors(u) {
                neighbor_count[assignment[v]] += 1;
            }
            let internal = neighbor_count[current];
            let mut best: Option<(usize, usize)> = None; // (count, client)
            for c in 0..num_clients {
                if c != current && sizes[c] < hi && neighbor_count[c] > internal {
                    let candidate = (neighbor_count[c], c);
                    if best.map_or(true, |b| candidate.0 > b.0) {
                        best = Some(candidate);
                    }
                }
            }
            for &v in graph.neighbors(u) {
                neighbor_count[assignment[v]] = 0;
            }
            if let Some((count, target)) = best {
                let new_cut = cut + internal - count;
                debug_assert!(new_cut < cut, "refinement move must reduce the cut");
                assignment[u] = target;
                sizes[current] -= 1;
                sizes[target] += 1;
                debug_assert_eq!(new_cut, edge_cut(graph, assignment));
                cut = new_cut;
                moved = true;
            }
        }
        if !moved {
            break;
        }
    }
}

/// Per-client label histogram: row i counts client i's labeled nodes by
/// class. Unlabeled nodes are skipped, so row i sums to the client's labeled
/// node count.
pub fn label_distribution(
    assignment: &PartitionAssignment,
    graph: &SparseGraph,
) -> ndarray::Array2<u64> {
    let mut counts =
        ndarray::Array2::<u64>::zeros((assignment.num_clients(), graph.num_classes()));
    for (node, &client) in assignment.assignment().iter().enumerate() {
        if let Some(label) = graph.label_of(node) {
            counts[[client, label]] += 1;
        }
    }
    counts
}
