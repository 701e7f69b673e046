//! Independent dense-matrix oracles and generators shared by the
//! integration suites.
//!
//! Everything here is built directly from edge lists with explicit dense
//! linear algebra, deliberately avoiding the library's sparse kernels so the
//! two implementations can check each other.

#![allow(dead_code)]

use ndarray::{Array1, Array2};
use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};

use fedgta::graph::{build_graph, Masks, SparseGraph};
use fedgta::UNLABELED;

pub fn blank_masks(n: usize) -> Masks {
    Masks {
        train: vec![false; n],
        val: vec![false; n],
        test: vec![false; n],
    }
}

/// Builds an unlabeled graph with zeroed single-column features.
pub fn graph_from_edges(n: usize, edges: &[(usize, usize)]) -> SparseGraph {
    build_graph(
        edges,
        Array2::zeros((n, 1)),
        vec![UNLABELED; n],
        blank_masks(n),
    )
    .unwrap()
}

/// Dense symmetric 0/1 adjacency, optionally with unit diagonal.
pub fn dense_adjacency(n: usize, edges: &[(usize, usize)], self_loops: bool) -> Array2<f64> {
    let mut a = Array2::zeros((n, n));
    for &(u, v) in edges {
        if u != v {
            a[[u, v]] = 1.0;
            a[[v, u]] = 1.0;
        }
    }
    if self_loops {
        for i in 0..n {
            a[[i, i]] = 1.0;
        }
    }
    a
}

/// Dense D^(r-1) A D^(-r) with D the (possibly loop-augmented) degree matrix.
pub fn dense_normalized(
    n: usize,
    edges: &[(usize, usize)],
    r: f64,
    self_loops: bool,
) -> Array2<f64> {
    let a = dense_adjacency(n, edges, self_loops);
    let degrees: Array1<f64> = a.rows().into_iter().map(|row| row.sum()).collect();
    let mut out = Array2::zeros((n, n));
    for i in 0..n {
        for j in 0..n {
            if a[[i, j]] != 0.0 {
                out[[i, j]] = degrees[i].powf(r - 1.0) * a[[i, j]] * degrees[j].powf(-r);
            }
        }
    }
    out
}

/// Dense label propagation: y_s = alpha y_0 + (1 - alpha) S y_{s-1} with the
/// symmetric loop-augmented operator; returns steps 1..=k.
pub fn dense_lp(
    n: usize,
    edges: &[(usize, usize)],
    y0: &Array2<f64>,
    alpha: f64,
    k: usize,
) -> Vec<Array2<f64>> {
    let s = dense_normalized(n, edges, 0.5, true);
    let mut steps = Vec::with_capacity(k);
    let mut prev = y0.clone();
    for _ in 0..k {
        let next = alpha * y0 + &((1.0 - alpha) * s.dot(&prev));
        steps.push(next.clone());
        prev = next;
    }
    steps
}

/// Dense k-step propagation S^k X.
pub fn dense_sgc(s: &Array2<f64>, x: &Array2<f64>, k: usize) -> Array2<f64> {
    let mut cur = x.clone();
    for _ in 0..k {
        cur = s.dot(&cur);
    }
    cur
}

/// Dense averaged prefix propagation (1/(k+1)) sum_{l=0..k} S^l X.
pub fn dense_s2gc(s: &Array2<f64>, x: &Array2<f64>, k: usize) -> Array2<f64> {
    let mut cur = x.clone();
    let mut sum = x.clone();
    for _ in 0..k {
        cur = s.dot(&cur);
        sum += &cur;
    }
    sum / (k as f64 + 1.0)
}

/// Dense geometric mixing sum_{l=0..k} beta (1-beta)^l S^l X.
pub fn dense_gbp(s: &Array2<f64>, x: &Array2<f64>, k: usize, beta: f64) -> Array2<f64> {
    let mut cur = x.clone();
    let mut sum = beta * x;
    let mut coeff = beta;
    for _ in 0..k {
        cur = s.dot(&cur);
        coeff *= 1.0 - beta;
        sum = sum + coeff * &cur;
    }
    sum
}

/// Erdos-Renyi edge list (u < v pairs).
pub fn random_edges(rng: &mut StdRng, n: usize, p: f64) -> Vec<(usize, usize)> {
    let mut edges = Vec::new();
    for u in 0..n {
        for v in (u + 1)..n {
            if rng.gen::<f64>() < p {
                edges.push((u, v));
            }
        }
    }
    edges
}

/// Random strictly positive rows normalized to sum to 1.
pub fn random_probability_rows(rng: &mut StdRng, n: usize, c: usize) -> Array2<f64> {
    let mut y = Array2::zeros((n, c));
    for i in 0..n {
        let mut sum = 0.0;
        for j in 0..c {
            let v: f64 = rng.gen_range(0.01..1.0);
            y[[i, j]] = v;
            sum += v;
        }
        for j in 0..c {
            y[[i, j]] /= sum;
        }
    }
    y
}

/// Random dense features in [-1, 1].
pub fn random_features(rng: &mut StdRng, n: usize, f: usize) -> Array2<f64> {
    Array2::from_shape_fn((n, f), |_| rng.gen_range(-1.0..1.0))
}

/// Mixed absolute/relative agreement: |a - b| <= tol * (1 + |b|) everywhere,
/// returning the worst scaled deviation.
pub fn max_scaled_deviation(a: &Array2<f64>, b: &Array2<f64>) -> f64 {
    assert_eq!(a.dim(), b.dim(), "oracle shape mismatch");
    a.iter()
        .zip(b.iter())
        .map(|(&x, &y)| (x - y).abs() / (1.0 + y.abs()))
        .fold(0.0, f64::max)
}

/// Newman modularity evaluated as the full double sum
/// (1/2m) sum_ij [A_ij - k_i k_j / 2m] delta(c_i, c_j), a deliberately
/// different formula arrangement from the library's per-community totals.
pub fn pairwise_modularity(n: usize, edges: &[(usize, usize)], labels: &[usize]) -> f64 {
    let a = dense_adjacency(n, edges, false);
    let degrees: Vec<f64> = (0..n).map(|i| a.row(i).sum()).collect();
    let two_m: f64 = degrees.iter().sum();
    if two_m == 0.0 {
        return 0.0;
    }
    let mut q = 0.0;
    for i in 0..n {
        for j in 0..n {
            if labels[i] == labels[j] {
                q += a[[i, j]] - degrees[i] * degrees[j] / two_m;
            }
        }
    }
    q / two_m
}

/// Exhaustive best bipartition by modularity (n <= ~16); returns the labels
/// and their modularity. Node 0 is pinned to side 0 to halve the search.
pub fn best_bipartition(n: usize, edges: &[(usize, usize)]) -> (Vec<usize>, f64) {
    assert!(n >= 2 && n <= 20, "exhaustive search needs a small graph");
    let mut best_labels = vec![0; n];
    let mut best_q = f64::NEG_INFINITY;
    for code in 0..(1u32 << (n - 1)) {
        let labels: Vec<usize> = (0..n)
            .map(|v| {
                if v == 0 {
                    0
                } else {
                    ((code >> (v - 1)) & 1) as usize
                }
            })
            .collect();
        let q = pairwise_modularity(n, edges, &labels);
        if q > best_q {
            best_q = q;
            best_labels = labels;
        }
    }
    (best_labels, best_q)
}

/// Deterministic test RNG.
pub fn test_rng(seed: u64) -> StdRng {
    StdRng::seed_from_u64(seed)
}

/// Edges of a complete graph over the given nodes.
pub fn clique_edges(nodes: &[usize]) -> Vec<(usize, usize)> {
    let mut edges = Vec::new();
    for (i, &u) in nodes.iter().enumerate() {
        for &v in &nodes[i + 1..] {
            edges.push((u, v));
        }
    }
    edges
}

/// Edges of a path 0-1-...-(n-1).
pub fn path_edges(n: usize) -> Vec<(usize, usize)> {
    (0..n.saturating_sub(1)).map(|i| (i, i + 1)).collect()
}
