//! Random fixtures shared by the gradient-check suite, benchmarks and tests.

use rand::seq::SliceRandom;
use rand::Rng;

use crate::data::{Dataset, Graph, NodeFeatures};
use crate::tensor::Tensor;

/// Entries drawn uniformly from `[-1, 1]`.
pub fn random_uniform(rows: usize, cols: usize, rng: &mut impl Rng) -> Tensor {
    Tensor::from_fn(rows, cols, |_, _| rng.random_range(-1.0..=1.0))
}

pub fn random_symmetric(n: usize, rng: &mut impl Rng) -> Tensor {
    let a = random_uniform(n, n, rng);
    Tensor::from_fn(n, n, |i, j| 0.5 * (a.get(i, j) + a.get(j, i)))
}

/// Random orthogonal matrix by Gram-Schmidt on a uniform matrix.
pub fn random_orthogonal(n: usize, rng: &mut impl Rng) -> Tensor {
    loop {
        let a = random_uniform(n, n, rng);
        let mut q: Vec<Vec<f64>> = Vec::with_capacity(n);
        let mut ok = true;
        for c in 0..n {
            let mut v: Vec<f64> = (0..n).map(|r| a.get(r, c)).collect();
            // two passes for numerical orthogonality
            for _ in 0..2 {
                for u in &q {
                    let d: f64 = u.iter().zip(&v).map(|(x, y)| x * y).sum();
                    for (vi, ui) in v.iter_mut().zip(u) {
                        *vi -= d * ui;
                    }
                }
            }
            let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
            if norm < 1e-8 {
                ok = false;
                break;
            }
            v.iter_mut().for_each(|x| *x /= norm);
            q.push(v);
        }
        if ok {
            return Tensor::from_fn(n, n, |r, c| q[c][r]);
        }
    }
}

/// SPD matrix `Q diag(λ) Qᵀ` with `λ_max / λ_min = condition` exactly: the
/// extreme eigenvalues are `1` and `condition`, the rest log-uniform between.
pub fn random_spd(n: usize, condition: f64, rng: &mut impl Rng) -> Tensor {
    assert!(condition >= 1.0);
    let q = random_orthogonal(n, rng);
    let log_c = condition.ln();
    let eig: Vec<f64> = (0..n)
        .map(|i| match i {
            0 => 1.0,
            1 => condition,
            _ => (rng.random_range(0.0..=1.0) * log_c).exp(),
        })
        .collect();
    let s = Tensor::from_fn(n, n, |i, j| (0..n).map(|k| q.get(i, k) * eig[k] * q.get(j, k)).sum());
    Tensor::from_fn(n, n, |i, j| 0.5 * (s.get(i, j) + s.get(j, i)))
}

/// Undirected random graph with both edge directions stored and uniform
/// `[-1, 1]` node features.
pub fn random_graph(nodes: usize, features: usize, edge_prob: f64, label: usize, rng: &mut impl Rng) -> Graph {
    let mut edges = Vec::new();
    for u in 0..nodes {
        for v in u + 1..nodes {
            if rng.random_bool(edge_prob) {
                edges.push((u, v));
                edges.push((v, u));
            }
        }
    }
    edges.sort_unstable();
    Graph {
        edges,
        features: random_uniform(nodes, features, rng),
        label,
    }
}

pub fn random_permutation(n: usize, rng: &mut impl Rng) -> Vec<usize> {
    let mut p: Vec<usize> = (0..n).collect();
    p.shuffle(rng);
    p
}

/// Relabels nodes so that new node `i` is old node `order[i]`.
pub fn permute_graph(g: &Graph, order: &[usize]) -> Graph {
    let mut new_index = vec![0; order.len()];
    for (new, &old) in order.iter().enumerate() {
        new_index[old] = new;
    }
    let mut edges: Vec<(usize, usize)> = g.edges.iter().map(|&(u, v)| (new_index[u], new_index[v])).collect();
    edges.sort_unstable();
    Graph {
        edges,
        features: g.features.select_rows(order),
        label: g.label,
    }
}

/// Two-class dataset where the class is the parity of the graph size and
/// every node carries that parity as a one-hot label. Graphs are paths with
/// 3 to 10 nodes.
pub fn parity_dataset(count: usize) -> Dataset {
    let graphs = (0..count)
        .map(|i| {
            let n = 3 + i % 8;
            let label = n % 2;
            let mut edges = Vec::new();
            for u in 0..n - 1 {
                edges.push((u, u + 1));
                edges.push((u + 1, u));
            }
            edges.sort_unstable();
            Graph {
                edges,
                features: Tensor::from_fn(n, 2, |_, c| if c == label { 1.0 } else { 0.0 }),
                label,
            }
        })
        .collect();
    Dataset {
        name: "PARITY".into(),
        graphs,
        num_classes: 2,
        feature_dim: 2,
        class_values: vec![0, 1],
        node_features: NodeFeatures::Labels { values: vec![0, 1] },
    }
}
