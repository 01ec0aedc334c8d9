//! Message-passing layers producing node embeddings.
//!
//! Adjacency is an edge list per graph; aggregation is a sparse product with
//! a block-diagonal operator built once per batch, so graphs in a batch never
//! exchange messages.

use std::sync::Arc;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::data::Graph;
use crate::error::{Error, Result};
use crate::tape::{Tape, Var};
use crate::tensor::{SparseMatrix, Tensor};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LayerKind {
    Gcn,
    Gin,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Relu,
    None,
}

/// One message-passing layer.
///
/// GCN weights are `[W (in x out), b (1 x out)]`. GIN weights are the
/// two-layer perceptron `[W1 (in x hidden), b1, W2 (hidden x out), b2]`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GnnLayer {
    pub kind: LayerKind,
    pub weights: Vec<Tensor>,
    /// GIN self-weight offset; unused by GCN.
    pub epsilon: f64,
    pub activation: Activation,
}

fn glorot(rows: usize, cols: usize, rng: &mut impl Rng) -> Tensor {
    let a = (6.0 / (rows + cols) as f64).sqrt();
    Tensor::from_fn(rows, cols, |_, _| rng.random_range(-a..a))
}

impl GnnLayer {
    pub fn gcn(in_dim: usize, out_dim: usize, activation: Activation, rng: &mut impl Rng) -> Self {
        Self {
            kind: LayerKind::Gcn,
            weights: vec![glorot(in_dim, out_dim, rng), Tensor::zeros(1, out_dim)],
            epsilon: 0.0,
            activation,
        }
    }

    pub fn gin(
        in_dim: usize,
        hidden: usize,
        out_dim: usize,
        epsilon: f64,
        activation: Activation,
        rng: &mut impl Rng,
    ) -> Self {
        Self {
            kind: LayerKind::Gin,
            weights: vec![
                glorot(in_dim, hidden, rng),
                Tensor::zeros(1, hidden),
                glorot(hidden, out_dim, rng),
                Tensor::zeros(1, out_dim),
            ],
            epsilon,
            activation,
        }
    }

    pub fn in_dim(&self) -> usize {
        self.weights[0].rows()
    }

    pub fn out_dim(&self) -> usize {
        self.weights[self.weights.len() - 1].cols()
    }

    pub fn bind(&self, tape: &mut Tape) -> Vec<Var> {
        self.weights.iter().map(|w| tape.param(w.clone())).collect()
    }

    pub fn forward(&self, tape: &mut Tape, batch: &GraphBatch, h: Var, params: &[Var]) -> Result<Var> {
        match self.kind {
            LayerKind::Gcn => gcn_forward(tape, batch, self, h, params),
            LayerKind::Gin => gin_forward(tape, batch, self, h, params),
        }
    }

    fn check(&self, tape: &Tape, h: Var, params: &[Var], kind: LayerKind) -> Result<()> {
        if self.kind != kind {
            return Err(Error::contract(format!("expected a {kind:?} layer, got {:?}", self.kind)));
        }
        let expected = match kind {
            LayerKind::Gcn => 2,
            LayerKind::Gin => 4,
        };
        if params.len() != expected {
            return Err(Error::contract(format!(
                "{kind:?} layer takes {expected} parameters, got {}",
                params.len()
            )));
        }
        let (_, f) = tape.shape(h);
        if f != self.in_dim() {
            return Err(Error::Dimension {
                op: "gnn layer input",
                left: tape.shape(h),
                right: self.weights[0].shape(),
            });
        }
        Ok(())
    }

    fn activate(&self, tape: &mut Tape, x: Var) -> Var {
        match self.activation {
            Activation::Relu => tape.relu(x),
            Activation::None => x,
        }
    }
}

/// `act(D̃^{-1/2} Ã D̃^{-1/2} H W + b)` with `Ã = A + I` per graph.
pub fn gcn_forward(tape: &mut Tape, batch: &GraphBatch, layer: &GnnLayer, h: Var, params: &[Var]) -> Result<Var> {
    layer.check(tape, h, params, LayerKind::Gcn)?;
    let hw = tape.matmul(h, params[0])?;
    let agg = tape.spmm(Arc::new(batch.gcn_operator()), hw)?;
    let out = tape.add_row(agg, params[1])?;
    Ok(layer.activate(tape, out))
}

/// `act(MLP((1 + ε) h_v + Σ_{u ∈ N(v)} h_u))`.
pub fn gin_forward(tape: &mut Tape, batch: &GraphBatch, layer: &GnnLayer, h: Var, params: &[Var]) -> Result<Var> {
    layer.check(tape, h, params, LayerKind::Gin)?;
    let agg = tape.spmm(Arc::new(batch.gin_operator(layer.epsilon)), h)?;
    let a = tape.matmul(agg, params[0])?;
    let a = tape.add_row(a, params[1])?;
    let a = tape.relu(a);
    let b = tape.matmul(a, params[2])?;
    let out = tape.add_row(b, params[3])?;
    Ok(layer.activate(tape, out))
}

/// Checks that consecutive layer dimensions chain starting from `input_dim`.
pub fn validate_stack(layers: &[GnnLayer], input_dim: usize) -> Result<()> {
    let mut dim = input_dim;
    for (i, l) in layers.iter().enumerate() {
        if l.in_dim() != dim {
            return Err(Error::Config(format!(
                "layer {i} expects {} input features but receives {dim}",
                l.in_dim()
            )));
        }
        dim = l.out_dim();
    }
    Ok(())
}

/// Applies `layers` in order. `params[i]` are the bound parameters of layer `i`.
pub fn stack_forward(
    tape: &mut Tape,
    batch: &GraphBatch,
    layers: &[GnnLayer],
    x: Var,
    params: &[Vec<Var>],
) -> Result<Var> {
    validate_stack(layers, tape.shape(x).1)?;
    if params.len() != layers.len() {
        return Err(Error::contract("one parameter list per layer"));
    }
    let mut h = x;
    for (layer, p) in layers.iter().zip(params) {
        h = layer.forward(tape, batch, h, p)?;
    }
    Ok(h)
}

/// Several graphs stacked into one node-feature matrix.
#[derive(Clone, Debug)]
pub struct GraphBatch {
    pub node_features: Tensor,
    /// Directed edges in batch-global node indices.
    pub edges: Vec<(usize, usize)>,
    /// `graph_boundaries[i]..graph_boundaries[i + 1]` are the rows of graph `i`.
    pub graph_boundaries: Vec<usize>,
    pub labels: Vec<usize>,
}

impl GraphBatch {
    pub fn from_graphs(graphs: &[&Graph]) -> Result<Self> {
        let Some(first) = graphs.first() else {
            return Err(Error::EmptyInput("graph batch"));
        };
        let f = first.features.cols();
        let mut boundaries = Vec::with_capacity(graphs.len() + 1);
        boundaries.push(0);
        let mut edges = Vec::new();
        let mut parts = Vec::with_capacity(graphs.len());
        let mut offset = 0;
        for (gi, g) in graphs.iter().enumerate() {
            let n = g.num_nodes();
            if n == 0 {
                return Err(Error::EmptyGraph(format!("graph {gi} has no nodes")));
            }
            if g.features.cols() != f {
                return Err(Error::GraphData {
                    graph: gi,
                    message: format!("feature width {} differs from {f}", g.features.cols()),
                });
            }
            for &(u, v) in &g.edges {
                if u >= n || v >= n {
                    return Err(Error::GraphData {
                        graph: gi,
                        message: format!("edge ({u}, {v}) out of range for {n} nodes"),
                    });
                }
                edges.push((u + offset, v + offset));
            }
            parts.push(&g.features);
            offset += n;
            boundaries.push(offset);
        }
        Ok(Self {
            node_features: Tensor::vstack(&parts)?,
            edges,
            graph_boundaries: boundaries,
            labels: graphs.iter().map(|g| g.label).collect(),
        })
    }

    pub fn num_graphs(&self) -> usize {
        self.graph_boundaries.len() - 1
    }

    pub fn num_nodes(&self) -> usize {
        self.node_features.rows()
    }

    pub fn graph_range(&self, i: usize) -> (usize, usize) {
        (self.graph_boundaries[i], self.graph_boundaries[i + 1])
    }

    /// Row-wise entries grouped by destination, self entry first. Keeps the
    /// accumulation order of each row independent of other graphs.
    fn neighbour_lists(&self) -> Vec<Vec<usize>> {
        let mut nbrs = vec![Vec::new(); self.num_nodes()];
        for &(u, v) in &self.edges {
            nbrs[v].push(u);
        }
        nbrs
    }

    /// Symmetric-normalised adjacency with self loops.
    pub fn gcn_operator(&self) -> SparseMatrix {
        let n = self.num_nodes();
        let nbrs = self.neighbour_lists();
        let deg: Vec<f64> = nbrs.iter().map(|l| 1.0 + l.len() as f64).collect();
        let mut m = SparseMatrix::new(n, n);
        for (v, list) in nbrs.iter().enumerate() {
            m.push(v, v, 1.0 / deg[v]);
            for &u in list {
                m.push(v, u, 1.0 / (deg[v] * deg[u]).sqrt());
            }
        }
        m
    }

    /// `A + (1 + ε) I`.
    pub fn gin_operator(&self, epsilon: f64) -> SparseMatrix {
        let n = self.num_nodes();
        let nbrs = self.neighbour_lists();
        let mut m = SparseMatrix::new(n, n);
        for (v, list) in nbrs.iter().enumerate() {
            m.push(v, v, 1.0 + epsilon);
            for &u in list {
                m.push(v, u, 1.0);
            }
        }
        m
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::testing::{permute_graph, random_graph, random_permutation};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn graph(n: usize, edges: &[(usize, usize)], features: Tensor) -> Graph {
        let mut e = Vec::new();
        for &(u, v) in edges {
            e.push((u, v));
            e.push((v, u));
        }
        assert_eq!(features.rows(), n);
        Graph {
            edges: e,
            features,
            label: 0,
        }
    }

    fn identity_gcn(f: usize) -> GnnLayer {
        GnnLayer {
            kind: LayerKind::Gcn,
            weights: vec![Tensor::identity(f), Tensor::zeros(1, f)],
            epsilon: 0.0,
            activation: Activation::None,
        }
    }

    fn identity_gin(f: usize) -> GnnLayer {
        GnnLayer {
            kind: LayerKind::Gin,
            weights: vec![
                Tensor::identity(f),
                Tensor::zeros(1, f),
                Tensor::identity(f),
                Tensor::zeros(1, f),
            ],
            epsilon: 0.0,
            activation: Activation::None,
        }
    }

    fn run(layer: &GnnLayer, g: &Graph) -> Tensor {
        let batch = GraphBatch::from_graphs(&[g]).unwrap();
        let mut tape = Tape::new();
        let x = tape.constant(batch.node_features.clone());
        let p = layer.bind(&mut tape);
        let out = layer.forward(&mut tape, &batch, x, &p).unwrap();
        tape.value(out).clone()
    }

    #[test]
    fn gcn_isolated_node_is_identity() {
        let g = graph(1, &[], Tensor::from_rows(&[[0.3, -2.0]]));
        assert_eq!(run(&identity_gcn(2), &g), g.features);
    }

    #[test]
    fn gcn_preserves_constant_signal() {
        let g = graph(2, &[(0, 1)], Tensor::from_rows(&[[1.0], [1.0]]));
        let out = run(&identity_gcn(1), &g);
        for v in out.data() {
            assert!((v - 1.0).abs() < 1e-15);
        }
    }

    #[test]
    fn gin_isolated_node_identity_mlp() {
        // relu inside the MLP is the identity on non-negative input
        let g = graph(1, &[], Tensor::from_rows(&[[0.5, 2.0]]));
        assert_eq!(run(&identity_gin(2), &g), g.features);
    }

    #[test]
    fn gin_star_center_sums_neighbours() {
        let k = 5;
        let edges: Vec<(usize, usize)> = (1..=k).map(|i| (0, i)).collect();
        let g = graph(k + 1, &edges, Tensor::filled(k + 1, 1, 1.0));
        let out = run(&identity_gin(1), &g);
        assert_eq!(out.get(0, 0), 1.0 + k as f64);
        assert_eq!(out.get(1, 0), 2.0);
    }

    #[test]
    fn layers_are_permutation_equivariant() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let gcn = GnnLayer::gcn(3, 4, Activation::Relu, &mut rng);
        let gin = GnnLayer::gin(3, 5, 4, 0.0, Activation::Relu, &mut rng);
        for _ in 0..5 {
            let g = random_graph(9, 3, 0.3, 0, &mut rng);
            let order = random_permutation(9, &mut rng);
            let pg = permute_graph(&g, &order);
            for layer in [&gcn, &gin] {
                let expected = run(layer, &g).select_rows(&order);
                let got = run(layer, &pg);
                assert!(got.sub(&expected).unwrap().max_abs() <= 1e-10);
            }
        }
    }

    #[test]
    fn batch_independence() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let layer = GnnLayer::gin(3, 4, 2, 0.1, Activation::Relu, &mut rng);
        let graphs: Vec<Graph> = (0..4).map(|i| random_graph(3 + i, 3, 0.5, 0, &mut rng)).collect();
        let refs: Vec<&Graph> = graphs.iter().collect();
        let batch = GraphBatch::from_graphs(&refs).unwrap();
        let mut tape = Tape::new();
        let x = tape.constant(batch.node_features.clone());
        let p = layer.bind(&mut tape);
        let out = layer.forward(&mut tape, &batch, x, &p).unwrap();
        for (i, g) in graphs.iter().enumerate() {
            let (s, e) = batch.graph_range(i);
            let alone = run(&layer, g);
            let inside = tape.value(out).slice_rows(s, e);
            assert!(alone.sub(&inside).unwrap().max_abs() <= 1e-12);
        }
    }

    #[test]
    fn out_of_range_edge_names_graph() {
        let ok = graph(2, &[(0, 1)], Tensor::zeros(2, 1));
        let bad = Graph {
            edges: vec![(0, 3)],
            features: Tensor::zeros(2, 1),
            label: 0,
        };
        let err = GraphBatch::from_graphs(&[&ok, &bad]).unwrap_err();
        assert!(matches!(err, Error::GraphData { graph: 1, .. }), "{err}");
    }

    #[test]
    fn boundaries_strictly_increase() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let graphs: Vec<Graph> = (1..5).map(|n| random_graph(n, 2, 0.5, 0, &mut rng)).collect();
        let refs: Vec<&Graph> = graphs.iter().collect();
        let b = GraphBatch::from_graphs(&refs).unwrap();
        assert!(b.graph_boundaries.windows(2).all(|w| w[0] < w[1]));
        assert_eq!(*b.graph_boundaries.last().unwrap(), b.num_nodes());
    }

    #[test]
    fn empty_stack_is_identity() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let g = random_graph(4, 3, 0.5, 0, &mut rng);
        let batch = GraphBatch::from_graphs(&[&g]).unwrap();
        let mut tape = Tape::new();
        let x = tape.constant(batch.node_features.clone());
        let h = stack_forward(&mut tape, &batch, &[], x, &[]).unwrap();
        assert_eq!(tape.value(h), &g.features);
    }

    #[test]
    fn single_layer_stack_equals_layer() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let g = random_graph(6, 3, 0.4, 0, &mut rng);
        let layer = GnnLayer::gcn(3, 2, Activation::None, &mut rng);
        let batch = GraphBatch::from_graphs(&[&g]).unwrap();
        let mut tape = Tape::new();
        let x = tape.constant(batch.node_features.clone());
        let p = layer.bind(&mut tape);
        let h = stack_forward(&mut tape, &batch, std::slice::from_ref(&layer), x, &[p]).unwrap();
        assert_eq!(tape.value(h), &run(&layer, &g));
    }

    #[test]
    fn dimension_chain_mismatch_is_config_error() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let layers = vec![
            GnnLayer::gcn(3, 4, Activation::Relu, &mut rng),
            GnnLayer::gcn(5, 2, Activation::None, &mut rng),
        ];
        assert!(matches!(validate_stack(&layers, 3), Err(Error::Config(_))));
    }
}
