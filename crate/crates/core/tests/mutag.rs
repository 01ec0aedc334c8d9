use std::path::PathBuf;

use dkepool::data::{make_folds, parse_tu, write_tu, Graph, NodeFeatures};
use dkepool::gnn::{stack_forward, GraphBatch};
use dkepool::pooling::PoolKind;
use dkepool::tape::Tape;
use dkepool::train::{Model, TrainConfig};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn mutag_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../data/MUTAG")
}

#[test]
fn statistics() {
    let ds = parse_tu(mutag_dir(), "MUTAG").unwrap();
    assert_eq!(ds.len(), 188);
    assert_eq!(ds.num_classes, 2);
    assert_eq!(ds.class_values, vec![-1, 1]);
    assert_eq!(ds.class_counts(), vec![63, 125]);
    assert_eq!(ds.feature_dim, 7);
    assert!(matches!(ds.node_features, NodeFeatures::Labels { .. }));
    let nodes: usize = ds.graphs.iter().map(Graph::num_nodes).sum();
    assert_eq!(nodes, 3371);
    assert!((ds.average_nodes() - 17.93).abs() < 0.01);
    for g in &ds.graphs {
        assert!(g.edges.iter().all(|&(u, v)| g.edges.binary_search(&(v, u)).is_ok()));
    }
}

#[test]
fn round_trip() {
    let ds = parse_tu(mutag_dir(), "MUTAG").unwrap();
    let dir = tempfile::tempdir().unwrap();
    write_tu(&ds, dir.path()).unwrap();
    assert_eq!(parse_tu(dir.path(), "MUTAG").unwrap(), ds);
}

#[test]
fn ten_folds_are_balanced() {
    let ds = parse_tu(mutag_dir(), "MUTAG").unwrap();
    let plan = make_folds(&ds, 10, 0).unwrap();
    assert!(plan.stratified);
    for (fold, size) in plan.fold_sizes().into_iter().enumerate() {
        assert!(size == 18 || size == 19, "fold {fold} has {size}");
        let test = plan.test_indices(fold);
        let positives = test.iter().filter(|&&i| ds.graphs[i].label == 1).count();
        assert!((12..=13).contains(&positives), "fold {fold}: {positives} positives");
    }
}

#[test]
fn five_layer_gin_embeds_every_node() {
    let ds = parse_tu(mutag_dir(), "MUTAG").unwrap();
    let refs: Vec<&Graph> = ds.graphs.iter().collect();
    let batch = GraphBatch::from_graphs(&refs).unwrap();
    let config = TrainConfig::for_pool(PoolKind::DkepoolRobust);
    let model = Model::new(&config, ds.feature_dim, ds.num_classes, &mut ChaCha8Rng::seed_from_u64(0)).unwrap();
    let mut tape = Tape::new();
    let params: Vec<_> = model.layers.iter().map(|l| l.bind(&mut tape)).collect();
    let x = tape.constant(batch.node_features.clone());
    let h = stack_forward(&mut tape, &batch, &model.layers, x, &params).unwrap();
    assert_eq!(tape.shape(h), (3371, 16));
    assert!(tape.value(h).is_finite());

    let preds = model.predict(&batch, None).unwrap();
    assert_eq!(preds.len(), 188);
}
