//! Forward/backward timing of the readout operators on synthetic embeddings.

use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::pooling::{PoolKind, PoolingOperator};
use crate::tape::Tape;
use crate::testing::random_uniform;

#[derive(Clone, Debug, Serialize)]
pub struct BenchRow {
    pub pool: String,
    pub nodes: usize,
    pub features: usize,
    pub d: usize,
    pub output_dim: usize,
    /// Median time of one forward plus backward pass.
    pub micros: f64,
}

pub fn bench_pooling(kinds: &[PoolKind], nodes: usize, features: usize, d: usize, reps: usize) -> Result<Vec<BenchRow>> {
    if reps == 0 || nodes == 0 || features == 0 {
        return Err(Error::Config("bench needs positive nodes, features and reps".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let h = random_uniform(nodes, features, &mut rng);
    kinds
        .iter()
        .map(|&kind| {
            let op = PoolingOperator::new(kind, features, d, &mut rng);
            let mut times = Vec::with_capacity(reps);
            for _ in 0..reps {
                let start = Instant::now();
                let mut tape = Tape::new();
                let hv = tape.param(h.clone());
                let w = op.bind(&mut tape);
                let z = op.forward(&mut tape, hv, w)?;
                let loss = tape.sum(z)?;
                tape.backward(loss)?;
                times.push(start.elapsed().as_secs_f64() * 1e6);
            }
            times.sort_by(f64::total_cmp);
            Ok(BenchRow {
                pool: kind.name().to_string(),
                nodes,
                features,
                d,
                output_dim: op.output_dim(features),
                micros: times[times.len() / 2],
            })
        })
        .collect()
}
