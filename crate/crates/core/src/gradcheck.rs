//! Finite-difference verification of the tape's backward rules.
//!
//! Every case reduces its output to a scalar through fixed random weights,
//! then compares the reverse-mode gradient of each input against central
//! differences.

use std::sync::Arc;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::data::Graph;
use crate::error::{Error, Result};
use crate::gnn::{Activation, GnnLayer, GraphBatch};
use crate::linalg::{newton_schulz_sqrt, DEFAULT_NS_ITERATIONS};
use crate::pooling::{dkepool, dkepool_robust, estimate_gaussian, flat_pool, gauss_embd, gauss_vcat, DEFAULT_RIDGE_EPSILON};
use crate::tape::{ReduceOp, Tape, Var};
use crate::tensor::Tensor;
use crate::testing::{random_graph, random_spd, random_uniform};

pub const DEFAULT_STEP: f64 = 1e-5;
pub const DEFAULT_TOLERANCE: f64 = 1e-4;

type Builder = Box<dyn Fn(&mut Tape, &[Var]) -> Result<Var> + Send + Sync>;

/// One operation under test with its inputs.
pub struct GradCase {
    pub name: &'static str,
    pub inputs: Vec<Tensor>,
    pub tolerance: f64,
    build: Builder,
}

impl GradCase {
    pub fn new(
        name: &'static str,
        inputs: Vec<Tensor>,
        tolerance: f64,
        build: impl Fn(&mut Tape, &[Var]) -> Result<Var> + Send + Sync + 'static,
    ) -> Self {
        Self {
            name,
            inputs,
            tolerance,
            build: Box::new(build),
        }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct GradCheckResult {
    pub op: String,
    /// Worst per-input `‖g_analytic − g_numeric‖∞ / max(‖g_analytic‖∞, ‖g_numeric‖∞)`.
    pub max_rel_error: f64,
    pub tolerance: f64,
    pub passed: bool,
}

#[derive(Clone, Copy, Debug)]
pub struct GradCheckOptions {
    pub step: f64,
    /// Corrupt the matmul backward rule; every case touching matmul should fail.
    pub inject_fault: bool,
    pub seed: u64,
}

impl Default for GradCheckOptions {
    fn default() -> Self {
        Self {
            step: DEFAULT_STEP,
            inject_fault: false,
            seed: 7,
        }
    }
}

fn weighted_loss(tape: &mut Tape, out: Var, weights: &Tensor) -> Result<Var> {
    let w = tape.constant(weights.clone());
    let prod = tape.mul(out, w)?;
    tape.sum(prod)
}

fn evaluate(case: &GradCase, inputs: &[Tensor], weights: &Tensor) -> Result<f64> {
    let mut tape = Tape::new();
    let vars: Vec<Var> = inputs.iter().map(|t| tape.constant(t.clone())).collect();
    let out = (case.build)(&mut tape, &vars)?;
    let loss = weighted_loss(&mut tape, out, weights)?;
    Ok(tape.value(loss).item())
}

/// Runs one case and returns its worst relative error.
pub fn check_case(case: &GradCase, options: &GradCheckOptions) -> Result<GradCheckResult> {
    let mut tape = Tape::new();
    tape.inject_matmul_fault(options.inject_fault);
    let vars: Vec<Var> = case.inputs.iter().map(|t| tape.param(t.clone())).collect();
    let out = (case.build)(&mut tape, &vars)?;
    let (r, c) = tape.shape(out);
    let mut rng = ChaCha8Rng::seed_from_u64(options.seed ^ 0x9e37_79b9);
    let weights = random_uniform(r, c, &mut rng);
    let loss = weighted_loss(&mut tape, out, &weights)?;
    tape.backward(loss)?;

    let h = options.step;
    let mut worst: f64 = 0.0;
    for (k, var) in vars.iter().enumerate() {
        let analytic = tape
            .grad(*var)
            .cloned()
            .unwrap_or_else(|| Tensor::zeros(case.inputs[k].rows(), case.inputs[k].cols()));
        let mut numeric = Tensor::zeros(analytic.rows(), analytic.cols());
        let mut inputs = case.inputs.clone();
        for j in 0..inputs[k].len() {
            let x = inputs[k].data()[j];
            inputs[k].data_mut()[j] = x + h;
            let plus = evaluate(case, &inputs, &weights)?;
            inputs[k].data_mut()[j] = x - h;
            let minus = evaluate(case, &inputs, &weights)?;
            inputs[k].data_mut()[j] = x;
            numeric.data_mut()[j] = (plus - minus) / (2.0 * h);
        }
        let diff = analytic.sub(&numeric)?.max_abs();
        let scale = analytic.max_abs().max(numeric.max_abs()).max(f64::MIN_POSITIVE);
        let rel = diff / scale;
        if !rel.is_finite() {
            return Err(Error::numeric(format!("gradcheck {}: non-finite gradient", case.name)));
        }
        worst = worst.max(rel);
    }
    Ok(GradCheckResult {
        op: case.name.to_string(),
        max_rel_error: worst,
        tolerance: case.tolerance,
        passed: worst <= case.tolerance,
    })
}

fn small_batch(features: usize, rng: &mut ChaCha8Rng) -> GraphBatch {
    let graphs: Vec<Graph> = (0..2).map(|i| random_graph(5 + i, features, 0.5, 0, rng)).collect();
    let refs: Vec<&Graph> = graphs.iter().collect();
    GraphBatch::from_graphs(&refs).expect("valid fixture")
}

/// The built-in cases, covering every differentiable operation used in training.
pub fn standard_cases(seed: u64) -> Vec<GradCase> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (n, f, d) = (7, 4, 3);
    let mut u = |r, c| random_uniform(r, c, &mut rng);
    let h = u(n, f);
    let w = u(f, d);
    let a = u(n, f);
    let b = u(f, 5);
    let c = u(n, f);
    let logits = u(6, 3);
    let gcn_w = u(f, d);
    let gcn_b = u(1, d);
    let gin_w1 = u(f, 5);
    let gin_b1 = u(1, 5);
    let gin_w2 = u(5, d);
    let gin_b2 = u(1, d);
    let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(1));
    let spd = random_spd(f, 10.0, &mut rng);
    let batch = Arc::new(small_batch(f, &mut rng));
    let x = batch.node_features.clone();
    let eps = DEFAULT_RIDGE_EPSILON;

    let gin_batch = Arc::clone(&batch);
    let gcn_batch = Arc::clone(&batch);
    vec![
        GradCase::new("matmul", vec![a.clone(), b], 1e-6, |t, v| t.matmul(v[0], v[1])),
        GradCase::new("mul", vec![a.clone(), c.clone()], 1e-6, |t, v| t.mul(v[0], v[1])),
        GradCase::new("sub", vec![a.clone(), c], 1e-6, |t, v| t.sub(v[0], v[1])),
        GradCase::new("relu", vec![a], DEFAULT_TOLERANCE, |t, v| Ok(t.relu(v[0]))),
        GradCase::new("cross_entropy", vec![logits], 1e-6, |t, v| {
            t.cross_entropy(v[0], &[0, 2, 1, 1, 0, 2])
        }),
        GradCase::new("mean_pool", vec![h.clone()], DEFAULT_TOLERANCE, |t, v| {
            flat_pool(t, v[0], ReduceOp::Mean)
        }),
        GradCase::new("sum_pool", vec![h.clone()], DEFAULT_TOLERANCE, |t, v| {
            flat_pool(t, v[0], ReduceOp::Sum)
        }),
        GradCase::new("max_pool", vec![h.clone()], DEFAULT_TOLERANCE, |t, v| {
            flat_pool(t, v[0], ReduceOp::Max)
        }),
        GradCase::new("estimate_gaussian", vec![h.clone()], DEFAULT_TOLERANCE, move |t, v| {
            let s = estimate_gaussian(t, v[0], eps)?;
            let mu = t.reshape(s.mu, t.shape(s.mu).1, 1)?;
            t.concat_cols(&[s.sigma, mu])
        }),
        GradCase::new("dkepool", vec![h.clone(), w.clone()], DEFAULT_TOLERANCE, move |t, v| {
            let s = estimate_gaussian(t, v[0], eps)?;
            dkepool(t, &s, Some(v[1]))
        }),
        GradCase::new("dkepool_robust", vec![h.clone(), w], 1e-3, move |t, v| {
            let s = estimate_gaussian(t, v[0], eps)?;
            dkepool_robust(t, &s, Some(v[1]), DEFAULT_NS_ITERATIONS)
        }),
        GradCase::new("newton_schulz", vec![spd], 1e-3, |t, v| {
            newton_schulz_sqrt(t, v[0], DEFAULT_NS_ITERATIONS)
        }),
        GradCase::new("gauss_vcat", vec![h.clone()], DEFAULT_TOLERANCE, move |t, v| {
            let s = estimate_gaussian(t, v[0], eps)?;
            gauss_vcat(t, &s)
        }),
        GradCase::new("gauss_embd", vec![h], DEFAULT_TOLERANCE, move |t, v| {
            let s = estimate_gaussian(t, v[0], eps)?;
            gauss_embd(t, &s)
        }),
        GradCase::new("gcn", vec![x.clone(), gcn_w, gcn_b], DEFAULT_TOLERANCE, move |t, v| {
            let layer = GnnLayer {
                kind: crate::gnn::LayerKind::Gcn,
                weights: vec![t.value(v[1]).clone(), t.value(v[2]).clone()],
                epsilon: 0.0,
                activation: Activation::Relu,
            };
            layer.forward(t, &gcn_batch, v[0], &v[1..])
        }),
        GradCase::new("gin", vec![x, gin_w1, gin_b1, gin_w2, gin_b2], DEFAULT_TOLERANCE, move |t, v| {
            let layer = GnnLayer {
                kind: crate::gnn::LayerKind::Gin,
                weights: v[1..].iter().map(|p| t.value(*p).clone()).collect(),
                epsilon: 0.1,
                activation: Activation::Relu,
            };
            layer.forward(t, &gin_batch, v[0], &v[1..])
        }),
    ]
}

pub fn case_names() -> Vec<&'static str> {
    standard_cases(0).iter().map(|c| c.name).collect()
}

/// Runs the standard cases whose name matches `filter` (all when `None`).
pub fn run_suite(filter: Option<&str>, options: &GradCheckOptions) -> Result<Vec<GradCheckResult>> {
    let cases: Vec<GradCase> = standard_cases(options.seed)
        .into_iter()
        .filter(|c| filter.is_none_or(|f| c.name == f))
        .collect();
    if cases.is_empty() {
        return Err(Error::Config(format!(
            "no gradcheck op named {:?}; available: {}",
            filter.unwrap_or(""),
            case_names().join(", ")
        )));
    }
    cases.iter().map(|c| check_case(c, options)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn suite_passes() {
        for r in run_suite(None, &GradCheckOptions::default()).unwrap() {
            assert!(r.passed, "{} rel error {:e} > {:e}", r.op, r.max_rel_error, r.tolerance);
        }
    }

    #[test]
    fn injected_fault_is_caught() {
        let opts = GradCheckOptions {
            inject_fault: true,
            ..GradCheckOptions::default()
        };
        let r = run_suite(Some("matmul"), &opts).unwrap();
        assert!(!r[0].passed);
        assert!(r[0].max_rel_error > 0.1);
    }

    #[test]
    fn unknown_op_is_config_error() {
        assert!(matches!(
            run_suite(Some("nope"), &GradCheckOptions::default()),
            Err(Error::Config(_))
        ));
    }

    #[test]
    fn wrong_gradient_is_detected() {
        // relu whose numeric side sees a different function
        let case = GradCase::new("bad", vec![Tensor::from_rows(&[[0.5, -0.5]])], 1e-4, |t, v| {
            let r = t.relu(v[0]);
            if t.requires_grad(v[0]) {
                Ok(r)
            } else {
                Ok(t.scale(r, 2.0))
            }
        });
        let r = check_case(&case, &GradCheckOptions::default()).unwrap();
        assert!(!r.passed);
    }
}
