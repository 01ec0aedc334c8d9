//! Classifier head, optimiser and the k-fold cross-validation protocol.
//!
//! Each fold trains a freshly initialised model whose randomness derives only
//! from `(seed, fold)`, then reports the final-epoch accuracy on its held-out
//! fold.

use std::fmt;
use std::str::FromStr;
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::data::{make_folds, noise_for, Dataset, Graph, DEFAULT_FOLDS};
use crate::error::{Error, Result};
use crate::gnn::{stack_forward, validate_stack, Activation, GnnLayer, GraphBatch};
use crate::linalg::DEFAULT_NS_ITERATIONS;
use crate::pooling::{PoolKind, PoolingOperator, DEFAULT_RIDGE_EPSILON};
use crate::tape::{Tape, Var};
use crate::tensor::Tensor;

/// Projection widths swept in the dimension ablation; `0` removes `W`.
pub const D_GRID: [usize; 5] = [0, 200, 400, 600, 800];
/// Signal-to-noise ratios (dB) swept in the noise ablation.
pub const SNR_GRID: [f64; 3] = [10.0, 15.0, 20.0];
pub const DEFAULT_SNR_DB: f64 = 15.0;

const SHUFFLE_SEED_OFFSET: u64 = 1_000_003;
const TRAIN_NOISE_SEED_OFFSET: u64 = 2_000_003;
const EVAL_NOISE_SEED_OFFSET: u64 = 3_000_003;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GnnArch {
    /// Five GIN layers.
    Gin5,
    /// Three GCN layers.
    Gcn3,
}

impl GnnArch {
    pub fn name(self) -> &'static str {
        match self {
            GnnArch::Gin5 => "gin5",
            GnnArch::Gcn3 => "gcn3",
        }
    }

    pub fn depth(self) -> usize {
        match self {
            GnnArch::Gin5 => 5,
            GnnArch::Gcn3 => 3,
        }
    }
}

impl fmt::Display for GnnArch {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for GnnArch {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "gin5" => Ok(GnnArch::Gin5),
            "gcn3" => Ok(GnnArch::Gcn3),
            _ => Err(Error::Config(format!("unknown gnn {s:?} (expected gin5 or gcn3)"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub gnn: GnnArch,
    pub hidden: usize,
    pub pool: PoolKind,
    /// Projection width for the dkepool kinds; `0` means no projection.
    pub d: usize,
    pub ns_iterations: usize,
    /// Noise level in dB; `None` disables noise.
    pub snr_db: Option<f64>,
    pub batch_size: usize,
    pub learning_rate: f64,
    /// Multiply the learning rate by `lr_decay` every `lr_decay_epochs`
    /// epochs; `0` keeps it constant.
    pub lr_decay_epochs: usize,
    pub lr_decay: f64,
    pub epochs: usize,
    pub weight_decay: f64,
    pub seed: u64,
    pub folds: usize,
    pub gin_epsilon: f64,
    pub ridge_epsilon: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            gnn: GnnArch::Gin5,
            hidden: 16,
            pool: PoolKind::DkepoolRobust,
            d: 200,
            ns_iterations: DEFAULT_NS_ITERATIONS,
            snr_db: Some(DEFAULT_SNR_DB),
            batch_size: 32,
            learning_rate: 0.01,
            lr_decay_epochs: 50,
            lr_decay: 0.5,
            epochs: 100,
            weight_decay: 1e-4,
            seed: 0,
            folds: DEFAULT_FOLDS,
            gin_epsilon: 0.0,
            ridge_epsilon: DEFAULT_RIDGE_EPSILON,
        }
    }
}

impl TrainConfig {
    /// Defaults for `pool`; noise is enabled only for the robust variant.
    pub fn for_pool(pool: PoolKind) -> Self {
        Self {
            pool,
            snr_db: default_snr_for(pool),
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("hidden", self.hidden),
            ("ns_iterations", self.ns_iterations),
            ("batch_size", self.batch_size),
            ("epochs", self.epochs),
        ];
        for (name, v) in positive {
            if v == 0 {
                return Err(Error::Config(format!("{name} must be positive")));
            }
        }
        if self.folds < 2 {
            return Err(Error::Config("cross-validation needs at least 2 folds".into()));
        }
        if !D_GRID.contains(&self.d) {
            return Err(Error::Config(format!("d must be one of {D_GRID:?}, got {}", self.d)));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::Config("learning_rate must be positive".into()));
        }
        if !(self.lr_decay > 0.0 && self.lr_decay <= 1.0) {
            return Err(Error::Config("lr_decay must lie in (0, 1]".into()));
        }
        for (name, v) in [
            ("weight_decay", self.weight_decay),
            ("ridge_epsilon", self.ridge_epsilon),
        ] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(Error::Config(format!("{name} must be non-negative")));
            }
        }
        if !self.gin_epsilon.is_finite() {
            return Err(Error::Config("gin_epsilon must be finite".into()));
        }
        if let Some(snr) = self.snr_db {
            if !snr.is_finite() {
                return Err(Error::Config("snr_db must be finite; use null to disable".into()));
            }
        }
        Ok(())
    }

    /// Short hash of every effective setting.
    pub fn learning_rate_at(&self, epoch: usize) -> f64 {
        match self.lr_decay_epochs {
            0 => self.learning_rate,
            step => self.learning_rate * self.lr_decay.powi((epoch / step) as i32),
        }
    }

    pub fn fingerprint(&self) -> String {
        settings_fingerprint(self)
    }
}

/// Short hash of the JSON form of `settings`.
pub fn settings_fingerprint(settings: &impl Serialize) -> String {
    let json = serde_json::to_string(settings).expect("settings serialise");
    short_hash(json.as_bytes())
}

pub fn default_snr_for(pool: PoolKind) -> Option<f64> {
    (pool == PoolKind::DkepoolRobust).then_some(DEFAULT_SNR_DB)
}

fn short_hash(bytes: &[u8]) -> String {
    hex::encode(&Sha256::digest(bytes)[..8])
}

fn glorot(rows: usize, cols: usize, rng: &mut impl Rng) -> Tensor {
    let a = (6.0 / (rows + cols) as f64).sqrt();
    Tensor::from_fn(rows, cols, |_, _| rng.random_range(-a..a))
}

/// Single linear layer from the pooled vector to class logits.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClassifierHead {
    pub weight: Tensor,
    pub bias: Tensor,
}

impl ClassifierHead {
    pub fn new(input_dim: usize, num_classes: usize, rng: &mut impl Rng) -> Self {
        Self {
            weight: glorot(input_dim, num_classes, rng),
            bias: Tensor::zeros(1, num_classes),
        }
    }
}

/// GNN stack, readout and classifier head.
#[derive(Clone, Debug, PartialEq)]
pub struct Model {
    pub layers: Vec<GnnLayer>,
    pub pool: PoolingOperator,
    pub head: ClassifierHead,
    snr_db: Option<f64>,
}

/// Tape handles of one forward pass.
pub struct ForwardPass {
    pub logits: Var,
    pub params: Vec<Var>,
}

impl Model {
    pub fn new(config: &TrainConfig, feature_dim: usize, num_classes: usize, rng: &mut impl Rng) -> Result<Self> {
        let depth = config.gnn.depth();
        let h = config.hidden;
        let layers: Vec<GnnLayer> = (0..depth)
            .map(|i| {
                let input = if i == 0 { feature_dim } else { h };
                let act = if i + 1 == depth { Activation::None } else { Activation::Relu };
                match config.gnn {
                    GnnArch::Gin5 => GnnLayer::gin(input, h, h, config.gin_epsilon, act, rng),
                    GnnArch::Gcn3 => GnnLayer::gcn(input, h, act, rng),
                }
            })
            .collect();
        validate_stack(&layers, feature_dim)?;
        let pool = PoolingOperator::new(config.pool, h, config.d, rng)
            .with_ns_iterations(config.ns_iterations)
            .with_ridge(config.ridge_epsilon);
        let head = ClassifierHead::new(pool.output_dim(h), num_classes, rng);
        Ok(Self {
            layers,
            pool,
            head,
            snr_db: config.snr_db,
        })
    }

    pub fn parameters(&self) -> Vec<&Tensor> {
        let mut p: Vec<&Tensor> = self.layers.iter().flat_map(|l| l.weights.iter()).collect();
        p.extend(self.pool.projection.iter());
        p.push(&self.head.weight);
        p.push(&self.head.bias);
        p
    }

    pub fn parameters_mut(&mut self) -> Vec<&mut Tensor> {
        let mut p: Vec<&mut Tensor> = self.layers.iter_mut().flat_map(|l| l.weights.iter_mut()).collect();
        p.extend(self.pool.projection.iter_mut());
        p.push(&mut self.head.weight);
        p.push(&mut self.head.bias);
        p
    }

    pub fn parameter_count(&self) -> usize {
        self.parameters().iter().map(|t| t.len()).sum()
    }

    /// Hash of every parameter bit pattern.
    pub fn fingerprint(&self) -> String {
        let mut bytes = Vec::new();
        for t in self.parameters() {
            for v in t.data() {
                bytes.extend_from_slice(&v.to_bits().to_le_bytes());
            }
        }
        short_hash(&bytes)
    }

    /// Records the forward pass; `noise_rng` draws embedding noise when the
    /// model was configured with an SNR.
    pub fn forward(&self, tape: &mut Tape, batch: &GraphBatch, noise_rng: Option<&mut ChaCha8Rng>) -> Result<ForwardPass> {
        let layer_params: Vec<Vec<Var>> = self.layers.iter().map(|l| l.bind(tape)).collect();
        let w = self.pool.bind(tape);
        let head_w = tape.param(self.head.weight.clone());
        let head_b = tape.param(self.head.bias.clone());

        let x = tape.constant(batch.node_features.clone());
        let mut h = stack_forward(tape, batch, &self.layers, x, &layer_params)?;
        if let (Some(snr), Some(rng)) = (self.snr_db, noise_rng) {
            if let Some(noise) = noise_for(tape.value(h), snr, rng)? {
                let n = tape.constant(noise);
                h = tape.add(h, n)?;
            }
        }
        let mut pooled = Vec::with_capacity(batch.num_graphs());
        for g in 0..batch.num_graphs() {
            let (s, e) = batch.graph_range(g);
            let hg = tape.slice_rows(h, s, e)?;
            pooled.push(self.pool.forward(tape, hg, w)?);
        }
        let z = tape.concat_rows(&pooled)?;
        let logits = tape.matmul(z, head_w)?;
        let logits = tape.add_row(logits, head_b)?;

        let mut params: Vec<Var> = layer_params.into_iter().flatten().collect();
        params.extend(w);
        params.push(head_w);
        params.push(head_b);
        Ok(ForwardPass { logits, params })
    }

    /// Predicted class per graph; ties go to the lowest class index.
    pub fn predict(&self, batch: &GraphBatch, noise_rng: Option<&mut ChaCha8Rng>) -> Result<Vec<usize>> {
        let mut tape = Tape::new();
        let pass = self.forward(&mut tape, batch, noise_rng)?;
        let logits = tape.value(pass.logits);
        Ok((0..logits.rows())
            .map(|r| {
                let row = logits.row(r);
                let mut best = 0;
                for (j, v) in row.iter().enumerate() {
                    if *v > row[best] {
                        best = j;
                    }
                }
                best
            })
            .collect())
    }
}

/// Mean softmax cross-entropy of `logits` against `labels`.
pub fn cross_entropy(tape: &mut Tape, logits: Var, labels: &[usize]) -> Result<Var> {
    tape.cross_entropy(logits, labels)
}

#[derive(Clone, Debug)]
pub struct AdamState {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub step: u64,
    m: Vec<Tensor>,
    v: Vec<Tensor>,
}

impl AdamState {
    pub fn new(shapes: &[(usize, usize)]) -> Self {
        Self {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            step: 0,
            m: shapes.iter().map(|&(r, c)| Tensor::zeros(r, c)).collect(),
            v: shapes.iter().map(|&(r, c)| Tensor::zeros(r, c)).collect(),
        }
    }

    pub fn for_params(params: &[&Tensor]) -> Self {
        Self::new(&params.iter().map(|p| p.shape()).collect::<Vec<_>>())
    }
}

/// One Adam update with decoupled weight decay (`p ← p(1 − lr·wd)` first).
pub fn adam_step(
    params: &mut [&mut Tensor],
    grads: &[Tensor],
    state: &mut AdamState,
    lr: f64,
    weight_decay: f64,
) -> Result<()> {
    if params.len() != grads.len() || params.len() != state.m.len() {
        return Err(Error::contract(format!(
            "adam_step got {} params, {} grads, {} state slots",
            params.len(),
            grads.len(),
            state.m.len()
        )));
    }
    for (i, (p, g)) in params.iter().zip(grads).enumerate() {
        if p.shape() != g.shape() || p.shape() != state.m[i].shape() {
            return Err(Error::Dimension {
                op: "adam_step",
                left: p.shape(),
                right: g.shape(),
            });
        }
        if !g.is_finite() {
            let bad = g.data().iter().filter(|v| !v.is_finite()).count();
            return Err(Error::numeric(format!(
                "non-finite gradient for parameter {i} ({bad} of {} entries) at step {}",
                g.len(),
                state.step + 1
            )));
        }
    }
    state.step += 1;
    let t = state.step as i32;
    let (b1, b2) = (state.beta1, state.beta2);
    let c1 = 1.0 - b1.powi(t);
    let c2 = 1.0 - b2.powi(t);
    for (i, (p, g)) in params.iter_mut().zip(grads).enumerate() {
        let m = state.m[i].data_mut();
        let v = state.v[i].data_mut();
        let decay = 1.0 - lr * weight_decay;
        for (j, x) in p.data_mut().iter_mut().enumerate() {
            let gj = g.data()[j];
            m[j] = b1 * m[j] + (1.0 - b1) * gj;
            v[j] = b2 * v[j] + (1.0 - b2) * gj * gj;
            let m_hat = m[j] / c1;
            let v_hat = v[j] / c2;
            *x = *x * decay - lr * m_hat / (v_hat.sqrt() + state.eps);
        }
        if !p.is_finite() {
            return Err(Error::numeric(format!("parameter {i} became non-finite")));
        }
    }
    Ok(())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FoldReport {
    pub dataset: String,
    pub config_fingerprint: String,
    #[serde(rename = "per_fold")]
    pub per_fold_accuracy: Vec<f64>,
    pub mean: f64,
    /// Population standard deviation across folds.
    pub std: f64,
    #[serde(rename = "seconds")]
    pub wallclock_seconds: f64,
}

pub fn mean_std(values: &[f64]) -> (f64, f64) {
    if values.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    (mean, var.sqrt())
}

impl FoldReport {
    pub fn from_accuracies(dataset: &str, fingerprint: &str, per_fold: Vec<f64>, seconds: f64) -> Self {
        let (mean, std) = mean_std(&per_fold);
        Self {
            dataset: dataset.to_string(),
            config_fingerprint: fingerprint.to_string(),
            per_fold_accuracy: per_fold,
            mean,
            std,
            wallclock_seconds: seconds,
        }
    }

    /// Copy with the wall-clock field cleared; the only nondeterministic field.
    pub fn without_timing(&self) -> Self {
        Self {
            wallclock_seconds: 0.0,
            ..self.clone()
        }
    }

    /// Whether `mean` and `std` agree with `per_fold` to 1e-12.
    pub fn is_consistent(&self) -> bool {
        let (m, s) = mean_std(&self.per_fold_accuracy);
        (m - self.mean).abs() <= 1e-12 && (s - self.std).abs() <= 1e-12
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serialises")
    }
}

#[derive(Clone, Debug)]
pub struct FoldOutcome {
    pub fold: usize,
    pub accuracy: f64,
    /// Mean training loss per epoch.
    pub epoch_losses: Vec<f64>,
    pub initial_fingerprint: String,
}

#[derive(Clone, Debug)]
pub struct CvRun {
    pub report: FoldReport,
    pub folds: Vec<FoldOutcome>,
}

#[derive(Clone, Copy, Debug, Default)]
pub struct RunOptions {
    /// Train folds on the rayon pool. Results are identical either way.
    pub parallel: bool,
}

pub fn fold_seed(seed: u64, fold: usize) -> u64 {
    seed.wrapping_add(fold as u64)
}

/// Initial model for `fold`; depends only on the config and `(seed, fold)`.
pub fn init_model(config: &TrainConfig, dataset: &Dataset, fold: usize) -> Result<Model> {
    let mut rng = ChaCha8Rng::seed_from_u64(fold_seed(config.seed, fold));
    Model::new(config, dataset.feature_dim, dataset.num_classes, &mut rng)
}

fn batches<'a>(dataset: &'a Dataset, indices: &[usize], size: usize) -> Result<Vec<GraphBatch>> {
    indices
        .chunks(size)
        .map(|chunk| {
            let graphs: Vec<&'a Graph> = chunk.iter().map(|&i| &dataset.graphs[i]).collect();
            GraphBatch::from_graphs(&graphs)
        })
        .collect()
}

/// Fraction of `indices` classified correctly. Noise, when configured, is
/// drawn from a generator reseeded with `eval_seed`.
pub fn evaluate(model: &Model, dataset: &Dataset, indices: &[usize], batch_size: usize, eval_seed: u64) -> Result<f64> {
    if indices.is_empty() {
        return Err(Error::EmptyInput("evaluation set"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(eval_seed);
    let mut correct = 0;
    for batch in batches(dataset, indices, batch_size)? {
        let pred = model.predict(&batch, Some(&mut rng))?;
        correct += pred.iter().zip(&batch.labels).filter(|(p, l)| p == l).count();
    }
    Ok(correct as f64 / indices.len() as f64)
}

/// Trains one fold from scratch and scores the final epoch on `test`.
pub fn train_fold(
    dataset: &Dataset,
    config: &TrainConfig,
    fold: usize,
    train: &[usize],
    test: &[usize],
) -> Result<FoldOutcome> {
    if train.is_empty() {
        return Err(Error::EmptyInput("training set"));
    }
    let base = fold_seed(config.seed, fold);
    let mut model = init_model(config, dataset, fold)?;
    let initial_fingerprint = model.fingerprint();
    let mut adam = AdamState::for_params(&model.parameters());
    let mut shuffle_rng = ChaCha8Rng::seed_from_u64(base.wrapping_add(SHUFFLE_SEED_OFFSET));
    let mut noise_rng = ChaCha8Rng::seed_from_u64(base.wrapping_add(TRAIN_NOISE_SEED_OFFSET));
    let mut order = train.to_vec();
    let mut epoch_losses = Vec::with_capacity(config.epochs);

    for epoch in 0..config.epochs {
        let lr = config.learning_rate_at(epoch);
        order.shuffle(&mut shuffle_rng);
        let mut total = 0.0;
        for batch in batches(dataset, &order, config.batch_size)? {
            let mut tape = Tape::new();
            let pass = model.forward(&mut tape, &batch, Some(&mut noise_rng))?;
            let loss = cross_entropy(&mut tape, pass.logits, &batch.labels)?;
            let loss_value = tape.value(loss).item();
            if !loss_value.is_finite() {
                return Err(Error::numeric(format!("non-finite training loss in fold {fold}")));
            }
            total += loss_value * batch.num_graphs() as f64;
            tape.backward(loss)?;
            let grads: Vec<Tensor> = pass
                .params
                .iter()
                .map(|p| tape.grad(*p).cloned().unwrap_or_else(|| Tensor::zeros(tape.shape(*p).0, tape.shape(*p).1)))
                .collect();
            let mut params = model.parameters_mut();
            adam_step(&mut params, &grads, &mut adam, lr, config.weight_decay)?;
        }
        epoch_losses.push(total / order.len() as f64);
    }

    let accuracy = evaluate(
        &model,
        dataset,
        test,
        config.batch_size,
        base.wrapping_add(EVAL_NOISE_SEED_OFFSET),
    )?;
    Ok(FoldOutcome {
        fold,
        accuracy,
        epoch_losses,
        initial_fingerprint,
    })
}

pub fn run_cv(dataset: &Dataset, config: &TrainConfig) -> Result<FoldReport> {
    run_cv_with(dataset, config, RunOptions::default()).map(|r| r.report)
}

/// k-fold cross-validation. A failing fold aborts the run; the error carries
/// a report over the folds that did finish.
pub fn run_cv_with(dataset: &Dataset, config: &TrainConfig, options: RunOptions) -> Result<CvRun> {
    config.validate()?;
    let start = Instant::now();
    let plan = make_folds(dataset, config.folds, config.seed)?;
    let fingerprint = config.fingerprint();
    let run_fold = |fold: usize| train_fold(dataset, config, fold, &plan.train_indices(fold), &plan.test_indices(fold));
    let results: Vec<Result<FoldOutcome>> = if options.parallel {
        (0..plan.fold_count).into_par_iter().map(run_fold).collect()
    } else {
        let mut out = Vec::with_capacity(plan.fold_count);
        for fold in 0..plan.fold_count {
            let r = run_fold(fold);
            let failed = r.is_err();
            out.push(r);
            if failed {
                break;
            }
        }
        out
    };

    let mut folds = Vec::with_capacity(results.len());
    let mut failure = None;
    for (fold, r) in results.into_iter().enumerate() {
        match r {
            Ok(o) => folds.push(o),
            Err(e) => {
                failure.get_or_insert((fold, e));
            }
        }
    }
    let seconds = start.elapsed().as_secs_f64();
    let report = FoldReport::from_accuracies(
        &dataset.name,
        &fingerprint,
        folds.iter().map(|f| f.accuracy).collect(),
        seconds,
    );
    if let Some((fold, source)) = failure {
        return Err(Error::FoldAborted {
            fold,
            source: Box::new(source),
            partial: Box::new(report),
        });
    }
    Ok(CvRun { report, folds })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SweepAxis {
    D,
    Snr,
}

impl SweepAxis {
    pub fn name(self) -> &'static str {
        match self {
            SweepAxis::D => "d",
            SweepAxis::Snr => "snr",
        }
    }

    pub fn grid(self) -> Vec<f64> {
        match self {
            SweepAxis::D => D_GRID.iter().map(|&d| d as f64).collect(),
            SweepAxis::Snr => SNR_GRID.to_vec(),
        }
    }

    fn apply(self, base: &TrainConfig, value: f64) -> TrainConfig {
        let mut c = base.clone();
        match self {
            SweepAxis::D => c.d = value as usize,
            SweepAxis::Snr => c.snr_db = Some(value),
        }
        c
    }
}

impl FromStr for SweepAxis {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "d" => Ok(SweepAxis::D),
            "snr" => Ok(SweepAxis::Snr),
            _ => Err(Error::Config(format!("unknown sweep axis {s:?} (expected d or snr)"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub axis: String,
    pub value: f64,
    pub mean: f64,
    pub std: f64,
    pub seconds: f64,
}

/// One cross-validation run per grid point. Failed points become NaN rows.
pub fn sweep(dataset: &Dataset, base: &TrainConfig, axis: SweepAxis, options: RunOptions) -> Vec<SweepRow> {
    axis.grid()
        .into_iter()
        .map(|value| {
            let config = axis.apply(base, value);
            let start = Instant::now();
            match run_cv_with(dataset, &config, options) {
                Ok(run) => SweepRow {
                    axis: axis.name().to_string(),
                    value,
                    mean: run.report.mean,
                    std: run.report.std,
                    seconds: run.report.wallclock_seconds,
                },
                Err(e) => {
                    log::warn!("sweep point {}={value} failed: {e}", axis.name());
                    SweepRow {
                        axis: axis.name().to_string(),
                        value,
                        mean: f64::NAN,
                        std: f64::NAN,
                        seconds: start.elapsed().as_secs_f64(),
                    }
                }
            }
        })
        .collect()
}

/// CSV with header `axis,value,mean,std,seconds` and LF line endings.
pub fn write_sweep_csv(rows: &[SweepRow], out: impl std::io::Write) -> Result<()> {
    let mut w = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(out);
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_sweep_csv(input: impl std::io::Read) -> Result<Vec<SweepRow>> {
    let mut r = csv::Reader::from_reader(input);
    r.deserialize().map(|row| row.map_err(Error::from)).collect()
}
