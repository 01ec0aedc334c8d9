//! Graph readouts: flat reductions, Gaussian-statistics baselines and
//! distribution knowledge embedding (`z = WᵀΣμ`) with its square-root
//! normalised variant.
//!
//! Every readout maps the `n x f` embeddings of one graph to a `1 x k` row
//! whose width `k` depends only on the operator configuration.

use std::fmt;
use std::str::FromStr;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{newton_schulz_sqrt, DEFAULT_NS_ITERATIONS};
use crate::tape::{Axis, ReduceOp, Tape, Var};
use crate::tensor::Tensor;

pub const DEFAULT_RIDGE_EPSILON: f64 = 1e-4;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum PoolKind {
    #[serde(rename = "mean")]
    Mean,
    #[serde(rename = "sum")]
    Sum,
    #[serde(rename = "max")]
    Max,
    #[serde(rename = "dkepool")]
    Dkepool,
    #[serde(rename = "dkepool_r")]
    DkepoolRobust,
    #[serde(rename = "gauss_vcat")]
    GaussVcat,
    #[serde(rename = "gauss_embd")]
    GaussEmbd,
}

impl PoolKind {
    pub const ALL: [PoolKind; 7] = [
        PoolKind::Mean,
        PoolKind::Sum,
        PoolKind::Max,
        PoolKind::Dkepool,
        PoolKind::DkepoolRobust,
        PoolKind::GaussVcat,
        PoolKind::GaussEmbd,
    ];

    pub fn name(self) -> &'static str {
        match self {
            PoolKind::Mean => "mean",
            PoolKind::Sum => "sum",
            PoolKind::Max => "max",
            PoolKind::Dkepool => "dkepool",
            PoolKind::DkepoolRobust => "dkepool_r",
            PoolKind::GaussVcat => "gauss_vcat",
            PoolKind::GaussEmbd => "gauss_embd",
        }
    }

    pub fn uses_projection(self) -> bool {
        matches!(self, PoolKind::Dkepool | PoolKind::DkepoolRobust)
    }

    pub fn uses_gaussian(self) -> bool {
        matches!(
            self,
            PoolKind::Dkepool | PoolKind::DkepoolRobust | PoolKind::GaussVcat | PoolKind::GaussEmbd
        )
    }

    /// Readout width for `f` input features; `d = 0` means no projection.
    pub fn output_dim(self, f: usize, d: usize) -> usize {
        match self {
            PoolKind::Mean | PoolKind::Sum | PoolKind::Max => f,
            PoolKind::Dkepool | PoolKind::DkepoolRobust => {
                if d == 0 {
                    f
                } else {
                    d
                }
            }
            PoolKind::GaussVcat => f * (f + 1),
            PoolKind::GaussEmbd => (f + 1) * (f + 1),
        }
    }
}

impl fmt::Display for PoolKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for PoolKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        PoolKind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown pooling kind {s:?}")))
    }
}

/// Mean (`1 x f`) and covariance (`f x f`) of one graph's embeddings, as
/// tape nodes.
#[derive(Clone, Copy, Debug)]
pub struct GaussianStats {
    pub mu: Var,
    pub sigma: Var,
    pub n: usize,
}

/// Maximum-likelihood mean and covariance, `Σ = (1/n)(H − 1μᵀ)ᵀ(H − 1μᵀ) + εI`.
pub fn estimate_gaussian(tape: &mut Tape, h: Var, ridge_epsilon: f64) -> Result<GaussianStats> {
    let (n, f) = tape.shape(h);
    if n == 0 {
        return Err(Error::EmptyGraph("cannot estimate statistics of zero nodes".into()));
    }
    if ridge_epsilon.is_nan() || ridge_epsilon < 0.0 {
        return Err(Error::contract("ridge epsilon must be non-negative"));
    }
    let mu = tape.reduce(h, ReduceOp::Mean, Axis::Rows)?;
    let centered = tape.sub_row(h, mu)?;
    let ct = tape.transpose(centered);
    let scatter = tape.matmul(ct, centered)?;
    let mut sigma = tape.scale(scatter, 1.0 / n as f64);
    if ridge_epsilon > 0.0 {
        let ridge = tape.constant(Tensor::identity(f).scale(ridge_epsilon));
        sigma = tape.add(sigma, ridge)?;
    }
    Ok(GaussianStats { mu, sigma, n })
}

fn check_projection(tape: &Tape, stats: &GaussianStats, w: Option<Var>) -> Result<()> {
    let f = tape.shape(stats.mu).1;
    if let Some(w) = w {
        if tape.shape(w).0 != f {
            return Err(Error::contract(format!(
                "projection is {:?} but statistics have {f} features",
                tape.shape(w)
            )));
        }
    }
    Ok(())
}

/// `(M μ)ᵀ W` as a `1 x d` row, or `(M μ)ᵀ` when there is no projection.
fn project(tape: &mut Tape, m: Var, mu: Var, w: Option<Var>) -> Result<Var> {
    let mu_col = tape.transpose(mu);
    let mapped = tape.matmul(m, mu_col)?;
    let row = tape.transpose(mapped);
    match w {
        Some(w) => tape.matmul(row, w),
        None => Ok(row),
    }
}

/// `z = WᵀΣμ`; without `W`, the covariance-mapped mean `Σμ`.
pub fn dkepool(tape: &mut Tape, stats: &GaussianStats, w: Option<Var>) -> Result<Var> {
    check_projection(tape, stats, w)?;
    project(tape, stats.sigma, stats.mu, w)
}

/// `z = WᵀΣ̂μ` with `Σ̂` the Newton-Schulz square root of `Σ`.
pub fn dkepool_robust(tape: &mut Tape, stats: &GaussianStats, w: Option<Var>, iterations: usize) -> Result<Var> {
    check_projection(tape, stats, w)?;
    let root = newton_schulz_sqrt(tape, stats.sigma, iterations)?;
    project(tape, root, stats.mu, w)
}

/// `Σ + μμᵀ`.
fn second_moment(tape: &mut Tape, stats: &GaussianStats) -> Result<Var> {
    let mu_col = tape.transpose(stats.mu);
    let outer = tape.matmul(mu_col, stats.mu)?;
    tape.add(stats.sigma, outer)
}

/// `[[Σ + μμᵀ, μ], [μᵀ, 1]]` flattened row-major to `1 x (f+1)²`.
pub fn gauss_embd(tape: &mut Tape, stats: &GaussianStats) -> Result<Var> {
    let f = tape.shape(stats.mu).1;
    let moment = second_moment(tape, stats)?;
    let mu_col = tape.transpose(stats.mu);
    let top = tape.concat_cols(&[moment, mu_col])?;
    let one = tape.constant(Tensor::scalar(1.0));
    let bottom = tape.concat_cols(&[stats.mu, one])?;
    let block = tape.concat_rows(&[top, bottom])?;
    let m = tape.value(block);
    if m.asymmetry() > 1e-12 * m.max_abs().max(1.0) {
        return Err(Error::contract(format!(
            "gaussian embedding is not symmetric (asymmetry {:e})",
            m.asymmetry()
        )));
    }
    tape.reshape(block, 1, (f + 1) * (f + 1))
}

/// `[vec(Σ + μμᵀ), μ]` as `1 x f(f+1)`.
pub fn gauss_vcat(tape: &mut Tape, stats: &GaussianStats) -> Result<Var> {
    let f = tape.shape(stats.mu).1;
    let moment = second_moment(tape, stats)?;
    let flat = tape.reshape(moment, 1, f * f)?;
    tape.concat_cols(&[flat, stats.mu])
}

/// Column-wise mean, sum or max over the node rows.
pub fn flat_pool(tape: &mut Tape, h: Var, kind: ReduceOp) -> Result<Var> {
    if tape.shape(h).0 == 0 {
        return Err(Error::EmptyGraph("cannot pool zero nodes".into()));
    }
    tape.reduce(h, kind, Axis::Rows)
}

/// A configured readout with its optional learned projection.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PoolingOperator {
    pub kind: PoolKind,
    /// `f x d` projection for the dkepool kinds when `d > 0`.
    pub projection: Option<Tensor>,
    pub d: usize,
    pub ns_iterations: usize,
    pub ridge_epsilon: f64,
}

impl PoolingOperator {
    pub fn new(kind: PoolKind, f: usize, d: usize, rng: &mut impl Rng) -> Self {
        let projection = (kind.uses_projection() && d > 0).then(|| {
            let a = 1.0 / (f as f64).sqrt();
            Tensor::from_fn(f, d, |_, _| rng.random_range(-a..a))
        });
        Self {
            kind,
            projection,
            d,
            ns_iterations: DEFAULT_NS_ITERATIONS,
            ridge_epsilon: DEFAULT_RIDGE_EPSILON,
        }
    }

    pub fn with_ns_iterations(mut self, iterations: usize) -> Self {
        self.ns_iterations = iterations;
        self
    }

    pub fn with_ridge(mut self, epsilon: f64) -> Self {
        self.ridge_epsilon = epsilon;
        self
    }

    pub fn output_dim(&self, f: usize) -> usize {
        let d = if self.projection.is_some() { self.d } else { 0 };
        self.kind.output_dim(f, d)
    }

    pub fn bind(&self, tape: &mut Tape) -> Option<Var> {
        self.projection.as_ref().map(|w| tape.param(w.clone()))
    }

    /// Reads out one graph's `n x f` embeddings.
    pub fn forward(&self, tape: &mut Tape, h: Var, w: Option<Var>) -> Result<Var> {
        match self.kind {
            PoolKind::Mean => flat_pool(tape, h, ReduceOp::Mean),
            PoolKind::Sum => flat_pool(tape, h, ReduceOp::Sum),
            PoolKind::Max => flat_pool(tape, h, ReduceOp::Max),
            kind => {
                let stats = estimate_gaussian(tape, h, self.ridge_epsilon)?;
                match kind {
                    PoolKind::Dkepool => dkepool(tape, &stats, w),
                    PoolKind::DkepoolRobust => dkepool_robust(tape, &stats, w, self.ns_iterations),
                    PoolKind::GaussVcat => gauss_vcat(tape, &stats),
                    PoolKind::GaussEmbd => gauss_embd(tape, &stats),
                    _ => unreachable!(),
                }
            }
        }
    }
}
