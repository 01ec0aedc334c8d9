//! Graph classification with covariance-mapped mean pooling.
//!
//! The crate bundles a small dense reverse-mode tape, the symmetric linear
//! algebra the pooling operators need, GCN and GIN message passing, the
//! readout operators, a TU-format loader and the cross-validation loop.

pub mod bench;
pub mod data;
pub mod error;
pub mod gnn;
pub mod gradcheck;
pub mod linalg;
pub mod pooling;
pub mod tape;
pub mod tensor;
pub mod testing;
pub mod train;

pub use error::{Error, Result};
pub use tape::{Tape, Var};
pub use tensor::{SparseMatrix, Tensor};
