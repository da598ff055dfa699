//! Supernodal sparse Cholesky factorization with selective task nesting.
//!
//! This crate holds everything that does not need an operating system: the
//! canonical sparse matrix type, fill-reducing orderings, the symbolic analysis
//! (elimination tree, column counts, supernodes, update lists), the dense
//! kernels, the granularity heuristics that decide which supernodes are split
//! into inner update tasks, the sequential and kernel-parallel numeric drivers,
//! and the triangular solves.
//!
//! The threaded task scheduler, file formats and the benchmark CLI live in the
//! `cholnest` crate, which plugs a thread pool into [`kernels::Parallelism`].
#![no_std]
// Validation uses `!(x > 0.0)` so that NaN is rejected too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]
#![warn(missing_debug_implementations)]

extern crate alloc;

#[cfg(test)]
extern crate std;

mod error;

pub mod generate;
pub mod heuristics;
pub mod kernels;
pub mod matrix;
pub mod numeric;
pub mod ordering;
pub mod solve;
pub mod symbolic;

pub use error::{Error, Result};
pub use heuristics::{ExecutionMode, NestingPlan, Strategy, StrategyConfig};
pub use kernels::{DenseBlock, Parallelism, Sequential};
pub use matrix::SparseSymmetric;
pub use numeric::NumericFactor;
pub use ordering::Permutation;
pub use symbolic::{AmalgamationParams, Analysis, EliminationTree, SupernodePartition, SymbolicFactor};
