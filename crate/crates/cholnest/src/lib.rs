//! Threaded supernodal Cholesky factorization with selective task nesting.
//!
//! The analysis, kernels and heuristics come from `cholnest-core` and are
//! re-exported here. This crate adds what needs an operating system: the
//! task scheduler and kernel thread pool, Matrix Market and vector files,
//! execution traces and the benchmark harness behind the `solver` binary.

pub mod bench;
pub mod cli;
pub mod factorize;
pub mod io;
pub mod pool;
pub mod trace;

pub use cholnest_core::{generate, heuristics, kernels, matrix, numeric, ordering, solve, symbolic};
pub use cholnest_core::{
    AmalgamationParams, Analysis, DenseBlock, Error, ExecutionMode, NestingPlan, NumericFactor, Permutation,
    SparseSymmetric, Strategy, StrategyConfig, SymbolicFactor,
};
pub use factorize::{factorize, kernel_parallel_factorize, ExecutionStats, FactorError, TaskKind, TaskRecord};
