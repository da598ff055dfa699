//! Task-granularity heuristics.
//!
//! An outer task (one supernode) is split into inner tasks (one per update it
//! receives) when its update count reaches a threshold `D`. Opt-D picks `D`
//! from the distribution of update counts; Opt-D-Cost additionally keeps
//! updates cheaper than a flop threshold inline; the hybrid dispatch switches
//! to kernel-level parallelism for wide supernodes.

use alloc::vec;
use alloc::vec::Vec;
use core::fmt;
use core::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::{Error, Result, SparseSymmetric, SymbolicFactor};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Strategy {
    /// Never create inner tasks (`D = ∞`).
    NonNested,
    /// Split every outer task that has updates (`D = 1`).
    Nested,
    OptD,
    OptDCost,
    /// Supernodes in order, dense kernels parallel.
    KernelParallel,
    /// Hybrid: kernel-parallel for wide supernodes, Opt-D-Cost otherwise.
    Auto,
}

impl Strategy {
    pub const ALL: [Strategy; 6] = [
        Strategy::NonNested,
        Strategy::Nested,
        Strategy::OptD,
        Strategy::OptDCost,
        Strategy::KernelParallel,
        Strategy::Auto,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Strategy::NonNested => "non-nested",
            Strategy::Nested => "nested",
            Strategy::OptD => "opt-d",
            Strategy::OptDCost => "opt-d-cost",
            Strategy::KernelParallel => "kernel-parallel",
            Strategy::Auto => "auto",
        }
    }

    /// Whether inner tasks pass through the flop-cost gate.
    pub fn uses_cost_gate(self) -> bool {
        matches!(self, Strategy::OptDCost | Strategy::Auto)
    }
}

impl fmt::Display for Strategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct UnknownStrategy;

impl fmt::Display for UnknownStrategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("expected one of non-nested, nested, opt-d, opt-d-cost, kernel-parallel, auto")
    }
}

impl core::error::Error for UnknownStrategy {}

impl FromStr for Strategy {
    type Err = UnknownStrategy;

    fn from_str(s: &str) -> core::result::Result<Self, Self::Err> {
        Strategy::ALL.into_iter().find(|k| k.name() == s).ok_or(UnknownStrategy)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ExecutionMode {
    TaskBased,
    KernelParallel,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StrategyConfig {
    pub strategy: Strategy,
    /// Forces `D` for the Opt-D family instead of computing it.
    pub d_override: Option<usize>,
    /// Flop threshold below which an inner task is kept inline.
    pub cost_threshold: f64,
    pub threads: usize,
    /// `goalTasks = max(goal_factor · n_super, n / goal_divisor)`.
    pub goal_divisor: f64,
    pub goal_factor: f64,
    /// `D` must not exceed this fraction of the largest update count.
    pub d_cap_fraction: f64,
    /// At least this fraction of outer tasks must be split.
    pub outer_floor_fraction: f64,
    /// Average supernode width above which kernel parallelism is used.
    pub mode_size_hi: f64,
    /// Width above which kernel parallelism is used for very sparse matrices.
    pub mode_size_lo: f64,
    pub mode_density: f64,
    /// One assembly lock for all supernodes instead of one per supernode.
    pub global_lock: bool,
    /// Apply updates in `STi` order at the join point, for bit-reproducibility.
    pub deterministic: bool,
}

impl Default for StrategyConfig {
    fn default() -> Self {
        Self {
            strategy: Strategy::Auto,
            d_override: None,
            cost_threshold: 50_000.0,
            threads: 1,
            goal_divisor: 14.0,
            goal_factor: 1.1,
            d_cap_fraction: 0.3,
            outer_floor_fraction: 0.001,
            mode_size_hi: 50.0,
            mode_size_lo: 20.0,
            mode_density: 1e-4,
            global_lock: false,
            deterministic: false,
        }
    }
}

impl StrategyConfig {
    pub fn with_strategy(strategy: Strategy) -> Self {
        Self { strategy, ..Self::default() }
    }

    pub fn validate(&self) -> core::result::Result<(), &'static str> {
        if self.threads == 0 {
            return Err("threads must be at least 1");
        }
        if !(self.cost_threshold >= 0.0) {
            return Err("cost threshold must be non-negative");
        }
        if !(self.d_cap_fraction > 0.0 && self.d_cap_fraction <= 1.0) {
            return Err("D cap fraction must lie in (0, 1]");
        }
        if !(self.goal_divisor > 0.0) || !(self.goal_factor >= 0.0) || !(self.outer_floor_fraction >= 0.0) {
            return Err("Opt-D constants must be positive");
        }
        Ok(())
    }
}

/// Which outer tasks are split, and how the factorization runs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NestingPlan {
    pub strategy: Strategy,
    /// Split threshold; `None` means no outer task is split.
    pub d: Option<usize>,
    pub split: Vec<bool>,
    pub mode: ExecutionMode,
    /// Inner tasks cheaper than this many flops stay inline.
    pub cost_gate: Option<f64>,
    /// `n_super + Σ C[s]` over split supernodes; ignores the cost gate.
    pub predicted_tasks: usize,
}

impl NestingPlan {
    /// Splits every supernode with at least `d` updates.
    pub fn with_threshold(strategy: Strategy, counts: &[usize], d: Option<usize>, cost_gate: Option<f64>) -> Self {
        let split: Vec<bool> = counts.iter().map(|&c| d.is_some_and(|d| c >= d)).collect();
        let predicted_tasks =
            counts.len() + counts.iter().zip(&split).filter(|(_, &s)| s).map(|(&c, _)| c).sum::<usize>();
        Self { strategy, d, split, mode: ExecutionMode::TaskBased, cost_gate, predicted_tasks }
    }

    fn kernel_parallel(strategy: Strategy, n_super: usize) -> Self {
        Self {
            strategy,
            d: None,
            split: vec![false; n_super],
            mode: ExecutionMode::KernelParallel,
            cost_gate: None,
            predicted_tasks: n_super,
        }
    }

    pub fn n_split(&self) -> usize {
        self.split.iter().filter(|&&s| s).count()
    }

    /// Whether the update `d → s` runs as its own inner task rather than
    /// inline in the outer task of `s`.
    pub fn creates_inner(&self, sym: &SymbolicFactor, d: usize, s: usize) -> bool {
        self.split[s] && self.cost_gate.is_none_or(|gate| sym.update_cost(d, s) >= gate)
    }

    /// Inner tasks this plan creates, cost gate included.
    pub fn inner_tasks(&self, sym: &SymbolicFactor) -> usize {
        (0..sym.n_super())
            .filter(|&s| self.split[s])
            .map(|s| sym.update_sources(s).iter().filter(|&&d| self.creates_inner(sym, d, s)).count())
            .sum()
    }
}

/// A non-negative decimal constant as an exact fraction, so the Opt-D loop
/// compares against `1.1 · n_super` rather than its rounded float.
#[derive(Debug, Clone, Copy)]
struct Fraction {
    num: u128,
    den: u128,
}

impl Fraction {
    fn from_decimal(x: f64) -> Self {
        let mut den: u128 = 1;
        for _ in 0..=12 {
            let scaled = x * den as f64;
            let rounded = libm::round(scaled);
            if rounded / den as f64 == x {
                return Self { num: rounded as u128, den };
            }
            den *= 10;
        }
        // Not a short decimal: fall back to the nearest fraction at 1e-12.
        Self { num: libm::round(x * den as f64) as u128, den }
    }

    /// `value < self · k`
    fn scaled_exceeds(self, value: u128, k: u128) -> bool {
        value * self.den < self.num * k
    }
}

/// Opt-D: the first `D` (walking down from `max(C) + 1`) that yields enough
/// tasks, is at most `d_cap_fraction · max(C)`, and splits at least
/// `outer_floor_fraction · n_super` outer tasks.
pub fn opt_d(n: usize, n_super: usize, counts: &[usize], cfg: &StrategyConfig) -> Result<usize> {
    if counts.is_empty() {
        return Err(Error::EmptyCounts);
    }
    if counts.len() != n_super {
        return Err(Error::DimensionMismatch { expected: n_super, found: counts.len() });
    }
    let factor = Fraction::from_decimal(cfg.goal_factor);
    let divisor = Fraction::from_decimal(cfg.goal_divisor);
    let cap = Fraction::from_decimal(cfg.d_cap_fraction);
    let floor = Fraction::from_decimal(cfg.outer_floor_fraction);

    let max_children = counts.iter().copied().max().unwrap_or(0);
    let buckets = histogram(counts);

    let (n, n_super) = (n as u128, n_super as u128);
    let max_c = max_children as u128;
    let mut d = max_children + 1;
    let mut num_outer: u128 = 0;
    let mut num_tasks: u128 = n_super;
    loop {
        // numTasks < max(f·n_super, n/div)  ⇔  below either term.
        let below_goal = factor.scaled_exceeds(num_tasks, n_super) || num_tasks * divisor.num < n * divisor.den;
        let above_cap = (d as u128) * cap.den > cap.num * max_c;
        let too_few_outer = floor.scaled_exceeds(num_outer, n_super);
        if !((below_goal || above_cap || too_few_outer) && d > 0) {
            break;
        }
        d -= 1;
        num_outer += buckets[d] as u128;
        num_tasks += d as u128 * buckets[d] as u128;
    }
    Ok(d)
}

/// Bucket array `T`: `T[c]` outer tasks have exactly `c` updates. Sized
/// `max(C) + 1` so both 0 and `max(C)` are representable.
pub fn histogram(counts: &[usize]) -> Vec<usize> {
    let max = counts.iter().copied().max().unwrap_or(0);
    let mut buckets = vec![0usize; max + 1];
    for &c in counts {
        buckets[c] += 1;
    }
    buckets
}

/// Flops of one inner task: a symmetric rank-`k` update of the `r_s` rows
/// landing in the destination's diagonal block (lower triangle only) plus
/// the general product for the `r_o` rows below it.
pub fn inner_task_cost(k: usize, r_s: usize, r_o: usize) -> f64 {
    let (k, r_s, r_o) = (k as f64, r_s as f64, r_o as f64);
    r_s * (r_s + 1.0) * k + 2.0 * r_o * r_s * k
}

/// An inner task is created unless it is cheaper than the threshold.
pub fn should_create_inner(cost: f64, cfg: &StrategyConfig) -> bool {
    cost >= cfg.cost_threshold
}

pub fn select_execution_mode(avg_supernode_width: f64, density: f64, cfg: &StrategyConfig) -> ExecutionMode {
    if avg_supernode_width > cfg.mode_size_hi || (avg_supernode_width > cfg.mode_size_lo && density < cfg.mode_density)
    {
        ExecutionMode::KernelParallel
    } else {
        ExecutionMode::TaskBased
    }
}

pub fn build_plan(a: &SparseSymmetric, sym: &SymbolicFactor, cfg: &StrategyConfig) -> Result<NestingPlan> {
    let counts = sym.inner_counts();
    let n_super = sym.n_super();
    let gate = cfg.strategy.uses_cost_gate().then_some(cfg.cost_threshold);
    let opt = |gate| -> Result<NestingPlan> {
        let d = match cfg.d_override {
            Some(d) => d,
            None => opt_d(a.n(), n_super, counts, cfg)?,
        };
        Ok(NestingPlan::with_threshold(cfg.strategy, counts, Some(d), gate))
    };
    match cfg.strategy {
        Strategy::NonNested => Ok(NestingPlan::with_threshold(cfg.strategy, counts, None, None)),
        Strategy::Nested => Ok(NestingPlan::with_threshold(cfg.strategy, counts, Some(1), None)),
        Strategy::OptD | Strategy::OptDCost => opt(gate),
        Strategy::KernelParallel => Ok(NestingPlan::kernel_parallel(cfg.strategy, n_super)),
        Strategy::Auto => {
            let width = a.n() as f64 / n_super as f64;
            match select_execution_mode(width, a.density(), cfg) {
                ExecutionMode::KernelParallel => Ok(NestingPlan::kernel_parallel(cfg.strategy, n_super)),
                ExecutionMode::TaskBased => opt(gate),
            }
        }
    }
}
