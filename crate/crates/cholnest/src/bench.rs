//! Benchmark harness: strategy comparison, `D` sweeps and update-count
//! histograms on top of one shared analysis per matrix.

use std::fmt::{self, Write as _};
use std::io::{self, Write};
use std::path::PathBuf;
use std::str::FromStr;
use std::sync::Arc;
use std::time::Instant;

use serde::Serialize;

use cholnest_core::heuristics::{build_plan, histogram};
use cholnest_core::ordering::{min_degree_ordering, natural_ordering, select_best_ordering};
use cholnest_core::symbolic::analyze;
use cholnest_core::{
    AmalgamationParams, ExecutionMode, NestingPlan, NumericFactor, Permutation, SparseSymmetric, Strategy,
    StrategyConfig, SymbolicFactor,
};

use crate::factorize::{factorize, ExecutionStats, FactorError};
use crate::io::{load_permutation, IoError};

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum OrderingChoice {
    Natural,
    MinDegree,
    /// Natural or minimum degree, whichever predicts the smaller factor.
    Best,
    /// New-to-old permutation read from a file.
    File(PathBuf),
}

impl fmt::Display for OrderingChoice {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            OrderingChoice::Natural => f.write_str("natural"),
            OrderingChoice::MinDegree => f.write_str("mindeg"),
            OrderingChoice::Best => f.write_str("best"),
            OrderingChoice::File(p) => write!(f, "file:{}", p.display()),
        }
    }
}

impl FromStr for OrderingChoice {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "natural" => Ok(OrderingChoice::Natural),
            "mindeg" => Ok(OrderingChoice::MinDegree),
            "best" => Ok(OrderingChoice::Best),
            _ => match s.strip_prefix("file:") {
                Some(path) if !path.is_empty() => Ok(OrderingChoice::File(path.into())),
                _ => Err(format!("unknown ordering `{s}`; expected natural, mindeg, best or file:<path>")),
            },
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum BenchError {
    #[error(transparent)]
    Io(#[from] IoError),
    #[error(transparent)]
    Factor(#[from] FactorError),
    #[error(transparent)]
    Core(#[from] cholnest_core::Error),
}

impl BenchError {
    /// The input is not positive definite (as opposed to unreadable or
    /// malformed).
    pub fn is_not_spd(&self) -> bool {
        matches!(
            self,
            BenchError::Factor(FactorError::Numeric(cholnest_core::Error::NotPositiveDefinite { .. }))
                | BenchError::Core(cholnest_core::Error::NotPositiveDefinite { .. })
        )
    }
}

/// A matrix with its analysis, shared by every strategy run on it.
#[derive(Debug, Clone)]
pub struct Prepared {
    pub name: String,
    pub original: SparseSymmetric,
    /// The matrix after the fill-reducing and postorder permutations.
    pub permuted: SparseSymmetric,
    pub symbolic: Arc<SymbolicFactor>,
    /// Ordering actually used (`best` resolves to one of its candidates).
    pub ordering: String,
    pub analysis_seconds: f64,
}

pub fn prepare(
    name: impl Into<String>,
    a: SparseSymmetric,
    ordering: &OrderingChoice,
    amalgamation: AmalgamationParams,
) -> Result<Prepared, BenchError> {
    let started = Instant::now();
    let (perm, used) = match ordering {
        OrderingChoice::Natural => (natural_ordering(a.n()), ordering.to_string()),
        OrderingChoice::MinDegree => (min_degree_ordering(&a), ordering.to_string()),
        OrderingChoice::Best => {
            let candidates = [natural_ordering(a.n()), min_degree_ordering(&a)];
            let k = select_best_ordering(&a, &candidates)?;
            let used = if k == 0 { "natural" } else { "mindeg" };
            (candidates[k].clone(), used.to_string())
        }
        OrderingChoice::File(path) => (load_permutation(path)?, ordering.to_string()),
    };
    let analysis = analyze(&a, &perm, amalgamation)?;
    Ok(Prepared {
        name: name.into(),
        original: a,
        permuted: analysis.matrix,
        symbolic: Arc::new(analysis.symbolic),
        ordering: used,
        analysis_seconds: started.elapsed().as_secs_f64(),
    })
}

impl Prepared {
    pub fn perm(&self) -> &Permutation {
        &self.symbolic.perm
    }

    pub fn avg_supernode_width(&self) -> f64 {
        self.symbolic.n() as f64 / self.symbolic.n_super() as f64
    }

    pub fn plan(&self, cfg: &StrategyConfig) -> Result<NestingPlan, BenchError> {
        Ok(build_plan(&self.permuted, &self.symbolic, cfg)?)
    }

    pub fn factorize(
        &self,
        plan: &NestingPlan,
        cfg: &StrategyConfig,
    ) -> Result<(NumericFactor, ExecutionStats), BenchError> {
        Ok(factorize(&self.permuted, Arc::clone(&self.symbolic), plan, cfg)?)
    }
}

#[derive(Debug, Clone)]
pub struct BenchOptions {
    pub strategies: Vec<Strategy>,
    /// Shared settings; `strategy` is overridden per run.
    pub config: StrategyConfig,
    pub runs: usize,
    /// Untimed factorizations before the timed ones, per strategy.
    pub warmup: usize,
    pub baseline: Strategy,
}

impl Default for BenchOptions {
    fn default() -> Self {
        Self {
            strategies: Strategy::ALL.to_vec(),
            config: StrategyConfig::default(),
            runs: 1,
            warmup: 1,
            baseline: Strategy::NonNested,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct StrategyResult {
    pub strategy: Strategy,
    pub mode: ExecutionMode,
    pub chosen_d: Option<usize>,
    pub n_split: usize,
    /// Task count predicted from the split rule alone (no cost gate).
    pub predicted_tasks: usize,
    pub n_inner_created: usize,
    pub n_inner_embedded: usize,
    pub total_tasks: usize,
    pub wall_mean_s: f64,
    pub wall_min_s: f64,
    pub wall_times_s: Vec<f64>,
    /// Baseline mean over this strategy's mean.
    pub speedup_mean: Option<f64>,
    /// Baseline min over this strategy's min.
    pub speedup_min: Option<f64>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, Serialize)]
pub struct BenchReport {
    pub matrix: String,
    pub n: usize,
    pub nnz_lower: usize,
    pub nnz_full: usize,
    pub density: f64,
    pub n_super: usize,
    pub avg_supernode_width: f64,
    pub nnz_l: usize,
    pub ordering: String,
    pub analysis_s: f64,
    pub threads: usize,
    pub runs: usize,
    pub warmup: usize,
    pub baseline: Strategy,
    pub timing: &'static str,
    pub scheduling: &'static str,
    pub strategies: Vec<StrategyResult>,
    pub error: Option<String>,
}

const TIMING_NOTE: &str =
    "wall time of the numeric factorization only: worker start-up included; analysis, I/O and warm-up runs excluded";
const SCHEDULING_NOTE: &str =
    "per-worker FIFO deques for inner and outer tasks with stealing; inner work preferred; joins run inner tasks only";

/// Everything produced by benchmarking one matrix.
#[derive(Debug)]
pub struct BenchOutcome {
    pub report: BenchReport,
    /// Stats of the last timed run of each strategy that succeeded.
    pub stats: Vec<(Strategy, ExecutionStats)>,
    /// Factor from the first strategy that succeeded.
    pub factor: Option<NumericFactor>,
    /// First failure, kept typed so callers can tell not-SPD inputs apart.
    pub failure: Option<BenchError>,
}

pub fn benchmark(prep: &Prepared, opts: &BenchOptions) -> BenchOutcome {
    let mut strategies = opts.strategies.clone();
    if !strategies.contains(&opts.baseline) {
        strategies.insert(0, opts.baseline);
    }
    let mut results = Vec::new();
    let mut stats = Vec::new();
    let mut factor = None;
    let mut failure = None;
    for &strategy in &strategies {
        let cfg = StrategyConfig { strategy, ..opts.config.clone() };
        match run_strategy(prep, &cfg, opts.runs, opts.warmup) {
            Ok((result, f, s)) => {
                results.push(result);
                stats.push((strategy, s));
                if factor.is_none() {
                    factor = Some(f);
                }
            }
            Err(err) => {
                results.push(failed(strategy, &err));
                failure.get_or_insert(err);
            }
        }
    }
    let base = results
        .iter()
        .find(|r| r.strategy == opts.baseline && r.error.is_none())
        .map(|r| (r.wall_mean_s, r.wall_min_s));
    if let Some((mean, min)) = base {
        for r in results.iter_mut().filter(|r| r.error.is_none()) {
            r.speedup_mean = Some(mean / r.wall_mean_s);
            r.speedup_min = Some(min / r.wall_min_s);
        }
    }
    let report = BenchReport {
        matrix: prep.name.clone(),
        n: prep.original.n(),
        nnz_lower: prep.original.nnz(),
        nnz_full: prep.original.nnz_full(),
        density: prep.original.density(),
        n_super: prep.symbolic.n_super(),
        avg_supernode_width: prep.avg_supernode_width(),
        nnz_l: prep.symbolic.nnz_l(),
        ordering: prep.ordering.clone(),
        analysis_s: prep.analysis_seconds,
        threads: opts.config.threads,
        runs: opts.runs,
        warmup: opts.warmup,
        baseline: opts.baseline,
        timing: TIMING_NOTE,
        scheduling: SCHEDULING_NOTE,
        strategies: results,
        error: None,
    };
    BenchOutcome { report, stats, factor, failure }
}

/// A report for a matrix that could not be loaded or analysed.
pub fn failed_report(name: &str, opts: &BenchOptions, err: &BenchError) -> BenchReport {
    BenchReport {
        matrix: name.to_string(),
        n: 0,
        nnz_lower: 0,
        nnz_full: 0,
        density: 0.0,
        n_super: 0,
        avg_supernode_width: 0.0,
        nnz_l: 0,
        ordering: String::new(),
        analysis_s: 0.0,
        threads: opts.config.threads,
        runs: opts.runs,
        warmup: opts.warmup,
        baseline: opts.baseline,
        timing: TIMING_NOTE,
        scheduling: SCHEDULING_NOTE,
        strategies: Vec::new(),
        error: Some(err.to_string()),
    }
}

fn failed(strategy: Strategy, err: &BenchError) -> StrategyResult {
    StrategyResult {
        strategy,
        mode: ExecutionMode::TaskBased,
        chosen_d: None,
        n_split: 0,
        predicted_tasks: 0,
        n_inner_created: 0,
        n_inner_embedded: 0,
        total_tasks: 0,
        wall_mean_s: f64::NAN,
        wall_min_s: f64::NAN,
        wall_times_s: Vec::new(),
        speedup_mean: None,
        speedup_min: None,
        error: Some(err.to_string()),
    }
}

/// Warm-up plus `runs` timed factorizations of one strategy.
pub fn run_strategy(
    prep: &Prepared,
    cfg: &StrategyConfig,
    runs: usize,
    warmup: usize,
) -> Result<(StrategyResult, NumericFactor, ExecutionStats), BenchError> {
    let plan = prep.plan(cfg)?;
    for _ in 0..warmup {
        prep.factorize(&plan, cfg)?;
    }
    let mut times = Vec::with_capacity(runs);
    let mut last = None;
    for _ in 0..runs.max(1) {
        let (f, s) = prep.factorize(&plan, cfg)?;
        times.push(s.wall_time.as_secs_f64());
        last = Some((f, s));
    }
    let (factor, stats) = last.expect("at least one run");
    let result = StrategyResult {
        strategy: cfg.strategy,
        mode: plan.mode,
        chosen_d: plan.d,
        n_split: plan.n_split(),
        predicted_tasks: plan.predicted_tasks,
        n_inner_created: stats.n_inner_created,
        n_inner_embedded: stats.n_inner_embedded,
        total_tasks: stats.total_tasks(),
        wall_mean_s: times.iter().sum::<f64>() / times.len() as f64,
        wall_min_s: times.iter().copied().fold(f64::INFINITY, f64::min),
        wall_times_s: times,
        speedup_mean: None,
        speedup_min: None,
        error: None,
    };
    Ok((result, factor, stats))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepRow {
    pub d: usize,
    pub wall_mean_s: f64,
    pub wall_min_s: f64,
    pub total_tasks: usize,
    pub n_inner_created: usize,
    pub predicted_tasks: usize,
}

/// Task-based factorization with the split threshold forced to each `D`.
/// With `cost_gate` the flop gate of `cfg` also applies.
pub fn sweep_d(
    prep: &Prepared,
    ds: impl IntoIterator<Item = usize>,
    cfg: &StrategyConfig,
    runs: usize,
    warmup: usize,
    cost_gate: bool,
) -> Result<Vec<SweepRow>, BenchError> {
    let counts = prep.symbolic.inner_counts();
    let (strategy, gate) =
        if cost_gate { (Strategy::OptDCost, Some(cfg.cost_threshold)) } else { (Strategy::OptD, None) };
    let cfg = StrategyConfig { strategy, ..cfg.clone() };
    let mut rows = Vec::new();
    for d in ds {
        let plan = NestingPlan::with_threshold(strategy, counts, Some(d), gate);
        for _ in 0..warmup {
            prep.factorize(&plan, &cfg)?;
        }
        let mut times = Vec::new();
        let mut last = None;
        for _ in 0..runs.max(1) {
            let (_, s) = prep.factorize(&plan, &cfg)?;
            times.push(s.wall_time.as_secs_f64());
            last = Some(s);
        }
        let stats = last.expect("at least one run");
        rows.push(SweepRow {
            d,
            wall_mean_s: times.iter().sum::<f64>() / times.len() as f64,
            wall_min_s: times.iter().copied().fold(f64::INFINITY, f64::min),
            total_tasks: stats.total_tasks(),
            n_inner_created: stats.n_inner_created,
            predicted_tasks: plan.predicted_tasks,
        });
    }
    Ok(rows)
}

/// Non-empty buckets of the update-count histogram as `(count, outer tasks)`.
pub fn histogram_rows(sym: &SymbolicFactor) -> Vec<(usize, usize)> {
    histogram(sym.inner_counts()).into_iter().enumerate().filter(|&(_, y)| y > 0).collect()
}

pub fn write_histogram_csv<W: Write>(mut w: W, rows: &[(usize, usize)]) -> io::Result<()> {
    writeln!(w, "x,y")?;
    for (x, y) in rows {
        writeln!(w, "{x},{y}")?;
    }
    w.flush()
}

pub fn write_sweep_csv<W: Write>(mut w: W, rows: &[SweepRow]) -> io::Result<()> {
    writeln!(w, "d,wall_mean_s,wall_min_s,total_tasks,n_inner_created,predicted_tasks")?;
    for r in rows {
        writeln!(
            w,
            "{},{:.9},{:.9},{},{},{}",
            r.d, r.wall_mean_s, r.wall_min_s, r.total_tasks, r.n_inner_created, r.predicted_tasks
        )?;
    }
    w.flush()
}

/// Human-readable table for standard output.
pub fn format_report(r: &BenchReport) -> String {
    let mut out = String::new();
    if let Some(err) = &r.error {
        let _ = writeln!(out, "{}: error: {err}", r.matrix);
        return out;
    }
    let _ = writeln!(
        out,
        "{}: n={} nnz={} density={:.3e} n_super={} avg_width={:.2} nnz(L)={} ordering={} threads={} runs={}",
        r.matrix, r.n, r.nnz_full, r.density, r.n_super, r.avg_supernode_width, r.nnz_l, r.ordering, r.threads, r.runs
    );
    let _ = writeln!(
        out,
        "  {:<16} {:<15} {:>6} {:>9} {:>9} {:>9} {:>12} {:>12} {:>8}",
        "strategy", "mode", "D", "tasks", "inner", "inline", "mean (s)", "min (s)", "speedup"
    );
    for s in &r.strategies {
        if let Some(err) = &s.error {
            let _ = writeln!(out, "  {:<16} error: {err}", s.strategy.name());
            continue;
        }
        let mode = match s.mode {
            ExecutionMode::TaskBased => "task-based",
            ExecutionMode::KernelParallel => "kernel-parallel",
        };
        let d = s.chosen_d.map_or_else(|| "-".to_string(), |d| d.to_string());
        let speedup = s.speedup_mean.map_or_else(|| "-".to_string(), |x| format!("{x:.3}"));
        let _ = writeln!(
            out,
            "  {:<16} {:<15} {:>6} {:>9} {:>9} {:>9} {:>12.6} {:>12.6} {:>8}",
            s.strategy.name(),
            mode,
            d,
            s.total_tasks,
            s.n_inner_created,
            s.n_inner_embedded,
            s.wall_mean_s,
            s.wall_min_s,
            speedup
        );
    }
    out
}
