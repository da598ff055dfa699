//! The `solver` command line.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand};
use rand::rngs::StdRng;
use rand::SeedableRng;

use cholnest_core::generate;
use cholnest_core::solve::{relative_residual, solve};
use cholnest_core::{AmalgamationParams, Strategy, StrategyConfig};

use crate::bench::{
    benchmark, failed_report, format_report, histogram_rows, prepare, sweep_d, write_histogram_csv, write_sweep_csv,
    BenchError, BenchOptions, BenchReport, OrderingChoice,
};
use crate::io::{load_matrix, load_vector, save_matrix, save_vector};
use crate::trace::write_trace;

/// Exit status for inputs that are not symmetric positive definite.
pub const EXIT_NOT_SPD: i32 = 2;

#[derive(Debug, Parser)]
#[command(name = "solver", version, about = "Supernodal sparse Cholesky with selective task nesting")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Factor one or more Matrix Market files and compare strategies.
    Factor(Box<FactorArgs>),
    /// Write a generated SPD test matrix in Matrix Market format.
    Generate(GenerateArgs),
}

#[derive(Debug, Args)]
pub struct FactorArgs {
    #[arg(required = true, value_name = "MATRIX.mtx")]
    pub matrices: Vec<PathBuf>,
    /// Comma-separated strategies to run.
    #[arg(long, value_delimiter = ',', default_value = "non-nested,nested,opt-d,opt-d-cost,kernel-parallel,auto")]
    pub strategy: Vec<Strategy>,
    /// Worker threads (default: available parallelism).
    #[arg(long)]
    pub threads: Option<usize>,
    /// Force the split threshold of opt-d / opt-d-cost / auto.
    #[arg(long)]
    pub d: Option<usize>,
    /// Inner tasks below this many flops run inline (opt-d-cost, auto).
    #[arg(long, default_value_t = 50_000.0)]
    pub cost_threshold: f64,
    /// natural, mindeg, best or file:<path> (0-based new-to-old indices).
    #[arg(long, default_value = "mindeg")]
    pub ordering: OrderingChoice,
    /// Largest fraction of explicit zeros a merged supernode may hold.
    #[arg(long, default_value_t = 0.05)]
    pub amalg_zero_ratio: f64,
    /// A child and parent both at most this wide merge regardless of zeros (0 with ratio 0 disables merging).
    #[arg(long, default_value_t = 4)]
    pub amalg_small: usize,
    /// Timed factorizations per strategy.
    #[arg(long, default_value_t = 1)]
    pub runs: usize,
    /// Untimed factorizations before the timed ones.
    #[arg(long, default_value_t = 1)]
    pub warmup: usize,
    /// Strategy the speed-ups are relative to.
    #[arg(long, default_value = "non-nested")]
    pub baseline: Strategy,
    /// CSV of the update-count histogram (columns x,y).
    #[arg(long, value_name = "OUT.csv")]
    pub emit_histogram: Option<PathBuf>,
    /// Factor once per D in the inclusive range a:b[:step] and write a CSV.
    #[arg(long, num_args = 2, value_names = ["A:B:STEP", "OUT.csv"])]
    pub sweep_d: Option<Vec<String>>,
    /// Apply the cost threshold during the D sweep.
    #[arg(long)]
    pub sweep_cost_gate: bool,
    /// JSON-lines task trace of the last timed run.
    #[arg(long, value_name = "OUT.jsonl")]
    pub emit_trace: Option<PathBuf>,
    /// Full report as JSON.
    #[arg(long, value_name = "OUT.json")]
    pub report: Option<PathBuf>,
    /// Right-hand side to solve with (one value per line).
    #[arg(long, value_name = "FILE")]
    pub rhs: Option<PathBuf>,
    /// Where to write the solution.
    #[arg(long, value_name = "FILE", requires = "rhs")]
    pub solution: Option<PathBuf>,
    /// One assembly lock for all supernodes.
    #[arg(long)]
    pub global_lock: bool,
    /// Apply updates in update-list order for bit-reproducible factors.
    #[arg(long)]
    pub deterministic: bool,
    /// Record per-matrix failures and continue.
    #[arg(long)]
    pub keep_going: bool,
}

#[derive(Debug, Args)]
pub struct GenerateArgs {
    #[command(subcommand)]
    pub kind: GenerateKind,
}

#[derive(Debug, Subcommand)]
pub enum GenerateKind {
    /// Five-point Laplacian on an nx × ny grid.
    Laplacian2d {
        #[arg(long)]
        nx: usize,
        #[arg(long)]
        ny: usize,
        #[arg(short, long)]
        output: PathBuf,
    },
    /// Seven-point Laplacian on an n × n × n grid.
    Laplacian3d {
        #[arg(long)]
        n: usize,
        #[arg(short, long)]
        output: PathBuf,
    },
    /// Random diagonally dominant SPD matrix.
    Random {
        #[arg(long)]
        n: usize,
        #[arg(long)]
        density: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(short, long)]
        output: PathBuf,
    },
}

/// Parses arguments and runs; returns the process exit code.
pub fn main_with<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 1 } else { 0 };
        }
    };
    let result = match cli.command {
        Command::Factor(args) => run_factor(&args),
        Command::Generate(args) => run_generate(&args.kind).map(|()| 0),
    };
    match result {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            1
        }
    }
}

fn run_generate(kind: &GenerateKind) -> anyhow::Result<()> {
    let (a, output) = match kind {
        GenerateKind::Laplacian2d { nx, ny, output } => (generate::laplacian_2d(*nx, *ny), output),
        GenerateKind::Laplacian3d { n, output } => (generate::laplacian_3d(*n), output),
        GenerateKind::Random { n, density, seed, output } => {
            if !(*density > 0.0 && *density <= 1.0) || *n == 0 {
                bail!("need n >= 1 and density in (0, 1]");
            }
            (generate::random_spd(&mut StdRng::seed_from_u64(*seed), *n, *density), output)
        }
    };
    save_matrix(output, &a).with_context(|| format!("writing {}", output.display()))?;
    Ok(())
}

/// Parses `a:b[:step]` into the inclusive list of values.
pub fn parse_range(spec: &str) -> anyhow::Result<Vec<usize>> {
    let parts: Vec<usize> = spec
        .split(':')
        .map(|p| p.trim().parse::<usize>().with_context(|| format!("bad range `{spec}`")))
        .collect::<anyhow::Result<_>>()?;
    let (a, b, step) = match parts[..] {
        [a, b] => (a, b, 1),
        [a, b, step] => (a, b, step),
        _ => bail!("range `{spec}` must be a:b or a:b:step"),
    };
    if step == 0 || a > b {
        bail!("range `{spec}` needs a <= b and a positive step");
    }
    Ok((a..=b).step_by(step).collect())
}

/// `base` with `tags` inserted before the extension, so per-matrix and
/// per-strategy outputs do not overwrite each other.
fn tagged_path(base: &Path, tags: &[String]) -> PathBuf {
    if tags.is_empty() {
        return base.to_path_buf();
    }
    let stem = base.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    let mut name = format!("{stem}.{}", tags.join("."));
    if let Some(ext) = base.extension() {
        name.push('.');
        name.push_str(&ext.to_string_lossy());
    }
    base.with_file_name(name)
}

fn create(path: &Path) -> anyhow::Result<BufWriter<File>> {
    Ok(BufWriter::new(File::create(path).with_context(|| format!("creating {}", path.display()))?))
}

fn run_factor(args: &FactorArgs) -> anyhow::Result<i32> {
    let threads = args.threads.unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()));
    let config = StrategyConfig {
        d_override: args.d,
        cost_threshold: args.cost_threshold,
        threads,
        global_lock: args.global_lock,
        deterministic: args.deterministic,
        ..StrategyConfig::default()
    };
    config.validate().map_err(anyhow::Error::msg)?;
    if args.runs == 0 {
        bail!("--runs must be at least 1");
    }
    if args.rhs.is_some() && args.matrices.len() > 1 {
        bail!("--rhs applies to a single matrix");
    }
    let sweep = match &args.sweep_d {
        Some(v) => Some((parse_range(&v[0])?, PathBuf::from(&v[1]))),
        None => None,
    };
    let amalgamation = AmalgamationParams { max_zero_ratio: args.amalg_zero_ratio, small_limit: args.amalg_small };
    let opts = BenchOptions {
        strategies: args.strategy.clone(),
        config,
        runs: args.runs,
        warmup: args.warmup,
        baseline: args.baseline,
    };

    let multi = args.matrices.len() > 1;
    let mut reports: Vec<BenchReport> = Vec::new();
    let mut exit = 0;
    for path in &args.matrices {
        let name = path.display().to_string();
        let matrix_tag: Vec<String> = if multi {
            vec![path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default()]
        } else {
            Vec::new()
        };
        let prep = load_matrix(path)
            .map_err(BenchError::from)
            .and_then(|a| prepare(name.clone(), a, &args.ordering, amalgamation));
        let prep = match prep {
            Ok(p) => p,
            Err(err) => {
                let report = failed_report(&name, &opts, &err);
                print!("{}", format_report(&report));
                reports.push(report);
                if args.keep_going {
                    continue;
                }
                write_reports(args, &reports)?;
                return Err(err).with_context(|| format!("processing {name}"));
            }
        };

        if let Some(out) = &args.emit_histogram {
            let out = tagged_path(out, &matrix_tag);
            write_histogram_csv(create(&out)?, &histogram_rows(&prep.symbolic))?;
        }

        let outcome = benchmark(&prep, &opts);
        print!("{}", format_report(&outcome.report));
        reports.push(outcome.report);
        if let Some(err) = &outcome.failure {
            let code = if err.is_not_spd() { EXIT_NOT_SPD } else { 1 };
            eprintln!("error: {name}: {err}");
            if !args.keep_going {
                write_reports(args, &reports)?;
                return Ok(code);
            }
            if code == EXIT_NOT_SPD {
                exit = EXIT_NOT_SPD;
            }
        }

        if let Some(out) = &args.emit_trace {
            // The baseline is only traced when it was asked for.
            let traced: Vec<_> = outcome.stats.iter().filter(|(s, _)| args.strategy.contains(s)).collect();
            let multi_strategy = traced.len() > 1;
            for (strategy, stats) in traced {
                let mut tags = matrix_tag.clone();
                if multi_strategy {
                    tags.push(strategy.name().to_string());
                }
                write_trace(create(&tagged_path(out, &tags))?, &stats.records)?;
            }
        }

        if let Some((ds, out)) = &sweep {
            match sweep_d(&prep, ds.iter().copied(), &opts.config, args.runs, args.warmup, args.sweep_cost_gate) {
                Ok(rows) => write_sweep_csv(create(&tagged_path(out, &matrix_tag))?, &rows)?,
                Err(err) if args.keep_going => eprintln!("error: {name}: D sweep: {err}"),
                Err(err) => return Err(err).context("D sweep"),
            }
        }

        if let Some(rhs) = &args.rhs {
            let Some(factor) = &outcome.factor else {
                bail!("no successful factorization to solve with");
            };
            let b = load_vector(rhs)?;
            let x = solve(factor, &b)?;
            println!("{name}: relative residual {:.3e}", relative_residual(&prep.original, &x, &b));
            if let Some(out) = &args.solution {
                save_vector(out, &x)?;
            }
        }
    }
    write_reports(args, &reports)?;
    Ok(exit)
}

fn write_reports(args: &FactorArgs, reports: &[BenchReport]) -> anyhow::Result<()> {
    if let Some(path) = &args.report {
        let mut w = create(path)?;
        serde_json::to_writer_pretty(&mut w, reports)?;
        writeln!(w)?;
        w.flush()?;
    }
    Ok(())
}
