//! Acceptance suite: one line per criterion, `PASS`, `FAIL` or
//! `NOT EVALUATED`, followed by the measured numbers. Exits non-zero when a
//! criterion that can be evaluated on this host fails its hard check.

#[path = "../../core/tests/common/mod.rs"]
mod common;

use std::process::ExitCode;
use std::sync::Arc;
use std::time::{Duration, Instant};

use cholnest::bench::{histogram_rows, prepare, sweep_d, OrderingChoice, Prepared};
use cholnest::generate::{arrowhead, laplacian_2d, laplacian_3d, random_spd, tridiagonal};
use cholnest::heuristics::{opt_d, select_execution_mode, should_create_inner};
use cholnest::numeric::sequential_reference_factorize;
use cholnest::ordering::{min_degree_ordering, natural_ordering};
use cholnest::solve::{relative_residual, solve};
use cholnest::symbolic::analyze;
use cholnest::trace::validate;
use cholnest::{
    AmalgamationParams, ExecutionMode, NestingPlan, Permutation, SparseSymmetric, Strategy, StrategyConfig,
};
use common::{dense_symbolic, fig2_matrix, opt_d_reference};
use rand::rngs::StdRng;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};

const SEED: u64 = 0x5eed_c401;

const RECONSTRUCTION_TOL: f64 = 1e-10;
const RESIDUAL_TOL: f64 = 1e-8;
const SUITE_BUDGET: Duration = Duration::from_secs(600);
const THREAD_COUNTS: [usize; 4] = [1, 2, 4, 8];

const SYMBOLIC_CASES: usize = 100;
const OPT_D_CASES: usize = 1000;
const TRACE_RUNS: usize = 500;

const SMOKE_NX: usize = 250;
const SMOKE_NY: usize = 200;
const SMOKE_MIN_CORES: usize = 4;
const SMOKE_MAX_RATIO: f64 = 0.6;

enum Verdict {
    Pass,
    Fail,
    NotEvaluated,
}

struct Outcome {
    verdict: Verdict,
    detail: String,
    /// A hard failure fails the test binary.
    hard: bool,
}

impl Outcome {
    fn check(ok: bool, detail: String) -> Self {
        Self { verdict: if ok { Verdict::Pass } else { Verdict::Fail }, detail, hard: !ok }
    }
}

fn log_uniform(rng: &mut StdRng, lo: f64, hi: f64) -> f64 {
    (rng.gen_range(lo.ln()..=hi.ln())).exp()
}

fn prep(a: SparseSymmetric) -> Prepared {
    prepare("acceptance", a, &OrderingChoice::MinDegree, AmalgamationParams::default()).unwrap()
}

fn run(p: &Prepared, cfg: &StrategyConfig) -> cholnest::factorize::Factored {
    let plan = p.plan(cfg).unwrap();
    p.factorize(&plan, cfg).unwrap()
}

fn corpus() -> Vec<(&'static str, SparseSymmetric)> {
    let mut rng = StdRng::seed_from_u64(SEED);
    vec![
        ("fig2", fig2_matrix()),
        ("tridiagonal", tridiagonal(200, 4.0, -1.0)),
        ("arrowhead", arrowhead(60)),
        ("laplacian2d", laplacian_2d(40, 30)),
        ("laplacian3d", laplacian_3d(10)),
        ("random-sparse", random_spd(&mut rng, 400, 0.01)),
        ("random-dense", random_spd(&mut rng, 120, 0.3)),
    ]
}

fn numeric_correctness() -> Outcome {
    let started = Instant::now();
    let mut rng = StdRng::seed_from_u64(SEED);
    let mut sizes: Vec<(usize, f64)> = vec![(10, 0.005), (10, 0.5), (1000, 0.005), (1000, 0.5)];
    while sizes.len() < 200 {
        let n = log_uniform(&mut rng, 10.0, 1000.0).round() as usize;
        sizes.push((n, log_uniform(&mut rng, 0.005, 0.5)));
    }
    let (mut worst_rec, mut worst_res, mut runs, mut bad) = (0.0f64, 0.0f64, 0usize, 0usize);
    for &(n, density) in &sizes {
        let p = prep(random_spd(&mut rng, n, density));
        let b: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
        for strategy in Strategy::ALL {
            for threads in THREAD_COUNTS {
                let cfg = StrategyConfig { threads, ..StrategyConfig::with_strategy(strategy) };
                let (f, _) = run(&p, &cfg);
                let rec = f.reconstruction_error(&p.permuted);
                let res = relative_residual(&p.original, &solve(&f, &b).unwrap(), &b);
                worst_rec = worst_rec.max(rec);
                worst_res = worst_res.max(res);
                runs += 1;
                if !(rec <= RECONSTRUCTION_TOL && res <= RESIDUAL_TOL) {
                    bad += 1;
                }
            }
        }
    }
    let elapsed = started.elapsed();
    Outcome::check(
        bad == 0 && elapsed < SUITE_BUDGET,
        format!(
            "{runs} factorizations of {} matrices, worst reconstruction {worst_rec:.2e} (tol {RECONSTRUCTION_TOL:e}), \
             worst residual {worst_res:.2e} (tol {RESIDUAL_TOL:e}), {bad} over tolerance, {:.1}s",
            sizes.len(),
            elapsed.as_secs_f64()
        ),
    )
}

fn symbolic_equivalence() -> Outcome {
    let mut rng = StdRng::seed_from_u64(SEED ^ 2);
    let mut mismatches = 0;
    for _ in 0..SYMBOLIC_CASES {
        let n = rng.gen_range(1..=200);
        let density = log_uniform(&mut rng, 0.002, 0.2);
        let a = random_spd(&mut rng, n, density);
        let mut order: Vec<usize> = (0..n).collect();
        let p = match rng.gen_range(0..3) {
            0 => natural_ordering(n),
            1 => min_degree_ordering(&a),
            _ => {
                order.shuffle(&mut rng);
                Permutation::from_new_to_old(order).unwrap()
            }
        };
        let an = analyze(&a, &p, AmalgamationParams::DISABLED).unwrap();
        let oracle = dense_symbolic(&an.matrix);
        let same = (0..n).all(|j| (j..n).all(|i| an.symbolic.stores(i, j) == oracle[j][i]));
        if !same {
            mismatches += 1;
        }
    }
    Outcome::check(mismatches == 0, format!("{SYMBOLIC_CASES} patterns, {mismatches} differ from dense elimination"))
}

fn opt_d_fidelity() -> Outcome {
    let cfg = StrategyConfig::default();
    let mut rng = StdRng::seed_from_u64(SEED ^ 3);
    let mut mismatches = 0;
    for _ in 0..OPT_D_CASES {
        let n_super = rng.gen_range(1..=500);
        let tail = rng.gen_range(1..=3000);
        let c: Vec<usize> = (0..n_super)
            .map(|_| if rng.gen_bool(0.85) { rng.gen_range(0..6) } else { rng.gen_range(0..=tail) })
            .collect();
        let n = n_super * rng.gen_range(1..=40);
        if opt_d(n, n_super, &c, &cfg).unwrap() != opt_d_reference(n, n_super, &c) {
            mismatches += 1;
        }
    }
    let mut heavy = vec![2; 99];
    heavy.push(1000);
    let traced = [
        (opt_d(100, 10, &[1, 1, 1, 1, 1, 2, 3, 5, 8, 10], &cfg).unwrap(), 3),
        (opt_d(9, 3, &[0, 0, 0], &cfg).unwrap(), 0),
        (opt_d(1400, 100, &heavy, &cfg).unwrap(), 300),
    ];
    let traced_ok = traced.iter().all(|(got, want)| got == want);
    Outcome::check(
        mismatches == 0 && traced_ok,
        format!(
            "{OPT_D_CASES} random inputs, {mismatches} mismatches; traced examples D = {:?} (expected [3, 0, 300])",
            traced.iter().map(|t| t.0).collect::<Vec<_>>()
        ),
    )
}

fn task_accounting() -> Outcome {
    let mut failures = Vec::new();
    for (name, a) in corpus() {
        let p = prep(a);
        let counts = p.symbolic.inner_counts().to_vec();
        let n_super = counts.len();
        let total: usize = counts.iter().sum();
        let max_c = *counts.iter().max().unwrap();

        let cfg = StrategyConfig { threads: 2, ..StrategyConfig::with_strategy(Strategy::NonNested) };
        if run(&p, &cfg).1.total_tasks() != n_super {
            failures.push(format!("{name}: non-nested"));
        }
        let cfg = StrategyConfig { threads: 2, cost_threshold: 0.0, ..StrategyConfig::with_strategy(Strategy::Nested) };
        if run(&p, &cfg).1.total_tasks() != n_super + total {
            failures.push(format!("{name}: nested"));
        }
        for d in 0..=max_c + 1 {
            let cfg =
                StrategyConfig { threads: 2, d_override: Some(d), ..StrategyConfig::with_strategy(Strategy::OptD) };
            let expect = n_super + counts.iter().filter(|&&c| c >= d).sum::<usize>();
            if run(&p, &cfg).1.total_tasks() != expect {
                failures.push(format!("{name}: opt-d at D = {d}"));
            }
        }
        let cfg = StrategyConfig { threads: 2, ..StrategyConfig::default() };
        let rows = sweep_d(&p, 0..=max_c + 1, &cfg, 1, 0, false).unwrap();
        if !rows.windows(2).all(|w| w[1].total_tasks <= w[0].total_tasks) {
            failures.push(format!("{name}: sweep not monotone"));
        }
    }
    Outcome::check(failures.is_empty(), format!("{} matrices; failures: {failures:?}", corpus().len()))
}

fn hybrid_dispatch() -> Outcome {
    let cfg = StrategyConfig::default();
    let widths = [1.0, 19.9, 20.0, 20.1, 35.0, 49.9, 50.0, 50.1, 103.45, 500.0];
    let densities = [1e-7, 5e-5, 9.99e-5, 1e-4, 1.01e-4, 1e-3, 0.04, 1.0];
    let mut wrong = 0;
    for &w in &widths {
        for &d in &densities {
            let expect = if w > 50.0 || (w > 20.0 && d < 1e-4) {
                ExecutionMode::KernelParallel
            } else {
                ExecutionMode::TaskBased
            };
            if select_execution_mode(w, d, &cfg) != expect {
                wrong += 1;
            }
        }
    }
    let nd3k = select_execution_mode(103.45, 0.0126, &cfg);
    Outcome::check(
        wrong == 0 && nd3k == ExecutionMode::KernelParallel,
        format!("{} grid points, {wrong} wrong; width 103.45 selects {nd3k:?}", widths.len() * densities.len()),
    )
}

fn cost_gate() -> Outcome {
    let cfg = StrategyConfig::default();
    let boundary = !should_create_inner(49_999.0, &cfg) && should_create_inner(50_000.0, &cfg);

    // The same boundary on a real update, through the plan.
    let p = prep(laplacian_2d(30, 30));
    let sym = &p.symbolic;
    let s = (0..sym.n_super()).max_by_key(|&s| sym.inner_counts()[s]).unwrap();
    let d = sym.update_sources(s)[0];
    let cost = sym.update_cost(d, s);
    let at = NestingPlan::with_threshold(Strategy::OptDCost, sym.inner_counts(), Some(1), Some(cost));
    let above = NestingPlan::with_threshold(Strategy::OptDCost, sym.inner_counts(), Some(1), Some(cost + 1.0));
    let plan_boundary = at.creates_inner(sym, d, s) && !above.creates_inner(sym, d, s);

    let mut equal = true;
    for (_, a) in corpus() {
        let p = prep(a);
        let tasks = |strategy| {
            let cfg = StrategyConfig { threads: 2, cost_threshold: 0.0, ..StrategyConfig::with_strategy(strategy) };
            run(&p, &cfg).1.total_tasks()
        };
        equal &= tasks(Strategy::OptDCost) == tasks(Strategy::OptD);
    }
    Outcome::check(
        boundary && plan_boundary && equal,
        format!(
            "49999 embedded and 50000 created: {boundary}; plan gate at an update's own cost {cost}: {plan_boundary}; \
             opt-d-cost equals opt-d at threshold 0: {equal}"
        ),
    )
}

fn concurrency_safety() -> Outcome {
    let mut rng = StdRng::seed_from_u64(SEED ^ 7);
    let mut violations = 0;
    for _ in 0..TRACE_RUNS {
        let n = rng.gen_range(1..=250);
        let density = log_uniform(&mut rng, 0.005, 0.2);
        let p = prep(random_spd(&mut rng, n, density));
        let global_lock = rng.gen_bool(0.25);
        let cfg = StrategyConfig {
            strategy: *Strategy::ALL.choose(&mut rng).unwrap(),
            threads: rng.gen_range(1..=8),
            cost_threshold: *[0.0, 1000.0, 50_000.0].choose(&mut rng).unwrap(),
            global_lock,
            deterministic: rng.gen_bool(0.25),
            ..StrategyConfig::default()
        };
        let (_, stats) = run(&p, &cfg);
        violations += validate(&p.symbolic, &stats, global_lock).len();
    }
    let mut bitwise = true;
    for (_, a) in corpus() {
        let p = prep(a);
        let reference = sequential_reference_factorize(&p.permuted, Arc::clone(&p.symbolic)).unwrap();
        for strategy in [Strategy::NonNested, Strategy::Nested, Strategy::OptD, Strategy::OptDCost] {
            let cfg = StrategyConfig {
                threads: 8,
                deterministic: true,
                cost_threshold: 0.0,
                ..StrategyConfig::with_strategy(strategy)
            };
            bitwise &= run(&p, &cfg).0.bitwise_eq(&reference);
        }
    }
    Outcome::check(
        violations == 0 && bitwise,
        format!("{TRACE_RUNS} traced runs, {violations} violations; deterministic 8-thread factors bitwise equal: {bitwise}"),
    )
}

fn best_time(p: &Prepared, cfg: &StrategyConfig, runs: usize) -> f64 {
    let plan = p.plan(cfg).unwrap();
    p.factorize(&plan, cfg).unwrap();
    (0..runs).map(|_| p.factorize(&plan, cfg).unwrap().1.wall_time.as_secs_f64()).fold(f64::INFINITY, f64::min)
}

fn smoke_performance(lap: &Prepared) -> Outcome {
    let cores = std::thread::available_parallelism().map_or(1, |n| n.get());
    let base = best_time(lap, &StrategyConfig { threads: 1, ..StrategyConfig::with_strategy(Strategy::NonNested) }, 3);
    let (best, best_strategy) = [Strategy::NonNested, Strategy::Nested, Strategy::OptD, Strategy::OptDCost]
        .into_iter()
        .map(|s| (best_time(lap, &StrategyConfig { threads: 4, ..StrategyConfig::with_strategy(s) }, 3), s))
        .fold((f64::INFINITY, Strategy::NonNested), |a, b| if b.0 < a.0 { b } else { a });
    let ratio = best / base;
    let detail = format!(
        "n = {}, 1-thread non-nested {base:.4}s, best 4-thread {best_strategy} {best:.4}s, ratio {ratio:.3} \
         (limit {SMOKE_MAX_RATIO}), {cores} cores available",
        lap.symbolic.n()
    );
    if cores < SMOKE_MIN_CORES {
        return Outcome {
            verdict: Verdict::NotEvaluated,
            detail: format!("needs {SMOKE_MIN_CORES} cores; {detail}"),
            hard: false,
        };
    }
    Outcome::check(ratio <= SMOKE_MAX_RATIO, detail)
}

fn histogram_shape(lap: &Prepared) -> Outcome {
    let rows = histogram_rows(&lap.symbolic);
    let counts = lap.symbolic.inner_counts();
    let n_super = counts.len();
    let mut dense = vec![0usize; rows.last().map_or(0, |r| r.0) + 1];
    for &(x, y) in &rows {
        dense[x] = y;
    }
    let mode = (0..dense.len()).max_by_key(|&x| (dense[x], std::cmp::Reverse(x))).unwrap();
    let strict = dense[mode..].windows(2).all(|w| w[1] <= w[0]);
    let rises: Vec<(usize, usize, usize)> = (mode + 1..dense.len())
        .filter(|&x| dense[x] > dense[x - 1])
        .map(|x| (x, dense[x - 1], dense[x]))
        .take(6)
        .collect();

    // Power-of-two buckets: [0], [1], [2, 3], [4, 7], ...
    let mut binned = Vec::new();
    for (x, &y) in dense.iter().enumerate() {
        let b = if x == 0 { 0 } else { x.ilog2() as usize + 1 };
        if binned.len() <= b {
            binned.resize(b + 1, 0);
        }
        binned[b] += y;
    }
    let binned_tail = binned.windows(2).all(|w| w[1] <= w[0]);

    let few = counts.iter().filter(|&&c| c <= 8).count();
    let many = counts.iter().filter(|&&c| c >= 64).count();
    let qualitative = mode == 0 && 5 * few >= 4 * n_super && 20 * many <= n_super;
    let detail = format!(
        "{n_super} outer tasks, mode at {mode}, {few} with at most 8 inner tasks, {many} with at least 64, max {}; \
         first increases beyond the mode (x, y[x-1], y[x]) {rises:?}; power-of-two buckets {binned:?} \
         non-increasing: {binned_tail}",
        dense.len() - 1
    );
    // The strict per-bucket check is the criterion; the qualitative claim
    // (mass at few inner tasks, a thin tail of heavy ones) is asserted.
    Outcome { verdict: if strict { Verdict::Pass } else { Verdict::Fail }, detail, hard: !qualitative }
}

fn main() -> ExitCode {
    let started = Instant::now();
    let mut results: Vec<(u32, &str, Outcome)> = vec![
        (1, "numeric correctness", numeric_correctness()),
        (2, "symbolic oracle equivalence", symbolic_equivalence()),
        (3, "opt-d fidelity", opt_d_fidelity()),
        (4, "task accounting", task_accounting()),
        (5, "hybrid dispatch", hybrid_dispatch()),
        (6, "cost gate boundary", cost_gate()),
        (7, "concurrency safety", concurrency_safety()),
    ];
    let lap = prep(laplacian_2d(SMOKE_NX, SMOKE_NY));
    results.push((8, "smoke performance", smoke_performance(&lap)));
    results.push((9, "update-count histogram shape", histogram_shape(&lap)));

    let mut hard = false;
    for (id, name, o) in &results {
        let verdict = match o.verdict {
            Verdict::Pass => "PASS",
            Verdict::Fail => "FAIL",
            Verdict::NotEvaluated => "NOT EVALUATED",
        };
        println!("ACCEPTANCE {id} {name}: {verdict} ({})", o.detail);
        hard |= o.hard;
    }
    println!("acceptance suite finished in {:.1}s", started.elapsed().as_secs_f64());
    if hard {
        ExitCode::FAILURE
    } else {
        ExitCode::SUCCESS
    }
}
