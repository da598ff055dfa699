//! Threaded numeric factorization.
//!
//! Task-based mode runs one outer task per supernode on a fixed set of
//! workers. An outer task becomes ready once every supernode in its update
//! list has finished; the countdown per supernode is its number of update
//! sources. A split outer task pushes its selected updates as inner tasks,
//! applies the others inline, and then waits at a join point (running
//! queued inner tasks meanwhile) before factoring its diagonal block.
//! Updates are scatter-subtracted into the destination block under that
//! supernode's lock.
//!
//! Each worker owns a FIFO deque for inner tasks and one for outer tasks;
//! idle workers take inner work first, then outer work, stealing from the
//! other workers when their own deques are empty.

use std::panic::{self, AssertUnwindSafe};
use std::sync::atomic::{AtomicBool, AtomicU64, AtomicUsize, Ordering};
use std::sync::{Arc, Condvar, Mutex, MutexGuard, OnceLock, PoisonError};
use std::time::{Duration, Instant};

use crossbeam_deque::{Injector, Steal, Stealer, Worker};
use serde::{Deserialize, Serialize};

use cholnest_core::numeric::{self, Update, Workspace};
use cholnest_core::symbolic::UpdateShape;
use cholnest_core::{
    DenseBlock, Error, ExecutionMode, NestingPlan, NumericFactor, Sequential, SparseSymmetric, StrategyConfig,
    SymbolicFactor,
};

use crate::pool::KernelPool;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TaskKind {
    Outer,
    Inner,
}

/// One executed task. Timestamps are nanoseconds since the start of the
/// factorization.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TaskRecord {
    pub kind: TaskKind,
    pub supernode: usize,
    /// Updating supernode of an inner task.
    pub source: Option<usize>,
    pub start_ns: u64,
    pub end_ns: u64,
    pub worker: usize,
    /// When the outer task started factoring its diagonal block.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub potrf_ns: Option<u64>,
}

/// Time spent holding the assembly lock of `target`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AssemblySpan {
    pub target: usize,
    pub source: usize,
    pub start_ns: u64,
    pub end_ns: u64,
    pub worker: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ExecutionStats {
    pub mode: ExecutionMode,
    pub threads: usize,
    pub n_outer: usize,
    pub n_inner_created: usize,
    /// Updates executed inline by their outer task.
    pub n_inner_embedded: usize,
    pub wall_time: Duration,
    pub records: Vec<TaskRecord>,
    pub assemblies: Vec<AssemblySpan>,
}

impl ExecutionStats {
    pub fn total_tasks(&self) -> usize {
        self.n_outer + self.n_inner_created
    }
}

#[derive(Debug, thiserror::Error)]
pub enum FactorError {
    #[error(transparent)]
    Numeric(#[from] Error),
    #[error("worker pool failed: {0}")]
    Pool(String),
    #[error("inconsistent input: {0}")]
    Input(&'static str),
}

pub type Factored = (NumericFactor, ExecutionStats);

/// Factors the permuted matrix `a` with the execution mode of `plan`.
pub fn factorize(
    a: &SparseSymmetric,
    sym: Arc<SymbolicFactor>,
    plan: &NestingPlan,
    cfg: &StrategyConfig,
) -> Result<Factored, FactorError> {
    cfg.validate().map_err(FactorError::Input)?;
    if a.n() != sym.n() {
        return Err(Error::DimensionMismatch { expected: sym.n(), found: a.n() }.into());
    }
    if plan.split.len() != sym.n_super() {
        return Err(FactorError::Input("plan does not match the symbolic factor"));
    }
    match plan.mode {
        ExecutionMode::KernelParallel => kernel_parallel_factorize(a, sym, cfg),
        ExecutionMode::TaskBased => task_factorize(a, sym, plan, cfg),
    }
}

/// Supernodes in ascending order on the calling thread; the dense kernels
/// fork onto `cfg.threads` workers.
pub fn kernel_parallel_factorize(
    a: &SparseSymmetric,
    sym: Arc<SymbolicFactor>,
    cfg: &StrategyConfig,
) -> Result<Factored, FactorError> {
    let pool = KernelPool::new(cfg.threads).map_err(|e| FactorError::Pool(e.to_string()))?;
    let mut records = Vec::with_capacity(sym.n_super());
    let origin = Instant::now();
    let mut start = 0;
    let factor = numeric::in_order_factorize(a, sym, &pool, |s, started| {
        let t = nanos(origin);
        if started {
            start = t;
        } else {
            records.push(TaskRecord {
                kind: TaskKind::Outer,
                supernode: s,
                source: None,
                start_ns: start,
                end_ns: t,
                worker: 0,
                potrf_ns: None,
            });
        }
    })?;
    let wall_time = origin.elapsed();
    let n_updates = factor.symbolic().update_idx().len() - factor.symbolic().n_super();
    let stats = ExecutionStats {
        mode: ExecutionMode::KernelParallel,
        threads: cfg.threads,
        n_outer: records.len(),
        n_inner_created: 0,
        n_inner_embedded: n_updates,
        wall_time,
        records,
        assemblies: Vec::new(),
    };
    Ok((factor, stats))
}

fn nanos(origin: Instant) -> u64 {
    origin.elapsed().as_nanos() as u64
}

fn lock<T>(m: &Mutex<T>) -> MutexGuard<'_, T> {
    m.lock().unwrap_or_else(PoisonError::into_inner)
}

#[derive(Debug, Clone, Copy)]
enum Task {
    Outer(usize),
    /// `slot` is the position of `source` in the update list of `target`.
    Inner {
        source: usize,
        target: usize,
        slot: usize,
    },
}

/// Wakes idle workers. Every push bumps the epoch before notifying, and a
/// worker only sleeps if the epoch it saw before searching is unchanged.
#[derive(Debug, Default)]
struct Signal {
    epoch: AtomicU64,
    lock: Mutex<()>,
    cvar: Condvar,
}

impl Signal {
    fn notify(&self) {
        self.epoch.fetch_add(1, Ordering::SeqCst);
        let _g = lock(&self.lock);
        self.cvar.notify_all();
    }

    fn wait(&self, seen: u64) {
        let g = lock(&self.lock);
        if self.epoch.load(Ordering::SeqCst) == seen {
            // The timeout only guards against bugs; wake-ups come from notify.
            let _ = self.cvar.wait_timeout(g, Duration::from_millis(20));
        }
    }
}

struct Graph<'a> {
    a: &'a SparseSymmetric,
    sym: &'a SymbolicFactor,
    plan: &'a NestingPlan,
    deterministic: bool,
    global_lock: Option<Mutex<()>>,
    /// Supernodes each supernode updates, ascending.
    users_ptr: Vec<usize>,
    users: Vec<usize>,
    pending: Vec<AtomicUsize>,
    inner_pending: Vec<AtomicUsize>,
    /// Block of a supernode whose outer task is running.
    assembling: Vec<Mutex<DenseBlock>>,
    /// Deterministic mode: inner results by update-list slot.
    deferred: Vec<Mutex<Vec<Option<Update>>>>,
    done: Vec<OnceLock<DenseBlock>>,
    remaining: AtomicUsize,
    abort: AtomicBool,
    failure: Mutex<Option<(usize, FactorError)>>,
    outer_queue: Injector<Task>,
    stealers: Vec<(Stealer<Task>, Stealer<Task>)>,
    signal: Signal,
    origin: Instant,
}

#[derive(Default)]
struct WorkerLog {
    created: usize,
    embedded: usize,
    records: Vec<TaskRecord>,
    assemblies: Vec<AssemblySpan>,
}

struct Local<'g> {
    id: usize,
    inner: Worker<Task>,
    outer: Worker<Task>,
    ws: Workspace,
    log: WorkerLog,
    graph: &'g Graph<'g>,
}

fn task_factorize(
    a: &SparseSymmetric,
    sym: Arc<SymbolicFactor>,
    plan: &NestingPlan,
    cfg: &StrategyConfig,
) -> Result<Factored, FactorError> {
    let n_super = sym.n_super();
    let threads = cfg.threads;
    let mut users_ptr = vec![0usize; n_super + 1];
    for s in 0..n_super {
        for &d in sym.update_sources(s) {
            users_ptr[d + 1] += 1;
        }
    }
    for s in 0..n_super {
        users_ptr[s + 1] += users_ptr[s];
    }
    let mut fill = users_ptr.clone();
    let mut users = vec![0usize; users_ptr[n_super]];
    for s in 0..n_super {
        for &d in sym.update_sources(s) {
            users[fill[d]] = s;
            fill[d] += 1;
        }
    }

    let locals: Vec<(Worker<Task>, Worker<Task>)> =
        (0..threads).map(|_| (Worker::new_fifo(), Worker::new_fifo())).collect();
    let stealers = locals.iter().map(|(i, o)| (i.stealer(), o.stealer())).collect();
    let graph = Graph {
        a,
        sym: &sym,
        plan,
        deterministic: cfg.deterministic,
        global_lock: cfg.global_lock.then(|| Mutex::new(())),
        users_ptr,
        users,
        pending: (0..n_super).map(|s| AtomicUsize::new(sym.update_sources(s).len())).collect(),
        inner_pending: (0..n_super).map(|_| AtomicUsize::new(0)).collect(),
        assembling: (0..n_super).map(|_| Mutex::new(DenseBlock::zeros(0, 0))).collect(),
        deferred: (0..n_super).map(|_| Mutex::new(Vec::new())).collect(),
        done: (0..n_super).map(|_| OnceLock::new()).collect(),
        remaining: AtomicUsize::new(n_super),
        abort: AtomicBool::new(false),
        failure: Mutex::new(None),
        outer_queue: Injector::new(),
        stealers,
        signal: Signal::default(),
        origin: Instant::now(),
    };
    for s in 0..n_super {
        if sym.update_sources(s).is_empty() {
            graph.outer_queue.push(Task::Outer(s));
        }
    }

    let logs: Vec<WorkerLog> = std::thread::scope(|scope| {
        let handles: Vec<_> = locals
            .into_iter()
            .enumerate()
            .map(|(id, (inner, outer))| {
                let graph = &graph;
                std::thread::Builder::new()
                    .name(format!("factor-{id}"))
                    .spawn_scoped(scope, move || {
                        let mut local = Local {
                            id,
                            inner,
                            outer,
                            ws: Workspace::new(graph.a.n()),
                            log: WorkerLog::default(),
                            graph,
                        };
                        let outcome = panic::catch_unwind(AssertUnwindSafe(|| local.run()));
                        if let Err(payload) = outcome {
                            let msg = payload
                                .downcast_ref::<&str>()
                                .map(|s| s.to_string())
                                .or_else(|| payload.downcast_ref::<String>().cloned())
                                .unwrap_or_else(|| "worker panicked".into());
                            graph.fail(usize::MAX, FactorError::Pool(msg));
                        }
                        local.log
                    })
                    .expect("spawn factorization worker")
            })
            .collect();
        handles.into_iter().map(|h| h.join().unwrap_or_default()).collect()
    });
    let wall_time = graph.origin.elapsed();

    if let Some((_, err)) = graph.failure.into_inner().unwrap_or_else(PoisonError::into_inner) {
        return Err(err);
    }
    let blocks: Vec<DenseBlock> =
        graph.done.into_iter().map(|b| b.into_inner().expect("every supernode finished")).collect();
    let mut stats = ExecutionStats {
        mode: ExecutionMode::TaskBased,
        threads,
        n_outer: 0,
        n_inner_created: 0,
        n_inner_embedded: 0,
        wall_time,
        records: Vec::new(),
        assemblies: Vec::new(),
    };
    for log in logs {
        stats.n_inner_created += log.created;
        stats.n_inner_embedded += log.embedded;
        stats.records.extend(log.records);
        stats.assemblies.extend(log.assemblies);
    }
    stats.n_outer = stats.records.iter().filter(|r| r.kind == TaskKind::Outer).count();
    stats.records.sort_by_key(|r| (r.start_ns, r.worker));
    stats.assemblies.sort_by_key(|r| (r.start_ns, r.worker));
    Ok((NumericFactor::new(sym, blocks), stats))
}

impl Graph<'_> {
    fn now(&self) -> u64 {
        nanos(self.origin)
    }

    fn finished(&self) -> bool {
        self.abort.load(Ordering::Acquire) || self.remaining.load(Ordering::Acquire) == 0
    }

    /// Keeps the failure of the lowest supernode so reports are stable.
    fn fail(&self, s: usize, err: FactorError) {
        let mut slot = lock(&self.failure);
        if slot.as_ref().is_none_or(|(t, _)| s < *t) {
            *slot = Some((s, err));
        }
        drop(slot);
        self.abort.store(true, Ordering::Release);
        self.signal.notify();
    }

    fn users(&self, s: usize) -> &[usize] {
        &self.users[self.users_ptr[s]..self.users_ptr[s + 1]]
    }
}

fn steal_from(stealer: &Stealer<Task>, into: &Worker<Task>) -> Option<Task> {
    loop {
        match stealer.steal_batch_and_pop(into) {
            Steal::Success(t) => return Some(t),
            Steal::Empty => return None,
            Steal::Retry => {}
        }
    }
}

impl Local<'_> {
    fn run(&mut self) {
        let g = self.graph;
        while !g.finished() {
            let seen = g.signal.epoch.load(Ordering::SeqCst);
            match self.find(false) {
                Some(task) => self.execute(task),
                None => g.signal.wait(seen),
            }
        }
    }

    /// Own deques first, then the shared outer queue, then the other
    /// workers; inner work is preferred over outer work.
    fn find(&self, inner_only: bool) -> Option<Task> {
        let g = self.graph;
        let others = || (1..g.stealers.len()).map(|k| &g.stealers[(self.id + k) % g.stealers.len()]);
        if let Some(t) = self.inner.pop() {
            return Some(t);
        }
        if let Some(t) = others().find_map(|(inner, _)| steal_from(inner, &self.inner)) {
            return Some(t);
        }
        if inner_only {
            return None;
        }
        if let Some(t) = self.outer.pop() {
            return Some(t);
        }
        loop {
            match g.outer_queue.steal_batch_and_pop(&self.outer) {
                Steal::Success(t) => return Some(t),
                Steal::Empty => break,
                Steal::Retry => {}
            }
        }
        others().find_map(|(_, outer)| steal_from(outer, &self.outer))
    }

    fn execute(&mut self, task: Task) {
        match task {
            Task::Outer(s) => self.outer_task(s),
            Task::Inner { source, target, slot } => self.inner_task(source, target, slot),
        }
    }

    fn outer_task(&mut self, s: usize) {
        let g = self.graph;
        let (sym, plan) = (g.sym, g.plan);
        let start = g.now();
        *lock(&g.assembling[s]) = numeric::load_supernode(g.a, sym, s, &mut self.ws);

        let sources = sym.update_sources(s);
        let created: Vec<bool> = sources.iter().map(|&d| plan.creates_inner(sym, d, s)).collect();
        let n_created = created.iter().filter(|&&c| c).count();
        self.log.created += n_created;
        self.log.embedded += sources.len() - n_created;
        if g.deterministic {
            *lock(&g.deferred[s]) = (0..sources.len()).map(|_| None).collect();
        }
        if n_created > 0 {
            g.inner_pending[s].store(n_created, Ordering::Release);
            for (slot, (&d, _)) in sources.iter().zip(&created).enumerate().filter(|(_, (_, &c))| c) {
                self.inner.push(Task::Inner { source: d, target: s, slot });
            }
            g.signal.notify();
        }

        if !g.deterministic {
            for (&d, _) in sources.iter().zip(&created).filter(|(_, &c)| !c) {
                self.apply_update(d, s);
            }
        }
        while g.inner_pending[s].load(Ordering::Acquire) > 0 {
            if g.abort.load(Ordering::Acquire) {
                return;
            }
            match self.find(true) {
                Some(task) => self.execute(task),
                None => std::thread::yield_now(),
            }
        }
        if g.deterministic {
            let mut results = std::mem::take(&mut *lock(&g.deferred[s]));
            for (slot, &d) in sources.iter().enumerate() {
                match results[slot].take() {
                    Some(update) => {
                        self.ws.ensure_map(sym, s);
                        assemble(g, &mut self.log, self.id, d, s, update.shape, &update.values, self.ws.map());
                    }
                    None => self.apply_update(d, s),
                }
            }
        }

        let mut block = std::mem::replace(&mut *lock(&g.assembling[s]), DenseBlock::zeros(0, 0));
        let potrf = g.now();
        if let Err(err) = numeric::factor_block(sym, s, &mut block, &Sequential) {
            g.fail(s, err.into());
            return;
        }
        g.done[s].set(block).expect("supernode factored once");
        self.log.records.push(TaskRecord {
            kind: TaskKind::Outer,
            supernode: s,
            source: None,
            start_ns: start,
            end_ns: g.now(),
            worker: self.id,
            potrf_ns: Some(potrf),
        });

        let mut released = false;
        for &t in g.users(s) {
            if g.pending[t].fetch_sub(1, Ordering::AcqRel) == 1 {
                self.outer.push(Task::Outer(t));
                released = true;
            }
        }
        if g.remaining.fetch_sub(1, Ordering::AcqRel) == 1 || released {
            g.signal.notify();
        }
    }

    /// Computes `d → s` in the worker buffer and assembles it.
    fn apply_update(&mut self, d: usize, s: usize) {
        let g = self.graph;
        self.ws.ensure_map(g.sym, s);
        let source = g.done[d].get().expect("update source finished before its user started");
        let shape = numeric::compute_update(g.sym, d, source, s, &Sequential, &mut self.ws);
        assemble(g, &mut self.log, self.id, d, s, shape, self.ws.update(), self.ws.map());
    }

    fn inner_task(&mut self, d: usize, s: usize, slot: usize) {
        let g = self.graph;
        let start = g.now();
        if g.deterministic {
            let source = g.done[d].get().expect("update source finished before its user started");
            let shape = numeric::compute_update(g.sym, d, source, s, &Sequential, &mut self.ws);
            let values = self.ws.update().to_vec();
            lock(&g.deferred[s])[slot] = Some(Update { source: d, shape, values });
        } else {
            self.apply_update(d, s);
        }
        self.log.records.push(TaskRecord {
            kind: TaskKind::Inner,
            supernode: s,
            source: Some(d),
            start_ns: start,
            end_ns: g.now(),
            worker: self.id,
            potrf_ns: None,
        });
        g.inner_pending[s].fetch_sub(1, Ordering::AcqRel);
    }
}

/// Scatter-subtracts an update into the block of `s` under its lock (and the
/// global lock when configured).
#[allow(clippy::too_many_arguments)]
fn assemble(
    g: &Graph<'_>,
    log: &mut WorkerLog,
    worker: usize,
    d: usize,
    s: usize,
    shape: UpdateShape,
    values: &[f64],
    map: &[usize],
) {
    let _global = g.global_lock.as_ref().map(lock);
    let mut block = lock(&g.assembling[s]);
    let start = g.now();
    numeric::assemble_update(g.sym, d, s, shape, values, &mut block, map);
    let end = g.now();
    drop(block);
    log.assemblies.push(AssemblySpan { target: s, source: d, start_ns: start, end_ns: end, worker });
}
