//! Execution traces: JSON-lines export and ordering checks.

use std::collections::HashMap;
use std::fmt;
use std::io::{self, BufRead, Write};

use cholnest_core::SymbolicFactor;

use crate::factorize::{AssemblySpan, ExecutionStats, TaskKind, TaskRecord};

/// One task record per line.
pub fn write_trace<W: Write>(mut w: W, records: &[TaskRecord]) -> io::Result<()> {
    for r in records {
        serde_json::to_writer(&mut w, r)?;
        w.write_all(b"\n")?;
    }
    w.flush()
}

pub fn read_trace<R: BufRead>(reader: R) -> io::Result<Vec<TaskRecord>> {
    let mut out = Vec::new();
    for line in reader.lines() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line)?);
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Violation {
    /// A record ends before it starts.
    NegativeSpan { supernode: usize },
    /// A supernode has no outer record, or more than one.
    OuterCount { supernode: usize, count: usize },
    /// An outer task started, or factored its diagonal block, before one of
    /// its update sources finished.
    DependencyOrder { target: usize, source: usize },
    /// An inner task started before its source supernode finished.
    InnerBeforeSource { target: usize, source: usize },
    /// An inner task was still running when its outer task passed the join.
    InnerAfterJoin { target: usize, source: usize },
    /// Two assemblies overlapped on the same destination.
    AssemblyOverlap { target: usize },
    /// With one global lock, two assemblies overlapped anywhere.
    GlobalOverlap,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::NegativeSpan { supernode } => write!(f, "record of supernode {supernode} ends before it starts"),
            Violation::OuterCount { supernode, count } => {
                write!(f, "supernode {supernode} has {count} outer records")
            }
            Violation::DependencyOrder { target, source } => {
                write!(f, "outer task {target} ran before source {source} finished")
            }
            Violation::InnerBeforeSource { target, source } => {
                write!(f, "inner task {source}->{target} started before {source} finished")
            }
            Violation::InnerAfterJoin { target, source } => {
                write!(f, "inner task {source}->{target} ended after {target} passed its join")
            }
            Violation::AssemblyOverlap { target } => write!(f, "overlapping assemblies into {target}"),
            Violation::GlobalOverlap => f.write_str("overlapping assemblies under the global lock"),
        }
    }
}

/// Checks the ordering guarantees of the scheduler against a recorded run.
pub fn validate(sym: &SymbolicFactor, stats: &ExecutionStats, global_lock: bool) -> Vec<Violation> {
    let mut out = Vec::new();
    let n_super = sym.n_super();
    let mut outer: Vec<Option<&TaskRecord>> = vec![None; n_super];
    let mut counts = vec![0usize; n_super];
    for r in &stats.records {
        if r.end_ns < r.start_ns {
            out.push(Violation::NegativeSpan { supernode: r.supernode });
        }
        if r.kind == TaskKind::Outer {
            counts[r.supernode] += 1;
            outer[r.supernode] = Some(r);
        }
    }
    for (s, &count) in counts.iter().enumerate() {
        if count != 1 {
            out.push(Violation::OuterCount { supernode: s, count });
        }
    }
    if out.iter().any(|v| matches!(v, Violation::OuterCount { .. })) {
        return out;
    }
    let outer: Vec<&TaskRecord> = outer.into_iter().map(|r| r.expect("counted above")).collect();
    for s in 0..n_super {
        let o = outer[s];
        let factor_start = o.potrf_ns.unwrap_or(o.start_ns);
        for &d in sym.update_sources(s) {
            if o.start_ns < outer[d].end_ns || factor_start < outer[d].end_ns {
                out.push(Violation::DependencyOrder { target: s, source: d });
            }
        }
    }
    for r in stats.records.iter().filter(|r| r.kind == TaskKind::Inner) {
        let d = r.source.expect("inner records carry their source");
        let s = r.supernode;
        if r.start_ns < outer[d].end_ns {
            out.push(Violation::InnerBeforeSource { target: s, source: d });
        }
        if let Some(join) = outer[s].potrf_ns {
            if r.end_ns > join {
                out.push(Violation::InnerAfterJoin { target: s, source: d });
            }
        }
    }
    out.extend(overlaps(&stats.assemblies, global_lock));
    out
}

fn overlaps(spans: &[AssemblySpan], global_lock: bool) -> Vec<Violation> {
    let mut out = Vec::new();
    let mut by_target: HashMap<usize, Vec<(u64, u64)>> = HashMap::new();
    for a in spans {
        by_target.entry(a.target).or_default().push((a.start_ns, a.end_ns));
    }
    let mut targets: Vec<_> = by_target.into_iter().collect();
    targets.sort_unstable_by_key(|(t, _)| *t);
    for (target, mut list) in targets {
        if !disjoint(&mut list) {
            out.push(Violation::AssemblyOverlap { target });
        }
    }
    if global_lock {
        let mut all: Vec<_> = spans.iter().map(|a| (a.start_ns, a.end_ns)).collect();
        if !disjoint(&mut all) {
            out.push(Violation::GlobalOverlap);
        }
    }
    out
}

fn disjoint(spans: &mut [(u64, u64)]) -> bool {
    spans.sort_unstable();
    spans.windows(2).all(|w| w[1].0 >= w[0].1)
}
