//! Symbolic analysis: elimination tree, column counts, supernodes and the
//! per-supernode update lists that define the outer/inner task structure.

use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::heuristics::inner_task_cost;
use crate::ordering::{apply_permutation, Permutation};
use crate::{Result, SparseSymmetric};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EliminationTree {
    /// `parent[j] > j`, or `None` for a root.
    pub parent: Vec<Option<usize>>,
    /// Children are visited in ascending order.
    pub postorder: Vec<usize>,
}

impl EliminationTree {
    pub fn len(&self) -> usize {
        self.parent.len()
    }

    pub fn is_empty(&self) -> bool {
        self.parent.is_empty()
    }

    pub fn child_counts(&self) -> Vec<usize> {
        let mut counts = vec![0; self.len()];
        for p in self.parent.iter().flatten() {
            counts[*p] += 1;
        }
        counts
    }

    /// Whether the identity is already a postorder of this tree.
    pub fn is_postordered(&self) -> bool {
        self.postorder.iter().enumerate().all(|(k, &j)| k == j)
    }
}

/// Contiguous column ranges forming the supernodes.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SupernodePartition {
    /// First column of each supernode, plus `n` at the end.
    pub super_ptr: Vec<usize>,
    pub col_to_super: Vec<usize>,
    /// Supernodal elimination tree.
    pub snode_parent: Vec<Option<usize>>,
}

impl SupernodePartition {
    pub fn n_super(&self) -> usize {
        self.super_ptr.len() - 1
    }

    pub fn columns(&self, s: usize) -> core::ops::Range<usize> {
        self.super_ptr[s]..self.super_ptr[s + 1]
    }

    pub fn width(&self, s: usize) -> usize {
        self.super_ptr[s + 1] - self.super_ptr[s]
    }

    /// One supernode per column.
    pub fn singletons(etree: &EliminationTree) -> Self {
        let n = etree.len();
        Self { super_ptr: (0..=n).collect(), col_to_super: (0..n).collect(), snode_parent: etree.parent.clone() }
    }

    fn from_starts(starts: Vec<usize>, n: usize, col_parent: impl Fn(usize) -> Option<usize>) -> Self {
        let mut super_ptr = starts;
        super_ptr.push(n);
        let n_super = super_ptr.len() - 1;
        let mut col_to_super = vec![0; n];
        for s in 0..n_super {
            col_to_super[super_ptr[s]..super_ptr[s + 1]].fill(s);
        }
        let snode_parent = (0..n_super).map(|s| col_parent(super_ptr[s + 1] - 1).map(|p| col_to_super[p])).collect();
        Self { super_ptr, col_to_super, snode_parent }
    }
}

/// Relaxed amalgamation controls.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AmalgamationParams {
    /// Largest fraction of explicit zeros a merged block may hold.
    pub max_zero_ratio: f64,
    /// Pairs where both sides are at most this wide merge unconditionally.
    pub small_limit: usize,
}

impl AmalgamationParams {
    pub const DISABLED: Self = Self { max_zero_ratio: 0.0, small_limit: 0 };

    pub fn is_disabled(&self) -> bool {
        !(self.max_zero_ratio > 0.0) && self.small_limit == 0
    }
}

impl Default for AmalgamationParams {
    fn default() -> Self {
        Self { max_zero_ratio: 0.05, small_limit: 4 }
    }
}

/// Output of the analysis phase for one (already permuted) matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SymbolicFactor {
    pub etree: EliminationTree,
    pub partition: SupernodePartition,
    /// Structural non-zeros per column of `L`, diagonal included.
    pub col_counts: Vec<usize>,
    below_ptr: Vec<usize>,
    below_idx: Vec<usize>,
    /// `STp`: offsets into `update_sources`.
    update_ptr: Vec<usize>,
    /// `STi`: for each supernode, the supernodes updating it, itself last.
    update_sources: Vec<usize>,
    /// `C`: number of updates each supernode receives, self excluded.
    inner_counts: Vec<usize>,
    /// Composed permutation from the original matrix to the analysed one.
    pub perm: Permutation,
}

/// Where the rows of a source supernode land in a destination supernode.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct UpdateShape {
    /// Offset into the source's below-diagonal rows of the first row hitting
    /// the destination's columns.
    pub start: usize,
    /// Rows of the source inside the destination's diagonal block.
    pub hit: usize,
    /// Rows of the source below the destination's diagonal block.
    pub rest: usize,
    /// Width of the source supernode.
    pub width: usize,
}

impl SymbolicFactor {
    pub fn n(&self) -> usize {
        self.col_counts.len()
    }

    pub fn n_super(&self) -> usize {
        self.partition.n_super()
    }

    /// Sorted global rows of supernode `s` below its diagonal block.
    pub fn below_rows(&self, s: usize) -> &[usize] {
        &self.below_idx[self.below_ptr[s]..self.below_ptr[s + 1]]
    }

    /// Number of rows of the packed block of `s` (diagonal block plus panel).
    pub fn block_rows(&self, s: usize) -> usize {
        self.partition.width(s) + self.below_ptr[s + 1] - self.below_ptr[s]
    }

    /// Global row index of local row `r` of supernode `s`.
    pub fn global_row(&self, s: usize, r: usize) -> usize {
        let w = self.partition.width(s);
        if r < w {
            self.partition.super_ptr[s] + r
        } else {
            self.below_rows(s)[r - w]
        }
    }

    /// The `STi` slice of `s`, including `s` itself as the last entry.
    pub fn update_list(&self, s: usize) -> &[usize] {
        &self.update_sources[self.update_ptr[s]..self.update_ptr[s + 1]]
    }

    /// The supernodes updating `s`, excluding `s`.
    pub fn update_sources(&self, s: usize) -> &[usize] {
        let list = self.update_list(s);
        &list[..list.len() - 1]
    }

    pub fn update_ptr(&self) -> &[usize] {
        &self.update_ptr
    }

    pub fn update_idx(&self) -> &[usize] {
        &self.update_sources
    }

    /// The `C` array.
    pub fn inner_counts(&self) -> &[usize] {
        &self.inner_counts
    }

    /// Structural non-zeros of `L` (no amalgamation zeros).
    pub fn nnz_l(&self) -> usize {
        self.col_counts.iter().sum()
    }

    /// Entries stored by the packed supernodal factor, explicit zeros included.
    pub fn stored_entries(&self) -> usize {
        (0..self.n_super())
            .map(|s| {
                let w = self.partition.width(s);
                w * (w + 1) / 2 + w * self.below_rows(s).len()
            })
            .sum()
    }

    /// Rows of `d` that touch `s`; `d` must be an update source of `s`.
    pub fn update_shape(&self, d: usize, s: usize) -> UpdateShape {
        let rows = self.below_rows(d);
        let cols = self.partition.columns(s);
        let start = rows.partition_point(|&r| r < cols.start);
        let stop = rows.partition_point(|&r| r < cols.end);
        UpdateShape { start, hit: stop - start, rest: rows.len() - stop, width: self.partition.width(d) }
    }

    /// Flop estimate of the inner task applying `d`'s update to `s`.
    pub fn update_cost(&self, d: usize, s: usize) -> f64 {
        let shape = self.update_shape(d, s);
        inner_task_cost(shape.width, shape.hit, shape.rest)
    }

    /// Whether `L(i, j)` is stored by the supernodal structure (`i >= j`).
    pub fn stores(&self, i: usize, j: usize) -> bool {
        let s = self.partition.col_to_super[j];
        let cols = self.partition.columns(s);
        if i < cols.end {
            return i >= j;
        }
        self.below_rows(s).binary_search(&i).is_ok()
    }
}

/// Elimination tree by Liu's algorithm with path compression, followed by a
/// depth-first postorder.
pub fn elimination_tree(a: &SparseSymmetric) -> EliminationTree {
    const NONE: usize = usize::MAX;
    let n = a.n();
    let (row_ptr, cols) = a.lower_rows();
    let mut parent = vec![NONE; n];
    let mut ancestor = vec![NONE; n];
    for k in 0..n {
        for &start in &cols[row_ptr[k]..row_ptr[k + 1]] {
            let mut i = start;
            while i != NONE && i < k {
                let next = ancestor[i];
                ancestor[i] = k;
                if next == NONE {
                    parent[i] = k;
                }
                i = next;
            }
        }
    }
    let parent: Vec<Option<usize>> = parent.into_iter().map(|p| (p != NONE).then_some(p)).collect();
    let postorder = postorder(&parent);
    EliminationTree { parent, postorder }
}

fn postorder(parent: &[Option<usize>]) -> Vec<usize> {
    let n = parent.len();
    let mut children: Vec<Vec<usize>> = vec![Vec::new(); n];
    for (j, p) in parent.iter().enumerate() {
        if let Some(p) = p {
            children[*p].push(j);
        }
    }
    let mut order = Vec::with_capacity(n);
    let mut stack: Vec<(usize, usize)> = Vec::new();
    for root in (0..n).filter(|&j| parent[j].is_none()) {
        stack.push((root, 0));
        while let Some((node, next)) = stack.last_mut() {
            if let Some(&child) = children[*node].get(*next) {
                *next += 1;
                stack.push((child, 0));
            } else {
                order.push(*node);
                stack.pop();
            }
        }
    }
    order
}

/// Column counts of `L` by row-subtree traversal: each off-diagonal `A(i, j)`
/// marks the path from `j` towards `i` in the elimination tree.
pub fn column_counts(a: &SparseSymmetric, etree: &EliminationTree) -> Vec<usize> {
    let n = a.n();
    let (row_ptr, cols) = a.lower_rows();
    let mut counts = vec![1usize; n];
    let mut mark = vec![usize::MAX; n];
    for i in 0..n {
        mark[i] = i;
        for &j in &cols[row_ptr[i]..row_ptr[i + 1]] {
            let mut k = j;
            while mark[k] != i {
                counts[k] += 1;
                mark[k] = i;
                k = etree.parent[k].expect("row subtree reaches its row");
            }
        }
    }
    counts
}

/// Fundamental supernodes: column `j + 1` extends `j`'s supernode when it is
/// `j`'s parent, its only child, and its column is `j`'s minus the diagonal.
pub fn find_supernodes(etree: &EliminationTree, col_counts: &[usize]) -> SupernodePartition {
    let n = etree.len();
    let children = etree.child_counts();
    let mut starts = Vec::new();
    for j in 0..n {
        let chained =
            j > 0 && etree.parent[j - 1] == Some(j) && children[j] == 1 && col_counts[j] + 1 == col_counts[j - 1];
        if !chained {
            starts.push(j);
        }
    }
    SupernodePartition::from_starts(starts, n, |j| etree.parent[j])
}

/// Relaxed amalgamation.
///
/// Walks the supernodes left to right, growing a group while the next
/// supernode is the group's parent: merge when both are at most
/// `small_limit` wide, or when the merged block's explicit-zero fraction
/// stays within `max_zero_ratio`. Zero counts follow from column counts
/// alone since a child's rows below itself are contained in its parent's.
pub fn amalgamate(
    partition: &SupernodePartition,
    col_counts: &[usize],
    params: AmalgamationParams,
) -> SupernodePartition {
    let n = col_counts.len();
    if params.is_disabled() || partition.n_super() <= 1 {
        return partition.clone();
    }
    let mut starts = Vec::with_capacity(partition.n_super());
    // Current group: first column, last fundamental supernode, stored nnz.
    let mut group: Option<(usize, usize)> = None;
    for s in 0..partition.n_super() {
        let cols = partition.columns(s);
        let merge = match group {
            Some((first, last)) if partition.snode_parent[last] == Some(s) => {
                let group_width = cols.start - first;
                let width = cols.end - first;
                let first_count = group_width + col_counts[cols.start];
                let stored = width * first_count - width * (width - 1) / 2;
                let actual: usize = col_counts[first..cols.end].iter().sum();
                let zeros = stored - actual;
                let small = group_width <= params.small_limit && cols.len() <= params.small_limit;
                small || (zeros as f64) <= params.max_zero_ratio * stored as f64
            }
            _ => false,
        };
        if merge {
            let (first, _) = group.expect("merge extends a group");
            group = Some((first, s));
        } else {
            starts.push(cols.start);
            group = Some((cols.start, s));
        }
    }
    // Map columns back to fundamental supernodes to recover the column parent.
    let col_parent = |j: usize| {
        let s = partition.col_to_super[j];
        debug_assert_eq!(j + 1, partition.super_ptr[s + 1]);
        partition.snode_parent[s].map(|p| partition.super_ptr[p])
    };
    SupernodePartition::from_starts(starts, n, col_parent)
}

/// Builds the supernodal row patterns and the update lists (`STp`, `STi`, `C`).
///
/// Supernodes must be contiguous and topologically ordered (parents after
/// children); the postordered matrix from [`analyze`] satisfies both.
pub fn supernodal_structure(
    a: &SparseSymmetric,
    etree: &EliminationTree,
    col_counts: &[usize],
    partition: &SupernodePartition,
) -> SymbolicFactor {
    let n = a.n();
    let n_super = partition.n_super();
    let mut children: Vec<Vec<usize>> = vec![Vec::new(); n_super];
    for (c, p) in partition.snode_parent.iter().enumerate() {
        if let Some(p) = p {
            children[*p].push(c);
        }
    }

    let mut below_ptr = vec![0usize; n_super + 1];
    let mut below_idx: Vec<usize> = Vec::new();
    let mut mark = vec![usize::MAX; n];
    for s in 0..n_super {
        let cols = partition.columns(s);
        let begin = below_idx.len();
        for j in cols.clone() {
            for &i in a.column(j).0 {
                if i >= cols.end && mark[i] != s {
                    mark[i] = s;
                    below_idx.push(i);
                }
            }
        }
        for &c in &children[s] {
            for k in below_ptr[c]..below_ptr[c + 1] {
                let i = below_idx[k];
                if i >= cols.end && mark[i] != s {
                    mark[i] = s;
                    below_idx.push(i);
                }
            }
        }
        below_idx[begin..].sort_unstable();
        below_ptr[s + 1] = below_idx.len();
    }

    // d updates s when d's rows hit s's columns. Scanning d ascending keeps
    // every list sorted; s itself is appended last.
    let mut targets: Vec<Vec<usize>> = vec![Vec::new(); n_super];
    let mut last_target = vec![usize::MAX; n_super];
    for d in 0..n_super {
        for &i in &below_idx[below_ptr[d]..below_ptr[d + 1]] {
            let s = partition.col_to_super[i];
            if last_target[d] != s {
                last_target[d] = s;
                targets[s].push(d);
            }
        }
    }
    let mut update_ptr = Vec::with_capacity(n_super + 1);
    let mut update_sources = Vec::new();
    let mut inner_counts = Vec::with_capacity(n_super);
    update_ptr.push(0);
    for (s, sources) in targets.into_iter().enumerate() {
        inner_counts.push(sources.len());
        update_sources.extend(sources);
        update_sources.push(s);
        update_ptr.push(update_sources.len());
    }

    SymbolicFactor {
        etree: etree.clone(),
        partition: partition.clone(),
        col_counts: col_counts.to_vec(),
        below_ptr,
        below_idx,
        update_ptr,
        update_sources,
        inner_counts,
        perm: Permutation::identity(n),
    }
}

/// A matrix permuted for factorization together with its symbolic factor.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Analysis {
    /// `P A Pᵀ` with `P = symbolic.perm`.
    pub matrix: SparseSymmetric,
    pub symbolic: SymbolicFactor,
}

/// Full analysis phase: fill-reducing permutation, postorder, column counts,
/// fundamental supernodes, amalgamation and update lists.
pub fn analyze(a: &SparseSymmetric, ordering: &Permutation, params: AmalgamationParams) -> Result<Analysis> {
    let reordered = apply_permutation(a, ordering)?;
    let etree = elimination_tree(&reordered);
    let post = Permutation::from_new_to_old(etree.postorder.clone()).expect("postorder visits every column once");
    let perm = ordering.then(&post);
    let matrix = if etree.is_postordered() { reordered } else { apply_permutation(a, &perm)? };
    let etree = elimination_tree(&matrix);
    let counts = column_counts(&matrix, &etree);
    let fundamental = find_supernodes(&etree, &counts);
    let partition = amalgamate(&fundamental, &counts, params);
    let mut symbolic = supernodal_structure(&matrix, &etree, &counts, &partition);
    symbolic.perm = perm;
    Ok(Analysis { matrix, symbolic })
}
