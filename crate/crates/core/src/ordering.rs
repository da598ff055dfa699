//! Fill-reducing orderings and symmetric permutation.

use alloc::collections::BTreeSet;
use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::symbolic::{column_counts, elimination_tree};
use crate::{Error, Result, SparseSymmetric};

/// A symmetric permutation stored in both directions.
///
/// `perm[new] = old` and `inv[old] = new`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Permutation {
    perm: Vec<usize>,
    inv: Vec<usize>,
}

impl Permutation {
    pub fn identity(n: usize) -> Self {
        let perm: Vec<usize> = (0..n).collect();
        Self { inv: perm.clone(), perm }
    }

    /// Validates a new-to-old index array.
    pub fn from_new_to_old(perm: Vec<usize>) -> Result<Self> {
        let n = perm.len();
        let mut inv = vec![usize::MAX; n];
        for (new, &old) in perm.iter().enumerate() {
            if old >= n {
                return Err(Error::InvalidPermutation { n, reason: "index out of range" });
            }
            if inv[old] != usize::MAX {
                return Err(Error::InvalidPermutation { n, reason: "repeated index" });
            }
            inv[old] = new;
        }
        Ok(Self { perm, inv })
    }

    pub fn len(&self) -> usize {
        self.perm.len()
    }

    pub fn is_empty(&self) -> bool {
        self.perm.is_empty()
    }

    /// New-to-old map.
    pub fn perm(&self) -> &[usize] {
        &self.perm
    }

    /// Old-to-new map.
    pub fn inv(&self) -> &[usize] {
        &self.inv
    }

    /// The permutation obtained by applying `self` first and `then` second.
    pub fn then(&self, then: &Permutation) -> Permutation {
        assert_eq!(self.len(), then.len(), "permutations must have the same length");
        let perm: Vec<usize> = then.perm.iter().map(|&i| self.perm[i]).collect();
        let mut inv = vec![0; perm.len()];
        for (new, &old) in perm.iter().enumerate() {
            inv[old] = new;
        }
        Permutation { perm, inv }
    }

    /// `out[new] = x[perm[new]]`.
    pub fn gather(&self, x: &[f64]) -> Vec<f64> {
        self.perm.iter().map(|&old| x[old]).collect()
    }

    /// `out[perm[new]] = x[new]`.
    pub fn scatter(&self, x: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; x.len()];
        for (new, &old) in self.perm.iter().enumerate() {
            out[old] = x[new];
        }
        out
    }
}

pub fn natural_ordering(n: usize) -> Permutation {
    Permutation::identity(n)
}

/// Returns `P A Pᵀ` in canonical lower form.
pub fn apply_permutation(a: &SparseSymmetric, p: &Permutation) -> Result<SparseSymmetric> {
    let n = a.n();
    if p.len() != n {
        return Err(Error::DimensionMismatch { expected: n, found: p.len() });
    }
    let inv = p.inv();
    let mut entries: Vec<(usize, usize, f64)> = Vec::with_capacity(a.nnz());
    for (i, j, v) in a.triplets() {
        let (ni, nj) = (inv[i], inv[j]);
        entries.push(if ni >= nj { (nj, ni, v) } else { (ni, nj, v) });
    }
    entries.sort_unstable_by_key(|&(j, i, _)| (j, i));
    let mut col_ptr = vec![0usize; n + 1];
    let mut row_idx = Vec::with_capacity(entries.len());
    let mut values = Vec::with_capacity(entries.len());
    for (j, i, v) in entries {
        col_ptr[j + 1] += 1;
        row_idx.push(i);
        values.push(v);
    }
    for j in 0..n {
        col_ptr[j + 1] += col_ptr[j];
    }
    SparseSymmetric::from_lower_csc(n, col_ptr, row_idx, values)
}

/// Greedy minimum-degree ordering on the quotient elimination graph.
///
/// Degrees are exact external degrees. There are no supervariables, no
/// multiple elimination and no approximate degrees; ties go to the smallest
/// original index.
pub fn min_degree_ordering(a: &SparseSymmetric) -> Permutation {
    let n = a.n();
    let mut var_adj: Vec<Vec<usize>> = vec![Vec::new(); n];
    for (i, j, _) in a.triplets() {
        if i != j {
            var_adj[i].push(j);
            var_adj[j].push(i);
        }
    }
    let mut elem_adj: Vec<Vec<usize>> = vec![Vec::new(); n];
    let mut elem_vars: Vec<Vec<usize>> = vec![Vec::new(); n];
    let mut eliminated = vec![false; n];
    let mut absorbed = vec![false; n];
    let mut mark = vec![usize::MAX; n];
    let mut stamp = vec![0usize; n];
    let mut clock = 0usize;

    let mut degree: Vec<usize> = var_adj.iter().map(Vec::len).collect();
    let mut queue: BTreeSet<(usize, usize)> = (0..n).map(|v| (degree[v], v)).collect();
    let mut order = Vec::with_capacity(n);

    for step in 0..n {
        let (_, p) = queue.pop_first().expect("one variable per step");
        order.push(p);

        // Reach of p: live variable neighbours plus members of adjacent elements.
        mark[p] = step;
        let mut reach = Vec::new();
        for &v in &var_adj[p] {
            if !eliminated[v] && mark[v] != step {
                mark[v] = step;
                reach.push(v);
            }
        }
        for &e in &elem_adj[p] {
            if absorbed[e] {
                continue;
            }
            for &v in &elem_vars[e] {
                if v != p && mark[v] != step {
                    mark[v] = step;
                    reach.push(v);
                }
            }
            absorbed[e] = true;
            elem_vars[e] = Vec::new();
        }
        eliminated[p] = true;
        var_adj[p] = Vec::new();
        elem_adj[p] = Vec::new();

        for &v in &reach {
            elem_adj[v].retain(|&e| !absorbed[e]);
            elem_adj[v].push(p);
            // Edges between members of the new element are implied by it.
            var_adj[v].retain(|&w| !eliminated[w] && mark[w] != step);
        }
        for &v in &reach {
            clock += 1;
            stamp[v] = clock;
            let mut d = 0;
            for &w in &var_adj[v] {
                if stamp[w] != clock {
                    stamp[w] = clock;
                    d += 1;
                }
            }
            for &e in &elem_adj[v] {
                for &w in elem_vars_or(&elem_vars, &reach, e, p) {
                    if stamp[w] != clock {
                        stamp[w] = clock;
                        d += 1;
                    }
                }
            }
            if d != degree[v] {
                queue.remove(&(degree[v], v));
                degree[v] = d;
                queue.insert((d, v));
            }
        }
        elem_vars[p] = reach;
    }
    Permutation::from_new_to_old(order).expect("minimum degree emits each vertex once")
}

// The new element's member list is only stored after the degree pass.
#[inline]
fn elem_vars_or<'a>(elem_vars: &'a [Vec<usize>], reach: &'a [usize], e: usize, p: usize) -> &'a [usize] {
    if e == p {
        reach
    } else {
        &elem_vars[e]
    }
}

/// Predicted number of non-zeros in `L` for the ordering `p`.
pub fn predicted_factor_nnz(a: &SparseSymmetric, p: &Permutation) -> Result<usize> {
    let permuted = apply_permutation(a, p)?;
    let etree = elimination_tree(&permuted);
    Ok(column_counts(&permuted, &etree).iter().sum())
}

/// Index of the candidate with the fewest predicted factor non-zeros; the
/// earliest candidate wins ties.
pub fn select_best_ordering(a: &SparseSymmetric, candidates: &[Permutation]) -> Result<usize> {
    if candidates.is_empty() {
        return Err(Error::NoCandidates);
    }
    let mut best = (usize::MAX, 0);
    for (k, p) in candidates.iter().enumerate() {
        let nnz = predicted_factor_nnz(a, p)?;
        if nnz < best.0 {
            best = (nnz, k);
        }
    }
    Ok(best.1)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn star() -> SparseSymmetric {
        let mut t = vec![(0, 0, 5.0)];
        for i in 1..5 {
            t.push((i, i, 2.0));
            t.push((i, 0, 1.0));
        }
        SparseSymmetric::from_triplets(5, t).unwrap()
    }

    #[test]
    fn natural_is_identity() {
        assert_eq!(natural_ordering(3).perm(), &[0, 1, 2]);
        assert_eq!(natural_ordering(1).perm(), &[0]);
        let p = natural_ordering(4);
        assert_eq!(p.perm(), p.inv());
    }

    #[test]
    fn rejects_non_bijections() {
        assert!(Permutation::from_new_to_old(vec![0, 0]).is_err());
        assert!(Permutation::from_new_to_old(vec![0, 2]).is_err());
        let p = Permutation::from_new_to_old(vec![2, 0, 1]).unwrap();
        assert_eq!(p.inv(), &[1, 2, 0]);
    }

    #[test]
    fn star_leaves_first() {
        // After three leaves the center and the last leaf both have degree 1;
        // the smaller index wins. Either way there is no fill.
        let p = min_degree_ordering(&star());
        assert_eq!(p.perm(), &[1, 2, 3, 0, 4]);
        assert_eq!(predicted_factor_nnz(&star(), &p).unwrap(), 9);
    }

    #[test]
    fn identity_matrix_keeps_order() {
        let a = SparseSymmetric::from_triplets(4, (0..4).map(|i| (i, i, 1.0))).unwrap();
        assert_eq!(min_degree_ordering(&a).perm(), &[0, 1, 2, 3]);
    }

    #[test]
    fn swap_two_by_two() {
        let a = SparseSymmetric::from_triplets(2, [(0, 0, 4.0), (1, 0, 1.0), (1, 1, 9.0)]).unwrap();
        let p = Permutation::from_new_to_old(vec![1, 0]).unwrap();
        let b = apply_permutation(&a, &p).unwrap();
        assert_eq!(b.values(), &[9.0, 1.0, 4.0]);
        assert_eq!(b.row_idx(), &[0, 1, 1]);
    }

    #[test]
    fn reversed_arrowhead_points_up() {
        let mut t: Vec<_> = (0..4).map(|j| (j, j, 4.0)).collect();
        t.extend((0..3).map(|j| (3, j, 1.0)));
        let a = SparseSymmetric::from_triplets(4, t).unwrap();
        let p = Permutation::from_new_to_old(vec![3, 2, 1, 0]).unwrap();
        let b = apply_permutation(&a, &p).unwrap();
        // Old row 3 becomes new 0: the full column 0.
        assert_eq!(b.col_ptr(), &[0, 4, 5, 6, 7]);
        assert_eq!(b.row_idx(), &[0, 1, 2, 3, 1, 2, 3]);
        assert_eq!(b.nnz(), a.nnz());
    }

    #[test]
    fn dimension_mismatch() {
        let a = star();
        assert!(matches!(apply_permutation(&a, &Permutation::identity(3)), Err(Error::DimensionMismatch { .. })));
    }

    #[test]
    fn best_ordering_on_star() {
        let a = star();
        let nat = natural_ordering(5);
        let md = min_degree_ordering(&a);
        assert_eq!(predicted_factor_nnz(&a, &nat).unwrap(), 15);
        assert_eq!(predicted_factor_nnz(&a, &md).unwrap(), 9);
        assert_eq!(select_best_ordering(&a, &[nat.clone(), md]).unwrap(), 1);
        assert_eq!(select_best_ordering(&a, core::slice::from_ref(&nat)).unwrap(), 0);
        assert_eq!(select_best_ordering(&a, &[nat.clone(), nat]).unwrap(), 0);
        assert_eq!(select_best_ordering(&a, &[]), Err(Error::NoCandidates));
    }

    #[test]
    fn compose_matches_sequential_application() {
        let a = star();
        let p1 = Permutation::from_new_to_old(vec![4, 2, 0, 1, 3]).unwrap();
        let p2 = Permutation::from_new_to_old(vec![1, 3, 0, 4, 2]).unwrap();
        let twice = apply_permutation(&apply_permutation(&a, &p1).unwrap(), &p2).unwrap();
        let once = apply_permutation(&a, &p1.then(&p2)).unwrap();
        assert_eq!(twice, once);
    }
}
