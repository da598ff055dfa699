//! Numeric left-looking supernodal factorization.
//!
//! One supernode is produced in four steps: its columns of `A` are scattered
//! into a zeroed packed block, every earlier supernode in its update list
//! contributes `SYRK + GEMM` products that are subtracted from the block, and
//! finally the diagonal block is factored and the panel below it solved.
//! The threaded scheduler in `cholnest` drives the same steps as tasks; this
//! module also provides the in-order drivers.

use alloc::sync::Arc;
use alloc::vec;
use alloc::vec::Vec;

use crate::kernels::{
    par_dense_cholesky, par_general_matmul, par_sym_rank_k, par_triangular_solve_right, DenseBlock, MatMut,
    Parallelism, Sequential,
};
use crate::symbolic::UpdateShape;
use crate::{Error, Permutation, Result, SparseSymmetric, SymbolicFactor};

/// Packed supernodal factor: one block per supernode holding its diagonal
/// block stacked on its sub-diagonal panel.
#[derive(Debug, Clone, PartialEq)]
pub struct NumericFactor {
    symbolic: Arc<SymbolicFactor>,
    blocks: Vec<DenseBlock>,
}

impl NumericFactor {
    pub fn new(symbolic: Arc<SymbolicFactor>, blocks: Vec<DenseBlock>) -> Self {
        assert_eq!(blocks.len(), symbolic.n_super(), "one block per supernode");
        for (s, b) in blocks.iter().enumerate() {
            assert_eq!((b.rows, b.cols), (symbolic.block_rows(s), symbolic.partition.width(s)));
        }
        Self { symbolic, blocks }
    }

    pub fn symbolic(&self) -> &SymbolicFactor {
        &self.symbolic
    }

    pub fn symbolic_arc(&self) -> &Arc<SymbolicFactor> {
        &self.symbolic
    }

    pub fn blocks(&self) -> &[DenseBlock] {
        &self.blocks
    }

    pub fn n(&self) -> usize {
        self.symbolic.n()
    }

    pub fn perm(&self) -> &Permutation {
        &self.symbolic.perm
    }

    /// `L` as a dense column-major `n × n` array in the permuted ordering.
    pub fn to_dense(&self) -> Vec<f64> {
        let n = self.n();
        let mut dense = vec![0.0; n * n];
        for (s, block) in self.blocks.iter().enumerate() {
            let first = self.symbolic.partition.super_ptr[s];
            for c in 0..block.cols {
                for r in c..block.rows {
                    dense[self.symbolic.global_row(s, r) + (first + c) * n] = block.get(r, c);
                }
            }
        }
        dense
    }

    /// Same bits in every stored entry.
    pub fn bitwise_eq(&self, other: &NumericFactor) -> bool {
        self.blocks.len() == other.blocks.len()
            && self.blocks.iter().zip(&other.blocks).all(|(a, b)| {
                a.data.len() == b.data.len() && a.data.iter().zip(&b.data).all(|(x, y)| x.to_bits() == y.to_bits())
            })
    }

    /// `‖L − L'‖_F / ‖L'‖_F` over the stored lower entries.
    pub fn relative_difference(&self, reference: &NumericFactor) -> f64 {
        let (mut diff, mut norm) = (0.0, 0.0);
        for (a, b) in self.blocks.iter().zip(&reference.blocks) {
            for c in 0..a.cols {
                for r in c..a.rows {
                    let (x, y) = (a.get(r, c), b.get(r, c));
                    diff += (x - y) * (x - y);
                    norm += y * y;
                }
            }
        }
        libm::sqrt(diff) / libm::sqrt(norm)
    }

    /// `‖L Lᵀ − A‖_F / ‖A‖_F` where `a` is the permuted matrix the factor was
    /// computed from. Accumulates `L Lᵀ` supernode by supernode into a dense
    /// `n × n` buffer, so it is meant for validation at moderate `n`.
    pub fn reconstruction_error(&self, a: &SparseSymmetric) -> f64 {
        let n = self.n();
        assert_eq!(a.n(), n, "matrix and factor dimensions differ");
        let mut product = vec![0.0; n * n];
        let mut rows = Vec::new();
        for (s, block) in self.blocks.iter().enumerate() {
            rows.clear();
            rows.extend((0..block.rows).map(|r| self.symbolic.global_row(s, r)));
            for (jr, &gj) in rows.iter().enumerate() {
                for k in 0..=jr.min(block.cols - 1) {
                    let ljk = block.get(jr, k);
                    if ljk == 0.0 {
                        continue;
                    }
                    let col = &block.data[k * block.rows..(k + 1) * block.rows];
                    for (ir, &gi) in rows.iter().enumerate().skip(jr) {
                        product[gi + gj * n] += col[ir] * ljk;
                    }
                }
            }
        }
        for (i, j, v) in a.triplets() {
            product[i + j * n] -= v;
        }
        let mut err = 0.0;
        for j in 0..n {
            for i in j..n {
                let e = product[i + j * n];
                err += if i == j { e * e } else { 2.0 * e * e };
            }
        }
        libm::sqrt(err) / a.norm_frobenius()
    }
}

/// Per-worker scratch: the global-row to local-row map of the supernode
/// being assembled, and the dense update buffer.
#[derive(Debug, Clone)]
pub struct Workspace {
    map: Vec<usize>,
    mapped: Option<usize>,
    update: Vec<f64>,
}

impl Workspace {
    pub fn new(n: usize) -> Self {
        Self { map: vec![0; n], mapped: None, update: Vec::new() }
    }

    /// Points the row map at supernode `s` unless it already is.
    pub fn ensure_map(&mut self, sym: &SymbolicFactor, s: usize) {
        if self.mapped != Some(s) {
            self.map_rows(sym, s);
        }
    }

    /// Points the row map at supernode `s`.
    pub fn map_rows(&mut self, sym: &SymbolicFactor, s: usize) {
        self.mapped = Some(s);
        let cols = sym.partition.columns(s);
        let w = cols.len();
        for (r, j) in cols.enumerate() {
            self.map[j] = r;
        }
        for (q, &i) in sym.below_rows(s).iter().enumerate() {
            self.map[i] = w + q;
        }
    }

    pub fn map(&self) -> &[usize] {
        &self.map
    }

    pub fn update(&self) -> &[f64] {
        &self.update
    }

    /// Moves the update buffer out, leaving an empty one behind.
    pub fn take_update(&mut self) -> Vec<f64> {
        core::mem::take(&mut self.update)
    }
}

/// A computed update `d → s`, detached from any workspace.
#[derive(Debug, Clone)]
pub struct Update {
    pub source: usize,
    pub shape: UpdateShape,
    pub values: Vec<f64>,
}

/// Zeroed packed block of `s` with `A`'s columns scattered in. Leaves the
/// workspace map pointing at `s`.
pub fn load_supernode(a: &SparseSymmetric, sym: &SymbolicFactor, s: usize, ws: &mut Workspace) -> DenseBlock {
    ws.map_rows(sym, s);
    let cols = sym.partition.columns(s);
    let m = sym.block_rows(s);
    let mut block = DenseBlock::zeros(m, cols.len());
    for (c, j) in cols.enumerate() {
        let (rows, vals) = a.column(j);
        for (&i, &v) in rows.iter().zip(vals) {
            block.data[ws.map[i] + c * m] = v;
        }
    }
    block
}

/// Computes the contribution of finished supernode `d` to `s` into the
/// workspace buffer: the lower triangle for the rows inside `s`'s diagonal
/// block (`SYRK`) stacked on the rows below it (`GEMM`).
pub fn compute_update(
    sym: &SymbolicFactor,
    d: usize,
    source: &DenseBlock,
    s: usize,
    par: &dyn Parallelism,
    ws: &mut Workspace,
) -> UpdateShape {
    let shape = sym.update_shape(d, s);
    debug_assert!(shape.hit > 0, "supernode {d} does not update {s}");
    let w = shape.width;
    let first = w + shape.start;
    let top = source.as_ref().row_range(first, first + shape.hit);
    let bottom = source.as_ref().row_range(first + shape.hit, source.rows);
    let ld = shape.hit + shape.rest;
    ws.update.clear();
    ws.update.resize(ld * shape.hit, 0.0);
    par_sym_rank_k(top, MatMut::new(&mut ws.update, shape.hit, shape.hit, ld), par);
    if shape.rest > 0 {
        par_general_matmul(bottom, top, MatMut::new(&mut ws.update[shape.hit..], shape.rest, shape.hit, ld), par);
    }
    shape
}

/// Subtracts an update buffer from `target`, the block of `s`. `map` must
/// point at `s`.
pub fn assemble_update(
    sym: &SymbolicFactor,
    d: usize,
    s: usize,
    shape: UpdateShape,
    values: &[f64],
    target: &mut DenseBlock,
    map: &[usize],
) {
    let rows = &sym.below_rows(d)[shape.start..];
    let first = sym.partition.super_ptr[s];
    let (ld_t, ld_u) = (target.rows, shape.hit + shape.rest);
    for c in 0..shape.hit {
        let col = (rows[c] - first) * ld_t;
        let src = &values[c * ld_u..(c + 1) * ld_u];
        for i in c..ld_u {
            target.data[map[rows[i]] + col] -= src[i];
        }
    }
}

/// Factors the diagonal block of `s` and solves the panel below it. A
/// failing pivot is reported by its column in the original matrix.
pub fn factor_block(sym: &SymbolicFactor, s: usize, block: &mut DenseBlock, par: &dyn Parallelism) -> Result<()> {
    let (m, w) = (block.rows, block.cols);
    par_dense_cholesky(MatMut::new(&mut block.data, w, w, m), par)
        .map_err(|j| Error::NotPositiveDefinite { column: sym.perm.perm()[sym.partition.super_ptr[s] + j] })?;
    if m > w {
        let mut diag = DenseBlock::zeros(w, w);
        for c in 0..w {
            diag.data[c * w + c..(c + 1) * w].copy_from_slice(&block.data[c * m + c..c * m + w]);
        }
        par_triangular_solve_right(diag.as_ref(), MatMut::new(&mut block.data[w..], m - w, w, m), par);
    }
    Ok(())
}

/// Builds supernode `s` from the finished blocks `done[d]` of its update
/// sources, applying updates in update-list order.
pub fn factor_supernode(
    a: &SparseSymmetric,
    sym: &SymbolicFactor,
    s: usize,
    done: &[DenseBlock],
    par: &dyn Parallelism,
    ws: &mut Workspace,
) -> Result<DenseBlock> {
    let mut block = load_supernode(a, sym, s, ws);
    for &d in sym.update_sources(s) {
        let shape = compute_update(sym, d, &done[d], s, par, ws);
        assemble_update(sym, d, s, shape, &ws.update, &mut block, &ws.map);
    }
    factor_block(sym, s, &mut block, par)?;
    Ok(block)
}

/// Single-threaded factorization with updates in update-list order; the
/// bit-reproducible baseline.
pub fn sequential_reference_factorize(a: &SparseSymmetric, sym: Arc<SymbolicFactor>) -> Result<NumericFactor> {
    in_order_factorize(a, sym, &Sequential, |_, _| {})
}

/// Supernodes strictly in ascending order on the calling thread, with every
/// kernel given `par`. `observe(s, started)` brackets each supernode.
pub fn in_order_factorize(
    a: &SparseSymmetric,
    sym: Arc<SymbolicFactor>,
    par: &dyn Parallelism,
    mut observe: impl FnMut(usize, bool),
) -> Result<NumericFactor> {
    if a.n() != sym.n() {
        return Err(Error::DimensionMismatch { expected: sym.n(), found: a.n() });
    }
    let mut ws = Workspace::new(a.n());
    let mut blocks: Vec<DenseBlock> = Vec::with_capacity(sym.n_super());
    for s in 0..sym.n_super() {
        observe(s, true);
        let block = factor_supernode(a, &sym, s, &blocks, par, &mut ws)?;
        blocks.push(block);
        observe(s, false);
    }
    Ok(NumericFactor::new(sym, blocks))
}
