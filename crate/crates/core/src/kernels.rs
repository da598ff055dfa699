//! Dense kernels on column-major blocks: Cholesky of a diagonal block,
//! triangular solve of the panel below it, symmetric rank-k update and
//! general multiply.
//!
//! Every output entry accumulates its products in ascending `k` starting
//! from the stored value (or from zero for the products), which is the
//! order of a naive triple loop. The parallel variants partition the output
//! and keep that per-entry order, so they agree with the sequential kernels
//! bit for bit at any thread count.

use alloc::vec;
use alloc::vec::Vec;

/// Fork-join executor used by the parallel kernel variants.
pub trait Parallelism: Sync {
    /// Number of workers the executor can run at once.
    fn degree(&self) -> usize;

    /// Runs every job, possibly concurrently, and returns once all are done.
    fn run(&self, jobs: &mut [&mut (dyn FnMut() + Send)]);
}

/// Runs jobs one after another on the calling thread.
#[derive(Debug, Clone, Copy, Default)]
pub struct Sequential;

impl Parallelism for Sequential {
    fn degree(&self) -> usize {
        1
    }

    fn run(&self, jobs: &mut [&mut (dyn FnMut() + Send)]) {
        for job in jobs.iter_mut() {
            job();
        }
    }
}

/// Below this many multiply-adds a parallel kernel runs sequentially.
const PARALLEL_WORK_MIN: usize = 1 << 14;
/// Column block width of the parallel Cholesky.
const CHOLESKY_BLOCK: usize = 32;

/// Owned, packed column-major block (`ld == rows`).
#[derive(Debug, Clone, PartialEq)]
pub struct DenseBlock {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f64>,
}

impl DenseBlock {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self { rows, cols, data: vec![0.0; rows * cols] }
    }

    pub fn identity(n: usize) -> Self {
        let mut b = Self::zeros(n, n);
        for i in 0..n {
            b.data[i + i * n] = 1.0;
        }
        b
    }

    pub fn from_col_major(rows: usize, cols: usize, data: Vec<f64>) -> Self {
        assert_eq!(data.len(), rows * cols, "data length must be rows * cols");
        Self { rows, cols, data }
    }

    /// Builds a block from row-major nested literals.
    pub fn from_rows(rows: &[&[f64]]) -> Self {
        let (m, n) = (rows.len(), rows.first().map_or(0, |r| r.len()));
        let mut b = Self::zeros(m, n);
        for (i, row) in rows.iter().enumerate() {
            assert_eq!(row.len(), n, "ragged rows");
            for (j, &v) in row.iter().enumerate() {
                b.data[i + j * m] = v;
            }
        }
        b
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i + j * self.rows]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        self.data[i + j * self.rows] = v;
    }

    pub fn as_ref(&self) -> MatRef<'_> {
        MatRef::new(&self.data, self.rows, self.cols, self.rows)
    }

    pub fn as_mut(&mut self) -> MatMut<'_> {
        MatMut::new(&mut self.data, self.rows, self.cols, self.rows)
    }
}

#[derive(Debug, Clone, Copy)]
pub struct MatRef<'a> {
    data: &'a [f64],
    rows: usize,
    cols: usize,
    ld: usize,
}

impl<'a> MatRef<'a> {
    pub fn new(data: &'a [f64], rows: usize, cols: usize, ld: usize) -> Self {
        assert!(ld >= rows, "leading dimension smaller than the row count");
        assert!(cols == 0 || rows == 0 || (cols - 1) * ld + rows <= data.len(), "view exceeds its buffer");
        Self { data, rows, cols, ld }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn at(&self, i: usize, j: usize) -> f64 {
        self.data[i + j * self.ld]
    }

    #[inline]
    pub fn col(&self, j: usize) -> &'a [f64] {
        &self.data[j * self.ld..j * self.ld + self.rows]
    }

    /// Rows `r0..r1` of this view.
    pub fn row_range(&self, r0: usize, r1: usize) -> MatRef<'a> {
        assert!(r0 <= r1 && r1 <= self.rows);
        let data = if r1 == r0 { &self.data[..0] } else { &self.data[r0..] };
        MatRef { data, rows: r1 - r0, cols: self.cols, ld: self.ld }
    }
}

#[derive(Debug)]
pub struct MatMut<'a> {
    data: &'a mut [f64],
    rows: usize,
    cols: usize,
    ld: usize,
}

impl<'a> MatMut<'a> {
    pub fn new(data: &'a mut [f64], rows: usize, cols: usize, ld: usize) -> Self {
        assert!(ld >= rows, "leading dimension smaller than the row count");
        assert!(cols == 0 || rows == 0 || (cols - 1) * ld + rows <= data.len(), "view exceeds its buffer");
        Self { data, rows, cols, ld }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn at(&self, i: usize, j: usize) -> f64 {
        self.data[i + j * self.ld]
    }

    pub fn as_ref(&self) -> MatRef<'_> {
        MatRef { data: self.data, rows: self.rows, cols: self.cols, ld: self.ld }
    }

    /// Splits columns at `bounds` (ascending, first 0, last `cols`) into
    /// independent views.
    fn split_columns(self, bounds: &[usize]) -> Vec<MatMut<'a>> {
        let (rows, ld) = (self.rows, self.ld);
        let mut rest = self.data;
        let mut out = Vec::with_capacity(bounds.len().saturating_sub(1));
        for w in bounds.windows(2) {
            let cols = w[1] - w[0];
            let len = (cols * ld).min(rest.len());
            let (head, tail) = core::mem::take(&mut rest).split_at_mut(len);
            out.push(MatMut { data: head, rows, cols, ld });
            rest = tail;
        }
        out
    }
}

/// In-place lower Cholesky factor of a square view; the strict upper
/// triangle is neither read nor written. On a non-positive pivot returns the
/// offending column.
pub fn dense_cholesky(a: MatMut<'_>) -> Result<(), usize> {
    assert_eq!(a.rows, a.cols, "Cholesky needs a square block");
    let (n, ld) = (a.rows, a.ld);
    let data = &mut *a.data;
    for j in 0..n {
        for k in 0..j {
            let ljk = data[j + k * ld];
            let (left, right) = data.split_at_mut(j * ld);
            let src = &left[k * ld + j..k * ld + n];
            let dst = &mut right[j..n];
            for (x, &l) in dst.iter_mut().zip(src) {
                *x -= l * ljk;
            }
        }
        finish_column(data, ld, n, j)?;
    }
    Ok(())
}

#[inline]
fn finish_column(data: &mut [f64], ld: usize, n: usize, j: usize) -> Result<(), usize> {
    let pivot = data[j + j * ld];
    if !(pivot > 0.0) {
        return Err(j);
    }
    let d = libm::sqrt(pivot);
    data[j + j * ld] = d;
    for x in &mut data[j * ld + j + 1..j * ld + n] {
        *x /= d;
    }
    Ok(())
}

/// `B := B · L⁻ᵀ` for lower-triangular `L`; only the lower triangle of `L`
/// is read.
pub fn triangular_solve_right(l: MatRef<'_>, b: MatMut<'_>) {
    assert_eq!(l.rows, l.cols, "triangular factor must be square");
    assert_eq!(b.cols, l.cols, "panel width must match the factor order");
    let (m, ld) = (b.rows, b.ld);
    let data = &mut *b.data;
    for j in 0..l.cols {
        for k in 0..j {
            let ljk = l.at(j, k);
            let (left, right) = data.split_at_mut(j * ld);
            let src = &left[k * ld..k * ld + m];
            for (x, &v) in right[..m].iter_mut().zip(src) {
                *x -= v * ljk;
            }
        }
        let d = l.at(j, j);
        debug_assert!(d != 0.0, "zero diagonal in triangular factor");
        for x in &mut data[j * ld..j * ld + m] {
            *x /= d;
        }
    }
}

/// Lower triangle of `panel · panelᵀ` written into `out` (`m × m`).
pub fn sym_rank_k(panel: MatRef<'_>, mut out: MatMut<'_>) {
    assert!(out.rows == panel.rows && out.cols == panel.rows, "output must be m x m");
    syrk_columns(panel, &mut out, 0);
}

/// Columns `c0..c0 + out.cols` of the lower triangle of `panel · panelᵀ`.
fn syrk_columns(panel: MatRef<'_>, out: &mut MatMut<'_>, c0: usize) {
    let m = panel.rows;
    let ld = out.ld;
    for jj in 0..out.cols {
        let j = c0 + jj;
        let dst = &mut out.data[jj * ld + j..jj * ld + m];
        dst.fill(0.0);
        for k in 0..panel.cols {
            let col = panel.col(k);
            let pjk = col[j];
            for (x, &p) in dst.iter_mut().zip(&col[j..]) {
                *x += p * pjk;
            }
        }
    }
}

/// `out := a · bᵀ` for `a` (`m × k`) and `b` (`p × k`).
pub fn general_matmul(a: MatRef<'_>, b: MatRef<'_>, mut out: MatMut<'_>) {
    assert_eq!(a.cols, b.cols, "inner dimensions must agree");
    assert!(out.rows == a.rows && out.cols == b.rows, "output must be m x p");
    gemm_columns(a, b, &mut out, 0);
}

fn gemm_columns(a: MatRef<'_>, b: MatRef<'_>, out: &mut MatMut<'_>, c0: usize) {
    let (m, ld) = (a.rows, out.ld);
    for jj in 0..out.cols {
        let dst = &mut out.data[jj * ld..jj * ld + m];
        dst.fill(0.0);
        for k in 0..a.cols {
            let bjk = b.at(c0 + jj, k);
            for (x, &v) in dst.iter_mut().zip(a.col(k)) {
                *x += v * bjk;
            }
        }
    }
}

/// Splits `0..n` into at most `parts` ranges of roughly equal `weight`.
fn balanced_bounds(n: usize, parts: usize, weight: impl Fn(usize) -> usize) -> Vec<usize> {
    let total: usize = (0..n).map(&weight).sum();
    let parts = parts.max(1);
    let mut bounds = vec![0];
    let mut acc = 0;
    for j in 0..n {
        acc += weight(j);
        let done = bounds.len();
        if done < parts && acc * parts >= total * done && j + 1 < n {
            bounds.push(j + 1);
        }
    }
    bounds.push(n);
    bounds.dedup();
    bounds
}

fn run_all<J: FnMut() + Send>(par: &dyn Parallelism, jobs: &mut [J]) {
    let mut refs: Vec<&mut (dyn FnMut() + Send)> = jobs.iter_mut().map(|j| j as &mut (dyn FnMut() + Send)).collect();
    par.run(&mut refs);
}

/// Parallel [`sym_rank_k`]: output columns are partitioned by work.
pub fn par_sym_rank_k(panel: MatRef<'_>, out: MatMut<'_>, par: &dyn Parallelism) {
    assert!(out.rows == panel.rows && out.cols == panel.rows, "output must be m x m");
    let m = panel.rows;
    if par.degree() <= 1 || m * m * panel.cols / 2 < PARALLEL_WORK_MIN {
        return sym_rank_k(panel, out);
    }
    let bounds = balanced_bounds(m, par.degree(), |j| m - j);
    let mut jobs: Vec<_> = out
        .split_columns(&bounds)
        .into_iter()
        .zip(bounds.iter().copied())
        .map(|(mut chunk, c0)| move || syrk_columns(panel, &mut chunk, c0))
        .collect();
    run_all(par, &mut jobs);
}

/// Parallel [`general_matmul`]: output columns are partitioned evenly.
pub fn par_general_matmul(a: MatRef<'_>, b: MatRef<'_>, out: MatMut<'_>, par: &dyn Parallelism) {
    assert_eq!(a.cols, b.cols, "inner dimensions must agree");
    assert!(out.rows == a.rows && out.cols == b.rows, "output must be m x p");
    if par.degree() <= 1 || a.rows * b.rows * a.cols < PARALLEL_WORK_MIN {
        return general_matmul(a, b, out);
    }
    let bounds = balanced_bounds(b.rows, par.degree(), |_| 1);
    let mut jobs: Vec<_> = out
        .split_columns(&bounds)
        .into_iter()
        .zip(bounds.iter().copied())
        .map(|(mut chunk, c0)| move || gemm_columns(a, b, &mut chunk, c0))
        .collect();
    run_all(par, &mut jobs);
}

/// Parallel [`triangular_solve_right`]: rows are independent, so each job
/// solves a contiguous copy of a row range which is written back afterwards.
pub fn par_triangular_solve_right(l: MatRef<'_>, b: MatMut<'_>, par: &dyn Parallelism) {
    assert_eq!(l.rows, l.cols, "triangular factor must be square");
    assert_eq!(b.cols, l.cols, "panel width must match the factor order");
    let (m, w) = (b.rows, b.cols);
    if par.degree() <= 1 || m * w * w / 2 < PARALLEL_WORK_MIN {
        return triangular_solve_right(l, b);
    }
    let bounds = balanced_bounds(m, par.degree(), |_| 1);
    let mut parts: Vec<(usize, DenseBlock)> = bounds
        .windows(2)
        .map(|r| {
            let rows = r[1] - r[0];
            let mut local = DenseBlock::zeros(rows, w);
            for j in 0..w {
                local.data[j * rows..(j + 1) * rows].copy_from_slice(&b.data[j * b.ld + r[0]..j * b.ld + r[1]]);
            }
            (r[0], local)
        })
        .collect();
    let mut jobs: Vec<_> =
        parts.iter_mut().map(|(_, local)| move || triangular_solve_right(l, local.as_mut())).collect();
    run_all(par, &mut jobs);
    drop(jobs);
    let ld = b.ld;
    for (r0, local) in parts {
        for j in 0..w {
            b.data[j * ld + r0..j * ld + r0 + local.rows]
                .copy_from_slice(&local.data[j * local.rows..(j + 1) * local.rows]);
        }
    }
}

/// Parallel [`dense_cholesky`]: blocked right-looking. Each column block is
/// factored on the calling thread, then the trailing columns are updated in
/// parallel. Every entry still sees its updates in ascending `k`.
pub fn par_dense_cholesky(a: MatMut<'_>, par: &dyn Parallelism) -> Result<(), usize> {
    assert_eq!(a.rows, a.cols, "Cholesky needs a square block");
    let (n, ld) = (a.rows, a.ld);
    if par.degree() <= 1 || n * n * n / 3 < PARALLEL_WORK_MIN {
        return dense_cholesky(a);
    }
    let data = a.data;
    let mut j0 = 0;
    while j0 < n {
        let j1 = (j0 + CHOLESKY_BLOCK).min(n);
        for j in j0..j1 {
            for k in j0..j {
                let ljk = data[j + k * ld];
                let (left, right) = data.split_at_mut(j * ld);
                let src = &left[k * ld + j..k * ld + n];
                for (x, &v) in right[j..n].iter_mut().zip(src) {
                    *x -= v * ljk;
                }
            }
            finish_column(data, ld, n, j)?;
        }
        if j1 < n {
            let (panel, trailing) = data.split_at_mut(j1 * ld);
            let panel: &[f64] = panel;
            let trailing = MatMut { data: trailing, rows: n, cols: n - j1, ld };
            let bounds = balanced_bounds(n - j1, par.degree(), |jj| (n - j1 - jj) * (j1 - j0));
            let mut jobs: Vec<_> = trailing
                .split_columns(&bounds)
                .into_iter()
                .zip(bounds.iter().copied())
                .map(|(chunk, c0)| {
                    move || {
                        for jj in 0..chunk.cols {
                            let j = j1 + c0 + jj;
                            let dst = &mut chunk.data[jj * ld + j..jj * ld + n];
                            for k in j0..j1 {
                                let ljk = panel[j + k * ld];
                                for (x, &v) in dst.iter_mut().zip(&panel[k * ld + j..k * ld + n]) {
                                    *x -= v * ljk;
                                }
                            }
                        }
                    }
                })
                .collect();
            run_all(par, &mut jobs);
        }
        j0 = j1;
    }
    Ok(())
}
