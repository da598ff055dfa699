//! Brute-force oracles shared by the integration tests. Nothing here calls
//! into the library except to read matrices.
#![allow(dead_code)]

use cholnest_core::SparseSymmetric;

/// Lower pattern of `L` by dense boolean elimination: `pattern[j][i]` for
/// `i >= j`.
pub fn dense_symbolic(a: &SparseSymmetric) -> Vec<Vec<bool>> {
    let n = a.n();
    let mut p = vec![vec![false; n]; n];
    for (i, j, _) in a.triplets() {
        p[i][j] = true;
        p[j][i] = true;
    }
    for k in 0..n {
        let rows: Vec<usize> = (k + 1..n).filter(|&i| p[i][k]).collect();
        for &i in &rows {
            for &j in &rows {
                p[i][j] = true;
            }
        }
    }
    (0..n).map(|j| (0..n).map(|i| i >= j && (i == j || p[i][j])).collect()).collect()
}

/// First structural non-zero below the diagonal of each column.
pub fn dense_etree(pattern: &[Vec<bool>]) -> Vec<Option<usize>> {
    let n = pattern.len();
    (0..n).map(|j| (j + 1..n).find(|&i| pattern[j][i])).collect()
}

/// Row-major dense copy of the full symmetric matrix.
pub fn dense(a: &SparseSymmetric) -> Vec<Vec<f64>> {
    let n = a.n();
    let mut m = vec![vec![0.0; n]; n];
    for (i, j, v) in a.triplets() {
        m[i][j] = v;
        m[j][i] = v;
    }
    m
}

/// Textbook Cholesky–Banachiewicz; `None` if a pivot is not positive.
pub fn dense_cholesky(m: &[Vec<f64>]) -> Option<Vec<Vec<f64>>> {
    let n = m.len();
    let mut l = vec![vec![0.0; n]; n];
    for i in 0..n {
        for j in 0..=i {
            let s: f64 = (0..j).map(|k| l[i][k] * l[j][k]).sum();
            if i == j {
                let d = m[i][i] - s;
                if d <= 0.0 {
                    return None;
                }
                l[i][j] = d.sqrt();
            } else {
                l[i][j] = (m[i][j] - s) / l[j][j];
            }
        }
    }
    Some(l)
}

/// Solves `m x = b` through the dense Cholesky factor.
pub fn dense_solve(m: &[Vec<f64>], b: &[f64]) -> Vec<f64> {
    let l = dense_cholesky(m).expect("oracle needs an SPD matrix");
    let n = b.len();
    let mut y = b.to_vec();
    for i in 0..n {
        for k in 0..i {
            y[i] -= l[i][k] * y[k];
        }
        y[i] /= l[i][i];
    }
    for i in (0..n).rev() {
        for k in i + 1..n {
            y[i] -= l[k][i] * y[k];
        }
        y[i] /= l[i][i];
    }
    y
}

/// `Σ_k a[i][k] b[j][k]` with `k` ascending, starting from zero.
pub fn naive_abt(a: &[Vec<f64>], b: &[Vec<f64>]) -> Vec<Vec<f64>> {
    a.iter()
        .map(|ra| {
            b.iter()
                .map(|rb| {
                    let mut s = 0.0;
                    for k in 0..ra.len() {
                        s += ra[k] * rb[k];
                    }
                    s
                })
                .collect()
        })
        .collect()
}

/// Opt-D for the default constants, transcribed separately: every
/// comparison is scaled to integers by hand (1.1 = 11/10, 0.3 = 3/10,
/// 1/1000).
pub fn opt_d_reference(n: usize, n_super: usize, c: &[usize]) -> usize {
    let max_children = *c.iter().max().unwrap();
    let mut t = vec![0u64; max_children + 1];
    for &x in c {
        t[x] += 1;
    }
    let (n, ns, mc) = (n as u128, n_super as u128, max_children as u128);
    let mut d = max_children + 1;
    let mut num_outer: u128 = 0;
    let mut num_tasks: u128 = ns;
    loop {
        let goal_unmet = 10 * num_tasks < 11 * ns || 14 * num_tasks < n;
        let too_high = 10 * d as u128 > 3 * mc;
        let too_few = 1000 * num_outer < ns;
        if !(goal_unmet || too_high || too_few) || d == 0 {
            return d;
        }
        d -= 1;
        num_outer += t[d] as u128;
        num_tasks += d as u128 * t[d] as u128;
    }
}

/// Six singleton supernodes with tree edges 1→4, 2→4, 3→5, 4→6, 5→6
/// (1-based), each child updating only its parent.
pub fn fig2_matrix() -> SparseSymmetric {
    let mut t: Vec<(usize, usize, f64)> = (0..6).map(|j| (j, j, 4.0)).collect();
    for (child, parent) in [(0, 3), (1, 3), (2, 4), (3, 5), (4, 5)] {
        t.push((parent, child, -1.0));
    }
    SparseSymmetric::from_triplets(6, t).unwrap()
}

/// Spawns one scoped thread per job.
#[derive(Debug)]
pub struct Threads(pub usize);

impl cholnest_core::Parallelism for Threads {
    fn degree(&self) -> usize {
        self.0
    }

    fn run(&self, jobs: &mut [&mut (dyn FnMut() + Send)]) {
        std::thread::scope(|s| {
            for job in jobs.iter_mut() {
                s.spawn(job);
            }
        });
    }
}
