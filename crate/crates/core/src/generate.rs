//! Test matrix generators.

use alloc::vec::Vec;

use rand::Rng;

use crate::SparseSymmetric;

/// Random symmetric matrix with about `density · n²` stored entries off the
/// diagonal (counting both triangles), made positive definite by strict
/// diagonal dominance. Off-diagonal values are uniform in `[-1, 1)`.
pub fn random_spd<R: Rng + ?Sized>(rng: &mut R, n: usize, density: f64) -> SparseSymmetric {
    assert!(n > 0, "matrix must have at least one row");
    let pairs = n * (n - 1) / 2;
    let target = libm::round((density * (n * n) as f64 - n as f64) / 2.0).clamp(0.0, pairs as f64) as usize;
    let mut entries = Vec::with_capacity(n + target);
    let mut row_sum = alloc::vec![0.0f64; n];
    let mut chosen = alloc::collections::BTreeSet::new();
    if target * 2 > pairs {
        // Dense enough that rejection sampling would stall: flip a coin per pair.
        let p = target as f64 / pairs as f64;
        for j in 0..n {
            for i in j + 1..n {
                if rng.gen_bool(p) {
                    chosen.insert((i, j));
                }
            }
        }
    } else {
        while chosen.len() < target {
            let i = rng.gen_range(0..n);
            let j = rng.gen_range(0..n);
            if i != j {
                chosen.insert((i.max(j), i.min(j)));
            }
        }
    }
    for (i, j) in chosen {
        let v: f64 = rng.gen_range(-1.0..1.0);
        row_sum[i] += v.abs();
        row_sum[j] += v.abs();
        entries.push((i, j, v));
    }
    for (j, s) in row_sum.into_iter().enumerate() {
        entries.push((j, j, s + 1.0));
    }
    SparseSymmetric::from_triplets(n, entries).expect("generated entries are in range")
}

/// Five-point Laplacian on an `nx × ny` grid, row-major numbering.
pub fn laplacian_2d(nx: usize, ny: usize) -> SparseSymmetric {
    let id = |x: usize, y: usize| y * nx + x;
    let mut entries = Vec::new();
    for y in 0..ny {
        for x in 0..nx {
            entries.push((id(x, y), id(x, y), 4.0));
            if x + 1 < nx {
                entries.push((id(x + 1, y), id(x, y), -1.0));
            }
            if y + 1 < ny {
                entries.push((id(x, y + 1), id(x, y), -1.0));
            }
        }
    }
    SparseSymmetric::from_triplets(nx * ny, entries).expect("grid indices are in range")
}

/// Seven-point Laplacian on an `n × n × n` grid.
pub fn laplacian_3d(n: usize) -> SparseSymmetric {
    let id = |x: usize, y: usize, z: usize| (z * n + y) * n + x;
    let mut entries = Vec::new();
    for z in 0..n {
        for y in 0..n {
            for x in 0..n {
                let c = id(x, y, z);
                entries.push((c, c, 6.0));
                if x + 1 < n {
                    entries.push((id(x + 1, y, z), c, -1.0));
                }
                if y + 1 < n {
                    entries.push((id(x, y + 1, z), c, -1.0));
                }
                if z + 1 < n {
                    entries.push((id(x, y, z + 1), c, -1.0));
                }
            }
        }
    }
    SparseSymmetric::from_triplets(n * n * n, entries).expect("grid indices are in range")
}

/// `diag` on the diagonal and `off` on the first sub-diagonal.
pub fn tridiagonal(n: usize, diag: f64, off: f64) -> SparseSymmetric {
    let mut entries: Vec<_> = (0..n).map(|j| (j, j, diag)).collect();
    entries.extend((1..n).map(|j| (j, j - 1, off)));
    SparseSymmetric::from_triplets(n, entries).expect("band indices are in range")
}

/// Last row and column full, everything else diagonal.
pub fn arrowhead(n: usize) -> SparseSymmetric {
    let mut entries: Vec<_> = (0..n).map(|j| (j, j, if j + 1 == n { n as f64 } else { 2.0 })).collect();
    entries.extend((0..n.saturating_sub(1)).map(|j| (n - 1, j, 1.0)));
    SparseSymmetric::from_triplets(n, entries).expect("arrow indices are in range")
}
