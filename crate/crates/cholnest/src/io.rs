//! Matrix Market input/output, permutation files and dense vectors.

use std::fs::File;
use std::io::{self, BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use cholnest_core::{Permutation, SparseSymmetric};

#[derive(Debug, thiserror::Error)]
pub enum IoError {
    #[error("{path}: {source}")]
    Open { path: String, source: io::Error },
    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error(transparent)]
    Io(#[from] io::Error),
    #[error(transparent)]
    Matrix(#[from] cholnest_core::Error),
}

fn parse_err(line: usize, msg: impl Into<String>) -> IoError {
    IoError::Parse { line, msg: msg.into() }
}

fn open(path: &Path) -> Result<BufReader<File>, IoError> {
    File::open(path).map(BufReader::new).map_err(|source| IoError::Open { path: path.display().to_string(), source })
}

fn create(path: &Path) -> Result<BufWriter<File>, IoError> {
    File::create(path).map(BufWriter::new).map_err(|source| IoError::Open { path: path.display().to_string(), source })
}

/// Parses a `matrix coordinate real|integer symmetric` file. Entries in the
/// upper triangle are mirrored, duplicates are summed and explicit zeros
/// are kept.
pub fn read_matrix_market<R: BufRead>(reader: R) -> Result<SparseSymmetric, IoError> {
    let mut lines = reader.lines().enumerate().map(|(i, l)| (i + 1, l));
    let (_, header) = lines.next().ok_or_else(|| parse_err(1, "empty file"))?;
    let header = header?;
    let fields: Vec<String> = header.split_whitespace().map(str::to_ascii_lowercase).collect();
    if fields.len() != 5 || fields[0] != "%%matrixmarket" {
        return Err(parse_err(1, "expected a %%MatrixMarket header"));
    }
    if fields[1] != "matrix" || fields[2] != "coordinate" {
        return Err(parse_err(1, "only `matrix coordinate` files are supported"));
    }
    match fields[3].as_str() {
        "real" | "integer" => {}
        "pattern" => return Err(parse_err(1, "pattern-only files carry no values")),
        other => return Err(parse_err(1, format!("unsupported field type `{other}`"))),
    }
    if fields[4] != "symmetric" {
        return Err(parse_err(1, format!("expected symmetric storage, found `{}`", fields[4])));
    }

    let mut size = None;
    let mut entries = Vec::new();
    let mut expected = 0;
    for (no, line) in lines {
        let line = line?;
        let t = line.trim();
        if t.is_empty() || t.starts_with('%') {
            continue;
        }
        let mut it = t.split_whitespace();
        let Some((rows, cols)) = size else {
            let nums: Vec<usize> = it
                .map(|x| x.parse().map_err(|_| parse_err(no, format!("bad size field `{x}`"))))
                .collect::<Result<_, _>>()?;
            if nums.len() != 3 {
                return Err(parse_err(no, "size line needs rows, columns and entries"));
            }
            if nums[0] != nums[1] {
                return Err(parse_err(no, "matrix is not square"));
            }
            size = Some((nums[0], nums[1]));
            expected = nums[2];
            entries.reserve(expected);
            continue;
        };
        let mut index = |name: &str, dim: usize| -> Result<usize, IoError> {
            let field = it.next().ok_or_else(|| parse_err(no, format!("missing {name} index")))?;
            let v: usize = field.parse().map_err(|_| parse_err(no, format!("bad {name} index `{field}`")))?;
            if v == 0 || v > dim {
                return Err(parse_err(no, format!("{name} index {v} outside 1..={dim}")));
            }
            Ok(v - 1)
        };
        let i = index("row", rows)?;
        let j = index("column", cols)?;
        let field = it.next().ok_or_else(|| parse_err(no, "missing value"))?;
        let v: f64 = field.parse().map_err(|_| parse_err(no, format!("bad value `{field}`")))?;
        entries.push((i, j, v));
    }
    let (n, _) = size.ok_or_else(|| parse_err(1, "missing size line"))?;
    if entries.len() != expected {
        return Err(parse_err(0, format!("size line announces {expected} entries, found {}", entries.len())));
    }
    Ok(SparseSymmetric::from_triplets(n, entries)?)
}

pub fn load_matrix(path: impl AsRef<Path>) -> Result<SparseSymmetric, IoError> {
    read_matrix_market(open(path.as_ref())?)
}

/// Writes the lower triangle with full `f64` round-trip precision.
pub fn write_matrix_market<W: Write>(mut w: W, a: &SparseSymmetric) -> io::Result<()> {
    writeln!(w, "%%MatrixMarket matrix coordinate real symmetric")?;
    writeln!(w, "{} {} {}", a.n(), a.n(), a.nnz())?;
    for (i, j, v) in a.triplets() {
        writeln!(w, "{} {} {:e}", i + 1, j + 1, v)?;
    }
    w.flush()
}

pub fn save_matrix(path: impl AsRef<Path>, a: &SparseSymmetric) -> Result<(), IoError> {
    Ok(write_matrix_market(create(path.as_ref())?, a)?)
}

/// Whitespace-separated numbers; lines starting with `%` or `#` are skipped.
fn read_numbers<R: BufRead, T: std::str::FromStr>(reader: R) -> Result<Vec<T>, IoError> {
    let mut out = Vec::new();
    for (k, line) in reader.lines().enumerate() {
        let line = line?;
        let t = line.trim();
        if t.starts_with('%') || t.starts_with('#') {
            continue;
        }
        for field in t.split_whitespace() {
            out.push(field.parse().map_err(|_| parse_err(k + 1, format!("bad number `{field}`")))?);
        }
    }
    Ok(out)
}

pub fn read_vector<R: BufRead>(reader: R) -> Result<Vec<f64>, IoError> {
    read_numbers(reader)
}

pub fn load_vector(path: impl AsRef<Path>) -> Result<Vec<f64>, IoError> {
    read_vector(open(path.as_ref())?)
}

/// One value per line.
pub fn write_vector<W: Write>(mut w: W, x: &[f64]) -> io::Result<()> {
    for v in x {
        writeln!(w, "{v:e}")?;
    }
    w.flush()
}

pub fn save_vector(path: impl AsRef<Path>, x: &[f64]) -> Result<(), IoError> {
    Ok(write_vector(create(path.as_ref())?, x)?)
}

/// A new-to-old permutation as 0-based indices: entry `k` is the original
/// index of the `k`-th eliminated column.
pub fn read_permutation<R: BufRead>(reader: R) -> Result<Permutation, IoError> {
    Ok(Permutation::from_new_to_old(read_numbers(reader)?)?)
}

pub fn load_permutation(path: impl AsRef<Path>) -> Result<Permutation, IoError> {
    read_permutation(open(path.as_ref())?)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(s: &str) -> Result<SparseSymmetric, IoError> {
        read_matrix_market(s.as_bytes())
    }

    #[test]
    fn identity() {
        let a = parse("%%MatrixMarket matrix coordinate real symmetric\n% c\n3 3 3\n1 1 1\n2 2 1\n3 3 1\n").unwrap();
        assert_eq!((a.n(), a.nnz()), (3, 3));
        assert_eq!(a.values(), &[1.0; 3]);
        assert!((a.density() - 1.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn duplicates_summed_and_upper_mirrored() {
        let a =
            parse("%%MatrixMarket matrix coordinate real symmetric\n2 2 4\n1 1 2\n2 1 0.5\n1 2 0.5\n2 2 3\n").unwrap();
        assert_eq!(a.nnz(), 3);
        assert_eq!(a.values(), &[2.0, 1.0, 3.0]);
    }

    #[test]
    fn integer_widened() {
        let a = parse("%%MatrixMarket matrix coordinate integer symmetric\n1 1 1\n1 1 7\n").unwrap();
        assert_eq!(a.values(), &[7.0]);
    }

    #[test]
    fn arrowhead_layout() {
        let a = parse(
            "%%MatrixMarket matrix coordinate real symmetric\n4 4 7\n1 1 4\n2 2 4\n3 3 4\n4 4 4\n4 1 1\n4 2 1\n4 3 1\n",
        )
        .unwrap();
        assert_eq!(a.col_ptr(), &[0, 2, 4, 6, 7]);
        assert_eq!(a.density(), 0.625);
    }

    #[test]
    fn rejects_bad_inputs() {
        let cases = [
            "",
            "%%MatrixMarket matrix coordinate pattern symmetric\n1 1 1\n1 1\n",
            "%%MatrixMarket matrix coordinate real general\n1 1 1\n1 1 1\n",
            "%%MatrixMarket matrix array real symmetric\n1 1\n1\n",
            "%%MatrixMarket matrix coordinate real symmetric\n2 2 1\n3 1 1\n",
            "%%MatrixMarket matrix coordinate real symmetric\n2 3 1\n1 1 1\n",
            "%%MatrixMarket matrix coordinate real symmetric\n2 2 2\n1 1 1\n",
        ];
        for c in cases {
            assert!(parse(c).is_err(), "accepted {c:?}");
        }
        let missing_diag = parse("%%MatrixMarket matrix coordinate real symmetric\n2 2 2\n1 1 1\n2 1 1\n");
        assert!(matches!(missing_diag, Err(IoError::Matrix(cholnest_core::Error::MissingDiagonal { col: 1 }))));
    }

    #[test]
    fn round_trip() {
        let a = cholnest_core::generate::laplacian_2d(3, 4);
        let mut buf = Vec::new();
        write_matrix_market(&mut buf, &a).unwrap();
        assert_eq!(read_matrix_market(buf.as_slice()).unwrap(), a);
    }

    #[test]
    fn vectors_and_permutations() {
        let x = [1.5, -2.0, 1e-300];
        let mut buf = Vec::new();
        write_vector(&mut buf, &x).unwrap();
        assert_eq!(read_vector(buf.as_slice()).unwrap(), x);
        let p = read_permutation("# order\n2 0\n1\n".as_bytes()).unwrap();
        assert_eq!(p.perm(), &[2, 0, 1]);
        assert!(read_permutation("0 0".as_bytes()).is_err());
    }
}
