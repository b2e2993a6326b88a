//! Compressed-row sparse matrices and the kernels used by PCG.

use std::io::Write;

use crate::error::{Error, Result};

/// Square sparse matrix in compressed-row form with sorted, unique columns per row.
#[derive(Clone, Debug, PartialEq)]
pub struct SparseMatrix {
    n: usize,
    row_offsets: Vec<usize>,
    col_indices: Vec<usize>,
    values: Vec<f64>,
}

impl SparseMatrix {
    pub fn new(
        n: usize,
        row_offsets: Vec<usize>,
        col_indices: Vec<usize>,
        values: Vec<f64>,
    ) -> Result<Self> {
        if row_offsets.len() != n + 1 {
            return Err(Error::Structure(format!(
                "row_offsets has length {}, expected {}",
                row_offsets.len(),
                n + 1
            )));
        }
        if row_offsets[0] != 0 {
            return Err(Error::Structure("row_offsets[0] must be 0".into()));
        }
        let nnz = col_indices.len();
        if values.len() != nnz || row_offsets[n] != nnz {
            return Err(Error::Structure(format!(
                "nnz mismatch: offsets end at {}, {} columns, {} values",
                row_offsets[n],
                nnz,
                values.len()
            )));
        }
        for i in 0..n {
            let (lo, hi) = (row_offsets[i], row_offsets[i + 1]);
            if hi < lo {
                return Err(Error::Structure(format!("row_offsets decrease at row {i}")));
            }
            let cols = &col_indices[lo..hi];
            if cols.iter().any(|&c| c >= n) {
                return Err(Error::Structure(format!("column index out of range in row {i}")));
            }
            if cols.windows(2).any(|w| w[0] >= w[1]) {
                return Err(Error::Structure(format!(
                    "columns not strictly increasing in row {i}"
                )));
            }
        }
        Ok(Self {
            n,
            row_offsets,
            col_indices,
            values,
        })
    }

    /// Builds a matrix from `(row, col, value)` triplets; duplicates are summed.
    pub fn from_triplets(n: usize, triplets: &[(usize, usize, f64)]) -> Result<Self> {
        let mut sorted: Vec<_> = triplets.to_vec();
        if let Some(&(r, c, _)) = sorted.iter().find(|&&(r, c, _)| r >= n || c >= n) {
            return Err(Error::Structure(format!("entry ({r}, {c}) outside {n}x{n}")));
        }
        sorted.sort_by_key(|&(r, c, _)| (r, c));
        let mut row_offsets = vec![0; n + 1];
        let mut col_indices = Vec::with_capacity(sorted.len());
        let mut values: Vec<f64> = Vec::with_capacity(sorted.len());
        let mut last: Option<(usize, usize)> = None;
        for (r, c, v) in sorted {
            if last == Some((r, c)) {
                *values.last_mut().unwrap() += v;
                continue;
            }
            row_offsets[r + 1] += 1;
            col_indices.push(c);
            values.push(v);
            last = Some((r, c));
        }
        for i in 0..n {
            row_offsets[i + 1] += row_offsets[i];
        }
        Self::new(n, row_offsets, col_indices, values)
    }

    /// Builds a matrix from a dense row-major array, keeping nonzero entries
    /// and always keeping the diagonal.
    pub fn from_dense(n: usize, dense: &[f64]) -> Result<Self> {
        if dense.len() != n * n {
            return Err(Error::DimensionMismatch {
                expected: n * n,
                found: dense.len(),
            });
        }
        let triplets: Vec<_> = (0..n)
            .flat_map(|i| (0..n).map(move |j| (i, j)))
            .filter(|&(i, j)| i == j || dense[i * n + j] != 0.0)
            .map(|(i, j)| (i, j, dense[i * n + j]))
            .collect();
        Self::from_triplets(n, &triplets)
    }

    pub fn identity(n: usize) -> Self {
        Self {
            n,
            row_offsets: (0..=n).collect(),
            col_indices: (0..n).collect(),
            values: vec![1.0; n],
        }
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn nnz(&self) -> usize {
        self.col_indices.len()
    }

    pub fn row_offsets(&self) -> &[usize] {
        &self.row_offsets
    }

    pub fn col_indices(&self) -> &[usize] {
        &self.col_indices
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Mutable access to the stored values; the pattern is fixed.
    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    #[inline]
    pub fn row(&self, i: usize) -> (&[usize], &[f64]) {
        let (lo, hi) = (self.row_offsets[i], self.row_offsets[i + 1]);
        (&self.col_indices[lo..hi], &self.values[lo..hi])
    }

    /// Storage position of entry `(i, j)`, if structurally present.
    pub fn position(&self, i: usize, j: usize) -> Option<usize> {
        let (lo, hi) = (self.row_offsets[i], self.row_offsets[i + 1]);
        self.col_indices[lo..hi]
            .binary_search(&j)
            .ok()
            .map(|k| lo + k)
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.position(i, j).map_or(0.0, |k| self.values[k])
    }

    pub fn to_dense(&self) -> Vec<f64> {
        let mut dense = vec![0.0; self.n * self.n];
        for i in 0..self.n {
            let (cols, vals) = self.row(i);
            for (&j, &v) in cols.iter().zip(vals) {
                dense[i * self.n + j] = v;
            }
        }
        dense
    }

    pub fn spmv(&self, x: &[f64]) -> Result<Vec<f64>> {
        let mut y = vec![0.0; self.n];
        self.spmv_into(x, &mut y)?;
        Ok(y)
    }

    /// `y = A x`, accumulated in ascending column order per row.
    pub fn spmv_into(&self, x: &[f64], y: &mut [f64]) -> Result<()> {
        self.check_len(x.len())?;
        self.check_len(y.len())?;
        for (i, yi) in y.iter_mut().enumerate() {
            let (cols, vals) = self.row(i);
            *yi = cols.iter().zip(vals).map(|(&j, &v)| v * x[j]).sum();
        }
        Ok(())
    }

    /// The diagonal entries; every one must be structurally present.
    pub fn diagonal(&self) -> Result<Vec<f64>> {
        (0..self.n)
            .map(|i| {
                self.position(i, i)
                    .map(|k| self.values[k])
                    .ok_or_else(|| Error::Structure(format!("missing diagonal entry in row {i}")))
            })
            .collect()
    }

    /// Structural and numerical symmetry within `tol`.
    pub fn is_symmetric(&self, tol: f64) -> bool {
        (0..self.n).all(|i| {
            let (cols, vals) = self.row(i);
            cols.iter().zip(vals).all(|(&j, &v)| {
                self.position(j, i)
                    .is_some_and(|k| (self.values[k] - v).abs() <= tol)
            })
        })
    }

    /// Strictly lower part (`j < i`), keeping A's pattern.
    pub fn strict_lower(&self) -> SparseMatrix {
        self.filtered(|i, j| j < i)
    }

    /// Strictly upper part (`j > i`), keeping A's pattern.
    pub fn strict_upper(&self) -> SparseMatrix {
        self.filtered(|i, j| j > i)
    }

    /// Lower triangle including the diagonal.
    pub fn lower(&self) -> SparseMatrix {
        self.filtered(|i, j| j <= i)
    }

    /// Upper triangle including the diagonal.
    pub fn upper(&self) -> SparseMatrix {
        self.filtered(|i, j| j >= i)
    }

    fn filtered(&self, keep: impl Fn(usize, usize) -> bool) -> SparseMatrix {
        let mut row_offsets = Vec::with_capacity(self.n + 1);
        let mut col_indices = Vec::new();
        let mut values = Vec::new();
        row_offsets.push(0);
        for i in 0..self.n {
            let (cols, vals) = self.row(i);
            for (&j, &v) in cols.iter().zip(vals) {
                if keep(i, j) {
                    col_indices.push(j);
                    values.push(v);
                }
            }
            row_offsets.push(col_indices.len());
        }
        SparseMatrix {
            n: self.n,
            row_offsets,
            col_indices,
            values,
        }
    }

    /// Transpose of a triangular factor. Only used to lay out `Lᵀ` for
    /// incomplete Cholesky; not a general-purpose operation.
    pub(crate) fn transpose(&self) -> SparseMatrix {
        let n = self.n;
        let mut counts = vec![0usize; n + 1];
        for &j in &self.col_indices {
            counts[j + 1] += 1;
        }
        for i in 0..n {
            counts[i + 1] += counts[i];
        }
        let row_offsets = counts.clone();
        let mut next = counts;
        let mut col_indices = vec![0; self.nnz()];
        let mut values = vec![0.0; self.nnz()];
        for i in 0..n {
            let (cols, vals) = self.row(i);
            for (&j, &v) in cols.iter().zip(vals) {
                let k = next[j];
                col_indices[k] = i;
                values[k] = v;
                next[j] += 1;
            }
        }
        SparseMatrix {
            n,
            row_offsets,
            col_indices,
            values,
        }
    }

    fn check_len(&self, len: usize) -> Result<()> {
        if len != self.n {
            return Err(Error::DimensionMismatch {
                expected: self.n,
                found: len,
            });
        }
        Ok(())
    }

    /// Writes the lower triangle in Matrix Market coordinate format with a
    /// `symmetric` header (1-based indices).
    pub fn write_matrix_market<W: Write>(&self, mut out: W) -> Result<()> {
        let lower = self.lower();
        writeln!(out, "%%MatrixMarket matrix coordinate real symmetric")?;
        writeln!(out, "{} {} {}", self.n, self.n, lower.nnz())?;
        for i in 0..self.n {
            let (cols, vals) = lower.row(i);
            for (&j, &v) in cols.iter().zip(vals) {
                writeln!(out, "{} {} {:e}", i + 1, j + 1, v)?;
            }
        }
        Ok(())
    }
}

pub fn spmv(a: &SparseMatrix, x: &[f64]) -> Result<Vec<f64>> {
    a.spmv(x)
}

pub fn diagonal(a: &SparseMatrix) -> Result<Vec<f64>> {
    a.diagonal()
}

/// Forward substitution `L x = b`. With `unit_diag` the diagonal is taken as 1
/// and any stored diagonal entry is ignored.
pub fn lower_solve(l: &SparseMatrix, b: &[f64], unit_diag: bool) -> Result<Vec<f64>> {
    let mut x = vec![0.0; l.dim()];
    lower_solve_into(l, b, unit_diag, &mut x)?;
    Ok(x)
}

pub fn lower_solve_into(l: &SparseMatrix, b: &[f64], unit_diag: bool, x: &mut [f64]) -> Result<()> {
    l.check_len(b.len())?;
    l.check_len(x.len())?;
    x.copy_from_slice(b);
    lower_solve_in_place(l, x, unit_diag)
}

/// Forward substitution overwriting the right-hand side with the solution.
pub fn lower_solve_in_place(l: &SparseMatrix, x: &mut [f64], unit_diag: bool) -> Result<()> {
    l.check_len(x.len())?;
    for i in 0..l.dim() {
        let (cols, vals) = l.row(i);
        let mut acc = x[i];
        let mut pivot = if unit_diag { 1.0 } else { 0.0 };
        for (&j, &v) in cols.iter().zip(vals) {
            if j < i {
                acc -= v * x[j];
            } else if j == i {
                if !unit_diag {
                    pivot = v;
                }
            } else {
                return Err(Error::Structure(format!(
                    "entry ({i}, {j}) above the diagonal in a lower-triangular solve"
                )));
            }
        }
        if pivot == 0.0 {
            return Err(Error::SingularFactor { row: i });
        }
        x[i] = acc / pivot;
    }
    Ok(())
}

/// Backward substitution `U x = b`; mirror of [`lower_solve`].
pub fn upper_solve(u: &SparseMatrix, b: &[f64], unit_diag: bool) -> Result<Vec<f64>> {
    let mut x = vec![0.0; u.dim()];
    upper_solve_into(u, b, unit_diag, &mut x)?;
    Ok(x)
}

pub fn upper_solve_into(u: &SparseMatrix, b: &[f64], unit_diag: bool, x: &mut [f64]) -> Result<()> {
    u.check_len(b.len())?;
    u.check_len(x.len())?;
    x.copy_from_slice(b);
    upper_solve_in_place(u, x, unit_diag)
}

/// Backward substitution overwriting the right-hand side with the solution.
pub fn upper_solve_in_place(u: &SparseMatrix, x: &mut [f64], unit_diag: bool) -> Result<()> {
    u.check_len(x.len())?;
    for i in (0..u.dim()).rev() {
        let (cols, vals) = u.row(i);
        let mut acc = x[i];
        let mut pivot = if unit_diag { 1.0 } else { 0.0 };
        for (&j, &v) in cols.iter().zip(vals) {
            if j > i {
                acc -= v * x[j];
            } else if j == i {
                if !unit_diag {
                    pivot = v;
                }
            } else {
                return Err(Error::Structure(format!(
                    "entry ({i}, {j}) below the diagonal in an upper-triangular solve"
                )));
            }
        }
        if pivot == 0.0 {
            return Err(Error::SingularFactor { row: i });
        }
        x[i] = acc / pivot;
    }
    Ok(())
}

#[inline]
pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[inline]
pub(crate) fn norm2(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}
