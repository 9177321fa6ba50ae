//! Compressed sparse row matrices and block-structured assembly targets.

use std::fmt::Write as _;
use std::io::{self, BufWriter, Write};
use std::path::Path;

use nalgebra::DMatrix;
use thiserror::Error;

use crate::basis::DofMap;
use crate::par::{fill_with, Execution};

#[derive(Debug, Error, PartialEq)]
pub enum SparseError {
    #[error("entry ({row}, {col}) out of range for a {n}x{n} matrix")]
    OutOfRange { row: usize, col: usize, n: usize },
    #[error("block ({0}, {1}) is not part of the sparsity pattern")]
    MissingBlock(usize, usize),
}

#[derive(Debug, Clone, PartialEq)]
pub struct CsrMatrix {
    pub n: usize,
    pub row_ptr: Vec<usize>,
    pub col_idx: Vec<usize>,
    pub values: Vec<f64>,
}

impl CsrMatrix {
    pub fn zeros_with_pattern(n: usize, row_ptr: Vec<usize>, col_idx: Vec<usize>) -> Self {
        let nnz = col_idx.len();
        Self { n, row_ptr, col_idx, values: vec![0.0; nnz] }
    }

    pub fn identity(n: usize) -> Self {
        Self { n, row_ptr: (0..=n).collect(), col_idx: (0..n).collect(), values: vec![1.0; n] }
    }

    pub fn from_dense(a: &DMatrix<f64>) -> Self {
        let mut t = TripletBuffer::new();
        for i in 0..a.nrows() {
            for j in 0..a.ncols() {
                if a[(i, j)] != 0.0 {
                    t.push(i, j, a[(i, j)]);
                }
            }
        }
        triplets_to_csr(&t, a.nrows()).expect("indices in range")
    }

    pub fn nnz(&self) -> usize {
        self.col_idx.len()
    }

    pub fn row(&self, i: usize) -> (&[usize], &[f64]) {
        let r = self.row_ptr[i]..self.row_ptr[i + 1];
        (&self.col_idx[r.clone()], &self.values[r])
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        let (cols, vals) = self.row(i);
        cols.binary_search(&j).map_or(0.0, |k| vals[k])
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        let mut d = DMatrix::zeros(self.n, self.n);
        for i in 0..self.n {
            let (cols, vals) = self.row(i);
            for (&j, &v) in cols.iter().zip(vals) {
                d[(i, j)] += v;
            }
        }
        d
    }

    pub fn matvec(&self, x: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; self.n];
        self.matvec_into(x, &mut y);
        y
    }

    pub fn matvec_into(&self, x: &[f64], y: &mut [f64]) {
        for (i, yi) in y.iter_mut().enumerate() {
            let (cols, vals) = self.row(i);
            *yi = cols.iter().zip(vals).map(|(&j, &v)| v * x[j]).sum();
        }
    }

    /// Row-parallel product when `exec` allows it.
    pub fn matvec_with(&self, exec: Execution, x: &[f64], y: &mut [f64]) {
        fill_with(exec, y, |i| {
            let (cols, vals) = self.row(i);
            cols.iter().zip(vals).map(|(&j, &v)| v * x[j]).sum()
        });
    }

    /// `max |A_ij - A_ji|`.
    pub fn symmetry_defect(&self) -> f64 {
        let mut d: f64 = 0.0;
        for i in 0..self.n {
            let (cols, vals) = self.row(i);
            for (&j, &v) in cols.iter().zip(vals) {
                d = d.max((v - self.get(j, i)).abs());
            }
        }
        d
    }

    /// Whether every stored `(i, j)` has a stored `(j, i)`.
    pub fn has_symmetric_pattern(&self) -> bool {
        (0..self.n).all(|i| self.row(i).0.iter().all(|&j| self.row(j).0.binary_search(&i).is_ok()))
    }

    /// `%%MatrixMarket matrix coordinate real symmetric|general`. Symmetric
    /// output keeps the lower triangle.
    pub fn write_matrix_market(&self, path: impl AsRef<Path>, symmetric: bool) -> io::Result<()> {
        let mut w = BufWriter::new(std::fs::File::create(path)?);
        let kind = if symmetric { "symmetric" } else { "general" };
        writeln!(w, "%%MatrixMarket matrix coordinate real {kind}")?;
        let count = if symmetric {
            (0..self.n).map(|i| self.row(i).0.iter().filter(|&&j| j <= i).count()).sum()
        } else {
            self.nnz()
        };
        writeln!(w, "{} {} {}", self.n, self.n, count)?;
        let mut line = String::new();
        for i in 0..self.n {
            let (cols, vals) = self.row(i);
            for (&j, &v) in cols.iter().zip(vals) {
                if symmetric && j > i {
                    continue;
                }
                line.clear();
                writeln!(line, "{} {} {:e}", i + 1, j + 1, v).unwrap();
                w.write_all(line.as_bytes())?;
            }
        }
        w.flush()
    }

    /// `row,col` pairs (0-based) of every stored entry.
    pub fn write_pattern_csv(&self, path: impl AsRef<Path>) -> io::Result<()> {
        let mut w = BufWriter::new(std::fs::File::create(path)?);
        writeln!(w, "row,col")?;
        for i in 0..self.n {
            for &j in self.row(i).0 {
                writeln!(w, "{i},{j}")?;
            }
        }
        w.flush()
    }
}

/// Coordinate-format accumulator; duplicates are summed on conversion.
#[derive(Debug, Clone, Default)]
pub struct TripletBuffer {
    pub entries: Vec<(usize, usize, f64)>,
}

impl TripletBuffer {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, i: usize, j: usize, v: f64) {
        self.entries.push((i, j, v));
    }

    /// Adds a dense block at `(row0, col0)`.
    pub fn push_block(&mut self, row0: usize, col0: usize, b: &DMatrix<f64>) {
        for c in 0..b.ncols() {
            for r in 0..b.nrows() {
                self.entries.push((row0 + r, col0 + c, b[(r, c)]));
            }
        }
    }

    pub fn append(&mut self, other: &mut TripletBuffer) {
        self.entries.append(&mut other.entries);
    }
}

pub fn triplets_to_csr(buffer: &TripletBuffer, n: usize) -> Result<CsrMatrix, SparseError> {
    let mut counts = vec![0usize; n + 1];
    for &(i, j, _) in &buffer.entries {
        if i >= n || j >= n {
            return Err(SparseError::OutOfRange { row: i, col: j, n });
        }
        counts[i + 1] += 1;
    }
    for i in 0..n {
        counts[i + 1] += counts[i];
    }
    let mut next = counts.clone();
    let mut cols = vec![0usize; buffer.entries.len()];
    let mut vals = vec![0.0; buffer.entries.len()];
    for &(i, j, v) in &buffer.entries {
        cols[next[i]] = j;
        vals[next[i]] = v;
        next[i] += 1;
    }
    let mut row_ptr = Vec::with_capacity(n + 1);
    let mut col_idx = Vec::with_capacity(cols.len());
    let mut values = Vec::with_capacity(cols.len());
    row_ptr.push(0);
    let mut scratch: Vec<(usize, f64)> = Vec::new();
    for i in 0..n {
        scratch.clear();
        scratch.extend(cols[counts[i]..counts[i + 1]].iter().copied().zip(vals[counts[i]..counts[i + 1]].iter().copied()));
        scratch.sort_by_key(|e| e.0);
        for &(j, v) in &scratch {
            if col_idx.len() > row_ptr[i] && *col_idx.last().unwrap() == j {
                *values.last_mut().unwrap() += v;
            } else {
                col_idx.push(j);
                values.push(v);
            }
        }
        row_ptr.push(col_idx.len());
    }
    Ok(CsrMatrix { n, row_ptr, col_idx, values })
}

/// CSR matrix whose pattern consists of dense element-pair blocks, with
/// constant-time lookup of where a block lives.
#[derive(Debug, Clone)]
pub struct BlockMatrix {
    pub matrix: CsrMatrix,
    dofs: DofMap,
    /// Per block row: sorted coupled elements and the column offset of each
    /// block within a row of that block row.
    blocks: Vec<Vec<(usize, usize)>>,
}

impl BlockMatrix {
    /// `coupling[r]` lists the elements coupled to `r` (need not be sorted or
    /// contain `r`; `r` is always included).
    pub fn new(dofs: &DofMap, coupling: &[Vec<usize>]) -> Self {
        let ne = dofs.n_elements();
        let mut blocks = Vec::with_capacity(ne);
        for (r, c) in coupling.iter().enumerate() {
            let mut s: Vec<usize> = c.clone();
            s.push(r);
            s.sort_unstable();
            s.dedup();
            let mut off = 0;
            let row: Vec<(usize, usize)> = s
                .into_iter()
                .map(|e| {
                    let o = off;
                    off += dofs.dim(e);
                    (e, o)
                })
                .collect();
            blocks.push(row);
        }
        let n = dofs.n_dofs();
        let mut row_ptr = Vec::with_capacity(n + 1);
        row_ptr.push(0);
        let mut col_idx = Vec::new();
        for (r, row) in blocks.iter().enumerate() {
            for _ in 0..dofs.dim(r) {
                for &(e, _) in row {
                    col_idx.extend(dofs.range(e));
                }
                row_ptr.push(col_idx.len());
            }
        }
        Self { matrix: CsrMatrix::zeros_with_pattern(n, row_ptr, col_idx), dofs: dofs.clone(), blocks }
    }

    pub fn block_offset(&self, r: usize, s: usize) -> Option<usize> {
        let row = &self.blocks[r];
        row.binary_search_by_key(&s, |e| e.0).ok().map(|k| row[k].1)
    }

    /// Number of stored element-pair blocks.
    pub fn n_blocks(&self) -> usize {
        self.blocks.iter().map(Vec::len).sum()
    }

    /// `A_rs += b`.
    pub fn add_block(&mut self, r: usize, s: usize, b: &DMatrix<f64>) -> Result<(), SparseError> {
        let off = self.block_offset(r, s).ok_or(SparseError::MissingBlock(r, s))?;
        let r0 = self.dofs.offset(r);
        debug_assert_eq!(b.shape(), (self.dofs.dim(r), self.dofs.dim(s)));
        for i in 0..b.nrows() {
            let start = self.matrix.row_ptr[r0 + i] + off;
            let dst = &mut self.matrix.values[start..start + b.ncols()];
            for (j, d) in dst.iter_mut().enumerate() {
                *d += b[(i, j)];
            }
        }
        Ok(())
    }

    pub fn into_csr(self) -> CsrMatrix {
        self.matrix
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::basis::DegreeVector;

    #[test]
    fn duplicates_are_summed() {
        let mut t = TripletBuffer::new();
        t.push(0, 0, 1.0);
        t.push(0, 0, 2.0);
        let a = triplets_to_csr(&t, 2).unwrap();
        assert_eq!(a.nnz(), 1);
        assert_eq!(a.get(0, 0), 3.0);
        assert_eq!(a.row_ptr, vec![0, 1, 1]);
    }

    #[test]
    fn empty_and_out_of_range() {
        let a = triplets_to_csr(&TripletBuffer::new(), 3).unwrap();
        assert_eq!(a.nnz(), 0);
        assert_eq!(a.row_ptr, vec![0; 4]);
        let mut t = TripletBuffer::new();
        t.push(3, 0, 1.0);
        assert!(triplets_to_csr(&t, 3).is_err());
    }

    #[test]
    fn symmetry_defect_examples() {
        let a = CsrMatrix::from_dense(&DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 0.0, 0.0]));
        assert_eq!(a.symmetry_defect(), 1.0);
        assert_eq!(CsrMatrix::identity(4).symmetry_defect(), 0.0);
    }

    #[test]
    fn block_matrix_layout() {
        let d = DegreeVector::new(vec![1, 2, 1]).unwrap();
        let dofs = DofMap::new(&d);
        let mut m = BlockMatrix::new(&dofs, &[vec![1], vec![0, 2], vec![1]]);
        assert_eq!(m.n_blocks(), 7);
        assert_eq!(m.matrix.nnz(), 9 + 18 + 18 + 36 + 18 + 18 + 9);
        let b = DMatrix::from_fn(3, 6, |i, j| (10 * i + j) as f64);
        m.add_block(0, 1, &b).unwrap();
        m.add_block(0, 1, &b).unwrap();
        assert_eq!(m.matrix.get(2, 3 + 5), 2.0 * 25.0);
        assert!(m.add_block(0, 2, &DMatrix::zeros(3, 3)).is_err());
        assert!(m.matrix.has_symmetric_pattern());
    }

    #[test]
    fn matrix_market_and_pattern_files() {
        let a = CsrMatrix::from_dense(&DMatrix::from_row_slice(2, 2, &[2.0, -1.0, -1.0, 2.0]));
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("a.mtx");
        a.write_matrix_market(&p, true).unwrap();
        let text = std::fs::read_to_string(&p).unwrap();
        assert!(text.starts_with("%%MatrixMarket matrix coordinate real symmetric\n2 2 3\n"));
        let q = dir.path().join("p.csv");
        a.write_pattern_csv(&q).unwrap();
        assert_eq!(std::fs::read_to_string(&q).unwrap().lines().count(), 5);
    }
}
