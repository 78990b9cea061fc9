//! Compressed sparse row matrices.
//!
//! Adjacency and projection matrices are fixed for the lifetime of a run, so
//! the type is immutable once built. The text triplet format written by
//! [`CsrMatrix::write_triplets`] is
//!
//! ```text
//! rows cols nnz
//! i j value
//! ...
//! ```
//!
//! with entries in row-major order and values printed in shortest
//! round-trip form, so reading a file back reproduces the matrix exactly.

use std::io::{BufRead, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::matrix::Matrix;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CsrMatrix {
    rows: usize,
    cols: usize,
    indptr: Vec<usize>,
    indices: Vec<usize>,
    values: Vec<f64>,
}

impl CsrMatrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            indptr: vec![0; rows + 1],
            indices: Vec::new(),
            values: Vec::new(),
        }
    }

    pub fn identity(n: usize) -> Self {
        Self {
            rows: n,
            cols: n,
            indptr: (0..=n).collect(),
            indices: (0..n).collect(),
            values: vec![1.0; n],
        }
    }

    /// Builds from `(row, col, value)` triplets. Duplicates are summed and
    /// explicit zeros dropped.
    pub fn from_triplets(
        rows: usize,
        cols: usize,
        mut triplets: Vec<(usize, usize, f64)>,
    ) -> Result<Self> {
        for &(i, j, _) in &triplets {
            if i >= rows {
                return Err(Error::IndexOutOfRange {
                    index: i,
                    size: rows,
                });
            }
            if j >= cols {
                return Err(Error::IndexOutOfRange {
                    index: j,
                    size: cols,
                });
            }
        }
        triplets.sort_by_key(|t| (t.0, t.1));
        let mut merged: Vec<(usize, usize, f64)> = Vec::with_capacity(triplets.len());
        for (i, j, v) in triplets {
            match merged.last_mut() {
                Some(last) if (last.0, last.1) == (i, j) => last.2 += v,
                _ => merged.push((i, j, v)),
            }
        }
        merged.retain(|t| t.2 != 0.0);
        let mut indptr = vec![0; rows + 1];
        let mut indices = Vec::with_capacity(merged.len());
        let mut values = Vec::with_capacity(merged.len());
        for (i, j, v) in merged {
            indptr[i + 1] += 1;
            indices.push(j);
            values.push(v);
        }
        for r in 0..rows {
            indptr[r + 1] += indptr[r];
        }
        Ok(Self {
            rows,
            cols,
            indptr,
            indices,
            values,
        })
    }

    pub fn from_dense(m: &Matrix) -> Self {
        let mut t = Vec::new();
        for i in 0..m.rows() {
            for (j, &v) in m.row(i).iter().enumerate() {
                if v != 0.0 {
                    t.push((i, j, v));
                }
            }
        }
        Self::from_triplets(m.rows(), m.cols(), t).expect("indices in range")
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    /// Column indices and values of row `i`.
    pub fn row(&self, i: usize) -> (&[usize], &[f64]) {
        let (s, e) = (self.indptr[i], self.indptr[i + 1]);
        (&self.indices[s..e], &self.values[s..e])
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        let (idx, vals) = self.row(i);
        match idx.binary_search(&j) {
            Ok(p) => vals[p],
            Err(_) => 0.0,
        }
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn iter(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        (0..self.rows).flat_map(move |i| {
            let (idx, vals) = self.row(i);
            idx.iter().zip(vals).map(move |(&j, &v)| (i, j, v))
        })
    }

    pub fn transpose(&self) -> CsrMatrix {
        let t = self.iter().map(|(i, j, v)| (j, i, v)).collect();
        CsrMatrix::from_triplets(self.cols, self.rows, t).expect("indices in range")
    }

    pub fn to_dense(&self) -> Matrix {
        let mut m = Matrix::zeros(self.rows, self.cols);
        for (i, j, v) in self.iter() {
            m.set(i, j, v);
        }
        m
    }

    /// Exact structural and numerical symmetry. Returns the first offending
    /// entry otherwise.
    pub fn check_symmetric(&self) -> Result<()> {
        if self.rows != self.cols {
            return Err(Error::Shape(format!(
                "square matrix required, got {}x{}",
                self.rows, self.cols
            )));
        }
        for (i, j, v) in self.iter() {
            if self.get(j, i) != v {
                return Err(Error::Asymmetric { row: i, col: j });
            }
        }
        Ok(())
    }

    /// `self · dense`
    pub fn matmul_dense(&self, dense: &Matrix) -> Result<Matrix> {
        if self.cols != dense.rows() {
            return Err(Error::Shape(format!(
                "sparse matmul: {:?} with {:?}",
                self.shape(),
                dense.shape()
            )));
        }
        let m = dense.cols();
        let mut out = Matrix::zeros(self.rows, m);
        for i in 0..self.rows {
            let (idx, vals) = self.row(i);
            let o = out.row_mut(i);
            for (&j, &a) in idx.iter().zip(vals) {
                for (x, &b) in o.iter_mut().zip(dense.row(j)) {
                    *x += a * b;
                }
            }
        }
        Ok(out)
    }

    pub fn write_triplets(&self, mut w: impl Write) -> std::io::Result<()> {
        writeln!(w, "{} {} {}", self.rows, self.cols, self.nnz())?;
        for (i, j, v) in self.iter() {
            writeln!(w, "{i} {j} {v:?}")?;
        }
        Ok(())
    }

    pub fn save_triplets(&self, path: &Path) -> Result<()> {
        let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        let mut w = std::io::BufWriter::new(file);
        self.write_triplets(&mut w)
            .and_then(|_| w.flush())
            .map_err(|e| Error::io(path, e))
    }

    pub fn read_triplets(r: impl BufRead, origin: &Path) -> Result<Self> {
        let mut lines = r.lines().enumerate();
        let parse_err = |line: usize, msg: &str| Error::parse(origin, line, msg);
        let (_, header) = lines.next().ok_or_else(|| parse_err(1, "missing header"))?;
        let header = header.map_err(|e| Error::io(origin, e))?;
        let dims: Vec<usize> = header
            .split_whitespace()
            .map(str::parse)
            .collect::<std::result::Result<_, _>>()
            .map_err(|_| parse_err(1, "header must be `rows cols nnz`"))?;
        let [rows, cols, nnz] = dims[..] else {
            return Err(parse_err(1, "header must be `rows cols nnz`"));
        };
        let mut triplets = Vec::with_capacity(nnz);
        for (n, line) in lines {
            let line = line.map_err(|e| Error::io(origin, e))?;
            if line.trim().is_empty() {
                continue;
            }
            let mut parts = line.split_whitespace();
            let (Some(i), Some(j), Some(v), None) =
                (parts.next(), parts.next(), parts.next(), parts.next())
            else {
                return Err(parse_err(n + 1, "expected `i j value`"));
            };
            let i = i.parse().map_err(|_| parse_err(n + 1, "bad row index"))?;
            let j = j
                .parse()
                .map_err(|_| parse_err(n + 1, "bad column index"))?;
            let v = v.parse().map_err(|_| parse_err(n + 1, "bad value"))?;
            triplets.push((i, j, v));
        }
        if triplets.len() != nnz {
            return Err(parse_err(
                1,
                &format!("header declares {nnz} entries, found {}", triplets.len()),
            ));
        }
        CsrMatrix::from_triplets(rows, cols, triplets)
    }

    pub fn load_triplets(path: &Path) -> Result<Self> {
        let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
        Self::read_triplets(std::io::BufReader::new(file), path)
    }
}
