//! Compressed sparse row matrices over interior unknowns.
//!
//! Factorization is delegated to faer's sparse LU; everything else (assembly,
//! products, symmetry checks, text dumps) lives here.

use std::io::Write;

use faer::prelude::*;
use faer::sparse::{SparseColMat, Triplet};
use nalgebra::DMatrix;

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct SparseOperator {
    rows: usize,
    cols: usize,
    indptr: Vec<usize>,
    indices: Vec<usize>,
    data: Vec<f64>,
}

impl SparseOperator {
    /// Builds a CSR matrix, summing duplicate `(row, col)` pairs.
    pub fn from_triplets(rows: usize, cols: usize, triplets: &[(usize, usize, f64)]) -> Self {
        let mut sorted: Vec<(usize, usize, f64)> = triplets.to_vec();
        debug_assert!(sorted.iter().all(|&(r, c, _)| r < rows && c < cols));
        sorted.sort_by(|a, b| (a.0, a.1).cmp(&(b.0, b.1)));
        let mut indptr = vec![0usize; rows + 1];
        let mut indices = Vec::with_capacity(sorted.len());
        let mut data = Vec::with_capacity(sorted.len());
        let mut last: Option<(usize, usize)> = None;
        for (r, c, v) in sorted {
            if last == Some((r, c)) {
                *data.last_mut().unwrap() += v;
                continue;
            }
            indices.push(c);
            data.push(v);
            indptr[r + 1] += 1;
            last = Some((r, c));
        }
        for r in 0..rows {
            indptr[r + 1] += indptr[r];
        }
        Self { rows, cols, indptr, indices, data }
    }

    pub fn identity(n: usize) -> Self {
        let t: Vec<_> = (0..n).map(|i| (i, i, 1.0)).collect();
        Self::from_triplets(n, n, &t)
    }

    pub fn from_diagonal(diag: &[f64]) -> Self {
        let t: Vec<_> = diag.iter().enumerate().map(|(i, &v)| (i, i, v)).collect();
        Self::from_triplets(diag.len(), diag.len(), &t)
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn nnz(&self) -> usize {
        self.data.len()
    }

    /// Column/value pairs stored in row `r`.
    pub fn row(&self, r: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let span = self.indptr[r]..self.indptr[r + 1];
        self.indices[span.clone()].iter().copied().zip(self.data[span].iter().copied())
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        let span = self.indptr[r]..self.indptr[r + 1];
        match self.indices[span.clone()].binary_search(&c) {
            Ok(p) => self.data[span.start + p],
            Err(_) => 0.0,
        }
    }

    pub fn triplets(&self) -> Vec<(usize, usize, f64)> {
        (0..self.rows).flat_map(|r| self.row(r).map(move |(c, v)| (r, c, v))).collect()
    }

    pub fn diagonal(&self) -> Vec<f64> {
        (0..self.rows.min(self.cols)).map(|i| self.get(i, i)).collect()
    }

    pub fn matvec(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(x.len(), self.cols, "matvec dimension");
        (0..self.rows).map(|r| self.row(r).map(|(c, v)| v * x[c]).sum()).collect()
    }

    pub fn transpose(&self) -> Self {
        let t: Vec<_> = self.triplets().into_iter().map(|(r, c, v)| (c, r, v)).collect();
        Self::from_triplets(self.cols, self.rows, &t)
    }

    pub fn scale(&self, alpha: f64) -> Self {
        let mut out = self.clone();
        out.data.iter_mut().for_each(|v| *v *= alpha);
        out
    }

    /// `alpha * self + beta * other`.
    pub fn axpby(&self, alpha: f64, other: &Self, beta: f64) -> Self {
        assert_eq!((self.rows, self.cols), (other.rows, other.cols), "axpby shapes");
        let mut t: Vec<_> = self.triplets().into_iter().map(|(r, c, v)| (r, c, alpha * v)).collect();
        t.extend(other.triplets().into_iter().map(|(r, c, v)| (r, c, beta * v)));
        Self::from_triplets(self.rows, self.cols, &t)
    }

    pub fn add(&self, other: &Self) -> Self {
        self.axpby(1.0, other, 1.0)
    }

    pub fn sub(&self, other: &Self) -> Self {
        self.axpby(1.0, other, -1.0)
    }

    pub fn matmul(&self, other: &Self) -> Self {
        assert_eq!(self.cols, other.rows, "matmul shapes");
        let mut t = Vec::new();
        for r in 0..self.rows {
            for (k, a) in self.row(r) {
                for (c, b) in other.row(k) {
                    t.push((r, c, a * b));
                }
            }
        }
        Self::from_triplets(self.rows, other.cols, &t)
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    /// `max |A - A^T|` entrywise.
    pub fn asymmetry(&self) -> f64 {
        if self.rows != self.cols {
            return f64::INFINITY;
        }
        self.sub(&self.transpose()).max_abs()
    }

    /// Symmetric up to `rel_tol * max|A|`.
    pub fn is_symmetric(&self, rel_tol: f64) -> bool {
        self.asymmetry() <= rel_tol * self.max_abs().max(f64::MIN_POSITIVE)
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        let mut m = DMatrix::zeros(self.rows, self.cols);
        for (r, c, v) in self.triplets() {
            m[(r, c)] += v;
        }
        m
    }

    fn to_faer(&self) -> Result<SparseColMat<usize, f64>> {
        let t: Vec<_> = self.triplets().into_iter().map(|(r, c, v)| Triplet::new(r, c, v)).collect();
        SparseColMat::try_new_from_triplets(self.rows, self.cols, &t).map_err(|e| Error::Singular {
            reason: format!("matrix conversion failed: {e:?}"),
            condition_estimate: None,
        })
    }

    /// MatrixMarket coordinate format, 1-based indices.
    pub fn write_matrix_market<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "%%MatrixMarket matrix coordinate real general")?;
        writeln!(out, "{} {} {}", self.rows, self.cols, self.nnz())?;
        for (r, c, v) in self.triplets() {
            writeln!(out, "{} {} {:.17e}", r + 1, c + 1, v)?;
        }
        Ok(())
    }
}

/// Sparse LU factorization of a square operator.
pub struct SparseLu {
    n: usize,
    lu: faer::sparse::linalg::solvers::Lu<usize, f64>,
    diag_ratio: f64,
}

impl SparseLu {
    pub fn new(a: &SparseOperator) -> Result<Self> {
        if a.rows != a.cols {
            return Err(Error::DimensionMismatch { expected: a.rows, got: a.cols });
        }
        let diag = a.diagonal();
        let dmax = diag.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        let dmin = diag.iter().fold(f64::INFINITY, |m, v| m.min(v.abs()));
        let diag_ratio = if dmin > 0.0 { dmax / dmin } else { f64::INFINITY };
        let lu = a.to_faer()?.sp_lu().map_err(|e| Error::Singular {
            reason: format!("sparse LU failed: {e:?}"),
            condition_estimate: Some(diag_ratio),
        })?;
        Ok(Self { n: a.rows, lu, diag_ratio })
    }

    /// Ratio of largest to smallest diagonal magnitude, a cheap conditioning hint.
    pub fn diag_ratio(&self) -> f64 {
        self.diag_ratio
    }

    pub fn solve(&self, b: &[f64]) -> Result<Vec<f64>> {
        if b.len() != self.n {
            return Err(Error::DimensionMismatch { expected: self.n, got: b.len() });
        }
        let rhs = Mat::<f64>::from_fn(self.n, 1, |i, _| b[i]);
        let x = self.lu.solve(&rhs);
        let out: Vec<f64> = (0..self.n).map(|i| x[(i, 0)]).collect();
        if out.iter().any(|v| !v.is_finite()) {
            return Err(Error::Singular {
                reason: "LU solve produced non-finite values".into(),
                condition_estimate: Some(self.diag_ratio),
            });
        }
        Ok(out)
    }
}

/// Unpreconditioned conjugate gradient for symmetric positive definite `a`.
pub fn conjugate_gradient(a: &SparseOperator, b: &[f64], tol: f64, max_iter: usize) -> Result<Vec<f64>> {
    let n = b.len();
    let mut x = vec![0.0; n];
    let mut r = b.to_vec();
    let mut p = r.clone();
    let mut rr: f64 = r.iter().map(|v| v * v).sum();
    let bnorm = rr.sqrt().max(f64::MIN_POSITIVE);
    for _ in 0..max_iter {
        if rr.sqrt() <= tol * bnorm {
            return Ok(x);
        }
        let ap = a.matvec(&p);
        let pap: f64 = p.iter().zip(&ap).map(|(a, b)| a * b).sum();
        if !(pap > 0.0) {
            return Err(Error::Singular {
                reason: "conjugate gradient met a non-positive curvature direction".into(),
                condition_estimate: None,
            });
        }
        let alpha = rr / pap;
        for i in 0..n {
            x[i] += alpha * p[i];
            r[i] -= alpha * ap[i];
        }
        let rr_new: f64 = r.iter().map(|v| v * v).sum();
        let beta = rr_new / rr;
        rr = rr_new;
        for i in 0..n {
            p[i] = r[i] + beta * p[i];
        }
    }
    if rr.sqrt() <= tol * bnorm {
        Ok(x)
    } else {
        Err(Error::Diverged(format!("conjugate gradient did not reach {tol:e} in {max_iter} iterations")))
    }
}
