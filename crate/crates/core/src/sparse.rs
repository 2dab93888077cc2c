//! Minimal compressed-row storage plus a thin wrapper around the faer sparse LU.

use faer::prelude::Solve;
use faer::sparse::{SparseColMat, Triplet};
use faer::Mat;

use crate::error::{ChbError, Result};

/// Accumulates `(row, col, value)` entries; duplicates are summed on compression.
#[derive(Debug, Clone, Default)]
pub struct TripletBuilder {
    nrows: usize,
    ncols: usize,
    entries: Vec<(usize, usize, f64)>,
}

impl TripletBuilder {
    pub fn new(nrows: usize, ncols: usize) -> Self {
        Self {
            nrows,
            ncols,
            entries: Vec::new(),
        }
    }

    pub fn with_capacity(nrows: usize, ncols: usize, cap: usize) -> Self {
        Self {
            nrows,
            ncols,
            entries: Vec::with_capacity(cap),
        }
    }

    #[inline]
    pub fn push(&mut self, row: usize, col: usize, val: f64) {
        debug_assert!(row < self.nrows && col < self.ncols);
        if val != 0.0 {
            self.entries.push((row, col, val));
        }
    }

    /// Adds every entry of `m`, scaled, at the given block offset.
    pub fn add_block(&mut self, m: &CsrMatrix, row0: usize, col0: usize, scale: f64) {
        for r in 0..m.nrows {
            for k in m.indptr[r]..m.indptr[r + 1] {
                self.push(row0 + r, col0 + m.indices[k], scale * m.data[k]);
            }
        }
    }

    /// Adds the transpose of `m`, scaled, at the given block offset.
    pub fn add_block_transposed(&mut self, m: &CsrMatrix, row0: usize, col0: usize, scale: f64) {
        for r in 0..m.nrows {
            for k in m.indptr[r]..m.indptr[r + 1] {
                self.push(row0 + m.indices[k], col0 + r, scale * m.data[k]);
            }
        }
    }

    pub fn nrows(&self) -> usize {
        self.nrows
    }

    pub fn ncols(&self) -> usize {
        self.ncols
    }

    pub fn to_csr(&self) -> CsrMatrix {
        let mut sorted = self.entries.clone();
        sorted.sort_unstable_by(|a, b| (a.0, a.1).cmp(&(b.0, b.1)));
        let mut indptr = vec![0usize; self.nrows + 1];
        let mut indices = Vec::with_capacity(sorted.len());
        let mut data: Vec<f64> = Vec::with_capacity(sorted.len());
        let mut last: Option<(usize, usize)> = None;
        for (r, c, v) in sorted {
            if last == Some((r, c)) {
                *data.last_mut().unwrap() += v;
            } else {
                indices.push(c);
                data.push(v);
                indptr[r + 1] += 1;
                last = Some((r, c));
            }
        }
        for r in 0..self.nrows {
            indptr[r + 1] += indptr[r];
        }
        CsrMatrix {
            nrows: self.nrows,
            ncols: self.ncols,
            indptr,
            indices,
            data,
        }
    }

    /// Factorizes the accumulated square matrix.
    pub fn factorize(&self) -> Result<SparseLu> {
        SparseLu::new(self)
    }
}

#[derive(Debug, Clone)]
pub struct CsrMatrix {
    pub nrows: usize,
    pub ncols: usize,
    pub indptr: Vec<usize>,
    pub indices: Vec<usize>,
    pub data: Vec<f64>,
}

impl CsrMatrix {
    pub fn zeros(nrows: usize, ncols: usize) -> Self {
        Self {
            nrows,
            ncols,
            indptr: vec![0; nrows + 1],
            indices: Vec::new(),
            data: Vec::new(),
        }
    }

    pub fn nnz(&self) -> usize {
        self.data.len()
    }

    /// `(column, value)` pairs of row `r`.
    pub fn row(&self, r: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        (self.indptr[r]..self.indptr[r + 1]).map(move |k| (self.indices[k], self.data[k]))
    }

    pub fn mul_vec(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(x.len(), self.ncols);
        (0..self.nrows)
            .map(|r| {
                (self.indptr[r]..self.indptr[r + 1])
                    .map(|k| self.data[k] * x[self.indices[k]])
                    .sum()
            })
            .collect()
    }

    /// `y += scale * A x`
    pub fn mul_vec_add(&self, x: &[f64], scale: f64, y: &mut [f64]) {
        assert_eq!(x.len(), self.ncols);
        assert_eq!(y.len(), self.nrows);
        for r in 0..self.nrows {
            let mut s = 0.0;
            for k in self.indptr[r]..self.indptr[r + 1] {
                s += self.data[k] * x[self.indices[k]];
            }
            y[r] += scale * s;
        }
    }

    /// `y += scale * A^T x`
    pub fn mul_vec_transposed_add(&self, x: &[f64], scale: f64, y: &mut [f64]) {
        assert_eq!(x.len(), self.nrows);
        assert_eq!(y.len(), self.ncols);
        for r in 0..self.nrows {
            let xr = scale * x[r];
            if xr == 0.0 {
                continue;
            }
            for k in self.indptr[r]..self.indptr[r + 1] {
                y[self.indices[k]] += self.data[k] * xr;
            }
        }
    }

    pub fn mul_vec_transposed(&self, x: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; self.ncols];
        self.mul_vec_transposed_add(x, 1.0, &mut y);
        y
    }

    /// `x^T A y`
    pub fn bilinear(&self, x: &[f64], y: &[f64]) -> f64 {
        assert_eq!(x.len(), self.nrows);
        assert_eq!(y.len(), self.ncols);
        let mut s = 0.0;
        for r in 0..self.nrows {
            let mut t = 0.0;
            for k in self.indptr[r]..self.indptr[r + 1] {
                t += self.data[k] * y[self.indices[k]];
            }
            s += x[r] * t;
        }
        s
    }

    pub fn quadratic(&self, x: &[f64]) -> f64 {
        self.bilinear(x, x)
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        (self.indptr[r]..self.indptr[r + 1])
            .find(|&k| self.indices[k] == c)
            .map(|k| self.data[k])
            .unwrap_or(0.0)
    }

    pub fn row_sums(&self) -> Vec<f64> {
        (0..self.nrows)
            .map(|r| self.data[self.indptr[r]..self.indptr[r + 1]].iter().sum())
            .collect()
    }

    /// Largest `|A_ij - A_ji|`; only meaningful for square matrices.
    pub fn max_asymmetry(&self) -> f64 {
        let mut worst = 0.0f64;
        for r in 0..self.nrows {
            for k in self.indptr[r]..self.indptr[r + 1] {
                let c = self.indices[k];
                worst = worst.max((self.data[k] - self.get(c, r)).abs());
            }
        }
        worst
    }

    pub fn to_dense(&self) -> Vec<Vec<f64>> {
        let mut d = vec![vec![0.0; self.ncols]; self.nrows];
        for r in 0..self.nrows {
            for k in self.indptr[r]..self.indptr[r + 1] {
                d[r][self.indices[k]] += self.data[k];
            }
        }
        d
    }
}

/// Sparse LU with partial pivoting.
pub struct SparseLu {
    n: usize,
    lu: faer::sparse::linalg::solvers::Lu<usize, f64>,
}

impl SparseLu {
    pub fn new(builder: &TripletBuilder) -> Result<Self> {
        if builder.nrows != builder.ncols {
            return Err(ChbError::solver("LU of a non-square matrix", vec![]));
        }
        let triplets: Vec<Triplet<usize, usize, f64>> = builder
            .entries
            .iter()
            .map(|&(r, c, v)| Triplet::new(r, c, v))
            .collect();
        let mat = SparseColMat::<usize, f64>::try_new_from_triplets(
            builder.nrows,
            builder.ncols,
            &triplets,
        )
        .map_err(|e| ChbError::solver(format!("sparse assembly failed: {e:?}"), vec![]))?;
        let lu = mat
            .sp_lu()
            .map_err(|e| ChbError::solver(format!("sparse LU failed: {e:?}"), vec![]))?;
        Ok(Self {
            n: builder.nrows,
            lu,
        })
    }

    pub fn solve(&self, rhs: &[f64]) -> Result<Vec<f64>> {
        assert_eq!(rhs.len(), self.n);
        let b = Mat::<f64>::from_fn(self.n, 1, |i, _| rhs[i]);
        let x = self.lu.solve(&b);
        let out: Vec<f64> = (0..self.n).map(|i| x[(i, 0)]).collect();
        if out.iter().any(|v| !v.is_finite()) {
            return Err(ChbError::solver("singular system (non-finite solution)", vec![]));
        }
        Ok(out)
    }
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn norm_inf(a: &[f64]) -> f64 {
    a.iter().fold(0.0f64, |m, v| m.max(v.abs()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn duplicates_are_summed() {
        let mut t = TripletBuilder::new(2, 2);
        t.push(0, 0, 1.0);
        t.push(0, 0, 2.0);
        t.push(1, 0, 4.0);
        t.push(1, 1, 1.0);
        let m = t.to_csr();
        assert_eq!(m.get(0, 0), 3.0);
        assert_eq!(m.mul_vec(&[1.0, 1.0]), vec![3.0, 5.0]);
        assert_eq!(m.mul_vec_transposed(&[1.0, 1.0]), vec![7.0, 1.0]);
        assert_eq!(m.max_asymmetry(), 4.0);
    }

    #[test]
    fn lu_solves_small_system() {
        let mut t = TripletBuilder::new(2, 2);
        t.push(0, 0, 2.0);
        t.push(0, 1, 1.0);
        t.push(1, 1, 4.0);
        let x = t.factorize().unwrap().solve(&[3.0, 4.0]).unwrap();
        assert!((x[0] - 1.0).abs() < 1e-14 && (x[1] - 1.0).abs() < 1e-14);
    }
}
