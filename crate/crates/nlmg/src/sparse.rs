//! Compressed-sparse-row matrices and nodal coefficient vectors.
//!
//! The matrices assembled in this crate are small enough that a plain CSR
//! layout with deterministic construction (sorted triplets, fixed reduction
//! order) covers everything: assembly, Galerkin triple products, smoothing
//! sweeps and matrix-vector products.

use nalgebra::DMatrix;

/// Sparse matrix in compressed-sparse-row form.
#[derive(Debug, Clone, PartialEq)]
pub struct CsrMatrix {
    n_rows: usize,
    n_cols: usize,
    row_ptr: Vec<usize>,
    col_idx: Vec<usize>,
    vals: Vec<f64>,
}

impl CsrMatrix {
    /// Empty matrix with the given shape.
    pub fn zeros(n_rows: usize, n_cols: usize) -> Self {
        CsrMatrix {
            n_rows,
            n_cols,
            row_ptr: vec![0; n_rows + 1],
            col_idx: Vec::new(),
            vals: Vec::new(),
        }
    }

    /// Build from (row, col, value) triplets; duplicates are summed.
    pub fn from_triplets(n_rows: usize, n_cols: usize, mut t: Vec<(usize, usize, f64)>) -> Self {
        t.sort_unstable_by(|a, b| (a.0, a.1).cmp(&(b.0, b.1)));
        let mut merged: Vec<(usize, usize, f64)> = Vec::with_capacity(t.len());
        for (i, j, v) in t {
            debug_assert!(i < n_rows && j < n_cols);
            match merged.last_mut() {
                Some(last) if last.0 == i && last.1 == j => last.2 += v,
                _ => merged.push((i, j, v)),
            }
        }
        let mut row_ptr = vec![0usize; n_rows + 1];
        for &(i, _, _) in &merged {
            row_ptr[i + 1] += 1;
        }
        for i in 0..n_rows {
            row_ptr[i + 1] += row_ptr[i];
        }
        let col_idx = merged.iter().map(|m| m.1).collect();
        let vals = merged.iter().map(|m| m.2).collect();
        CsrMatrix {
            n_rows,
            n_cols,
            row_ptr,
            col_idx,
            vals,
        }
    }

    pub fn n_rows(&self) -> usize {
        self.n_rows
    }

    pub fn n_cols(&self) -> usize {
        self.n_cols
    }

    pub fn nnz(&self) -> usize {
        self.col_idx.len()
    }

    pub fn row(&self, i: usize) -> (&[usize], &[f64]) {
        let (a, b) = (self.row_ptr[i], self.row_ptr[i + 1]);
        (&self.col_idx[a..b], &self.vals[a..b])
    }

    /// Entry (i, j), zero if not stored.
    pub fn get(&self, i: usize, j: usize) -> f64 {
        let (cols, vals) = self.row(i);
        match cols.binary_search(&j) {
            Ok(p) => vals[p],
            Err(_) => 0.0,
        }
    }

    pub fn diagonal(&self) -> Vec<f64> {
        (0..self.n_rows).map(|i| self.get(i, i)).collect()
    }

    pub fn matvec(&self, x: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; self.n_rows];
        self.matvec_into(x, &mut y);
        y
    }

    pub fn matvec_into(&self, x: &[f64], y: &mut [f64]) {
        assert_eq!(x.len(), self.n_cols);
        assert_eq!(y.len(), self.n_rows);
        for i in 0..self.n_rows {
            let (cols, vals) = (
                &self.col_idx[self.row_ptr[i]..self.row_ptr[i + 1]],
                &self.vals[self.row_ptr[i]..self.row_ptr[i + 1]],
            );
            let mut s = 0.0;
            for (c, v) in cols.iter().zip(vals) {
                s += v * x[*c];
            }
            y[i] = s;
        }
    }

    pub fn transpose(&self) -> CsrMatrix {
        let mut count = vec![0usize; self.n_cols + 1];
        for &j in &self.col_idx {
            count[j + 1] += 1;
        }
        for j in 0..self.n_cols {
            count[j + 1] += count[j];
        }
        let row_ptr = count.clone();
        let mut col_idx = vec![0usize; self.nnz()];
        let mut vals = vec![0.0; self.nnz()];
        let mut next = count;
        for i in 0..self.n_rows {
            for p in self.row_ptr[i]..self.row_ptr[i + 1] {
                let j = self.col_idx[p];
                let dst = next[j];
                col_idx[dst] = i;
                vals[dst] = self.vals[p];
                next[j] += 1;
            }
        }
        CsrMatrix {
            n_rows: self.n_cols,
            n_cols: self.n_rows,
            row_ptr,
            col_idx,
            vals,
        }
    }

    /// Sparse product self * rhs with a dense row accumulator.
    pub fn matmul(&self, rhs: &CsrMatrix) -> CsrMatrix {
        assert_eq!(self.n_cols, rhs.n_rows);
        let n = rhs.n_cols;
        let mut acc = vec![0.0f64; n];
        let mut marked = vec![false; n];
        let mut touched: Vec<usize> = Vec::new();
        let mut row_ptr = Vec::with_capacity(self.n_rows + 1);
        row_ptr.push(0usize);
        let mut col_idx = Vec::new();
        let mut vals = Vec::new();
        for i in 0..self.n_rows {
            touched.clear();
            for p in self.row_ptr[i]..self.row_ptr[i + 1] {
                let k = self.col_idx[p];
                let a = self.vals[p];
                for q in rhs.row_ptr[k]..rhs.row_ptr[k + 1] {
                    let j = rhs.col_idx[q];
                    if !marked[j] {
                        marked[j] = true;
                        touched.push(j);
                        acc[j] = 0.0;
                    }
                    acc[j] += a * rhs.vals[q];
                }
            }
            touched.sort_unstable();
            for &j in &touched {
                col_idx.push(j);
                vals.push(acc[j]);
                marked[j] = false;
            }
            row_ptr.push(col_idx.len());
        }
        CsrMatrix {
            n_rows: self.n_rows,
            n_cols: n,
            row_ptr,
            col_idx,
            vals,
        }
    }

    /// self + alpha * other (patterns may differ).
    pub fn add_scaled(&self, other: &CsrMatrix, alpha: f64) -> CsrMatrix {
        assert_eq!(self.n_rows, other.n_rows);
        assert_eq!(self.n_cols, other.n_cols);
        let mut row_ptr = Vec::with_capacity(self.n_rows + 1);
        row_ptr.push(0usize);
        let mut col_idx = Vec::new();
        let mut vals = Vec::new();
        for i in 0..self.n_rows {
            let (ca, va) = self.row(i);
            let (cb, vb) = other.row(i);
            let (mut p, mut q) = (0, 0);
            while p < ca.len() || q < cb.len() {
                if q >= cb.len() || (p < ca.len() && ca[p] < cb[q]) {
                    col_idx.push(ca[p]);
                    vals.push(va[p]);
                    p += 1;
                } else if p >= ca.len() || cb[q] < ca[p] {
                    col_idx.push(cb[q]);
                    vals.push(alpha * vb[q]);
                    q += 1;
                } else {
                    col_idx.push(ca[p]);
                    vals.push(va[p] + alpha * vb[q]);
                    p += 1;
                    q += 1;
                }
            }
            row_ptr.push(col_idx.len());
        }
        CsrMatrix {
            n_rows: self.n_rows,
            n_cols: self.n_cols,
            row_ptr,
            col_idx,
            vals,
        }
    }

    /// Galerkin triple product P' * self * P.
    pub fn galerkin(&self, p: &CsrMatrix) -> CsrMatrix {
        p.transpose().matmul(&self.matmul(p))
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        let mut d = DMatrix::zeros(self.n_rows, self.n_cols);
        for i in 0..self.n_rows {
            let (cols, vals) = self.row(i);
            for (c, v) in cols.iter().zip(vals) {
                d[(i, *c)] += *v;
            }
        }
        d
    }

    pub fn max_abs(&self) -> f64 {
        self.vals.iter().fold(0.0f64, |m, v| m.max(v.abs()))
    }

    /// Largest asymmetry |a_ij - a_ji| over the stored pattern.
    pub fn symmetry_defect(&self) -> f64 {
        let mut d = 0.0f64;
        for i in 0..self.n_rows {
            let (cols, vals) = self.row(i);
            for (c, v) in cols.iter().zip(vals) {
                d = d.max((v - self.get(*c, i)).abs());
            }
        }
        d
    }

    /// One forward Gauss-Seidel sweep for A x = b.
    pub fn gauss_seidel_forward(&self, x: &mut [f64], b: &[f64]) {
        for i in 0..self.n_rows {
            let (cols, vals) = (
                &self.col_idx[self.row_ptr[i]..self.row_ptr[i + 1]],
                &self.vals[self.row_ptr[i]..self.row_ptr[i + 1]],
            );
            let mut s = b[i];
            let mut diag = 0.0;
            for (c, v) in cols.iter().zip(vals) {
                if *c == i {
                    diag = *v;
                } else {
                    s -= v * x[*c];
                }
            }
            x[i] = s / diag;
        }
    }

    /// One backward Gauss-Seidel sweep for A x = b.
    pub fn gauss_seidel_backward(&self, x: &mut [f64], b: &[f64]) {
        for i in (0..self.n_rows).rev() {
            let (cols, vals) = (
                &self.col_idx[self.row_ptr[i]..self.row_ptr[i + 1]],
                &self.vals[self.row_ptr[i]..self.row_ptr[i + 1]],
            );
            let mut s = b[i];
            let mut diag = 0.0;
            for (c, v) in cols.iter().zip(vals) {
                if *c == i {
                    diag = *v;
                } else {
                    s -= v * x[*c];
                }
            }
            x[i] = s / diag;
        }
    }
}

/// Coefficient vector on the interior degrees of freedom of one mesh level.
#[derive(Debug, Clone, PartialEq)]
pub struct NodalVector {
    pub level_index: usize,
    pub values: Vec<f64>,
}

impl NodalVector {
    pub fn new(level_index: usize, values: Vec<f64>) -> Self {
        NodalVector {
            level_index,
            values,
        }
    }

    pub fn zeros(level_index: usize, len: usize) -> Self {
        NodalVector::new(level_index, vec![0.0; len])
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.values
    }
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn norm2(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// y += alpha * x
pub fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    debug_assert_eq!(x.len(), y.len());
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

/// Energy norm sqrt(v' A v) for a symmetric matrix A.
pub fn energy_norm(a: &CsrMatrix, v: &[f64]) -> f64 {
    dot(v, &a.matvec(v)).max(0.0).sqrt()
}
