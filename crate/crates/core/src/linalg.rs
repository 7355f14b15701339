//! Small dense-matrix utilities. Heavy factorisations (symmetric
//! eigendecomposition, LU solves) are delegated to nalgebra.

use nalgebra::{DMatrix, DVector};

/// Row-major dense matrix of `f64`.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseMat {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl DenseMat {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        DenseMat {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn from_rows(rows: usize, cols: usize, data: Vec<f64>) -> Self {
        assert_eq!(data.len(), rows * cols);
        DenseMat { rows, cols, data }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn at(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.cols + j]
    }

    #[inline]
    pub fn at_mut(&mut self, i: usize, j: usize) -> &mut f64 {
        &mut self.data[i * self.cols + j]
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    /// `self · v`
    pub fn matvec(&self, v: &[f64]) -> Vec<f64> {
        assert_eq!(v.len(), self.cols);
        let mut out = vec![0.0; self.rows];
        for i in 0..self.rows {
            out[i] = dot(self.row(i), v);
        }
        out
    }

    /// `selfᵀ · v`
    pub fn t_matvec(&self, v: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.cols];
        self.t_matvec_into(v, &mut out);
        out
    }

    /// `selfᵀ · v` into a caller-owned buffer (hot-loop variant).
    pub fn t_matvec_into(&self, v: &[f64], out: &mut [f64]) {
        assert_eq!(v.len(), self.rows);
        assert_eq!(out.len(), self.cols);
        out.iter_mut().for_each(|o| *o = 0.0);
        for i in 0..self.rows {
            let vi = v[i];
            let row = self.row(i);
            for j in 0..self.cols {
                out[j] += row[j] * vi;
            }
        }
    }

    /// Accumulate the outer product `scale · v vᵀ` into `self` (square only).
    pub fn add_outer(&mut self, v: &[f64], scale: f64) {
        assert_eq!(self.rows, self.cols);
        assert_eq!(v.len(), self.rows);
        for i in 0..self.rows {
            let si = scale * v[i];
            let row = &mut self.data[i * self.cols..(i + 1) * self.cols];
            for j in 0..self.cols {
                row[j] += si * v[j];
            }
        }
    }

    pub fn transpose(&self) -> DenseMat {
        let mut t = DenseMat::zeros(self.cols, self.rows);
        for i in 0..self.rows {
            for j in 0..self.cols {
                *t.at_mut(j, i) = self.at(i, j);
            }
        }
        t
    }

    pub fn matmul(&self, other: &DenseMat) -> DenseMat {
        assert_eq!(self.cols, other.rows);
        let mut out = DenseMat::zeros(self.rows, other.cols);
        for i in 0..self.rows {
            for k in 0..self.cols {
                let aik = self.at(i, k);
                if aik == 0.0 {
                    continue;
                }
                let orow = other.row(k);
                let dst = &mut out.data[i * other.cols..(i + 1) * other.cols];
                for j in 0..other.cols {
                    dst[j] += aik * orow[j];
                }
            }
        }
        out
    }

    pub fn to_na(&self) -> DMatrix<f64> {
        DMatrix::from_row_iterator(self.rows, self.cols, self.data.iter().copied())
    }

    pub fn from_na(m: &DMatrix<f64>) -> DenseMat {
        let mut out = DenseMat::zeros(m.nrows(), m.ncols());
        for i in 0..m.nrows() {
            for j in 0..m.ncols() {
                *out.at_mut(i, j) = m[(i, j)];
            }
        }
        out
    }
}

#[inline]
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    let mut s = 0.0;
    for i in 0..a.len() {
        s += a[i] * b[i];
    }
    s
}

pub fn norm_l1(v: &[f64]) -> f64 {
    v.iter().map(|x| x.abs()).sum()
}

pub fn norm_l2(v: &[f64]) -> f64 {
    dot(v, v).sqrt()
}

pub fn norm_linf(v: &[f64]) -> f64 {
    v.iter().fold(0.0_f64, |a, x| a.max(x.abs()))
}

pub fn sub(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x - y).collect()
}

/// Eigenvalues (ascending) and matching eigenvectors (columns) of a symmetric matrix.
pub fn sym_eigen(m: &DenseMat) -> (Vec<f64>, DMatrix<f64>) {
    let se = m.to_na().symmetric_eigen();
    let mut idx: Vec<usize> = (0..se.eigenvalues.len()).collect();
    idx.sort_by(|&a, &b| se.eigenvalues[a].total_cmp(&se.eigenvalues[b]));
    let vals: Vec<f64> = idx.iter().map(|&i| se.eigenvalues[i]).collect();
    let n = se.eigenvectors.nrows();
    let mut vecs = DMatrix::zeros(n, idx.len());
    for (new_c, &old_c) in idx.iter().enumerate() {
        vecs.set_column(new_c, &se.eigenvectors.column(old_c));
    }
    (vals, vecs)
}

/// Solve `A x = b` by LU with partial pivoting; `None` if singular.
pub fn lu_solve(a: &DenseMat, b: &[f64]) -> Option<Vec<f64>> {
    let lu = a.to_na().lu();
    lu.solve(&DVector::from_column_slice(b))
        .map(|x| x.as_slice().to_vec())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn matvec_and_transpose() {
        let m = DenseMat::from_rows(2, 3, vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0]);
        assert_eq!(m.matvec(&[1.0, 0.0, -1.0]), vec![-2.0, -2.0]);
        assert_eq!(m.t_matvec(&[1.0, 1.0]), vec![5.0, 7.0, 9.0]);
        assert_eq!(m.transpose().at(2, 1), 6.0);
    }

    #[test]
    fn eigen_of_diag() {
        let mut m = DenseMat::zeros(3, 3);
        *m.at_mut(0, 0) = 3.0;
        *m.at_mut(1, 1) = 1.0;
        *m.at_mut(2, 2) = 2.0;
        let (vals, _) = sym_eigen(&m);
        assert_relative_eq!(vals[0], 1.0, max_relative = 1e-12);
        assert_relative_eq!(vals[2], 3.0, max_relative = 1e-12);
    }

    #[test]
    fn lu_solves_small_system() {
        let a = DenseMat::from_rows(2, 2, vec![2.0, 1.0, 1.0, 3.0]);
        let x = lu_solve(&a, &[5.0, 10.0]).unwrap();
        assert_relative_eq!(x[0], 1.0, epsilon = 1e-12);
        assert_relative_eq!(x[1], 3.0, epsilon = 1e-12);
    }
}
