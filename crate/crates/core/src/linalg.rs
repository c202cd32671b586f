//! Small dense helpers on top of faer.

use faer::linalg::solvers::{Solve, SolveLstsq};
use faer::Mat;

use crate::error::{Error, Result};

/// Row-major dense matrix used for the small tables of this crate.
#[derive(Debug, Clone, PartialEq)]
pub struct Dense {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f64>,
}

impl Dense {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Dense {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m.data[i * n + i] = 1.0;
        }
        m
    }

    pub fn from_fn(rows: usize, cols: usize, f: impl Fn(usize, usize) -> f64) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for i in 0..rows {
            for j in 0..cols {
                data.push(f(i, j));
            }
        }
        Dense { rows, cols, data }
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.cols + j]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        self.data[i * self.cols + j] = v;
    }

    #[inline]
    pub fn add(&mut self, i: usize, j: usize, v: f64) {
        self.data[i * self.cols + j] += v;
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn matmul(&self, other: &Dense) -> Dense {
        assert_eq!(self.cols, other.rows);
        let mut out = Dense::zeros(self.rows, other.cols);
        for i in 0..self.rows {
            for k in 0..self.cols {
                let a = self.get(i, k);
                if a == 0.0 {
                    continue;
                }
                let orow = other.row(k);
                let dst = &mut out.data[i * other.cols..(i + 1) * other.cols];
                for (d, b) in dst.iter_mut().zip(orow) {
                    *d += a * b;
                }
            }
        }
        out
    }

    pub fn matvec(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(self.cols, x.len());
        (0..self.rows)
            .map(|i| self.row(i).iter().zip(x).map(|(a, b)| a * b).sum())
            .collect()
    }

    pub fn transpose(&self) -> Dense {
        Dense::from_fn(self.cols, self.rows, |i, j| self.get(j, i))
    }

    pub fn scale(&mut self, s: f64) {
        self.data.iter_mut().for_each(|v| *v *= s);
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub(crate) fn to_faer(&self) -> Mat<f64> {
        Mat::from_fn(self.rows, self.cols, |i, j| self.get(i, j))
    }
}

/// Least-squares solution of `a x = b` (column-pivoted QR).
pub fn lstsq(a: &Dense, b: &[f64]) -> Result<Vec<f64>> {
    if a.rows != b.len() || a.rows < a.cols {
        return Err(Error::Shape(format!(
            "least squares with {}x{} matrix and rhs of length {}",
            a.rows,
            a.cols,
            b.len()
        )));
    }
    let m = a.to_faer();
    let rhs = Mat::from_fn(b.len(), 1, |i, _| b[i]);
    let x = m.col_piv_qr().solve_lstsq(&rhs);
    let out: Vec<f64> = (0..a.cols).map(|i| x[(i, 0)]).collect();
    if out.iter().any(|v| !v.is_finite()) {
        return Err(Error::Internal(
            "least-squares solve produced non-finite values".into(),
        ));
    }
    Ok(out)
}

/// Square solve by partial-pivot LU.
pub fn solve(a: &Dense, b: &[f64]) -> Result<Vec<f64>> {
    if a.rows != a.cols || a.rows != b.len() {
        return Err(Error::Shape(format!(
            "square solve with {}x{} matrix and rhs of length {}",
            a.rows,
            a.cols,
            b.len()
        )));
    }
    let m = a.to_faer();
    let rhs = Mat::from_fn(b.len(), 1, |i, _| b[i]);
    let x = m.partial_piv_lu().solve(&rhs);
    let out: Vec<f64> = (0..a.cols).map(|i| x[(i, 0)]).collect();
    if out.iter().any(|v| !v.is_finite()) {
        return Err(Error::Internal("singular dense system".into()));
    }
    Ok(out)
}

/// Solves the homogeneous system `a x = 0` with one extra linear normalization
/// `normal · x = value`, in the least-squares sense.
pub fn null_vector(a: &Dense, normal: &[f64], value: f64) -> Result<Vec<f64>> {
    let mut aug = Dense::zeros(a.rows + 1, a.cols);
    aug.data[..a.data.len()].copy_from_slice(&a.data);
    aug.data[a.data.len()..].copy_from_slice(normal);
    let mut rhs = vec![0.0; a.rows + 1];
    rhs[a.rows] = value;
    lstsq(&aug, &rhs)
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn norm2(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

pub fn norm_inf(a: &[f64]) -> f64 {
    a.iter().fold(0.0, |m, v| m.max(v.abs()))
}
