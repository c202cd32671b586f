//! Compressed-row sparse matrices.

use crate::linalg::Dense;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Symmetry {
    General,
    Symmetric,
    SkewSymmetric,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SparseMatrix {
    rows: usize,
    cols: usize,
    row_ptr: Vec<usize>,
    col_idx: Vec<usize>,
    values: Vec<f64>,
    symmetry: Symmetry,
}

impl SparseMatrix {
    /// Builds from `(row, col, value)` triplets; duplicates are summed.
    pub fn from_triplets(
        rows: usize,
        cols: usize,
        mut triplets: Vec<(usize, usize, f64)>,
        symmetry: Symmetry,
    ) -> Self {
        triplets.sort_by(|a, b| (a.0, a.1).cmp(&(b.0, b.1)));
        let mut row_ptr = vec![0usize; rows + 1];
        let mut col_idx = Vec::with_capacity(triplets.len());
        let mut values: Vec<f64> = Vec::with_capacity(triplets.len());
        let mut last: Option<(usize, usize)> = None;
        for (r, c, v) in triplets {
            assert!(
                r < rows && c < cols,
                "triplet ({r}, {c}) outside {rows}x{cols}"
            );
            if last == Some((r, c)) {
                *values.last_mut().unwrap() += v;
            } else {
                col_idx.push(c);
                values.push(v);
                row_ptr[r + 1] += 1;
                last = Some((r, c));
            }
        }
        for i in 0..rows {
            row_ptr[i + 1] += row_ptr[i];
        }
        SparseMatrix {
            rows,
            cols,
            row_ptr,
            col_idx,
            values,
            symmetry,
        }
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        SparseMatrix::from_triplets(rows, cols, Vec::new(), Symmetry::General)
    }

    pub fn identity(n: usize) -> Self {
        SparseMatrix::from_triplets(
            n,
            n,
            (0..n).map(|i| (i, i, 1.0)).collect(),
            Symmetry::Symmetric,
        )
    }

    pub fn from_dense(d: &Dense, symmetry: Symmetry) -> Self {
        let mut t = Vec::new();
        for i in 0..d.rows {
            for j in 0..d.cols {
                let v = d.get(i, j);
                if v != 0.0 {
                    t.push((i, j, v));
                }
            }
        }
        SparseMatrix::from_triplets(d.rows, d.cols, t, symmetry)
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn symmetry(&self) -> Symmetry {
        self.symmetry
    }

    pub fn triplets(&self) -> Vec<(usize, usize, f64)> {
        let mut out = Vec::with_capacity(self.nnz());
        for r in 0..self.rows {
            for k in self.row_ptr[r]..self.row_ptr[r + 1] {
                out.push((r, self.col_idx[k], self.values[k]));
            }
        }
        out
    }

    /// Entries of row `r` as `(col, value)`.
    pub fn row(&self, r: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        (self.row_ptr[r]..self.row_ptr[r + 1]).map(move |k| (self.col_idx[k], self.values[k]))
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.row(r).find(|(j, _)| *j == c).map_or(0.0, |(_, v)| v)
    }

    pub fn matvec(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(x.len(), self.cols);
        (0..self.rows)
            .map(|r| self.row(r).map(|(c, v)| v * x[c]).sum())
            .collect()
    }

    pub fn to_dense(&self) -> Dense {
        let mut d = Dense::zeros(self.rows, self.cols);
        for (r, c, v) in self.triplets() {
            d.add(r, c, v);
        }
        d
    }

    pub fn transpose(&self) -> Self {
        let t = self
            .triplets()
            .into_iter()
            .map(|(r, c, v)| (c, r, v))
            .collect();
        SparseMatrix::from_triplets(self.cols, self.rows, t, self.symmetry)
    }

    pub fn scaled(&self, s: f64) -> Self {
        let mut out = self.clone();
        out.values.iter_mut().for_each(|v| *v *= s);
        out
    }

    /// `self + alpha · other`.
    pub fn add(&self, other: &SparseMatrix, alpha: f64) -> Self {
        assert_eq!((self.rows, self.cols), (other.rows, other.cols));
        let mut t = self.triplets();
        t.extend(
            other
                .triplets()
                .into_iter()
                .map(|(r, c, v)| (r, c, alpha * v)),
        );
        let symmetry = if self.symmetry == other.symmetry {
            self.symmetry
        } else {
            Symmetry::General
        };
        SparseMatrix::from_triplets(self.rows, self.cols, t, symmetry)
    }

    pub fn matmul(&self, other: &SparseMatrix) -> Self {
        assert_eq!(self.cols, other.rows);
        let mut t = Vec::new();
        for r in 0..self.rows {
            for (k, a) in self.row(r) {
                for (c, b) in other.row(k) {
                    t.push((r, c, a * b));
                }
            }
        }
        SparseMatrix::from_triplets(self.rows, other.cols, t, Symmetry::General)
    }

    /// Kronecker product `self ⊗ other`.
    pub fn kron(&self, other: &SparseMatrix) -> Self {
        let mut t = Vec::with_capacity(self.nnz() * other.nnz());
        for (r1, c1, v1) in self.triplets() {
            for (r2, c2, v2) in other.triplets() {
                t.push((r1 * other.rows + r2, c1 * other.cols + c2, v1 * v2));
            }
        }
        let symmetry = match (self.symmetry, other.symmetry) {
            (Symmetry::Symmetric, Symmetry::Symmetric) => Symmetry::Symmetric,
            (Symmetry::SkewSymmetric, Symmetry::SkewSymmetric) => Symmetry::Symmetric,
            (Symmetry::Symmetric, Symmetry::SkewSymmetric)
            | (Symmetry::SkewSymmetric, Symmetry::Symmetric) => Symmetry::SkewSymmetric,
            _ => Symmetry::General,
        };
        SparseMatrix::from_triplets(self.rows * other.rows, self.cols * other.cols, t, symmetry)
    }

    /// Largest `|A_ij − s A_ji|` with `s = ±1`.
    pub fn symmetry_defect(&self, skew: bool) -> f64 {
        let s = if skew { -1.0 } else { 1.0 };
        self.triplets()
            .into_iter()
            .map(|(r, c, v)| (v - s * self.get(c, r)).abs())
            .fold(0.0, f64::max)
    }

    /// Largest number of nonzeros in any row.
    pub fn max_row_nnz(&self) -> usize {
        (0..self.rows)
            .map(|r| self.row_ptr[r + 1] - self.row_ptr[r])
            .max()
            .unwrap_or(0)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn duplicates_are_summed() {
        let m = SparseMatrix::from_triplets(
            2,
            2,
            vec![(0, 1, 1.0), (0, 1, 2.0), (1, 0, 1.0)],
            Symmetry::General,
        );
        assert_eq!(m.nnz(), 2);
        assert_eq!(m.get(0, 1), 3.0);
        assert_eq!(m.matvec(&[1.0, 1.0]), vec![3.0, 1.0]);
    }

    #[test]
    fn kron_matches_dense() {
        let a = SparseMatrix::from_triplets(
            2,
            2,
            vec![(0, 0, 1.0), (0, 1, 2.0), (1, 1, 3.0)],
            Symmetry::General,
        );
        let b =
            SparseMatrix::from_triplets(2, 2, vec![(0, 1, 5.0), (1, 0, 7.0)], Symmetry::General);
        let k = a.kron(&b).to_dense();
        assert_eq!(k.get(0, 1), 5.0);
        assert_eq!(k.get(1, 2), 14.0);
        assert_eq!(k.get(3, 2), 21.0);
        assert_eq!(k.get(2, 0), 0.0);
    }
}
