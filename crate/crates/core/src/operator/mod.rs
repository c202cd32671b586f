//! Galerkin matrices of derivatives, rational multipliers and marginal
//! integrals, plus mode-wise tensor kernels.

pub mod axis;
pub mod compiled;
pub mod connection;
pub mod sparse;

use rayon::prelude::*;

use crate::error::{Error, Result};

pub use axis::{derivative_matrix, LegendreAxis, PeriodicAxis, POLE_TOL};
pub(crate) use compiled::{as_terms, separable_parts};
pub use compiled::{CoefficientOp, CompiledOperator, CompiledTerm};
pub use connection::{connection_coefficients, ConnectionCache, ConnectionTable};
pub use sparse::{SparseMatrix, Symmetry};

/// Strides of a row-major tensor of the given shape.
pub fn strides(shape: &[usize]) -> Vec<usize> {
    let mut s = vec![1usize; shape.len()];
    for i in (0..shape.len().saturating_sub(1)).rev() {
        s[i] = s[i + 1] * shape[i + 1];
    }
    s
}

/// Applies `matrix` along `axis` of a row-major tensor:
/// `out[…, m, …] = Σ_k matrix[m][k] · values[…, k, …]`.
pub fn apply_along_axis(
    values: &[f64],
    shape: &[usize],
    axis: usize,
    matrix: &SparseMatrix,
) -> Result<Vec<f64>> {
    if axis >= shape.len() || matrix.cols() != shape[axis] || matrix.rows() != shape[axis] {
        return Err(Error::Shape(format!(
            "cannot apply a {}x{} matrix along axis {axis} of shape {shape:?}",
            matrix.rows(),
            matrix.cols()
        )));
    }
    let n = shape[axis];
    let inner: usize = shape[axis + 1..].iter().product();
    let outer: usize = shape[..axis].iter().product();
    let mut out = vec![0.0; values.len()];
    out.par_chunks_mut(n * inner)
        .zip(values.par_chunks(n * inner))
        .for_each(|(dst, src)| {
            for m in 0..n {
                let drow = &mut dst[m * inner..(m + 1) * inner];
                for (k, a) in matrix.row(m) {
                    let srow = &src[k * inner..(k + 1) * inner];
                    for (d, s) in drow.iter_mut().zip(srow) {
                        *d += a * s;
                    }
                }
            }
        });
    debug_assert_eq!(outer * n * inner, values.len());
    Ok(out)
}

/// Applies a matrix indexed by `(i_a · n_b + i_b)` jointly along axes `a`
/// and `b` of a row-major tensor.
pub fn apply_along_two_axes(
    values: &[f64],
    shape: &[usize],
    a: usize,
    b: usize,
    matrix: &SparseMatrix,
) -> Result<Vec<f64>> {
    if a == b || a >= shape.len() || b >= shape.len() {
        return Err(Error::Shape(format!(
            "invalid axis pair ({a}, {b}) for shape {shape:?}"
        )));
    }
    let (na, nb) = (shape[a], shape[b]);
    if matrix.rows() != na * nb || matrix.cols() != na * nb {
        return Err(Error::Shape(format!(
            "a {}x{} matrix does not act on axes of size {na}x{nb}",
            matrix.rows(),
            matrix.cols()
        )));
    }
    let st = strides(shape);
    let rest: Vec<usize> = (0..shape.len()).filter(|&i| i != a && i != b).collect();
    let rest_shape: Vec<usize> = rest.iter().map(|&i| shape[i]).collect();
    let rest_count: usize = rest_shape.iter().product();
    let rest_st = strides(&rest_shape);
    let bases: Vec<usize> = (0..rest_count)
        .map(|r| {
            rest.iter()
                .enumerate()
                .map(|(k, &ax)| (r / rest_st[k]) % rest_shape[k] * st[ax])
                .sum()
        })
        .collect();
    let blocks: Vec<Vec<f64>> = bases
        .par_iter()
        .map(|&base| {
            let src: Vec<f64> = (0..na * nb)
                .map(|j| values[base + (j / nb) * st[a] + (j % nb) * st[b]])
                .collect();
            matrix.matvec(&src)
        })
        .collect();
    let mut out = vec![0.0; values.len()];
    for (base, block) in bases.iter().zip(blocks) {
        for (j, v) in block.into_iter().enumerate() {
            out[base + (j / nb) * st[a] + (j % nb) * st[b]] = v;
        }
    }
    Ok(out)
}

/// Contracts `axis` with `weights`, removing it from the shape.
pub fn contract_axis(
    values: &[f64],
    shape: &[usize],
    axis: usize,
    weights: &[f64],
) -> Result<(Vec<f64>, Vec<usize>)> {
    if axis >= shape.len() || weights.len() != shape[axis] {
        return Err(Error::Shape(format!(
            "cannot contract axis {axis} of shape {shape:?} with {} weights",
            weights.len()
        )));
    }
    let n = shape[axis];
    let inner: usize = shape[axis + 1..].iter().product();
    let outer: usize = shape[..axis].iter().product();
    let mut out = vec![0.0; outer * inner];
    for o in 0..outer {
        let dst = &mut out[o * inner..(o + 1) * inner];
        for (k, w) in weights.iter().enumerate() {
            if *w == 0.0 {
                continue;
            }
            let src = &values[(o * n + k) * inner..(o * n + k + 1) * inner];
            for (d, s) in dst.iter_mut().zip(src) {
                *d += w * s;
            }
        }
    }
    let mut new_shape = shape.to_vec();
    new_shape.remove(axis);
    Ok((out, new_shape))
}

/// Integrates out the axes listed in `axes` (each with its basis-function
/// integrals `∫B_k`), in decreasing axis order so indices stay valid.
pub fn marginalize(
    values: &[f64],
    shape: &[usize],
    axes: &[(usize, Vec<f64>)],
) -> Result<(Vec<f64>, Vec<usize>)> {
    let mut order: Vec<&(usize, Vec<f64>)> = axes.iter().collect();
    order.sort_by(|a, b| b.0.cmp(&a.0));
    for w in order.windows(2) {
        if w[0].0 == w[1].0 {
            return Err(Error::Shape(format!("axis {} marginalized twice", w[0].0)));
        }
    }
    let mut cur = values.to_vec();
    let mut cur_shape = shape.to_vec();
    for (axis, weights) in order {
        let (v, s) = contract_axis(&cur, &cur_shape, *axis, weights)?;
        cur = v;
        cur_shape = s;
    }
    Ok((cur, cur_shape))
}

/// Outer product of two row-major tensors.
pub fn outer(a: &[f64], b: &[f64]) -> Vec<f64> {
    let mut out = Vec::with_capacity(a.len() * b.len());
    for x in a {
        out.extend(b.iter().map(|y| x * y));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn two_axis_kron_matches_sequential() {
        let shape = [3, 2, 4];
        let values: Vec<f64> = (0..24).map(|v| (v as f64).sin()).collect();
        let ma = SparseMatrix::from_triplets(
            3,
            3,
            vec![(0, 1, 2.0), (1, 1, -1.0), (2, 0, 0.5)],
            Symmetry::General,
        );
        let mb = SparseMatrix::from_triplets(
            4,
            4,
            vec![(0, 3, 1.0), (2, 2, 3.0), (3, 1, -2.0)],
            Symmetry::General,
        );
        let seq = apply_along_axis(&values, &shape, 0, &ma).unwrap();
        let seq = apply_along_axis(&seq, &shape, 2, &mb).unwrap();
        let joint = apply_along_two_axes(&values, &shape, 0, 2, &ma.kron(&mb)).unwrap();
        for (x, y) in seq.iter().zip(&joint) {
            assert!((x - y).abs() < 1e-14);
        }
    }

    #[test]
    fn apply_along_middle_axis() {
        // shape (2, 3, 2), matrix permutes the middle axis cyclically.
        let shape = [2, 3, 2];
        let values: Vec<f64> = (0..12).map(|v| v as f64).collect();
        let m = SparseMatrix::from_triplets(
            3,
            3,
            vec![(0, 1, 1.0), (1, 2, 1.0), (2, 0, 1.0)],
            Symmetry::General,
        );
        let out = apply_along_axis(&values, &shape, 1, &m).unwrap();
        let st = strides(&shape);
        for a in 0..2 {
            for b in 0..3 {
                for c in 0..2 {
                    let src = (b + 1) % 3;
                    assert_eq!(
                        out[a * st[0] + b * st[1] + c],
                        values[a * st[0] + src * st[1] + c]
                    );
                }
            }
        }
    }

    #[test]
    fn marginal_of_product() {
        let a = vec![1.0, 2.0];
        let b = vec![0.5, 0.5, 0.0];
        let t = outer(&a, &b);
        let (m, s) = marginalize(&t, &[2, 3], &[(1, vec![1.0, 1.0, 1.0])]).unwrap();
        assert_eq!(s, vec![2]);
        assert_eq!(m, a);
        assert!(marginalize(&t, &[2, 3], &[(2, vec![1.0])]).is_err());
    }
}
