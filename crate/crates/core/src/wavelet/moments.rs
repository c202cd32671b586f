//! Exact polynomial moments of the scaling function over unit cells, and the
//! sub-cell quadrature built on them.
//!
//! `M^m = ∫_0^1 w^m Φ(w) Φ(w)^T dw` and `μ^m = ∫_0^1 w^m Φ(w) dw` follow from
//! the refinement relation as small linear systems; no sampling of φ is
//! involved. A smooth integrand that is replaced by its degree-7 interpolant
//! on every sub-cell of width `2^{-r}` is then integrated against `Φ` or
//! `ΦΦ^T` exactly.

use crate::error::Result;
use crate::linalg::{null_vector, solve, Dense};
use crate::quadrature::gauss_legendre_on;

use super::refinement::Refinement;

/// Number of interpolation nodes per sub-cell (polynomial degree + 1).
pub const NODES_PER_CELL: usize = 8;

/// Moment tables `M^m`, `μ^m` for `m < NODES_PER_CELL`.
#[derive(Debug, Clone)]
pub struct CellMoments {
    pub pair: Vec<Dense>,
    pub single: Vec<Vec<f64>>,
}

fn binomial(n: usize, k: usize) -> f64 {
    let mut acc = 1.0;
    for i in 0..k {
        acc = acc * (n - i) as f64 / (i + 1) as f64;
    }
    acc
}

fn kron(a: &Dense, b: &Dense) -> Dense {
    Dense::from_fn(a.rows * b.rows, a.cols * b.cols, |i, j| {
        a.get(i / b.rows, j / b.cols) * b.get(i % b.rows, j % b.cols)
    })
}

impl CellMoments {
    pub fn new(refinement: &Refinement) -> Result<Self> {
        let n = refinement.pieces();
        let (t0, t1) = (&refinement.t0, &refinement.t1);
        let degree = NODES_PER_CELL;

        if n == 1 {
            // Haar: Φ ≡ 1 on the cell.
            let pair = (0..degree)
                .map(|m| Dense::from_fn(1, 1, |_, _| 1.0 / (m as f64 + 1.0)))
                .collect();
            let single = (0..degree).map(|m| vec![1.0 / (m as f64 + 1.0)]).collect();
            return Ok(CellMoments { pair, single });
        }

        let k0 = kron(t0, t0);
        let k1 = kron(t1, t1);
        let nn = n * n;
        let mut pair: Vec<Dense> = Vec::with_capacity(degree);
        for m in 0..degree {
            let f = (-(m as f64 + 1.0)).exp2();
            let mut a = Dense::identity(nn);
            for i in 0..nn {
                for j in 0..nn {
                    a.add(i, j, -f * (k0.get(i, j) + k1.get(i, j)));
                }
            }
            let vec = if m == 0 {
                let trace: Vec<f64> = (0..nn)
                    .map(|idx| if idx / n == idx % n { 1.0 } else { 0.0 })
                    .collect();
                null_vector(&a, &trace, 1.0)?
            } else {
                let mut rhs = vec![0.0; nn];
                for (r, prev) in pair.iter().enumerate() {
                    let c = f * binomial(m, r);
                    let v = k1.matvec(&prev.data);
                    for (x, y) in rhs.iter_mut().zip(v) {
                        *x += c * y;
                    }
                }
                solve(&a, &rhs)?
            };
            let mut mat = Dense {
                rows: n,
                cols: n,
                data: vec,
            };
            // Symmetrize away rounding.
            let t = mat.transpose();
            for (x, y) in mat.data.iter_mut().zip(&t.data) {
                *x = 0.5 * (*x + y);
            }
            pair.push(mat);
        }

        let mut tsum = t0.clone();
        for (x, y) in tsum.data.iter_mut().zip(&t1.data) {
            *x += y;
        }
        let mut single: Vec<Vec<f64>> = Vec::with_capacity(degree);
        for m in 0..degree {
            let f = (-(m as f64 + 1.0)).exp2();
            let mut a = Dense::identity(n);
            for i in 0..n {
                for j in 0..n {
                    a.add(i, j, -f * tsum.get(i, j));
                }
            }
            let v = if m == 0 {
                null_vector(&a, &vec![1.0; n], 1.0)?
            } else {
                let mut rhs = vec![0.0; n];
                for (r, prev) in single.iter().enumerate() {
                    let c = f * binomial(m, r);
                    let v = t1.matvec(prev);
                    for (x, y) in rhs.iter_mut().zip(v) {
                        *x += c * y;
                    }
                }
                solve(&a, &rhs)?
            };
            single.push(v);
        }
        Ok(CellMoments { pair, single })
    }
}

/// Weights that integrate a function sampled at the interpolation nodes of
/// every sub-cell of depth `depth` against `Φ` (vector weights) and `ΦΦ^T`
/// (matrix weights) over the unit cell.
#[derive(Debug, Clone)]
pub struct CellQuadrature {
    depth: u32,
    pieces: usize,
    /// Node positions inside a sub-cell, in `[0, 1)`.
    nodes: Vec<f64>,
    /// `single[s * NODES + g]` is an n-vector.
    single: Vec<Vec<f64>>,
    /// `pair[s * NODES + g]` is an n×n matrix, row-major.
    pair: Vec<Vec<f64>>,
}

impl CellQuadrature {
    pub fn new(refinement: &Refinement, moments: &CellMoments, depth: u32) -> Result<Self> {
        let n = refinement.pieces();
        let (nodes, _) = gauss_legendre_on(NODES_PER_CELL, 0.0, 1.0);
        // Inverse Vandermonde: row m gives monomial coefficient m from node values.
        let vand = Dense::from_fn(NODES_PER_CELL, NODES_PER_CELL, |g, m| {
            nodes[g].powi(m as i32)
        });
        let mut vinv = Dense::zeros(NODES_PER_CELL, NODES_PER_CELL);
        for g in 0..NODES_PER_CELL {
            let mut e = vec![0.0; NODES_PER_CELL];
            e[g] = 1.0;
            let col = solve(&vand, &e)?;
            for (m, v) in col.iter().enumerate() {
                vinv.set(m, g, *v);
            }
        }
        // Per node: Σ_m vinv[m][g] μ^m and Σ_m vinv[m][g] M^m.
        let node_single: Vec<Vec<f64>> = (0..NODES_PER_CELL)
            .map(|g| {
                let mut v = vec![0.0; n];
                for m in 0..NODES_PER_CELL {
                    let c = vinv.get(m, g);
                    for (x, y) in v.iter_mut().zip(&moments.single[m]) {
                        *x += c * y;
                    }
                }
                v
            })
            .collect();
        let node_pair: Vec<Dense> = (0..NODES_PER_CELL)
            .map(|g| {
                let mut acc = Dense::zeros(n, n);
                for m in 0..NODES_PER_CELL {
                    let c = vinv.get(m, g);
                    for (x, y) in acc.data.iter_mut().zip(&moments.pair[m].data) {
                        *x += c * y;
                    }
                }
                acc
            })
            .collect();

        let count = 1usize << depth;
        let scale = (-(depth as f64)).exp2();
        let mut single = Vec::with_capacity(count * NODES_PER_CELL);
        let mut pair = Vec::with_capacity(count * NODES_PER_CELL);
        for s in 0..count {
            let p = refinement.word_matrix(s, depth);
            let pt = p.transpose();
            for g in 0..NODES_PER_CELL {
                let mut v = p.matvec(&node_single[g]);
                v.iter_mut().for_each(|x| *x *= scale);
                single.push(v);
                let mut m = p.matmul(&node_pair[g]).matmul(&pt);
                m.scale(scale);
                pair.push(m.data);
            }
        }
        Ok(CellQuadrature {
            depth,
            pieces: n,
            nodes,
            single,
            pair,
        })
    }

    pub fn depth(&self) -> u32 {
        self.depth
    }

    pub fn pieces(&self) -> usize {
        self.pieces
    }

    /// Cell-local sample positions in `[0, 1)`, in the order expected by
    /// [`integrate_single`](Self::integrate_single).
    pub fn sample_points(&self) -> Vec<f64> {
        let count = 1usize << self.depth;
        let scale = (-(self.depth as f64)).exp2();
        let mut out = Vec::with_capacity(count * NODES_PER_CELL);
        for s in 0..count {
            for g in 0..NODES_PER_CELL {
                out.push((s as f64 + self.nodes[g]) * scale);
            }
        }
        out
    }

    /// `∫_0^1 f(w) Φ(w) dw` from samples of `f` at [`sample_points`](Self::sample_points).
    pub fn integrate_single(&self, samples: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.pieces];
        for (f, w) in samples.iter().zip(&self.single) {
            if *f == 0.0 {
                continue;
            }
            for (o, x) in out.iter_mut().zip(w) {
                *o += f * x;
            }
        }
        out
    }

    /// Matrix weight of sample `index` (row-major `n × n`).
    pub fn pair_weight(&self, index: usize) -> &[f64] {
        &self.pair[index]
    }

    /// `∫_0^1 f(w) Φ(w) Φ(w)^T dw`, row-major.
    pub fn integrate_pair(&self, samples: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.pieces * self.pieces];
        for (f, w) in samples.iter().zip(&self.pair) {
            if *f == 0.0 {
                continue;
            }
            for (o, x) in out.iter_mut().zip(w) {
                *o += f * x;
            }
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::wavelet::family::make_family;
    use crate::wavelet::refinement::PointEvaluator;

    #[test]
    fn zeroth_pair_moment_is_gram_identity_after_wrap() {
        // Σ over cells of φ(·+i)φ(·+i+l) gives the shift Gram matrix δ_l.
        for p in 1..=5 {
            let f = make_family(p).unwrap();
            let r = Refinement::new(&f).unwrap();
            let m = CellMoments::new(&r).unwrap();
            let n = r.pieces();
            for l in 0..n {
                let g: f64 = (0..n - l).map(|i| m.pair[0].get(i, i + l)).sum();
                let target = if l == 0 { 1.0 } else { 0.0 };
                assert!((g - target).abs() < 1e-13, "p={p} l={l} g={g}");
            }
        }
    }

    #[test]
    fn single_moments_match_point_quadrature() {
        let f = make_family(3).unwrap();
        let r = Refinement::new(&f).unwrap();
        let m = CellMoments::new(&r).unwrap();
        let e = PointEvaluator::new(&f).unwrap();
        // Composite midpoint oracle on 2^14 points.
        let count = 1 << 14;
        for deg in [0usize, 1, 3] {
            for i in 0..r.pieces() {
                let mut acc = 0.0;
                for s in 0..count {
                    let w = (s as f64 + 0.5) / count as f64;
                    acc += w.powi(deg as i32) * e.scaling(w + i as f64);
                }
                acc /= count as f64;
                assert!((acc - m.single[deg][i]).abs() < 1e-5, "deg={deg} i={i}");
            }
        }
    }

    #[test]
    fn quadrature_integrates_constants_exactly() {
        let f = make_family(3).unwrap();
        let r = Refinement::new(&f).unwrap();
        let m = CellMoments::new(&r).unwrap();
        let q = CellQuadrature::new(&r, &m, 3).unwrap();
        let ones = vec![1.0; q.sample_points().len()];
        let single = q.integrate_single(&ones);
        for (a, b) in single.iter().zip(&m.single[0]) {
            assert!((a - b).abs() < 1e-11, "{a} {b}");
        }
        let pair = q.integrate_pair(&ones);
        for (a, b) in pair.iter().zip(&m.pair[0].data) {
            assert!((a - b).abs() < 1e-11, "{a} {b}");
        }
    }
}
