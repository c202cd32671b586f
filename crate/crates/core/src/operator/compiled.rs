//! Operator specifications turned into Galerkin matrices on periodized axes.

use num_traits::ToPrimitive;

use crate::error::{Error, Result};
use crate::hierarchy::{OperatorSpec, OperatorTerm};

use super::axis::{PeriodicAxis, SeparableTerm};
use super::sparse::{SparseMatrix, Symmetry};
use super::{apply_along_axis, apply_along_two_axes, marginalize};

/// Multiplication part of a compiled term.
#[derive(Debug, Clone)]
pub enum CoefficientOp {
    Constant(f64),
    OneAxis(usize, SparseMatrix),
    /// Joint matrix over `(a, b)` with `a < b`, index `i_a · n_b + i_b`.
    TwoAxes(usize, usize, SparseMatrix),
}

#[derive(Debug, Clone)]
pub struct CompiledTerm {
    pub coefficient: CoefficientOp,
    pub derivatives: Vec<(usize, SparseMatrix)>,
    pub time_derivative: u32,
    pub marginalize: Vec<usize>,
}

/// Galerkin form of an [`OperatorSpec`] on one periodized axis per phase
/// variable (`q_1, p_1, q_2, …`).
#[derive(Debug, Clone)]
pub struct CompiledOperator {
    pub axes: Vec<PeriodicAxis>,
    pub terms: Vec<CompiledTerm>,
}

type OwnedPart = (
    Box<dyn Fn(f64) -> f64 + Sync>,
    Box<dyn Fn(f64) -> f64 + Sync>,
);

/// `Σ_j y^j Σ_i c_ij x^i` as a list of `(x ↦ Σ_i c_ij x^i, y ↦ y^j)`.
pub(crate) fn separable_parts(groups: &[(u32, Vec<(u32, f64)>)]) -> Vec<OwnedPart> {
    groups
        .iter()
        .map(|(j, xs)| {
            let xs = xs.clone();
            let j = *j as i32;
            let a: Box<dyn Fn(f64) -> f64 + Sync> =
                Box::new(move |x: f64| xs.iter().map(|&(i, c)| c * x.powi(i as i32)).sum());
            let b: Box<dyn Fn(f64) -> f64 + Sync> = Box::new(move |y: f64| y.powi(j));
            (a, b)
        })
        .collect()
}

pub(crate) fn as_terms(parts: &[OwnedPart]) -> Vec<SeparableTerm<'_>> {
    parts
        .iter()
        .map(|(a, b)| (a.as_ref(), b.as_ref()))
        .collect()
}

fn compile_term(term: &OperatorTerm, axes: &[PeriodicAxis]) -> Result<CompiledTerm> {
    let order = axes.first().map(|a| a.order()).unwrap_or(1);
    let mut derivatives = Vec::new();
    for (axis, &d) in term.derivative.iter().enumerate() {
        if d == 0 {
            continue;
        }
        if d as usize >= order.max(1) {
            return Err(Error::Regularity {
                order,
                derivative: d as usize,
            });
        }
        derivatives.push((axis, axes[axis].derivative(d as usize)?));
    }
    let support = term.coefficient.support();
    let vars = term.coefficient.vars();
    let compiled = term.coefficient.compile();
    let coefficient = match support.as_slice() {
        [] => {
            let num = term.coefficient.numerator().as_constant();
            let den = term.coefficient.denominator().as_constant();
            let value = match (num, den) {
                (Some(n), Some(d)) => {
                    n.to_f64().unwrap_or(f64::NAN) / d.to_f64().unwrap_or(f64::NAN)
                }
                _ => compiled.eval(&vec![0.0; vars]),
            };
            CoefficientOp::Constant(term.scale * value)
        }
        [a] => {
            let a = *a;
            let m = axes[a].multiplication(|x| {
                let mut v = vec![0.0; vars];
                v[a] = x;
                compiled.eval_parts(&v)
            })?;
            CoefficientOp::OneAxis(a, m.scaled(term.scale))
        }
        [a, b] => {
            let (a, b) = (*a, *b);
            let m = match term.coefficient.separate(a, b) {
                Some(groups) => {
                    let parts = separable_parts(&groups);
                    axes[a].separable_coupled_multiplication(&axes[b], &as_terms(&parts))?
                }
                None => axes[a].coupled_multiplication(&axes[b], |x, y| {
                    let mut v = vec![0.0; vars];
                    v[a] = x;
                    v[b] = y;
                    compiled.eval_parts(&v)
                })?,
            };
            CoefficientOp::TwoAxes(a, b, m.scaled(term.scale))
        }
        _ => {
            return Err(Error::Unsupported(format!(
                "coefficient depends on {} phase variables; at most two are supported",
                support.len()
            )))
        }
    };
    Ok(CompiledTerm {
        coefficient,
        derivatives,
        time_derivative: term.time_derivative,
        marginalize: term.marginalize.clone(),
    })
}

impl CompiledOperator {
    /// `axes[2i]` and `axes[2i+1]` are the position and momentum axes of
    /// particle `i`.
    pub fn compile(spec: &OperatorSpec, axes: &[PeriodicAxis]) -> Result<Self> {
        if axes.len() != 2 * spec.particles {
            return Err(Error::Shape(format!(
                "{} axes given for {} particles",
                axes.len(),
                spec.particles
            )));
        }
        let terms = spec
            .terms
            .iter()
            .map(|t| compile_term(t, axes))
            .collect::<Result<_>>()?;
        Ok(CompiledOperator {
            axes: axes.to_vec(),
            terms,
        })
    }

    pub fn shape(&self) -> Vec<usize> {
        self.axes.iter().map(|a| a.modes()).collect()
    }

    /// Applies every spatial term (time derivatives skipped) to single-scale
    /// coefficients. Marginalized terms produce tensors over the remaining
    /// particles; all terms must agree on the marginalized set.
    pub fn apply(&self, values: &[f64]) -> Result<Vec<f64>> {
        let shape = self.shape();
        let mut out: Option<Vec<f64>> = None;
        for t in self.terms.iter().filter(|t| t.time_derivative == 0) {
            let mut v = values.to_vec();
            for (axis, d) in &t.derivatives {
                v = apply_along_axis(&v, &shape, *axis, d)?;
            }
            v = match &t.coefficient {
                CoefficientOp::Constant(c) => v.into_iter().map(|x| c * x).collect(),
                CoefficientOp::OneAxis(a, m) => apply_along_axis(&v, &shape, *a, m)?,
                CoefficientOp::TwoAxes(a, b, m) => apply_along_two_axes(&v, &shape, *a, *b, m)?,
            };
            if !t.marginalize.is_empty() {
                let axes: Vec<(usize, Vec<f64>)> = t
                    .marginalize
                    .iter()
                    .flat_map(|&p| [2 * p, 2 * p + 1])
                    .map(|ax| (ax, vec![self.axes[ax].basis_integral(); shape[ax]]))
                    .collect();
                v = marginalize(&v, &shape, &axes)?.0;
            }
            match &mut out {
                None => out = Some(v),
                Some(acc) => {
                    if acc.len() != v.len() {
                        return Err(Error::Shape("terms marginalize different particles".into()));
                    }
                    for (x, y) in acc.iter_mut().zip(v) {
                        *x += y;
                    }
                }
            }
        }
        let len = if self.terms.iter().any(|t| !t.marginalize.is_empty()) {
            0
        } else {
            values.len()
        };
        Ok(out.unwrap_or_else(|| vec![0.0; len]))
    }

    /// Sparse matrix of the spatial terms (no marginalization allowed).
    pub fn assemble(&self) -> Result<SparseMatrix> {
        let shape = self.shape();
        let total: usize = shape.iter().product();
        let mut acc = SparseMatrix::zeros(total, total);
        for t in self.terms.iter().filter(|t| t.time_derivative == 0) {
            if !t.marginalize.is_empty() {
                return Err(Error::Shape(
                    "cannot assemble a marginalizing term as a square matrix".into(),
                ));
            }
            // Per-axis factors; the two-axis coefficient occupies adjacent
            // slots only when b = a + 1, otherwise it is applied explicitly.
            let mut factors: Vec<Option<SparseMatrix>> = vec![None; shape.len()];
            for (axis, d) in &t.derivatives {
                factors[*axis] = Some(d.clone());
            }
            let mut scalar = 1.0;
            let mut joint: Option<(usize, usize, SparseMatrix)> = None;
            match &t.coefficient {
                CoefficientOp::Constant(c) => scalar = *c,
                CoefficientOp::OneAxis(a, m) => {
                    factors[*a] = Some(match &factors[*a] {
                        Some(d) => m.matmul(d),
                        None => m.clone(),
                    })
                }
                CoefficientOp::TwoAxes(a, b, m) => joint = Some((*a, *b, m.clone())),
            }
            let mut term = kron_chain(&factors, &shape);
            if let Some((a, b, m)) = joint {
                let embedded = embed_two_axes(&m, &shape, a, b);
                term = embedded.matmul(&term);
            }
            acc = acc.add(&term, scalar);
        }
        Ok(acc)
    }
}

fn kron_chain(factors: &[Option<SparseMatrix>], shape: &[usize]) -> SparseMatrix {
    let mut m = SparseMatrix::identity(1);
    for (f, &n) in factors.iter().zip(shape) {
        let next = f.clone().unwrap_or_else(|| SparseMatrix::identity(n));
        m = m.kron(&next);
    }
    m
}

/// Lifts a matrix on axes `(a, b)` to the full tensor space.
fn embed_two_axes(m: &SparseMatrix, shape: &[usize], a: usize, b: usize) -> SparseMatrix {
    let st = super::strides(shape);
    let total: usize = shape.iter().product();
    let nb = shape[b];
    let rest: Vec<usize> = (0..shape.len()).filter(|&i| i != a && i != b).collect();
    let rest_count: usize = rest.iter().map(|&i| shape[i]).product();
    let rest_shape: Vec<usize> = rest.iter().map(|&i| shape[i]).collect();
    let rest_st = super::strides(&rest_shape);
    let entries = m.triplets();
    let mut t = Vec::with_capacity(entries.len() * rest_count);
    for r in 0..rest_count {
        let base: usize = rest
            .iter()
            .enumerate()
            .map(|(k, &ax)| (r / rest_st[k]) % rest_shape[k] * st[ax])
            .sum();
        for (row, col, v) in &entries {
            let ri = base + (row / nb) * st[a] + (row % nb) * st[b];
            let ci = base + (col / nb) * st[a] + (col % nb) * st[b];
            t.push((ri, ci, *v));
        }
    }
    SparseMatrix::from_triplets(total, total, t, Symmetry::General)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hierarchy::{build_liouvillean, HamiltonianSpec, PhaseBox, RationalFunction};
    use num_bigint::BigInt;
    use num_rational::BigRational;

    fn axes(n_particles: usize, level: u32) -> Vec<PeriodicAxis> {
        (0..n_particles)
            .flat_map(|_| {
                [
                    PeriodicAxis::new(3, level, -2.0, 4.0).unwrap(),
                    PeriodicAxis::new(3, level, -1.5, 3.0).unwrap(),
                ]
            })
            .collect()
    }

    fn domain() -> PhaseBox {
        PhaseBox {
            q_start: -2.0,
            q_length: 4.0,
            p_start: -1.5,
            p_length: 3.0,
        }
    }

    #[test]
    fn assembled_matches_applied() {
        let one = BigRational::from_integer(BigInt::from(1));
        let q1 = RationalFunction::variable(2, 0);
        let q2 = RationalFunction::variable(2, 1);
        let diff = q1.sub(&q2);
        let pair = diff
            .mul(&diff)
            .scale(&BigRational::new(BigInt::from(1), BigInt::from(10)));
        let q = RationalFunction::variable(1, 0);
        let ext = q
            .mul(&q)
            .scale(&BigRational::new(BigInt::from(1), BigInt::from(2)));
        let h = HamiltonianSpec::new(one, ext, pair, domain(), None).unwrap();
        let spec = build_liouvillean(&h, 2).unwrap();
        let op = CompiledOperator::compile(&spec, &axes(2, 2)).unwrap();
        let n: usize = op.shape().iter().product();
        let x: Vec<f64> = (0..n).map(|i| ((i * 7 + 3) as f64).sin()).collect();
        let applied = op.apply(&x).unwrap();
        let assembled = op.assemble().unwrap().matvec(&x);
        for (a, b) in applied.iter().zip(&assembled) {
            assert!((a - b).abs() < 1e-12, "{a} vs {b}");
        }
    }

    #[test]
    fn single_particle_liouvillean_is_skew() {
        let one = BigRational::from_integer(BigInt::from(1));
        let q = RationalFunction::variable(1, 0);
        let ext = q
            .mul(&q)
            .scale(&BigRational::new(BigInt::from(1), BigInt::from(2)));
        let h = HamiltonianSpec::new(one, ext, RationalFunction::zero(2), domain(), None).unwrap();
        let spec = build_liouvillean(&h, 1).unwrap();
        let op = CompiledOperator::compile(&spec, &axes(1, 4)).unwrap();
        let k = op.assemble().unwrap();
        assert!(k.symmetry_defect(true) < 1e-8);
    }
}
