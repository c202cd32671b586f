//! Assembly of the space-time Galerkin conditions of a closed hierarchy.
//!
//! Unknowns of each field are stored single-scale, time mode outermost:
//! `x[offset + i·S + k]` multiplies `A_i(t) B_k(x_1, …)`. Residual rows use
//! the same layout; the last time row of each block is replaced by the
//! initial-condition constraint `Σ_i A_i(t_0) X_i = f_0`.

use std::sync::{Arc, OnceLock};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hierarchy::{
    apply_closure, build_liouvillean, ClosedSystem, ClosureSpec, EquationTerm, Field,
    HamiltonianSpec, Monomial, TermKind,
};
use crate::linalg::{norm_inf, Dense};
use crate::operator::{
    apply_along_axis, as_terms, outer, separable_parts, CompiledOperator, LegendreAxis,
    PeriodicAxis, SparseMatrix, Symmetry,
};
use crate::quadrature::gauss_legendre_on;

use super::linear::TimeDiagonalSolver;
use super::tensor::{AxisSpec, CoefficientTensor, PhaseRole};

/// Default memory budget of one Galerkin system.
pub const DEFAULT_MEMORY_BUDGET: usize = 2 << 30;

/// Largest system handled with a dense Jacobian.
pub const MAX_DENSE_UNKNOWNS: usize = 4096;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TimeWindow {
    pub modes: usize,
    pub start: f64,
    pub length: f64,
}

/// Mode sets of the ansatz.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Discretization {
    /// Daubechies order `p` of the phase axes.
    pub order: usize,
    /// Level `J` of every phase axis (`N = 2^J` modes).
    pub level: u32,
    /// Space-time window; `None` for a stationary problem.
    pub time: Option<TimeWindow>,
    pub memory_budget: usize,
}

impl Discretization {
    pub fn new(order: usize, level: u32, time: Option<TimeWindow>) -> Self {
        Discretization {
            order,
            level,
            time,
            memory_budget: DEFAULT_MEMORY_BUDGET,
        }
    }

    pub fn modes(&self) -> usize {
        1 << self.level
    }

    pub fn with_level(&self, level: u32) -> Self {
        Discretization {
            level,
            ..self.clone()
        }
    }
}

/// Time-axis data shared by all blocks.
#[derive(Debug, Clone)]
pub(crate) struct TimeData {
    pub axis: LegendreAxis,
    pub dh: Dense,
    pub ih: Dense,
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
    /// `a[n][i] = A_i(t_n)`.
    pub a: Vec<Vec<f64>>,
    /// `da[n][i] = A_i'(t_n)`.
    pub da: Vec<Vec<f64>>,
    pub start_trace: Vec<f64>,
    pub end_trace: Vec<f64>,
}

impl TimeData {
    fn new(window: &TimeWindow, degree: usize) -> Result<Self> {
        let axis = LegendreAxis::new(window.modes, window.start, window.length)?;
        let nt = window.modes;
        let dt = axis.derivative();
        let start_trace = axis.values_at(window.start);
        let end_trace = axis.values_at(window.start + window.length);
        let mut dh = dt.clone();
        for (k, v) in start_trace.iter().enumerate() {
            dh.set(nt - 1, k, *v);
        }
        let mut ih = Dense::identity(nt);
        ih.set(nt - 1, nt - 1, 0.0);
        // Integrand degree is at most (degree + 1)(nt − 1).
        let nq = (((degree + 1) * (nt - 1) + 2) / 2).max(nt);
        let (nodes, weights) = gauss_legendre_on(nq, window.start, window.start + window.length);
        let a: Vec<Vec<f64>> = nodes.iter().map(|&t| axis.values_at(t)).collect();
        let da = a
            .iter()
            .map(|row| {
                (0..nt)
                    .map(|i| (0..nt).map(|m| dt.get(m, i) * row[m]).sum())
                    .collect()
            })
            .collect();
        Ok(TimeData {
            axis,
            dh,
            ih,
            nodes,
            weights,
            a,
            da,
            start_trace,
            end_trace,
        })
    }
}

/// Unknown block of one field.
#[derive(Debug, Clone, PartialEq)]
pub struct Block {
    pub field: Field,
    pub particles: usize,
    pub offset: usize,
    /// Spatial coefficients per time mode, `N^{2s}`.
    pub spatial: usize,
    pub len: usize,
}

/// Precomputed mean-field kernel of the pair force.
#[derive(Debug, Clone)]
struct CollisionKernel {
    /// `W[j][a][a'] = ∫∫ ∂_1U(x, y) B_j(y) B_a(x) B_a'(x)`.
    w: Vec<SparseMatrix>,
    dp: SparseMatrix,
    p_weight: f64,
}

/// Square nonlinear system of Galerkin conditions.
#[derive(Clone)]
pub struct GalerkinSystem {
    closed: ClosedSystem,
    hamiltonian: HamiltonianSpec,
    disc: Discretization,
    q_axis: PeriodicAxis,
    p_axis: PeriodicAxis,
    time: Option<TimeData>,
    blocks: Vec<Block>,
    /// Liouvilleans `L_s`, index `s − 1`.
    liouvilleans: Vec<Arc<CompiledOperator>>,
    /// Spatial part of the self-coupled linear terms of each block.
    linear: Vec<SparseMatrix>,
    kernel: Option<Arc<CollisionKernel>>,
    /// Terms that are not `∂_t` or `L_s` of the block's own field.
    remainder: Vec<Vec<EquationTerm>>,
    remainder_degree: usize,
    initial: Vec<Vec<f64>>,
    normalization: f64,
    diagonal_solver: Arc<OnceLock<Arc<TimeDiagonalSolver>>>,
}

impl std::fmt::Debug for GalerkinSystem {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("GalerkinSystem")
            .field("disc", &self.disc)
            .field("blocks", &self.blocks)
            .field("unknowns", &self.unknowns())
            .finish()
    }
}

fn is_self_linear(term: &EquationTerm, field: Field) -> bool {
    matches!(term.kind, TermKind::TimeDerivative | TermKind::Liouvillean)
        && term.monomial.degree() == 1
        && term.monomial.factors[0].field == field
}

impl GalerkinSystem {
    /// Builds the conditions for `closure` truncated at `s_max`.
    pub fn build(
        closure: &ClosureSpec,
        s_max: usize,
        hamiltonian: &HamiltonianSpec,
        disc: &Discretization,
    ) -> Result<Self> {
        let closed = apply_closure(closure, s_max)?;
        Self::from_closed(closed, hamiltonian, disc)
    }

    pub fn from_closed(
        closed: ClosedSystem,
        hamiltonian: &HamiltonianSpec,
        disc: &Discretization,
    ) -> Result<Self> {
        Self::assemble(closed, hamiltonian, disc, None)
    }

    fn assemble(
        closed: ClosedSystem,
        hamiltonian: &HamiltonianSpec,
        disc: &Discretization,
        reuse: Option<Arc<CollisionKernel>>,
    ) -> Result<Self> {
        let dom = hamiltonian.domain();
        let q_axis = PeriodicAxis::new(disc.order, disc.level, dom.q_start, dom.q_length)?;
        let p_axis = PeriodicAxis::new(disc.order, disc.level, dom.p_start, dom.p_length)?;
        let n = disc.modes();
        let nt = disc.time.map_or(1, |w| w.modes);
        if let Some(w) = &disc.time {
            if w.modes < 2 {
                return Err(Error::Config(
                    "a time window needs at least two modes".into(),
                ));
            }
        }

        let mut blocks = Vec::new();
        let mut offset = 0usize;
        for &field in &closed.unknowns {
            let s = field.particles();
            let spatial = (n * n)
                .checked_pow(s as u32)
                .ok_or_else(|| Error::Capacity("tensor size overflows".into()))?;
            let len = spatial * nt;
            blocks.push(Block {
                field,
                particles: s,
                offset,
                spatial,
                len,
            });
            offset += len;
        }

        let mut remainder = Vec::new();
        let mut degree = 0usize;
        for (eq, block) in closed.equations.iter().zip(&blocks) {
            let terms: Vec<EquationTerm> = eq
                .terms
                .iter()
                .filter(|t| !is_self_linear(t, block.field))
                .filter(|t| t.kind != TermKind::Collision || hamiltonian.has_pair())
                .cloned()
                .collect();
            for t in &terms {
                degree = degree.max(t.monomial.degree());
            }
            remainder.push(terms);
        }

        // Memory estimate: unknowns, residual workspace and, for nonlinear
        // systems, a dense Jacobian.
        let unknowns = offset;
        let mut bytes = 8usize.saturating_mul(unknowns).saturating_mul(6);
        if degree > 0 {
            bytes = bytes.saturating_add(8usize.saturating_mul(unknowns).saturating_mul(unknowns));
        } else if disc.time.is_some() {
            // Sparse LU fill of these operators grows like size^1.5 with a
            // measured constant near 24. One complex factor per time
            // eigenvalue for a single block, one real factor otherwise.
            let fill = if blocks.len() == 1 {
                24.0 * (blocks[0].spatial as f64).powf(1.5) * 16.0 * nt as f64
            } else {
                24.0 * (unknowns as f64).powf(1.5) * 8.0
            };
            bytes = bytes.saturating_add(fill.min(1e18) as usize);
        }
        if degree > 0 && unknowns > MAX_DENSE_UNKNOWNS {
            return Err(Error::Capacity(format!(
                "nonlinear system with {unknowns} unknowns exceeds the dense Jacobian limit {MAX_DENSE_UNKNOWNS}"
            )));
        }
        if bytes > disc.memory_budget {
            return Err(Error::Capacity(format!(
                "system with {unknowns} unknowns needs about {} MiB (budget {} MiB)",
                bytes >> 20,
                disc.memory_budget >> 20
            )));
        }

        let needed_s = closed
            .unknowns
            .iter()
            .map(|f| f.particles())
            .max()
            .unwrap_or(1);
        let mut liouvilleans = Vec::new();
        for s in 1..=needed_s {
            let spec = build_liouvillean(hamiltonian, s)?;
            let axes: Vec<PeriodicAxis> = (0..s)
                .flat_map(|_| [q_axis.clone(), p_axis.clone()])
                .collect();
            liouvilleans.push(Arc::new(CompiledOperator::compile(&spec, &axes)?));
        }
        let linear = blocks
            .iter()
            .map(|b| liouvilleans[b.particles - 1].assemble())
            .collect::<Result<Vec<_>>>()?;

        let kernel = if hamiltonian.has_pair()
            && remainder
                .iter()
                .flatten()
                .any(|t| t.kind == TermKind::Collision)
        {
            if let Some(k) = reuse {
                Some(k)
            } else {
                let force = hamiltonian.pair_force_kernel();
                let w = match force.separate(0, 1) {
                    Some(groups) => {
                        q_axis.separable_pair_kernel(&as_terms(&separable_parts(&groups)))?
                    }
                    None => {
                        let force = force.compile();
                        q_axis.pair_kernel(|x, y| force.eval_parts(&[x, y]))?
                    }
                };
                Some(Arc::new(CollisionKernel {
                    w,
                    dp: p_axis.derivative(1)?,
                    p_weight: p_axis.basis_integral(),
                }))
            }
        } else {
            None
        };

        let time = disc
            .time
            .map(|w| TimeData::new(&w, degree.max(1)))
            .transpose()?;
        let initial = blocks.iter().map(|b| vec![0.0; b.spatial]).collect();
        Ok(GalerkinSystem {
            closed,
            hamiltonian: hamiltonian.clone(),
            disc: disc.clone(),
            q_axis,
            p_axis,
            time,
            blocks,
            liouvilleans,
            linear,
            kernel,
            remainder,
            remainder_degree: degree,
            initial,
            normalization: 1.0,
            diagonal_solver: Arc::new(OnceLock::new()),
        })
    }

    pub fn closed(&self) -> &ClosedSystem {
        &self.closed
    }

    pub fn hamiltonian(&self) -> &HamiltonianSpec {
        &self.hamiltonian
    }

    pub fn discretization(&self) -> &Discretization {
        &self.disc
    }

    pub fn blocks(&self) -> &[Block] {
        &self.blocks
    }

    pub fn q_axis(&self) -> &PeriodicAxis {
        &self.q_axis
    }

    pub fn p_axis(&self) -> &PeriodicAxis {
        &self.p_axis
    }

    pub fn unknowns(&self) -> usize {
        self.blocks.iter().map(|b| b.len).sum()
    }

    /// Number of conditions: Galerkin rows plus the constraint rows that
    /// replace the last time row (or the coarsest row when stationary).
    pub fn equations(&self) -> usize {
        let nt = self.time_modes();
        self.blocks
            .iter()
            .map(|b| match self.time {
                Some(_) => (nt - 1) * b.spatial + b.spatial,
                None => b.spatial,
            })
            .sum()
    }

    pub fn is_linear(&self) -> bool {
        self.remainder.iter().all(|r| r.is_empty())
    }

    /// Polynomial degree of the residual in the unknowns.
    pub fn degree(&self) -> usize {
        self.remainder_degree.max(1)
    }

    pub fn time_modes(&self) -> usize {
        self.time.as_ref().map_or(1, |t| t.axis.modes())
    }

    pub fn time_window(&self) -> Option<TimeWindow> {
        self.disc.time
    }

    /// Initial datum (single-scale spatial coefficients) of `field`.
    pub fn set_initial(&mut self, field: Field, values: Vec<f64>) -> Result<()> {
        let i = self.block_index(field)?;
        if values.len() != self.blocks[i].spatial {
            return Err(Error::Shape(format!(
                "initial datum has {} coefficients, expected {}",
                values.len(),
                self.blocks[i].spatial
            )));
        }
        self.initial[i] = values;
        Ok(())
    }

    pub fn initial(&self, field: Field) -> Result<&[f64]> {
        Ok(&self.initial[self.block_index(field)?])
    }

    /// Target of `∫F_1 dμ` for stationary problems.
    pub fn set_normalization(&mut self, mass: f64) {
        self.normalization = mass;
    }

    fn block_index(&self, field: Field) -> Result<usize> {
        self.blocks
            .iter()
            .position(|b| b.field == field)
            .ok_or_else(|| Error::Shape(format!("field {field} is not an unknown")))
    }

    /// Same system on another time window of equal length.
    pub fn with_window_start(&self, start: f64) -> Result<Self> {
        let mut out = self.clone();
        if let Some(w) = out.disc.time.as_mut() {
            w.start = start;
            out.time = Some(TimeData::new(w, self.remainder_degree.max(1))?);
        }
        Ok(out)
    }

    /// Same problem with the pair potential scaled by `lambda`. The
    /// collision kernel does not depend on the scale and is shared.
    pub fn with_coupling(&self, lambda: f64) -> Result<Self> {
        let h = self.hamiltonian.with_coupling(lambda);
        let mut out = Self::assemble(self.closed.clone(), &h, &self.disc, self.kernel.clone())?;
        out.initial = self.initial.clone();
        out.normalization = self.normalization;
        Ok(out)
    }

    /// Axes of the coefficient tensor of `block`.
    pub fn block_axes(&self, block: &Block) -> Vec<AxisSpec> {
        let mut axes = Vec::new();
        if let Some(w) = &self.disc.time {
            axes.push(AxisSpec::Time {
                modes: w.modes,
                start: w.start,
                length: w.length,
            });
        }
        let dom = self.hamiltonian.domain();
        for i in 0..block.particles {
            axes.push(AxisSpec::Phase {
                role: PhaseRole::Position(i),
                order: self.disc.order,
                level: self.disc.level,
                start: dom.q_start,
                length: dom.q_length,
            });
            axes.push(AxisSpec::Phase {
                role: PhaseRole::Momentum(i),
                order: self.disc.order,
                level: self.disc.level,
                start: dom.p_start,
                length: dom.p_length,
            });
        }
        axes
    }

    /// Splits an unknown vector into multiscale tensors, one per field.
    pub fn to_tensors(&self, x: &[f64]) -> Result<Vec<CoefficientTensor>> {
        if x.len() != self.unknowns() {
            return Err(Error::Shape("unknown vector has the wrong length".into()));
        }
        self.blocks
            .iter()
            .map(|b| {
                CoefficientTensor::from_single_scale(
                    self.block_axes(b),
                    1,
                    x[b.offset..b.offset + b.len].to_vec(),
                )
            })
            .collect()
    }

    pub fn from_tensors(&self, tensors: &[CoefficientTensor]) -> Result<Vec<f64>> {
        if tensors.len() != self.blocks.len() {
            return Err(Error::Shape("one tensor per unknown field expected".into()));
        }
        let mut x = Vec::with_capacity(self.unknowns());
        for (b, t) in self.blocks.iter().zip(tensors) {
            if t.axes() != self.block_axes(b).as_slice() {
                return Err(Error::Shape(format!(
                    "tensor axes do not match block {}",
                    b.field
                )));
            }
            x.extend(t.single_scale()?);
        }
        Ok(x)
    }

    /// Spatial coefficients of every block at the end of the window (or the
    /// stationary solution itself).
    pub fn end_trace(&self, x: &[f64]) -> Vec<Vec<f64>> {
        self.trace(x, self.time.as_ref().map(|t| t.end_trace.as_slice()))
    }

    pub fn start_trace(&self, x: &[f64]) -> Vec<Vec<f64>> {
        self.trace(x, self.time.as_ref().map(|t| t.start_trace.as_slice()))
    }

    fn trace(&self, x: &[f64], weights: Option<&[f64]>) -> Vec<Vec<f64>> {
        self.blocks
            .iter()
            .map(|b| {
                let data = &x[b.offset..b.offset + b.len];
                match weights {
                    None => data.to_vec(),
                    Some(w) => combine(data, b.spatial, w),
                }
            })
            .collect()
    }

    /// Guess that is constant in time and equal to the initial datum.
    pub fn constant_guess(&self) -> Vec<f64> {
        let mut x = vec![0.0; self.unknowns()];
        for (b, ic) in self.blocks.iter().zip(&self.initial) {
            let scale = self.time.as_ref().map_or(1.0, |t| t.axis.length().sqrt());
            for (d, v) in x[b.offset..b.offset + b.spatial].iter_mut().zip(ic) {
                *d = scale * v;
            }
        }
        x
    }

    /// Sparse matrix of the self-coupled linear terms and constraint rows.
    pub fn linear_matrix(&self) -> SparseMatrix {
        let n = self.unknowns();
        let mut triplets = Vec::new();
        for (b, k) in self.blocks.iter().zip(&self.linear) {
            let block = match &self.time {
                Some(t) => SparseMatrix::from_dense(&t.dh, Symmetry::General)
                    .kron(&SparseMatrix::identity(b.spatial))
                    .add(
                        &SparseMatrix::from_dense(&t.ih, Symmetry::General).kron(k),
                        1.0,
                    ),
                None => k.clone(),
            };
            triplets.extend(
                block
                    .triplets()
                    .into_iter()
                    .map(|(r, c, v)| (r + b.offset, c + b.offset, v)),
            );
        }
        SparseMatrix::from_triplets(n, n, triplets, Symmetry::General)
    }

    /// Right-hand side from the initial data (zero for stationary systems).
    pub fn rhs(&self) -> Vec<f64> {
        let mut r = vec![0.0; self.unknowns()];
        if self.time.is_some() {
            let nt = self.time_modes();
            for (b, ic) in self.blocks.iter().zip(&self.initial) {
                let row = b.offset + (nt - 1) * b.spatial;
                r[row..row + b.spatial].copy_from_slice(ic);
            }
        }
        r
    }

    /// Solver for the linear part when it is the whole system.
    pub(crate) fn diagonal_solver(&self) -> Result<Arc<TimeDiagonalSolver>> {
        if let Some(s) = self.diagonal_solver.get() {
            return Ok(s.clone());
        }
        let t = self
            .time
            .as_ref()
            .ok_or_else(|| Error::Unsupported("time diagonalization needs a time axis".into()))?;
        if self.blocks.len() != 1 {
            return Err(Error::Unsupported(
                "time diagonalization of coupled blocks".into(),
            ));
        }
        let s = Arc::new(TimeDiagonalSolver::new(
            t.dh.clone(),
            t.ih.clone(),
            self.linear[0].clone(),
        )?);
        let _ = self.diagonal_solver.set(s.clone());
        Ok(s)
    }

    fn linear_apply(&self, x: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; x.len()];
        for (b, k) in self.blocks.iter().zip(&self.linear) {
            let xb = &x[b.offset..b.offset + b.len];
            let ob = &mut out[b.offset..b.offset + b.len];
            match &self.time {
                None => ob.copy_from_slice(&k.matvec(xb)),
                Some(t) => {
                    let nt = t.axis.modes();
                    let s = b.spatial;
                    let kx: Vec<Vec<f64>> = xb.par_chunks(s).map(|c| k.matvec(c)).collect();
                    for m in 0..nt {
                        let dst = &mut ob[m * s..(m + 1) * s];
                        for i in 0..nt {
                            let d = t.dh.get(m, i);
                            if d != 0.0 {
                                for (o, v) in dst.iter_mut().zip(&xb[i * s..(i + 1) * s]) {
                                    *o += d * v;
                                }
                            }
                            if t.ih.get(m, i) != 0.0 {
                                for (o, v) in dst.iter_mut().zip(&kx[i]) {
                                    *o += v;
                                }
                            }
                        }
                    }
                }
            }
        }
        out
    }

    /// `ℓ(x)`: Galerkin conditions with constraint rows.
    pub fn residual(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.unknowns() {
            return Err(Error::Shape("unknown vector has the wrong length".into()));
        }
        let mut r = self.linear_apply(x);
        for (a, b) in r.iter_mut().zip(self.rhs()) {
            *a -= b;
        }
        if !self.is_linear() {
            let rem = self.remainder_residual(x)?;
            for (a, b) in r.iter_mut().zip(rem) {
                *a += b;
            }
        }
        if self.time.is_none() {
            self.apply_normalization(x, &mut r)?;
        }
        Ok(r)
    }

    /// Stationary systems: rows in multiscale order with the coarsest row of
    /// `F_1` replaced by `∫F_1 dμ − mass`.
    fn apply_normalization(&self, x: &[f64], r: &mut [f64]) -> Result<()> {
        for b in &self.blocks {
            let t = CoefficientTensor::from_single_scale(
                self.block_axes(b),
                1,
                r[b.offset..b.offset + b.len].to_vec(),
            )?;
            r[b.offset..b.offset + b.len].copy_from_slice(t.values());
            if b.field == Field::One {
                let w = self.q_axis.basis_integral() * self.p_axis.basis_integral();
                let mass: f64 = x[b.offset..b.offset + b.len].iter().sum::<f64>() * w;
                r[b.offset] = mass - self.normalization;
            }
        }
        Ok(())
    }

    /// Residual expressed against the multiscale test functions.
    pub fn multiscale_residual(&self, r: &[f64]) -> Result<Vec<f64>> {
        if self.time.is_none() {
            return Ok(r.to_vec());
        }
        let mut out = Vec::with_capacity(r.len());
        for b in &self.blocks {
            let t = CoefficientTensor::from_single_scale(
                self.block_axes(b),
                1,
                r[b.offset..b.offset + b.len].to_vec(),
            )?;
            out.extend_from_slice(t.values());
        }
        Ok(out)
    }

    /// `‖ℓ(x)‖_∞` in the multiscale test basis.
    pub fn residual_norm(&self, x: &[f64]) -> Result<f64> {
        Ok(norm_inf(&self.multiscale_residual(&self.residual(x)?)?))
    }

    /// Values of every block at one time instant from time-mode weights.
    fn block_values(&self, x: &[f64], weights: &[f64]) -> Vec<Vec<f64>> {
        self.blocks
            .iter()
            .map(|b| combine(&x[b.offset..b.offset + b.len], b.spatial, weights))
            .collect()
    }

    /// Contribution of the non-self terms, Galerkin-projected in time.
    pub fn remainder_residual(&self, x: &[f64]) -> Result<Vec<f64>> {
        let mut out = vec![0.0; x.len()];
        match &self.time {
            None => {
                let vals: Vec<Vec<f64>> = self
                    .blocks
                    .iter()
                    .map(|b| x[b.offset..b.offset + b.len].to_vec())
                    .collect();
                let zeros: Vec<Vec<f64>> = vals.iter().map(|v| vec![0.0; v.len()]).collect();
                for (bi, b) in self.blocks.iter().enumerate() {
                    let r = self.node_remainder(bi, &vals, &zeros)?;
                    out[b.offset..b.offset + b.len].copy_from_slice(&r);
                }
            }
            Some(t) => {
                let nt = t.axis.modes();
                let per_node: Vec<Vec<Vec<f64>>> = (0..t.nodes.len())
                    .into_par_iter()
                    .map(|n| -> Result<Vec<Vec<f64>>> {
                        let vals = self.block_values(x, &t.a[n]);
                        let dvals = self.block_values(x, &t.da[n]);
                        (0..self.blocks.len())
                            .map(|bi| self.node_remainder(bi, &vals, &dvals))
                            .collect()
                    })
                    .collect::<Result<_>>()?;
                for (n, blocks) in per_node.iter().enumerate() {
                    for (b, r) in self.blocks.iter().zip(blocks) {
                        for k in 0..nt - 1 {
                            let c = t.weights[n] * t.a[n][k];
                            let dst =
                                &mut out[b.offset + k * b.spatial..b.offset + (k + 1) * b.spatial];
                            for (d, v) in dst.iter_mut().zip(r) {
                                *d += c * v;
                            }
                        }
                    }
                }
            }
        }
        Ok(out)
    }

    fn field_values<'a>(&self, vals: &'a [Vec<f64>], field: Field) -> Result<&'a [f64]> {
        Ok(&vals[self.block_index(field)?])
    }

    fn monomial_tensor(
        &self,
        m: &Monomial,
        vals: &[Vec<f64>],
        skip_last: bool,
    ) -> Result<Vec<f64>> {
        let count = if skip_last {
            m.factors.len() - 1
        } else {
            m.factors.len()
        };
        let mut acc = vec![1.0];
        for f in &m.factors[..count] {
            acc = outer(&acc, self.field_values(vals, f.field)?);
        }
        Ok(acc)
    }

    /// Spatial remainder of block `bi` at one time instant.
    fn node_remainder(&self, bi: usize, vals: &[Vec<f64>], dvals: &[Vec<f64>]) -> Result<Vec<f64>> {
        let block = &self.blocks[bi];
        let s = block.particles;
        let mut out = vec![0.0; block.spatial];
        for term in &self.remainder[bi] {
            let contribution = match term.kind {
                TermKind::TimeDerivative => {
                    let k = term.monomial.factors.len();
                    let mut acc = vec![0.0; block.spatial];
                    for d in 0..k {
                        let mut t = vec![1.0];
                        for (i, f) in term.monomial.factors.iter().enumerate() {
                            let src = if i == d { dvals } else { vals };
                            t = outer(&t, self.field_values(src, f.field)?);
                        }
                        for (a, v) in acc.iter_mut().zip(t) {
                            *a += v;
                        }
                    }
                    acc
                }
                TermKind::Liouvillean => {
                    let t = self.monomial_tensor(&term.monomial, vals, false)?;
                    self.liouvilleans[s - 1].apply(&t)?
                }
                TermKind::Collision => self.collision(s, &term.monomial, vals)?,
            };
            for (o, c) in out.iter_mut().zip(contribution) {
                *o += term.sign * c;
            }
        }
        Ok(out)
    }

    /// `(λ/V^s) ∫dμ_{s+1} Σ_i L_{i,s+1}` applied to an `(s+1)`-particle monomial.
    fn collision(&self, s: usize, m: &Monomial, vals: &[Vec<f64>]) -> Result<Vec<f64>> {
        let kernel = self
            .kernel
            .as_ref()
            .ok_or_else(|| Error::Internal("collision kernel missing".into()))?;
        let n = self.disc.modes();
        let scale = self.hamiltonian.coupling() / self.hamiltonian.volume().powi(s as i32);
        let shape: Vec<usize> = vec![n; 2 * s];
        let last = m
            .factors
            .last()
            .ok_or_else(|| Error::Internal("empty monomial".into()))?;
        let mut out = vec![0.0; n.pow(2 * s as u32)];
        if last.field == Field::One && last.particles == vec![s] {
            // Particle s+1 enters through F_1 alone: the marginal factorizes.
            let rest = self.monomial_tensor(m, vals, true)?;
            let f1 = self.field_values(vals, Field::One)?;
            let rho: Vec<f64> = f1
                .chunks(n)
                .map(|row| row.iter().sum::<f64>() * kernel.p_weight)
                .collect();
            let e = field_matrix(&kernel.w, &rho);
            for i in 0..s {
                let v = apply_along_axis(&rest, &shape, 2 * i, &e)?;
                let v = apply_along_axis(&v, &shape, 2 * i + 1, &kernel.dp)?;
                for (o, x) in out.iter_mut().zip(v) {
                    *o += x;
                }
            }
        } else {
            let full = self.monomial_tensor(m, vals, false)?;
            // Integrate out p_{s+1}; the last axis is then q_{s+1}.
            let marg: Vec<f64> = full
                .chunks(n)
                .map(|c| c.iter().sum::<f64>() * kernel.p_weight)
                .collect();
            for i in 0..s {
                for (j, w) in kernel.w.iter().enumerate() {
                    let slice: Vec<f64> = marg.iter().skip(j).step_by(n).copied().collect();
                    let v = apply_along_axis(&slice, &shape, 2 * i, w)?;
                    let v = apply_along_axis(&v, &shape, 2 * i + 1, &kernel.dp)?;
                    for (o, x) in out.iter_mut().zip(v) {
                        *o += x;
                    }
                }
            }
        }
        out.iter_mut().for_each(|v| *v *= scale);
        Ok(out)
    }

    /// Dense Jacobian: the assembled linear part plus column-probed
    /// remainder. The probes are exact for residuals of degree ≤ 4.
    pub fn jacobian(&self, x: &[f64]) -> Result<Dense> {
        let n = self.unknowns();
        if n > MAX_DENSE_UNKNOWNS {
            return Err(Error::Capacity(format!(
                "dense Jacobian with {n} unknowns exceeds {MAX_DENSE_UNKNOWNS}"
            )));
        }
        if self.time.is_none() {
            return self.probe_all(x);
        }
        let mut j = self.linear_matrix().to_dense();
        if !self.is_linear() {
            let degree = self.remainder_degree;
            let cols: Vec<Vec<f64>> = (0..n)
                .into_par_iter()
                .map(|c| self.probe_column(|y| self.remainder_residual(y), x, c, degree))
                .collect::<Result<_>>()?;
            for (c, col) in cols.iter().enumerate() {
                for (r, v) in col.iter().enumerate() {
                    if *v != 0.0 {
                        j.add(r, c, *v);
                    }
                }
            }
        }
        Ok(j)
    }

    fn probe_all(&self, x: &[f64]) -> Result<Dense> {
        let n = self.unknowns();
        let degree = self.degree();
        let cols: Vec<Vec<f64>> = (0..n)
            .into_par_iter()
            .map(|c| self.probe_column(|y| self.residual(y), x, c, degree))
            .collect::<Result<_>>()?;
        Ok(Dense::from_fn(n, n, |r, c| cols[c][r]))
    }

    fn probe_column<F>(&self, f: F, x: &[f64], c: usize, degree: usize) -> Result<Vec<f64>>
    where
        F: Fn(&[f64]) -> Result<Vec<f64>>,
    {
        let central = |h: f64| -> Result<Vec<f64>> {
            let mut xp = x.to_vec();
            let mut xm = x.to_vec();
            xp[c] += h;
            xm[c] -= h;
            let rp = f(&xp)?;
            let rm = f(&xm)?;
            Ok(rp
                .iter()
                .zip(&rm)
                .map(|(a, b)| (a - b) / (2.0 * h))
                .collect())
        };
        if degree <= 2 {
            central(1.0)
        } else {
            // Richardson step removes the cubic term of the central difference.
            let d1 = central(0.5)?;
            let d2 = central(1.0)?;
            Ok(d1
                .iter()
                .zip(&d2)
                .map(|(a, b)| (4.0 * a - b) / 3.0)
                .collect())
        }
    }

    /// Projects a separable datum `f(q) g(p)` onto the single-particle basis.
    pub fn project_separable<F, G>(&self, f: F, g: G) -> Result<Vec<f64>>
    where
        F: Fn(f64) -> f64 + Sync,
        G: Fn(f64) -> f64 + Sync,
    {
        let a = self.q_axis.project(f)?;
        let b = self.p_axis.project(g)?;
        Ok(outer(&a, &b))
    }

    /// `∫ F_1 dμ` of single-particle single-scale coefficients.
    pub fn mass(&self, values: &[f64]) -> f64 {
        values.iter().sum::<f64>() * self.q_axis.basis_integral() * self.p_axis.basis_integral()
    }
}

/// `Σ_i w_i X_i` over time-mode blocks of length `spatial`.
pub(crate) fn combine(data: &[f64], spatial: usize, weights: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; spatial];
    for (i, w) in weights.iter().enumerate() {
        if *w == 0.0 {
            continue;
        }
        for (o, v) in out.iter_mut().zip(&data[i * spatial..(i + 1) * spatial]) {
            *o += w * v;
        }
    }
    out
}

/// `E = Σ_j ρ_j W[j]`.
fn field_matrix(w: &[SparseMatrix], rho: &[f64]) -> SparseMatrix {
    let n = w.first().map_or(0, |m| m.rows());
    let mut t = Vec::new();
    for (m, r) in w.iter().zip(rho) {
        if *r == 0.0 {
            continue;
        }
        t.extend(m.triplets().into_iter().map(|(a, b, v)| (a, b, r * v)));
    }
    SparseMatrix::from_triplets(n, n, t, Symmetry::Symmetric)
}
