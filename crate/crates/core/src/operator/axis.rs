//! One-dimensional bases used as tensor factors.
//!
//! Phase-space axes carry periodized Daubechies scaling functions at a single
//! finest level `J` on `[a, a + L)`:
//! `B_k(x) = sqrt(N/L) φ^per(N (x − a)/L − k)`, `N = 2^J`.
//! The time axis carries orthonormal Legendre polynomials on `[t0, t0 + T]`.

use std::collections::HashMap;
use std::sync::{Arc, Mutex, OnceLock};

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::linalg::Dense;
use crate::quadrature::{gauss_legendre_on, legendre_all};
use crate::wavelet::moments::{CellMoments, CellQuadrature};
use crate::wavelet::refinement::Refinement;
use crate::wavelet::{forward_transform, inverse_transform, make_family, WaveletFamily};

use super::connection::{connection_coefficients, ConnectionTable};
use super::sparse::{SparseMatrix, Symmetry};

/// One product `a(x) b(y)` of a separated two-variable coefficient.
pub type SeparableTerm<'a> = (
    &'a (dyn Fn(f64) -> f64 + Sync),
    &'a (dyn Fn(f64) -> f64 + Sync),
);

/// Denominator magnitude below which a rational coefficient is treated as
/// having a pole.
pub const POLE_TOL: f64 = 1e-8;

/// Finest dyadic resolution of the multiplication quadrature is
/// `max(J + QUADRATURE_EXTRA_LEVELS, QUADRATURE_MIN_LEVEL)`.
pub const QUADRATURE_EXTRA_LEVELS: u32 = 4;
pub const QUADRATURE_MIN_LEVEL: u32 = 10;

/// Largest supported level of a periodized axis.
pub const MAX_AXIS_LEVEL: u32 = 16;

struct FamilyTables {
    family: WaveletFamily,
    refinement: Refinement,
    moments: CellMoments,
    quadratures: Mutex<HashMap<u32, Arc<CellQuadrature>>>,
    connections: Mutex<HashMap<usize, Arc<ConnectionTable>>>,
}

fn tables(order: usize) -> Result<Arc<FamilyTables>> {
    static CACHE: OnceLock<Mutex<HashMap<usize, Arc<FamilyTables>>>> = OnceLock::new();
    let cache = CACHE.get_or_init(|| Mutex::new(HashMap::new()));
    if let Some(t) = cache.lock().unwrap().get(&order) {
        return Ok(t.clone());
    }
    let family = make_family(order)?;
    let refinement = Refinement::new(&family)?;
    let moments = CellMoments::new(&refinement)?;
    let t = Arc::new(FamilyTables {
        family,
        refinement,
        moments,
        quadratures: Mutex::new(HashMap::new()),
        connections: Mutex::new(HashMap::new()),
    });
    cache.lock().unwrap().entry(order).or_insert(t.clone());
    Ok(t)
}

impl FamilyTables {
    fn quadrature(&self, depth: u32) -> Result<Arc<CellQuadrature>> {
        if let Some(q) = self.quadratures.lock().unwrap().get(&depth) {
            return Ok(q.clone());
        }
        let q = Arc::new(CellQuadrature::new(&self.refinement, &self.moments, depth)?);
        self.quadratures.lock().unwrap().insert(depth, q.clone());
        Ok(q)
    }

    fn connection(&self, d: usize) -> Result<Arc<ConnectionTable>> {
        if let Some(t) = self.connections.lock().unwrap().get(&d) {
            return Ok(t.clone());
        }
        let t = Arc::new(connection_coefficients(&self.family, d)?);
        self.connections.lock().unwrap().insert(d, t.clone());
        Ok(t)
    }
}

/// Periodized scaling-function basis of one phase-space axis.
#[derive(Clone)]
pub struct PeriodicAxis {
    tables: Arc<FamilyTables>,
    level: u32,
    start: f64,
    length: f64,
}

impl std::fmt::Debug for PeriodicAxis {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("PeriodicAxis")
            .field("order", &self.order())
            .field("level", &self.level)
            .field("start", &self.start)
            .field("length", &self.length)
            .finish()
    }
}

impl PeriodicAxis {
    pub fn new(order: usize, level: u32, start: f64, length: f64) -> Result<Self> {
        if level > MAX_AXIS_LEVEL {
            return Err(Error::Capacity(format!(
                "axis level {level} exceeds the maximum {MAX_AXIS_LEVEL}"
            )));
        }
        if !(length > 0.0 && length.is_finite() && start.is_finite()) {
            return Err(Error::Config(format!(
                "invalid axis interval [{start}, {start}+{length})"
            )));
        }
        Ok(PeriodicAxis {
            tables: tables(order)?,
            level,
            start,
            length,
        })
    }

    pub fn family(&self) -> &WaveletFamily {
        &self.tables.family
    }

    pub fn order(&self) -> usize {
        self.tables.family.order()
    }

    pub fn level(&self) -> u32 {
        self.level
    }

    pub fn start(&self) -> f64 {
        self.start
    }

    pub fn length(&self) -> f64 {
        self.length
    }

    pub fn modes(&self) -> usize {
        1usize << self.level
    }

    /// Same interval and family at another level.
    pub fn with_level(&self, level: u32) -> Result<Self> {
        PeriodicAxis::new(self.order(), level, self.start, self.length)
    }

    fn pieces(&self) -> usize {
        self.tables.refinement.pieces()
    }

    fn quadrature(&self) -> Result<Arc<CellQuadrature>> {
        let finest = (self.level + QUADRATURE_EXTRA_LEVELS).max(QUADRATURE_MIN_LEVEL);
        self.tables.quadrature(finest - self.level)
    }

    /// Physical sample positions used by the quadrature in cell `c`.
    fn cell_samples(&self, q: &CellQuadrature, c: usize) -> Vec<f64> {
        let h = self.length / self.modes() as f64;
        q.sample_points()
            .into_iter()
            .map(|w| self.start + h * (c as f64 + w))
            .collect()
    }

    /// All quadrature sample positions, cell by cell.
    pub fn sample_positions(&self) -> Result<Vec<f64>> {
        let q = self.quadrature()?;
        Ok((0..self.modes())
            .flat_map(|c| self.cell_samples(&q, c))
            .collect())
    }

    /// Basis index of piece `i` inside cell `c`.
    #[inline]
    fn wrap(&self, c: usize, i: usize) -> usize {
        let n = self.modes();
        (c + n * (i / n + 1) - i) % n
    }

    /// Connection table of derivative order `d` for this family.
    pub fn connection(&self, d: usize) -> Result<Arc<ConnectionTable>> {
        self.tables.connection(d)
    }

    /// Galerkin matrix `D[m][k] = ∫ B_m ∂^d B_k`.
    pub fn derivative(&self, d: usize) -> Result<SparseMatrix> {
        let table = self.connection(d)?;
        Ok(derivative_matrix(&table, self.modes(), self.length))
    }

    /// Galerkin matrix of multiplication by a rational coefficient given as
    /// `x ↦ (numerator, denominator)`.
    pub fn multiplication<F>(&self, q: F) -> Result<SparseMatrix>
    where
        F: Fn(f64) -> (f64, f64) + Sync,
    {
        let samples = self.coefficient_samples(&q)?;
        self.multiplication_from_samples(&samples)
    }

    /// Evaluates `q` at every quadrature sample, screening for poles.
    pub fn coefficient_samples<F>(&self, q: &F) -> Result<Vec<f64>>
    where
        F: Fn(f64) -> (f64, f64) + Sync,
    {
        let xs = self.sample_positions()?;
        xs.par_iter()
            .map(|&x| {
                let (num, den) = q(x);
                if den.abs() < POLE_TOL || !num.is_finite() || !den.is_finite() {
                    Err(Error::SingularCoefficient {
                        location: format!("x = {x:.6}"),
                    })
                } else {
                    Ok(num / den)
                }
            })
            .collect()
    }

    /// Multiplication matrix from coefficient values at
    /// [`sample_positions`](Self::sample_positions).
    pub fn multiplication_from_samples(&self, samples: &[f64]) -> Result<SparseMatrix> {
        let q = self.quadrature()?;
        let n = self.modes();
        let per_cell = q.sample_points().len();
        if samples.len() != n * per_cell {
            return Err(Error::Shape(format!(
                "expected {} coefficient samples, got {}",
                n * per_cell,
                samples.len()
            )));
        }
        let pieces = self.pieces();
        let blocks: Vec<Vec<f64>> = (0..n)
            .into_par_iter()
            .map(|c| q.integrate_pair(&samples[c * per_cell..(c + 1) * per_cell]))
            .collect();
        let mut triplets = Vec::with_capacity(n * pieces * pieces);
        for (c, block) in blocks.iter().enumerate() {
            for i in 0..pieces {
                for j in 0..pieces {
                    triplets.push((self.wrap(c, i), self.wrap(c, j), block[i * pieces + j]));
                }
            }
        }
        let mut m = SparseMatrix::from_triplets(n, n, triplets, Symmetry::Symmetric);
        // Exact symmetry (rounding only).
        let t = m.transpose();
        m = m.add(&t, 1.0).scaled(0.5);
        Ok(m)
    }

    /// Kernel matrices `W[j][a][b] = ∫∫ c(x, y) B_j(y) B_a(x) B_b(x) dy dx`
    /// for a coefficient `c` given as `(x, y) ↦ (numerator, denominator)`.
    pub fn pair_kernel<F>(&self, c: F) -> Result<Vec<SparseMatrix>>
    where
        F: Fn(f64, f64) -> (f64, f64) + Sync,
    {
        let xs = self.sample_positions()?;
        let n = self.modes();
        // K_j(x) = ∫ c(x, y) B_j(y) dy at every x sample.
        let k: Vec<Vec<f64>> = xs
            .par_iter()
            .map(|&x| {
                let row = self.coefficient_samples(&|y: f64| c(x, y))?;
                self.project_samples(&row)
            })
            .collect::<Result<_>>()?;
        (0..n)
            .into_par_iter()
            .map(|j| {
                let samples: Vec<f64> = k.iter().map(|v| v[j]).collect();
                self.multiplication_from_samples(&samples)
            })
            .collect()
    }

    /// Galerkin matrix of multiplication by `c(x, y)` on the product of this
    /// axis (`x`) with `other` (`y`). Rows and columns are indexed
    /// `a · N_y + b` for `B_a(x) B_b(y)`.
    pub fn coupled_multiplication<F>(&self, other: &PeriodicAxis, c: F) -> Result<SparseMatrix>
    where
        F: Fn(f64, f64) -> (f64, f64) + Sync,
    {
        let qy = other.quadrature()?;
        let ys = other.sample_positions()?;
        let per_cell = qy.sample_points().len();
        let (nx, ny) = (self.modes(), other.modes());
        let pieces = other.pieces();
        let partial: Vec<Vec<(usize, usize, f64)>> = (0..ny)
            .into_par_iter()
            .map(|cy| -> Result<Vec<(usize, usize, f64)>> {
                let mut acc: std::collections::HashMap<(usize, usize), f64> = Default::default();
                for s in 0..per_cell {
                    let y = ys[cy * per_cell + s];
                    let mx = self.multiplication(|x| c(x, y))?;
                    let w = qy.pair_weight(s);
                    for (a, a2, v) in mx.triplets() {
                        for i in 0..pieces {
                            for j in 0..pieces {
                                let wij = w[i * pieces + j];
                                if wij == 0.0 {
                                    continue;
                                }
                                let b = other.wrap(cy, i);
                                let b2 = other.wrap(cy, j);
                                *acc.entry((a * ny + b, a2 * ny + b2)).or_insert(0.0) += v * wij;
                            }
                        }
                    }
                }
                Ok(acc.into_iter().map(|((r, c), v)| (r, c, v)).collect())
            })
            .collect::<Result<_>>()?;
        let triplets = partial.into_iter().flatten().collect();
        Ok(SparseMatrix::from_triplets(
            nx * ny,
            nx * ny,
            triplets,
            Symmetry::Symmetric,
        ))
    }

    /// [`pair_kernel`](Self::pair_kernel) for `c(x, y) = Σ_t a_t(x) b_t(y)`.
    pub fn separable_pair_kernel(&self, terms: &[SeparableTerm<'_>]) -> Result<Vec<SparseMatrix>> {
        let n = self.modes();
        let parts: Vec<(SparseMatrix, Vec<f64>)> = terms
            .iter()
            .map(|(a, b)| Ok((self.multiplication(|x| (a(x), 1.0))?, self.project(b)?)))
            .collect::<Result<_>>()?;
        Ok((0..n)
            .map(|j| {
                parts
                    .iter()
                    .fold(SparseMatrix::zeros(n, n), |acc, (m, by)| acc.add(m, by[j]))
            })
            .collect())
    }

    /// [`coupled_multiplication`](Self::coupled_multiplication) for
    /// `c(x, y) = Σ_t a_t(x) b_t(y)`.
    pub fn separable_coupled_multiplication(
        &self,
        other: &PeriodicAxis,
        terms: &[SeparableTerm<'_>],
    ) -> Result<SparseMatrix> {
        let size = self.modes() * other.modes();
        let mut acc = SparseMatrix::zeros(size, size);
        for (a, b) in terms {
            let mx = self.multiplication(|x| (a(x), 1.0))?;
            let my = other.multiplication(|y| (b(y), 1.0))?;
            acc = acc.add(&mx.kron(&my), 1.0);
        }
        Ok(acc)
    }

    /// Galerkin coefficients `∫ f B_k`.
    pub fn project<F>(&self, f: F) -> Result<Vec<f64>>
    where
        F: Fn(f64) -> f64 + Sync,
    {
        let xs = self.sample_positions()?;
        let samples: Vec<f64> = xs.par_iter().map(|&x| f(x)).collect();
        self.project_samples(&samples)
    }

    /// Coefficients `∫∫ f(x, y) B_a(x) B_b(y)` on this axis (`x`) times
    /// `other` (`y`), index `a · N_y + b`.
    pub fn project_2d<F>(&self, other: &PeriodicAxis, f: F) -> Result<Vec<f64>>
    where
        F: Fn(f64, f64) -> f64 + Sync,
    {
        let ys = other.sample_positions()?;
        let rows: Vec<Vec<f64>> = ys
            .par_iter()
            .map(|&y| self.project(|x| f(x, y)))
            .collect::<Result<_>>()?;
        let (nx, ny) = (self.modes(), other.modes());
        let cols: Vec<Vec<f64>> = (0..nx)
            .into_par_iter()
            .map(|a| {
                let samples: Vec<f64> = rows.iter().map(|r| r[a]).collect();
                other.project_samples(&samples)
            })
            .collect::<Result<_>>()?;
        let mut out = Vec::with_capacity(nx * ny);
        for c in &cols {
            out.extend_from_slice(c);
        }
        Ok(out)
    }

    /// Galerkin coefficients from function values at the quadrature samples.
    pub fn project_samples(&self, samples: &[f64]) -> Result<Vec<f64>> {
        let q = self.quadrature()?;
        let n = self.modes();
        let per_cell = q.sample_points().len();
        if samples.len() != n * per_cell {
            return Err(Error::Shape(
                "sample count does not match the quadrature".into(),
            ));
        }
        let scale = (self.length / n as f64).sqrt();
        let mut out = vec![0.0; n];
        for c in 0..n {
            let v = q.integrate_single(&samples[c * per_cell..(c + 1) * per_cell]);
            for (i, x) in v.iter().enumerate() {
                out[self.wrap(c, i)] += scale * x;
            }
        }
        Ok(out)
    }

    /// `∫ B_k`, identical for all `k`.
    pub fn basis_integral(&self) -> f64 {
        (self.length / self.modes() as f64).sqrt()
    }

    /// Nonzero basis functions at `x` as `(k, B_k(x))`.
    pub fn basis_values(&self, x: f64) -> Vec<(usize, f64)> {
        let n = self.modes();
        let y = ((x - self.start) / self.length).rem_euclid(1.0) * n as f64;
        let mut c = y.floor();
        if c >= n as f64 {
            c = 0.0;
        }
        let w = (y - c).clamp(0.0, 1.0 - f64::EPSILON);
        let phi = self.tables.refinement.cell_values(w);
        let scale = (n as f64 / self.length).sqrt();
        let mut out: Vec<(usize, f64)> = Vec::with_capacity(phi.len());
        for (i, v) in phi.iter().enumerate() {
            let k = self.wrap(c as usize, i);
            if let Some(e) = out.iter_mut().find(|e| e.0 == k) {
                e.1 += scale * v;
            } else {
                out.push((k, scale * v));
            }
        }
        out
    }

    pub fn to_multiscale(&self, c: &[f64]) -> Result<Vec<f64>> {
        forward_transform(self.family(), c, self.level)
    }

    pub fn from_multiscale(&self, c: &[f64]) -> Result<Vec<f64>> {
        inverse_transform(self.family(), c, self.level)
    }
}

/// `D[m][k] = (N/L)^d Γ^d_{m−k}`, periodized by wrap-around summation.
pub fn derivative_matrix(table: &ConnectionTable, modes: usize, length: f64) -> SparseMatrix {
    let d = table.derivative();
    let scale = (modes as f64 / length).powi(d as i32);
    let mut triplets = Vec::new();
    for m in 0..modes {
        for (l, g) in table.entries() {
            if g == 0.0 {
                continue;
            }
            let k = (m as i64 - l).rem_euclid(modes as i64) as usize;
            triplets.push((m, k, scale * g));
        }
    }
    let symmetry = if d % 2 == 1 {
        Symmetry::SkewSymmetric
    } else {
        Symmetry::Symmetric
    };
    SparseMatrix::from_triplets(modes, modes, triplets, symmetry)
}

/// Orthonormal Legendre basis `A_i(t) = sqrt((2i+1)/T) P_i(2(t−t0)/T − 1)`.
#[derive(Debug, Clone, PartialEq)]
pub struct LegendreAxis {
    modes: usize,
    start: f64,
    length: f64,
}

impl LegendreAxis {
    pub fn new(modes: usize, start: f64, length: f64) -> Result<Self> {
        if modes == 0 {
            return Err(Error::Config("time axis needs at least one mode".into()));
        }
        if !(length > 0.0 && length.is_finite()) {
            return Err(Error::Config(format!(
                "invalid time window length {length}"
            )));
        }
        Ok(LegendreAxis {
            modes,
            start,
            length,
        })
    }

    pub fn modes(&self) -> usize {
        self.modes
    }

    pub fn start(&self) -> f64 {
        self.start
    }

    pub fn length(&self) -> f64 {
        self.length
    }

    pub fn with_start(&self, start: f64) -> Self {
        LegendreAxis {
            start,
            ..self.clone()
        }
    }

    /// `(A_0(t), …, A_{n−1}(t))`.
    pub fn values_at(&self, t: f64) -> Vec<f64> {
        let s = 2.0 * (t - self.start) / self.length - 1.0;
        legendre_all(self.modes, s)
            .into_iter()
            .enumerate()
            .map(|(i, p)| ((2 * i + 1) as f64 / self.length).sqrt() * p)
            .collect()
    }

    /// Galerkin matrix `D[m][k] = ∫ A_m A_k'`.
    pub fn derivative(&self) -> Dense {
        let n = self.modes;
        let mut d = Dense::zeros(n, n);
        for m in 0..n {
            for k in (m + 1..n).step_by(2) {
                // ∫ P_m P_k' over [−1, 1] is 2 when k > m and k − m odd.
                let v = ((2 * m + 1) as f64 * (2 * k + 1) as f64).sqrt() / self.length * 2.0;
                d.set(m, k, v);
            }
        }
        d
    }

    /// `∫ f A_k` by Gauss–Legendre quadrature.
    pub fn project<F: Fn(f64) -> f64>(&self, f: F) -> Vec<f64> {
        let (x, w) = gauss_legendre_on(
            (2 * self.modes).max(48),
            self.start,
            self.start + self.length,
        );
        let mut out = vec![0.0; self.modes];
        for (xi, wi) in x.iter().zip(&w) {
            let fv = f(*xi);
            for (o, a) in out.iter_mut().zip(self.values_at(*xi)) {
                *o += wi * fv * a;
            }
        }
        out
    }

    /// `∫ A_k`, nonzero only for `k = 0`.
    pub fn basis_integrals(&self) -> Vec<f64> {
        let mut v = vec![0.0; self.modes];
        v[0] = self.length.sqrt();
        v
    }
}
