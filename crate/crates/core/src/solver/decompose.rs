//! Slow/fast partition of a solution and evaluation on sample grids.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::Dense;
use crate::wavelet::BasisKind;

use super::tensor::{AxisSpec, CoefficientTensor};

/// Finest grid along one axis.
pub const MAX_GRID_POINTS: usize = 1 << 12;

/// Largest number of sampled values produced by one evaluation.
pub const MAX_GRID_VALUES: usize = 1 << 26;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FastPart {
    pub level: u32,
    /// Nominal frequency `2^level`.
    pub omega: f64,
    pub coefficients: CoefficientTensor,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolutionDecomposition {
    /// Cut level per phase axis.
    pub cut: Vec<u32>,
    pub slow: CoefficientTensor,
    /// One entry per level that holds at least one mode, finest last.
    pub fast: Vec<FastPart>,
}

impl SolutionDecomposition {
    /// `slow + Σ fast`.
    pub fn recombine(&self) -> CoefficientTensor {
        let mut out = self.slow.clone();
        for f in &self.fast {
            for (o, v) in out.values_mut().iter_mut().zip(f.coefficients.values()) {
                *o += v;
            }
        }
        out
    }
}

/// Splits `t` into modes whose wavelet level on every phase axis is below
/// the cut (slow) and the rest, grouped by their finest wavelet level. The
/// time axis never contributes to the level. Scaling modes are always slow.
pub fn decompose(t: &CoefficientTensor, cut: &[u32]) -> Result<SolutionDecomposition> {
    let phase_offset = usize::from(t.has_time_axis());
    let phase = t.phase_axes().len();
    if cut.len() != phase {
        return Err(Error::Shape(format!(
            "{} cut levels given for {phase} phase axes",
            cut.len()
        )));
    }
    let mut slow = CoefficientTensor::zeros(t.axes().to_vec(), t.components())?;
    let mut groups: std::collections::BTreeMap<u32, CoefficientTensor> = Default::default();
    for (flat, &v) in t.values().iter().enumerate() {
        let (_, index) = t.index_of(flat);
        let mut is_slow = true;
        let mut finest = 0u32;
        for (a, b) in index.factors[phase_offset..].iter().enumerate() {
            if b.kind == BasisKind::Wavelet {
                finest = finest.max(b.level);
                if b.level >= cut[a] {
                    is_slow = false;
                }
            }
        }
        if is_slow {
            slow.values_mut()[flat] = v;
        } else {
            let g = match groups.entry(finest) {
                std::collections::btree_map::Entry::Occupied(e) => e.into_mut(),
                std::collections::btree_map::Entry::Vacant(e) => {
                    e.insert(CoefficientTensor::zeros(t.axes().to_vec(), t.components())?)
                }
            };
            g.values_mut()[flat] = v;
        }
    }
    let fast = groups
        .into_iter()
        .map(|(level, coefficients)| FastPart {
            level,
            omega: 2f64.powi(level as i32),
            coefficients,
        })
        .collect();
    Ok(SolutionDecomposition {
        cut: cut.to_vec(),
        slow,
        fast,
    })
}

/// Sample positions of `points` grid nodes along `axis`: uniform over the
/// period for phase axes, endpoints included for the time axis.
pub fn grid_positions(axis: &AxisSpec, points: usize) -> Vec<f64> {
    let (start, length) = axis.interval();
    match axis {
        AxisSpec::Phase { .. } => (0..points)
            .map(|i| start + length * i as f64 / points as f64)
            .collect(),
        AxisSpec::Time { .. } if points == 1 => vec![start],
        AxisSpec::Time { .. } => (0..points)
            .map(|i| start + length * i as f64 / (points - 1) as f64)
            .collect(),
    }
}

/// Dense `points × modes` matrix of single-scale basis values.
fn sample_matrix(axis: &AxisSpec, points: usize) -> Result<Dense> {
    let xs = grid_positions(axis, points);
    let mut m = Dense::zeros(points, axis.modes());
    match axis {
        AxisSpec::Time { .. } => {
            let leg = axis.legendre()?;
            for (r, &x) in xs.iter().enumerate() {
                for (c, v) in leg.values_at(x).into_iter().enumerate() {
                    m.set(r, c, v);
                }
            }
        }
        AxisSpec::Phase { .. } => {
            let per = axis.periodic()?;
            for (r, &x) in xs.iter().enumerate() {
                for (c, v) in per.basis_values(x) {
                    m.add(r, c, v);
                }
            }
        }
    }
    Ok(m)
}

/// Contracts `axis` of a row-major tensor with `m` (rows replace modes).
fn contract(values: &[f64], shape: &[usize], axis: usize, m: &Dense) -> Vec<f64> {
    let n = shape[axis];
    let inner: usize = shape[axis + 1..].iter().product();
    let outer: usize = shape[..axis].iter().product();
    let rows = m.rows;
    let mut out = vec![0.0; outer * rows * inner];
    for o in 0..outer {
        for r in 0..rows {
            let row = m.row(r);
            let dst = &mut out[(o * rows + r) * inner..(o * rows + r + 1) * inner];
            for (k, &w) in row.iter().enumerate().take(n) {
                if w == 0.0 {
                    continue;
                }
                let src = &values[(o * n + k) * inner..(o * n + k + 1) * inner];
                for (d, s) in dst.iter_mut().zip(src) {
                    *d += w * s;
                }
            }
        }
    }
    out
}

/// Field values `Σ a_{i0 i1 …} A_{i0}(t) B_{i1}(x_1) …` on a tensor grid with
/// `points[a]` nodes along axis `a`. Output is row-major with the component
/// outermost, then the axes in order.
pub fn evaluate_on_grid(t: &CoefficientTensor, points: &[usize]) -> Result<Vec<f64>> {
    if points.len() != t.axes().len() {
        return Err(Error::Shape(format!(
            "{} grid sizes given for {} axes",
            points.len(),
            t.axes().len()
        )));
    }
    if let Some(&p) = points.iter().find(|&&p| p == 0 || p > MAX_GRID_POINTS) {
        return Err(Error::Capacity(format!(
            "grid with {p} points per axis (allowed 1..={MAX_GRID_POINTS})"
        )));
    }
    let total = points
        .iter()
        .try_fold(t.components(), |acc, &p| acc.checked_mul(p))
        .filter(|&v| v <= MAX_GRID_VALUES)
        .ok_or_else(|| Error::Capacity("grid has too many sample values".into()))?;
    let mut values = t.single_scale()?;
    let mut shape = t.full_shape();
    for (a, axis) in t.axes().iter().enumerate() {
        let m = sample_matrix(axis, points[a])?;
        values = contract(&values, &shape, a + 1, &m);
        shape[a + 1] = points[a];
    }
    debug_assert_eq!(values.len(), total);
    Ok(values)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::solver::PhaseRole;
    use crate::wavelet::BasisIndex;
    use crate::wavelet::TensorIndex;

    fn axes(order: usize, level: u32) -> Vec<AxisSpec> {
        vec![
            AxisSpec::Phase {
                role: PhaseRole::Position(0),
                order,
                level,
                start: -1.0,
                length: 2.0,
            },
            AxisSpec::Phase {
                role: PhaseRole::Momentum(0),
                order,
                level,
                start: -2.0,
                length: 4.0,
            },
        ]
    }

    fn random(order: usize, level: u32) -> CoefficientTensor {
        let n = 1usize << (2 * level);
        let v: Vec<f64> = (0..n)
            .map(|i| ((i * 7919 % 101) as f64 - 50.0) / 17.0)
            .collect();
        CoefficientTensor::from_values(axes(order, level), 1, v).unwrap()
    }

    #[test]
    fn partition_sums_to_original() {
        let t = random(3, 4);
        for cut in 0..6 {
            let d = decompose(&t, &[cut, cut]).unwrap();
            let r = d.recombine();
            for (a, b) in r.values().iter().zip(t.values()) {
                assert!((a - b).abs() <= 1e-14);
            }
        }
    }

    #[test]
    fn cut_above_finest_is_all_slow() {
        let t = random(2, 3);
        let d = decompose(&t, &[9, 9]).unwrap();
        assert!(d.fast.is_empty());
        assert_eq!(d.slow, t);
    }

    #[test]
    fn cut_at_coarsest_keeps_scaling_modes() {
        let t = random(2, 3);
        let d = decompose(&t, &[0, 0]).unwrap();
        let nonzero: Vec<usize> = (0..t.len())
            .filter(|&i| d.slow.values()[i] != 0.0)
            .collect();
        assert_eq!(nonzero, vec![0]);
        assert_eq!(d.fast.last().unwrap().level, 2);
        assert_eq!(d.fast[1].omega, 2.0);
    }

    #[test]
    fn single_mode_evaluates_to_basis_function() {
        let ax = axes(2, 3);
        let mut t = CoefficientTensor::zeros(ax.clone(), 1).unwrap();
        let idx = TensorIndex {
            factors: vec![BasisIndex::from_position(0), BasisIndex::from_position(0)],
        };
        let pos = t.position_of(0, &idx).unwrap();
        t.values_mut()[pos] = 1.0;
        let g = evaluate_on_grid(&t, &[16, 8]).unwrap();
        // The coarsest scaling function of a periodized basis is constant.
        let c = 1.0 / (2.0f64 * 4.0).sqrt();
        for v in g {
            assert!((v - c).abs() < 1e-10, "{v}");
        }
    }

    #[test]
    fn haar_grid_values_are_cell_averages() {
        let ax = axes(1, 2);
        let q = ax[0].periodic().unwrap();
        let p = ax[1].periodic().unwrap();
        let a = q.project(|x| x * x).unwrap();
        let b = p.project(|y| y).unwrap();
        let mut v = Vec::new();
        for x in &a {
            for y in &b {
                v.push(x * y);
            }
        }
        let t = CoefficientTensor::from_single_scale(ax, 1, v).unwrap();
        let g = evaluate_on_grid(&t, &[4, 4]).unwrap();
        // Cell [-1,-0.5) × [-2,-1): averages 7/12 and -1.5.
        assert!((g[0] - 7.0 / 12.0 * -1.5).abs() < 1e-10, "{}", g[0]);
    }

    #[test]
    fn too_fine_grid_is_rejected() {
        let t = random(2, 2);
        assert!(matches!(
            evaluate_on_grid(&t, &[8192, 4]),
            Err(Error::Capacity(_))
        ));
    }

    #[test]
    fn gaussian_round_trip_converges_at_order() {
        let f = |x: f64| (-x * x / 0.08).exp();
        for order in 2..=4usize {
            let err = |level: u32| {
                let ax = vec![axes(order, level)[0].clone()];
                let a = ax[0].periodic().unwrap().project(f).unwrap();
                let t = CoefficientTensor::from_single_scale(ax.clone(), 1, a).unwrap();
                let m = 4096;
                let grid = evaluate_on_grid(&t, &[m]).unwrap();
                let xs = grid_positions(&ax[0], m);
                let e: f64 = xs.iter().zip(&grid).map(|(x, g)| (g - f(*x)).powi(2)).sum();
                (e * 2.0 / m as f64).sqrt()
            };
            let ratio = err(6) / err(7);
            // Rates approach 2^p from below.
            assert!(
                ratio >= 0.95 * 2f64.powi(order as i32),
                "p={order}: {ratio}"
            );
        }
    }

    proptest::proptest! {
        #[test]
        fn any_cut_partitions_the_tensor(
            values in proptest::collection::vec(-10.0f64..10.0, 64),
            cq in 0u32..5,
            cp in 0u32..5,
        ) {
            let t = CoefficientTensor::from_values(axes(2, 3), 1, values).unwrap();
            let d = decompose(&t, &[cq, cp]).unwrap();
            proptest::prop_assert_eq!(d.recombine(), t.clone());
            let energy: f64 = d.slow.norm_squared()
                + d.fast.iter().map(|f| f.coefficients.norm_squared()).sum::<f64>();
            proptest::prop_assert!((energy - t.norm_squared()).abs() <= 1e-10 * (1.0 + t.norm_squared()));
        }
    }
}
