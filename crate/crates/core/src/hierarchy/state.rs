//! Hierarchy state `{F_0, F_1, …, F_smax}`, its Fock norm and the collision
//! term of the hierarchy.

use crate::error::{Error, Result};
use crate::linalg::dot;
use crate::operator::CompiledOperator;
use crate::quadrature::gauss_legendre_on;
use crate::solver::tensor::{AxisSpec, CoefficientTensor};

use super::hamiltonian::{coupling_operator, HamiltonianSpec};

/// The `s`-particle entry of a hierarchy state.
#[derive(Debug, Clone, PartialEq)]
pub enum StateComponent {
    /// Explicit coefficients over `2s` phase axes (time axis optional).
    Tensor(CoefficientTensor),
    /// `F_1^{⊗s} + G_s`, kept factored.
    Product {
        one: CoefficientTensor,
        power: usize,
        correlator: Option<CoefficientTensor>,
    },
}

/// Which slice of a space-time state the Fock norm is taken over.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NormForm {
    /// `(1/T) ∫ ‖·‖² dt` over the time window.
    Integrated,
    /// Value at the end of the time window.
    FinalSlice,
}

#[derive(Debug, Clone, PartialEq)]
pub struct HierarchyState {
    pub f0: f64,
    /// `components[s − 1]` holds `F_s`.
    pub components: Vec<StateComponent>,
}

/// A component at one time instant, as a sum of factored terms.
#[derive(Clone)]
enum SliceTerm {
    /// `f_1 ⊗ f_2 ⊗ ⋯`, one factor per particle.
    Product(Vec<Vec<f64>>),
    Tensor(Vec<f64>),
}

impl StateComponent {
    fn particles(&self) -> usize {
        match self {
            StateComponent::Tensor(t) => t.phase_axes().len() / 2,
            StateComponent::Product { power, .. } => *power,
        }
    }

    fn tensors(&self) -> Vec<&CoefficientTensor> {
        match self {
            StateComponent::Tensor(t) => vec![t],
            StateComponent::Product {
                one, correlator, ..
            } => std::iter::once(one).chain(correlator.iter()).collect(),
        }
    }

    fn slice(&self, t: f64) -> Result<Vec<(f64, SliceTerm)>> {
        Ok(match self {
            StateComponent::Tensor(x) => {
                vec![(1.0, SliceTerm::Tensor(x.time_slice(t)?.values().to_vec()))]
            }
            StateComponent::Product {
                one,
                power,
                correlator,
            } => {
                let a = one.time_slice(t)?.values().to_vec();
                let mut v = vec![(1.0, SliceTerm::Product(vec![a; *power]))];
                if let Some(g) = correlator {
                    v.push((1.0, SliceTerm::Tensor(g.time_slice(t)?.values().to_vec())));
                }
                v
            }
        })
    }

    /// Prolongates every stored tensor onto the one-particle phase axes
    /// `one_axes` (and the matching time axis of `time`, if any).
    pub fn prolongate(&self, one_axes: &[AxisSpec], time: Option<&AxisSpec>) -> Result<Self> {
        let lift = |t: &CoefficientTensor| -> Result<CoefficientTensor> {
            let particles = t.phase_axes().len() / 2;
            let mut axes = Vec::new();
            if t.has_time_axis() {
                axes.push(time.cloned().unwrap_or_else(|| t.axes()[0].clone()));
            }
            for i in 0..particles {
                for (k, a) in one_axes.iter().enumerate() {
                    let src = &t.phase_axes()[2 * i + k];
                    axes.push(match (a, src) {
                        (
                            AxisSpec::Phase {
                                order,
                                level,
                                start,
                                length,
                                ..
                            },
                            AxisSpec::Phase { role, .. },
                        ) => AxisSpec::Phase {
                            role: *role,
                            order: *order,
                            level: *level,
                            start: *start,
                            length: *length,
                        },
                        _ => return Err(Error::Shape("expected phase axes".into())),
                    });
                }
            }
            t.prolongate(axes)
        };
        Ok(match self {
            StateComponent::Tensor(t) => StateComponent::Tensor(lift(t)?),
            StateComponent::Product {
                one,
                power,
                correlator,
            } => StateComponent::Product {
                one: lift(one)?,
                power: *power,
                correlator: correlator.as_ref().map(lift).transpose()?,
            },
        })
    }
}

/// `⟨f_1 ⊗ ⋯ ⊗ f_s, g⟩` where particle `i` occupies `f_i.len()` entries.
fn contract_product(factors: &[Vec<f64>], g: &[f64]) -> f64 {
    let mut cur = g.to_vec();
    for f in factors.iter().rev() {
        cur = cur.chunks(f.len()).map(|c| dot(c, f)).collect();
    }
    cur[0]
}

fn slice_inner(x: &SliceTerm, y: &SliceTerm) -> Result<f64> {
    let check = |a: usize, b: usize| {
        if a == b {
            Ok(())
        } else {
            Err(Error::Shape(format!(
                "state components of different sizes ({a} vs {b})"
            )))
        }
    };
    match (x, y) {
        (SliceTerm::Product(a), SliceTerm::Product(b)) => {
            check(a.len(), b.len())?;
            let mut acc = 1.0;
            for (u, v) in a.iter().zip(b) {
                check(u.len(), v.len())?;
                acc *= dot(u, v);
            }
            Ok(acc)
        }
        (SliceTerm::Product(a), SliceTerm::Tensor(g))
        | (SliceTerm::Tensor(g), SliceTerm::Product(a)) => {
            check(a.iter().map(Vec::len).product(), g.len())?;
            Ok(contract_product(a, g))
        }
        (SliceTerm::Tensor(a), SliceTerm::Tensor(b)) => {
            check(a.len(), b.len())?;
            Ok(dot(a, b))
        }
    }
}

/// `a^{⊗s} − b^{⊗s} = Σ_k a^{⊗k} ⊗ (a − b) ⊗ b^{⊗(s−k−1)}`, which avoids the
/// cancellation of expanding the difference of two products.
fn telescope(a: &[Vec<f64>], b: &[Vec<f64>]) -> Vec<(f64, SliceTerm)> {
    let s = a.len();
    (0..s)
        .map(|k| {
            let factors = (0..s)
                .map(|i| match i.cmp(&k) {
                    std::cmp::Ordering::Less => a[i].clone(),
                    std::cmp::Ordering::Equal => {
                        a[i].iter().zip(&b[i]).map(|(x, y)| x - y).collect()
                    }
                    std::cmp::Ordering::Greater => b[i].clone(),
                })
                .collect();
            (1.0, SliceTerm::Product(factors))
        })
        .collect()
}

/// `‖Σ c_i x_i − Σ d_j y_j‖²` by bilinearity.
fn difference_squared(x: &[(f64, SliceTerm)], y: &[(f64, SliceTerm)]) -> Result<f64> {
    let mut terms: Vec<(f64, SliceTerm)> = Vec::new();
    let mut x: Vec<(f64, SliceTerm)> = x.to_vec();
    let mut y: Vec<(f64, SliceTerm)> = y.to_vec();
    // Pair up matching products first.
    if let (Some(i), Some(j)) = (
        x.iter().position(|t| matches!(t.1, SliceTerm::Product(_))),
        y.iter().position(|t| matches!(t.1, SliceTerm::Product(_))),
    ) {
        if let ((cx, SliceTerm::Product(a)), (cy, SliceTerm::Product(b))) = (&x[i], &y[j]) {
            let same_shape = a.len() == b.len() && a.iter().zip(b).all(|(u, v)| u.len() == v.len());
            if *cx == 1.0 && *cy == 1.0 && same_shape {
                terms.extend(telescope(a, b));
                x.remove(i);
                y.remove(j);
            }
        }
    }
    // Subtract matching explicit tensors directly.
    let mut rest_y = Vec::new();
    for (cy, ty) in y {
        let hit = x.iter().position(|(cx, tx)| match (tx, &ty) {
            (SliceTerm::Tensor(a), SliceTerm::Tensor(b)) => a.len() == b.len() && *cx == cy,
            _ => false,
        });
        match (hit, &ty) {
            (Some(i), SliceTerm::Tensor(b)) => {
                let (cx, tx) = x.remove(i);
                if let SliceTerm::Tensor(a) = tx {
                    let d = a.iter().zip(b).map(|(u, v)| u - v).collect();
                    terms.push((cx, SliceTerm::Tensor(d)));
                }
            }
            _ => rest_y.push((cy, ty)),
        }
    }
    terms.extend(x);
    terms.extend(rest_y.into_iter().map(|(c, t)| (-c, t)));
    let mut acc = 0.0;
    for (i, (ci, ti)) in terms.iter().enumerate() {
        acc += ci * ci * slice_inner(ti, ti)?;
        for (cj, tj) in &terms[i + 1..] {
            acc += 2.0 * ci * cj * slice_inner(ti, tj)?;
        }
    }
    Ok(acc.max(0.0))
}

impl HierarchyState {
    pub fn new(f0: f64, components: Vec<StateComponent>) -> Result<Self> {
        for (i, c) in components.iter().enumerate() {
            if c.particles() != i + 1 {
                return Err(Error::Shape(format!(
                    "component {} describes {} particles",
                    i + 1,
                    c.particles()
                )));
            }
        }
        Ok(HierarchyState { f0, components })
    }

    pub fn s_max(&self) -> usize {
        self.components.len()
    }

    fn time_window(&self) -> Option<(f64, f64, usize)> {
        self.components
            .iter()
            .flat_map(|c| c.tensors())
            .filter_map(|t| t.time_axis().map(|a| (a.start(), a.length(), a.modes())))
            .next()
    }

    /// Time nodes and weights normalized to average over the window.
    fn time_rule(&self, other: Option<&HierarchyState>, form: NormForm) -> Vec<(f64, f64)> {
        let windows: Vec<(f64, f64, usize)> = std::iter::once(self)
            .chain(other)
            .filter_map(|s| s.time_window())
            .collect();
        let Some(&(start, length, _)) = windows.first() else {
            return vec![(0.0, 1.0)];
        };
        match form {
            NormForm::FinalSlice => vec![(start + length, 1.0)],
            NormForm::Integrated => {
                let modes = windows.iter().map(|w| w.2).max().unwrap_or(1);
                let s = self.s_max().max(other.map_or(0, |o| o.s_max())).max(1);
                let (x, w) = gauss_legendre_on(s * modes + 1, start, start + length);
                x.into_iter().zip(w).map(|(t, w)| (t, w / length)).collect()
            }
        }
    }

    /// `sqrt(F_0² + Σ_s ‖F_s‖²)` in coefficient space.
    pub fn fock_norm(&self, form: NormForm) -> Result<f64> {
        let mut acc = self.f0 * self.f0;
        for (t, w) in self.time_rule(None, form) {
            for c in &self.components {
                acc += w * difference_squared(&c.slice(t)?, &[])?;
            }
        }
        Ok(acc.sqrt())
    }

    /// Fock norm of `self − other`; both must live on the same mode sets.
    pub fn fock_distance(&self, other: &HierarchyState, form: NormForm) -> Result<f64> {
        if self.s_max() != other.s_max() {
            return Err(Error::Shape("states truncated at different orders".into()));
        }
        if let (Some(a), Some(b)) = (self.time_window(), other.time_window()) {
            if (a.0 - b.0).abs() > 1e-12 || (a.1 - b.1).abs() > 1e-12 {
                return Err(Error::Shape("states on different time windows".into()));
            }
        }
        let d0 = self.f0 - other.f0;
        let mut acc = d0 * d0;
        for (t, w) in self.time_rule(Some(other), form) {
            for (a, b) in self.components.iter().zip(&other.components) {
                acc += w * difference_squared(&a.slice(t)?, &b.slice(t)?)?;
            }
        }
        Ok(acc.sqrt())
    }

    pub fn prolongate(&self, one_axes: &[AxisSpec], time: Option<&AxisSpec>) -> Result<Self> {
        Ok(HierarchyState {
            f0: self.f0,
            components: self
                .components
                .iter()
                .map(|c| c.prolongate(one_axes, time))
                .collect::<Result<_>>()?,
        })
    }
}

/// Periodized axes of a tensor's phase dimensions.
fn phase_axes(t: &CoefficientTensor) -> Result<Vec<crate::operator::PeriodicAxis>> {
    t.phase_axes().iter().map(AxisSpec::periodic).collect()
}

/// `(1/V^s) ∫ dμ_{s+1} Σ_{i ≤ s} L_{i,s+1} F_{s+1}`.
pub fn collision_term(
    h: &HamiltonianSpec,
    s: usize,
    next: &CoefficientTensor,
) -> Result<CoefficientTensor> {
    let phase = next.phase_axes();
    if phase.len() != 2 * (s + 1) {
        return Err(Error::Shape(format!(
            "collision term of order {s} needs {} phase axes, got {}",
            2 * (s + 1),
            phase.len()
        )));
    }
    let mut out_axes: Vec<AxisSpec> = next.axes().to_vec();
    out_axes.truncate(out_axes.len() - 2);
    if !h.has_pair() {
        return CoefficientTensor::zeros(out_axes, next.components());
    }
    let op = CompiledOperator::compile(&coupling_operator(h, s)?, &phase_axes(next)?)?;
    let single = next.single_scale()?;
    let block_in: usize = phase.iter().map(AxisSpec::modes).product();
    let block_out: usize = phase[..2 * s].iter().map(AxisSpec::modes).product();
    let scale = h.volume().powi(-(s as i32));
    let mut out = Vec::with_capacity(single.len() / block_in * block_out);
    for chunk in single.chunks(block_in) {
        out.extend(op.apply(chunk)?.into_iter().map(|v| v * scale));
    }
    CoefficientTensor::from_single_scale(out_axes, next.components(), out)
}

/// Largest `‖F − P_{ij} F‖₂` over particle transpositions.
pub fn exchange_asymmetry(t: &CoefficientTensor) -> Result<f64> {
    let phase = t.phase_axes();
    let particles = phase.len() / 2;
    let lead: usize = t.len() / phase.iter().map(AxisSpec::modes).product::<usize>();
    let m: Vec<usize> = (0..particles)
        .map(|i| phase[2 * i].modes() * phase[2 * i + 1].modes())
        .collect();
    if m.windows(2).any(|w| w[0] != w[1]) {
        return Err(Error::Shape("particles live on different mode sets".into()));
    }
    let m = m.first().copied().unwrap_or(1);
    let block = m.pow(particles as u32);
    let mut worst: f64 = 0.0;
    for i in 0..particles {
        for j in i + 1..particles {
            let mut acc = 0.0;
            for l in 0..lead {
                let base = l * block;
                for flat in 0..block {
                    let mut digits: Vec<usize> = (0..particles)
                        .map(|k| flat / m.pow((particles - 1 - k) as u32) % m)
                        .collect();
                    digits.swap(i, j);
                    let swapped = digits.iter().fold(0, |acc, d| acc * m + d);
                    let d = t.values()[base + flat] - t.values()[base + swapped];
                    acc += d * d;
                }
            }
            worst = worst.max(acc.sqrt());
        }
    }
    Ok(worst)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::solver::tensor::PhaseRole;

    fn axes(level: u32, particles: usize) -> Vec<AxisSpec> {
        (0..particles)
            .flat_map(|i| {
                [
                    AxisSpec::Phase {
                        role: PhaseRole::Position(i),
                        order: 2,
                        level,
                        start: 0.0,
                        length: 1.0,
                    },
                    AxisSpec::Phase {
                        role: PhaseRole::Momentum(i),
                        order: 2,
                        level,
                        start: -1.0,
                        length: 2.0,
                    },
                ]
            })
            .collect()
    }

    #[test]
    fn vacuum_has_unit_norm() {
        let z = CoefficientTensor::zeros(axes(2, 1), 1).unwrap();
        let s = HierarchyState::new(1.0, vec![StateComponent::Tensor(z)]).unwrap();
        assert_eq!(s.fock_norm(NormForm::Integrated).unwrap(), 1.0);
    }

    #[test]
    fn product_norm_is_power_of_one_particle_norm() {
        let v: Vec<f64> = (0..16).map(|i| (i as f64 * 0.3).sin()).collect();
        let one = CoefficientTensor::from_values(axes(2, 1), 1, v.clone()).unwrap();
        let n1: f64 = v.iter().map(|x| x * x).sum();
        let s = HierarchyState::new(
            0.0,
            vec![
                StateComponent::Tensor(one.clone()),
                StateComponent::Product {
                    one,
                    power: 2,
                    correlator: None,
                },
            ],
        )
        .unwrap();
        let expect = (n1 + n1 * n1).sqrt();
        assert!((s.fock_norm(NormForm::Integrated).unwrap() - expect).abs() < 1e-13);
    }

    #[test]
    fn product_with_correlator_matches_explicit_tensor() {
        let a: Vec<f64> = (0..16).map(|i| (i as f64 * 0.7).cos()).collect();
        let g: Vec<f64> = (0..256).map(|i| (i as f64 * 0.11).sin() * 0.1).collect();
        let one = CoefficientTensor::from_values(axes(2, 1), 1, a.clone()).unwrap();
        let corr = CoefficientTensor::from_values(axes(2, 2), 1, g.clone()).unwrap();
        let explicit: Vec<f64> = crate::operator::outer(&a, &a)
            .iter()
            .zip(&g)
            .map(|(x, y)| x + y)
            .collect();
        let f = CoefficientTensor::from_values(axes(2, 2), 1, explicit).unwrap();
        let one_t = StateComponent::Tensor(one.clone());
        let factored = HierarchyState::new(
            0.0,
            vec![
                one_t.clone(),
                StateComponent::Product {
                    one,
                    power: 2,
                    correlator: Some(corr),
                },
            ],
        )
        .unwrap();
        let direct = HierarchyState::new(0.0, vec![one_t, StateComponent::Tensor(f)]).unwrap();
        let a = factored.fock_norm(NormForm::Integrated).unwrap();
        let b = direct.fock_norm(NormForm::Integrated).unwrap();
        assert!((a - b).abs() < 1e-12 * b);
        assert!(
            factored
                .fock_distance(&direct, NormForm::Integrated)
                .unwrap()
                < 1e-6
        );
        assert_eq!(
            factored
                .fock_distance(&factored, NormForm::Integrated)
                .unwrap(),
            0.0
        );
    }

    #[test]
    fn exchange_asymmetry_of_outer_product_is_zero() {
        let a: Vec<f64> = (0..16).map(|i| (i as f64 * 0.7).cos()).collect();
        let b: Vec<f64> = (0..16).map(|i| (i as f64 * 0.2).sin()).collect();
        let sym =
            CoefficientTensor::from_values(axes(2, 2), 1, crate::operator::outer(&a, &a)).unwrap();
        assert_eq!(exchange_asymmetry(&sym).unwrap(), 0.0);
        let asym =
            CoefficientTensor::from_values(axes(2, 2), 1, crate::operator::outer(&a, &b)).unwrap();
        assert!(exchange_asymmetry(&asym).unwrap() > 0.1);
    }

    proptest::proptest! {
        #[test]
        fn norm_is_homogeneous_and_distance_is_a_metric(
            a in proptest::collection::vec(-5.0f64..5.0, 16),
            b in proptest::collection::vec(-5.0f64..5.0, 16),
            f0 in -2.0f64..2.0,
            lambda in -4.0f64..4.0,
        ) {
            let state = |v: &[f64], k: f64| {
                let t = CoefficientTensor::from_values(axes(2, 1), 1, v.iter().map(|x| k * x).collect()).unwrap();
                HierarchyState::new(k * f0, vec![StateComponent::Tensor(t)]).unwrap()
            };
            let (x, y) = (state(&a, 1.0), state(&b, 1.0));
            let n = x.fock_norm(NormForm::Integrated).unwrap();
            let scaled = state(&a, lambda).fock_norm(NormForm::Integrated).unwrap();
            proptest::prop_assert!(n >= 0.0);
            proptest::prop_assert!((scaled - lambda.abs() * n).abs() <= 1e-12 * (1.0 + scaled));
            let dxy = x.fock_distance(&y, NormForm::Integrated).unwrap();
            let dyx = y.fock_distance(&x, NormForm::Integrated).unwrap();
            proptest::prop_assert!((dxy - dyx).abs() <= 1e-12 * (1.0 + dxy));
            proptest::prop_assert_eq!(x.fock_distance(&x, NormForm::Integrated).unwrap(), 0.0);
            let ny = y.fock_norm(NormForm::Integrated).unwrap();
            // Triangle inequality through the zero state.
            let z = state(&a, 0.0);
            let nz = |s: &HierarchyState| s.fock_distance(&z, NormForm::Integrated).unwrap();
            proptest::prop_assert!(dxy <= nz(&x) + nz(&y) + 1e-12);
            proptest::prop_assert!((nz(&y) - ny).abs() <= 1e-12 * (1.0 + ny));
        }
    }
}
