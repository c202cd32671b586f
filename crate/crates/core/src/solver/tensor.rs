//! Coefficient tensors of the N-mode ansatz in coarse-first multiscale order.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hierarchy::PhaseAxis;
use crate::operator::{strides, LegendreAxis, PeriodicAxis};
use crate::wavelet::{forward_transform, inverse_transform, make_family, BasisIndex, TensorIndex};

/// Metadata of one tensor axis.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum AxisSpec {
    /// Orthonormal Legendre modes on `[start, start + length]`.
    Time {
        modes: usize,
        start: f64,
        length: f64,
    },
    /// Periodized wavelet basis of order `order` at level `level`.
    Phase {
        role: PhaseRole,
        order: usize,
        level: u32,
        start: f64,
        length: f64,
    },
}

/// Serializable copy of [`PhaseAxis`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PhaseRole {
    Position(usize),
    Momentum(usize),
}

impl From<PhaseAxis> for PhaseRole {
    fn from(a: PhaseAxis) -> Self {
        match a {
            PhaseAxis::Position(i) => PhaseRole::Position(i),
            PhaseAxis::Momentum(i) => PhaseRole::Momentum(i),
        }
    }
}

impl From<PhaseRole> for PhaseAxis {
    fn from(a: PhaseRole) -> Self {
        match a {
            PhaseRole::Position(i) => PhaseAxis::Position(i),
            PhaseRole::Momentum(i) => PhaseAxis::Momentum(i),
        }
    }
}

impl AxisSpec {
    pub fn modes(&self) -> usize {
        match self {
            AxisSpec::Time { modes, .. } => *modes,
            AxisSpec::Phase { level, .. } => 1usize << level,
        }
    }

    pub fn is_time(&self) -> bool {
        matches!(self, AxisSpec::Time { .. })
    }

    pub fn interval(&self) -> (f64, f64) {
        match self {
            AxisSpec::Time { start, length, .. } | AxisSpec::Phase { start, length, .. } => {
                (*start, *length)
            }
        }
    }

    pub fn name(&self) -> String {
        match self {
            AxisSpec::Time { .. } => "t".into(),
            AxisSpec::Phase { role, .. } => PhaseAxis::from(*role).name(),
        }
    }

    /// Basis index of coarse-first position `pos`.
    pub fn basis_index(&self, pos: usize) -> BasisIndex {
        match self {
            AxisSpec::Time { .. } => BasisIndex::polynomial(pos),
            AxisSpec::Phase { .. } => BasisIndex::from_position(pos),
        }
    }

    pub fn periodic(&self) -> Result<PeriodicAxis> {
        match self {
            AxisSpec::Phase {
                order,
                level,
                start,
                length,
                ..
            } => PeriodicAxis::new(*order, *level, *start, *length),
            AxisSpec::Time { .. } => Err(Error::Shape("time axis is not periodized".into())),
        }
    }

    pub fn legendre(&self) -> Result<LegendreAxis> {
        match self {
            AxisSpec::Time {
                modes,
                start,
                length,
            } => LegendreAxis::new(*modes, *start, *length),
            AxisSpec::Phase { .. } => Err(Error::Shape("phase axis is not polynomial".into())),
        }
    }

    /// Same axis with `modes` modes (time) or level `log2 modes` (phase).
    pub fn with_modes(&self, modes: usize) -> Result<AxisSpec> {
        match self {
            AxisSpec::Time { start, length, .. } => Ok(AxisSpec::Time {
                modes,
                start: *start,
                length: *length,
            }),
            AxisSpec::Phase {
                role,
                order,
                start,
                length,
                ..
            } => {
                if !modes.is_power_of_two() {
                    return Err(Error::Shape(format!("{modes} modes is not a power of two")));
                }
                Ok(AxisSpec::Phase {
                    role: *role,
                    order: *order,
                    level: modes.trailing_zeros(),
                    start: *start,
                    length: *length,
                })
            }
        }
    }
}

/// Unknowns `a_{i0 i1 …}` of the ansatz, stored coarse-first on each phase
/// axis (the periodized transform is fully decomposed) and by Legendre
/// degree on the time axis. Layout is row-major with the component index
/// outermost.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoefficientTensor {
    axes: Vec<AxisSpec>,
    components: usize,
    values: Vec<f64>,
}

/// Applies `f` to every fiber along `axis` of a row-major tensor.
pub(crate) fn map_fibers<F>(values: &mut [f64], shape: &[usize], axis: usize, f: F) -> Result<()>
where
    F: Fn(&[f64]) -> Result<Vec<f64>>,
{
    let n = shape[axis];
    let inner: usize = shape[axis + 1..].iter().product();
    let outer: usize = values.len() / (n * inner).max(1);
    let mut fiber = vec![0.0; n];
    for o in 0..outer {
        for i in 0..inner {
            let base = o * n * inner + i;
            for k in 0..n {
                fiber[k] = values[base + k * inner];
            }
            let out = f(&fiber)?;
            for k in 0..n {
                values[base + k * inner] = out[k];
            }
        }
    }
    Ok(())
}

impl CoefficientTensor {
    pub fn zeros(axes: Vec<AxisSpec>, components: usize) -> Result<Self> {
        let size = Self::size_for(&axes, components)?;
        Ok(CoefficientTensor {
            axes,
            components,
            values: vec![0.0; size],
        })
    }

    fn size_for(axes: &[AxisSpec], components: usize) -> Result<usize> {
        if axes.is_empty() || components == 0 {
            return Err(Error::Shape(
                "a tensor needs at least one axis and component".into(),
            ));
        }
        let mut size = components;
        for a in axes {
            size = size
                .checked_mul(a.modes())
                .ok_or_else(|| Error::Capacity("tensor size overflows".into()))?;
        }
        if size > crate::wavelet::index::MAX_TENSOR_ENTRIES {
            return Err(Error::Capacity(format!("tensor with {size} coefficients")));
        }
        Ok(size)
    }

    /// Tensor from multiscale coefficients.
    pub fn from_values(axes: Vec<AxisSpec>, components: usize, values: Vec<f64>) -> Result<Self> {
        let size = Self::size_for(&axes, components)?;
        if values.len() != size {
            return Err(Error::Shape(format!(
                "expected {size} coefficients, got {}",
                values.len()
            )));
        }
        Ok(CoefficientTensor {
            axes,
            components,
            values,
        })
    }

    /// Tensor from single-scale (finest level scaling function) coefficients.
    pub fn from_single_scale(
        axes: Vec<AxisSpec>,
        components: usize,
        values: Vec<f64>,
    ) -> Result<Self> {
        let mut t = Self::from_values(axes, components, values)?;
        t.transform_phase_axes(true)?;
        Ok(t)
    }

    fn transform_phase_axes(&mut self, forward: bool) -> Result<()> {
        let shape = self.full_shape();
        for (i, axis) in self.axes.iter().enumerate() {
            if let AxisSpec::Phase { order, level, .. } = axis {
                if *level == 0 {
                    continue;
                }
                let family = make_family(*order)?;
                let level = *level;
                map_fibers(&mut self.values, &shape, i + 1, |f| {
                    if forward {
                        forward_transform(&family, f, level)
                    } else {
                        inverse_transform(&family, f, level)
                    }
                })?;
            }
        }
        Ok(())
    }

    /// Single-scale coefficients (inverse transform on every phase axis).
    pub fn single_scale(&self) -> Result<Vec<f64>> {
        let mut t = self.clone();
        t.transform_phase_axes(false)?;
        Ok(t.values)
    }

    pub fn axes(&self) -> &[AxisSpec] {
        &self.axes
    }

    pub fn components(&self) -> usize {
        self.components
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Modes per axis (without the component dimension).
    pub fn shape(&self) -> Vec<usize> {
        self.axes.iter().map(AxisSpec::modes).collect()
    }

    /// Shape including the leading component dimension.
    pub fn full_shape(&self) -> Vec<usize> {
        let mut s = vec![self.components];
        s.extend(self.shape());
        s
    }

    pub fn has_time_axis(&self) -> bool {
        self.axes.first().is_some_and(AxisSpec::is_time)
    }

    /// Tensor index of flat position `flat` (component dropped).
    pub fn index_of(&self, flat: usize) -> (usize, TensorIndex) {
        let shape = self.full_shape();
        let st = strides(&shape);
        let component = flat / st[0];
        let factors = self
            .axes
            .iter()
            .enumerate()
            .map(|(i, a)| a.basis_index((flat / st[i + 1]) % shape[i + 1]))
            .collect();
        (component, TensorIndex { factors })
    }

    /// Flat position of `(component, index)`.
    pub fn position_of(&self, component: usize, index: &TensorIndex) -> Result<usize> {
        if index.factors.len() != self.axes.len() || component >= self.components {
            return Err(Error::Shape(
                "tensor index does not match the tensor axes".into(),
            ));
        }
        let shape = self.full_shape();
        let st = strides(&shape);
        let mut flat = component * st[0];
        for (i, f) in index.factors.iter().enumerate() {
            let pos = f.position();
            if pos >= shape[i + 1] {
                return Err(Error::Shape(format!("position {pos} outside axis {i}")));
            }
            flat += pos * st[i + 1];
        }
        Ok(flat)
    }

    pub fn norm_squared(&self) -> f64 {
        self.values.iter().map(|v| v * v).sum()
    }

    pub fn scaled(&self, s: f64) -> Self {
        let mut out = self.clone();
        out.values.iter_mut().for_each(|v| *v *= s);
        out
    }

    /// Embeds into a larger mode set: coarse-first coefficients are copied
    /// and new positions are zero (exact MRA nesting).
    pub fn prolongate(&self, axes: Vec<AxisSpec>) -> Result<Self> {
        self.resize(axes, true)
    }

    /// Keeps the coefficients inside a smaller mode set.
    pub fn restrict(&self, axes: Vec<AxisSpec>) -> Result<Self> {
        self.resize(axes, false)
    }

    fn resize(&self, axes: Vec<AxisSpec>, grow: bool) -> Result<Self> {
        if axes.len() != self.axes.len() {
            return Err(Error::Shape("axis count differs".into()));
        }
        for (a, b) in axes.iter().zip(&self.axes) {
            let ok = if grow {
                a.modes() >= b.modes()
            } else {
                a.modes() <= b.modes()
            };
            if !ok || a.is_time() != b.is_time() {
                return Err(Error::Shape("incompatible mode sets".into()));
            }
        }
        let mut out = CoefficientTensor::zeros(axes, self.components)?;
        let src_shape = self.full_shape();
        let dst_shape = out.full_shape();
        let src_st = strides(&src_shape);
        let dst_st = strides(&dst_shape);
        let common: Vec<usize> = src_shape
            .iter()
            .zip(&dst_shape)
            .map(|(a, b)| *a.min(b))
            .collect();
        let total: usize = common.iter().product();
        let mut idx = vec![0usize; common.len()];
        for _ in 0..total {
            let s: usize = idx.iter().zip(&src_st).map(|(i, st)| i * st).sum();
            let d: usize = idx.iter().zip(&dst_st).map(|(i, st)| i * st).sum();
            out.values[d] = self.values[s];
            for k in (0..idx.len()).rev() {
                idx[k] += 1;
                if idx[k] < common[k] {
                    break;
                }
                idx[k] = 0;
            }
        }
        Ok(out)
    }

    /// All tensor indices in storage order.
    pub fn indices(&self) -> Vec<TensorIndex> {
        (0..self.len() / self.components)
            .map(|f| self.index_of(f).1)
            .collect()
    }

    /// Axes other than the time axis.
    pub fn phase_axes(&self) -> &[AxisSpec] {
        if self.has_time_axis() {
            &self.axes[1..]
        } else {
            &self.axes
        }
    }

    pub fn time_axis(&self) -> Option<LegendreAxis> {
        self.axes.first().and_then(|a| a.legendre().ok())
    }

    /// Phase-space coefficients at time `t`; a copy when there is no time axis.
    pub fn time_slice(&self, t: f64) -> Result<CoefficientTensor> {
        let Some(time) = self.time_axis() else {
            return Ok(self.clone());
        };
        let a = time.values_at(t);
        let nt = a.len();
        let block: usize = self.phase_axes().iter().map(AxisSpec::modes).product();
        let mut values = vec![0.0; self.components * block];
        for c in 0..self.components {
            let dst = &mut values[c * block..(c + 1) * block];
            for (i, ai) in a.iter().enumerate() {
                let src = &self.values[(c * nt + i) * block..(c * nt + i + 1) * block];
                for (d, s) in dst.iter_mut().zip(src) {
                    *d += ai * s;
                }
            }
        }
        CoefficientTensor::from_values(self.phase_axes().to_vec(), self.components, values)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn phase(role: PhaseRole, level: u32) -> AxisSpec {
        AxisSpec::Phase {
            role,
            order: 2,
            level,
            start: 0.0,
            length: 1.0,
        }
    }

    #[test]
    fn prolongate_then_restrict_is_identity() {
        let axes = vec![
            phase(PhaseRole::Position(0), 2),
            phase(PhaseRole::Momentum(0), 3),
        ];
        let values: Vec<f64> = (0..32).map(|v| (v as f64).sin()).collect();
        let t = CoefficientTensor::from_values(axes.clone(), 1, values).unwrap();
        let fine = vec![
            phase(PhaseRole::Position(0), 4),
            phase(PhaseRole::Momentum(0), 4),
        ];
        let up = t.prolongate(fine).unwrap();
        assert_eq!(up.norm_squared(), t.norm_squared());
        let back = up.restrict(axes).unwrap();
        assert_eq!(back, t);
    }

    #[test]
    fn single_scale_round_trip() {
        let axes = vec![
            AxisSpec::Time {
                modes: 3,
                start: 0.0,
                length: 1.0,
            },
            phase(PhaseRole::Position(0), 3),
        ];
        let values: Vec<f64> = (0..24).map(|v| (v as f64 * 0.37).cos()).collect();
        let t = CoefficientTensor::from_single_scale(axes, 1, values.clone()).unwrap();
        let back = t.single_scale().unwrap();
        for (a, b) in back.iter().zip(&values) {
            assert!((a - b).abs() < 1e-13);
        }
    }

    #[test]
    fn index_round_trip() {
        let axes = vec![
            phase(PhaseRole::Position(0), 2),
            phase(PhaseRole::Momentum(0), 2),
        ];
        let t = CoefficientTensor::zeros(axes, 1).unwrap();
        for flat in 0..t.len() {
            let (c, idx) = t.index_of(flat);
            assert_eq!(t.position_of(c, &idx).unwrap(), flat);
        }
    }
}
