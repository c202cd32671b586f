//! Basis and tensor indices for coarse-first multiscale storage.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Largest number of tensor entries any enumeration or tensor may hold.
pub const MAX_TENSOR_ENTRIES: usize = 1 << 26;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BasisKind {
    Scaling,
    Wavelet,
    /// Orthonormal Legendre polynomial on a finite interval; `shift` holds
    /// the degree.
    Polynomial,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct BasisIndex {
    pub level: u32,
    pub shift: usize,
    pub kind: BasisKind,
}

impl BasisIndex {
    /// Index of coarse-first position `pos` on a periodized axis decomposed
    /// down to a single coarse scaling function.
    pub fn from_position(pos: usize) -> Self {
        if pos == 0 {
            BasisIndex {
                level: 0,
                shift: 0,
                kind: BasisKind::Scaling,
            }
        } else {
            let level = usize::BITS - 1 - pos.leading_zeros();
            BasisIndex {
                level,
                shift: pos - (1usize << level),
                kind: BasisKind::Wavelet,
            }
        }
    }

    pub fn polynomial(degree: usize) -> Self {
        BasisIndex {
            level: super::transform::band_of(degree),
            shift: degree,
            kind: BasisKind::Polynomial,
        }
    }

    /// Inverse of [`from_position`](Self::from_position).
    pub fn position(&self) -> usize {
        match self.kind {
            BasisKind::Scaling => self.shift,
            BasisKind::Wavelet => (1usize << self.level) + self.shift,
            BasisKind::Polynomial => self.shift,
        }
    }
}

/// One basis index per axis.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct TensorIndex {
    pub factors: Vec<BasisIndex>,
}

/// `N^axes`, or a capacity error.
pub fn tensor_size(axes: usize, n: usize) -> Result<usize> {
    let size = u32::try_from(axes)
        .ok()
        .and_then(|a| n.checked_pow(a))
        .ok_or_else(|| Error::Capacity(format!("{n}^{axes} overflows the index space")))?;
    if size > MAX_TENSOR_ENTRIES {
        return Err(Error::Capacity(format!(
            "{n}^{axes} = {size} entries exceeds the limit of {MAX_TENSOR_ENTRIES}"
        )));
    }
    Ok(size)
}

/// All tensor indices of an `axes`-fold product of `n`-mode coarse-first
/// mode sets, in lexicographic order (last axis fastest).
pub fn tensor_enumerate(axes: usize, n: usize) -> Result<Vec<TensorIndex>> {
    if axes == 0 || n == 0 {
        return Err(Error::Shape(
            "tensor enumeration needs axes ≥ 1 and N ≥ 1".into(),
        ));
    }
    let size = tensor_size(axes, n)?;
    let mut out = Vec::with_capacity(size);
    let mut digits = vec![0usize; axes];
    for _ in 0..size {
        out.push(TensorIndex {
            factors: digits
                .iter()
                .map(|&d| BasisIndex::from_position(d))
                .collect(),
        });
        for d in digits.iter_mut().rev() {
            *d += 1;
            if *d < n {
                break;
            }
            *d = 0;
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sizes() {
        assert_eq!(tensor_enumerate(1, 3).unwrap().len(), 3);
        assert_eq!(tensor_enumerate(3, 4).unwrap().len(), 64);
        let one = tensor_enumerate(2, 1).unwrap();
        assert_eq!(one.len(), 1);
        assert!(one[0].factors.iter().all(|f| f.kind == BasisKind::Scaling));
    }

    #[test]
    fn lexicographic() {
        let idx = tensor_enumerate(2, 3).unwrap();
        let pos: Vec<(usize, usize)> = idx
            .iter()
            .map(|t| (t.factors[0].position(), t.factors[1].position()))
            .collect();
        let mut sorted = pos.clone();
        sorted.sort();
        assert_eq!(pos, sorted);
    }

    #[test]
    fn overflow_is_capacity_error() {
        assert!(matches!(
            tensor_enumerate(40, 1 << 20),
            Err(Error::Capacity(_))
        ));
        assert!(matches!(
            tensor_enumerate(4, 1 << 10),
            Err(Error::Capacity(_))
        ));
    }

    #[test]
    fn position_round_trip() {
        for pos in 0..300 {
            assert_eq!(BasisIndex::from_position(pos).position(), pos);
        }
    }
}
