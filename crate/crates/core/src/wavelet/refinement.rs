//! Point values of the scaling function from the refinement equation
//! `φ(x) = √2 Σ_k h_k φ(2x − k)`.
//!
//! The restriction of φ to the unit cells `[i, i+1)` is collected in the
//! vector `Φ(u) = (φ(u), φ(u+1), …, φ(u+2p−2))`, which satisfies
//! `Φ(u) = T_0 Φ(2u)` on `[0, ½)` and `Φ(u) = T_1 Φ(2u−1)` on `[½, 1)`.
//! Every finite binary expansion of `u` therefore yields φ exactly from the
//! integer-point values.

use crate::error::{Error, Result};
use crate::linalg::{null_vector, Dense};

use super::family::WaveletFamily;

/// Maximum number of cascade refinement levels.
pub const MAX_CASCADE_LEVELS: u32 = 30;

/// Subdivision data of a family: `T_0`, `T_1` and φ at the integers.
#[derive(Debug, Clone)]
pub struct Refinement {
    pub(crate) t0: Dense,
    pub(crate) t1: Dense,
    pub(crate) integer_values: Vec<f64>,
}

impl Refinement {
    pub fn new(family: &WaveletFamily) -> Result<Self> {
        let h = family.filter();
        let n = family.support_length();
        let coef = |k: i64| -> f64 {
            if k >= 0 && (k as usize) < h.len() {
                std::f64::consts::SQRT_2 * h[k as usize]
            } else {
                0.0
            }
        };
        let t0 = Dense::from_fn(n, n, |i, m| coef(2 * i as i64 - m as i64));
        let t1 = Dense::from_fn(n, n, |i, m| coef(2 * i as i64 + 1 - m as i64));

        let integer_values = if n == 1 {
            vec![1.0]
        } else {
            let mut a = t0.clone();
            for i in 0..n {
                a.add(i, i, -1.0);
            }
            null_vector(&a, &vec![1.0; n], 1.0)?
        };
        Ok(Refinement {
            t0,
            t1,
            integer_values,
        })
    }

    /// Number of unit cells covered by the support of φ.
    pub fn pieces(&self) -> usize {
        self.integer_values.len()
    }

    /// `Φ(u)` for `u ∈ [0, 1)`, exact up to rounding for any double `u`.
    pub fn cell_values(&self, u: f64) -> Vec<f64> {
        let mut digits = [0u8; 64];
        let mut count = 0;
        let mut w = u;
        while w != 0.0 && count < 64 {
            w *= 2.0;
            if w >= 1.0 {
                digits[count] = 1;
                w -= 1.0;
            }
            count += 1;
        }
        let mut v = self.integer_values.clone();
        for &d in digits[..count].iter().rev() {
            let t = if d == 0 { &self.t0 } else { &self.t1 };
            v = t.matvec(&v);
        }
        v
    }

    /// Product `T_{d_1} ⋯ T_{d_r}` for the `r`-digit binary word `word`
    /// (most significant digit first). It maps `Φ` on a sub-cell of width
    /// `2^{-r}` back to the coarse cell.
    pub(crate) fn word_matrix(&self, word: usize, r: u32) -> Dense {
        let mut p = Dense::identity(self.pieces());
        for b in 0..r {
            let d = (word >> (r - 1 - b)) & 1;
            p = p.matmul(if d == 0 { &self.t0 } else { &self.t1 });
        }
        p
    }
}

/// φ sampled on the dyadic grid `m / 2^r`, `0 ≤ m ≤ (2p−1)·2^r`.
#[derive(Debug, Clone)]
pub struct ScalingTable {
    pub resolution: u32,
    pub values: Vec<f64>,
}

impl ScalingTable {
    pub fn step(&self) -> f64 {
        (-(self.resolution as f64)).exp2()
    }

    /// φ at `m / 2^r`, zero outside the support.
    pub fn at(&self, m: i64) -> f64 {
        if m < 0 || m as usize >= self.values.len() {
            0.0
        } else {
            self.values[m as usize]
        }
    }
}

/// Cascade evaluation of φ on the dyadic grid of resolution `r`, seeded with
/// the integer-point eigenvector of the refinement matrix.
pub fn eval_scaling(family: &WaveletFamily, r: u32) -> Result<ScalingTable> {
    if r > MAX_CASCADE_LEVELS {
        return Err(Error::Internal(format!(
            "cascade resolution {r} exceeds the cap of {MAX_CASCADE_LEVELS} levels"
        )));
    }
    let support = family.support_length();
    if family.order() == 1 {
        // φ = 1 on [0, 1), right-continuous convention.
        let n = 1usize << r;
        let mut values = vec![1.0; n + 1];
        values[n] = 0.0;
        return Ok(ScalingTable {
            resolution: r,
            values,
        });
    }
    let refinement = Refinement::new(family)?;
    let mut values: Vec<f64> = refinement.integer_values.clone();
    values.push(0.0);
    let h = family.filter();
    for level in 1..=r {
        let half = 1i64 << (level - 1);
        let len = support * (1usize << level) + 1;
        let mut next = vec![0.0; len];
        for (m, slot) in next.iter_mut().enumerate() {
            let mut acc = 0.0;
            for (k, hk) in h.iter().enumerate() {
                let idx = m as i64 - k as i64 * half;
                if idx >= 0 && (idx as usize) < values.len() {
                    acc += hk * values[idx as usize];
                }
            }
            *slot = std::f64::consts::SQRT_2 * acc;
        }
        values = next;
    }
    Ok(ScalingTable {
        resolution: r,
        values,
    })
}

/// Pointwise evaluation of φ and ψ anywhere on the real line.
#[derive(Debug, Clone)]
pub struct PointEvaluator {
    refinement: Refinement,
    highpass: Vec<f64>,
}

impl PointEvaluator {
    pub fn new(family: &WaveletFamily) -> Result<Self> {
        Ok(PointEvaluator {
            refinement: Refinement::new(family)?,
            highpass: family.highpass(),
        })
    }

    pub fn scaling(&self, x: f64) -> f64 {
        let n = self.refinement.pieces();
        if !(0.0..n as f64).contains(&x) {
            return 0.0;
        }
        let cell = x.floor();
        let v = self.refinement.cell_values(x - cell);
        v[cell as usize]
    }

    pub fn wavelet(&self, x: f64) -> f64 {
        std::f64::consts::SQRT_2
            * self
                .highpass
                .iter()
                .enumerate()
                .map(|(k, g)| g * self.scaling(2.0 * x - k as f64))
                .sum::<f64>()
    }

    pub fn refinement(&self) -> &Refinement {
        &self.refinement
    }
}
