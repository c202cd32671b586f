//! Daubechies orthonormal filter banks.
//!
//! The low-pass filter of order `p` is obtained by spectral factorization of
//! the half-band polynomial `P(y) = Σ_{k<p} C(p-1+k, k) y^k`, `y = sin²(ω/2)`.
//! Every root `y_k` maps to a reciprocal pair `z, 1/z`; the member inside the
//! unit disk is kept (minimal phase), so the construction is deterministic.

use num_complex::Complex64;

use crate::error::{Error, Result};

/// Largest supported number of vanishing moments.
pub const MAX_ORDER: usize = 10;

/// A compactly supported orthonormal wavelet family (Daubechies, order `p`).
#[derive(Debug, Clone, PartialEq)]
pub struct WaveletFamily {
    order: usize,
    filter: Vec<f64>,
}

impl WaveletFamily {
    /// Number of vanishing moments `p`.
    pub fn order(&self) -> usize {
        self.order
    }

    /// Low-pass coefficients `h_0 … h_{2p-1}`.
    pub fn filter(&self) -> &[f64] {
        &self.filter
    }

    /// Length of the support of φ, `2p - 1`.
    pub fn support_length(&self) -> usize {
        2 * self.order - 1
    }

    pub fn filter_len(&self) -> usize {
        self.filter.len()
    }

    /// High-pass coefficients `g_k = (-1)^k h_{2p-1-k}`.
    pub fn highpass(&self) -> Vec<f64> {
        let n = self.filter.len();
        (0..n)
            .map(|k| {
                let s = if k % 2 == 0 { 1.0 } else { -1.0 };
                s * self.filter[n - 1 - k]
            })
            .collect()
    }

    /// Autocorrelation `a_n = Σ_k h_k h_{k+n}` for `|n| < 2p`.
    pub(crate) fn autocorrelation(&self, n: i64) -> f64 {
        let len = self.filter.len() as i64;
        if n.abs() >= len {
            return 0.0;
        }
        (0..len)
            .filter(|k| (0..len).contains(&(k + n)))
            .map(|k| self.filter[k as usize] * self.filter[(k + n) as usize])
            .sum()
    }
}

/// Builds the Daubechies family with `order` vanishing moments.
pub fn make_family(order: usize) -> Result<WaveletFamily> {
    if order == 0 || order > MAX_ORDER {
        return Err(Error::UnsupportedOrder(order));
    }
    if order == 1 {
        let h = std::f64::consts::FRAC_1_SQRT_2;
        return Ok(WaveletFamily {
            order,
            filter: vec![h, h],
        });
    }

    let half_band: Vec<f64> = (0..order).map(|k| binomial(order - 1 + k, k)).collect();
    let y_roots = polynomial_roots(&half_band)?;

    // (1 + z)^p · Π (z - z_k), ascending powers of z.
    let mut poly = vec![Complex64::new(1.0, 0.0)];
    for _ in 0..order {
        poly = poly_mul(&poly, &[Complex64::new(1.0, 0.0), Complex64::new(1.0, 0.0)]);
    }
    for y in y_roots {
        // z + 1/z = 2 - 4y
        let b = Complex64::new(2.0, 0.0) - 4.0 * y;
        let disc = (b * b - 4.0).sqrt();
        let z1 = (b + disc) / 2.0;
        let z2 = (b - disc) / 2.0;
        let z = if z1.norm() < z2.norm() { z1 } else { z2 };
        poly = poly_mul(&poly, &[-z, Complex64::new(1.0, 0.0)]);
    }

    let mut filter: Vec<f64> = poly.iter().rev().map(|c| c.re).collect();
    let sum: f64 = filter.iter().sum();
    let scale = std::f64::consts::SQRT_2 / sum;
    filter.iter_mut().for_each(|h| *h *= scale);
    Ok(WaveletFamily { order, filter })
}

fn binomial(n: usize, k: usize) -> f64 {
    let mut acc = 1.0;
    for i in 0..k {
        acc = acc * (n - i) as f64 / (i + 1) as f64;
    }
    acc.round()
}

fn poly_mul(a: &[Complex64], b: &[Complex64]) -> Vec<Complex64> {
    let mut out = vec![Complex64::new(0.0, 0.0); a.len() + b.len() - 1];
    for (i, x) in a.iter().enumerate() {
        for (j, y) in b.iter().enumerate() {
            out[i + j] += x * y;
        }
    }
    out
}

fn poly_eval(coeffs: &[f64], x: Complex64) -> (Complex64, Complex64) {
    // Horner for value and derivative.
    let mut p = Complex64::new(0.0, 0.0);
    let mut dp = Complex64::new(0.0, 0.0);
    for &c in coeffs.iter().rev() {
        dp = dp * x + p;
        p = p * x + c;
    }
    (p, dp)
}

/// Roots of a real polynomial given in ascending coefficients, by
/// Weierstrass (Durand–Kerner) iteration followed by Newton polishing.
pub(crate) fn polynomial_roots(coeffs: &[f64]) -> Result<Vec<Complex64>> {
    let degree = coeffs.len() - 1;
    if degree == 0 {
        return Ok(Vec::new());
    }
    let lead = coeffs[degree];
    let monic: Vec<f64> = coeffs.iter().map(|c| c / lead).collect();

    // Classic distinct, non-symmetric starting points.
    let seed = Complex64::new(0.4, 0.9);
    let mut roots: Vec<Complex64> = (0..degree).map(|k| seed.powu(k as u32)).collect();

    let mut converged = false;
    for _ in 0..2000 {
        let mut delta_max = 0.0_f64;
        for i in 0..degree {
            let (value, _) = poly_eval(&monic, roots[i]);
            let mut denom = Complex64::new(1.0, 0.0);
            for j in 0..degree {
                if i != j {
                    denom *= roots[i] - roots[j];
                }
            }
            let step = value / denom;
            roots[i] -= step;
            delta_max = delta_max.max(step.norm());
        }
        if delta_max < 1e-15 {
            converged = true;
            break;
        }
    }
    if !converged {
        return Err(Error::Internal(
            "root iteration for the half-band polynomial did not converge".into(),
        ));
    }
    for root in roots.iter_mut() {
        for _ in 0..3 {
            let (p, dp) = poly_eval(&monic, *root);
            if dp.norm() == 0.0 {
                break;
            }
            *root -= p / dp;
        }
    }
    Ok(roots)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_orders_outside_range() {
        assert!(matches!(make_family(0), Err(Error::UnsupportedOrder(0))));
        assert!(matches!(make_family(11), Err(Error::UnsupportedOrder(11))));
    }

    #[test]
    fn haar_filter() {
        let f = make_family(1).unwrap();
        let h = std::f64::consts::FRAC_1_SQRT_2;
        assert_eq!(f.filter(), &[h, h]);
        assert_eq!(f.support_length(), 1);
    }

    #[test]
    fn d4_closed_form() {
        let f = make_family(2).unwrap();
        let s3 = 3f64.sqrt();
        let d = 4.0 * 2f64.sqrt();
        let expected = [
            (1.0 + s3) / d,
            (3.0 + s3) / d,
            (3.0 - s3) / d,
            (1.0 - s3) / d,
        ];
        for (a, b) in f.filter().iter().zip(expected) {
            assert!((a - b).abs() < 1e-14, "{a} vs {b}");
        }
    }

    #[test]
    fn roots_of_quadratic() {
        // x^2 - 3x + 2
        let mut r = polynomial_roots(&[2.0, -3.0, 1.0]).unwrap();
        r.sort_by(|a, b| a.re.partial_cmp(&b.re).unwrap());
        assert!((r[0].re - 1.0).abs() < 1e-14 && r[0].im.abs() < 1e-14);
        assert!((r[1].re - 2.0).abs() < 1e-14);
    }

    #[test]
    fn every_supported_order_is_orthonormal() {
        for p in 1..=MAX_ORDER {
            let f = make_family(p).unwrap();
            let h = f.filter();
            assert_eq!(h.len(), 2 * p);
            let s: f64 = h.iter().sum();
            assert!((s - std::f64::consts::SQRT_2).abs() < 1e-12, "p={p}");
            for m in 0..p {
                let dot: f64 = (0..h.len() - 2 * m).map(|k| h[k] * h[k + 2 * m]).sum();
                let target = if m == 0 { 1.0 } else { 0.0 };
                assert!((dot - target).abs() < 1e-12, "p={p} m={m} dot={dot}");
            }
        }
    }

    #[test]
    fn highpass_kills_low_degree_polynomials() {
        for p in 1..=MAX_ORDER {
            let f = make_family(p).unwrap();
            let g = f.highpass();
            for m in 0..p {
                let moment: f64 = g
                    .iter()
                    .enumerate()
                    .map(|(k, gk)| gk * (k as f64).powi(m as i32))
                    .sum();
                let scale: f64 = g
                    .iter()
                    .enumerate()
                    .map(|(k, gk)| (gk * (k as f64).powi(m as i32)).abs())
                    .sum();
                assert!(
                    moment.abs() <= 1e-12 * scale.max(1.0),
                    "p={p} m={m} {moment}"
                );
            }
        }
    }
}
