//! Periodized orthonormal discrete wavelet transform.
//!
//! Output layout is coarse first: `[a_J | d_J | d_{J-1} | … | d_1]`, where the
//! coarsest approximation block has length `len / 2^J` and each detail block
//! doubles in length.

use crate::error::{Error, Result};

use super::family::WaveletFamily;

fn check_length(len: usize, levels: u32) -> Result<()> {
    if levels >= usize::BITS || len == 0 || len % (1usize << levels) != 0 {
        return Err(Error::Shape(format!(
            "length {len} is not divisible by 2^{levels}"
        )));
    }
    Ok(())
}

fn analysis_step(h: &[f64], g: &[f64], input: &[f64], approx: &mut [f64], detail: &mut [f64]) {
    let len = input.len();
    let half = len / 2;
    for k in 0..half {
        let mut a = 0.0;
        let mut d = 0.0;
        for (n, (hn, gn)) in h.iter().zip(g).enumerate() {
            let x = input[(2 * k + n) % len];
            a += hn * x;
            d += gn * x;
        }
        approx[k] = a;
        detail[k] = d;
    }
}

fn synthesis_step(h: &[f64], g: &[f64], approx: &[f64], detail: &[f64], out: &mut [f64]) {
    let len = out.len();
    out.iter_mut().for_each(|v| *v = 0.0);
    for k in 0..approx.len() {
        let (a, d) = (approx[k], detail[k]);
        for (n, (hn, gn)) in h.iter().zip(g).enumerate() {
            out[(2 * k + n) % len] += hn * a + gn * d;
        }
    }
}

/// Forward transform over `levels` levels.
pub fn forward_transform(family: &WaveletFamily, input: &[f64], levels: u32) -> Result<Vec<f64>> {
    check_length(input.len(), levels)?;
    let h = family.filter();
    let g = family.highpass();
    let mut out = input.to_vec();
    let mut work = vec![0.0; input.len()];
    let mut len = input.len();
    for _ in 0..levels {
        let half = len / 2;
        let (a, d) = work[..len].split_at_mut(half);
        analysis_step(h, &g, &out[..len], a, d);
        out[..len].copy_from_slice(&work[..len]);
        len = half;
    }
    Ok(out)
}

/// Inverse of [`forward_transform`].
pub fn inverse_transform(family: &WaveletFamily, coeffs: &[f64], levels: u32) -> Result<Vec<f64>> {
    check_length(coeffs.len(), levels)?;
    let h = family.filter();
    let g = family.highpass();
    let mut out = coeffs.to_vec();
    let mut work = vec![0.0; coeffs.len()];
    let mut len = coeffs.len() >> levels;
    for _ in 0..levels {
        let full = 2 * len;
        synthesis_step(h, &g, &out[..len], &out[len..full], &mut work[..full]);
        out[..full].copy_from_slice(&work[..full]);
        len = full;
    }
    Ok(out)
}

/// Multiscale ("band") of a coarse-first position on an axis fully
/// decomposed to a single coarse coefficient: 0 for the coarse scaling
/// function, `j + 1` for wavelet level `j`.
pub fn band_of(position: usize) -> u32 {
    if position == 0 {
        0
    } else {
        usize::BITS - position.leading_zeros()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::wavelet::family::make_family;
    use rand::{Rng, SeedableRng};

    #[test]
    fn haar_constant() {
        let f = make_family(1).unwrap();
        let out = forward_transform(&f, &[1.0; 4], 2).unwrap();
        assert!((out[0] - 2.0).abs() < 1e-15);
        assert!(out[1..].iter().all(|v| v.abs() < 1e-15));
    }

    #[test]
    fn zero_in_zero_out() {
        let f = make_family(3).unwrap();
        let out = forward_transform(&f, &[0.0; 32], 5).unwrap();
        assert!(out.iter().all(|v| *v == 0.0));
    }

    #[test]
    fn rejects_bad_length() {
        let f = make_family(2).unwrap();
        assert!(matches!(
            forward_transform(&f, &[0.0; 12], 3),
            Err(Error::Shape(_))
        ));
    }

    #[test]
    fn d4_round_trip_and_parseval() {
        let f = make_family(2).unwrap();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
        let x: Vec<f64> = (0..64).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let y = forward_transform(&f, &x, 3).unwrap();
        let z = inverse_transform(&f, &y, 3).unwrap();
        for (a, b) in x.iter().zip(&z) {
            assert!((a - b).abs() < 1e-13);
        }
        let ex: f64 = x.iter().map(|v| v * v).sum();
        let ey: f64 = y.iter().map(|v| v * v).sum();
        assert!((ex - ey).abs() < 1e-12 * ex);
    }

    #[test]
    fn bands() {
        assert_eq!(band_of(0), 0);
        assert_eq!(band_of(1), 1);
        assert_eq!(band_of(2), 2);
        assert_eq!(band_of(3), 2);
        assert_eq!(band_of(4), 3);
        assert_eq!(band_of(7), 3);
    }

    proptest::proptest! {
        #[test]
        fn round_trip_and_parseval_hold_for_any_input(
            order in 1usize..=10,
            bits in 1u32..=8,
            seed in 0u64..1000,
        ) {
            let f = make_family(order).unwrap();
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let len = 1usize << bits;
            let levels = rng.gen_range(1..=bits);
            let x: Vec<f64> = (0..len).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let y = forward_transform(&f, &x, levels).unwrap();
            let z = inverse_transform(&f, &y, levels).unwrap();
            for (a, b) in x.iter().zip(&z) {
                proptest::prop_assert!((a - b).abs() < 1e-12);
            }
            let ex: f64 = x.iter().map(|v| v * v).sum();
            let ey: f64 = y.iter().map(|v| v * v).sum();
            proptest::prop_assert!((ex - ey).abs() <= 1e-12 * ex.max(1e-300));
        }
    }
}
