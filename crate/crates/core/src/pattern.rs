//! Energy distribution over scales and modes, and regime classification.
//!
//! Scale index convention: bucket 0 holds the pure scaling modes, bucket
//! `l + 1` holds modes whose finest wavelet level over the phase axes is `l`.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::solver::{AxisSpec, CoefficientTensor};
use crate::wavelet::{BasisIndex, BasisKind};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScaleSpectrum {
    /// Phase axes the mode fractions refer to.
    pub axes: Vec<AxisSpec>,
    pub total_energy: f64,
    /// Fractions are all zero when set.
    pub zero_energy: bool,
    /// Per-scale fractions `e_j`.
    pub levels: Vec<f64>,
    /// Per-mode fractions over the phase modes in storage order.
    pub modes: Vec<f64>,
}

/// Scale bucket of one phase-mode index.
pub fn scale_bucket(factors: &[BasisIndex]) -> usize {
    factors
        .iter()
        .filter(|b| b.kind == BasisKind::Wavelet)
        .map(|b| b.level as usize + 1)
        .max()
        .unwrap_or(0)
}

fn phase_indices(axes: &[AxisSpec]) -> Vec<Vec<BasisIndex>> {
    let shape: Vec<usize> = axes.iter().map(AxisSpec::modes).collect();
    let total: usize = shape.iter().product();
    let mut out = Vec::with_capacity(total);
    let mut idx = vec![0usize; shape.len()];
    for _ in 0..total {
        out.push(
            idx.iter()
                .zip(axes)
                .map(|(&i, a)| a.basis_index(i))
                .collect(),
        );
        for k in (0..idx.len()).rev() {
            idx[k] += 1;
            if idx[k] < shape[k] {
                break;
            }
            idx[k] = 0;
        }
    }
    out
}

fn finest_level(axes: &[AxisSpec]) -> usize {
    axes.iter()
        .map(|a| a.modes().trailing_zeros() as usize)
        .max()
        .unwrap_or(0)
}

impl ScaleSpectrum {
    /// Spectrum from raw per-mode energies over the phase modes of `axes`.
    pub fn from_energies(axes: Vec<AxisSpec>, energies: Vec<f64>) -> Result<Self> {
        if axes.iter().any(AxisSpec::is_time) {
            return Err(Error::Shape("spectrum axes must be phase axes".into()));
        }
        let count: usize = axes.iter().map(AxisSpec::modes).product();
        if energies.len() != count {
            return Err(Error::Shape(format!(
                "{} mode energies for {count} modes",
                energies.len()
            )));
        }
        if energies.iter().any(|e| !e.is_finite() || *e < 0.0) {
            return Err(Error::Config("mode energies must be finite and nonnegative".into()));
        }
        let total: f64 = energies.iter().sum();
        let mut levels = vec![0.0; finest_level(&axes) + 1];
        if total <= 0.0 {
            return Ok(ScaleSpectrum {
                axes,
                total_energy: 0.0,
                zero_energy: true,
                levels,
                modes: vec![0.0; count],
            });
        }
        let modes: Vec<f64> = energies.iter().map(|e| e / total).collect();
        for (f, idx) in modes.iter().zip(phase_indices(&axes)) {
            levels[scale_bucket(&idx)] += f;
        }
        Ok(ScaleSpectrum {
            axes,
            total_energy: total,
            zero_energy: false,
            levels,
            modes,
        })
    }

    pub fn mode_count(&self) -> usize {
        self.modes.len()
    }

    /// `1 / Σ f_m²`; zero for a zero-energy spectrum.
    pub fn participation_ratio(&self) -> f64 {
        let s: f64 = self.modes.iter().map(|f| f * f).sum();
        if s > 0.0 {
            1.0 / s
        } else {
            0.0
        }
    }

    /// `−Σ f_m ln f_m`.
    pub fn entropy(&self) -> f64 {
        -self
            .modes
            .iter()
            .filter(|&&f| f > 0.0)
            .map(|f| f * f.ln())
            .sum::<f64>()
    }

    /// Bucket with the largest fraction (lowest on ties).
    pub fn dominant_level(&self) -> usize {
        let mut best = 0;
        for (j, &e) in self.levels.iter().enumerate() {
            if e > self.levels[best] {
                best = j;
            }
        }
        best
    }

    /// Largest single-mode fraction.
    pub fn dominant_fraction(&self) -> f64 {
        self.modes.iter().copied().fold(0.0, f64::max)
    }

    /// Smallest set of modes, largest first, whose fractions reach `cover`.
    pub fn dominant_set(&self, cover: f64) -> Vec<usize> {
        let mut order: Vec<usize> = (0..self.modes.len()).collect();
        order.sort_by(|&a, &b| self.modes[b].total_cmp(&self.modes[a]).then(a.cmp(&b)));
        let mut acc = 0.0;
        let mut out = Vec::new();
        for m in order {
            if acc >= cover || self.modes[m] <= 0.0 {
                break;
            }
            acc += self.modes[m];
            out.push(m);
        }
        out
    }

    /// Spread of the energy in the dominant scale bucket, in translation
    /// cells of that bucket: the circular standard deviation of the mode
    /// centres along each phase axis, maximised over axes. A factor that is
    /// a scaling function spans the whole period and adds weight without
    /// direction.
    pub fn localization_length(&self) -> f64 {
        if self.zero_energy {
            return 0.0;
        }
        let dom = self.dominant_level();
        if dom == 0 {
            return 0.0;
        }
        let cells = (1usize << (dom - 1)) as f64;
        let indices = phase_indices(&self.axes);
        let mut worst: f64 = 0.0;
        for a in 0..self.axes.len() {
            let (mut w, mut c, mut s) = (0.0, 0.0, 0.0);
            for (f, idx) in self.modes.iter().zip(&indices) {
                if *f == 0.0 || scale_bucket(idx) != dom {
                    continue;
                }
                w += f;
                let b = idx[a];
                if b.kind == BasisKind::Wavelet {
                    let x = (b.shift as f64 + 0.5) / (1usize << b.level) as f64;
                    let th = std::f64::consts::TAU * x;
                    c += f * th.cos();
                    s += f * th.sin();
                }
            }
            if w == 0.0 {
                continue;
            }
            let r = ((c * c + s * s).sqrt() / w).min(1.0);
            let spread = if r <= 0.0 {
                f64::INFINITY
            } else {
                (-2.0 * r.ln()).sqrt() * cells / std::f64::consts::TAU
            };
            worst = worst.max(spread.min(cells));
        }
        worst
    }
}

/// Energy per phase mode summed over components and time modes (the time
/// basis is orthonormal, so this is the time-integrated energy).
pub fn scale_spectrum(t: &CoefficientTensor) -> Result<ScaleSpectrum> {
    let phase: usize = t.phase_axes().iter().map(AxisSpec::modes).product();
    let mut energies = vec![0.0; phase];
    for (k, v) in t.values().iter().enumerate() {
        energies[k % phase] += v * v;
    }
    ScaleSpectrum::from_energies(t.phase_axes().to_vec(), energies)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimeResolvedSpectrum {
    pub times: Vec<f64>,
    pub slices: Vec<ScaleSpectrum>,
}

impl TimeResolvedSpectrum {
    pub fn from_slices(times: Vec<f64>, tensors: &[CoefficientTensor]) -> Result<Self> {
        if times.len() != tensors.len() {
            return Err(Error::Shape("one time per slice expected".into()));
        }
        let slices = tensors
            .iter()
            .map(scale_spectrum)
            .collect::<Result<Vec<_>>>()?;
        if slices.windows(2).any(|w| w[0].axes != w[1].axes) {
            return Err(Error::Shape("slices have different axes".into()));
        }
        Ok(TimeResolvedSpectrum { times, slices })
    }

    /// `count` slices of a space-time tensor at equally spaced instants,
    /// window endpoints included. A tensor without a time axis gives a
    /// single slice.
    pub fn sample(t: &CoefficientTensor, count: usize) -> Result<Self> {
        let Some(axis) = t.axes().first().filter(|a| a.is_time()) else {
            return Self::from_slices(vec![0.0], std::slice::from_ref(t));
        };
        let (start, length) = axis.interval();
        let times: Vec<f64> = match count {
            0 => return Err(Error::Config("at least one slice is needed".into())),
            1 => vec![start],
            _ => (0..count)
                .map(|i| start + length * i as f64 / (count - 1) as f64)
                .collect(),
        };
        let tensors = times
            .iter()
            .map(|&x| t.time_slice(x))
            .collect::<Result<Vec<_>>>()?;
        Self::from_slices(times, &tensors)
    }

    /// Mean of the per-slice fractions over slices with energy.
    pub fn mean(&self) -> Result<ScaleSpectrum> {
        let first = self
            .slices
            .first()
            .ok_or_else(|| Error::Config("no slices".into()))?;
        let live: Vec<&ScaleSpectrum> = self.slices.iter().filter(|s| !s.zero_energy).collect();
        if live.is_empty() {
            return Ok(first.clone());
        }
        let k = live.len() as f64;
        let avg = |f: fn(&ScaleSpectrum) -> &Vec<f64>| -> Vec<f64> {
            let mut out = vec![0.0; f(live[0]).len()];
            for s in &live {
                for (o, v) in out.iter_mut().zip(f(s)) {
                    *o += v / k;
                }
            }
            out
        };
        Ok(ScaleSpectrum {
            axes: first.axes.clone(),
            total_energy: live.iter().map(|s| s.total_energy).sum::<f64>() / k,
            zero_energy: false,
            levels: avg(|s| &s.levels),
            modes: avg(|s| &s.modes),
        })
    }

    /// `max_t |E_D(t) − E_D(0)| / E_D(0)` with `D` the dominant set of the
    /// first slice. `None` with fewer than two slices.
    pub fn stability(&self, cover: f64) -> Option<f64> {
        if self.slices.len() < 2 || self.slices[0].zero_energy {
            return None;
        }
        let set = self.slices[0].dominant_set(cover);
        let energy = |s: &ScaleSpectrum| set.iter().map(|&m| s.modes[m]).sum::<f64>();
        let e0 = energy(&self.slices[0]);
        Some(
            self.slices[1..]
                .iter()
                .map(|s| (energy(s) - e0).abs() / e0)
                .fold(0.0, f64::max),
        )
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Thresholds {
    pub pr_localized: f64,
    pub pr_few: f64,
    /// Localization limit in translation cells at the dominant level.
    pub localization_max: f64,
    pub stability_max: f64,
    pub entropy_factor: f64,
    pub dominant_fraction: f64,
    /// Energy share that defines the dominant-mode set for stability.
    pub dominant_cover: f64,
}

impl Default for Thresholds {
    fn default() -> Self {
        Thresholds {
            pr_localized: 2.0,
            pr_few: 6.0,
            localization_max: 4.0,
            stability_max: 0.1,
            entropy_factor: 0.8,
            dominant_fraction: 0.9,
            dominant_cover: 0.9,
        }
    }
}

impl Thresholds {
    pub fn validate(&self) -> Result<()> {
        let pos = [
            ("pr_localized", self.pr_localized),
            ("pr_few", self.pr_few),
            ("localization_max", self.localization_max),
            ("stability_max", self.stability_max),
        ];
        for (name, v) in pos {
            if !v.is_finite() || v < 0.0 {
                return Err(Error::Config(format!("threshold {name} must be finite and >= 0")));
            }
        }
        let unit = [
            ("entropy_factor", self.entropy_factor),
            ("dominant_fraction", self.dominant_fraction),
            ("dominant_cover", self.dominant_cover),
        ];
        for (name, v) in unit {
            if !(v > 0.0 && v <= 1.0) {
                return Err(Error::Config(format!("threshold {name} must lie in (0, 1]")));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PatternLabel {
    LocalizedEigenmode,
    ChaoticLike,
    Waveleton,
    Unclassified,
}

impl PatternLabel {
    pub fn as_str(&self) -> &'static str {
        match self {
            PatternLabel::LocalizedEigenmode => "localized_eigenmode",
            PatternLabel::ChaoticLike => "chaotic_like",
            PatternLabel::Waveleton => "waveleton",
            PatternLabel::Unclassified => "unclassified",
        }
    }
}

impl fmt::Display for PatternLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for PatternLabel {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        [
            PatternLabel::LocalizedEigenmode,
            PatternLabel::ChaoticLike,
            PatternLabel::Waveleton,
            PatternLabel::Unclassified,
        ]
        .into_iter()
        .find(|l| l.as_str() == s)
        .ok_or_else(|| Error::Config(format!("unknown pattern label {s:?}")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PatternReport {
    pub modes: usize,
    pub slices: usize,
    pub zero_energy: bool,
    pub participation_ratio: f64,
    pub entropy: f64,
    pub dominant_fraction: f64,
    pub dominant_level: usize,
    pub localization_length: f64,
    /// `None` when fewer than two slices are available.
    pub stability: Option<f64>,
    pub label: PatternLabel,
    pub thresholds: Thresholds,
    /// Slice-averaged per-scale fractions.
    pub levels: Vec<f64>,
}

impl PatternReport {
    /// `key = value` lines; floats with 17 significant digits.
    pub fn to_key_value(&self) -> String {
        let g = |v: f64| format!("{v:.16e}");
        let t = &self.thresholds;
        let mut lines = vec![
            format!("label = {}", self.label),
            format!("modes = {}", self.modes),
            format!("slices = {}", self.slices),
            format!("zero_energy = {}", self.zero_energy),
            format!("participation_ratio = {}", g(self.participation_ratio)),
            format!("entropy = {}", g(self.entropy)),
            format!("max_entropy = {}", g((self.modes.max(1) as f64).ln())),
            format!("dominant_fraction = {}", g(self.dominant_fraction)),
            format!("dominant_level = {}", self.dominant_level),
            format!("localization_length = {}", g(self.localization_length)),
            format!(
                "stability = {}",
                self.stability.map_or("undefined".to_string(), g)
            ),
            format!("threshold.pr_localized = {}", g(t.pr_localized)),
            format!("threshold.pr_few = {}", g(t.pr_few)),
            format!("threshold.localization_max = {}", g(t.localization_max)),
            format!("threshold.stability_max = {}", g(t.stability_max)),
            format!("threshold.entropy_factor = {}", g(t.entropy_factor)),
            format!("threshold.dominant_fraction = {}", g(t.dominant_fraction)),
            format!("threshold.dominant_cover = {}", g(t.dominant_cover)),
        ];
        for (j, e) in self.levels.iter().enumerate() {
            lines.push(format!("level_fraction.{j} = {}", g(*e)));
        }
        lines.join("\n") + "\n"
    }
}

/// Label from slice-averaged fractions and the dominant-set drift. Rules
/// are tried in the order localized, chaotic, waveleton.
pub fn classify(series: &TimeResolvedSpectrum, thresholds: &Thresholds) -> Result<PatternReport> {
    thresholds.validate()?;
    let mean = series.mean()?;
    let modes = mean.mode_count();
    let stability = series.stability(thresholds.dominant_cover);
    let pr = mean.participation_ratio();
    let h = mean.entropy();
    let dominant = mean.dominant_fraction();
    let ell = mean.localization_length();
    let label = if mean.zero_energy {
        PatternLabel::Unclassified
    } else if pr <= thresholds.pr_localized && dominant >= thresholds.dominant_fraction {
        PatternLabel::LocalizedEigenmode
    } else if modes > 1 && h >= thresholds.entropy_factor * (modes as f64).ln() {
        PatternLabel::ChaoticLike
    } else if stability.is_some_and(|s| s <= thresholds.stability_max)
        && pr <= thresholds.pr_few
        && ell <= thresholds.localization_max
    {
        PatternLabel::Waveleton
    } else {
        PatternLabel::Unclassified
    };
    Ok(PatternReport {
        modes,
        slices: series.slices.len(),
        zero_energy: mean.zero_energy,
        participation_ratio: pr,
        entropy: h,
        dominant_fraction: dominant,
        dominant_level: mean.dominant_level(),
        localization_length: ell,
        stability,
        label,
        thresholds: thresholds.clone(),
        levels: mean.levels,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::solver::PhaseRole;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};

    fn axes(level: u32) -> Vec<AxisSpec> {
        vec![
            AxisSpec::Phase {
                role: PhaseRole::Position(0),
                order: 2,
                level,
                start: 0.0,
                length: 1.0,
            },
            AxisSpec::Phase {
                role: PhaseRole::Momentum(0),
                order: 2,
                level,
                start: -1.0,
                length: 2.0,
            },
        ]
    }

    fn tensor(level: u32, values: Vec<f64>) -> CoefficientTensor {
        CoefficientTensor::from_values(axes(level), 1, values).unwrap()
    }

    fn pos(level: u32, a: BasisIndex, b: BasisIndex) -> usize {
        a.position() * (1usize << level) + b.position()
    }

    fn wav(level: u32, shift: usize) -> BasisIndex {
        BasisIndex {
            level,
            shift,
            kind: BasisKind::Wavelet,
        }
    }

    fn constant_series(t: &CoefficientTensor, n: usize) -> TimeResolvedSpectrum {
        TimeResolvedSpectrum::from_slices((0..n).map(|i| i as f64).collect(), &vec![t.clone(); n])
            .unwrap()
    }

    #[test]
    fn single_mode_fills_its_level() {
        let mut v = vec![0.0; 64];
        v[pos(3, wav(1, 1), wav(2, 3))] = -3.0;
        let s = scale_spectrum(&tensor(3, v)).unwrap();
        assert_eq!(s.levels.len(), 4);
        assert_eq!(s.levels[3], 1.0);
        assert_eq!(s.levels.iter().sum::<f64>(), 1.0);
        assert_eq!(s.participation_ratio(), 1.0);
    }

    #[test]
    fn equal_magnitudes_give_uniform_fractions() {
        let v: Vec<f64> = (0..64).map(|i| if i % 2 == 0 { 0.5 } else { -0.5 }).collect();
        let s = scale_spectrum(&tensor(3, v)).unwrap();
        for f in &s.modes {
            assert!((f - 1.0 / 64.0).abs() < 1e-15);
        }
        assert!((s.participation_ratio() - 64.0).abs() < 1e-10);
        assert!((s.entropy() - 64f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn level_fractions_match_direct_summation() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(5);
        let v: Vec<f64> = (0..256).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let t = tensor(4, v.clone());
        let s = scale_spectrum(&t).unwrap();
        let total: f64 = v.iter().map(|x| x * x).sum();
        for j in 0..5 {
            let mut e = 0.0;
            for q in 0..16usize {
                for p in 0..16usize {
                    let lq = if q == 0 { 0 } else { q.ilog2() as usize + 1 };
                    let lp = if p == 0 { 0 } else { p.ilog2() as usize + 1 };
                    if lq.max(lp) == j {
                        e += v[q * 16 + p].powi(2);
                    }
                }
            }
            assert!((s.levels[j] - e / total).abs() < 1e-12);
        }
    }

    #[test]
    fn zero_tensor_is_flagged() {
        let s = scale_spectrum(&tensor(2, vec![0.0; 16])).unwrap();
        assert!(s.zero_energy);
        let r = classify(&constant_series(&tensor(2, vec![0.0; 16]), 3), &Thresholds::default())
            .unwrap();
        assert_eq!(r.label, PatternLabel::Unclassified);
    }

    #[test]
    fn one_stable_mode_is_localized() {
        let mut v = vec![0.0; 64];
        v[pos(3, wav(2, 1), wav(2, 2))] = 1.0;
        let r = classify(&constant_series(&tensor(3, v), 4), &Thresholds::default()).unwrap();
        assert_eq!(r.label, PatternLabel::LocalizedEigenmode);
        assert_eq!(r.localization_length, 0.0);
    }

    fn normal_coefficients(rng: &mut rand_chacha::ChaCha8Rng, n: usize) -> Vec<f64> {
        (0..n)
            .map(|_| {
                // Box-Muller.
                let (a, b): (f64, f64) = (rng.gen(), rng.gen());
                (-2.0 * (1.0 - a).ln()).sqrt() * (std::f64::consts::TAU * b).cos()
            })
            .collect()
    }

    #[test]
    fn random_broadband_is_chaotic() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        let v = normal_coefficients(&mut rng, 256);
        let r = classify(&constant_series(&tensor(4, v), 2), &Thresholds::default()).unwrap();
        assert_eq!(r.label, PatternLabel::ChaoticLike);
        // Sampling oracle for the mean entropy of squared-Gaussian weights.
        let draws = 400;
        let mean: f64 = (0..draws)
            .map(|_| {
                let v = normal_coefficients(&mut rng, 256);
                scale_spectrum(&tensor(4, v)).unwrap().entropy()
            })
            .sum::<f64>()
            / draws as f64;
        // Large-M limit ln M − E[w ln w] for w ~ χ²₁: ψ(3/2) + ln 2.
        let gap = 0.036_489_973_978_576_52 + std::f64::consts::LN_2;
        assert!((mean - (256f64.ln() - gap)).abs() < 0.03, "{mean}");
        assert!((r.entropy - mean).abs() < 0.2);
    }

    #[test]
    fn three_neighbours_are_a_waveleton() {
        let mut v = vec![0.0; 256];
        for (s, e) in [(4usize, 0.5f64), (5, 0.3), (6, 0.2)] {
            v[pos(4, wav(3, s), wav(3, 2))] = e.sqrt();
        }
        let r = classify(&constant_series(&tensor(4, v), 3), &Thresholds::default()).unwrap();
        assert_eq!(r.stability, Some(0.0));
        assert!(r.localization_length < 1.0, "{}", r.localization_length);
        assert_eq!(r.label, PatternLabel::Waveleton);
    }

    #[test]
    fn single_slice_cannot_be_a_waveleton() {
        let mut v = vec![0.0; 256];
        for (s, e) in [(4usize, 0.5f64), (5, 0.3), (6, 0.2)] {
            v[pos(4, wav(3, s), wav(3, 2))] = e.sqrt();
        }
        let r = classify(&constant_series(&tensor(4, v), 1), &Thresholds::default()).unwrap();
        assert_eq!(r.stability, None);
        assert_eq!(r.label, PatternLabel::Unclassified);
    }

    #[test]
    fn drifting_energy_is_not_stable() {
        let mut a = vec![0.0; 64];
        let mut b = vec![0.0; 64];
        a[pos(3, wav(2, 0), wav(2, 0))] = 0.8;
        a[pos(3, wav(2, 1), wav(2, 0))] = 0.6;
        b[pos(3, wav(2, 1), wav(2, 0))] = 0.8;
        b[pos(3, wav(2, 2), wav(2, 0))] = 0.6;
        let s = TimeResolvedSpectrum::from_slices(vec![0.0, 1.0], &[tensor(3, a), tensor(3, b)])
            .unwrap();
        // Both modes form the dominant set; 0.64 of it survives.
        assert!((s.stability(0.9).unwrap() - 0.36).abs() < 1e-12);
        let r = classify(&s, &Thresholds::default()).unwrap();
        assert_eq!(r.label, PatternLabel::Unclassified);
    }

    #[test]
    fn localization_depends_on_translation_layout() {
        let near = {
            let mut v = vec![0.0; 256];
            v[pos(4, wav(3, 0), wav(3, 0))] = 1.0;
            v[pos(4, wav(3, 1), wav(3, 0))] = 1.0;
            v
        };
        let far = {
            let mut v = vec![0.0; 256];
            v[pos(4, wav(3, 0), wav(3, 0))] = 1.0;
            v[pos(4, wav(3, 4), wav(3, 0))] = 1.0;
            v
        };
        let a = scale_spectrum(&tensor(4, near)).unwrap();
        let b = scale_spectrum(&tensor(4, far)).unwrap();
        assert_eq!(a.participation_ratio(), b.participation_ratio());
        assert_eq!(a.entropy(), b.entropy());
        assert!(a.localization_length() < 1.0);
        assert_eq!(b.localization_length(), 8.0);
    }

    #[test]
    fn space_time_sampling_uses_window_endpoints() {
        let t = AxisSpec::Time {
            modes: 3,
            start: 1.0,
            length: 2.0,
        };
        let mut ax = vec![t];
        ax.extend(axes(2));
        let mut v = vec![0.0; 48];
        v[5] = 1.0;
        let ct = CoefficientTensor::from_values(ax, 1, v).unwrap();
        let s = TimeResolvedSpectrum::sample(&ct, 3).unwrap();
        assert_eq!(s.times, vec![1.0, 2.0, 3.0]);
        assert_eq!(s.slices[1].modes[5], 1.0);
    }

    #[test]
    fn label_round_trips_through_text() {
        for l in [
            PatternLabel::LocalizedEigenmode,
            PatternLabel::ChaoticLike,
            PatternLabel::Waveleton,
            PatternLabel::Unclassified,
        ] {
            assert_eq!(l.to_string().parse::<PatternLabel>().unwrap(), l);
        }
    }

    proptest! {
        #[test]
        fn fractions_are_scale_invariant(
            v in prop::collection::vec(-1.0f64..1.0, 64),
            e in -3i32..=3,
        ) {
            prop_assume!(v.iter().any(|x| x.abs() > 1e-3));
            let c = 10f64.powi(e);
            let a = scale_spectrum(&tensor(3, v.clone())).unwrap();
            let b = scale_spectrum(&tensor(3, v.iter().map(|x| x * c).collect())).unwrap();
            for (x, y) in a.levels.iter().zip(&b.levels) {
                prop_assert!((x - y).abs() <= 1e-12);
            }
            let s = a.levels.iter().sum::<f64>();
            prop_assert!((s - 1.0).abs() <= 1e-12);
            let th = Thresholds::default();
            let ra = classify(&constant_series(&tensor(3, v.clone()), 2), &th).unwrap();
            let rb = classify(
                &constant_series(&tensor(3, v.iter().map(|x| x * c).collect()), 2),
                &th,
            )
            .unwrap();
            prop_assert_eq!(ra.label, rb.label);
        }

        #[test]
        fn pr_and_entropy_are_bounded_and_permutation_invariant(
            v in prop::collection::vec(-1.0f64..1.0, 64),
            seed in 0u64..1000,
        ) {
            prop_assume!(v.iter().any(|x| x.abs() > 1e-3));
            let a = scale_spectrum(&tensor(3, v.clone())).unwrap();
            let mut w = v.clone();
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            for i in (1..w.len()).rev() {
                w.swap(i, rng.gen_range(0..=i));
            }
            let b = scale_spectrum(&tensor(3, w)).unwrap();
            let (pr, h) = (a.participation_ratio(), a.entropy());
            prop_assert!(pr >= 1.0 - 1e-12 && pr <= 64.0 + 1e-9);
            prop_assert!(h >= -1e-12 && h <= 64f64.ln() + 1e-12);
            prop_assert!((pr - b.participation_ratio()).abs() <= 1e-9 * pr);
            prop_assert!((h - b.entropy()).abs() <= 1e-12);
        }
    }
}
