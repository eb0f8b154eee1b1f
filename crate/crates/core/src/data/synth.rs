use std::f64::consts::TAU;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{Component, DataError, WindGrid};

pub const LOW_HEIGHT_M: f32 = 60.0;
pub const HIGH_HEIGHT_M: f32 = 160.0;
/// Power-law wind-shear exponent linking the two heights.
pub const SHEAR_EXPONENT: f64 = 0.14;

/// Knobs of the synthetic generator.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SynthParams {
    pub modes: usize,
    /// Largest spatial frequency, in cycles per field extent.
    pub max_freq: f64,
    /// Reference amplitude in m/s; mode `k` gets `~amplitude / (1 + |f_k|)`.
    pub amplitude: f64,
    /// Uniform background wind added to the lower field, m/s.
    pub mean_wind: f64,
    pub perturbation_modes: usize,
    pub perturbation_max_freq: f64,
    /// RMS of the upper-field perturbation relative to the sheared field.
    pub perturbation_rms: f64,
}

impl Default for SynthParams {
    fn default() -> Self {
        Self {
            modes: 12,
            max_freq: 6.0,
            amplitude: 6.0,
            mean_wind: 0.0,
            perturbation_modes: 6,
            perturbation_max_freq: 3.0,
            perturbation_rms: 0.08,
        }
    }
}

struct Mode {
    amp: f64,
    fy: f64,
    fx: f64,
    phase: f64,
}

fn draw_modes(rng: &mut ChaCha8Rng, n: usize, max_freq: f64, amplitude: f64) -> Vec<Mode> {
    (0..n)
        .map(|_| {
            // Rejection sampling gives a frequency uniform on the disc |f| ≤ max_freq.
            let (fy, fx) = loop {
                let fy = rng.gen_range(-max_freq..=max_freq);
                let fx = rng.gen_range(-max_freq..=max_freq);
                if fy * fy + fx * fx <= max_freq * max_freq {
                    break (fy, fx);
                }
            };
            let radius = (fy * fy + fx * fx).sqrt();
            let amp = amplitude * rng.gen_range(0.5..1.5) / (1.0 + radius);
            Mode { amp, fy, fx, phase: rng.gen_range(0.0..TAU) }
        })
        .collect()
}

fn render(modes: &[Mode], h: usize, w: usize) -> Vec<f64> {
    let mut out = vec![0.0; h * w];
    for i in 0..h {
        let y = (i as f64 + 0.5) / h as f64;
        for j in 0..w {
            let x = (j as f64 + 0.5) / w as f64;
            out[i * w + j] = modes.iter().map(|m| m.amp * (TAU * (m.fy * y + m.fx * x) + m.phase).sin()).sum();
        }
    }
    out
}

fn rms(v: &[f64]) -> f64 {
    (v.iter().map(|x| x * x).sum::<f64>() / v.len() as f64).sqrt()
}

/// Paired synthetic wind fields at 60 m and 160 m.
///
/// The lower field is a sum of random sinusoids; the upper field is the
/// lower one scaled by the shear factor `(160/60)^0.14` plus an independent
/// smooth perturbation. Same seed, same pair.
pub fn synth_wind(seed: u64, h: usize, w: usize) -> Result<(WindGrid, WindGrid), DataError> {
    synth_wind_with(seed, h, w, &SynthParams::default())
}

pub fn synth_wind_with(seed: u64, h: usize, w: usize, p: &SynthParams) -> Result<(WindGrid, WindGrid), DataError> {
    if h < 8 || w < 8 {
        return Err(DataError::Shape(format!("synthetic fields need at least 8×8, got {h}×{w}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let base = draw_modes(&mut rng, p.modes, p.max_freq, p.amplitude);
    let pert = draw_modes(&mut rng, p.perturbation_modes, p.perturbation_max_freq, 1.0);

    let low: Vec<f64> = render(&base, h, w).into_iter().map(|v| v + p.mean_wind).collect();
    let shear = (HIGH_HEIGHT_M as f64 / LOW_HEIGHT_M as f64).powf(SHEAR_EXPONENT);
    let sheared: Vec<f64> = low.iter().map(|v| v * shear).collect();
    let noise = render(&pert, h, w);
    let k = p.perturbation_rms * rms(&sheared) / rms(&noise).max(1e-12);
    let high: Vec<f32> = sheared.iter().zip(&noise).map(|(s, n)| (s + k * n) as f32).collect();

    let low = WindGrid::new(1, h, w, low.into_iter().map(|v| v as f32).collect(), LOW_HEIGHT_M, Component::U)?;
    let high = WindGrid::new(1, h, w, high, HIGH_HEIGHT_M, Component::U)?;
    Ok((low, high))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn correlation(a: &[f32], b: &[f32]) -> f64 {
        let n = a.len() as f64;
        let ma = a.iter().map(|&v| v as f64).sum::<f64>() / n;
        let mb = b.iter().map(|&v| v as f64).sum::<f64>() / n;
        let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
        for (&x, &y) in a.iter().zip(b) {
            let (dx, dy) = (x as f64 - ma, y as f64 - mb);
            sab += dx * dy;
            saa += dx * dx;
            sbb += dy * dy;
        }
        sab / (saa * sbb).sqrt()
    }

    #[test]
    fn same_seed_same_pair() {
        assert_eq!(synth_wind(5, 30, 40).unwrap(), synth_wind(5, 30, 40).unwrap());
        assert_ne!(synth_wind(5, 30, 40).unwrap().0, synth_wind(6, 30, 40).unwrap().0);
    }

    #[test]
    fn metadata() {
        let (a, b) = synth_wind(0, 8, 8).unwrap();
        assert_eq!((a.height_m(), b.height_m()), (60.0, 160.0));
        assert_eq!(a.dims(), (1, 8, 8));
        assert!(synth_wind(0, 7, 8).is_err());
    }

    #[test]
    fn modalities_are_strongly_correlated() {
        for seed in 0..10 {
            let (a, b) = synth_wind(seed, 150, 200).unwrap();
            let r = correlation(a.values(), b.values());
            assert!(r > 0.9, "seed {seed}: r = {r}");
        }
    }

    #[test]
    fn magnitude_ratio_follows_shear_law() {
        let expected = (160.0f64 / 60.0).powf(0.14);
        assert!((expected - 1.147).abs() < 1e-3);
        for seed in 0..10 {
            let (a, b) = synth_wind(seed, 150, 200).unwrap();
            let mean_abs = |g: &WindGrid| g.values().iter().map(|v| v.abs() as f64).sum::<f64>() / g.values().len() as f64;
            let ratio = mean_abs(&b) / mean_abs(&a);
            assert!((ratio - expected).abs() < 0.05, "seed {seed}: ratio {ratio}");
        }
    }

    #[test]
    fn perturbation_is_small() {
        let (a, b) = synth_wind(3, 60, 80).unwrap();
        let shear = (160.0f64 / 60.0).powf(0.14);
        let d: Vec<f64> = a.values().iter().zip(b.values()).map(|(x, y)| *y as f64 - shear * *x as f64).collect();
        let s: Vec<f64> = a.values().iter().map(|x| shear * *x as f64).collect();
        assert!(rms(&d) <= 0.1 * rms(&s));
    }
}
