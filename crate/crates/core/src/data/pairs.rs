use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{bicubic_resize, DataError, Modality, WindGrid};

pub const MIN_SCALE: f64 = 1.0;
pub const MAX_SCALE: f64 = 3.25;

/// A high-resolution input with its super-resolution target.
#[derive(Clone, Debug, PartialEq)]
pub struct SamplePair {
    pub hr: WindGrid,
    pub sr: WindGrid,
    pub scale: f64,
    pub modality: Modality,
    /// Top-left corner of the crop in the source field, for training pairs.
    pub crop_origin: Option<(usize, usize)>,
}

/// Target extents `(round(s·h), round(s·w))`.
pub fn scaled_dims(h: usize, w: usize, s: f64) -> (usize, usize) {
    ((s * h as f64).round() as usize, (s * w as f64).round() as usize)
}

fn check_scale(s: f64) -> Result<(), DataError> {
    if (MIN_SCALE..=MAX_SCALE).contains(&s) {
        Ok(())
    } else {
        Err(DataError::Scale(s))
    }
}

/// Random crop of `full` at the target size, then bicubic down to the
/// input size. The crop offset depends only on `seed` and the extents, so
/// both modalities of one sample crop the same window.
pub fn make_train_pair(
    full: &WindGrid,
    modality: Modality,
    hr_dims: (usize, usize),
    s: f64,
    seed: u64,
) -> Result<SamplePair, DataError> {
    check_scale(s)?;
    let (sh, sw) = scaled_dims(hr_dims.0, hr_dims.1, s);
    let (fh, fw) = (full.height(), full.width());
    if sh > fh || sw > fw {
        return Err(DataError::CropTooLarge { crop: (sh, sw), source_dims: (fh, fw) });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let y0 = rng.gen_range(0..=fh - sh);
    let x0 = rng.gen_range(0..=fw - sw);
    let sr = full.crop(y0, x0, sh, sw)?;
    let hr = bicubic_resize(&sr, hr_dims.0, hr_dims.1)?;
    Ok(SamplePair { hr, sr, scale: s, modality, crop_origin: Some((y0, x0)) })
}

/// Both halves resampled from the whole field; no randomness.
pub fn make_test_pair(
    full: &WindGrid,
    modality: Modality,
    hr_dims: (usize, usize),
    s: f64,
) -> Result<SamplePair, DataError> {
    check_scale(s)?;
    let (sh, sw) = scaled_dims(hr_dims.0, hr_dims.1, s);
    let sr = bicubic_resize(full, sh, sw)?;
    let hr = bicubic_resize(full, hr_dims.0, hr_dims.1)?;
    Ok(SamplePair { hr, sr, scale: s, modality, crop_origin: None })
}

#[cfg(test)]
mod tests {
    use statrs::distribution::{ChiSquared, ContinuousCDF};

    use super::*;
    use crate::data::{synth_wind, Component};

    fn field(h: usize, w: usize) -> WindGrid {
        WindGrid::new(1, h, w, (0..h * w).map(|i| (i % 97) as f32 * 0.1).collect(), 60.0, Component::U).unwrap()
    }

    #[test]
    fn full_scale_dims() {
        assert_eq!(scaled_dims(480, 640, 1.5), (720, 960));
        assert_eq!(scaled_dims(480, 640, 3.125), (1500, 2000));
        assert_eq!(scaled_dims(48, 64, 3.25), (156, 208));
    }

    #[test]
    fn unit_scale_pair_is_identity() {
        let (full, _) = synth_wind(1, 150, 200).unwrap();
        let p = make_train_pair(&full, Modality::M0, (48, 64), 1.0, 9).unwrap();
        assert_eq!(p.hr, p.sr);
        assert_eq!(p.sr.dims(), (1, 48, 64));
    }

    #[test]
    fn train_pair_crops_then_downsamples() {
        let full = field(150, 200);
        let p = make_train_pair(&full, Modality::M1, (48, 64), 2.0, 3).unwrap();
        assert_eq!(p.sr.dims(), (1, 96, 128));
        assert_eq!(p.hr.dims(), (1, 48, 64));
        let (y0, x0) = p.crop_origin.unwrap();
        assert_eq!(p.sr, full.crop(y0, x0, 96, 128).unwrap());
        assert_eq!(p.hr, bicubic_resize(&p.sr, 48, 64).unwrap());
        assert_eq!(p, make_train_pair(&full, Modality::M1, (48, 64), 2.0, 3).unwrap());
    }

    #[test]
    fn desk_scale_rejects_oversize_crop() {
        let full = field(150, 200);
        assert!(matches!(
            make_train_pair(&full, Modality::M0, (48, 64), 3.25, 0),
            Err(DataError::CropTooLarge { crop: (156, 208), .. })
        ));
        assert!(make_train_pair(&full, Modality::M0, (48, 64), 3.0, 0).is_ok());
        assert!(matches!(make_train_pair(&full, Modality::M0, (48, 64), 0.5, 0), Err(DataError::Scale(_))));
    }

    #[test]
    fn test_pair_is_deterministic_and_exact_at_full_dims() {
        let full = field(150, 200);
        let p = make_test_pair(&full, Modality::M0, (48, 64), 2.5).unwrap();
        assert_eq!(p, make_test_pair(&full, Modality::M0, (48, 64), 2.5).unwrap());
        assert_eq!(p.sr.dims(), (1, 120, 160));
        let q = make_test_pair(&full, Modality::M0, (60, 80), 2.5).unwrap();
        assert_eq!(q.sr, full);
    }

    #[test]
    fn crop_offsets_are_uniform() {
        // Source 110×130 with a 96×128 crop leaves 15 row and 3 column offsets.
        let full = field(110, 130);
        let (rows, cols) = (15usize, 3usize);
        let mut counts = vec![0usize; rows * cols];
        let n = 1000;
        for seed in 0..n {
            let (y0, x0) = make_train_pair(&full, Modality::M0, (48, 64), 2.0, seed).unwrap().crop_origin.unwrap();
            counts[y0 * cols + x0] += 1;
        }
        assert!(counts.iter().all(|&c| c > 0), "every offset reached");
        let expected = n as f64 / counts.len() as f64;
        let chi2: f64 = counts.iter().map(|&c| (c as f64 - expected).powi(2) / expected).sum();
        let p = 1.0 - ChiSquared::new((counts.len() - 1) as f64).unwrap().cdf(chi2);
        assert!(p > 0.01, "chi2 {chi2}, p {p}");
    }
}
