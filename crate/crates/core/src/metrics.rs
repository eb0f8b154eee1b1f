//! Reconstruction quality: MSE, PSNR and SSIM, plus the evaluation sweep.

use std::fmt;
use std::io::Write;

use thiserror::Error;

use crate::data::{bicubic_resize, make_test_pair, DataError, FieldPair, Modality, SamplePair, WindGrid};
use crate::kv::format_sig;
use crate::models::{ModelBundle, ModelError};

/// PSNR written to files when the error is exactly zero.
pub const PSNR_CAP: f64 = 99.0;
pub const SSIM_WINDOW: usize = 11;
pub const SSIM_SIGMA: f64 = 1.5;
pub const SSIM_K1: f64 = 0.01;
pub const SSIM_K2: f64 = 0.03;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum MetricError {
    #[error("fields differ in size: {0} vs {1} values")]
    ShapeMismatch(usize, usize),
    #[error("{h}×{w} field does not hold {len} values")]
    Extents { h: usize, w: usize, len: usize },
    #[error("data range must be positive, got {0}")]
    BadRange(f64),
    #[error("{h}×{w} field is smaller than the {win}×{win} SSIM window")]
    TooSmall { h: usize, w: usize, win: usize },
    #[error("empty field")]
    Empty,
}

fn check_pair<T>(a: &[T], b: &[T]) -> Result<(), MetricError> {
    if a.len() != b.len() {
        return Err(MetricError::ShapeMismatch(a.len(), b.len()));
    }
    if a.is_empty() {
        return Err(MetricError::Empty);
    }
    Ok(())
}

/// Mean of squared differences, accumulated in f64.
pub fn mse<T: Copy + Into<f64>>(a: &[T], b: &[T]) -> Result<f64, MetricError> {
    check_pair(a, b)?;
    let s: f64 = a
        .iter()
        .zip(b)
        .map(|(&x, &y)| {
            let d = x.into() - y.into();
            d * d
        })
        .sum();
    Ok(s / a.len() as f64)
}

/// `10·log₁₀(R²/mse)`; `+∞` when `mse = 0`.
pub fn psnr_from_mse(mse: f64, data_range: f64) -> Result<f64, MetricError> {
    if !(data_range > 0.0) {
        return Err(MetricError::BadRange(data_range));
    }
    if mse == 0.0 {
        return Ok(f64::INFINITY);
    }
    Ok(10.0 * (2.0 * data_range.log10() - mse.log10()))
}

pub fn psnr<T: Copy + Into<f64>>(a: &[T], b: &[T], data_range: f64) -> Result<f64, MetricError> {
    psnr_from_mse(mse(a, b)?, data_range)
}

/// PSNR as written to files: infinite values become [`PSNR_CAP`].
pub fn capped(psnr: f64) -> f64 {
    psnr.min(PSNR_CAP)
}

/// Normalized 1-D Gaussian taps; the 2-D window is their outer product.
pub fn gaussian_taps(size: usize, sigma: f64) -> Vec<f64> {
    let c = (size as f64 - 1.0) / 2.0;
    let raw: Vec<f64> = (0..size).map(|i| (-((i as f64 - c).powi(2)) / (2.0 * sigma * sigma)).exp()).collect();
    let s: f64 = raw.iter().sum();
    raw.into_iter().map(|v| v / s).collect()
}

/// Valid-mode separable filtering of an `h×w` plane.
fn filter_valid(x: &[f64], h: usize, w: usize, taps: &[f64]) -> Vec<f64> {
    let k = taps.len();
    let (oh, ow) = (h - k + 1, w - k + 1);
    let mut rows = vec![0.0; h * ow];
    for y in 0..h {
        for j in 0..ow {
            rows[y * ow + j] = (0..k).map(|t| taps[t] * x[y * w + j + t]).sum();
        }
    }
    let mut out = vec![0.0; oh * ow];
    for i in 0..oh {
        for j in 0..ow {
            out[i * ow + j] = (0..k).map(|t| taps[t] * rows[(i + t) * ow + j]).sum();
        }
    }
    out
}

/// SSIM of two `h×w` fields over all fully contained 11×11 Gaussian windows.
pub fn ssim<T: Copy + Into<f64>>(a: &[T], b: &[T], h: usize, w: usize, data_range: f64) -> Result<f64, MetricError> {
    check_pair(a, b)?;
    if a.len() != h * w {
        return Err(MetricError::Extents { h, w, len: a.len() });
    }
    if !(data_range > 0.0) {
        return Err(MetricError::BadRange(data_range));
    }
    if h < SSIM_WINDOW || w < SSIM_WINDOW {
        return Err(MetricError::TooSmall { h, w, win: SSIM_WINDOW });
    }
    let taps = gaussian_taps(SSIM_WINDOW, SSIM_SIGMA);
    let a: Vec<f64> = a.iter().map(|&v| v.into()).collect();
    let b: Vec<f64> = b.iter().map(|&v| v.into()).collect();
    let prod = |x: &[f64], y: &[f64]| -> Vec<f64> { x.iter().zip(y).map(|(p, q)| p * q).collect() };
    let mu_a = filter_valid(&a, h, w, &taps);
    let mu_b = filter_valid(&b, h, w, &taps);
    let e_aa = filter_valid(&prod(&a, &a), h, w, &taps);
    let e_bb = filter_valid(&prod(&b, &b), h, w, &taps);
    let e_ab = filter_valid(&prod(&a, &b), h, w, &taps);
    let c1 = (SSIM_K1 * data_range).powi(2);
    let c2 = (SSIM_K2 * data_range).powi(2);
    let mut total = 0.0;
    for i in 0..mu_a.len() {
        total += ssim_term(mu_a[i], mu_b[i], e_aa[i], e_bb[i], e_ab[i], c1, c2);
    }
    Ok(total / mu_a.len() as f64)
}

/// One window's SSIM from its first and second moments.
pub(crate) fn ssim_term(mu_a: f64, mu_b: f64, e_aa: f64, e_bb: f64, e_ab: f64, c1: f64, c2: f64) -> f64 {
    let var_a = e_aa - mu_a * mu_a;
    let var_b = e_bb - mu_b * mu_b;
    let cov = e_ab - mu_a * mu_b;
    ((2.0 * mu_a * mu_b + c1) * (2.0 * cov + c2)) / ((mu_a * mu_a + mu_b * mu_b + c1) * (var_a + var_b + c2))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PredictionMode {
    SelfPrediction,
    CrossPrediction,
}

impl fmt::Display for PredictionMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            PredictionMode::SelfPrediction => "self",
            PredictionMode::CrossPrediction => "cross",
        })
    }
}

/// Test-set averages for one scale and one (source, target) path.
#[derive(Clone, Debug, PartialEq)]
pub struct EvalRecord {
    pub scale: f64,
    pub source: usize,
    pub target: usize,
    pub mode: PredictionMode,
    pub mse: f64,
    pub psnr: f64,
    pub ssim: f64,
}

pub const EVAL_CSV_HEADER: &str = "scale,source,target,mode,mse,psnr,ssim";

pub fn write_eval_csv(records: &[EvalRecord], out: &mut impl Write) -> std::io::Result<()> {
    writeln!(out, "{EVAL_CSV_HEADER}")?;
    for r in records {
        writeln!(
            out,
            "{},{},{},{},{},{},{}",
            format_sig(r.scale),
            r.source,
            r.target,
            r.mode,
            format_sig(r.mse),
            format_sig(capped(r.psnr)),
            format_sig(r.ssim)
        )?;
    }
    Ok(())
}

/// Anything that maps a high-res input of one modality to a field of the
/// target modality at arbitrary output extents.
pub trait FieldPredictor {
    fn predict_field(
        &self,
        input: &WindGrid,
        source: Modality,
        target: Modality,
        out_h: usize,
        out_w: usize,
    ) -> Result<WindGrid, EvalError>;
}

impl FieldPredictor for ModelBundle<f32> {
    fn predict_field(&self, input: &WindGrid, s: Modality, t: Modality, out_h: usize, out_w: usize) -> Result<WindGrid, EvalError> {
        Ok(self.predict(input, s, t, out_h, out_w)?)
    }
}

/// Plain bicubic upsampling of the input, ignoring the target modality.
pub struct BicubicPredictor;

impl FieldPredictor for BicubicPredictor {
    fn predict_field(&self, input: &WindGrid, _: Modality, _: Modality, out_h: usize, out_w: usize) -> Result<WindGrid, EvalError> {
        Ok(bicubic_resize(input, out_h, out_w)?)
    }
}

#[derive(Debug, Error)]
pub enum EvalError {
    #[error(transparent)]
    Metric(#[from] MetricError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Data(#[from] DataError),
    #[error("empty test set")]
    EmptyTestSet,
    #[error("empty scale list")]
    NoScales,
    #[error("evaluation data must be normalized")]
    NotNormalized,
}

/// The four evaluated (source, target) paths.
pub const EVAL_PATHS: [(Modality, Modality); 4] =
    [(Modality::M0, Modality::M0), (Modality::M1, Modality::M1), (Modality::M0, Modality::M1), (Modality::M1, Modality::M0)];

/// MSE, PSNR and SSIM of one prediction against its truth, with `R = 1`.
pub fn score(pred: &WindGrid, truth: &WindGrid) -> Result<[f64; 3], MetricError> {
    let (c, h, w) = truth.dims();
    if pred.dims() != (c, h, w) {
        return Err(MetricError::ShapeMismatch(pred.values().len(), truth.values().len()));
    }
    let m = mse(pred.values(), truth.values())?;
    let mut s = 0.0;
    for ch in 0..c {
        let r = ch * h * w..(ch + 1) * h * w;
        s += ssim(&pred.values()[r.clone()], &truth.values()[r], h, w, 1.0)?;
    }
    Ok([m, psnr_from_mse(m, 1.0)?, s / c as f64])
}

/// Every path at every scale, averaged over the normalized `test` pairs.
/// Test pairs are built with [`make_test_pair`] at `hr_dims`.
pub fn evaluate(
    predictor: &dyn FieldPredictor,
    test: &[FieldPair],
    hr_dims: (usize, usize),
    scales: &[f64],
) -> Result<Vec<EvalRecord>, EvalError> {
    if test.is_empty() {
        return Err(EvalError::EmptyTestSet);
    }
    if scales.is_empty() {
        return Err(EvalError::NoScales);
    }
    if test.iter().any(|p| Modality::ALL.iter().any(|&m| !p.get(m).is_normalized())) {
        return Err(EvalError::NotNormalized);
    }
    let mut out = Vec::with_capacity(scales.len() * EVAL_PATHS.len());
    for &scale in scales {
        let pairs: Vec<[SamplePair; 2]> = test
            .iter()
            .map(|p| {
                Ok([
                    make_test_pair(p.get(Modality::M0), Modality::M0, hr_dims, scale)?,
                    make_test_pair(p.get(Modality::M1), Modality::M1, hr_dims, scale)?,
                ])
            })
            .collect::<Result<_, DataError>>()?;
        for (s, t) in EVAL_PATHS {
            let mut sums = [0.0f64; 3];
            for pair in &pairs {
                let (input, truth) = (&pair[s.index()].hr, &pair[t.index()].sr);
                let pred = predictor.predict_field(input, s, t, truth.height(), truth.width())?;
                for (acc, v) in sums.iter_mut().zip(score(&pred, truth)?) {
                    *acc += v;
                }
            }
            let n = pairs.len() as f64;
            out.push(EvalRecord {
                scale,
                source: s.index(),
                target: t.index(),
                mode: if s == t { PredictionMode::SelfPrediction } else { PredictionMode::CrossPrediction },
                mse: sums[0] / n,
                psnr: sums[1] / n,
                ssim: sums[2] / n,
            });
        }
    }
    Ok(out)
}

/// Looks the input up among known fields and returns the exact target.
/// A perfect predictor for checking the evaluation pipeline end to end.
pub struct OraclePredictor {
    pub fields: Vec<FieldPair>,
    pub hr_dims: (usize, usize),
}

impl FieldPredictor for OraclePredictor {
    fn predict_field(&self, input: &WindGrid, s: Modality, t: Modality, out_h: usize, out_w: usize) -> Result<WindGrid, EvalError> {
        for p in &self.fields {
            if bicubic_resize(p.get(s), self.hr_dims.0, self.hr_dims.1)?.values() == input.values() {
                return Ok(bicubic_resize(p.get(t), out_h, out_w)?);
            }
        }
        Err(EvalError::Data(DataError::Dataset("input matches no known field".into())))
    }
}
