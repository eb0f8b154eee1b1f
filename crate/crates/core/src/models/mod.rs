//! The eight networks (four dimension-reducing encoders, two feature
//! encoders, two coordinate decoders) and their self/cross compositions.

mod bundle;
mod decoder;
mod encoder;
mod feature;

use thiserror::Error;

use crate::coords::CoordError;
use crate::data::{DataError, Modality};
use crate::nn::LayerError;
use crate::tensor::TensorError;

pub use bundle::{ModelBundle, PREDICT_CHUNK};
pub use decoder::{ensemble_plan, CoordDecoder, EnsemblePlan};
pub use encoder::DimReducingEncoder;
pub use feature::FeatureEncoder;

#[derive(Debug, Error)]
pub enum ModelError {
    #[error(transparent)]
    Layer(#[from] LayerError),
    #[error(transparent)]
    Tensor(#[from] TensorError),
    #[error(transparent)]
    Coord(#[from] CoordError),
    #[error(transparent)]
    Data(#[from] DataError),
    #[error("{part}: expected input of shape {expected:?}, got {got:?}")]
    InputShape { part: String, expected: Vec<usize>, got: Vec<usize> },
    #[error("invalid model configuration: {0}")]
    Config(String),
    #[error("empty query batch")]
    NoQueries,
}

/// Extents of the high-resolution, latent and feature spaces. The feature
/// grid always has the latent grid's spatial extent.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ShapeConfig {
    pub c_h: usize,
    pub h_h: usize,
    pub w_h: usize,
    pub c_l: usize,
    pub h_l: usize,
    pub w_l: usize,
    pub c_f: usize,
}

impl ShapeConfig {
    /// 1×480×640 inputs, 2×60×80 latents.
    pub fn full() -> Self {
        Self { c_h: 1, h_h: 480, w_h: 640, c_l: 2, h_l: 60, w_l: 80, c_f: 64 }
    }

    /// Full extents divided by ten.
    pub fn desk() -> Self {
        Self { c_h: 1, h_h: 48, w_h: 64, c_l: 2, h_l: 6, w_l: 8, c_f: 64 }
    }

    /// Downsampling depth `d` with `h_H/h_L = w_H/w_L = 2^d`.
    pub fn depth(&self) -> Result<usize, ModelError> {
        let bad = || {
            ModelError::Config(format!(
                "high-res {}×{} and latent {}×{} must differ by the same power-of-two factor ≥ 2",
                self.h_h, self.w_h, self.h_l, self.w_l
            ))
        };
        let dims = [self.c_h, self.h_h, self.w_h, self.c_l, self.h_l, self.w_l, self.c_f];
        if dims.contains(&0) {
            return Err(ModelError::Config(format!("all extents must be positive: {self:?}")));
        }
        if self.h_h % self.h_l != 0 || self.w_h % self.w_l != 0 {
            return Err(bad());
        }
        let (fy, fx) = (self.h_h / self.h_l, self.w_h / self.w_l);
        if fy != fx || fy < 2 || !fy.is_power_of_two() {
            return Err(bad());
        }
        Ok(fy.trailing_zeros() as usize)
    }

    pub fn high(&self) -> [usize; 3] {
        [self.c_h, self.h_h, self.w_h]
    }

    pub fn latent(&self) -> [usize; 3] {
        [self.c_l, self.h_l, self.w_l]
    }

    pub fn feature(&self) -> [usize; 3] {
        [self.c_f, self.h_l, self.w_l]
    }
}

/// Layer widths and depths that the shape contract leaves free.
#[derive(Clone, Debug, PartialEq)]
pub struct ArchConfig {
    /// One entry per stride-2 stage; the count must equal the depth.
    pub stage_widths: Vec<usize>,
    pub res_blocks: usize,
    pub res_scale: f64,
    pub mlp_layers: usize,
    pub mlp_width: usize,
}

impl Default for ArchConfig {
    fn default() -> Self {
        Self { stage_widths: vec![16, 32, 64], res_blocks: 8, res_scale: 0.1, mlp_layers: 4, mlp_width: 256 }
    }
}

/// One of the eight trained networks.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Part {
    E00,
    E01,
    E10,
    E11,
    FE0,
    FE1,
    D0,
    D1,
}

impl Part {
    pub const ALL: [Part; 8] = [Part::E00, Part::E01, Part::E10, Part::E11, Part::FE0, Part::FE1, Part::D0, Part::D1];

    /// Encoder from `source` high-res data into `target`'s latent space.
    pub fn encoder(source: Modality, target: Modality) -> Self {
        match (source, target) {
            (Modality::M0, Modality::M0) => Part::E00,
            (Modality::M0, Modality::M1) => Part::E01,
            (Modality::M1, Modality::M0) => Part::E10,
            (Modality::M1, Modality::M1) => Part::E11,
        }
    }

    pub fn feature(m: Modality) -> Self {
        match m {
            Modality::M0 => Part::FE0,
            Modality::M1 => Part::FE1,
        }
    }

    pub fn decoder(m: Modality) -> Self {
        match m {
            Modality::M0 => Part::D0,
            Modality::M1 => Part::D1,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Part::E00 => "e00",
            Part::E01 => "e01",
            Part::E10 => "e10",
            Part::E11 => "e11",
            Part::FE0 => "fe0",
            Part::FE1 => "fe1",
            Part::D0 => "d0",
            Part::D1 => "d1",
        }
    }

    pub fn index(self) -> usize {
        self as usize
    }
}

impl std::fmt::Display for Part {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

pub(crate) fn check_shape(part: &str, got: &[usize], expected: &[usize]) -> Result<(), ModelError> {
    if got != expected {
        return Err(ModelError::InputShape { part: part.to_owned(), expected: expected.to_vec(), got: got.to_vec() });
    }
    Ok(())
}

#[cfg(test)]
mod tests;
