//! Wind grids on disk and in memory, synthetic fields, resampling and the
//! training/test pair protocols.

mod dataset;
mod grid;
mod norm;
mod pairs;
mod resample;
mod synth;

use std::io;
use std::path::{Path, PathBuf};

use thiserror::Error;

use crate::kv::KvError;

pub use dataset::{
    compute_stats, grid_path, load_split, load_stats, save_stats, split_counts, write_dataset, FieldPair, Split,
    STATS_FILE,
};
pub use grid::{decode_grid, encode_grid, load_grid, save_grid, Component, Modality, WindGrid, HEADER_LEN};
pub use norm::{denormalize, normalize, DatasetStats, NormStats};
pub use pairs::{make_test_pair, make_train_pair, scaled_dims, SamplePair, MAX_SCALE, MIN_SCALE};
pub use resample::{bicubic_plane, bicubic_resize, keys_weight, KEYS_A};
pub use synth::{synth_wind, synth_wind_with, SynthParams, HIGH_HEIGHT_M, LOW_HEIGHT_M, SHEAR_EXPONENT};

#[derive(Debug, Error)]
pub enum DataError {
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: io::Error },
    #[error("{path}: {source}")]
    InFile { path: PathBuf, source: Box<DataError> },
    #[error("bad magic {found:?} at byte 0, expected \"WGRD\"")]
    BadMagic { found: [u8; 4] },
    #[error("truncated file: expected {expected} bytes, got {got}")]
    Truncated { expected: usize, got: usize },
    #[error("invalid header at byte {offset}: {msg}")]
    Header { offset: usize, msg: String },
    #[error("non-finite value at index {index}")]
    NonFinite { index: usize },
    #[error("non-finite value at index {index} (byte {offset})")]
    NonFiniteAt { index: usize, offset: usize },
    #[error("{0}")]
    Shape(String),
    #[error("crop {crop:?} does not fit inside a {source_dims:?} field")]
    CropTooLarge { crop: (usize, usize), source_dims: (usize, usize) },
    #[error("scale {0} outside [1, 3.25]")]
    Scale(f64),
    #[error("degenerate normalization range: min {min} ≥ max {max}")]
    DegenerateStats { min: f64, max: f64 },
    #[error("grid is already normalized")]
    AlreadyNormalized,
    #[error("grid is not normalized")]
    NotNormalized,
    #[error("unknown modality {0}, expected 0 or 1")]
    UnknownModality(usize),
    #[error("stats: {0}")]
    Kv(#[from] KvError),
    #[error("dataset: {0}")]
    Dataset(String),
}

impl DataError {
    pub(crate) fn io(path: &Path, source: io::Error) -> Self {
        DataError::Io { path: path.to_path_buf(), source }
    }
}
