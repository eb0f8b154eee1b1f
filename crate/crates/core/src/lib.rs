//! Multi-modal continuous super-resolution of gridded wind fields.

pub mod config;
pub mod coords;
pub mod data;
pub mod kv;
pub mod metrics;
pub mod models;
pub mod nn;
pub mod tensor;
pub mod training;

pub use tensor::{Scalar, Tape, Tensor, TensorError, Var};
