//! Normalized query coordinates for continuous decoding.
//!
//! Pixel `i` of an axis with `n` pixels sits at its centre
//! `v_i = −1 + (2i + 1)/n`, so every coordinate lies strictly inside
//! `[−1, 1]`. Pairs are `(y, x)` and grids flatten row-major.

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::data::WindGrid;
use crate::tensor::Tensor;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum CoordError {
    #[error("grid dimensions must be positive, got {h}×{w}")]
    NonPositiveDims { h: usize, w: usize },
    #[error("query {index} at {coord:?} lies outside [-1, 1]²")]
    OutOfRange { index: usize, coord: [f64; 2] },
    #[error("cell size {cell:?} of query {index} is not strictly positive")]
    BadCell { index: usize, cell: [f64; 2] },
    #[error("{coords} coordinates but {cells} cells")]
    LengthMismatch { coords: usize, cells: usize },
    #[error("cannot sample {k} queries from {available} pixels")]
    TooManySamples { k: usize, available: usize },
    #[error("query sampling needs a single-channel grid, got {0} channels")]
    Channels(usize),
}

/// Query coordinates with their per-query cell sizes.
#[derive(Clone, Debug, PartialEq)]
pub struct CoordinateBatch {
    coords: Vec<[f64; 2]>,
    cells: Vec<[f64; 2]>,
}

impl CoordinateBatch {
    pub fn new(coords: Vec<[f64; 2]>, cells: Vec<[f64; 2]>) -> Result<Self, CoordError> {
        if coords.len() != cells.len() {
            return Err(CoordError::LengthMismatch { coords: coords.len(), cells: cells.len() });
        }
        for (index, c) in coords.iter().enumerate() {
            if !c.iter().all(|v| (-1.0..=1.0).contains(v)) {
                return Err(CoordError::OutOfRange { index, coord: *c });
            }
        }
        for (index, c) in cells.iter().enumerate() {
            if !c.iter().all(|v| *v > 0.0 && v.is_finite()) {
                return Err(CoordError::BadCell { index, cell: *c });
            }
        }
        Ok(Self { coords, cells })
    }

    pub fn len(&self) -> usize {
        self.coords.len()
    }

    pub fn is_empty(&self) -> bool {
        self.coords.is_empty()
    }

    pub fn coords(&self) -> &[[f64; 2]] {
        &self.coords
    }

    pub fn cells(&self) -> &[[f64; 2]] {
        &self.cells
    }

    /// Sub-batch `[start, end)`.
    pub fn slice(&self, start: usize, end: usize) -> Self {
        Self { coords: self.coords[start..end].to_vec(), cells: self.cells[start..end].to_vec() }
    }

    /// Reorders queries so that entry `i` becomes old entry `order[i]`.
    pub fn permuted(&self, order: &[usize]) -> Self {
        Self {
            coords: order.iter().map(|&i| self.coords[i]).collect(),
            cells: order.iter().map(|&i| self.cells[i]).collect(),
        }
    }
}

/// Centre of pixel `i` on an axis of `n` pixels.
pub fn pixel_center(i: usize, n: usize) -> f64 {
    // Written as (2i + 1 − n)/n so the numerator is an exact integer and the
    // grid is exactly antisymmetric about 0.
    (2.0 * i as f64 + 1.0 - n as f64) / n as f64
}

/// Pixel whose centre is nearest to `v` on an axis of `n` pixels.
pub fn pixel_index(v: f64, n: usize) -> usize {
    let i = ((v * n as f64 + n as f64 - 1.0) / 2.0).round();
    (i.max(0.0) as usize).min(n.saturating_sub(1))
}

/// Pixel-centre coordinates of an `out_h × out_w` raster, row-major.
pub fn make_grid(out_h: usize, out_w: usize) -> Result<CoordinateBatch, CoordError> {
    if out_h == 0 || out_w == 0 {
        return Err(CoordError::NonPositiveDims { h: out_h, w: out_w });
    }
    let ys: Vec<f64> = (0..out_h).map(|i| pixel_center(i, out_h)).collect();
    let xs: Vec<f64> = (0..out_w).map(|j| pixel_center(j, out_w)).collect();
    let mut coords = Vec::with_capacity(out_h * out_w);
    for &y in &ys {
        coords.extend(xs.iter().map(|&x| [y, x]));
    }
    let cell = [2.0 / out_h as f64, 2.0 / out_w as f64];
    let cells = vec![cell; coords.len()];
    Ok(CoordinateBatch { coords, cells })
}

/// `k` distinct pixel centres of `grid` drawn without replacement, with the
/// ground-truth value at each.
pub fn sample_queries(grid: &WindGrid, k: usize, seed: u64) -> Result<(CoordinateBatch, Tensor<f32>), CoordError> {
    if grid.channels() != 1 {
        return Err(CoordError::Channels(grid.channels()));
    }
    let (h, w) = (grid.height(), grid.width());
    if k > h * w {
        return Err(CoordError::TooManySamples { k, available: h * w });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let picks = sample(&mut rng, h * w, k);
    let cell = [2.0 / h as f64, 2.0 / w as f64];
    let mut coords = Vec::with_capacity(k);
    let mut values = Vec::with_capacity(k);
    for p in picks.iter() {
        let (i, j) = (p / w, p % w);
        coords.push([pixel_center(i, h), pixel_center(j, w)]);
        values.push(grid.values()[p]);
    }
    let batch = CoordinateBatch { coords, cells: vec![cell; k] };
    Ok((batch, Tensor::new(vec![k], values).expect("one value per query")))
}
