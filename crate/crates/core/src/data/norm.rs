use super::{DataError, Modality, WindGrid};

/// Min and max of one modality over the training split, m/s.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct NormStats {
    pub min: f32,
    pub max: f32,
}

impl NormStats {
    pub fn new(min: f32, max: f32) -> Result<Self, DataError> {
        if !(min.is_finite() && max.is_finite() && max > min) {
            return Err(DataError::DegenerateStats { min: min as f64, max: max as f64 });
        }
        Ok(Self { min, max })
    }

    pub fn range(&self) -> f64 {
        self.max as f64 - self.min as f64
    }

    pub fn forward(&self, v: f32) -> f32 {
        ((v as f64 - self.min as f64) / self.range()) as f32
    }

    pub fn inverse(&self, v: f32) -> f32 {
        (v as f64 * self.range() + self.min as f64) as f32
    }
}

/// Statistics for both modalities.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DatasetStats {
    pub per_modality: [NormStats; 2],
}

impl DatasetStats {
    pub fn get(&self, m: Modality) -> NormStats {
        self.per_modality[m.index()]
    }
}

/// Affine map to `[0, 1]` over the training range. Values outside the
/// training range land outside `[0, 1]` and are kept as they are.
pub fn normalize(grid: &WindGrid, stats: &NormStats) -> Result<WindGrid, DataError> {
    if grid.is_normalized() {
        return Err(DataError::AlreadyNormalized);
    }
    let (c, h, w) = grid.dims();
    let mut out = grid.with_values(c, h, w, grid.values().iter().map(|&v| stats.forward(v)).collect())?;
    out.set_normalized(true);
    Ok(out)
}

pub fn denormalize(grid: &WindGrid, stats: &NormStats) -> Result<WindGrid, DataError> {
    if !grid.is_normalized() {
        return Err(DataError::NotNormalized);
    }
    let (c, h, w) = grid.dims();
    let mut out = grid.with_values(c, h, w, grid.values().iter().map(|&v| stats.inverse(v)).collect())?;
    out.set_normalized(false);
    Ok(out)
}
