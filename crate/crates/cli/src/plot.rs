//! 8-bit binary PGM heatmaps.

use windsr::data::WindGrid;

use crate::error::{invalid, CliError};

/// Gray level of `v` on a linear ramp over `[min, max]`, rounding half up
/// and clamping out-of-range values.
pub fn gray_level(v: f32, min: f64, max: f64) -> u8 {
    let t = (v as f64 - min) / (max - min) * 255.0;
    (t + 0.5).floor().clamp(0.0, 255.0) as u8
}

/// Renders a single-channel grid as P5, one image row per grid row.
/// `min`/`max` default to the field's own extremes.
pub fn render_pgm(grid: &WindGrid, min: Option<f64>, max: Option<f64>) -> Result<Vec<u8>, CliError> {
    let (c, h, w) = grid.dims();
    if c != 1 {
        return Err(invalid(format!("can only plot single-channel grids, got {c} channels")));
    }
    let values = grid.values();
    let lo = min.unwrap_or_else(|| values.iter().fold(f64::INFINITY, |a, &v| a.min(v as f64)));
    let hi = max.unwrap_or_else(|| values.iter().fold(f64::NEG_INFINITY, |a, &v| a.max(v as f64)));
    if !(lo < hi) {
        return Err(invalid(format!("plot range needs min < max, got [{lo}, {hi}]; pass --min/--max for constant fields")));
    }
    let mut out = format!("P5 {w} {h} 255\n").into_bytes();
    out.extend(values.iter().map(|&v| gray_level(v, lo, hi)));
    Ok(out)
}
