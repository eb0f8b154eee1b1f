use super::{DataError, WindGrid};

/// Free parameter of the Keys cubic-convolution kernel.
pub const KEYS_A: f64 = -0.5;

/// Keys cubic-convolution kernel at offset `x`.
pub fn keys_weight(x: f64) -> f64 {
    let a = KEYS_A;
    let x = x.abs();
    if x <= 1.0 {
        ((a + 2.0) * x - (a + 3.0)) * x * x + 1.0
    } else if x < 2.0 {
        ((a * x - 5.0 * a) * x + 8.0 * a) * x - 4.0 * a
    } else {
        0.0
    }
}

/// Four source taps and weights for each output index of one axis.
fn axis_taps(n_in: usize, n_out: usize) -> Vec<([usize; 4], [f64; 4])> {
    let ratio = n_in as f64 / n_out as f64;
    (0..n_out)
        .map(|o| {
            // Pixel-centre alignment: output centre o maps to source position src.
            let src = (o as f64 + 0.5) * ratio - 0.5;
            let base = src.floor();
            let t = src - base;
            let mut idx = [0usize; 4];
            let mut w = [0.0f64; 4];
            for k in 0..4 {
                let i = base as isize + k as isize - 1;
                idx[k] = i.clamp(0, n_in as isize - 1) as usize;
                w[k] = keys_weight(t - (k as f64 - 1.0));
            }
            let s: f64 = w.iter().sum();
            for v in &mut w {
                *v /= s;
            }
            (idx, w)
        })
        .collect()
}

/// Separable bicubic resize of one `h×w` plane, in f64.
pub fn bicubic_plane(src: &[f64], h: usize, w: usize, out_h: usize, out_w: usize) -> Vec<f64> {
    assert_eq!(src.len(), h * w, "plane extents");
    let tx = axis_taps(w, out_w);
    let ty = axis_taps(h, out_h);
    let mut rows = vec![0.0; h * out_w];
    for y in 0..h {
        let line = &src[y * w..(y + 1) * w];
        for (x, (idx, wt)) in tx.iter().enumerate() {
            rows[y * out_w + x] = (0..4).map(|k| wt[k] * line[idx[k]]).sum();
        }
    }
    let mut out = vec![0.0; out_h * out_w];
    for (y, (idx, wt)) in ty.iter().enumerate() {
        for x in 0..out_w {
            out[y * out_w + x] = (0..4).map(|k| wt[k] * rows[idx[k] * out_w + x]).sum();
        }
    }
    out
}

/// Bicubic resize of every channel of `grid` to `out_h × out_w`.
pub fn bicubic_resize(grid: &WindGrid, out_h: usize, out_w: usize) -> Result<WindGrid, DataError> {
    let (c, h, w) = grid.dims();
    if out_h == 0 || out_w == 0 {
        return Err(DataError::Shape(format!("output dims must be at least 1×1, got {out_h}×{out_w}")));
    }
    if h < 4 || w < 4 {
        return Err(DataError::Shape(format!("bicubic input must be at least 4×4, got {h}×{w}")));
    }
    let mut out = Vec::with_capacity(c * out_h * out_w);
    for ch in 0..c {
        let plane: Vec<f64> = grid.values()[ch * h * w..(ch + 1) * h * w].iter().map(|&v| v as f64).collect();
        out.extend(bicubic_plane(&plane, h, w, out_h, out_w).into_iter().map(|v| v as f32));
    }
    grid.with_values(c, out_h, out_w, out)
}
