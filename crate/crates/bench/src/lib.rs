//! Fixtures shared by the benchmarks.

use windsr::data::{compute_stats, synth_wind, FieldPair};
use windsr::models::{ArchConfig, ModelBundle, ShapeConfig};
use windsr::training::normalize_pairs;

/// Desk extents with the reduced layer widths used by the smoke runs.
pub fn smoke_model() -> ModelBundle<f32> {
    let shape = ShapeConfig { c_f: 32, ..ShapeConfig::desk() };
    let arch = ArchConfig { stage_widths: vec![16, 32, 32], res_blocks: 4, mlp_layers: 3, mlp_width: 64, ..ArchConfig::default() };
    let mut b = ModelBundle::new(shape, arch).expect("valid smoke shape");
    b.init(0);
    b
}

pub fn desk_model() -> ModelBundle<f32> {
    let mut b = ModelBundle::new(ShapeConfig::desk(), ArchConfig::default()).expect("valid desk shape");
    b.init(0);
    b
}

/// `n` normalized 150×200 field pairs.
pub fn fields(n: usize) -> Vec<FieldPair> {
    let raw: Vec<FieldPair> = (0..n as u64)
        .map(|i| {
            let (a, b) = synth_wind(i, 150, 200).expect("synthesis");
            FieldPair::new(a, b).expect("matching dims")
        })
        .collect();
    let stats = compute_stats(&raw).expect("stats");
    normalize_pairs(&raw, &stats).expect("normalize")
}
