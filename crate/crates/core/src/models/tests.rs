use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::*;
use crate::coords::{make_grid, pixel_center, CoordinateBatch};
use crate::data::{Component, WindGrid};
use crate::nn::Bound;
use crate::tensor::{grad_check_many, Probe, Tape, Tensor, Var};

fn tiny_shape() -> ShapeConfig {
    ShapeConfig { c_h: 1, h_h: 12, w_h: 16, c_l: 2, h_l: 3, w_l: 4, c_f: 4 }
}

fn tiny_arch() -> ArchConfig {
    ArchConfig { stage_widths: vec![3, 4], res_blocks: 1, res_scale: 0.1, mlp_layers: 2, mlp_width: 8 }
}

fn small_arch() -> ArchConfig {
    ArchConfig { stage_widths: vec![4, 4, 4], res_blocks: 1, res_scale: 0.1, mlp_layers: 2, mlp_width: 16 }
}

fn random(shape: &[usize], seed: u64) -> Tensor<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = shape.iter().product();
    Tensor::new(shape.to_vec(), (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect()).unwrap()
}

fn random_queries(n: usize, seed: u64, lo: f64, hi: f64) -> CoordinateBatch {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let coords = (0..n).map(|_| [rng.gen_range(lo..hi), rng.gen_range(lo..hi)]).collect();
    let cells = (0..n).map(|_| [rng.gen_range(0.01..0.5), rng.gen_range(0.01..0.5)]).collect();
    CoordinateBatch::new(coords, cells).unwrap()
}

fn bundle<T: crate::Scalar>(shape: ShapeConfig, arch: ArchConfig, seed: u64) -> ModelBundle<T> {
    let mut b = ModelBundle::new(shape, arch).unwrap();
    b.init(seed);
    b
}

fn hr_grid(shape: &ShapeConfig, seed: u64) -> WindGrid {
    let t = random(&shape.high(), seed);
    let v = t.data().iter().map(|&x| (0.5 + 0.4 * x) as f32).collect();
    WindGrid::new(shape.c_h, shape.h_h, shape.w_h, v, 60.0, Component::U).unwrap()
}

#[test]
fn depth_follows_power_of_two_ratio() {
    assert_eq!(ShapeConfig::full().depth().unwrap(), 3);
    assert_eq!(ShapeConfig::desk().depth().unwrap(), 3);
    assert_eq!(tiny_shape().depth().unwrap(), 2);
    let odd = ShapeConfig { h_l: 5, ..ShapeConfig::desk() };
    assert!(odd.depth().is_err());
    let uneven = ShapeConfig { w_l: 16, ..ShapeConfig::desk() };
    assert!(uneven.depth().is_err());
    assert!(ModelBundle::<f32>::new(ShapeConfig::desk(), tiny_arch()).is_err());
}

#[test]
fn encoder_shapes_at_desk_and_full_dims() {
    for shape in [ShapeConfig::desk(), ShapeConfig::full()] {
        let b: ModelBundle<f32> = bundle(shape, small_arch(), 0);
        let mut tape = Tape::new();
        let p = b.params.bind(&mut tape, false);
        let x = tape.constant(Tensor::zeros(shape.high().to_vec()));
        let z = b.encode(&mut tape, &p, Modality::M0, Modality::M1, x).unwrap();
        assert_eq!(tape.shape(z), &shape.latent());
    }
    assert_eq!(ShapeConfig::full().latent(), [2, 60, 80]);
}

#[test]
fn encoder_rejects_wrong_input() {
    let b: ModelBundle<f32> = bundle(ShapeConfig::desk(), small_arch(), 0);
    let mut tape = Tape::new();
    let p = b.params.bind(&mut tape, false);
    let x = tape.constant(Tensor::zeros(vec![1, 40, 64]));
    assert!(matches!(b.encode(&mut tape, &p, Modality::M0, Modality::M0, x), Err(ModelError::InputShape { .. })));
}

#[test]
fn zero_input_zero_bias_gives_zero_latent() {
    let b: ModelBundle<f32> = bundle(ShapeConfig::desk(), small_arch(), 3);
    let mut tape = Tape::new();
    let p = b.params.bind(&mut tape, false);
    let x = tape.constant(Tensor::zeros(vec![1, 48, 64]));
    let z = b.encode(&mut tape, &p, Modality::M1, Modality::M1, x).unwrap();
    assert!(tape.value(z).data().iter().all(|&v| v == 0.0));
}

#[test]
fn feature_encoder_shape_and_skip_identity() {
    let mut b: ModelBundle<f32> = bundle(ShapeConfig::desk(), ArchConfig::default(), 1);
    let mut tape = Tape::new();
    let p = b.params.bind(&mut tape, false);
    let z = tape.constant(random(&[2, 6, 8], 2).cast());
    let f = b.extract_features(&mut tape, &p, Modality::M0, z).unwrap();
    assert_eq!(tape.shape(f), &[64, 6, 8]);

    // Zero every block's second conv and the tail: the body contributes
    // nothing and the output is the head conv alone.
    let fe = b.feature_encoder(Modality::M0).clone();
    let mut zeroed = fe.blocks.iter().flat_map(|blk| [blk.conv2.kernel, blk.conv2.bias]).collect::<Vec<_>>();
    zeroed.extend([fe.tail.kernel, fe.tail.bias]);
    for id in zeroed {
        b.params.get_mut(id).data_mut().iter_mut().for_each(|v| *v = 0.0);
    }
    let mut tape = Tape::new();
    let p = b.params.bind(&mut tape, false);
    let z = tape.constant(random(&[2, 6, 8], 2).cast());
    let f = b.extract_features(&mut tape, &p, Modality::M0, z).unwrap();
    let head = fe.head.forward(&mut tape, &p, z).unwrap();
    assert_eq!(tape.value(f), tape.value(head));
}

#[test]
fn query_on_latent_centre_uses_one_neighbour() {
    let (h_l, w_l) = (3, 4);
    let q = CoordinateBatch::new(vec![[pixel_center(1, 3), pixel_center(2, 4)]], vec![[0.1, 0.1]]).unwrap();
    let plan = ensemble_plan(h_l, w_l, &q);
    assert_eq!(plan.weights, vec![1.0, 0.0, 0.0, 0.0]);
    assert_eq!(plan.rows[0], 4 + 2);
    assert_eq!(&plan.geometry[0][..2], &[0.0, 0.0]);

    // The blended output is then a single MLP evaluation at that position.
    let b: ModelBundle<f64> = bundle(tiny_shape(), tiny_arch(), 5);
    let mut tape = Tape::new();
    let p = b.params.bind(&mut tape, false);
    let feats = tape.constant(random(&[4, 3, 4], 6));
    let y = b.decode_at(&mut tape, &p, Modality::M1, feats, &q).unwrap();
    let unfolded = tape.unfold3x3(feats).unwrap();
    let row = tape.gather_rows(unfolded, &[6]).unwrap();
    let geo = tape.constant(Tensor::new(vec![1, 4], plan.geometry[0].to_vec()).unwrap());
    let input = tape.concat_cols(&[row, geo]).unwrap();
    let single = b.decoder(Modality::M1).mlp(&mut tape, &p, input).unwrap();
    assert_eq!(tape.value(y).data()[0], tape.value(single).data()[0]);
}

#[test]
fn lower_index_wins_on_grid_lines() {
    // x = 0 sits exactly between latent columns 1 and 2 of a 4-wide grid.
    let q = CoordinateBatch::new(vec![[pixel_center(0, 3), 0.0]], vec![[0.1, 0.1]]).unwrap();
    let plan = ensemble_plan(3, 4, &q);
    assert_eq!(plan.rows[0], 1);
    assert_eq!(plan.weights, vec![0.5, 0.5, 0.0, 0.0]);
}

#[test]
fn constant_features_give_constant_output_in_the_interior() {
    let mut b: ModelBundle<f64> = bundle(ShapeConfig { h_l: 6, w_l: 8, h_h: 24, w_h: 32, ..tiny_shape() }, tiny_arch(), 2);
    // Zero the relative-coordinate columns of the first hidden layer.
    let w = b.decoder(Modality::M0).hidden[0].weight;
    let n_in = CoordDecoder::input_dim(4);
    for (k, v) in b.params.get_mut(w).data_mut().iter_mut().enumerate() {
        if k % n_in == 36 || k % n_in == 37 {
            *v = 0.0;
        }
    }
    let mut tape = Tape::new();
    let p = b.params.bind(&mut tape, false);
    let feats = tape.constant(Tensor::full(vec![4, 6, 8], 0.3));
    // Zero padding changes the unfolded features on the border ring, so
    // queries stay between interior latent centres.
    let lo = pixel_center(1, 6).max(pixel_center(1, 8));
    let hi = pixel_center(4, 6).min(pixel_center(6, 8));
    let q = random_queries(100, 11, lo, hi);
    let q = CoordinateBatch::new(q.coords().to_vec(), vec![[0.2, 0.1]; 100]).unwrap();
    let y = b.decode_at(&mut tape, &p, Modality::M0, feats, &q).unwrap();
    let v = tape.value(y).data();
    assert!(v.iter().all(|x| (x - v[0]).abs() < 1e-12), "{v:?}");
}

#[test]
fn decoder_rejects_empty_batch() {
    let b: ModelBundle<f64> = bundle(tiny_shape(), tiny_arch(), 0);
    let mut tape = Tape::new();
    let p = b.params.bind(&mut tape, false);
    let feats = tape.constant(random(&[4, 3, 4], 0));
    let empty = CoordinateBatch::new(vec![], vec![]).unwrap();
    assert!(matches!(b.decode_at(&mut tape, &p, Modality::M0, feats, &empty), Err(ModelError::NoQueries)));
}

#[test]
fn predict_uses_the_requested_path() {
    let shape = tiny_shape();
    let b: ModelBundle<f32> = bundle(shape, tiny_arch(), 4);
    let x = hr_grid(&shape, 1);
    let cases = [
        (Modality::M0, Modality::M0, [Part::E00, Part::FE0, Part::D0]),
        (Modality::M1, Modality::M1, [Part::E11, Part::FE1, Part::D1]),
        (Modality::M0, Modality::M1, [Part::E01, Part::FE1, Part::D1]),
        (Modality::M1, Modality::M0, [Part::E10, Part::FE0, Part::D0]),
    ];
    for (s, t, parts) in cases {
        let (out, used) = b.predict_traced(&x, s, t, 18, 24).unwrap();
        assert_eq!(used, parts);
        assert_eq!(out.dims(), (1, 18, 24));
        assert_eq!(out.height_m(), b.heights_m[t.index()]);
        // The trace names the parts; recomputing with exactly those parts
        // on a fresh tape must give the same values.
        let mut tape = Tape::new();
        let p = b.params.bind(&mut tape, false);
        let xv = tape.constant(x.to_tensor());
        let z = b.encoder(s, t).forward(&mut tape, &p, xv).unwrap();
        let f = b.feature_encoder(t).forward(&mut tape, &p, z).unwrap();
        let y = b.decoder(t).forward(&mut tape, &p, f, &make_grid(18, 24).unwrap()).unwrap();
        assert_eq!(tape.value(y).data(), out.values());
    }
}

#[test]
fn chunked_prediction_matches_one_pass() {
    let shape = tiny_shape();
    let b: ModelBundle<f32> = bundle(shape, tiny_arch(), 8);
    let x = hr_grid(&shape, 2);
    let (h, w) = (70, 80);
    assert!(h * w > crate::models::PREDICT_CHUNK);
    let out = b.predict(&x, Modality::M0, Modality::M1, h, w).unwrap();
    let mut tape = Tape::new();
    let p = b.params.bind(&mut tape, false);
    let xv = tape.constant(x.to_tensor());
    let y = b.forward_path(&mut tape, &p, Modality::M0, Modality::M1, xv, &make_grid(h, w).unwrap()).unwrap();
    assert_eq!(tape.value(y).data(), out.values());
}

#[test]
fn shared_parameters_make_self_and_cross_identical() {
    let shape = tiny_shape();
    let mut b: ModelBundle<f32> = bundle(shape, tiny_arch(), 9);
    let src: Vec<_> = b.part_params(Part::E00).collect();
    for other in [Part::E01, Part::E10, Part::E11] {
        let dst: Vec<_> = b.part_params(other).collect();
        for (s, d) in src.iter().zip(&dst) {
            *b.params.get_mut(*d) = b.params.get(*s).clone();
        }
    }
    let x = hr_grid(&shape, 3);
    for t in Modality::ALL {
        let a = b.predict(&x, t, t, 20, 30).unwrap();
        let c = b.predict(&x, t.other(), t, 20, 30).unwrap();
        assert_eq!(a.values(), c.values());
    }
}

#[test]
fn every_parameter_belongs_to_one_part() {
    let b: ModelBundle<f32> = bundle(tiny_shape(), tiny_arch(), 0);
    let total: usize = Part::ALL.iter().map(|&p| b.part_params(p).count()).sum();
    assert_eq!(total, b.params.len());
    for part in Part::ALL {
        for id in b.part_params(part) {
            assert_eq!(b.part_of(id), part);
            assert!(b.params.name(id).starts_with(part.name()));
        }
    }
}

/// Gradient check of `loss = mean(path output)` with respect to the
/// parameters of `part` and the path input.
fn check_part(b: &ModelBundle<f64>, part: Part, x: &Tensor<f64>, q: &CoordinateBatch) -> f64 {
    let (s, t) = match part {
        Part::E00 | Part::FE0 | Part::D0 => (Modality::M0, Modality::M0),
        Part::E11 | Part::FE1 | Part::D1 => (Modality::M1, Modality::M1),
        Part::E01 => (Modality::M0, Modality::M1),
        Part::E10 => (Modality::M1, Modality::M0),
    };
    let ids: Vec<_> = b.part_params(part).collect();
    let mut inputs: Vec<Tensor<f64>> = ids.iter().map(|&id| b.params.get(id).clone()).collect();
    inputs.push(x.clone());
    let f = |tape: &mut Tape<f64>, vars: &[Var]| -> Result<Var, ModelError> {
        let mut k = 0;
        let all: Vec<Var> = b
            .params
            .ids()
            .map(|id| {
                if ids.contains(&id) {
                    k += 1;
                    vars[k - 1]
                } else {
                    tape.constant(b.params.get(id).clone())
                }
            })
            .collect();
        let p = Bound::from_vars(all);
        let y = b.forward_path(tape, &p, s, t, vars[vars.len() - 1], q)?;
        Ok(tape.mean(y)?)
    };
    grad_check_many(f, &inputs, 1e-5, Probe::all()).unwrap().max_rel_error
}

#[test]
fn every_part_passes_gradient_check() {
    let shape = tiny_shape();
    let mut b: ModelBundle<f64> = bundle(shape, tiny_arch(), 21);
    // Small non-zero biases so no gradient path is trivially zero.
    let ids: Vec<_> = b.params.ids().collect();
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for id in ids {
        if matches!(b.params.kind(id), crate::nn::ParamKind::Bias) {
            b.params.get_mut(id).data_mut().iter_mut().for_each(|v| *v = rng.gen_range(-0.1..0.1));
        }
    }
    let x = random(&shape.high(), 22);
    let q = random_queries(7, 23, -1.0, 1.0);
    for part in Part::ALL {
        let err = check_part(&b, part, &x, &q);
        assert!(err < 1e-5, "{part}: {err}");
    }
}

#[test]
fn decoder_gradient_with_respect_to_features() {
    let b: ModelBundle<f64> = bundle(tiny_shape(), tiny_arch(), 31);
    let q = random_queries(9, 32, -1.0, 1.0);
    let feats = random(&[4, 3, 4], 33);
    let f = |tape: &mut Tape<f64>, v: &[Var]| -> Result<Var, ModelError> {
        let p = b.params.bind(tape, false);
        let y = b.decode_at(tape, &p, Modality::M0, v[0], &q)?;
        let sq = tape.mul(y, y)?;
        Ok(tape.mean(sq)?)
    };
    let r = grad_check_many(f, &[feats], 1e-5, Probe::all()).unwrap();
    assert!(r.max_rel_error < 1e-5, "{r:?}");
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn ensemble_weights_are_a_partition_of_unity(seed in any::<u64>(), h in 1usize..9, w in 1usize..9) {
        let q = random_queries(50, seed, -1.0, 1.0);
        let plan = ensemble_plan(h, w, &q);
        for chunk in plan.weights.chunks(4) {
            prop_assert!(chunk.iter().all(|&x| x >= 0.0));
            prop_assert!((chunk.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }
        prop_assert!(plan.rows.iter().all(|&r| r < h * w));
    }

    #[test]
    fn decoding_is_permutation_equivariant(seed in any::<u64>()) {
        let b: ModelBundle<f64> = bundle(tiny_shape(), tiny_arch(), seed);
        let q = random_queries(20, seed ^ 3, -1.0, 1.0);
        let mut order: Vec<usize> = (0..20).collect();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for i in (1..20).rev() {
            order.swap(i, rng.gen_range(0..=i));
        }
        let mut tape = Tape::new();
        let p = b.params.bind(&mut tape, false);
        let feats = tape.constant(random(&[4, 3, 4], seed));
        let y = b.decode_at(&mut tape, &p, Modality::M1, feats, &q).unwrap();
        let yp = b.decode_at(&mut tape, &p, Modality::M1, feats, &q.permuted(&order)).unwrap();
        for (i, &o) in order.iter().enumerate() {
            prop_assert_eq!(tape.value(yp).data()[i], tape.value(y).data()[o]);
        }
    }

    #[test]
    fn any_output_extent_composes(oh in 1usize..=48, ow in 1usize..=64, seed in 0u64..4) {
        let shape = tiny_shape();
        let b: ModelBundle<f32> = bundle(shape, tiny_arch(), seed);
        let out = b.predict(&hr_grid(&shape, seed), Modality::M1, Modality::M0, oh, ow).unwrap();
        prop_assert_eq!(out.dims(), (1, oh, ow));
        prop_assert!(out.values().iter().all(|v| v.is_finite()));
    }
}
