use std::ops::Range;

use super::{check_shape, ArchConfig, CoordDecoder, DimReducingEncoder, FeatureEncoder, ModelError, Part, ShapeConfig};
use crate::coords::{make_grid, CoordinateBatch};
use crate::data::{Modality, WindGrid, HIGH_HEIGHT_M, LOW_HEIGHT_M};
use crate::nn::{Bound, ParamId, ParamRegistry};
use crate::tensor::{Scalar, Tape, Tensor, Var};

/// Queries decoded per tape segment during inference.
pub const PREDICT_CHUNK: usize = 4096;

/// All eight networks over one parameter registry.
#[derive(Clone, Debug)]
pub struct ModelBundle<T> {
    pub shape: ShapeConfig,
    pub arch: ArchConfig,
    pub params: ParamRegistry<T>,
    /// Indexed `[source][target]`.
    encoders: [[DimReducingEncoder; 2]; 2],
    features: [FeatureEncoder; 2],
    decoders: [CoordDecoder; 2],
    /// Registry index range owned by each part, in [`Part::ALL`] order.
    ranges: [Range<usize>; 8],
    pub heights_m: [f32; 2],
}

impl<T: Scalar> ModelBundle<T> {
    /// Registers every parameter (zero-valued); call [`Self::init`] next.
    pub fn new(shape: ShapeConfig, arch: ArchConfig) -> Result<Self, ModelError> {
        shape.depth()?;
        let mut reg = ParamRegistry::new();
        let mut ranges: Vec<Range<usize>> = Vec::with_capacity(8);
        let mut track = |reg: &ParamRegistry<T>, start: usize| ranges.push(start..reg.len());

        let mut enc = Vec::with_capacity(4);
        for part in [Part::E00, Part::E01, Part::E10, Part::E11] {
            let start = reg.len();
            enc.push(DimReducingEncoder::new(&mut reg, part.name(), &shape, &arch.stage_widths)?);
            track(&reg, start);
        }
        let mut fe = Vec::with_capacity(2);
        for part in [Part::FE0, Part::FE1] {
            let start = reg.len();
            fe.push(FeatureEncoder::new(&mut reg, part.name(), &shape, arch.res_blocks, arch.res_scale)?);
            track(&reg, start);
        }
        let mut dec = Vec::with_capacity(2);
        for part in [Part::D0, Part::D1] {
            let start = reg.len();
            dec.push(CoordDecoder::new(&mut reg, part.name(), &shape, arch.mlp_layers, arch.mlp_width)?);
            track(&reg, start);
        }
        let mut enc = enc.into_iter();
        let mut next = || enc.next().expect("four encoders");
        let encoders = [[next(), next()], [next(), next()]];
        let [fe0, fe1]: [FeatureEncoder; 2] = fe.try_into().expect("two feature encoders");
        let [d0, d1]: [CoordDecoder; 2] = dec.try_into().expect("two decoders");
        Ok(Self {
            shape,
            arch,
            params: reg,
            encoders,
            features: [fe0, fe1],
            decoders: [d0, d1],
            ranges: ranges.try_into().expect("eight parts"),
            heights_m: [LOW_HEIGHT_M, HIGH_HEIGHT_M],
        })
    }

    /// Deterministic Glorot initialisation of every part.
    pub fn init(&mut self, seed: u64) {
        self.params.init_params(seed);
    }

    pub fn encoder(&self, source: Modality, target: Modality) -> &DimReducingEncoder {
        &self.encoders[source.index()][target.index()]
    }

    pub fn feature_encoder(&self, m: Modality) -> &FeatureEncoder {
        &self.features[m.index()]
    }

    pub fn decoder(&self, m: Modality) -> &CoordDecoder {
        &self.decoders[m.index()]
    }

    /// Parameters belonging to `part`, in registration order.
    pub fn part_params(&self, part: Part) -> impl Iterator<Item = ParamId> + '_ {
        let r = self.ranges[part.index()].clone();
        self.params.ids().skip(r.start).take(r.len())
    }

    pub fn part_of(&self, id: ParamId) -> Part {
        let i = self.params.ids().position(|p| p == id).expect("id from this registry");
        Part::ALL[self.ranges.iter().position(|r| r.contains(&i)).expect("every parameter has a part")]
    }

    pub fn encode(&self, tape: &mut Tape<T>, p: &Bound, source: Modality, target: Modality, x: Var) -> Result<Var, ModelError> {
        self.encoder(source, target).forward(tape, p, x)
    }

    pub fn extract_features(&self, tape: &mut Tape<T>, p: &Bound, m: Modality, z: Var) -> Result<Var, ModelError> {
        self.feature_encoder(m).forward(tape, p, z)
    }

    pub fn decode_at(
        &self,
        tape: &mut Tape<T>,
        p: &Bound,
        m: Modality,
        features: Var,
        queries: &CoordinateBatch,
    ) -> Result<Var, ModelError> {
        self.decoder(m).forward(tape, p, features, queries)
    }

    /// `D_target(FE_target(E_source^target(x)))` at every query, as a
    /// differentiable `n`-vector.
    pub fn forward_path(
        &self,
        tape: &mut Tape<T>,
        p: &Bound,
        source: Modality,
        target: Modality,
        x: Var,
        queries: &CoordinateBatch,
    ) -> Result<Var, ModelError> {
        let z = self.encode(tape, p, source, target, x)?;
        let f = self.extract_features(tape, p, target, z)?;
        self.decode_at(tape, p, target, f, queries)
    }

    /// Values at arbitrary queries, decoded in chunks of [`PREDICT_CHUNK`].
    pub fn predict_queries(
        &self,
        x: &Tensor<f32>,
        source: Modality,
        target: Modality,
        queries: &CoordinateBatch,
    ) -> Result<(Vec<f32>, Vec<Part>), ModelError> {
        check_shape("input", x.shape(), &self.shape.high())?;
        if queries.is_empty() {
            return Err(ModelError::NoQueries);
        }
        let mut tape = Tape::new();
        let p = self.params.bind(&mut tape, false);
        let xv = tape.constant(x.cast());
        let z = self.encode(&mut tape, &p, source, target, xv)?;
        let f = self.extract_features(&mut tape, &p, target, z)?;
        let mark = tape.len();
        let mut out = Vec::with_capacity(queries.len());
        for start in (0..queries.len()).step_by(PREDICT_CHUNK) {
            let end = (start + PREDICT_CHUNK).min(queries.len());
            let y = self.decode_at(&mut tape, &p, target, f, &queries.slice(start, end))?;
            out.extend(tape.value(y).data().iter().map(|v| v.to_f32().expect("finite prediction")));
            tape.truncate(mark);
        }
        let used = vec![Part::encoder(source, target), Part::feature(target), Part::decoder(target)];
        Ok((out, used))
    }

    /// Prediction on the full `out_h × out_w` pixel-centre grid. Any output
    /// extent is accepted.
    pub fn predict(&self, x: &WindGrid, source: Modality, target: Modality, out_h: usize, out_w: usize) -> Result<WindGrid, ModelError> {
        Ok(self.predict_traced(x, source, target, out_h, out_w)?.0)
    }

    /// [`Self::predict`] plus the parts that were evaluated, in call order.
    pub fn predict_traced(
        &self,
        x: &WindGrid,
        source: Modality,
        target: Modality,
        out_h: usize,
        out_w: usize,
    ) -> Result<(WindGrid, Vec<Part>), ModelError> {
        let grid = make_grid(out_h, out_w)?;
        let (values, used) = self.predict_queries(&x.to_tensor(), source, target, &grid)?;
        let mut out = x.with_values(1, out_h, out_w, values)?;
        out.set_height_m(self.heights_m[target.index()])?;
        Ok((out, used))
    }

    pub fn cast<U: Scalar>(&self) -> ModelBundle<U> {
        ModelBundle {
            shape: self.shape,
            arch: self.arch.clone(),
            params: self.params.cast(),
            encoders: self.encoders.clone(),
            features: self.features.clone(),
            decoders: self.decoders.clone(),
            ranges: self.ranges.clone(),
            heights_m: self.heights_m,
        }
    }
}
