use super::{check_shape, ModelError, ShapeConfig};
use crate::nn::{Bound, ConvLayer, ParamRegistry};
use crate::tensor::{Scalar, Tape, Var};

/// Strided convolutional encoder from high-res data to a latent grid.
///
/// Each stage halves the spatial extent with a 3×3 stride-2 conv and refines
/// with a 3×3 stride-1 conv, both followed by ReLU. A 1×1 conv projects to
/// the latent channel count.
#[derive(Clone, Debug)]
pub struct DimReducingEncoder {
    pub stages: Vec<(ConvLayer, ConvLayer)>,
    pub proj: ConvLayer,
    input: [usize; 3],
    name: String,
}

impl DimReducingEncoder {
    pub fn new<T: Scalar>(
        reg: &mut ParamRegistry<T>,
        name: &str,
        shape: &ShapeConfig,
        widths: &[usize],
    ) -> Result<Self, ModelError> {
        let depth = shape.depth()?;
        if widths.len() != depth {
            return Err(ModelError::Config(format!(
                "{} stage widths given but {}×{} → {}×{} needs {depth} stages",
                widths.len(),
                shape.h_h,
                shape.w_h,
                shape.h_l,
                shape.w_l
            )));
        }
        let mut stages = Vec::with_capacity(depth);
        let mut c = shape.c_h;
        for (i, &w) in widths.iter().enumerate() {
            let down = ConvLayer::new(reg, &format!("{name}.stage{i}.down"), c, w, 3, 2, 1)?;
            let refine = ConvLayer::new(reg, &format!("{name}.stage{i}.refine"), w, w, 3, 1, 1)?;
            stages.push((down, refine));
            c = w;
        }
        let proj = ConvLayer::new(reg, &format!("{name}.proj"), c, shape.c_l, 1, 1, 0)?;
        Ok(Self { stages, proj, input: shape.high(), name: name.to_owned() })
    }

    pub fn forward<T: Scalar>(&self, tape: &mut Tape<T>, p: &Bound, x: Var) -> Result<Var, ModelError> {
        check_shape(&self.name, tape.shape(x), &self.input)?;
        let mut h = x;
        for (down, refine) in &self.stages {
            h = down.forward(tape, p, h)?;
            h = tape.relu(h);
            h = refine.forward(tape, p, h)?;
            h = tape.relu(h);
        }
        Ok(self.proj.forward(tape, p, h)?)
    }
}
