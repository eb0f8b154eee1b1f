use super::{check_shape, ModelError, ShapeConfig};
use crate::nn::{Bound, ConvLayer, ParamRegistry, ResidualBlock};
use crate::tensor::{Scalar, Tape, Var};

/// EDSR-style feature encoder: head conv, residual body, tail conv, and a
/// skip from the head output around body and tail.
#[derive(Clone, Debug)]
pub struct FeatureEncoder {
    pub head: ConvLayer,
    pub blocks: Vec<ResidualBlock>,
    pub tail: ConvLayer,
    input: [usize; 3],
    name: String,
}

impl FeatureEncoder {
    pub fn new<T: Scalar>(
        reg: &mut ParamRegistry<T>,
        name: &str,
        shape: &ShapeConfig,
        res_blocks: usize,
        res_scale: f64,
    ) -> Result<Self, ModelError> {
        let head = ConvLayer::new(reg, &format!("{name}.head"), shape.c_l, shape.c_f, 3, 1, 1)?;
        let blocks = (0..res_blocks)
            .map(|i| ResidualBlock::new(reg, &format!("{name}.block{i}"), shape.c_f, res_scale))
            .collect::<Result<Vec<_>, _>>()?;
        let tail = ConvLayer::new(reg, &format!("{name}.tail"), shape.c_f, shape.c_f, 3, 1, 1)?;
        Ok(Self { head, blocks, tail, input: shape.latent(), name: name.to_owned() })
    }

    pub fn forward<T: Scalar>(&self, tape: &mut Tape<T>, p: &Bound, z: Var) -> Result<Var, ModelError> {
        check_shape(&self.name, tape.shape(z), &self.input)?;
        let head = self.head.forward(tape, p, z)?;
        let mut h = head;
        for b in &self.blocks {
            h = b.forward(tape, p, h)?;
        }
        let h = self.tail.forward(tape, p, h)?;
        Ok(tape.add(head, h)?)
    }
}
