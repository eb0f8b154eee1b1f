//! Parameterized layers and the named parameter registry.

use std::collections::HashMap;

use rand::distributions::{Distribution, Uniform};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::tensor::{Scalar, Tape, Tensor, TensorError, Var};

#[derive(Debug, Error)]
pub enum LayerError {
    #[error(transparent)]
    Tensor(#[from] TensorError),
    #[error("duplicate parameter name {0:?}")]
    DuplicateName(String),
    #[error("{layer}: expected {expected} input channels/features, got {got}")]
    Width { layer: String, expected: usize, got: usize },
}

/// Index of a parameter inside a [`ParamRegistry`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct ParamId(usize);

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ParamKind {
    Weight { fan_in: usize, fan_out: usize },
    Bias,
}

/// Ordered map from hierarchical name to parameter tensor.
#[derive(Clone, Debug)]
pub struct ParamRegistry<T> {
    names: Vec<String>,
    kinds: Vec<ParamKind>,
    values: Vec<Tensor<T>>,
    grads: Vec<Option<Tensor<T>>>,
    index: HashMap<String, usize>,
}

impl<T: Scalar> Default for ParamRegistry<T> {
    fn default() -> Self {
        Self::new()
    }
}

impl<T: Scalar> ParamRegistry<T> {
    pub fn new() -> Self {
        Self { names: Vec::new(), kinds: Vec::new(), values: Vec::new(), grads: Vec::new(), index: HashMap::new() }
    }

    pub fn register(&mut self, name: impl Into<String>, shape: Vec<usize>, kind: ParamKind) -> Result<ParamId, LayerError> {
        let name = name.into();
        if self.index.contains_key(&name) {
            return Err(LayerError::DuplicateName(name));
        }
        let id = self.values.len();
        self.index.insert(name.clone(), id);
        self.names.push(name);
        self.kinds.push(kind);
        self.values.push(Tensor::zeros(shape));
        self.grads.push(None);
        Ok(ParamId(id))
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn ids(&self) -> impl Iterator<Item = ParamId> {
        (0..self.values.len()).map(ParamId)
    }

    pub fn name(&self, id: ParamId) -> &str {
        &self.names[id.0]
    }

    pub fn kind(&self, id: ParamId) -> ParamKind {
        self.kinds[id.0]
    }

    pub fn get(&self, id: ParamId) -> &Tensor<T> {
        &self.values[id.0]
    }

    pub fn get_mut(&mut self, id: ParamId) -> &mut Tensor<T> {
        &mut self.values[id.0]
    }

    pub fn lookup(&self, name: &str) -> Option<ParamId> {
        self.index.get(name).copied().map(ParamId)
    }

    /// Iterates `(name, tensor)` in registration order.
    pub fn iter(&self) -> impl Iterator<Item = (&str, &Tensor<T>)> {
        self.names.iter().map(String::as_str).zip(&self.values)
    }

    pub fn num_scalars(&self) -> usize {
        self.values.iter().map(Tensor::len).sum()
    }

    /// Glorot-uniform weights, zero biases, drawn in registration order from
    /// one seeded stream.
    pub fn init_params(&mut self, seed: u64) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for (value, kind) in self.values.iter_mut().zip(&self.kinds) {
            match *kind {
                ParamKind::Bias => value.data_mut().iter_mut().for_each(|v| *v = T::zero()),
                ParamKind::Weight { fan_in, fan_out } => {
                    let a = (6.0 / (fan_in + fan_out) as f64).sqrt();
                    let dist = Uniform::new_inclusive(-a, a);
                    value.data_mut().iter_mut().for_each(|v| *v = T::lit(dist.sample(&mut rng)));
                }
            }
        }
    }

    /// Puts every parameter on `tape` as a leaf.
    pub fn bind(&self, tape: &mut Tape<T>, requires_grad: bool) -> Bound {
        Bound(self.values.iter().map(|v| tape.leaf(v.clone(), requires_grad)).collect())
    }

    /// Moves the leaf gradients of `bound` from the tape into the registry,
    /// adding to any gradient already held.
    pub fn collect_grads(&mut self, tape: &mut Tape<T>, bound: &Bound) {
        for (i, var) in bound.0.iter().enumerate() {
            let Some(g) = tape.take_grad(*var) else { continue };
            match &mut self.grads[i] {
                Some(acc) => acc.data_mut().iter_mut().zip(&g).for_each(|(a, b)| *a = *a + *b),
                slot @ None => {
                    *slot = Some(Tensor::new(self.values[i].shape().to_vec(), g).expect("gradient matches parameter"))
                }
            }
        }
    }

    pub fn grad(&self, id: ParamId) -> Option<&Tensor<T>> {
        self.grads[id.0].as_ref()
    }

    pub fn clear_grads(&mut self) {
        self.grads.iter_mut().for_each(|g| *g = None);
    }

    /// Mutable access to a value together with its gradient, for optimizers.
    pub fn value_and_grad_mut(&mut self, id: ParamId) -> (&mut Tensor<T>, Option<&Tensor<T>>) {
        (&mut self.values[id.0], self.grads[id.0].as_ref())
    }

    pub fn cast<U: Scalar>(&self) -> ParamRegistry<U> {
        ParamRegistry {
            names: self.names.clone(),
            kinds: self.kinds.clone(),
            values: self.values.iter().map(Tensor::cast).collect(),
            grads: vec![None; self.values.len()],
            index: self.index.clone(),
        }
    }
}

/// Parameters of a registry bound onto one tape, indexable by [`ParamId`].
#[derive(Clone, Debug)]
pub struct Bound(Vec<Var>);

impl Bound {
    pub fn var(&self, id: ParamId) -> Var {
        self.0[id.0]
    }

    pub fn vars(&self) -> &[Var] {
        &self.0
    }

    /// Wraps vars created by the caller, in registry order.
    pub fn from_vars(vars: Vec<Var>) -> Self {
        Self(vars)
    }
}

/// `c_out×c_in×k×k` convolution with bias.
#[derive(Clone, Debug)]
pub struct ConvLayer {
    pub kernel: ParamId,
    pub bias: ParamId,
    pub c_in: usize,
    pub c_out: usize,
    pub k: usize,
    pub stride: usize,
    pub padding: usize,
    name: String,
}

impl ConvLayer {
    #[allow(clippy::too_many_arguments)]
    pub fn new<T: Scalar>(
        reg: &mut ParamRegistry<T>,
        name: &str,
        c_in: usize,
        c_out: usize,
        k: usize,
        stride: usize,
        padding: usize,
    ) -> Result<Self, LayerError> {
        let kernel = reg.register(
            format!("{name}.kernel"),
            vec![c_out, c_in, k, k],
            ParamKind::Weight { fan_in: c_in * k * k, fan_out: c_out * k * k },
        )?;
        let bias = reg.register(format!("{name}.bias"), vec![c_out], ParamKind::Bias)?;
        Ok(Self { kernel, bias, c_in, c_out, k, stride, padding, name: name.to_owned() })
    }

    pub fn forward<T: Scalar>(&self, tape: &mut Tape<T>, p: &Bound, x: Var) -> Result<Var, LayerError> {
        let c = tape.shape(x).first().copied().unwrap_or(0);
        if c != self.c_in {
            return Err(LayerError::Width { layer: self.name.clone(), expected: self.c_in, got: c });
        }
        Ok(tape.conv2d(x, p.var(self.kernel), p.var(self.bias), self.stride, self.padding)?)
    }
}

/// Fully connected layer, `weight: n_out×n_in`.
#[derive(Clone, Debug)]
pub struct LinearLayer {
    pub weight: ParamId,
    pub bias: ParamId,
    pub n_in: usize,
    pub n_out: usize,
    name: String,
}

impl LinearLayer {
    pub fn new<T: Scalar>(reg: &mut ParamRegistry<T>, name: &str, n_in: usize, n_out: usize) -> Result<Self, LayerError> {
        let weight = reg.register(
            format!("{name}.weight"),
            vec![n_out, n_in],
            ParamKind::Weight { fan_in: n_in, fan_out: n_out },
        )?;
        let bias = reg.register(format!("{name}.bias"), vec![n_out], ParamKind::Bias)?;
        Ok(Self { weight, bias, n_in, n_out, name: name.to_owned() })
    }

    pub fn forward<T: Scalar>(&self, tape: &mut Tape<T>, p: &Bound, x: Var) -> Result<Var, LayerError> {
        let n = tape.shape(x).last().copied().unwrap_or(0);
        if n != self.n_in {
            return Err(LayerError::Width { layer: self.name.clone(), expected: self.n_in, got: n });
        }
        Ok(tape.linear(x, p.var(self.weight), p.var(self.bias))?)
    }
}

/// `x + scale · conv₂(relu(conv₁(x)))` with two 3×3 same-padding convs.
#[derive(Clone, Debug)]
pub struct ResidualBlock {
    pub conv1: ConvLayer,
    pub conv2: ConvLayer,
    pub scale: f64,
    pub width: usize,
}

impl ResidualBlock {
    pub fn new<T: Scalar>(reg: &mut ParamRegistry<T>, name: &str, width: usize, scale: f64) -> Result<Self, LayerError> {
        Ok(Self {
            conv1: ConvLayer::new(reg, &format!("{name}.conv1"), width, width, 3, 1, 1)?,
            conv2: ConvLayer::new(reg, &format!("{name}.conv2"), width, width, 3, 1, 1)?,
            scale,
            width,
        })
    }

    pub fn forward<T: Scalar>(&self, tape: &mut Tape<T>, p: &Bound, x: Var) -> Result<Var, LayerError> {
        let h = self.conv1.forward(tape, p, x)?;
        let h = tape.relu(h);
        let h = self.conv2.forward(tape, p, h)?;
        let h = tape.scale(h, T::lit(self.scale));
        Ok(tape.add(x, h)?)
    }
}

#[cfg(test)]
mod tests {
    use rand::Rng;

    use super::*;
    use crate::tensor::{grad_check_many, Probe};

    fn random(shape: &[usize], seed: u64) -> Tensor<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n = shape.iter().product();
        Tensor::new(shape.to_vec(), (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect()).unwrap()
    }

    #[test]
    fn init_is_deterministic_with_zero_biases() {
        let build = |seed| {
            let mut reg = ParamRegistry::<f32>::new();
            ConvLayer::new(&mut reg, "c", 4, 8, 3, 1, 1).unwrap();
            LinearLayer::new(&mut reg, "l", 8, 2).unwrap();
            reg.init_params(seed);
            reg
        };
        let (a, b) = (build(9), build(9));
        for ((na, ta), (nb, tb)) in a.iter().zip(b.iter()) {
            assert_eq!(na, nb);
            assert!(ta.data().iter().zip(tb.data()).all(|(x, y)| x.to_bits() == y.to_bits()));
        }
        for id in a.ids() {
            if a.kind(id) == ParamKind::Bias {
                assert!(a.get(id).data().iter().all(|v| *v == 0.0));
            }
        }
        assert_ne!(build(10).get(ParamId(0)), a.get(ParamId(0)));
    }

    #[test]
    fn glorot_kernel_standard_deviation() {
        let mut reg = ParamRegistry::<f64>::new();
        ConvLayer::new(&mut reg, "c", 64, 64, 3, 1, 1).unwrap();
        reg.init_params(3);
        let k = reg.get(ParamId(0)).data();
        let a = (6.0f64 / (576.0 + 576.0)).sqrt();
        let mean = k.iter().sum::<f64>() / k.len() as f64;
        let std = (k.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / k.len() as f64).sqrt();
        let want = a / 3f64.sqrt();
        assert!((std - want).abs() < 0.1 * want, "std {std} vs {want}");
        assert!(k.iter().all(|v| v.abs() <= a));
    }

    #[test]
    fn duplicate_names_rejected() {
        let mut reg = ParamRegistry::<f32>::new();
        ConvLayer::new(&mut reg, "c", 1, 1, 1, 1, 0).unwrap();
        assert!(matches!(ConvLayer::new(&mut reg, "c", 1, 1, 1, 1, 0), Err(LayerError::DuplicateName(_))));
    }

    #[test]
    fn linear_examples() {
        let mut reg = ParamRegistry::<f64>::new();
        let eye = LinearLayer::new(&mut reg, "eye", 3, 3).unwrap();
        let one = LinearLayer::new(&mut reg, "one", 2, 1).unwrap();
        *reg.get_mut(eye.weight) = Tensor::from_f64(vec![3, 3], &[1., 0., 0., 0., 1., 0., 0., 0., 1.]).unwrap();
        *reg.get_mut(one.weight) = Tensor::from_f64(vec![1, 2], &[1.0, 1.0]).unwrap();
        *reg.get_mut(one.bias) = Tensor::from_f64(vec![1], &[0.5]).unwrap();
        let mut t = Tape::new();
        let p = reg.bind(&mut t, false);
        let x = t.constant(Tensor::from_f64(vec![2, 3], &[1., -2., 3., 4., 5., -6.]).unwrap());
        let y = eye.forward(&mut t, &p, x).unwrap();
        assert_eq!(t.value(y).data(), t.value(x).data());
        let x = t.constant(Tensor::from_f64(vec![1, 2], &[2.0, 3.0]).unwrap());
        let y = one.forward(&mut t, &p, x).unwrap();
        assert_eq!(t.value(y).data(), &[5.5]);
        let bad = t.constant(Tensor::zeros(vec![1, 3]));
        assert!(matches!(one.forward(&mut t, &p, bad), Err(LayerError::Width { .. })));
    }

    #[test]
    fn linear_matches_nested_loop_oracle() {
        let mut reg = ParamRegistry::<f64>::new();
        let l = LinearLayer::new(&mut reg, "l", 5, 3).unwrap();
        *reg.get_mut(l.weight) = random(&[3, 5], 1);
        *reg.get_mut(l.bias) = random(&[3], 2);
        let x = random(&[4, 5], 3);
        let mut t = Tape::new();
        let p = reg.bind(&mut t, false);
        let xv = t.constant(x.clone());
        let y = l.forward(&mut t, &p, xv).unwrap();
        let (w, b) = (reg.get(l.weight).data(), reg.get(l.bias).data());
        for r in 0..4 {
            for o in 0..3 {
                let want = b[o] + (0..5).map(|i| x.data()[r * 5 + i] * w[o * 5 + i]).sum::<f64>();
                assert!((t.value(y).data()[r * 3 + o] - want).abs() < 1e-6);
            }
        }
    }

    #[test]
    fn residual_identity_cases() {
        let mut reg = ParamRegistry::<f32>::new();
        let block = ResidualBlock::new(&mut reg, "r", 4, 0.1).unwrap();
        reg.init_params(5);
        for id in [block.conv2.kernel, block.conv2.bias] {
            reg.get_mut(id).data_mut().iter_mut().for_each(|v| *v = 0.0);
        }
        let x = random(&[4, 5, 6], 8).cast::<f32>();
        let mut t = Tape::new();
        let p = reg.bind(&mut t, false);
        let xv = t.constant(x.clone());
        let y = block.forward(&mut t, &p, xv).unwrap();
        assert_eq!(t.value(y), &x);

        let mut reg = ParamRegistry::<f32>::new();
        let mut block = ResidualBlock::new(&mut reg, "r", 4, 0.1).unwrap();
        reg.init_params(5);
        block.scale = 0.0;
        let mut t = Tape::new();
        let p = reg.bind(&mut t, false);
        let xv = t.constant(x.clone());
        let y = block.forward(&mut t, &p, xv).unwrap();
        assert_eq!(t.value(y), &x);

        let bad = t.constant(Tensor::zeros(vec![3, 5, 6]));
        assert!(matches!(block.forward(&mut t, &p, bad), Err(LayerError::Width { .. })));
    }

    #[test]
    fn residual_equals_primitive_composition() {
        let mut reg = ParamRegistry::<f32>::new();
        let block = ResidualBlock::new(&mut reg, "r", 3, 0.1).unwrap();
        reg.init_params(17);
        let x = random(&[3, 6, 7], 4).cast::<f32>();
        let mut t = Tape::new();
        let p = reg.bind(&mut t, false);
        let xv = t.constant(x.clone());
        let y = block.forward(&mut t, &p, xv).unwrap();

        let mut u = Tape::new();
        let k1 = u.constant(reg.get(block.conv1.kernel).clone());
        let b1 = u.constant(reg.get(block.conv1.bias).clone());
        let k2 = u.constant(reg.get(block.conv2.kernel).clone());
        let b2 = u.constant(reg.get(block.conv2.bias).clone());
        let xu = u.constant(x);
        let h = u.conv2d(xu, k1, b1, 1, 1).unwrap();
        let h = u.relu(h);
        let h = u.conv2d(h, k2, b2, 1, 1).unwrap();
        let h = u.scale(h, 0.1);
        let want = u.add(xu, h).unwrap();
        let (a, b) = (t.value(y).data(), u.value(want).data());
        assert!(a.iter().zip(b).all(|(p, q)| p.to_bits() == q.to_bits()));
    }

    #[test]
    fn layers_pass_grad_check() {
        let mut reg = ParamRegistry::<f64>::new();
        let conv = ConvLayer::new(&mut reg, "c", 2, 3, 3, 2, 1).unwrap();
        let res = ResidualBlock::new(&mut reg, "r", 3, 0.1).unwrap();
        let lin = LinearLayer::new(&mut reg, "l", 3, 2).unwrap();
        reg.init_params(23);
        // Nonzero biases exercise the bias gradients.
        for id in reg.ids().collect::<Vec<_>>() {
            if reg.kind(id) == ParamKind::Bias {
                let n = reg.get(id).len();
                *reg.get_mut(id) = random(&[n], 100 + id.0 as u64).map(|v| 0.3 * v);
            }
        }
        let mut inputs: Vec<Tensor<f64>> = reg.iter().map(|(_, t)| t.clone()).collect();
        inputs.push(random(&[2, 7, 7], 99));
        let n = reg.len();
        let report = grad_check_many(
            |t: &mut Tape<f64>, v: &[Var]| {
                let p = Bound::from_vars(v[..n].to_vec());
                let h = conv.forward(t, &p, v[n])?;
                let h = res.forward(t, &p, h)?;
                let h = t.reshape(h, vec![3, 16])?;
                let w = t.constant(random(&[16, 3], 7));
                let h = t.matmul(h, w)?;
                let o = lin.forward(t, &p, h)?;
                let o = t.mul(o, o)?;
                Ok::<_, LayerError>(t.sum(o)?)
            },
            &inputs,
            1e-5,
            Probe::all(),
        )
        .unwrap();
        assert!(report.max_rel_error < 1e-5, "{report:?}");
    }
}
