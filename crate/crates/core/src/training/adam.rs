use super::TrainError;
use crate::nn::ParamRegistry;
use crate::tensor::{Scalar, Tensor};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AdamConfig {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    /// Decoupled weight decay λ.
    pub weight_decay: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self { beta1: 0.9, beta2: 0.999, eps: 1e-8, weight_decay: 1e-4 }
    }
}

/// First and second moment estimates, one buffer per registry entry.
#[derive(Clone, Debug, PartialEq)]
pub struct AdamState<T> {
    pub m: Vec<Tensor<T>>,
    pub v: Vec<Tensor<T>>,
    pub t: u64,
}

impl<T: Scalar> AdamState<T> {
    pub fn new(reg: &ParamRegistry<T>) -> Self {
        let zeros: Vec<Tensor<T>> = reg.iter().map(|(_, p)| Tensor::zeros(p.shape().to_vec())).collect();
        Self { m: zeros.clone(), v: zeros, t: 0 }
    }
}

/// `η·γ^epoch`.
pub fn lr_at(epoch: usize, lr: f64, gamma: f64) -> f64 {
    lr * gamma.powf(epoch as f64)
}

/// One Adam update of every parameter from its accumulated gradient.
///
/// Weight decay is decoupled: `θ ← θ − lr·λ·θ` first, then the
/// bias-corrected Adam step. Gradients are cleared afterwards.
pub fn adam_step<T: Scalar>(
    reg: &mut ParamRegistry<T>,
    state: &mut AdamState<T>,
    lr: f64,
    cfg: &AdamConfig,
) -> Result<(), TrainError> {
    if state.m.len() != reg.len() {
        return Err(TrainError::Optimizer(format!("state holds {} buffers for {} parameters", state.m.len(), reg.len())));
    }
    let ids: Vec<_> = reg.ids().collect();
    for &id in &ids {
        if reg.grad(id).is_none() {
            return Err(TrainError::MissingGradient(reg.name(id).to_owned()));
        }
    }
    state.t += 1;
    let t = state.t as f64;
    let (b1, b2) = (cfg.beta1, cfg.beta2);
    let c1 = 1.0 - b1.powf(t);
    let c2 = 1.0 - b2.powf(t);
    let (lit_b1, lit_b2) = (T::lit(b1), T::lit(b2));
    let (one_b1, one_b2) = (T::lit(1.0 - b1), T::lit(1.0 - b2));
    let decay = T::lit(1.0 - lr * cfg.weight_decay);
    let (lit_c1, lit_c2, lit_lr, lit_eps) = (T::lit(c1), T::lit(c2), T::lit(lr), T::lit(cfg.eps));
    for (k, &id) in ids.iter().enumerate() {
        let (value, grad) = reg.value_and_grad_mut(id);
        let grad = grad.expect("checked above");
        let (m, v) = (state.m[k].data_mut(), state.v[k].data_mut());
        for (((p, &g), m), v) in value.data_mut().iter_mut().zip(grad.data()).zip(m.iter_mut()).zip(v.iter_mut()) {
            *p = *p * decay;
            *m = lit_b1 * *m + one_b1 * g;
            *v = lit_b2 * *v + one_b2 * g * g;
            let m_hat = *m / lit_c1;
            let v_hat = *v / lit_c2;
            *p = *p - lit_lr * m_hat / (v_hat.sqrt() + lit_eps);
        }
    }
    reg.clear_grads();
    Ok(())
}
