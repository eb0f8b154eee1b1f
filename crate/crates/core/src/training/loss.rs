use super::TrainError;
use crate::coords::CoordinateBatch;
use crate::data::Modality;
use crate::models::{ModelBundle, ModelError};
use crate::nn::Bound;
use crate::tensor::{Scalar, Tape, Tensor, Var};

/// Inputs of one optimisation step: both modalities' high-res crops, shared
/// query positions, and the targets of each modality at those positions.
#[derive(Clone, Debug)]
pub struct StepBatch<T> {
    pub hr: [Tensor<T>; 2],
    pub queries: CoordinateBatch,
    pub targets: [Tensor<T>; 2],
}

/// Tape handles of the loss and its three constituents.
#[derive(Clone, Copy, Debug)]
pub struct LossVars {
    pub total: Var,
    pub self_term: Var,
    pub cross_term: Var,
    pub latent_term: Var,
}

/// The four latent grids of one step.
#[derive(Clone, Copy, Debug)]
pub struct Latents {
    /// `E₀⁰(X₀)`.
    pub a: Var,
    /// `E₁⁰(X₁)`.
    pub b: Var,
    /// `E₁¹(X₁)`.
    pub c: Var,
    /// `E₀¹(X₀)`.
    pub d: Var,
}

fn reconstruction<T: Scalar>(
    bundle: &ModelBundle<T>,
    tape: &mut Tape<T>,
    p: &Bound,
    target: Modality,
    latent: Var,
    queries: &CoordinateBatch,
    truth: Var,
) -> Result<Var, TrainError> {
    if tape.shape(truth) != [queries.len()] {
        return Err(TrainError::Batch(format!("{} queries but target shape {:?}", queries.len(), tape.shape(truth))));
    }
    let f = bundle.extract_features(tape, p, target, latent)?;
    let y = bundle.decode_at(tape, p, target, f, queries)?;
    Ok(tape.mse(y, truth).map_err(ModelError::from)?)
}

/// Encodes both inputs with all four encoders.
pub fn encode_all<T: Scalar>(
    bundle: &ModelBundle<T>,
    tape: &mut Tape<T>,
    p: &Bound,
    x0: Var,
    x1: Var,
) -> Result<Latents, TrainError> {
    use Modality::{M0, M1};
    Ok(Latents {
        a: bundle.encode(tape, p, M0, M0, x0)?,
        b: bundle.encode(tape, p, M1, M0, x1)?,
        c: bundle.encode(tape, p, M1, M1, x1)?,
        d: bundle.encode(tape, p, M0, M1, x0)?,
    })
}

/// `MSE(D₀(FE₀(a)), X₀ˢ) + MSE(D₁(FE₁(c)), X₁ˢ)`.
pub fn loss_self<T: Scalar>(
    bundle: &ModelBundle<T>,
    tape: &mut Tape<T>,
    p: &Bound,
    z: &Latents,
    queries: &CoordinateBatch,
    truth: [Var; 2],
) -> Result<Var, TrainError> {
    let l0 = reconstruction(bundle, tape, p, Modality::M0, z.a, queries, truth[0])?;
    let l1 = reconstruction(bundle, tape, p, Modality::M1, z.c, queries, truth[1])?;
    Ok(tape.add(l0, l1).map_err(ModelError::from)?)
}

/// `MSE(D₀(FE₀(b)), X₀ˢ) + MSE(D₁(FE₁(d)), X₁ˢ)`: each modality predicted
/// from the other one's input.
pub fn loss_cross<T: Scalar>(
    bundle: &ModelBundle<T>,
    tape: &mut Tape<T>,
    p: &Bound,
    z: &Latents,
    queries: &CoordinateBatch,
    truth: [Var; 2],
) -> Result<Var, TrainError> {
    let l0 = reconstruction(bundle, tape, p, Modality::M0, z.b, queries, truth[0])?;
    let l1 = reconstruction(bundle, tape, p, Modality::M1, z.d, queries, truth[1])?;
    Ok(tape.add(l0, l1).map_err(ModelError::from)?)
}

/// `MSE(u, (u+v)/2)`, computed as `mean(((u − v)·½)²)`.
///
/// The residual `u − (u+v)/2` equals `(u − v)/2`; forming it this way makes
/// the two terms of a pair exact negatives of each other, so they are equal
/// to the last bit.
pub fn half_gap<T: Scalar>(tape: &mut Tape<T>, u: Var, v: Var) -> Result<Var, TrainError> {
    let d = tape.sub(u, v).map_err(ModelError::from)?;
    let h = tape.scale(d, T::lit(0.5));
    let sq = tape.mul(h, h).map_err(ModelError::from)?;
    Ok(tape.mean(sq).map_err(ModelError::from)?)
}

/// Agreement between self- and cross-encoded latents of each modality.
pub fn loss_latent<T: Scalar>(tape: &mut Tape<T>, z: &Latents) -> Result<[Var; 4], TrainError> {
    Ok([half_gap(tape, z.a, z.b)?, half_gap(tape, z.b, z.a)?, half_gap(tape, z.c, z.d)?, half_gap(tape, z.d, z.c)?])
}

fn sum_vars<T: Scalar>(tape: &mut Tape<T>, vars: &[Var]) -> Result<Var, TrainError> {
    let mut acc = vars[0];
    for &v in &vars[1..] {
        acc = tape.add(acc, v).map_err(ModelError::from)?;
    }
    Ok(acc)
}

/// Full objective on `batch`. With `use_latent = false` the latent term is
/// still recorded but left out of the total.
pub fn loss_total<T: Scalar>(
    bundle: &ModelBundle<T>,
    tape: &mut Tape<T>,
    p: &Bound,
    batch: &StepBatch<T>,
    use_latent: bool,
) -> Result<LossVars, TrainError> {
    let x0 = tape.constant(batch.hr[0].clone());
    let x1 = tape.constant(batch.hr[1].clone());
    let t0 = tape.constant(batch.targets[0].clone());
    let t1 = tape.constant(batch.targets[1].clone());
    let z = encode_all(bundle, tape, p, x0, x1)?;
    let self_term = loss_self(bundle, tape, p, &z, &batch.queries, [t0, t1])?;
    let cross_term = loss_cross(bundle, tape, p, &z, &batch.queries, [t0, t1])?;
    let parts = loss_latent(tape, &z)?;
    let latent_term = sum_vars(tape, &parts)?;
    let total = if use_latent {
        sum_vars(tape, &[self_term, cross_term, latent_term])?
    } else {
        tape.add(self_term, cross_term).map_err(ModelError::from)?
    };
    Ok(LossVars { total, self_term, cross_term, latent_term })
}
