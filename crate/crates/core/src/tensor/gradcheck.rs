//! Central finite-difference verification of tape gradients.

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{Tape, Tensor, TensorError, Var};

/// Which input components to perturb.
#[derive(Clone, Copy, Debug)]
pub struct Probe {
    /// Upper bound on perturbed components per input; `None` checks all.
    pub max_components: Option<usize>,
    pub seed: u64,
}

impl Probe {
    pub fn all() -> Self {
        Self { max_components: None, seed: 0 }
    }

    pub fn sampled(max_components: usize, seed: u64) -> Self {
        Self { max_components: Some(max_components), seed }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct GradCheckReport {
    pub max_rel_error: f64,
    /// (input, component) with the largest error.
    pub worst: (usize, usize),
    pub checked: usize,
}

/// `|a − n| / max(1e-12, |a| + |n|)`.
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / (analytic.abs() + numeric.abs()).max(1e-12)
}

fn evaluate<F, E>(f: &F, inputs: &[Tensor<f64>], track: bool) -> Result<(Tape<f64>, Vec<Var>, Var), E>
where
    F: Fn(&mut Tape<f64>, &[Var]) -> Result<Var, E>,
    E: From<TensorError>,
{
    let mut tape = Tape::new();
    let vars: Vec<Var> = inputs.iter().map(|x| tape.leaf(x.clone(), track)).collect();
    let out = f(&mut tape, &vars)?;
    let value = tape.value(out);
    if !value.is_scalar() {
        return Err(TensorError::NonScalarLoss(value.shape().to_vec()).into());
    }
    Ok((tape, vars, out))
}

/// Max relative error between the tape gradient of scalar `f` at `x` and a
/// central difference with step `h`.
pub fn grad_check<F, E>(f: F, x: &Tensor<f64>, h: f64) -> Result<f64, E>
where
    F: Fn(&mut Tape<f64>, Var) -> Result<Var, E>,
    E: From<TensorError>,
{
    let report = grad_check_many(|t: &mut Tape<f64>, v: &[Var]| f(t, v[0]), std::slice::from_ref(x), h, Probe::all())?;
    Ok(report.max_rel_error)
}

/// Gradient check of `f` with respect to every tensor in `inputs`.
pub fn grad_check_many<F, E>(f: F, inputs: &[Tensor<f64>], h: f64, probe: Probe) -> Result<GradCheckReport, E>
where
    F: Fn(&mut Tape<f64>, &[Var]) -> Result<Var, E>,
    E: From<TensorError>,
{
    let (mut tape, vars, out) = evaluate(&f, inputs, true)?;
    tape.backward(out)?;
    let analytic: Vec<Vec<f64>> = vars
        .iter()
        .zip(inputs)
        .map(|(v, x)| tape.grad(*v).map(<[f64]>::to_vec).unwrap_or_else(|| vec![0.0; x.len()]))
        .collect();
    drop(tape);

    let mut rng = ChaCha8Rng::seed_from_u64(probe.seed);
    let mut report = GradCheckReport { max_rel_error: 0.0, worst: (0, 0), checked: 0 };
    let mut shifted = inputs.to_vec();
    for (i, x) in inputs.iter().enumerate() {
        let components: Vec<usize> = match probe.max_components {
            Some(m) if m < x.len() => {
                let mut c = sample(&mut rng, x.len(), m).into_vec();
                c.sort_unstable();
                c
            }
            _ => (0..x.len()).collect(),
        };
        for c in components {
            let base = x.data()[c];
            shifted[i].data_mut()[c] = base + h;
            let (t, _, o) = evaluate(&f, &shifted, false)?;
            let plus = t.value(o).item();
            shifted[i].data_mut()[c] = base - h;
            let (t, _, o) = evaluate(&f, &shifted, false)?;
            let minus = t.value(o).item();
            shifted[i].data_mut()[c] = base;
            let numeric = (plus - minus) / (2.0 * h);
            let err = relative_error(analytic[i][c], numeric);
            report.checked += 1;
            if err > report.max_rel_error || report.checked == 1 {
                report.max_rel_error = err.max(report.max_rel_error);
                report.worst = (i, c);
            }
        }
    }
    Ok(report)
}
