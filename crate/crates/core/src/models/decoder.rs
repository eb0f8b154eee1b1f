use super::{check_shape, ModelError, ShapeConfig};
use crate::coords::{pixel_center, CoordinateBatch};
use crate::nn::{Bound, LinearLayer, ParamRegistry};
use crate::tensor::{Scalar, Tape, Tensor, Var};

/// Number of latent neighbours blended per query.
pub const NEIGHBOURS: usize = 4;
/// Relative coordinate (2) plus cell size (2).
pub const GEOMETRY_INPUTS: usize = 4;

/// Per-query neighbour selection, decoder geometry inputs and blend weights,
/// laid out query-major: row `4q + t` is neighbour `t` of query `q`.
#[derive(Clone, Debug, PartialEq)]
pub struct EnsemblePlan {
    /// Flat latent index `i·w_L + j` of each neighbour.
    pub rows: Vec<usize>,
    /// `[Δy·h_L, Δx·w_L, cell_y·h_L, cell_x·w_L]` per neighbour.
    pub geometry: Vec<[f64; 4]>,
    /// Normalized blend weight per neighbour.
    pub weights: Vec<f64>,
}

/// Lower and upper neighbour indices along one axis, and their weights.
fn axis_neighbours(v: f64, n: usize) -> ([usize; 2], [f64; 2]) {
    if n == 1 {
        return ([0, 0], [0.5, 0.5]);
    }
    // Continuous index of v in pixel-centre units; snap exact centres so a
    // query on a latent centre picks that centre as its lower neighbour.
    let u = (v * n as f64 + n as f64 - 1.0) / 2.0;
    let r = u.round();
    let u = if (u - r).abs() < 1e-9 { r } else { u };
    let i0 = (u.floor().max(0.0) as usize).min(n - 2);
    let i1 = i0 + 1;
    // Each neighbour is weighted by the distance to the opposite one.
    let w0 = (v - pixel_center(i1, n)).abs();
    let w1 = (v - pixel_center(i0, n)).abs();
    ([i0, i1], [w0, w1])
}

/// Local-ensemble plan for `queries` over an `h_l × w_l` latent grid.
pub fn ensemble_plan(h_l: usize, w_l: usize, queries: &CoordinateBatch) -> EnsemblePlan {
    let n = queries.len();
    let mut plan = EnsemblePlan {
        rows: Vec::with_capacity(NEIGHBOURS * n),
        geometry: Vec::with_capacity(NEIGHBOURS * n),
        weights: Vec::with_capacity(NEIGHBOURS * n),
    };
    for (c, cell) in queries.coords().iter().zip(queries.cells()) {
        let (iy, wy) = axis_neighbours(c[0], h_l);
        let (ix, wx) = axis_neighbours(c[1], w_l);
        let total = (wy[0] + wy[1]) * (wx[0] + wx[1]);
        for a in 0..2 {
            for b in 0..2 {
                let (i, j) = (iy[a], ix[b]);
                plan.rows.push(i * w_l + j);
                plan.geometry.push([
                    (c[0] - pixel_center(i, h_l)) * h_l as f64,
                    (c[1] - pixel_center(j, w_l)) * w_l as f64,
                    cell[0] * h_l as f64,
                    cell[1] * w_l as f64,
                ]);
                plan.weights.push(wy[a] * wx[b] / total);
            }
        }
    }
    plan
}

/// MLP mapping unfolded features plus query geometry to one value.
#[derive(Clone, Debug)]
pub struct CoordDecoder {
    pub hidden: Vec<LinearLayer>,
    pub out: LinearLayer,
    features: [usize; 3],
    name: String,
}

impl CoordDecoder {
    pub fn new<T: Scalar>(
        reg: &mut ParamRegistry<T>,
        name: &str,
        shape: &ShapeConfig,
        layers: usize,
        width: usize,
    ) -> Result<Self, ModelError> {
        let mut n_in = Self::input_dim(shape.c_f);
        let mut hidden = Vec::with_capacity(layers);
        for i in 0..layers {
            hidden.push(LinearLayer::new(reg, &format!("{name}.hidden{i}"), n_in, width)?);
            n_in = width;
        }
        let out = LinearLayer::new(reg, &format!("{name}.out"), n_in, 1)?;
        Ok(Self { hidden, out, features: shape.feature(), name: name.to_owned() })
    }

    /// `9·c_F` unfolded features plus the geometry inputs.
    pub fn input_dim(c_f: usize) -> usize {
        9 * c_f + GEOMETRY_INPUTS
    }

    /// The MLP alone, on an `n × input_dim` batch.
    pub fn mlp<T: Scalar>(&self, tape: &mut Tape<T>, p: &Bound, x: Var) -> Result<Var, ModelError> {
        let mut h = x;
        for layer in &self.hidden {
            h = layer.forward(tape, p, h)?;
            h = tape.relu(h);
        }
        Ok(self.out.forward(tape, p, h)?)
    }

    /// Decoded value at every query: a weighted blend of MLP evaluations at
    /// the four surrounding latent positions.
    pub fn forward<T: Scalar>(
        &self,
        tape: &mut Tape<T>,
        p: &Bound,
        features: Var,
        queries: &CoordinateBatch,
    ) -> Result<Var, ModelError> {
        check_shape(&self.name, tape.shape(features), &self.features)?;
        if queries.is_empty() {
            return Err(ModelError::NoQueries);
        }
        let [_, h_l, w_l] = self.features;
        let plan = ensemble_plan(h_l, w_l, queries);
        let m = plan.rows.len();
        let unfolded = tape.unfold3x3(features)?;
        let local = tape.gather_rows(unfolded, &plan.rows)?;
        let geometry: Vec<T> = plan.geometry.iter().flatten().map(|&v| T::lit(v)).collect();
        let geometry = tape.constant(Tensor::new(vec![m, GEOMETRY_INPUTS], geometry)?);
        let input = tape.concat_cols(&[local, geometry])?;
        let values = self.mlp(tape, p, input)?;
        let weights = tape.constant(Tensor::new(vec![m, 1], plan.weights.iter().map(|&w| T::lit(w)).collect())?);
        let weighted = tape.mul(values, weights)?;
        let grouped = tape.reshape(weighted, vec![queries.len(), NEIGHBOURS])?;
        Ok(tape.row_sum(grouped)?)
    }
}
