//! Time-distributed tanh dense layer, stacked LSTM layers and a linear head,
//! with a batched forward pass and exact backpropagation through time.
//!
//! Weights are stored input-major (`x W` rather than `W x`) so a whole batch
//! advances with one matrix product per layer and timestep. Gate blocks are
//! stacked in the order forget, candidate, input, output.

use ndarray::{s, Array1, Array2, Array3, ArrayView1, ArrayView2, ArrayView3, Axis, Zip};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::compensation::FEATURE_DIM;
use crate::coupling::CouplingVariable;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct NetworkTopology {
    pub input_len: usize,
    pub feature_dim: usize,
    pub dense_units: usize,
    pub lstm_depth: usize,
    pub lstm_units: usize,
    pub output_dim: usize,
}

impl NetworkTopology {
    pub const DEFAULT_INPUT_LEN: usize = 50;

    pub fn new(input_len: usize, dense_units: usize, lstm_depth: usize, lstm_units: usize) -> Self {
        Self {
            input_len,
            feature_dim: FEATURE_DIM,
            dense_units,
            lstm_depth,
            lstm_units,
            output_dim: 1,
        }
    }

    /// Tuned topology for one coupling variable.
    pub fn for_variable(var: CouplingVariable) -> Self {
        let (m, k, l) = match var {
            CouplingVariable::Xmv => (118, 2, 162),
            CouplingVariable::Xmomega => (174, 3, 92),
            CouplingVariable::Fev => (151, 2, 188),
            CouplingVariable::Feomega => (207, 4, 75),
        };
        Self::new(Self::DEFAULT_INPUT_LEN, m, k, l)
    }

    /// Small topology for desk-scale runs.
    pub fn reduced() -> Self {
        Self::new(Self::DEFAULT_INPUT_LEN, 32, 1, 32)
    }

    /// Smallest useful network, for gradient checks.
    pub fn tiny() -> Self {
        Self::new(3, 2, 1, 2)
    }

    pub fn validate(&self) -> Result<()> {
        if self.feature_dim != FEATURE_DIM || self.output_dim != 1 {
            return Err(Error::Topology(format!(
                "feature_dim must be {FEATURE_DIM} and output_dim 1, got {} and {}",
                self.feature_dim, self.output_dim
            )));
        }
        if self.input_len == 0 || self.dense_units == 0 || self.lstm_depth == 0 || self.lstm_units == 0 {
            return Err(Error::Topology(format!("all sizes must be positive: {self:?}")));
        }
        Ok(())
    }

    fn layer_input(&self, layer: usize) -> usize {
        if layer == 0 {
            self.dense_units
        } else {
            self.lstm_units
        }
    }

    pub fn parameter_count(&self) -> usize {
        let (m, l) = (self.dense_units, self.lstm_units);
        let dense = self.feature_dim * m + m;
        let lstm: usize = (0..self.lstm_depth)
            .map(|k| 4 * l * (self.layer_input(k) + l + 1))
            .sum();
        dense + lstm + l + 1
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LstmLayer {
    /// `in x 4l`
    pub w: Array2<f64>,
    /// `l x 4l`
    pub u: Array2<f64>,
    /// `4l`
    pub b: Array1<f64>,
}

/// All trainable weights. Also used to hold gradients.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams {
    pub topology: NetworkTopology,
    /// `feature_dim x m`
    pub w_in: Array2<f64>,
    pub b_in: Array1<f64>,
    pub layers: Vec<LstmLayer>,
    /// `l`
    pub w_out: Array1<f64>,
    pub b_out: f64,
}

impl ModelParams {
    pub fn zeros(topology: NetworkTopology) -> Result<Self> {
        topology.validate()?;
        let (m, l) = (topology.dense_units, topology.lstm_units);
        let layers = (0..topology.lstm_depth)
            .map(|k| LstmLayer {
                w: Array2::zeros((topology.layer_input(k), 4 * l)),
                u: Array2::zeros((l, 4 * l)),
                b: Array1::zeros(4 * l),
            })
            .collect();
        Ok(Self {
            topology,
            w_in: Array2::zeros((topology.feature_dim, m)),
            b_in: Array1::zeros(m),
            layers,
            w_out: Array1::zeros(l),
            b_out: 0.0,
        })
    }

    /// Uniform `±1/sqrt(fan_in)` weights, zero biases except the forget gate
    /// which starts at 1.
    pub fn init(topology: NetworkTopology, seed: u64) -> Result<Self> {
        let mut p = Self::zeros(topology)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut fill = |a: &mut [f64], fan_in: usize| {
            let r = 1.0 / (fan_in as f64).sqrt();
            for v in a {
                *v = rng.gen_range(-r..r);
            }
        };
        let l = topology.lstm_units;
        fill(p.w_in.as_slice_mut().unwrap(), topology.feature_dim);
        for layer in &mut p.layers {
            let fan_in = layer.w.nrows() + l;
            fill(layer.w.as_slice_mut().unwrap(), fan_in);
            fill(layer.u.as_slice_mut().unwrap(), fan_in);
            layer.b.slice_mut(s![..l]).fill(1.0);
        }
        fill(p.w_out.as_slice_mut().unwrap(), l);
        Ok(p)
    }

    /// Every tensor as a flat slice, in a fixed order.
    pub fn slices(&self) -> Vec<&[f64]> {
        let mut v: Vec<&[f64]> = vec![self.w_in.as_slice().unwrap(), self.b_in.as_slice().unwrap()];
        for layer in &self.layers {
            v.push(layer.w.as_slice().unwrap());
            v.push(layer.u.as_slice().unwrap());
            v.push(layer.b.as_slice().unwrap());
        }
        v.push(self.w_out.as_slice().unwrap());
        v.push(std::slice::from_ref(&self.b_out));
        v
    }

    pub fn slices_mut(&mut self) -> Vec<&mut [f64]> {
        let mut v: Vec<&mut [f64]> = vec![
            self.w_in.as_slice_mut().unwrap(),
            self.b_in.as_slice_mut().unwrap(),
        ];
        for layer in &mut self.layers {
            v.push(layer.w.as_slice_mut().unwrap());
            v.push(layer.u.as_slice_mut().unwrap());
            v.push(layer.b.as_slice_mut().unwrap());
        }
        v.push(self.w_out.as_slice_mut().unwrap());
        v.push(std::slice::from_mut(&mut self.b_out));
        v
    }

    pub fn len(&self) -> usize {
        self.topology.parameter_count()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn to_flat(&self) -> Vec<f64> {
        self.slices().concat()
    }

    pub fn get_flat(&self, index: usize) -> f64 {
        let mut i = index;
        for s in self.slices() {
            if i < s.len() {
                return s[i];
            }
            i -= s.len();
        }
        panic!("parameter index {index} out of range");
    }

    pub fn set_flat(&mut self, index: usize, value: f64) {
        let mut i = index;
        for s in self.slices_mut() {
            if i < s.len() {
                s[i] = value;
                return;
            }
            i -= s.len();
        }
        panic!("parameter index {index} out of range");
    }

    /// Name of the tensor holding flat parameter `index`.
    pub fn flat_name(&self, index: usize) -> String {
        let mut names = vec!["W_in".to_string(), "b_in".to_string()];
        for k in 0..self.layers.len() {
            names.extend([format!("lstm{k}.W"), format!("lstm{k}.U"), format!("lstm{k}.b")]);
        }
        names.extend(["W_out".to_string(), "b_out".to_string()]);
        let mut i = index;
        for (name, s) in names.into_iter().zip(self.slices()) {
            if i < s.len() {
                return format!("{name}[{i}]");
            }
            i -= s.len();
        }
        format!("#{index}")
    }

    pub fn norm(&self) -> f64 {
        self.slices()
            .iter()
            .flat_map(|s| s.iter())
            .map(|v| v * v)
            .sum::<f64>()
            .sqrt()
    }

    pub fn scale(&mut self, factor: f64) {
        for s in self.slices_mut() {
            s.iter_mut().for_each(|v| *v *= factor);
        }
    }

    pub fn is_finite(&self) -> bool {
        self.slices().iter().all(|s| s.iter().all(|v| v.is_finite()))
    }

    /// Forward pass over a batch of scaled sequences shaped
    /// `batch x input_len x feature_dim`.
    pub fn forward(&self, input: ArrayView3<f64>) -> Result<(Array1<f64>, ForwardCache)> {
        let t = &self.topology;
        let (batch, len, dim) = input.dim();
        if len != t.input_len || dim != t.feature_dim {
            return Err(Error::Topology(format!(
                "input is {len}x{dim}, topology expects {}x{}",
                t.input_len, t.feature_dim
            )));
        }
        let l = t.lstm_units;
        let mut dense = Vec::with_capacity(len);
        for step in 0..len {
            let x = input.index_axis(Axis(1), step);
            let mut d = x.dot(&self.w_in);
            d += &self.b_in;
            d.mapv_inplace(f64::tanh);
            dense.push(d);
        }
        let mut layers: Vec<LayerCache> = Vec::with_capacity(self.layers.len());
        for (k, layer) in self.layers.iter().enumerate() {
            let mut cache = LayerCache::new(batch, l, len);
            for step in 0..len {
                let x = if k == 0 {
                    dense[step].view()
                } else {
                    layers[k - 1].h[step + 1].view()
                };
                let mut z = x.dot(&layer.w);
                z += &cache.h[step].dot(&layer.u);
                z += &layer.b;
                activate_gates(&mut z, l);
                let c_prev = &cache.c[step];
                let mut c = Array2::zeros((batch, l));
                Zip::from(&mut c)
                    .and(c_prev)
                    .and(z.slice(s![.., ..l]))
                    .and(z.slice(s![.., l..2 * l]))
                    .and(z.slice(s![.., 2 * l..3 * l]))
                    .for_each(|c, &cp, &f, &g, &i| *c = f * cp + i * g);
                let tc = c.mapv(f64::tanh);
                let h = &tc * &z.slice(s![.., 3 * l..]);
                cache.gates.push(z);
                cache.c.push(c);
                cache.tanh_c.push(tc);
                cache.h.push(h);
            }
            layers.push(cache);
        }
        let top = &layers.last().expect("at least one layer").h[len];
        let out = top.dot(&self.w_out) + self.b_out;
        if out.iter().any(|v| !v.is_finite()) {
            return Err(Error::Numeric("non-finite network output".into()));
        }
        Ok((
            out,
            ForwardCache {
                input: input.to_owned(),
                dense,
                layers,
            },
        ))
    }

    /// Prediction for a single scaled `input_len x feature_dim` sequence.
    pub fn predict(&self, sequence: ArrayView2<f64>) -> Result<f64> {
        let input = sequence.insert_axis(Axis(0));
        Ok(self.forward(input)?.0[0])
    }

    /// Gradient of a scalar loss given its derivative with respect to each
    /// output of the batch the cache was built from.
    pub fn backward(&self, cache: &ForwardCache, d_out: ArrayView1<f64>) -> Result<ModelParams> {
        let t = &self.topology;
        let (batch, len, _) = cache.input.dim();
        if d_out.len() != batch || cache.layers.len() != self.layers.len() || cache.dense.len() != len {
            return Err(Error::Topology(format!(
                "cache holds {batch} sequences, gradient has {}",
                d_out.len()
            )));
        }
        let l = t.lstm_units;
        let mut grad = ModelParams::zeros(*t)?;
        let top = &cache.layers[self.layers.len() - 1];
        grad.w_out = top.h[len].t().dot(&d_out);
        grad.b_out = d_out.sum();

        // gradient arriving at each layer's hidden output, per timestep
        let mut dh_above: Vec<Array2<f64>> = vec![Array2::zeros((batch, l)); len];
        dh_above[len - 1] = d_out
            .insert_axis(Axis(1))
            .dot(&self.w_out.view().insert_axis(Axis(0)));

        let mut dz = Array2::<f64>::zeros((batch, 4 * l));
        for k in (0..self.layers.len()).rev() {
            let layer = &self.layers[k];
            let lc = &cache.layers[k];
            let g = &mut grad.layers[k];
            let in_dim = t.layer_input(k);
            let mut dx_below: Vec<Array2<f64>> = Vec::with_capacity(len);
            dx_below.resize(len, Array2::zeros((batch, in_dim)));
            let mut dh_next = Array2::<f64>::zeros((batch, l));
            let mut dc_next = Array2::<f64>::zeros((batch, l));
            for step in (0..len).rev() {
                let gates = &lc.gates[step];
                let dh = &dh_above[step] + &dh_next;
                for ((((mut row, dh_r), gate_r), tc_r), (cp_r, mut dc_r)) in dz
                    .outer_iter_mut()
                    .zip(dh.outer_iter())
                    .zip(gates.outer_iter())
                    .zip(lc.tanh_c[step].outer_iter())
                    .zip(lc.c[step].outer_iter().zip(dc_next.outer_iter_mut()))
                {
                    for j in 0..l {
                        let (f, gg, i, o) = (gate_r[j], gate_r[l + j], gate_r[2 * l + j], gate_r[3 * l + j]);
                        let tc = tc_r[j];
                        let d_o = dh_r[j] * tc;
                        let dc = dc_r[j] + dh_r[j] * o * (1.0 - tc * tc);
                        row[j] = dc * cp_r[j] * f * (1.0 - f);
                        row[l + j] = dc * i * (1.0 - gg * gg);
                        row[2 * l + j] = dc * gg * i * (1.0 - i);
                        row[3 * l + j] = d_o * o * (1.0 - o);
                        dc_r[j] = dc * f;
                    }
                }
                let x = if k == 0 {
                    cache.dense[step].view()
                } else {
                    cache.layers[k - 1].h[step + 1].view()
                };
                g.w += &x.t().dot(&dz);
                g.u += &lc.h[step].t().dot(&dz);
                g.b += &dz.sum_axis(Axis(0));
                dx_below[step] = dz.dot(&layer.w.t());
                dh_next = dz.dot(&layer.u.t());
            }
            dh_above = dx_below;
        }

        for step in 0..len {
            let d = &cache.dense[step];
            let mut dpre = dh_above[step].clone();
            Zip::from(&mut dpre).and(d).for_each(|g, &a| *g *= 1.0 - a * a);
            grad.w_in += &cache.input.index_axis(Axis(1), step).t().dot(&dpre);
            grad.b_in += &dpre.sum_axis(Axis(0));
        }
        Ok(grad)
    }
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

fn activate_gates(z: &mut Array2<f64>, l: usize) {
    for mut row in z.outer_iter_mut() {
        for (j, v) in row.iter_mut().enumerate() {
            *v = if (l..2 * l).contains(&j) { v.tanh() } else { sigmoid(*v) };
        }
    }
}

#[derive(Debug, Clone)]
struct LayerCache {
    /// Activated gates per step, `batch x 4l`.
    gates: Vec<Array2<f64>>,
    /// `len + 1` entries, the first being the zero initial state.
    c: Vec<Array2<f64>>,
    h: Vec<Array2<f64>>,
    tanh_c: Vec<Array2<f64>>,
}

impl LayerCache {
    fn new(batch: usize, l: usize, len: usize) -> Self {
        let mut c = Vec::with_capacity(len + 1);
        let mut h = Vec::with_capacity(len + 1);
        c.push(Array2::zeros((batch, l)));
        h.push(Array2::zeros((batch, l)));
        Self {
            gates: Vec::with_capacity(len),
            c,
            h,
            tanh_c: Vec::with_capacity(len),
        }
    }
}

/// Activations kept from [`ModelParams::forward`] for the backward pass.
#[derive(Debug, Clone)]
pub struct ForwardCache {
    input: Array3<f64>,
    dense: Vec<Array2<f64>>,
    layers: Vec<LayerCache>,
}

impl ForwardCache {
    pub fn batch_size(&self) -> usize {
        self.input.dim().0
    }
}
