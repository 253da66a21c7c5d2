//! Versioned JSON checkpoints. Gate weights are written per gate in the
//! conventional `W x` orientation (`units x inputs`, row-major).

use std::fs;
use std::path::Path;

use ndarray::{s, Array1, Array2};
use serde::{Deserialize, Serialize};

use super::network::{ModelParams, NetworkTopology};
use super::scaler::Scaler;
use super::train::{ModelMetrics, PilstmModel, TrainConfig};
use crate::coupling::CouplingVariable;
use crate::error::{Error, Result};

pub const FORMAT: &str = "teleop-pilstm";
pub const VERSION: u32 = 1;

const GATES: [&str; 4] = ["f", "c", "i", "o"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tensor {
    pub name: String,
    pub shape: Vec<usize>,
    pub data: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub format: String,
    pub version: u32,
    pub variable: CouplingVariable,
    pub topology: NetworkTopology,
    pub tensors: Vec<Tensor>,
    pub scaler: Scaler,
    pub train_config: TrainConfig,
    pub metrics: ModelMetrics,
}

fn matrix(name: String, m: Array2<f64>) -> Tensor {
    let shape = m.shape().to_vec();
    Tensor {
        name,
        shape,
        data: m.as_standard_layout().iter().copied().collect(),
    }
}

fn vector(name: String, v: &Array1<f64>) -> Tensor {
    Tensor {
        name,
        shape: vec![v.len()],
        data: v.to_vec(),
    }
}

impl Checkpoint {
    pub fn from_model(model: &PilstmModel) -> Self {
        let p = &model.params;
        let l = p.topology.lstm_units;
        let mut tensors = vec![
            matrix("W_in".into(), p.w_in.t().to_owned()),
            vector("b_in".into(), &p.b_in),
        ];
        for (k, layer) in p.layers.iter().enumerate() {
            for (g, gate) in GATES.iter().enumerate() {
                let cols = s![.., g * l..(g + 1) * l];
                tensors.push(matrix(format!("lstm{k}.W_{gate}"), layer.w.slice(cols).t().to_owned()));
                tensors.push(matrix(format!("lstm{k}.U_{gate}"), layer.u.slice(cols).t().to_owned()));
                tensors.push(vector(
                    format!("lstm{k}.b_{gate}"),
                    &layer.b.slice(s![g * l..(g + 1) * l]).to_owned(),
                ));
            }
        }
        tensors.push(matrix("W_out".into(), p.w_out.clone().insert_axis(ndarray::Axis(0))));
        tensors.push(vector("b_out".into(), &Array1::from(vec![p.b_out])));
        Self {
            format: FORMAT.into(),
            version: VERSION,
            variable: model.variable,
            topology: p.topology,
            tensors,
            scaler: model.scaler.clone(),
            train_config: model.config.clone(),
            metrics: model.metrics,
        }
    }

    pub fn into_model(self) -> Result<PilstmModel> {
        if self.format != FORMAT || self.version != VERSION {
            return Err(Error::Config(format!(
                "unsupported checkpoint {} v{}",
                self.format, self.version
            )));
        }
        let mut p = ModelParams::zeros(self.topology)?;
        let l = self.topology.lstm_units;
        let mut tensors = self.tensors.into_iter();
        let mut next = |name: &str, shape: &[usize]| -> Result<Vec<f64>> {
            let t = tensors
                .next()
                .ok_or_else(|| Error::Topology(format!("checkpoint is missing `{name}`")))?;
            if t.name != name || t.shape != shape || t.data.len() != shape.iter().product::<usize>() {
                return Err(Error::Topology(format!(
                    "expected `{name}` {shape:?}, found `{}` {:?} with {} values",
                    t.name,
                    t.shape,
                    t.data.len()
                )));
            }
            Ok(t.data)
        };
        let m = self.topology.dense_units;
        let f = self.topology.feature_dim;
        p.w_in = Array2::from_shape_vec((m, f), next("W_in", &[m, f])?)
            .expect("shape checked")
            .reversed_axes()
            .as_standard_layout()
            .to_owned();
        p.b_in = Array1::from(next("b_in", &[m])?);
        for k in 0..p.layers.len() {
            let in_dim = p.layers[k].w.nrows();
            for (g, gate) in GATES.iter().enumerate() {
                let w = Array2::from_shape_vec((l, in_dim), next(&format!("lstm{k}.W_{gate}"), &[l, in_dim])?)
                    .expect("shape checked");
                let u = Array2::from_shape_vec((l, l), next(&format!("lstm{k}.U_{gate}"), &[l, l])?)
                    .expect("shape checked");
                let b = next(&format!("lstm{k}.b_{gate}"), &[l])?;
                let layer = &mut p.layers[k];
                layer.w.slice_mut(s![.., g * l..(g + 1) * l]).assign(&w.t());
                layer.u.slice_mut(s![.., g * l..(g + 1) * l]).assign(&u.t());
                layer.b.slice_mut(s![g * l..(g + 1) * l]).assign(&Array1::from(b));
            }
        }
        p.w_out = Array1::from(next("W_out", &[1, l])?);
        p.b_out = next("b_out", &[1])?[0];
        if !p.is_finite() {
            return Err(Error::Numeric("checkpoint contains non-finite weights".into()));
        }
        Ok(PilstmModel {
            variable: self.variable,
            params: p,
            scaler: self.scaler,
            config: self.train_config,
            metrics: self.metrics,
        })
    }
}

pub fn save(model: &PilstmModel, path: &Path) -> Result<()> {
    let text = serde_json::to_string(&Checkpoint::from_model(model))?;
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

pub fn load(path: &Path) -> Result<PilstmModel> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let ckpt: Checkpoint = serde_json::from_str(&text)?;
    ckpt.into_model()
}
