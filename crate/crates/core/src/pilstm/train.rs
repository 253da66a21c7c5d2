//! Mini-batch training with the combined data and physics loss, validation
//! tracking and best-epoch checkpointing.

use std::time::Instant;

use ndarray::Array3;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::loss::{self, LossBatch};
use super::network::{ModelParams, NetworkTopology};
use super::optim::{clip_global_norm, Adam, AdamConfig};
use super::scaler::Scaler;
use crate::compensation::{FEATURE_DIM, SAMPLE_DT};
use crate::coupling::CouplingVariable;
use crate::dataset::{split, WindowSet};
use crate::error::{Error, Result};
use crate::predict_conv::ConvPredictorParams;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub grad_clip_threshold: f64,
    pub physics_weight: f64,
    pub batch_size: usize,
    pub epochs: usize,
    /// Epochs without validation improvement before stopping.
    pub patience: usize,
    pub seed: u64,
    pub split_ratio: f64,
    /// Delayed dynamics used as the physics right-hand side.
    pub dynamics: ConvPredictorParams,
}

impl TrainConfig {
    /// Tuned learning rate and clipping threshold for one variable.
    pub fn for_variable(var: CouplingVariable) -> Self {
        let (learning_rate, grad_clip_threshold) = match var {
            CouplingVariable::Xmv => (0.00230, 0.07),
            CouplingVariable::Xmomega => (0.00016, 1.12),
            CouplingVariable::Fev => (0.00095, 0.80),
            CouplingVariable::Feomega => (0.00076, 0.92),
        };
        Self {
            learning_rate,
            grad_clip_threshold,
            physics_weight: 0.1,
            batch_size: 64,
            epochs: 200,
            patience: 30,
            seed: 0,
            split_ratio: 0.7,
            dynamics: var.conv_params(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0) {
            return Err(Error::Config(format!("learning rate must be positive, got {}", self.learning_rate)));
        }
        if !(self.physics_weight >= 0.0) {
            return Err(Error::Config(format!("physics weight must be non-negative, got {}", self.physics_weight)));
        }
        if !(self.split_ratio > 0.0 && self.split_ratio < 1.0) {
            return Err(Error::Config(format!("split ratio must lie in (0, 1), got {}", self.split_ratio)));
        }
        if !(self.grad_clip_threshold > 0.0) || self.batch_size == 0 || self.epochs == 0 {
            return Err(Error::Config("clip threshold, batch size and epochs must be positive".into()));
        }
        self.dynamics.validate()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub data_loss: f64,
    pub physics_loss: f64,
    pub val_rmse: f64,
    pub val_residual: f64,
    pub seconds: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainLog {
    pub epochs: Vec<EpochRecord>,
}

impl TrainLog {
    pub fn best(&self) -> Option<&EpochRecord> {
        self.epochs
            .iter()
            .min_by(|a, b| a.val_rmse.total_cmp(&b.val_rmse))
    }
}

/// Error statistics of a model over a window set, in raw units except the
/// residual which is in scaled units per second.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SetMetrics {
    pub rmse: f64,
    pub mae: f64,
    pub residual: f64,
    pub windows: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModelMetrics {
    pub best_epoch: usize,
    pub epochs_run: usize,
    pub val_rmse: f64,
    pub val_residual: f64,
    pub train_windows: usize,
    pub val_windows: usize,
}

/// A trained predictor for one coupling variable.
#[derive(Debug, Clone, PartialEq)]
pub struct PilstmModel {
    pub variable: CouplingVariable,
    pub params: ModelParams,
    pub scaler: Scaler,
    pub config: TrainConfig,
    pub metrics: ModelMetrics,
}

impl PilstmModel {
    pub fn topology(&self) -> &NetworkTopology {
        &self.params.topology
    }

    /// Prediction from `input_len` raw feature rows.
    pub fn predict_rows<'a>(&self, rows: impl IntoIterator<Item = &'a [f64; FEATURE_DIM]>) -> Result<f64> {
        let n = self.topology().input_len;
        let mut input = Array3::zeros((1, n, FEATURE_DIM));
        let mut count = 0;
        for (i, row) in rows.into_iter().enumerate() {
            if i >= n {
                count = n + 1;
                break;
            }
            for (k, v) in self.scaler.scale_row(row).into_iter().enumerate() {
                input[[0, i, k]] = v;
            }
            count = i + 1;
        }
        if count != n {
            return Err(Error::Topology(format!("expected {n} feature rows")));
        }
        let (y, _) = self.params.forward(input.view())?;
        Ok(self.scaler.target.unscale(y[0]))
    }

    /// Raw-unit predictions for every window of `ws`.
    pub fn predict_set(&self, ws: &WindowSet) -> Result<Vec<f64>> {
        let prep = Prepared::new(ws, &self.scaler, &self.config.dynamics);
        let idx: Vec<usize> = (0..ws.len()).collect();
        let scaled = forward_all(&self.params, ws, &prep, &idx)?;
        Ok(scaled.iter().map(|&s| self.scaler.target.unscale(s)).collect())
    }

    pub fn evaluate(&self, ws: &WindowSet) -> Result<SetMetrics> {
        let prep = Prepared::new(ws, &self.scaler, &self.config.dynamics);
        let idx: Vec<usize> = (0..ws.len()).collect();
        set_metrics(&self.params, &self.scaler, ws, &prep, &idx)
    }
}

/// Scaled copies of a window set's rows and targets plus the per-row
/// physics forcing.
struct Prepared {
    rows: Vec<[f64; FEATURE_DIM]>,
    targets: Vec<f64>,
    forcing: Vec<f64>,
}

impl Prepared {
    fn new(ws: &WindowSet, scaler: &Scaler, dynamics: &ConvPredictorParams) -> Self {
        let a = scaler.target.factor();
        Self {
            rows: ws.rows.iter().map(|r| scaler.scale_row(r)).collect(),
            targets: ws.targets.iter().map(|&t| scaler.target.scale(t)).collect(),
            forcing: ws
                .rows
                .iter()
                .map(|r| a * dynamics.rhs(r[0], r[1], r[2], r[3]))
                .collect(),
        }
    }

    fn batch(&self, ws: &WindowSet, idx: &[usize], dt: f64) -> (Array3<f64>, LossBatch) {
        let n = ws.n;
        let mut input = Array3::zeros((idx.len(), n, FEATURE_DIM));
        for (b, &j) in idx.iter().enumerate() {
            let s = ws.starts[j];
            for i in 0..n {
                for k in 0..FEATURE_DIM {
                    input[[b, i, k]] = self.rows[s + i][k];
                }
            }
        }
        let follows = (0..idx.len())
            .map(|b| b > 0 && idx[b] == idx[b - 1] + 1 && ws.follows_previous(idx[b]))
            .collect();
        let batch = LossBatch {
            targets: idx.iter().map(|&j| self.targets[ws.target_row(j)]).collect(),
            forcing: idx.iter().map(|&j| self.forcing[ws.target_row(j) - 1]).collect(),
            follows,
            dt,
        };
        (input, batch)
    }
}

const EVAL_CHUNK: usize = 256;

fn forward_all(params: &ModelParams, ws: &WindowSet, prep: &Prepared, idx: &[usize]) -> Result<Vec<f64>> {
    let mut out = Vec::with_capacity(idx.len());
    for chunk in idx.chunks(EVAL_CHUNK) {
        let (input, _) = prep.batch(ws, chunk, SAMPLE_DT);
        out.extend(params.forward(input.view())?.0);
    }
    Ok(out)
}

fn set_metrics(
    params: &ModelParams,
    scaler: &Scaler,
    ws: &WindowSet,
    prep: &Prepared,
    idx: &[usize],
) -> Result<SetMetrics> {
    if idx.is_empty() {
        return Err(Error::Empty("evaluation set"));
    }
    let preds = forward_all(params, ws, prep, idx)?;
    let (_, batch) = prep.batch(ws, idx, SAMPLE_DT);
    let mut sq = 0.0;
    let mut abs = 0.0;
    for (&p, &j) in preds.iter().zip(idx) {
        let e = scaler.target.unscale(p) - ws.target(j);
        sq += e * e;
        abs += e.abs();
    }
    let residuals: Vec<f64> = batch.residuals(&preds).into_iter().map(|(_, r)| r).collect();
    let residual = if residuals.is_empty() {
        0.0
    } else {
        loss::physics_loss(&residuals)?
    };
    Ok(SetMetrics {
        rmse: (sq / idx.len() as f64).sqrt(),
        mae: abs / idx.len() as f64,
        residual,
        windows: idx.len(),
    })
}

/// Trains one model on `windows`, holding out the trailing part for
/// validation. Returns the parameters of the best validation epoch.
pub fn train(windows: &WindowSet, topology: NetworkTopology, config: &TrainConfig) -> Result<(PilstmModel, TrainLog)> {
    train_with_progress(windows, topology, config, |_| {})
}

pub fn train_with_progress(
    windows: &WindowSet,
    topology: NetworkTopology,
    config: &TrainConfig,
    mut progress: impl FnMut(&EpochRecord),
) -> Result<(PilstmModel, TrainLog)> {
    config.validate()?;
    topology.validate()?;
    if windows.n != topology.input_len {
        return Err(Error::Topology(format!(
            "windows have length {}, topology expects {}",
            windows.n, topology.input_len
        )));
    }
    let (train_set, val_set) = split(windows, config.split_ratio)?;
    if train_set.len() < 2 || val_set.is_empty() {
        return Err(Error::InsufficientData(format!(
            "{} windows are too few to train and validate",
            windows.len()
        )));
    }
    let first = train_set.starts[0];
    let last = train_set.target_row(train_set.len() - 1);
    let scaler = Scaler::fit(&windows.rows[first..last], &windows.targets[first..=last])?;
    let prep = Prepared::new(windows, &scaler, &config.dynamics);

    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut params = ModelParams::init(topology, config.seed)?;
    let mut adam = Adam::new(AdamConfig::with_learning_rate(config.learning_rate), params.len());

    let train_idx: Vec<usize> = (0..train_set.len()).collect();
    let val_idx: Vec<usize> = (train_set.len()..windows.len()).collect();
    let mut blocks: Vec<&[usize]> = train_idx.chunks(config.batch_size).collect();

    let mut log = TrainLog::default();
    let mut best = (f64::INFINITY, 0usize, params.clone(), 0.0);
    for epoch in 0..config.epochs {
        let started = Instant::now();
        blocks.shuffle(&mut rng);
        let (mut data_sum, mut phys_sum, mut weight) = (0.0, 0.0, 0.0);
        for block in &blocks {
            let (input, batch) = prep.batch(windows, block, config.dynamics.dt);
            let (preds, cache) = params.forward(input.view()).map_err(|e| diverged(epoch, e))?;
            let value = loss::evaluate(preds.as_slice().unwrap(), &batch, config.physics_weight)?;
            if !value.total.is_finite() {
                return Err(Error::Diverged {
                    epoch,
                    detail: format!("loss became {}", value.total),
                });
            }
            let d = ndarray::ArrayView1::from(&value.d_preds);
            let mut grad = params.backward(&cache, d)?;
            clip_global_norm(&mut grad, config.grad_clip_threshold);
            adam.step(&mut params, &grad);
            let w = block.len() as f64;
            data_sum += value.data * w;
            phys_sum += value.physics * w;
            weight += w;
        }
        if !params.is_finite() {
            return Err(Error::Diverged {
                epoch,
                detail: "non-finite weights".into(),
            });
        }
        let val = set_metrics(&params, &scaler, windows, &prep, &val_idx).map_err(|e| diverged(epoch, e))?;
        let record = EpochRecord {
            epoch,
            data_loss: data_sum / weight,
            physics_loss: phys_sum / weight,
            val_rmse: val.rmse,
            val_residual: val.residual,
            seconds: started.elapsed().as_secs_f64(),
        };
        progress(&record);
        log.epochs.push(record);
        if val.rmse < best.0 {
            best = (val.rmse, epoch, params.clone(), val.residual);
        } else if epoch - best.1 >= config.patience {
            break;
        }
    }
    let (val_rmse, best_epoch, params, val_residual) = best;
    let model = PilstmModel {
        variable: windows.variable,
        params,
        scaler,
        config: config.clone(),
        metrics: ModelMetrics {
            best_epoch,
            epochs_run: log.epochs.len(),
            val_rmse,
            val_residual,
            train_windows: train_set.len(),
            val_windows: val_set.len(),
        },
    };
    Ok((model, log))
}

fn diverged(epoch: usize, e: Error) -> Error {
    match e {
        Error::Numeric(detail) => Error::Diverged { epoch, detail },
        other => other,
    }
}
