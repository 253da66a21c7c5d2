//! Finite-difference verification of the analytic gradient.

use ndarray::{Array3, ArrayView1};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::loss::{evaluate, LossBatch};
use super::network::{ModelParams, NetworkTopology};
use crate::compensation::{FEATURE_DIM, SAMPLE_DT};
use crate::error::Result;

/// Gradients smaller than this are compared in absolute terms.
pub const RELATIVE_FLOOR: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GradcheckReport {
    pub parameters: usize,
    pub max_relative_error: f64,
    pub worst_parameter: String,
    pub analytic: f64,
    pub numeric: f64,
}

pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(RELATIVE_FLOOR)
}

/// Random weights and a random batch of consecutive windows.
pub fn random_problem(topology: NetworkTopology, batch: usize, seed: u64) -> Result<(ModelParams, Array3<f64>, LossBatch)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut params = ModelParams::init(topology, seed)?;
    for s in params.slices_mut() {
        for v in s.iter_mut() {
            *v += rng.gen_range(-0.3..0.3);
        }
    }
    let n = topology.input_len;
    let rows: Vec<[f64; FEATURE_DIM]> = (0..n + batch)
        .map(|_| std::array::from_fn(|_| rng.gen_range(-1.0..1.0)))
        .collect();
    let input = Array3::from_shape_fn((batch, n, FEATURE_DIM), |(b, i, k)| rows[b + i][k]);
    let loss_batch = LossBatch {
        targets: (0..batch).map(|_| rng.gen_range(-1.0..1.0)).collect(),
        forcing: (0..batch).map(|_| rng.gen_range(-2.0..2.0)).collect(),
        follows: (0..batch).map(|b| b > 0).collect(),
        dt: SAMPLE_DT,
    };
    Ok((params, input, loss_batch))
}

pub fn total_loss_at(params: &ModelParams, input: &Array3<f64>, batch: &LossBatch, physics_weight: f64) -> Result<f64> {
    let (y, _) = params.forward(input.view())?;
    Ok(evaluate(y.as_slice().unwrap(), batch, physics_weight)?.total)
}

pub fn analytic_gradient(
    params: &ModelParams,
    input: &Array3<f64>,
    batch: &LossBatch,
    physics_weight: f64,
) -> Result<ModelParams> {
    let (y, cache) = params.forward(input.view())?;
    let value = evaluate(y.as_slice().unwrap(), batch, physics_weight)?;
    params.backward(&cache, ArrayView1::from(&value.d_preds))
}

/// Compares every analytic gradient component with a central difference.
pub fn gradcheck(topology: NetworkTopology, physics_weight: f64, seed: u64, step: f64) -> Result<GradcheckReport> {
    let (params, input, batch) = random_problem(topology, 5, seed)?;
    let grad = analytic_gradient(&params, &input, &batch, physics_weight)?;
    let mut report = GradcheckReport {
        parameters: params.len(),
        max_relative_error: 0.0,
        worst_parameter: String::new(),
        analytic: 0.0,
        numeric: 0.0,
    };
    let mut probe = params.clone();
    for i in 0..params.len() {
        let base = params.get_flat(i);
        probe.set_flat(i, base + step);
        let up = total_loss_at(&probe, &input, &batch, physics_weight)?;
        probe.set_flat(i, base - step);
        let down = total_loss_at(&probe, &input, &batch, physics_weight)?;
        probe.set_flat(i, base);
        let numeric = (up - down) / (2.0 * step);
        let analytic = grad.get_flat(i);
        let err = relative_error(analytic, numeric);
        if err >= report.max_relative_error {
            report.max_relative_error = err;
            report.worst_parameter = params.flat_name(i);
            report.analytic = analytic;
            report.numeric = numeric;
        }
    }
    Ok(report)
}
