//! Data and physics loss terms and their derivatives with respect to the
//! network outputs.
//!
//! The physics term penalizes the mismatch between the backward-difference
//! slope of consecutive predictions and the first-order delayed dynamics
//! evaluated on the window's delayed features.

use crate::error::{Error, Result};

/// Mean absolute error.
pub fn data_loss(preds: &[f64], targets: &[f64]) -> Result<f64> {
    if preds.is_empty() {
        return Err(Error::Empty("data loss batch"));
    }
    if preds.len() != targets.len() {
        return Err(Error::Topology(format!(
            "{} predictions for {} targets",
            preds.len(),
            targets.len()
        )));
    }
    Ok(preds.iter().zip(targets).map(|(p, t)| (p - t).abs()).sum::<f64>() / preds.len() as f64)
}

/// Mean squared residual over the collocation points.
pub fn physics_loss(residuals: &[f64]) -> Result<f64> {
    if residuals.is_empty() {
        return Err(Error::Empty("physics loss has no collocation points"));
    }
    Ok(residuals.iter().map(|r| r * r).sum::<f64>() / residuals.len() as f64)
}

pub fn total_loss(data: f64, physics: f64, physics_weight: f64) -> f64 {
    if physics_weight == 0.0 {
        data
    } else {
        data + physics_weight * physics
    }
}

/// Targets and physics forcing for one batch of windows, all in scaled
/// units.
#[derive(Debug, Clone, PartialEq)]
pub struct LossBatch {
    pub targets: Vec<f64>,
    /// Right-hand side of the delayed dynamics for each window.
    pub forcing: Vec<f64>,
    /// `follows[j]` is true when window `j` is one sample after window
    /// `j - 1`, making the pair a collocation point.
    pub follows: Vec<bool>,
    pub dt: f64,
}

impl LossBatch {
    pub fn len(&self) -> usize {
        self.targets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.targets.is_empty()
    }

    pub fn collocation_points(&self) -> usize {
        self.follows.iter().skip(1).filter(|&&f| f).count()
    }

    /// `(j, residual_j)` for every collocation point.
    pub fn residuals(&self, preds: &[f64]) -> Vec<(usize, f64)> {
        (1..preds.len())
            .filter(|&j| self.follows[j])
            .map(|j| (j, (preds[j] - preds[j - 1]) / self.dt - self.forcing[j]))
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LossValue {
    pub data: f64,
    /// Zero when the batch has no collocation points.
    pub physics: f64,
    pub total: f64,
    /// Derivative of `total` with respect to each prediction.
    pub d_preds: Vec<f64>,
}

pub fn evaluate(preds: &[f64], batch: &LossBatch, physics_weight: f64) -> Result<LossValue> {
    if batch.forcing.len() != batch.len() || batch.follows.len() != batch.len() {
        return Err(Error::Topology("loss batch fields differ in length".into()));
    }
    let data = data_loss(preds, &batch.targets)?;
    let n = preds.len() as f64;
    let mut d_preds: Vec<f64> = preds
        .iter()
        .zip(&batch.targets)
        .map(|(p, t)| {
            let e = p - t;
            if e > 0.0 {
                1.0 / n
            } else if e < 0.0 {
                -1.0 / n
            } else {
                0.0
            }
        })
        .collect();
    let residuals = batch.residuals(preds);
    let physics = if residuals.is_empty() {
        0.0
    } else {
        let r: Vec<f64> = residuals.iter().map(|&(_, r)| r).collect();
        physics_loss(&r)?
    };
    if physics_weight != 0.0 && !residuals.is_empty() {
        let m = residuals.len() as f64;
        for &(j, r) in &residuals {
            let g = physics_weight * 2.0 * r / (m * batch.dt);
            d_preds[j] += g;
            d_preds[j - 1] -= g;
        }
    }
    Ok(LossValue {
        data,
        physics,
        total: total_loss(data, physics, physics_weight),
        d_preds,
    })
}
