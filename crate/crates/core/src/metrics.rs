//! Evaluation measures: normalized delay-compensation error, tracking and
//! transparency norms, operator-force estimation, RMSE and completion time.

use serde::{Deserialize, Serialize};

use crate::dataset::RunLog;
use crate::dynamics::{HapticDeviceParams, Vec2};
use crate::error::{Error, Result};
use crate::track::Track;

pub fn l2_norm(values: impl IntoIterator<Item = f64>) -> f64 {
    values.into_iter().map(|v| v * v).sum::<f64>().sqrt()
}

fn same_len(a: usize, b: usize) -> Result<()> {
    if a != b {
        return Err(Error::Topology(format!("series lengths differ: {a} vs {b}")));
    }
    Ok(())
}

/// `||pred - ideal|| / ||delayed - ideal|| * 100`. `None` when the delayed
/// series equals the ideal one.
pub fn delta_n(predicted: &[f64], ideal: &[f64], delayed: &[f64]) -> Result<Option<f64>> {
    same_len(predicted.len(), ideal.len())?;
    same_len(delayed.len(), ideal.len())?;
    let num = l2_norm(predicted.iter().zip(ideal).map(|(p, i)| p - i));
    let den = l2_norm(delayed.iter().zip(ideal).map(|(d, i)| d - i));
    Ok(if den > 0.0 { Some(100.0 * num / den) } else { None })
}

pub fn rmse(preds: &[f64], targets: &[f64]) -> Result<f64> {
    if preds.is_empty() {
        return Err(Error::Empty("rmse input"));
    }
    same_len(preds.len(), targets.len())?;
    Ok((preds.iter().zip(targets).map(|(p, t)| (p - t).powi(2)).sum::<f64>() / preds.len() as f64).sqrt())
}

pub fn mae(preds: &[f64], targets: &[f64]) -> Result<f64> {
    if preds.is_empty() {
        return Err(Error::Empty("mae input"));
    }
    same_len(preds.len(), targets.len())?;
    Ok(preds.iter().zip(targets).map(|(p, t)| (p - t).abs()).sum::<f64>() / preds.len() as f64)
}

/// Per-axis tracking (`omega`) and transparency (`gamma`) norms.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrackingNorms {
    /// `||x_m - [v_s, omega_s]||` per axis.
    pub omega: Vec2,
    /// `||f_h - f_e||` per axis.
    pub gamma: Vec2,
    /// `gamma` over both axes together.
    pub gamma_combined: f64,
}

/// Norms over a run, from the master state, the slave velocity, the
/// operator force and the environment force sampled at the same ticks.
pub fn tracking_norms(x_m: &[Vec2], velocity: &[Vec2], f_h: &[Vec2], f_e: &[Vec2]) -> Result<TrackingNorms> {
    same_len(x_m.len(), velocity.len())?;
    same_len(f_h.len(), f_e.len())?;
    let axis = |a: &[Vec2], b: &[Vec2], i: usize| l2_norm(a.iter().zip(b).map(|(p, q)| p[i] - q[i]));
    let gamma = [axis(f_h, f_e, 0), axis(f_h, f_e, 1)];
    Ok(TrackingNorms {
        omega: [axis(x_m, velocity, 0), axis(x_m, velocity, 1)],
        gamma,
        gamma_combined: gamma[0].hypot(gamma[1]),
    })
}

/// [`tracking_norms`] over a logged run; the environment force is the
/// filtered value transmitted by the slave.
pub fn omega_gamma(log: &RunLog) -> Result<TrackingNorms> {
    let x_m: Vec<Vec2> = log.rows.iter().map(|r| r.x_m).collect();
    let vel: Vec<Vec2> = log.rows.iter().map(|r| [r.v_s, r.omega_s]).collect();
    let f_h: Vec<Vec2> = log.rows.iter().map(|r| r.f_h).collect();
    let f_e: Vec<Vec2> = log
        .rows
        .iter()
        .map(|r| [r.coupling[2].x_actual, r.coupling[3].x_actual])
        .collect();
    tracking_norms(&x_m, &vel, &f_h, &f_e)
}

/// Operator force reconstructed from the device state and torque,
/// `M_bar x_dot + C_bar x - u_m`, with `x_dot` the backward difference.
///
/// `u_m[k]` is the torque held over `[t_k, t_k+1)`; element `k` of the
/// result estimates the operator force over the same interval from the
/// backward difference at `t_k+1`, with `x` taken at the interval midpoint
/// where that difference is centred. The result has one element fewer
/// than the inputs.
pub fn estimate_fh(x_m: &[Vec2], u_m: &[Vec2], device: &HapticDeviceParams, dt: f64) -> Result<Vec<Vec2>> {
    same_len(x_m.len(), u_m.len())?;
    let m = device.equivalent_mass();
    let c = device.equivalent_damping();
    Ok((1..x_m.len())
        .map(|k| {
            std::array::from_fn(|i| {
                let x_dot = (x_m[k][i] - x_m[k - 1][i]) / dt;
                m[i] * x_dot + c[i] * 0.5 * (x_m[k][i] + x_m[k - 1][i]) - u_m[k - 1][i]
            })
        })
        .collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase", tag = "status", content = "seconds")]
pub enum Completion {
    Finished(f64),
    /// Ran out of time or left the corridor first.
    Dnf,
}

impl Completion {
    pub fn seconds(&self) -> Option<f64> {
        match self {
            Completion::Finished(t) => Some(*t),
            Completion::Dnf => None,
        }
    }

    /// Orders finished runs by time, with any finish ahead of a DNF.
    pub fn key(&self) -> f64 {
        self.seconds().unwrap_or(f64::INFINITY)
    }
}

pub fn completion_time(log: &RunLog, track: &Track) -> Completion {
    for row in &log.rows {
        let p = [row.pose.x, row.pose.y];
        if track.past_end(p) {
            return Completion::Finished(row.t);
        }
        if !track.in_corridor(p) {
            return Completion::Dnf;
        }
    }
    Completion::Dnf
}
