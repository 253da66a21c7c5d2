//! Model-free delay predictor driven by the first-order delayed dynamics
//!
//! ```text
//! x_p_dot(t) = x_dot(t-T) + beta [x(t-T) - x_p(t-T)] + alpha [x_dot(t-T) - x_p_dot(t-T)]
//! x_hat(t)   = x_p(t)
//! ```
//!
//! discretized at the sample period with forward Euler and nearest-sample
//! lookups into the predictor's own history.

use serde::{Deserialize, Serialize};

use crate::compensation::{Compensator, DelayedObservation, OutputHistory, SAMPLE_DT};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConvPredictorParams {
    pub alpha: f64,
    pub beta: f64,
    pub dt: f64,
}

impl ConvPredictorParams {
    /// Tuning used for the motion-command (forward) predictors.
    pub fn forward() -> Self {
        Self {
            alpha: 0.57,
            beta: 1.12,
            dt: SAMPLE_DT,
        }
    }

    /// Tuning used for the force-feedback (backward) predictors.
    pub fn backward() -> Self {
        Self {
            alpha: 0.64,
            beta: 0.91,
            dt: SAMPLE_DT,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.dt > 0.0) || !self.alpha.is_finite() || !self.beta.is_finite() {
            return Err(Error::Config(format!("invalid predictor parameters {self:?}")));
        }
        Ok(())
    }

    /// Right-hand side of the predictor dynamics.
    pub fn rhs(&self, x_del: f64, x_p_del: f64, xdot_del: f64, xdot_p_del: f64) -> f64 {
        xdot_del + self.beta * (x_del - x_p_del) + self.alpha * (xdot_del - xdot_p_del)
    }
}

/// History length needed to look `max_delay` seconds back.
pub fn history_capacity(max_delay: f64, dt: f64) -> usize {
    (max_delay / dt).ceil() as usize + 1
}

#[derive(Debug, Clone)]
pub struct ConvPredictor {
    params: ConvPredictorParams,
    history: OutputHistory,
}

impl ConvPredictor {
    pub fn new(params: ConvPredictorParams, capacity: usize) -> Result<Self> {
        params.validate()?;
        Ok(Self {
            params,
            history: OutputHistory::new(capacity),
        })
    }

    pub fn params(&self) -> &ConvPredictorParams {
        &self.params
    }

    /// One predictor update. `delay` is the measured age of the newest
    /// delayed sample in seconds; it is rounded onto the sample grid.
    pub fn conv_step(&mut self, tick: u64, x_del: f64, xdot_del: f64, delay: f64) -> Result<f64> {
        let lag = crate::compensation::lag_in_samples(delay, self.params.dt);
        self.step(
            tick,
            DelayedObservation {
                value: x_del,
                derivative: xdot_del,
                lag,
            },
        )
    }
}

impl Compensator for ConvPredictor {
    fn step(&mut self, tick: u64, obs: DelayedObservation) -> Result<f64> {
        let lag = obs.lag.max(1);
        if lag > self.history.capacity() {
            return Err(Error::Config(format!(
                "delay of {lag} samples exceeds predictor history of {}",
                self.history.capacity()
            )));
        }
        let dt = self.params.dt;
        let delayed = tick.checked_sub(lag as u64).and_then(|t| self.history.get(t));
        let previous = tick.checked_sub(1).and_then(|t| self.history.get(t));
        let (x_p, x_p_dot) = match (delayed, previous) {
            (Some((x_p_del, xdot_p_del)), Some((x_p_prev, _))) => {
                let x_p_dot = self.params.rhs(obs.value, x_p_del, obs.derivative, xdot_p_del);
                (x_p_prev + dt * x_p_dot, x_p_dot)
            }
            // warm-up: forward the delayed value
            _ => {
                let x_p_dot = previous.map_or(0.0, |(prev, _)| (obs.value - prev) / dt);
                (obs.value, x_p_dot)
            }
        };
        if !x_p.is_finite() {
            return Err(Error::Numeric(format!("conventional predictor diverged at tick {tick}")));
        }
        self.history.push(tick, x_p, x_p_dot);
        Ok(x_p)
    }

    fn history(&self) -> &OutputHistory {
        &self.history
    }

    fn reset(&mut self) {
        self.history.clear();
    }
}
