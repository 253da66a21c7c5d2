//! Shared plumbing for delay compensators: the delayed observation handed
//! to a predictor every sample, the predictor's own output history, and
//! the four-feature vector built from both.

use std::collections::VecDeque;

use crate::error::Result;

/// Sample period of the coupling-variable loop.
pub const SAMPLE_DT: f64 = 0.1;

/// What the receiving side knows about one coupling variable at a tick.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct DelayedObservation {
    /// `x(t - T)`: payload of the newest delivered packet.
    pub value: f64,
    /// `x_dot(t - T)`: finite difference between the two newest packets.
    pub derivative: f64,
    /// Age of the newest packet in samples, rounded to the sample grid.
    pub lag: usize,
}

impl DelayedObservation {
    pub fn undelayed(value: f64, derivative: f64) -> Self {
        Self {
            value,
            derivative,
            lag: 0,
        }
    }
}

/// Rounds a measured one-way delay onto the sample grid.
pub fn lag_in_samples(delay: f64, dt: f64) -> usize {
    if delay <= 0.0 {
        0
    } else {
        (delay / dt).round() as usize
    }
}

/// Backward difference of the last two samples; zero with fewer than two.
pub fn estimate_derivative(samples: &[f64], dt: f64) -> f64 {
    match samples {
        [.., prev, last] => (last - prev) / dt,
        _ => 0.0,
    }
}

/// Ring of a predictor's past outputs `(x_p, x_p_dot)` indexed by tick.
#[derive(Debug, Clone)]
pub struct OutputHistory {
    capacity: usize,
    first_tick: u64,
    entries: VecDeque<(f64, f64)>,
}

impl OutputHistory {
    pub fn new(capacity: usize) -> Self {
        Self {
            capacity: capacity.max(2),
            first_tick: 0,
            entries: VecDeque::with_capacity(capacity.max(2)),
        }
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Tick of the newest entry.
    pub fn last_tick(&self) -> Option<u64> {
        if self.entries.is_empty() {
            None
        } else {
            Some(self.first_tick + self.entries.len() as u64 - 1)
        }
    }

    pub fn last(&self) -> Option<(f64, f64)> {
        self.entries.back().copied()
    }

    pub fn get(&self, tick: u64) -> Option<(f64, f64)> {
        if tick < self.first_tick {
            return None;
        }
        self.entries.get((tick - self.first_tick) as usize).copied()
    }

    /// Appends the output for `tick`, which must directly follow the newest
    /// entry; a gap restarts the history.
    pub fn push(&mut self, tick: u64, x_p: f64, x_p_dot: f64) {
        if self.last_tick().map_or(true, |last| last + 1 != tick) {
            self.entries.clear();
            self.first_tick = tick;
        }
        if self.entries.len() == self.capacity {
            self.entries.pop_front();
            self.first_tick += 1;
        }
        self.entries.push_back((x_p, x_p_dot));
    }

    pub fn clear(&mut self) {
        self.entries.clear();
        self.first_tick = 0;
    }
}

/// Number of input features per timestep.
pub const FEATURE_DIM: usize = 4;

/// `[x(t-T), x_p(t-T), x_dot(t-T), x_p_dot(t-T)]`, with the predicted pair
/// looked up in `history` at `tick - max(lag, 1)`. Before the history
/// reaches that far back the predicted pair falls back to `(x(t-T), 0)`.
pub fn feature_row(history: &OutputHistory, tick: u64, obs: &DelayedObservation) -> [f64; FEATURE_DIM] {
    let lag = obs.lag.max(1) as u64;
    let (x_p, x_p_dot) = tick
        .checked_sub(lag)
        .and_then(|t| history.get(t))
        .unwrap_or((obs.value, 0.0));
    [obs.value, x_p, obs.derivative, x_p_dot]
}

/// A predictor that turns a delayed stream into an estimate of the
/// undelayed signal, one sample at a time.
pub trait Compensator {
    /// Produces the estimate for `tick` from the newest observation and
    /// records it in the output history.
    fn step(&mut self, tick: u64, obs: DelayedObservation) -> Result<f64>;

    fn history(&self) -> &OutputHistory;

    /// Clears all internal state.
    fn reset(&mut self);

    /// Feature vector for `tick`; valid after `step` for that tick.
    fn features(&self, tick: u64, obs: &DelayedObservation) -> [f64; FEATURE_DIM] {
        feature_row(self.history(), tick, obs)
    }
}

/// Forwards the delayed value unchanged.
#[derive(Debug, Clone)]
pub struct Passthrough {
    history: OutputHistory,
}

impl Passthrough {
    pub fn new(capacity: usize) -> Self {
        Self {
            history: OutputHistory::new(capacity),
        }
    }
}

impl Compensator for Passthrough {
    fn step(&mut self, tick: u64, obs: DelayedObservation) -> Result<f64> {
        let x_dot = self
            .history
            .last()
            .map_or(0.0, |(prev, _)| (obs.value - prev) / SAMPLE_DT);
        self.history.push(tick, obs.value, x_dot);
        Ok(obs.value)
    }

    fn history(&self) -> &OutputHistory {
        &self.history
    }

    fn reset(&mut self) {
        self.history.clear();
    }
}
