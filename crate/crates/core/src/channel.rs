//! One-directional network delay emulation.
//!
//! Packets get a delay of `base + U(-jitter, jitter)`, then are clamped so
//! they can never overtake the previous packet: delivery order is always
//! send order. The receiver keeps only the newest delivered packet (plus
//! the one before it, for finite differences) and holds it until a newer
//! one arrives.

use std::collections::VecDeque;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Minimum spacing between consecutive deliveries.
pub const FIFO_EPSILON: f64 = 1e-3;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DelayModel {
    pub base_delay: f64,
    pub jitter_half_width: f64,
    #[serde(default)]
    pub loss_probability: f64,
    pub seed: u64,
}

impl Default for DelayModel {
    fn default() -> Self {
        Self {
            base_delay: 1.0,
            jitter_half_width: 0.25,
            loss_probability: 0.0,
            seed: 0,
        }
    }
}

impl DelayModel {
    pub fn fixed(base_delay: f64, seed: u64) -> Self {
        Self {
            base_delay,
            jitter_half_width: 0.0,
            loss_probability: 0.0,
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.base_delay >= 0.0 && self.base_delay.is_finite()) {
            return Err(Error::Config(format!("base delay must be >= 0, got {}", self.base_delay)));
        }
        if !(0.0..=self.base_delay).contains(&self.jitter_half_width) {
            return Err(Error::Config(format!(
                "jitter half-width {} must lie in [0, base delay]",
                self.jitter_half_width
            )));
        }
        if !(0.0..1.0).contains(&self.loss_probability) {
            return Err(Error::Config(format!(
                "loss probability {} must lie in [0, 1)",
                self.loss_probability
            )));
        }
        Ok(())
    }

    pub fn max_delay(&self) -> f64 {
        self.base_delay + self.jitter_half_width
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DelayedPacket<P> {
    pub seq: u64,
    pub send_time: f64,
    pub deliver_time: f64,
    pub payload: P,
}

#[derive(Debug, Clone)]
pub struct DelayChannel<P> {
    model: DelayModel,
    rng: ChaCha8Rng,
    in_flight: VecDeque<DelayedPacket<P>>,
    next_seq: u64,
    last_send: f64,
    last_deliver: f64,
    latest: Option<DelayedPacket<P>>,
    previous: Option<DelayedPacket<P>>,
}

impl<P: Clone + Default> DelayChannel<P> {
    pub fn new(model: DelayModel) -> Result<Self> {
        model.validate()?;
        Ok(Self {
            model,
            rng: ChaCha8Rng::seed_from_u64(model.seed),
            in_flight: VecDeque::new(),
            next_seq: 0,
            last_send: f64::NEG_INFINITY,
            last_deliver: f64::NEG_INFINITY,
            latest: None,
            previous: None,
        })
    }

    pub fn model(&self) -> &DelayModel {
        &self.model
    }

    /// Draws the packet's delay and enqueues it. Returns the sequence
    /// number, or `None` if the packet was lost.
    pub fn send(&mut self, payload: P, now: f64) -> Result<Option<u64>> {
        if now < self.last_send {
            return Err(Error::ClockRegression {
                now,
                last: self.last_send,
            });
        }
        self.last_send = now;
        let seq = self.next_seq;
        self.next_seq += 1;

        let jitter = if self.model.jitter_half_width > 0.0 {
            let j = self.model.jitter_half_width;
            self.rng.gen_range(-j..=j)
        } else {
            0.0
        };
        if self.model.loss_probability > 0.0 && self.rng.gen::<f64>() < self.model.loss_probability {
            return Ok(None);
        }
        let deliver_time = (now + self.model.base_delay + jitter).max(self.last_deliver + FIFO_EPSILON);
        self.last_deliver = deliver_time;
        self.in_flight.push_back(DelayedPacket {
            seq,
            send_time: now,
            deliver_time,
            payload,
        });
        Ok(Some(seq))
    }

    /// Advances the receiver to `now` and returns the newest delivered
    /// payload, the held one if nothing new arrived, or the default
    /// before the first delivery.
    pub fn receive_latest(&mut self, now: f64) -> P {
        self.poll(now);
        self.latest
            .as_ref()
            .map(|p| p.payload.clone())
            .unwrap_or_default()
    }

    /// Advances the receiver to `now`; returns how many packets arrived.
    pub fn poll(&mut self, now: f64) -> usize {
        let mut arrived = 0;
        while self
            .in_flight
            .front()
            .is_some_and(|p| p.deliver_time <= now)
        {
            let packet = self.in_flight.pop_front().expect("front checked above");
            self.previous = self.latest.replace(packet);
            arrived += 1;
        }
        arrived
    }

    pub fn latest(&self) -> Option<&DelayedPacket<P>> {
        self.latest.as_ref()
    }

    /// The delivered packet immediately before [`Self::latest`].
    pub fn previous(&self) -> Option<&DelayedPacket<P>> {
        self.previous.as_ref()
    }

    /// Packets sent but not yet delivered.
    pub fn backlog(&self) -> usize {
        self.in_flight.len()
    }

    /// Drops everything in flight and forgets delivered state; the delay
    /// draw sequence restarts from the model seed.
    pub fn reset(&mut self) {
        *self = Self {
            model: self.model,
            rng: ChaCha8Rng::seed_from_u64(self.model.seed),
            in_flight: VecDeque::new(),
            next_seq: 0,
            last_send: f64::NEG_INFINITY,
            last_deliver: f64::NEG_INFINITY,
            latest: None,
            previous: None,
        };
    }
}
