//! Sample-by-sample use of a trained model inside the control loop.

use std::collections::VecDeque;
use std::sync::Arc;

use super::train::PilstmModel;
use crate::compensation::{feature_row, Compensator, DelayedObservation, OutputHistory, FEATURE_DIM, SAMPLE_DT};
use crate::error::Result;

/// Keeps the last `input_len` feature rows and predicts the current value
/// of the coupling variable from them. Until the ring is full the delayed
/// value is passed through.
#[derive(Debug, Clone)]
pub struct PilstmPredictor {
    model: Arc<PilstmModel>,
    ring: VecDeque<[f64; FEATURE_DIM]>,
    history: OutputHistory,
    last_tick: Option<u64>,
}

impl PilstmPredictor {
    pub fn new(model: Arc<PilstmModel>, history_capacity: usize) -> Self {
        let n = model.topology().input_len;
        Self {
            model,
            ring: VecDeque::with_capacity(n),
            history: OutputHistory::new(history_capacity),
            last_tick: None,
        }
    }

    pub fn model(&self) -> &PilstmModel {
        &self.model
    }

    pub fn is_warm(&self) -> bool {
        self.ring.len() == self.model.topology().input_len
    }

    /// Feature rows the next prediction will use, oldest first.
    pub fn ring(&self) -> impl Iterator<Item = &[f64; FEATURE_DIM]> {
        self.ring.iter()
    }
}

impl Compensator for PilstmPredictor {
    fn step(&mut self, tick: u64, obs: DelayedObservation) -> Result<f64> {
        if self.last_tick.map_or(false, |t| t + 1 != tick) {
            self.reset();
        }
        self.last_tick = Some(tick);
        let estimate = if self.is_warm() {
            self.model.predict_rows(self.ring.iter())?
        } else {
            obs.value
        };
        let row = feature_row(&self.history, tick, &obs);
        if self.is_warm() {
            self.ring.pop_front();
        }
        self.ring.push_back(row);
        let slope = self
            .history
            .last()
            .map_or(0.0, |(prev, _)| (estimate - prev) / SAMPLE_DT);
        self.history.push(tick, estimate, slope);
        Ok(estimate)
    }

    fn history(&self) -> &OutputHistory {
        &self.history
    }

    fn reset(&mut self) {
        self.ring.clear();
        self.history.clear();
        self.last_tick = None;
    }
}

#[cfg(test)]
mod tests {
    use super::super::network::{ModelParams, NetworkTopology};
    use super::super::scaler::{MinMax, Scaler};
    use super::super::train::{ModelMetrics, TrainConfig};
    use super::*;
    use crate::coupling::CouplingVariable;

    fn model() -> Arc<PilstmModel> {
        let mm = MinMax { min: -1.0, max: 1.0 };
        Arc::new(PilstmModel {
            variable: CouplingVariable::Xmv,
            params: ModelParams::init(NetworkTopology::new(6, 3, 1, 4), 2).unwrap(),
            scaler: Scaler {
                features: [mm, mm, MinMax { min: -3.0, max: 3.0 }, mm],
                target: MinMax { min: -0.5, max: 0.5 },
            },
            config: TrainConfig::for_variable(CouplingVariable::Xmv),
            metrics: ModelMetrics {
                best_epoch: 0,
                epochs_run: 0,
                val_rmse: 0.0,
                val_residual: 0.0,
                train_windows: 0,
                val_windows: 0,
            },
        })
    }

    fn obs(k: u64) -> DelayedObservation {
        let t = k as f64 * 0.1;
        DelayedObservation {
            value: (0.4 * t).sin(),
            derivative: 0.4 * (0.4 * t).cos(),
            lag: 10,
        }
    }

    #[test]
    fn cold_ring_passes_through() {
        let mut p = PilstmPredictor::new(model(), 20);
        for k in 0..6 {
            assert_eq!(p.step(k, obs(k)).unwrap(), obs(k).value);
        }
        assert!(p.is_warm());
        assert_ne!(p.step(6, obs(6)).unwrap(), obs(6).value);
    }

    #[test]
    fn reset_reproduces_outputs() {
        let mut p = PilstmPredictor::new(model(), 20);
        let run = |p: &mut PilstmPredictor| -> Vec<f64> { (0..30).map(|k| p.step(k, obs(k)).unwrap()).collect() };
        let a = run(&mut p);
        p.reset();
        let b = run(&mut p);
        assert_eq!(a, b);
    }

    #[test]
    fn online_step_equals_offline_forward_on_the_same_window() {
        let m = model();
        let mut p = PilstmPredictor::new(m.clone(), 20);
        for k in 0..25 {
            p.step(k, obs(k)).unwrap();
        }
        let window: Vec<[f64; FEATURE_DIM]> = p.ring().copied().collect();
        let online = p.step(25, obs(25)).unwrap();
        let offline = m.predict_rows(window.iter()).unwrap();
        assert!((online - offline).abs() < 1e-9);
    }

    #[test]
    fn own_outputs_feed_the_predicted_features() {
        let mut p = PilstmPredictor::new(model(), 20);
        for k in 0..20 {
            p.step(k, obs(k)).unwrap();
        }
        let last = *p.ring().last().unwrap();
        let (x_p, _) = p.history().get(19 - 10).unwrap();
        assert_eq!(last[1], x_p);
    }

    #[test]
    fn tick_gap_restarts_warm_up() {
        let mut p = PilstmPredictor::new(model(), 20);
        for k in 0..10 {
            p.step(k, obs(k)).unwrap();
        }
        assert_eq!(p.step(40, obs(40)).unwrap(), obs(40).value);
    }
}
