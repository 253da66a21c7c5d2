//! The closed teleoperation loop, advanced one 10 Hz tick at a time.
//!
//! Tick `r` covers `[t_r, t_r+1)`. At its start the master side reads the
//! backward channel and the video stream, the operator decides on a force
//! and the filtered master state goes out on the forward channel; the
//! slave side reads the forward channel and sets its command. Both plants
//! then integrate at 100 Hz, and the slave's filtered environment force and
//! pose are sent back stamped `t_r+1`.

use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::config::{derive_seed, PredictorKind, ScenarioConfig};
use crate::channel::DelayChannel;
use crate::compensation::{lag_in_samples, Compensator, DelayedObservation, SAMPLE_DT};
use crate::control::{master_control, slave_control, LowPass};
use crate::coupling::CouplingVariable;
use crate::dataset::{Case, CouplingSample, LogRow};
use crate::dynamics::{
    environment_force, step_master, step_slave, MasterState, Pose, SlaveStepInputs, SlipEstimator, UgvState, Vec2,
    INTERNAL_DT,
};
use crate::error::{Error, Result};
use crate::operator::{make_reference, Operator};
use crate::pilstm::{PilstmModel, PilstmPredictor};
use crate::predict_conv::{history_capacity, ConvPredictor};
use crate::track::Track;

const SLIP_STREAM: u64 = 1;
pub(crate) const FORWARD_STREAM: u64 = 2;
pub(crate) const BACKWARD_STREAM: u64 = 3;
const VIDEO_STREAM: u64 = 4;
const OPERATOR_STREAM: u64 = 5;

/// Deliveries due exactly on a tick boundary must not miss it through
/// rounding of `k * 0.1`.
const DELIVERY_SLACK: f64 = 1e-9;

/// One trained model per coupling variable, in [`CouplingVariable::ALL`]
/// order.
pub type PilstmModels = [Arc<PilstmModel>; 4];

/// Where the operator force comes from.
pub trait ForceSource {
    /// Force for the tick, given the pose shown on the video feed, the
    /// device state and the torque the device is rendering.
    fn force(&mut self, track: &Track, seen: &Pose, x_m: Vec2, u_m: Vec2) -> Result<Vec2>;
}

impl ForceSource for Operator {
    fn force(&mut self, track: &Track, seen: &Pose, x_m: Vec2, u_m: Vec2) -> Result<Vec2> {
        let reference = make_reference(track, self.params().target_speed, f64::INFINITY)?;
        Ok(self.step(&reference, seen, x_m, u_m))
    }
}

/// A fixed force, for open-loop pushes and the interactive bridge.
#[derive(Debug, Clone, Copy, Default)]
pub struct ConstantForce(pub Vec2);

impl ForceSource for ConstantForce {
    fn force(&mut self, _: &Track, _: &Pose, _: Vec2, _: Vec2) -> Result<Vec2> {
        Ok(self.0)
    }
}

/// Newest observation of a two-axis stream arriving through `channel`.
pub fn observe(channel: &mut DelayChannel<Vec2>, now: f64) -> [DelayedObservation; 2] {
    channel.poll(now + DELIVERY_SLACK);
    let Some(latest) = channel.latest() else {
        return [DelayedObservation::default(); 2];
    };
    let lag = lag_in_samples(now - latest.send_time, SAMPLE_DT);
    let derivative = |axis: usize| {
        channel.previous().map_or(0.0, |prev| {
            (latest.payload[axis] - prev.payload[axis]) / (latest.send_time - prev.send_time)
        })
    };
    std::array::from_fn(|axis| DelayedObservation {
        value: latest.payload[axis],
        derivative: derivative(axis),
        lag,
    })
}

pub fn tick_time(tick: u64) -> f64 {
    tick as f64 * SAMPLE_DT
}

/// Builds the four predictors, forward pair first.
pub fn build_predictors(
    kind: PredictorKind,
    models: Option<&PilstmModels>,
    max_delay: f64,
) -> Result<Vec<Box<dyn Compensator + Send>>> {
    let capacity = history_capacity(max_delay, SAMPLE_DT) + 1;
    CouplingVariable::ALL
        .iter()
        .map(|&var| -> Result<Box<dyn Compensator + Send>> {
            match kind {
                PredictorKind::Conv => Ok(Box::new(ConvPredictor::new(var.conv_params(), capacity)?)),
                PredictorKind::Pilstm => {
                    let models = models.ok_or_else(|| Error::Config("PiLSTM predictor needs trained models".into()))?;
                    let model = models[var.index()].clone();
                    if model.variable != var {
                        return Err(Error::Topology(format!(
                            "checkpoint for {} supplied in the {var} slot",
                            model.variable
                        )));
                    }
                    Ok(Box::new(PilstmPredictor::new(model, capacity)))
                }
            }
        })
        .collect()
}

/// Complete loop state. Owns everything it touches, so a fresh instance
/// is a full reset.
pub struct Simulation {
    config: ScenarioConfig,
    track: Track,
    tick: u64,
    master: MasterState,
    ugv: UgvState,
    forward_filter: [LowPass; 2],
    backward_filter: [LowPass; 2],
    forward: DelayChannel<Vec2>,
    backward: DelayChannel<Vec2>,
    video: DelayChannel<Pose>,
    /// Active predictors in the predicted case; feature generators only in
    /// the delayed case; unused in the ideal case.
    predictors: Vec<Box<dyn Compensator + Send>>,
    slip_estimator: SlipEstimator,
    slip_rng: ChaCha8Rng,
    /// Filtered environment force for the current tick, computed at the end
    /// of the previous one.
    f_e: Vec2,
    prev_f_e: Vec2,
    prev_x_send: Vec2,
    finished: bool,
}

impl Simulation {
    pub fn new(config: ScenarioConfig, models: Option<&PilstmModels>) -> Result<Self> {
        config.validate()?;
        let track = config.build_track()?;
        let seed = config.seed;
        let kind = match config.case {
            Case::Predicted => config.predictor.kind,
            // delayed runs carry conventional predictors in the background to
            // produce the predicted-feature columns
            _ => PredictorKind::Conv,
        };
        let predictors = build_predictors(kind, models, config.delay.max_delay())?;
        let filter = LowPass::new(config.filter_cutoff_hz, SAMPLE_DT)?;
        Ok(Self {
            forward: DelayChannel::new(config.delay.with_seed(derive_seed(seed, FORWARD_STREAM)))?,
            backward: DelayChannel::new(config.delay.with_seed(derive_seed(seed, BACKWARD_STREAM)))?,
            video: DelayChannel::new(config.delay.with_seed(derive_seed(seed, VIDEO_STREAM)))?,
            slip_estimator: config.slip_compensation.estimator(),
            slip_rng: ChaCha8Rng::seed_from_u64(derive_seed(seed, SLIP_STREAM)),
            ugv: UgvState::at_pose(track.start_pose()),
            track,
            config,
            tick: 0,
            master: MasterState::default(),
            forward_filter: [filter; 2],
            backward_filter: [filter; 2],
            predictors,
            f_e: [0.0; 2],
            prev_f_e: [0.0; 2],
            prev_x_send: [0.0; 2],
            finished: false,
        })
    }

    /// The scripted operator configured for this scenario, seeded from the
    /// run seed.
    pub fn scripted_operator(&self) -> Result<Operator> {
        let mut params = self.config.operator.clone();
        params.seed = derive_seed(self.config.seed ^ params.seed, OPERATOR_STREAM);
        Operator::new(params)
    }

    pub fn config(&self) -> &ScenarioConfig {
        &self.config
    }

    pub fn track(&self) -> &Track {
        &self.track
    }

    pub fn tick(&self) -> u64 {
        self.tick
    }

    pub fn time(&self) -> f64 {
        tick_time(self.tick)
    }

    pub fn ugv(&self) -> &UgvState {
        &self.ugv
    }

    pub fn master(&self) -> &MasterState {
        &self.master
    }

    /// True once the UGV has crossed the end mark or left the corridor.
    pub fn finished(&self) -> bool {
        self.finished
    }

    /// Packets in flight on the forward and backward channels.
    pub fn backlog(&self) -> (usize, usize) {
        (self.forward.backlog(), self.backward.backlog())
    }

    /// Newest delayed force observation at the master for each axis.
    fn master_side(&mut self, now: f64) -> [DelayedObservation; 2] {
        match self.config.case {
            Case::Ideal => std::array::from_fn(|axis| {
                let d = if self.tick == 0 { 0.0 } else { (self.f_e[axis] - self.prev_f_e[axis]) / SAMPLE_DT };
                DelayedObservation::undelayed(self.f_e[axis], d)
            }),
            _ => observe(&mut self.backward, now),
        }
    }

    /// Runs one tick and returns its log row.
    pub fn step(&mut self, source: &mut dyn ForceSource) -> Result<LogRow> {
        let now = self.time();
        let tick = self.tick;
        let case = self.config.case;
        let gains = self.config.gains;
        let mut coupling = [CouplingSample::default(); 4];
        let mut x_hat = [0.0; 4];

        // master side
        let bwd_obs = self.master_side(now);
        let mut f_in = [0.0; 2];
        for axis in 0..2 {
            let var = if axis == 0 { CouplingVariable::Fev } else { CouplingVariable::Feomega };
            let (estimate, sample) = self.compensate(var, tick, bwd_obs[axis], self.f_e[axis])?;
            f_in[axis] = estimate;
            x_hat[var.index()] = estimate;
            coupling[var.index()] = sample;
        }
        let u_m = master_control(f_in, &gains);
        let seen = match case {
            Case::Ideal => self.ugv.pose,
            _ => {
                self.video.poll(now + DELIVERY_SLACK);
                self.video.latest().map_or(self.track.start_pose(), |p| p.payload)
            }
        };
        let x_m_now = self.master.x_m;
        let f_h = source.force(&self.track, &seen, x_m_now, u_m)?;
        let x_send: Vec2 = std::array::from_fn(|i| self.forward_filter[i].step(x_m_now[i], SAMPLE_DT));
        if case != Case::Ideal {
            self.forward.send(x_send, now)?;
        }

        // slave side
        let fwd_obs = match case {
            Case::Ideal => std::array::from_fn(|axis| {
                let d = if tick == 0 { 0.0 } else { (x_send[axis] - self.prev_x_send[axis]) / SAMPLE_DT };
                DelayedObservation::undelayed(x_send[axis], d)
            }),
            _ => observe(&mut self.forward, now),
        };
        let mut x_in = [0.0; 2];
        for axis in 0..2 {
            let var = if axis == 0 { CouplingVariable::Xmv } else { CouplingVariable::Xmomega };
            let (estimate, sample) = self.compensate(var, tick, fwd_obs[axis], x_send[axis])?;
            x_in[axis] = estimate;
            x_hat[var.index()] = estimate;
            coupling[var.index()] = sample;
        }
        let u_s = slave_control(x_in, &gains, self.config.ugv.v_max);

        let row = LogRow {
            t: now,
            coupling,
            pose: self.ugv.pose,
            s_r: self.ugv.s_r,
            s_l: self.ugv.s_l,
            u_s,
            x_hat,
            lag_fwd: fwd_obs[0].lag,
            lag_bwd: bwd_obs[0].lag,
            v_s: self.ugv.v_s,
            omega_s: self.ugv.omega_s,
            x_m: x_m_now,
            f_h,
            u_m,
        };

        // plants
        let inner = (SAMPLE_DT / INTERNAL_DT).round() as usize;
        let noise = self.config.slip_noise;
        for _ in 0..inner {
            self.master = step_master(&self.config.device, &self.master, u_m, f_h, INTERNAL_DT)
                .map_err(|e| at_time(e, now))?;
            let slip_noise = if noise > 0.0 {
                [self.slip_rng.gen_range(-noise..=noise), self.slip_rng.gen_range(-noise..=noise)]
            } else {
                [0.0; 2]
            };
            let inputs = SlaveStepInputs {
                slip_estimate: self.slip_estimator.compensation(),
                slip_noise,
            };
            self.ugv = step_slave(&self.config.ugv, &self.ugv, u_s, &self.track, inputs, INTERNAL_DT)
                .map_err(|e| at_time(e, now))?;
            self.slip_estimator.update([self.ugv.s_r, self.ugv.s_l], INTERNAL_DT);
        }

        // back towards the master
        let next = tick_time(tick + 1);
        let raw = environment_force(&self.ugv, u_s);
        self.prev_f_e = self.f_e;
        self.f_e = std::array::from_fn(|i| self.backward_filter[i].step(raw[i], SAMPLE_DT));
        if case != Case::Ideal {
            self.backward.send(self.f_e, next)?;
            self.video.send(self.ugv.pose, next)?;
        }
        self.prev_x_send = x_send;
        self.tick += 1;

        let p = [row.pose.x, row.pose.y];
        if self.track.past_end(p) || !self.track.in_corridor(p) {
            self.finished = true;
        }
        Ok(row)
    }

    /// Applies the case's compensation to one coupling variable and
    /// assembles its log sample.
    fn compensate(
        &mut self,
        var: CouplingVariable,
        tick: u64,
        obs: DelayedObservation,
        actual: f64,
    ) -> Result<(f64, CouplingSample)> {
        let sample = |features: [f64; 4]| CouplingSample {
            x_actual: actual,
            x_delayed: features[0],
            x_p_delayed: features[1],
            xdot_delayed: features[2],
            xdot_p_delayed: features[3],
        };
        match self.config.case {
            Case::Ideal => Ok((actual, sample([actual, actual, obs.derivative, obs.derivative]))),
            Case::Delayed => {
                let p = &mut self.predictors[var.index()];
                p.step(tick, obs)?;
                Ok((obs.value, sample(p.features(tick, &obs))))
            }
            Case::Predicted => {
                let p = &mut self.predictors[var.index()];
                let estimate = p.step(tick, obs)?;
                Ok((estimate, sample(p.features(tick, &obs))))
            }
        }
    }
}

fn at_time(e: Error, t: f64) -> Error {
    match e {
        Error::StateIntegrity(m) => Error::StateIntegrity(format!("at t = {t:.1} s: {m}")),
        Error::Numeric(m) => Error::Numeric(format!("at t = {t:.1} s: {m}")),
        other => other,
    }
}
