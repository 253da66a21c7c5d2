//! The simulation side of the bridge: one run driven by cockpit input,
//! advanced one tick per call. No I/O and no clocks, so it can be driven
//! directly in tests.

use serde::{Deserialize, Serialize};
use teleop_core::compensation::SAMPLE_DT;
use teleop_core::dataset::{Case, LogRow};
use teleop_core::dynamics::{Pose, Vec2};
use teleop_core::harness::{ConstantForce, PilstmModels, ScenarioConfig, Simulation};

use crate::protocol::{ClientMessage, CommandMsg, PoseMsg, StateFrame, PROTOCOL_VERSION};

#[derive(Debug, thiserror::Error)]
pub enum SessionError {
    #[error("sequence number {got} does not follow {last}")]
    Sequence { last: u64, got: u64 },
    #[error(transparent)]
    Sim(#[from] teleop_core::Error),
}

/// How stick deflection becomes operator force, and when an idle stick
/// counts as released.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DriveMapping {
    /// Master-state target at full forward deflection.
    pub v_full: f64,
    /// Master-state target at full turn deflection.
    pub omega_full: f64,
    /// Force per unit of master-state error.
    pub stiffness: f64,
    /// Input older than this starts fading, seconds.
    pub hold: f64,
    /// Input is fully faded this long after `hold`, seconds.
    pub fade: f64,
}

impl Default for DriveMapping {
    fn default() -> Self {
        Self {
            v_full: 0.1,
            omega_full: 0.4,
            stiffness: 2.0,
            hold: 0.25,
            fade: 0.25,
        }
    }
}

impl DriveMapping {
    /// Weight of a command `age` seconds old.
    pub fn freshness(&self, age: f64) -> f64 {
        if age <= self.hold {
            1.0
        } else if self.fade <= 0.0 {
            0.0
        } else {
            (1.0 - (age - self.hold) / self.fade).clamp(0.0, 1.0)
        }
    }

    pub fn force(&self, v_norm: f64, omega_norm: f64, weight: f64, x_m: Vec2) -> Vec2 {
        let target = [weight * v_norm * self.v_full, weight * omega_norm * self.omega_full];
        [
            self.stiffness * (target[0] - x_m[0]),
            self.stiffness * (target[1] - x_m[1]),
        ]
    }
}

/// Running sums behind the tracking norms.
#[derive(Debug, Clone, Copy, Default)]
struct RunningNorms {
    omega_sq: Vec2,
    gamma_sq: Vec2,
}

impl RunningNorms {
    fn add(&mut self, row: &LogRow) {
        let vel = [row.v_s, row.omega_s];
        let f_e = [row.coupling[2].x_actual, row.coupling[3].x_actual];
        for i in 0..2 {
            self.omega_sq[i] += (row.x_m[i] - vel[i]).powi(2);
            self.gamma_sq[i] += (row.f_h[i] - f_e[i]).powi(2);
        }
    }

    fn omega(&self) -> Vec2 {
        self.omega_sq.map(f64::sqrt)
    }

    fn gamma(&self) -> Vec2 {
        self.gamma_sq.map(f64::sqrt)
    }
}

pub struct CockpitSession {
    base: ScenarioConfig,
    models: Option<PilstmModels>,
    mapping: DriveMapping,
    sim: Simulation,
    input: Option<(CommandMsg, u64)>,
    last_seq: Option<u64>,
    /// Ticks since the session started, across mode switches.
    clock: u64,
    norms: RunningNorms,
    /// Tick index, server time and row of the last step.
    last_row: Option<(u64, f64, LogRow)>,
}

impl CockpitSession {
    pub fn new(base: ScenarioConfig, models: Option<PilstmModels>, mapping: DriveMapping) -> Result<Self, SessionError> {
        let sim = Simulation::new(base.clone(), models.as_ref())?;
        Ok(Self {
            base,
            models,
            mapping,
            sim,
            input: None,
            last_seq: None,
            clock: 0,
            norms: RunningNorms::default(),
            last_row: None,
        })
    }

    pub fn mode(&self) -> Case {
        self.sim.config().case
    }

    pub fn simulation(&self) -> &Simulation {
        &self.sim
    }

    pub fn server_time(&self) -> f64 {
        self.clock as f64 * SAMPLE_DT
    }

    /// Forgets the sequence numbering, for a new controlling client.
    pub fn new_controller(&mut self) {
        self.last_seq = None;
    }

    /// Applies a client message. A mode switch restarts the run and
    /// returns the fresh state.
    pub fn handle(&mut self, msg: ClientMessage) -> Result<Option<StateFrame>, SessionError> {
        let seq = msg.seq();
        if let Some(last) = self.last_seq {
            if seq <= last {
                return Err(SessionError::Sequence { last, got: seq });
            }
        }
        let frame = match msg {
            ClientMessage::Cmd(cmd) => {
                self.input = Some((cmd, self.clock));
                None
            }
            ClientMessage::Mode(m) => {
                self.restart(m.mode)?;
                Some(self.frame())
            }
        };
        self.last_seq = Some(seq);
        Ok(frame)
    }

    /// Builds a fresh run in `mode`: empty channels, cold predictors,
    /// zeroed metrics. The current run is kept if the new one cannot be
    /// built.
    pub fn restart(&mut self, mode: Case) -> Result<(), SessionError> {
        let config = self.base.clone().with_case(mode);
        self.sim = Simulation::new(config, self.models.as_ref())?;
        self.norms = RunningNorms::default();
        self.last_row = None;
        Ok(())
    }

    /// Operator force the drive input asks for at the current tick.
    fn drive_force(&self) -> Vec2 {
        let x_m = self.sim.master().x_m;
        match self.input {
            Some((cmd, at)) => {
                let age = (self.clock - at) as f64 * SAMPLE_DT;
                let weight = self.mapping.freshness(age);
                self.mapping.force(cmd.v_norm, cmd.omega_norm, weight, x_m)
            }
            None => self.mapping.force(0.0, 0.0, 0.0, x_m),
        }
    }

    /// Advances one tick and returns its frame.
    pub fn tick(&mut self) -> Result<StateFrame, SessionError> {
        let mut force = ConstantForce(self.drive_force());
        let tick = self.sim.tick();
        let row = self.sim.step(&mut force)?;
        self.norms.add(&row);
        self.last_row = Some((tick, self.server_time(), row));
        self.clock += 1;
        Ok(self.frame())
    }

    /// Snapshot of the last tick: the state at its start and what was sent
    /// and applied during it, like a log row. Right after a restart, the
    /// initial state.
    pub fn frame(&self) -> StateFrame {
        let (fwd, bwd) = self.sim.backlog();
        let base = StateFrame {
            v: PROTOCOL_VERSION,
            server_time: self.server_time(),
            tick: self.sim.tick(),
            mode: self.mode(),
            pose: pose_msg(&self.sim.ugv().pose),
            v_s: self.sim.ugv().v_s,
            omega_s: self.sim.ugv().omega_s,
            x_m: self.sim.master().x_m,
            force_feedback: [0.0; 2],
            slip: [self.sim.ugv().s_r, self.sim.ugv().s_l],
            delay: [0.0; 2],
            backlog: [fwd, bwd],
            omega: self.norms.omega(),
            gamma: self.norms.gamma(),
            finished: self.sim.finished(),
        };
        let Some((tick, server_time, row)) = &self.last_row else {
            return base;
        };
        let delay = match self.mode() {
            Case::Ideal => [0.0; 2],
            _ => [row.lag_fwd as f64 * SAMPLE_DT, row.lag_bwd as f64 * SAMPLE_DT],
        };
        StateFrame {
            server_time: *server_time,
            tick: *tick,
            pose: pose_msg(&row.pose),
            v_s: row.v_s,
            omega_s: row.omega_s,
            x_m: row.x_m,
            force_feedback: [row.x_hat[2], row.x_hat[3]],
            slip: [row.s_r, row.s_l],
            delay,
            ..base
        }
    }
}

fn pose_msg(pose: &Pose) -> PoseMsg {
    PoseMsg {
        x: pose.x,
        y: pose.y,
        heading: pose.heading,
    }
}
