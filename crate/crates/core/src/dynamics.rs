//! Continuous-time models of the haptic master, the slipping
//! differential-drive slave and the terrain, advanced by explicit Euler.
//!
//! All quantities are two-axis: index 0 is the linear (v) channel and
//! index 1 the angular (omega) channel.

use serde::{Deserialize, Serialize};

use crate::error::{ensure_finite, Error, Result};

pub type Vec2 = [f64; 2];

/// Internal integration step of the plant models (100 Hz).
pub const INTERNAL_DT: f64 = 0.01;

/// Reduced first-order model of a two-joint haptic device.
///
/// The raw joint-space mass and damping are stored; the equivalent
/// coefficients of the blended variable `x_m = lambda * q_dot + q` are
/// derived from them so the two can never disagree.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HapticDeviceParams {
    pub mass: Vec2,
    pub damping: Vec2,
    pub lambda_blend: f64,
    pub b_vi: Vec2,
    pub b_p: Vec2,
}

impl Default for HapticDeviceParams {
    fn default() -> Self {
        Self {
            mass: [0.03, 0.03],
            damping: [0.02, 0.02],
            lambda_blend: 0.1,
            b_vi: [0.5, 0.5],
            b_p: [0.5, 0.5],
        }
    }
}

impl HapticDeviceParams {
    pub fn validate(&self) -> Result<()> {
        let diag = self
            .mass
            .iter()
            .chain(&self.damping)
            .chain(&self.b_vi)
            .chain(&self.b_p);
        for &d in diag {
            if !(d.is_finite() && d > 0.0) {
                return Err(Error::Config(format!(
                    "device diagonal entries must be positive, got {d}"
                )));
            }
        }
        if !(self.lambda_blend > 0.0 && self.lambda_blend < 1.0) {
            return Err(Error::Config(format!(
                "lambda_blend must lie in (0, 1), got {}",
                self.lambda_blend
            )));
        }
        Ok(())
    }

    /// `M_m / lambda`
    pub fn equivalent_mass(&self) -> Vec2 {
        [
            self.mass[0] / self.lambda_blend,
            self.mass[1] / self.lambda_blend,
        ]
    }

    /// `C_m / lambda`
    pub fn equivalent_damping(&self) -> Vec2 {
        [
            self.damping[0] / self.lambda_blend,
            self.damping[1] / self.lambda_blend,
        ]
    }

    /// Local joint controller `B_vi q_dot + B_p q`, reported alongside the
    /// teleoperation torque. Its effect is already folded into the
    /// equivalent first-order coefficients.
    pub fn local_control(&self, state: &MasterState) -> Vec2 {
        [
            self.b_vi[0] * state.q_m_dot[0] + self.b_p[0] * state.q_m[0],
            self.b_vi[1] * state.q_m_dot[1] + self.b_p[1] * state.q_m[1],
        ]
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct MasterState {
    pub x_m: Vec2,
    pub q_m: Vec2,
    pub q_m_dot: Vec2,
}

impl MasterState {
    /// `lambda * q_dot + q - x_m`, which the integrator keeps at zero.
    pub fn blend_residual(&self, lambda_blend: f64) -> Vec2 {
        [
            lambda_blend * self.q_m_dot[0] + self.q_m[0] - self.x_m[0],
            lambda_blend * self.q_m_dot[1] + self.q_m[1] - self.x_m[1],
        ]
    }
}

/// One explicit Euler step of `M_bar x_dot + C_bar x = u_m + f_h`.
pub fn step_master(
    params: &HapticDeviceParams,
    state: &MasterState,
    u_m: Vec2,
    f_h: Vec2,
    dt: f64,
) -> Result<MasterState> {
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(Error::StateIntegrity(format!("master dt must be positive, got {dt}")));
    }
    ensure_finite("master command", &u_m)?;
    ensure_finite("operator force", &f_h)?;
    ensure_finite("master state", &[state.x_m[0], state.x_m[1], state.q_m[0], state.q_m[1]])?;

    let m_bar = params.equivalent_mass();
    let c_bar = params.equivalent_damping();
    let lambda = params.lambda_blend;
    let mut next = MasterState::default();
    for axis in 0..2 {
        let x = state.x_m[axis];
        let x_dot = (u_m[axis] + f_h[axis] - c_bar[axis] * x) / m_bar[axis];
        next.x_m[axis] = x + dt * x_dot;
        // q_dot = (x - q) / lambda by definition of the blended variable
        next.q_m[axis] = state.q_m[axis] + dt * (x - state.q_m[axis]) / lambda;
        next.q_m_dot[axis] = (next.x_m[axis] - next.q_m[axis]) / lambda;
    }
    ensure_finite("master state", &next.x_m)?;
    Ok(next)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct UgvParams {
    /// Half of the wheel separation; `E(b)` uses `1 / (2b)`.
    pub b_half_track: f64,
    pub wheel_radius: f64,
    pub v_max: f64,
}

impl Default for UgvParams {
    fn default() -> Self {
        Self {
            b_half_track: 0.25,
            wheel_radius: 0.1,
            v_max: 0.1,
        }
    }
}

impl UgvParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.b_half_track > 0.0 && self.v_max > 0.0 && self.wheel_radius > 0.0) {
            return Err(Error::Config(format!("invalid UGV geometry: {self:?}")));
        }
        Ok(())
    }
}

/// `E(b) [v_r, v_l]`, exactly as printed: `omega = (v_l - v_r) / (2b)`.
pub fn body_from_wheels(b: f64, wheels: Vec2) -> Vec2 {
    let [v_r, v_l] = wheels;
    [0.5 * v_r + 0.5 * v_l, (-v_r + v_l) / (2.0 * b)]
}

/// `E(b)^-1 [v, omega]`.
pub fn wheels_from_body(b: f64, body: Vec2) -> Vec2 {
    let [v, omega] = body;
    [v - b * omega, v + b * omega]
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct Pose {
    pub x: f64,
    pub y: f64,
    pub heading: f64,
}

impl Pose {
    /// Contact points of the two wheels.
    ///
    /// With heading integrated as `theta_dot = omega` and `E(b)` taken
    /// literally, the wheel labelled "right" rolls at `v - b omega`, which
    /// places it on the `+b` lateral side of the body frame.
    pub fn wheel_points(&self, b: f64) -> [Vec2; 2] {
        let (s, c) = self.heading.sin_cos();
        let lateral = [-s * b, c * b];
        [
            [self.x + lateral[0], self.y + lateral[1]],
            [self.x - lateral[0], self.y - lateral[1]],
        ]
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct UgvState {
    pub v_s: f64,
    pub omega_s: f64,
    pub pose: Pose,
    pub v_r: f64,
    pub v_l: f64,
    pub s_r: f64,
    pub s_l: f64,
}

impl UgvState {
    pub fn at_pose(pose: Pose) -> Self {
        Self {
            pose,
            ..Self::default()
        }
    }

    pub fn body_velocity(&self) -> Vec2 {
        [self.v_s, self.omega_s]
    }
}

/// Piecewise-linear internal friction angle along the track arclength,
/// mapped linearly onto a slip ratio.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TerrainProfile {
    /// `(arclength, phi)` knots sorted by arclength.
    pub knots: Vec<(f64, f64)>,
    pub phi_min: f64,
    pub phi_max: f64,
    pub s_max: f64,
}

pub const PHI_FLOOR: f64 = 0.50;
pub const PHI_CEIL: f64 = 0.95;

impl TerrainProfile {
    pub fn new(knots: Vec<(f64, f64)>, s_max: f64) -> Result<Self> {
        let profile = Self {
            knots,
            phi_min: PHI_FLOOR,
            phi_max: PHI_CEIL,
            s_max,
        };
        profile.validate()?;
        Ok(profile)
    }

    /// Uniformly firm ground, no slip anywhere.
    pub fn firm() -> Self {
        Self {
            knots: vec![(0.0, PHI_CEIL)],
            phi_min: PHI_FLOOR,
            phi_max: PHI_CEIL,
            s_max: 0.6,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.knots.is_empty() {
            return Err(Error::Config("terrain profile needs at least one knot".into()));
        }
        if !(0.0..1.0).contains(&self.s_max) {
            return Err(Error::Config(format!("s_max must lie in [0, 1), got {}", self.s_max)));
        }
        if !(self.phi_min < self.phi_max) {
            return Err(Error::Config("phi_min must be below phi_max".into()));
        }
        for w in self.knots.windows(2) {
            if !(w[1].0 > w[0].0) {
                return Err(Error::Config("terrain knots must have increasing arclength".into()));
            }
        }
        for &(_, phi) in &self.knots {
            if !(PHI_FLOOR..=PHI_CEIL).contains(&phi) {
                return Err(Error::Config(format!(
                    "friction angle {phi} outside [{PHI_FLOOR}, {PHI_CEIL}]"
                )));
            }
        }
        Ok(())
    }

    /// Friction angle at arclength `z`, clamped to the profile ends.
    pub fn phi_at(&self, z: f64) -> f64 {
        let first = self.knots[0];
        if z <= first.0 {
            return first.1;
        }
        for w in self.knots.windows(2) {
            let (z0, p0) = w[0];
            let (z1, p1) = w[1];
            if z <= z1 {
                return p0 + (p1 - p0) * (z - z0) / (z1 - z0);
            }
        }
        self.knots[self.knots.len() - 1].1
    }

    pub fn slip_for_phi(&self, phi: f64) -> f64 {
        let phi = phi.clamp(self.phi_min, self.phi_max);
        self.s_max * (self.phi_max - phi) / (self.phi_max - self.phi_min)
    }

    pub fn slip_at(&self, z: f64) -> f64 {
        self.slip_for_phi(self.phi_at(z))
    }
}

/// Anything that can report the terrain slip ratio under a ground point.
pub trait SlipField {
    fn slip_at_point(&self, point: Vec2) -> f64;
}

/// A bare profile is laid along the x axis.
impl SlipField for TerrainProfile {
    fn slip_at_point(&self, point: Vec2) -> f64 {
        self.slip_at(point[0])
    }
}

/// Feedforward slip compensation: `v_cmd = v_desired (1 + s_est)`.
///
/// The pair is scaled down together if the body speed it is expected to
/// realize under `s_est` would exceed `v_max`.
pub fn ffc_compensate(v_desired: Vec2, s_est: Vec2, v_max: f64) -> Vec2 {
    let s = [s_est[0].max(0.0), s_est[1].max(0.0)];
    let cmd = [v_desired[0] * (1.0 + s[0]), v_desired[1] * (1.0 + s[1])];
    let expected = 0.5 * (cmd[0] / (1.0 + s[0]) + cmd[1] / (1.0 + s[1]));
    if expected.abs() > v_max {
        let k = v_max / expected.abs();
        [cmd[0] * k, cmd[1] * k]
    } else {
        cmd
    }
}

/// Lagged measurement of wheel slip used by the feedforward compensator.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SlipEstimator {
    pub time_constant: f64,
    pub gain: f64,
    pub estimate: Vec2,
}

impl Default for SlipEstimator {
    fn default() -> Self {
        Self {
            time_constant: 1.0,
            gain: 1.0,
            estimate: [0.0, 0.0],
        }
    }
}

impl SlipEstimator {
    pub fn update(&mut self, measured: Vec2, dt: f64) {
        let a = if self.time_constant > 0.0 {
            dt / (dt + self.time_constant)
        } else {
            1.0
        };
        for (est, m) in self.estimate.iter_mut().zip(measured) {
            *est += a * (m.max(0.0) - *est);
        }
    }

    pub fn compensation(&self) -> Vec2 {
        [self.gain * self.estimate[0], self.gain * self.estimate[1]]
    }
}

/// Exogenous inputs to one slave step besides the body command.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct SlaveStepInputs {
    pub slip_estimate: Vec2,
    /// Additive per-wheel slip perturbation (terrain roughness).
    pub slip_noise: Vec2,
}

pub fn step_slave(
    params: &UgvParams,
    state: &UgvState,
    u_s: Vec2,
    terrain: &dyn SlipField,
    inputs: SlaveStepInputs,
    dt: f64,
) -> Result<UgvState> {
    ensure_finite("slave command", &u_s)?;
    ensure_finite("slip inputs", &[
        inputs.slip_estimate[0],
        inputs.slip_estimate[1],
        inputs.slip_noise[0],
        inputs.slip_noise[1],
    ])?;
    let b = params.b_half_track;
    let desired = wheels_from_body(b, u_s);
    let commanded = ffc_compensate(desired, inputs.slip_estimate, params.v_max);

    let wheels = state.pose.wheel_points(b);
    let mut slip = [0.0; 2];
    for i in 0..2 {
        // negative slip is excluded to keep the environment passive
        slip[i] = (terrain.slip_at_point(wheels[i]) + inputs.slip_noise[i]).max(0.0);
    }
    let v_r = commanded[0] / (1.0 + slip[0]);
    let v_l = commanded[1] / (1.0 + slip[1]);
    let [v_s, omega_s] = body_from_wheels(b, [v_r, v_l]);

    let pose = state.pose;
    let (s, c) = pose.heading.sin_cos();
    let next = UgvState {
        v_s,
        omega_s,
        pose: Pose {
            x: pose.x + dt * v_s * c,
            y: pose.y + dt * v_s * s,
            heading: pose.heading + dt * omega_s,
        },
        v_r,
        v_l,
        s_r: slip[0],
        s_l: slip[1],
    };
    ensure_finite("slave state", &[next.v_s, next.omega_s, next.pose.x, next.pose.y])?;
    Ok(next)
}

/// Induced velocity loss `u_s - [v_s, omega_s]`.
pub fn environment_force(state: &UgvState, u_s: Vec2) -> Vec2 {
    [u_s[0] - state.v_s, u_s[1] - state.omega_s]
}

/// The same force written in wheel space, `E(b) (v_d - v)`.
pub fn environment_force_from_wheels(params: &UgvParams, state: &UgvState, u_s: Vec2) -> Vec2 {
    let b = params.b_half_track;
    let [v_rd, v_ld] = wheels_from_body(b, u_s);
    body_from_wheels(b, [v_rd - state.v_r, v_ld - state.v_l])
}

#[cfg(test)]
mod tests {
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    use super::*;

    fn device() -> HapticDeviceParams {
        HapticDeviceParams::default()
    }

    #[test]
    fn master_stays_at_rest() {
        let s = step_master(&device(), &MasterState::default(), [0.0; 2], [0.0; 2], 0.01).unwrap();
        assert_eq!(s.x_m, [0.0, 0.0]);
    }

    #[test]
    fn master_steady_state_is_force_over_damping() {
        let p = device();
        assert_abs_diff_eq!(p.equivalent_mass()[0], 0.3, epsilon = 1e-15);
        assert_abs_diff_eq!(p.equivalent_damping()[0], 0.2, epsilon = 1e-15);
        let mut s = MasterState::default();
        for _ in 0..5000 {
            s = step_master(&p, &s, [0.0; 2], [0.1, 0.0], 0.01).unwrap();
        }
        assert_abs_diff_eq!(s.x_m[0], 0.5, epsilon = 1e-9);
        assert_abs_diff_eq!(s.x_m[1], 0.0, epsilon = 1e-15);
    }

    #[test]
    fn master_single_euler_step() {
        let s0 = MasterState {
            x_m: [0.5, 0.0],
            ..Default::default()
        };
        let s = step_master(&device(), &s0, [0.0; 2], [0.0; 2], 0.01).unwrap();
        assert_abs_diff_eq!(s.x_m[0], 0.5 * (1.0 - 0.01 * 0.2 / 0.3), epsilon = 1e-15);
        assert_abs_diff_eq!(s.x_m[0], 0.49667, epsilon = 1e-5);
    }

    #[test]
    fn master_rejects_non_finite() {
        let r = step_master(&device(), &MasterState::default(), [f64::NAN, 0.0], [0.0; 2], 0.01);
        assert!(matches!(r, Err(Error::StateIntegrity(_))));
    }

    #[test]
    fn master_keeps_blend_definition() {
        let p = device();
        let mut s = MasterState::default();
        for k in 0..300 {
            let f = [0.05 * (k as f64 * 0.1).sin(), -0.02];
            s = step_master(&p, &s, [0.01, 0.0], f, 0.01).unwrap();
            let r = s.blend_residual(p.lambda_blend);
            assert!(r[0].abs() < 1e-12 && r[1].abs() < 1e-12);
        }
    }

    #[test]
    fn master_decays_monotonically_without_input() {
        let p = device();
        let mut s = MasterState {
            x_m: [0.3, -0.2],
            ..Default::default()
        };
        let mut prev = f64::INFINITY;
        for _ in 0..1000 {
            s = step_master(&p, &s, [0.0; 2], [0.0; 2], 0.01).unwrap();
            let norm = s.x_m[0].hypot(s.x_m[1]);
            assert!(norm < prev);
            prev = norm;
        }
    }

    #[test]
    fn device_validation() {
        let mut p = device();
        p.lambda_blend = 1.0;
        assert!(p.validate().is_err());
        let mut p = device();
        p.damping[1] = 0.0;
        assert!(p.validate().is_err());
        assert!(device().validate().is_ok());
    }

    #[test]
    fn slip_boundaries() {
        let t = TerrainProfile::new(vec![(0.0, 0.95)], 0.6).unwrap();
        assert_eq!(t.slip_for_phi(0.95), 0.0);
        assert_abs_diff_eq!(t.slip_for_phi(0.50), 0.6, epsilon = 1e-15);
        assert_abs_diff_eq!(t.slip_for_phi(0.725), 0.3, epsilon = 1e-12);
    }

    #[test]
    fn terrain_interpolates_and_clamps() {
        let t = TerrainProfile::new(vec![(0.0, 0.95), (2.0, 0.55), (4.0, 0.95)], 0.6).unwrap();
        assert_abs_diff_eq!(t.phi_at(1.0), 0.75, epsilon = 1e-12);
        assert_eq!(t.phi_at(-3.0), 0.95);
        assert_eq!(t.phi_at(50.0), 0.95);
        assert!(TerrainProfile::new(vec![(0.0, 0.4)], 0.6).is_err());
        assert!(TerrainProfile::new(vec![(0.0, 0.9)], 1.0).is_err());
    }

    #[test]
    fn symmetric_no_slip_drive() {
        let p = UgvParams::default();
        let s = step_slave(
            &p,
            &UgvState::default(),
            [0.1, 0.0],
            &TerrainProfile::firm(),
            SlaveStepInputs::default(),
            0.01,
        )
        .unwrap();
        assert_abs_diff_eq!(s.v_s, 0.1, epsilon = 1e-15);
        assert_eq!(s.omega_s, 0.0);
        assert_abs_diff_eq!(s.v_r, 0.1, epsilon = 1e-15);
    }

    #[test]
    fn slip_reduces_realized_wheel_speed() {
        // phi chosen so that s = 0.25 with s_max = 0.6
        let phi = 0.95 - 0.25 / 0.6 * 0.45;
        let t = TerrainProfile::new(vec![(0.0, phi)], 0.6).unwrap();
        let s = step_slave(
            &UgvParams::default(),
            &UgvState::default(),
            [0.1, 0.0],
            &t,
            SlaveStepInputs::default(),
            0.01,
        )
        .unwrap();
        assert_abs_diff_eq!(s.s_r, 0.25, epsilon = 1e-12);
        assert_abs_diff_eq!(s.v_r, 0.08, epsilon = 1e-12);
    }

    #[test]
    fn kinematic_matrix_arithmetic() {
        let [v, w] = body_from_wheels(0.25, [0.1, 0.05]);
        assert_abs_diff_eq!(v, 0.075, epsilon = 1e-15);
        assert_abs_diff_eq!(w, -0.1, epsilon = 1e-15);
    }

    #[test]
    fn environment_force_examples() {
        let p = UgvParams::default();
        // symmetric loss of 0.02 on both wheels
        let u_s = [0.1, 0.0];
        let state = UgvState {
            v_r: 0.08,
            v_l: 0.08,
            v_s: 0.08,
            omega_s: 0.0,
            ..Default::default()
        };
        let f = environment_force_from_wheels(&p, &state, u_s);
        assert_abs_diff_eq!(f[0], 0.02, epsilon = 1e-15);
        assert_abs_diff_eq!(f[1], 0.0, epsilon = 1e-15);

        let [v_s, omega_s] = body_from_wheels(0.25, [0.08, 0.1]);
        let state = UgvState {
            v_r: 0.08,
            v_l: 0.1,
            v_s,
            omega_s,
            ..Default::default()
        };
        let f = environment_force_from_wheels(&p, &state, u_s);
        assert_abs_diff_eq!(f[0], 0.01, epsilon = 1e-15);
        assert_abs_diff_eq!(f[1], -0.04, epsilon = 1e-15);
        let g = environment_force(&state, u_s);
        assert_abs_diff_eq!(g[1], -0.04, epsilon = 1e-15);

        let still = UgvState {
            v_r: 0.1,
            v_l: 0.1,
            v_s: 0.1,
            ..Default::default()
        };
        assert_eq!(environment_force(&still, u_s), [0.0, 0.0]);
    }

    #[test]
    fn ffc_examples() {
        assert_eq!(ffc_compensate([0.1, 0.1], [0.0, 0.0], 0.1), [0.1, 0.1]);
        let cmd = ffc_compensate([0.1, 0.1], [0.25, 0.25], 0.1);
        assert_abs_diff_eq!(cmd[0] / 1.25, 0.1, epsilon = 1e-15);
        assert_abs_diff_eq!(cmd[0] / 1.5, 0.125 / 1.5, epsilon = 1e-15);
        assert_abs_diff_eq!(cmd[0] / 1.5, 0.0833, epsilon = 1e-4);
    }

    #[test]
    fn exact_estimate_restores_command_tracking() {
        let t = TerrainProfile::new(vec![(0.0, 0.6)], 0.6).unwrap();
        let s_true = t.slip_at(0.0);
        let p = UgvParams::default();
        let mut s = UgvState::default();
        let u_s = [0.08, 0.0];
        for _ in 0..100 {
            s = step_slave(
                &p,
                &s,
                u_s,
                &t,
                SlaveStepInputs {
                    slip_estimate: [s_true, s_true],
                    slip_noise: [0.0; 2],
                },
                0.01,
            )
            .unwrap();
        }
        assert!((u_s[0] - s.v_s).abs() < 1e-9);
        assert!(environment_force(&s, u_s)[0].abs() < 1e-9);
    }

    #[test]
    fn negative_slip_is_clamped() {
        let s = step_slave(
            &UgvParams::default(),
            &UgvState::default(),
            [0.1, 0.0],
            &TerrainProfile::firm(),
            SlaveStepInputs {
                slip_estimate: [0.0; 2],
                slip_noise: [-0.02, -0.01],
            },
            0.01,
        )
        .unwrap();
        assert_eq!(s.s_r, 0.0);
        assert_eq!(s.s_l, 0.0);
    }

    #[test]
    fn right_wheel_sits_on_positive_lateral_side() {
        // omega > 0 (CCW) needs v_r < v_l, i.e. the slower wheel on the inside (+y)
        let p = Pose::default();
        let [r, l] = p.wheel_points(0.25);
        assert_abs_diff_eq!(r[1], 0.25, epsilon = 1e-15);
        assert_abs_diff_eq!(l[1], -0.25, epsilon = 1e-15);
    }

    proptest! {
        #[test]
        fn kinematic_consistency(
            v in -0.1f64..0.1, w in -0.5f64..0.5,
            nr in -0.02f64..0.02, nl in -0.02f64..0.02,
            er in 0.0f64..0.6, el in 0.0f64..0.6,
            x in 0.0f64..10.0, heading in -3.0f64..3.0,
        ) {
            let p = UgvParams::default();
            let t = TerrainProfile::new(vec![(0.0, 0.95), (5.0, 0.5), (10.0, 0.95)], 0.6).unwrap();
            let s0 = UgvState::at_pose(Pose { x, y: 0.0, heading });
            let s = step_slave(&p, &s0, [v, w], &t, SlaveStepInputs {
                slip_estimate: [er, el], slip_noise: [nr, nl] }, 0.01).unwrap();
            let body = body_from_wheels(p.b_half_track, [s.v_r, s.v_l]);
            prop_assert!((body[0] - s.v_s).abs() < 1e-12);
            prop_assert!((body[1] - s.omega_s).abs() < 1e-12);
            prop_assert!(s.s_r >= 0.0 && s.s_l >= 0.0);
            let f1 = environment_force(&s, [v, w]);
            let f2 = environment_force_from_wheels(&p, &s, [v, w]);
            prop_assert!((f1[0] - f2[0]).abs() < 1e-12);
            prop_assert!((f1[1] - f2[1]).abs() < 1e-12);
        }

        #[test]
        fn slip_non_increasing_in_phi(a in 0.5f64..0.95, b in 0.5f64..0.95) {
            let t = TerrainProfile::firm();
            let (lo, hi) = if a < b { (a, b) } else { (b, a) };
            prop_assert!(t.slip_for_phi(lo) >= t.slip_for_phi(hi));
        }
    }
}
