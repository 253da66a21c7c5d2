//! Teleoperation controllers and the coupling-variable low-pass filter.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::dynamics::Vec2;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ControllerGains {
    pub k_mv: f64,
    pub k_momega: f64,
    pub k_sv: f64,
    pub k_somega: f64,
}

impl Default for ControllerGains {
    /// `k_m = 5`, `k_s = 1` on both axes.
    fn default() -> Self {
        Self::uniform(5.0, 1.0)
    }
}

impl ControllerGains {
    pub fn uniform(k_m: f64, k_s: f64) -> Self {
        Self {
            k_mv: k_m,
            k_momega: k_m,
            k_sv: k_s,
            k_somega: k_s,
        }
    }

    pub fn validate(&self) -> Result<()> {
        for g in [self.k_mv, self.k_momega, self.k_sv, self.k_somega] {
            if !(g.is_finite() && g > 0.0) {
                return Err(Error::Config(format!("controller gains must be positive, got {g}")));
            }
        }
        Ok(())
    }
}

/// Master torque from the environment force seen at the operator station.
///
/// `feedback` is either the delayed force or the backward predictor's
/// estimate; the law is the same in both cases.
pub fn master_control(feedback: Vec2, gains: &ControllerGains) -> Vec2 {
    [-gains.k_mv * feedback[0], -gains.k_momega * feedback[1]]
}

/// Slave body command from the master motion command seen at the UGV,
/// with the linear channel saturated at `v_max`.
pub fn slave_control(command: Vec2, gains: &ControllerGains, v_max: f64) -> Vec2 {
    [
        (gains.k_sv * command[0]).clamp(-v_max, v_max),
        gains.k_somega * command[1],
    ]
}

/// Discrete first-order low-pass, `y += a (u - y)` with
/// `a = dt / (dt + 1 / (2 pi f_c))`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LowPass {
    pub cutoff_hz: f64,
    pub y: f64,
}

impl LowPass {
    pub fn new(cutoff_hz: f64, sample_dt: f64) -> Result<Self> {
        let nyquist = 0.5 / sample_dt;
        if !(cutoff_hz > 0.0 && cutoff_hz < nyquist) {
            return Err(Error::Config(format!(
                "cutoff {cutoff_hz} Hz must lie in (0, {nyquist}) Hz"
            )));
        }
        Ok(Self { cutoff_hz, y: 0.0 })
    }

    pub fn coefficient(&self, dt: f64) -> f64 {
        dt / (dt + 1.0 / (2.0 * PI * self.cutoff_hz))
    }

    pub fn step(&mut self, u: f64, dt: f64) -> f64 {
        let a = self.coefficient(dt);
        self.y += a * (u - self.y);
        self.y
    }

    pub fn reset(&mut self) {
        self.y = 0.0;
    }
}

#[cfg(test)]
mod tests {
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    use super::*;

    #[test]
    fn master_control_examples() {
        let g = ControllerGains::default();
        assert_eq!(master_control([0.0, 0.0], &g), [0.0, 0.0]);
        assert_abs_diff_eq!(master_control([0.02, 0.0], &g)[0], -0.1, epsilon = 1e-15);
        let u = master_control([0.02, -0.01], &g);
        assert_abs_diff_eq!(u[0], -0.1, epsilon = 1e-15);
        assert_abs_diff_eq!(u[1], 0.05, epsilon = 1e-15);
    }

    #[test]
    fn slave_control_examples() {
        let g = ControllerGains::default();
        assert_eq!(slave_control([0.0, 0.0], &g, 0.1), [0.0, 0.0]);
        assert_abs_diff_eq!(slave_control([0.1, 0.0], &g, 0.1)[0], 0.1, epsilon = 1e-15);
        assert_eq!(slave_control([0.3, 0.0], &g, 0.1)[0], 0.1);
        assert_eq!(slave_control([-0.3, 0.0], &g, 0.1)[0], -0.1);
    }

    #[test]
    fn gains_must_be_positive() {
        assert!(ControllerGains::uniform(5.0, 0.0).validate().is_err());
        assert!(ControllerGains::default().validate().is_ok());
    }

    #[test]
    fn filter_has_unit_dc_gain() {
        let mut f = LowPass::new(0.8, 0.1).unwrap();
        for _ in 0..500 {
            f.step(0.37, 0.1);
        }
        assert_abs_diff_eq!(f.y, 0.37, epsilon = 1e-12);
    }

    #[test]
    fn filter_rejects_bad_cutoff() {
        assert!(LowPass::new(0.0, 0.1).is_err());
        assert!(LowPass::new(5.0, 0.1).is_err());
    }

    fn steady_amplitude(freq: f64, dt: f64) -> f64 {
        let mut f = LowPass::new(0.8, dt).unwrap();
        let steps = (60.0 / dt) as usize;
        let mut peak: f64 = 0.0;
        for k in 0..steps {
            let t = k as f64 * dt;
            let y = f.step((2.0 * PI * freq * t).sin(), dt);
            if t > 40.0 {
                peak = peak.max(y.abs());
            }
        }
        peak
    }

    #[test]
    fn filter_attenuation_matches_first_order_magnitude() {
        // fine step: the discrete filter approaches its continuous prototype
        let dt = 1e-4;
        assert_abs_diff_eq!(steady_amplitude(0.8, dt), 1.0 / 2f64.sqrt(), epsilon = 2e-3);
        let expected = 1.0 / (1.0 + (8.0f64 / 0.8).powi(2)).sqrt();
        assert_abs_diff_eq!(expected, 0.0995, epsilon = 1e-4);
        assert_abs_diff_eq!(steady_amplitude(8.0, dt), expected, epsilon = 2e-3);
    }

    #[test]
    fn filter_at_sample_clock_matches_discrete_response() {
        // |a / (1 - (1 - a) e^{-j w dt})| for the 10 Hz recursion
        let dt = 0.1;
        let a = LowPass::new(0.8, dt).unwrap().coefficient(dt);
        let wdt = 2.0 * PI * 0.8 * dt;
        let re = 1.0 - (1.0 - a) * wdt.cos();
        let im = (1.0 - a) * wdt.sin();
        let gain = a / re.hypot(im);
        assert_abs_diff_eq!(steady_amplitude(0.8, dt), gain, epsilon = 0.01);
    }

    #[test]
    fn step_response_does_not_overshoot() {
        let mut f = LowPass::new(0.8, 0.1).unwrap();
        let mut prev = 0.0;
        for _ in 0..100 {
            let y = f.step(1.0, 0.1);
            assert!(y >= prev && y <= 1.0);
            prev = y;
        }
    }

    proptest! {
        #[test]
        fn filter_output_stays_within_input_bounds(us in prop::collection::vec(-2.0f64..3.0, 1..200)) {
            let mut f = LowPass::new(0.8, 0.1).unwrap();
            f.y = us[0];
            let lo = us.iter().cloned().fold(f64::INFINITY, f64::min);
            let hi = us.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            for &u in &us {
                let y = f.step(u, 0.1);
                prop_assert!(y >= lo - 1e-12 && y <= hi + 1e-12);
            }
        }

        #[test]
        fn backward_push_when_command_exceeds_speed(x_mv in 0.0f64..0.1, v_s in 0.0f64..0.1) {
            // f_ev = u_sv - v_s with k_s = 1 and no saturation
            let g = ControllerGains::default();
            let u_s = slave_control([x_mv, 0.0], &g, 0.1);
            let f_ev = u_s[0] - v_s;
            let u_m = master_control([f_ev, 0.0], &g);
            if x_mv > v_s { prop_assert!(u_m[0] < 0.0); }
            if x_mv < v_s { prop_assert!(u_m[0] > 0.0); }
        }
    }
}
