//! Scripted stand-in for the human at the master device.
//!
//! The operator follows a pure-pursuit reference computed from the pose it
//! sees on the (delayed) video stream, pushes the device towards that
//! reference, and yields to the torque it felt a reaction time ago.

use std::collections::VecDeque;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::compensation::SAMPLE_DT;
use crate::dynamics::{Pose, Vec2};
use crate::error::{Error, Result};
use crate::track::Track;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OperatorParams {
    pub name: String,
    pub k_track: f64,
    /// How strongly felt torque is let through to the applied force.
    pub k_feel: f64,
    /// Seconds.
    pub reaction_delay: f64,
    /// Half-width of the uniform force noise.
    pub noise_amp: f64,
    pub seed: u64,
    pub target_speed: f64,
    /// Pure-pursuit lookahead distance (m).
    pub lookahead: f64,
    /// Device force limit per axis.
    pub force_limit: f64,
}

impl Default for OperatorParams {
    fn default() -> Self {
        Self {
            name: "default".into(),
            k_track: 0.5,
            k_feel: 0.5,
            reaction_delay: 0.3,
            noise_amp: 0.003,
            seed: 0,
            target_speed: 0.1,
            lookahead: 1.0,
            force_limit: 0.5,
        }
    }
}

impl OperatorParams {
    pub fn validate(&self) -> Result<()> {
        let ok = self.k_track >= 0.0
            && self.k_feel >= 0.0
            && self.reaction_delay >= 0.0
            && self.noise_amp >= 0.0
            && self.target_speed > 0.0
            && self.lookahead > 0.0
            && self.force_limit > 0.0;
        if !ok {
            return Err(Error::Config(format!("invalid operator parameters {self:?}")));
        }
        Ok(())
    }

    pub fn reaction_ticks(&self) -> usize {
        (self.reaction_delay / SAMPLE_DT).round() as usize
    }
}

/// Five operators with distinct gains, noise and seeds.
pub fn personas() -> Vec<OperatorParams> {
    let table = [
        ("operator-1", 0.50, 0.50, 0.003, 101),
        ("operator-2", 0.40, 0.80, 0.002, 202),
        ("operator-3", 0.60, 0.30, 0.004, 303),
        ("operator-4", 0.45, 0.60, 0.003, 404),
        ("operator-5", 0.55, 1.00, 0.002, 505),
    ];
    table
        .iter()
        .map(|&(name, k_track, k_feel, noise_amp, seed)| OperatorParams {
            name: name.into(),
            k_track,
            k_feel,
            noise_amp,
            seed,
            ..OperatorParams::default()
        })
        .collect()
}

/// Applied force from the reference, the device state and the felt torque.
pub fn operator_step(params: &OperatorParams, x_ref: Vec2, x_m: Vec2, u_m_felt: Vec2, noise: Vec2) -> Vec2 {
    let lim = params.force_limit;
    std::array::from_fn(|i| {
        (params.k_track * (x_ref[i] - x_m[i]) + params.k_feel * u_m_felt[i] + noise[i]).clamp(-lim, lim)
    })
}

/// Arclength-indexed nominal commands: constant speed and the angular rate
/// that follows the centerline curvature at that speed.
#[derive(Debug, Clone, Copy)]
pub struct ReferenceSchedule<'a> {
    track: &'a Track,
    speed: f64,
}

pub fn make_reference(track: &Track, target_speed: f64, v_max: f64) -> Result<ReferenceSchedule<'_>> {
    if !(target_speed > 0.0 && target_speed <= v_max) {
        return Err(Error::Config(format!(
            "target speed {target_speed} must lie in (0, {v_max}]"
        )));
    }
    Ok(ReferenceSchedule {
        track,
        speed: target_speed,
    })
}

impl ReferenceSchedule<'_> {
    pub fn at(&self, arclength: f64) -> Vec2 {
        [self.speed, self.speed * self.track.curvature_at(arclength)]
    }

    /// Pure-pursuit command from an observed pose: aim at the centerline
    /// point `lookahead` ahead of the pose's projection. Zero once the pose
    /// is past the end mark.
    pub fn pursue(&self, pose: &Pose, lookahead: f64) -> Vec2 {
        if self.track.past_end([pose.x, pose.y]) {
            return [0.0, 0.0];
        }
        let s = self.track.project([pose.x, pose.y]).arclength;
        let target = if s + lookahead <= self.track.length() {
            self.track.pose_at(s + lookahead)
        } else {
            // aim beyond the end along the final heading
            let end = self.track.end_pose();
            let extra = s + lookahead - self.track.length();
            Pose {
                x: end.x + extra * end.heading.cos(),
                y: end.y + extra * end.heading.sin(),
                heading: end.heading,
            }
        };
        let dx = target.x - pose.x;
        let dy = target.y - pose.y;
        let dist = dx.hypot(dy).max(1e-9);
        let alpha = dy.atan2(dx) - pose.heading;
        let curvature = 2.0 * alpha.sin() / dist;
        [self.speed, self.speed * curvature]
    }
}

/// Stateful operator: reaction-time buffer of felt torque and its own noise
/// source.
#[derive(Debug, Clone)]
pub struct Operator {
    params: OperatorParams,
    rng: ChaCha8Rng,
    felt: VecDeque<Vec2>,
}

impl Operator {
    pub fn new(params: OperatorParams) -> Result<Self> {
        params.validate()?;
        let rng = ChaCha8Rng::seed_from_u64(params.seed);
        Ok(Self {
            rng,
            felt: VecDeque::with_capacity(params.reaction_ticks() + 1),
            params,
        })
    }

    pub fn params(&self) -> &OperatorParams {
        &self.params
    }

    /// One 10 Hz decision. `u_m` is the torque the device is producing now;
    /// the operator responds to the value from `reaction_delay` ago.
    pub fn step(&mut self, reference: &ReferenceSchedule<'_>, seen: &Pose, x_m: Vec2, u_m: Vec2) -> Vec2 {
        self.felt.push_back(u_m);
        let felt = if self.felt.len() > self.params.reaction_ticks() {
            self.felt.pop_front().expect("non-empty")
        } else {
            [0.0, 0.0]
        };
        let a = self.params.noise_amp;
        let noise = if a > 0.0 {
            [self.rng.gen_range(-a..=a), self.rng.gen_range(-a..=a)]
        } else {
            [0.0, 0.0]
        };
        let x_ref = reference.pursue(seen, self.params.lookahead);
        operator_step(&self.params, x_ref, x_m, felt, noise)
    }
}

#[cfg(test)]
mod tests {
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    use super::*;
    use crate::track::TrackId;

    fn quiet(k_track: f64, k_feel: f64) -> OperatorParams {
        OperatorParams {
            k_track,
            k_feel,
            noise_amp: 0.0,
            ..OperatorParams::default()
        }
    }

    #[test]
    fn step_examples() {
        let p = quiet(2.0, 1.0);
        assert_eq!(operator_step(&p, [0.1, 0.0], [0.1, 0.0], [0.0, 0.0], [0.0; 2]), [0.0, 0.0]);
        assert_abs_diff_eq!(operator_step(&p, [0.1, 0.0], [0.0, 0.0], [0.0, 0.0], [0.0; 2])[0], 0.2, epsilon = 1e-15);
        assert_abs_diff_eq!(operator_step(&p, [0.1, 0.0], [0.0, 0.0], [-0.1, 0.0], [0.0; 2])[0], 0.1, epsilon = 1e-15);
        assert_eq!(operator_step(&p, [10.0, 0.0], [0.0, 0.0], [0.0; 2], [0.0; 2])[0], p.force_limit);
    }

    #[test]
    fn straight_track_has_no_angular_reference() {
        let t = Track::preset(TrackId::A);
        let r = make_reference(&t, 0.1, 0.1).unwrap();
        for s in [0.0, 3.3, 9.9] {
            assert_eq!(r.at(s), [0.1, 0.0]);
            let on_line = t.pose_at(s);
            assert_abs_diff_eq!(r.pursue(&on_line, 1.0)[1], 0.0, epsilon = 1e-12);
        }
        assert!(make_reference(&t, 0.2, 0.1).is_err());
    }

    #[test]
    fn right_turn_reference_is_negative() {
        let t = Track::preset(TrackId::B);
        let r = make_reference(&t, 0.1, 0.1).unwrap();
        assert_abs_diff_eq!(r.at(3.0)[1], -0.1 / 1.5, epsilon = 1e-12);
        let on_arc = t.pose_at(2.5);
        let w = r.pursue(&on_arc, 0.5)[1];
        assert_abs_diff_eq!(w, -0.1 / 1.5, epsilon = 2e-3);
    }

    #[test]
    fn pursuit_steers_back_towards_the_centerline() {
        let t = Track::preset(TrackId::A);
        let r = make_reference(&t, 0.1, 0.1).unwrap();
        let left = Pose { x: 2.0, y: 0.5, heading: 0.0 };
        assert!(r.pursue(&left, 1.0)[1] < 0.0);
        let past = Pose { x: 10.2, y: 0.0, heading: 0.0 };
        assert_eq!(r.pursue(&past, 1.0), [0.0, 0.0]);
    }

    #[test]
    fn felt_torque_arrives_after_the_reaction_time() {
        let t = Track::preset(TrackId::A);
        let r = make_reference(&t, 0.1, 0.1).unwrap();
        let mut op = Operator::new(quiet(0.0, 1.0)).unwrap();
        let pose = Pose::default();
        let mut out = Vec::new();
        for k in 0..6 {
            let u = if k == 1 { [-0.2, 0.0] } else { [0.0, 0.0] };
            out.push(op.step(&r, &pose, [0.0, 0.0], u)[0]);
        }
        assert_eq!(out, vec![0.0, 0.0, 0.0, 0.0, -0.2, 0.0]);
    }

    #[test]
    fn same_seed_same_forces() {
        let t = Track::preset(TrackId::A);
        let r = make_reference(&t, 0.1, 0.1).unwrap();
        let run = || {
            let mut op = Operator::new(personas()[2].clone()).unwrap();
            (0..50).map(|_| op.step(&r, &Pose::default(), [0.05, 0.0], [0.0; 2])).collect::<Vec<_>>()
        };
        assert_eq!(run(), run());
    }

    #[test]
    fn steady_speed_stays_under_the_cap() {
        // master equilibrium c_bar x = f_h with f_h = k (x_ref - x)
        for p in personas() {
            let c_bar = 0.2;
            let x = p.k_track * p.target_speed / (c_bar + p.k_track);
            assert!(x <= 0.1 * 1.05);
        }
    }

    proptest! {
        #[test]
        fn more_backward_torque_never_increases_force(
            felt in -1.0f64..1.0, extra in 0.0f64..1.0, x in -0.2f64..0.2, k in 0.0f64..3.0,
        ) {
            let p = quiet(1.0, k);
            let a = operator_step(&p, [0.1, 0.0], [x, 0.0], [felt, 0.0], [0.0; 2])[0];
            let b = operator_step(&p, [0.1, 0.0], [x, 0.0], [felt - extra, 0.0], [0.0; 2])[0];
            prop_assert!(b <= a);
        }
    }
}
