//! Drives the UGV straight along track A at a fixed command, with and
//! without feedforward slip compensation, and prints the wheel slip and
//! speed through the soft patches.

use teleop_core::control::{slave_control, ControllerGains};
use teleop_core::dynamics::{environment_force, step_slave, SlaveStepInputs, SlipEstimator, UgvParams, UgvState, INTERNAL_DT};
use teleop_core::track::{Track, TrackId};

fn drive(compensate: bool) -> teleop_core::Result<()> {
    let track = Track::preset(TrackId::A);
    let params = UgvParams::default();
    let gains = ControllerGains::default();
    let mut estimator = SlipEstimator {
        gain: if compensate { 0.8 } else { 0.0 },
        ..SlipEstimator::default()
    };
    let mut ugv = UgvState::at_pose(track.start_pose());
    let command = slave_control([0.1, 0.0], &gains, params.v_max);
    println!("slip compensation {}", if compensate { "on" } else { "off" });
    for step in 0..12_000 {
        let inputs = SlaveStepInputs {
            slip_estimate: estimator.compensation(),
            slip_noise: [0.0; 2],
        };
        ugv = step_slave(&params, &ugv, command, &track, inputs, INTERNAL_DT)?;
        estimator.update([ugv.s_r, ugv.s_l], INTERNAL_DT);
        if step % 1000 == 0 {
            let f_e = environment_force(&ugv, command);
            println!(
                "  x {:5.2} m  slip {:.2}/{:.2}  v_s {:.4}  f_e {:+.4}",
                ugv.pose.x, ugv.s_r, ugv.s_l, ugv.v_s, f_e[0]
            );
        }
        if track.past_end([ugv.pose.x, ugv.pose.y]) {
            println!("  reached the end after {:.1} s", step as f64 * INTERNAL_DT);
            break;
        }
    }
    Ok(())
}

fn main() -> teleop_core::Result<()> {
    drive(false)?;
    drive(true)
}
