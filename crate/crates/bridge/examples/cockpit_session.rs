//! Drives a cockpit session without a socket: full forward from t = 1 s,
//! printing the frames a client would see, until the force comes back.

use teleop_bridge::{ClientMessage, CockpitSession, CommandMsg, DriveMapping, PROTOCOL_VERSION};
use teleop_core::channel::DelayModel;
use teleop_core::dataset::Case;
use teleop_core::harness::ScenarioConfig;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut config = ScenarioConfig::default().with_case(Case::Delayed);
    config.delay = DelayModel::fixed(1.0, 0);
    let mut session = CockpitSession::new(config, None, DriveMapping::default())?;

    let mut moved = None;
    for k in 0..60u64 {
        if k >= 10 {
            session.handle(ClientMessage::Cmd(CommandMsg {
                v: PROTOCOL_VERSION,
                seq: k,
                client_time: k as f64 * 0.1,
                v_norm: 1.0,
                omega_norm: 0.0,
            }))?;
        }
        let f = session.tick()?;
        println!(
            "{:4.1} s  x_m {:+.4}  v_s {:+.4}  feedback {:+.5}  backlog {:?}",
            f.server_time, f.x_m[0], f.v_s, f.force_feedback[0], f.backlog
        );
        if moved.is_none() && f.x_m[0] != 0.0 {
            moved = Some(f.server_time);
        }
        if let (Some(t0), true) = (moved, f.force_feedback[0] != 0.0) {
            println!("force feedback {:.1} s after the device moved", f.server_time - t0);
            break;
        }
    }
    Ok(())
}
