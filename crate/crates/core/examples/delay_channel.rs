//! Pushes a ramp through the jittered link and prints what the receiver
//! sees each tick.

use teleop_core::channel::{DelayChannel, DelayModel};

fn main() -> teleop_core::Result<()> {
    let model = DelayModel {
        seed: 7,
        ..DelayModel::default()
    };
    let mut link = DelayChannel::<f64>::new(model)?;
    println!("   t   sent  seen   age  in-flight");
    for k in 0..40u32 {
        let now = f64::from(k) * 0.1;
        link.send(now, now)?;
        link.poll(now + 1e-9);
        match link.latest() {
            Some(p) => println!(
                "{now:4.1}  {now:4.1}  {:4.1}  {:4.2}  {}",
                p.payload,
                now - p.send_time,
                link.backlog()
            ),
            None => println!("{now:4.1}  {now:4.1}     -     -  {}", link.backlog()),
        }
    }
    Ok(())
}
