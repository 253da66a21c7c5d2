//! The conventional predictor on a delayed sine, scored against the raw
//! delayed signal.

use std::f64::consts::TAU;

use teleop_core::metrics::delta_n;
use teleop_core::predict_conv::{ConvPredictor, ConvPredictorParams};

fn main() -> teleop_core::Result<()> {
    let delay = 1.25;
    let lag = (delay / 0.1f64).round() as usize;
    let signal: Vec<f64> = (0..600).map(|k| (TAU * 0.2 * k as f64 * 0.1).sin()).collect();
    let slope = |k: usize| TAU * 0.2 * (TAU * 0.2 * k as f64 * 0.1).cos();

    let mut predictor = ConvPredictor::new(ConvPredictorParams::forward(), 32)?;
    let mut predicted = Vec::new();
    let mut delayed = Vec::new();
    for k in 0..signal.len() {
        let (x, xdot) = if k >= lag { (signal[k - lag], slope(k - lag)) } else { (0.0, 0.0) };
        delayed.push(x);
        predicted.push(predictor.conv_step(k as u64, x, xdot, delay)?);
    }
    for k in (0..signal.len()).step_by(25) {
        println!("{:5.1}  actual {:+.3}  delayed {:+.3}  predicted {:+.3}", k as f64 * 0.1, signal[k], delayed[k], predicted[k]);
    }
    match delta_n(&predicted, &signal, &delayed)? {
        Some(d) => println!("delta_n = {d:.1}%"),
        None => println!("delayed signal equals the actual one"),
    }
    Ok(())
}
