//! Replays an ideal run's coupling streams through the delay model and
//! scores the conventional predictor, plus the trained networks when a
//! checkpoint directory is given.
//!
//! `cargo run --release --example open_loop_replay -- [models-dir]`

use std::path::Path;

use teleop_core::coupling::CouplingVariable;
use teleop_core::dataset::Case;
use teleop_core::harness::{build_predictors, delay_replay, eval_open_loop, load_models, replay, run_case, PredictorKind, ScenarioConfig};
use teleop_core::metrics::delta_n;

fn pct(v: Option<f64>) -> String {
    v.map_or_else(|| "n/a".into(), |x| format!("{x:.1}%"))
}

fn main() -> teleop_core::Result<()> {
    let config = ScenarioConfig::default().with_case(Case::Ideal);
    let (log, report) = run_case(&config, None)?;
    println!("ideal run: {} rows, completion {:?}", log.len(), report.completion.seconds());

    if let Some(dir) = std::env::args().nth(1) {
        let models = load_models(Path::new(&dir))?;
        for row in eval_open_loop(&log, &config.operator.name, &config.delay, config.seed, &models)? {
            println!("{:9}  PiLSTM {:>7}  conventional {:>7}", row.variable.name(), pct(row.pilstm), pct(row.conv));
        }
        return Ok(());
    }
    let streams = delay_replay(&log, &config.delay, config.seed)?;
    let mut predictors = build_predictors(PredictorKind::Conv, None, config.delay.max_delay())?;
    for var in CouplingVariable::ALL {
        let obs = &streams[var.index()];
        let predicted = replay(predictors[var.index()].as_mut(), obs)?;
        let delayed: Vec<f64> = obs.iter().map(|o| o.value).collect();
        let score = delta_n(&predicted, &log.actual(var), &delayed)?;
        println!("{:9}  conventional {:>7}", var.name(), pct(score));
    }
    Ok(())
}
