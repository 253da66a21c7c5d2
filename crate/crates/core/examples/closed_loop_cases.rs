//! One persona through the ideal and delayed cases on track A, and the
//! predicted case too when checkpoints are given.
//!
//! `cargo run --release --example closed_loop_cases -- [persona 1-5] [models-dir]`

use std::path::PathBuf;

use teleop_core::dataset::Case;
use teleop_core::harness::{run_case, PredictorKind, ScenarioConfig};

fn main() -> teleop_core::Result<()> {
    let mut args = std::env::args().skip(1);
    let persona = args.next().and_then(|a| a.parse::<usize>().ok()).unwrap_or(1).clamp(1, 5) - 1;
    let models = args.next().map(PathBuf::from);

    let mut cases = vec![Case::Ideal, Case::Delayed];
    if models.is_some() {
        cases.push(Case::Predicted);
    }
    for case in cases {
        let mut config = ScenarioConfig::default().with_persona(persona).with_case(case);
        config.duration = 400.0;
        config.predictor.kind = PredictorKind::Pilstm;
        config.predictor.checkpoint_dir = models.clone();
        let (_, r) = run_case(&config, None)?;
        println!(
            "{:9} {:10} completion {:>8}  omega [{:.4} {:.4}]  gamma [{:.4} {:.4}]  f_h estimate error {:.2e}",
            r.case.to_string(),
            r.operator,
            r.completion.seconds().map_or("DNF".into(), |s| format!("{s:.1} s")),
            r.norms.omega[0],
            r.norms.omega[1],
            r.norms.gamma[0],
            r.norms.gamma[1],
            r.fh_estimate_error[0].max(r.fh_estimate_error[1])
        );
    }
    Ok(())
}
