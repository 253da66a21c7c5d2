//! Single scenario runs and their metric reports.

use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::config::{PredictorKind, ScenarioConfig};
use super::sim::{PilstmModels, Simulation};
use crate::coupling::CouplingVariable;
use crate::dataset::{write_log, Case, RunLog};
use crate::error::{Error, Result};
use crate::metrics::{completion_time, estimate_fh, l2_norm, omega_gamma, Completion, TrackingNorms};
use crate::pilstm::load;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub scenario: String,
    pub case: Case,
    pub seed: u64,
    pub operator: String,
    pub rows: usize,
    pub completion: Completion,
    pub norms: TrackingNorms,
    /// Relative RMS gap between the reconstructed and the applied operator
    /// force, per axis.
    pub fh_estimate_error: [f64; 2],
}

pub fn report(config: &ScenarioConfig, log: &RunLog) -> Result<RunReport> {
    let track = config.build_track()?;
    let x_m: Vec<_> = log.rows.iter().map(|r| r.x_m).collect();
    let u_m: Vec<_> = log.rows.iter().map(|r| r.u_m).collect();
    let estimate = estimate_fh(&x_m, &u_m, &config.device, crate::compensation::SAMPLE_DT)?;
    let fh_estimate_error = std::array::from_fn(|axis| {
        let err = l2_norm(estimate.iter().zip(&log.rows).map(|(e, r)| e[axis] - r.f_h[axis]));
        let size = l2_norm(log.rows.iter().take(estimate.len()).map(|r| r.f_h[axis]));
        if size > 0.0 {
            err / size
        } else {
            0.0
        }
    });
    Ok(RunReport {
        scenario: config.name.clone(),
        case: config.case,
        seed: config.seed,
        operator: config.operator.name.clone(),
        rows: log.len(),
        completion: completion_time(log, &track),
        norms: omega_gamma(log)?,
        fh_estimate_error,
    })
}

/// Loads `<dir>/<variable>.json` for all four variables.
pub fn load_models(dir: &Path) -> Result<PilstmModels> {
    let load_one = |var: CouplingVariable| -> Result<Arc<_>> {
        let path = checkpoint_path(dir, var);
        let model = load(&path)?;
        if model.variable != var {
            return Err(Error::Topology(format!(
                "{} holds a model for {}, expected {var}",
                path.display(),
                model.variable
            )));
        }
        Ok(Arc::new(model))
    };
    Ok([
        load_one(CouplingVariable::Xmv)?,
        load_one(CouplingVariable::Xmomega)?,
        load_one(CouplingVariable::Fev)?,
        load_one(CouplingVariable::Feomega)?,
    ])
}

pub fn checkpoint_path(dir: &Path, var: CouplingVariable) -> PathBuf {
    dir.join(format!("{}.json", var.name()))
}

/// Runs the scripted operator through one scenario. PiLSTM models are
/// taken from `models` when given, otherwise from the configured
/// checkpoint directory.
pub fn run_case(config: &ScenarioConfig, models: Option<&PilstmModels>) -> Result<(RunLog, RunReport)> {
    let loaded;
    let models = match (config.case, config.predictor.kind, models) {
        (Case::Predicted, PredictorKind::Pilstm, None) => {
            let dir = config
                .predictor
                .checkpoint_dir
                .as_ref()
                .ok_or_else(|| Error::Config("predicted case with PiLSTM needs a checkpoint directory".into()))?;
            loaded = load_models(dir)?;
            Some(&loaded)
        }
        (_, _, m) => m,
    };
    let mut sim = Simulation::new(config.clone(), models)?;
    let mut operator = sim.scripted_operator()?;
    let mut log = RunLog::new(config.name.clone(), config.seed, config.case);
    for _ in 0..config.ticks() {
        log.rows.push(sim.step(&mut operator)?);
        if config.stop_at_finish && sim.finished() {
            break;
        }
    }
    let report = report(config, &log)?;
    Ok((log, report))
}

/// Writes `log.csv` and `report.json` into `dir`.
pub fn write_run(dir: &Path, log: &RunLog, report: &RunReport) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    write_log(log, &dir.join("log.csv"))?;
    let path = dir.join("report.json");
    std::fs::write(&path, serde_json::to_string_pretty(report)?).map_err(|e| Error::io(&path, e))
}
