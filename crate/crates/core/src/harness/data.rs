//! Training and test data collection, and training of the four models.

use std::path::Path;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::config::{derive_seed, ScenarioConfig, TrackChoice};
use super::run::{checkpoint_path, run_case};
use super::sim::PilstmModels;
use crate::coupling::CouplingVariable;
use crate::dataset::{window_logs, write_log, Case, RunLog};
use crate::error::{Error, Result};
use crate::operator::personas;
use crate::pilstm::{save, train_with_progress, EpochRecord, NetworkTopology, PilstmModel, TrainConfig, TrainLog};
use crate::track::TrackSpec;

/// One data-collection run: which persona drives, for how long, with
/// which seed.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DataRun {
    pub persona: usize,
    pub seed: u64,
    pub duration: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DataPlan {
    /// Scenario every run starts from; case, persona, seed and duration are
    /// overridden per run.
    pub base: ScenarioConfig,
    pub train: Vec<DataRun>,
    pub test: Vec<DataRun>,
}

impl DataPlan {
    /// Three operators for 300 s each to train on and three 30 s runs to
    /// test on, all on the winding training course.
    pub fn standard(seed: u64) -> Self {
        let base = ScenarioConfig {
            name: "training-loop".into(),
            track: TrackChoice::Custom(TrackSpec::training_loop()),
            stop_at_finish: false,
            seed,
            ..ScenarioConfig::default()
        };
        let run = |persona, stream, duration| DataRun {
            persona,
            seed: derive_seed(seed, stream),
            duration,
        };
        Self {
            base,
            train: vec![run(0, 100, 300.0), run(1, 101, 300.0), run(2, 102, 300.0)],
            test: vec![run(3, 200, 30.0), run(4, 201, 30.0), run(0, 202, 30.0)],
        }
    }

    pub fn validate(&self) -> Result<()> {
        let n = personas().len();
        for r in self.train.iter().chain(&self.test) {
            if r.persona >= n {
                return Err(Error::Config(format!("persona {} does not exist (have {n})", r.persona)));
            }
            if !(r.duration > 0.0) {
                return Err(Error::Config(format!("run duration must be positive, got {}", r.duration)));
            }
        }
        if self.train.is_empty() {
            return Err(Error::Config("data plan has no training runs".into()));
        }
        self.base.validate()
    }

    fn config_for(&self, run: &DataRun, tag: &str) -> ScenarioConfig {
        let mut c = self.base.clone().with_persona(run.persona).with_case(Case::Delayed);
        c.name = format!("{}-{tag}-p{}", self.base.name, run.persona + 1);
        c.seed = run.seed;
        c.duration = run.duration;
        c
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub train: Vec<RunLog>,
    pub test: Vec<RunLog>,
}

/// Runs the delayed case for every planned run. The conventional predictor
/// rides along in the background to produce the predicted-feature columns.
pub fn gen_data(plan: &DataPlan) -> Result<Dataset> {
    plan.validate()?;
    let collect = |runs: &[DataRun], tag: &str| -> Result<Vec<RunLog>> {
        runs.iter()
            .map(|r| run_case(&plan.config_for(r, tag), None).map(|(log, _)| log))
            .collect()
    };
    Ok(Dataset {
        train: collect(&plan.train, "train")?,
        test: collect(&plan.test, "test")?,
    })
}

/// Writes `train_<k>.csv` and `test_<k>.csv` into `dir`.
pub fn write_dataset(dir: &Path, data: &Dataset) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    for (k, log) in data.train.iter().enumerate() {
        write_log(log, &dir.join(format!("train_{k}.csv")))?;
    }
    for (k, log) in data.test.iter().enumerate() {
        write_log(log, &dir.join(format!("test_{k}.csv")))?;
    }
    Ok(())
}

/// Reads every `train_*.csv` / `test_*.csv` in `dir`, in index order.
pub fn read_dataset(dir: &Path) -> Result<Dataset> {
    let read = |prefix: &str| -> Result<Vec<RunLog>> {
        let mut logs = Vec::new();
        for k in 0.. {
            let path = dir.join(format!("{prefix}_{k}.csv"));
            if !path.exists() {
                break;
            }
            logs.push(crate::dataset::read_log(&path)?);
        }
        Ok(logs)
    };
    let data = Dataset {
        train: read("train")?,
        test: read("test")?,
    };
    if data.train.is_empty() {
        return Err(Error::InsufficientData(format!("no train_0.csv in {}", dir.display())));
    }
    Ok(data)
}

/// Knobs shared by the four trainings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainPlan {
    /// `None` uses each variable's tuned topology.
    pub topology: Option<NetworkTopology>,
    pub epochs: usize,
    pub patience: usize,
    pub physics_weight: f64,
    pub seed: u64,
}

impl Default for TrainPlan {
    fn default() -> Self {
        Self {
            topology: None,
            epochs: 200,
            patience: 30,
            physics_weight: 0.1,
            seed: 0,
        }
    }
}

impl TrainPlan {
    pub fn topology_for(&self, var: CouplingVariable) -> NetworkTopology {
        self.topology.unwrap_or_else(|| NetworkTopology::for_variable(var))
    }

    pub fn config_for(&self, var: CouplingVariable) -> TrainConfig {
        TrainConfig {
            epochs: self.epochs,
            patience: self.patience,
            physics_weight: self.physics_weight,
            seed: derive_seed(self.seed, var.index() as u64),
            ..TrainConfig::for_variable(var)
        }
    }
}

pub fn train_variable(
    logs: &[RunLog],
    var: CouplingVariable,
    plan: &TrainPlan,
    progress: impl FnMut(&EpochRecord),
) -> Result<(PilstmModel, TrainLog)> {
    let topology = plan.topology_for(var);
    let refs: Vec<&RunLog> = logs.iter().collect();
    let windows = window_logs(&refs, var, topology.input_len)?;
    train_with_progress(&windows, topology, &plan.config_for(var), progress)
}

/// Trains all four variables on the training logs.
pub fn train_all(
    logs: &[RunLog],
    plan: &TrainPlan,
    mut progress: impl FnMut(CouplingVariable, &EpochRecord),
) -> Result<(PilstmModels, [TrainLog; 4])> {
    let mut models = Vec::with_capacity(4);
    let mut train_logs = Vec::with_capacity(4);
    for var in CouplingVariable::ALL {
        let (model, log) = train_variable(logs, var, plan, |r| progress(var, r))?;
        models.push(Arc::new(model));
        train_logs.push(log);
    }
    let models: PilstmModels = models.try_into().map_err(|_| Error::Topology("expected four models".into()))?;
    let train_logs: [TrainLog; 4] = train_logs
        .try_into()
        .map_err(|_| Error::Topology("expected four training logs".into()))?;
    Ok((models, train_logs))
}

/// Saves `<variable>.json` checkpoints and `<variable>_train_log.json`.
pub fn save_models(dir: &Path, models: &PilstmModels, logs: Option<&[TrainLog; 4]>) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    for var in CouplingVariable::ALL {
        save(&models[var.index()], &checkpoint_path(dir, var))?;
        if let Some(logs) = logs {
            let path = dir.join(format!("{}_train_log.json", var.name()));
            std::fs::write(&path, serde_json::to_string_pretty(&logs[var.index()])?).map_err(|e| Error::io(&path, e))?;
        }
    }
    Ok(())
}
