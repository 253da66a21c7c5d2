//! Scenario orchestration: closed-loop runs, dataset generation, training
//! of the four predictors and the open- and closed-loop evaluations.

pub mod config;
pub mod data;
pub mod eval;
pub mod run;
pub mod sim;

pub use config::{derive_seed, PredictorConfig, PredictorKind, ScenarioConfig, SlipCompensation, TrackChoice};
pub use run::{checkpoint_path, load_models, report, run_case, write_run, RunReport};
pub use sim::{build_predictors, observe, ConstantForce, ForceSource, PilstmModels, Simulation};
pub use data::{gen_data, read_dataset, save_models, train_all, train_variable, write_dataset, DataPlan, DataRun, Dataset, TrainPlan};
pub use eval::{delay_replay, eval_closed_loop, eval_open_loop, logged_observations, normalized_rmse, replay, ClosedLoopReport, ClosedLoopRow, OpenLoopRow, Ordering};
