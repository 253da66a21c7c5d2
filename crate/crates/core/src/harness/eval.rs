//! Open-loop replay of recorded streams through the delay model and the
//! predictors, and the three-case closed-loop sweep.

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::config::{derive_seed, PredictorKind, ScenarioConfig};
use super::run::{run_case, RunReport};
use super::sim::{build_predictors, observe, tick_time, PilstmModels, BACKWARD_STREAM, FORWARD_STREAM};
use crate::channel::{DelayChannel, DelayModel};
use crate::compensation::{Compensator, DelayedObservation};
use crate::coupling::CouplingVariable;
use crate::dataset::{window, Case, RunLog};
use crate::error::{Error, Result};
use crate::metrics::{delta_n, Completion};
use crate::operator::personas;
use crate::pilstm::PilstmModel;

/// Observations recorded in a log for one variable.
pub fn logged_observations(log: &RunLog, var: CouplingVariable) -> Vec<DelayedObservation> {
    log.rows
        .iter()
        .map(|r| {
            let s = r.sample(var);
            DelayedObservation {
                value: s.x_delayed,
                derivative: s.xdot_delayed,
                lag: if var.is_forward() { r.lag_fwd } else { r.lag_bwd },
            }
        })
        .collect()
}

/// Feeds observations through a fresh predictor, one per tick from 0.
pub fn replay(predictor: &mut dyn Compensator, observations: &[DelayedObservation]) -> Result<Vec<f64>> {
    predictor.reset();
    observations
        .iter()
        .enumerate()
        .map(|(k, obs)| predictor.step(k as u64, *obs))
        .collect()
}

/// Re-sends the actual coupling streams of a log through emulated
/// channels with the same stamping as the closed loop: the master state
/// of row `r` leaves at `t_r`, the environment force of row `r` (computed
/// at the end of tick `r - 1`) leaves at `t_r` for `r >= 1`.
pub fn delay_replay(log: &RunLog, delay: &DelayModel, seed: u64) -> Result<[Vec<DelayedObservation>; 4]> {
    let mut forward = DelayChannel::new(delay.with_seed(derive_seed(seed, FORWARD_STREAM)))?;
    let mut backward = DelayChannel::new(delay.with_seed(derive_seed(seed, BACKWARD_STREAM)))?;
    let mut out: [Vec<DelayedObservation>; 4] = Default::default();
    for (r, row) in log.rows.iter().enumerate() {
        let now = tick_time(r as u64);
        let actual = |v: CouplingVariable| row.sample(v).x_actual;
        if r >= 1 {
            backward.send([actual(CouplingVariable::Fev), actual(CouplingVariable::Feomega)], now)?;
        }
        let bwd = observe(&mut backward, now);
        forward.send([actual(CouplingVariable::Xmv), actual(CouplingVariable::Xmomega)], now)?;
        let fwd = observe(&mut forward, now);
        for var in CouplingVariable::ALL {
            let obs = if var.is_forward() { fwd[var.axis()] } else { bwd[var.axis()] };
            out[var.index()].push(obs);
        }
    }
    Ok(out)
}

/// Test RMSE of a model on one log's windows, divided by the target range
/// seen in training so that variables of different units compare.
pub fn normalized_rmse(model: &PilstmModel, log: &RunLog) -> Result<f64> {
    let windows = window(log, model.variable, model.topology().input_len)?;
    let metrics = model.evaluate(&windows)?;
    let span = model.scaler.target.span();
    if !(span > 0.0) {
        return Err(Error::Numeric(format!("{} was constant in training", model.variable)));
    }
    Ok(metrics.rmse / span)
}

/// One cell pair of the normalized-performance table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OpenLoopRow {
    pub operator: String,
    pub variable: CouplingVariable,
    /// Percent; `None` when the delayed stream equals the ideal one.
    pub pilstm: Option<f64>,
    pub conv: Option<f64>,
}

/// Replays an ideal run's coupling streams through the delay model and
/// both predictor kinds, returning the normalized error of each.
pub fn eval_open_loop(
    ideal: &RunLog,
    operator: &str,
    delay: &DelayModel,
    seed: u64,
    models: &PilstmModels,
) -> Result<Vec<OpenLoopRow>> {
    if ideal.case != Case::Ideal {
        return Err(Error::Config(format!("open-loop replay needs an ideal run, got {}", ideal.case)));
    }
    let observations = delay_replay(ideal, delay, seed)?;
    let mut conv = build_predictors(PredictorKind::Conv, None, delay.max_delay())?;
    let mut pilstm = build_predictors(PredictorKind::Pilstm, Some(models), delay.max_delay())?;
    let warm_up = models.iter().map(|m| m.topology().input_len).max().unwrap_or(0);
    if ideal.len() <= warm_up {
        return Err(Error::InsufficientData(format!(
            "{} rows cannot cover a warm-up of {warm_up}",
            ideal.len()
        )));
    }
    CouplingVariable::ALL
        .iter()
        .map(|&var| {
            let obs = &observations[var.index()];
            let actual = ideal.actual(var);
            let delayed: Vec<f64> = obs.iter().map(|o| o.value).collect();
            let score = |p: &mut Box<dyn Compensator + Send>| -> Result<Option<f64>> {
                let pred = replay(p.as_mut(), obs)?;
                delta_n(&pred, &actual, &delayed)
            };
            Ok(OpenLoopRow {
                operator: operator.to_string(),
                variable: var,
                pilstm: score(&mut pilstm[var.index()])?,
                conv: score(&mut conv[var.index()])?,
            })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClosedLoopRow {
    pub operator: String,
    pub case: Case,
    pub omega_v: f64,
    pub omega_omega: f64,
    pub gamma_v: f64,
    pub gamma_omega: f64,
    pub completion: Completion,
}

impl ClosedLoopRow {
    fn from_report(r: &RunReport) -> Self {
        Self {
            operator: r.operator.clone(),
            case: r.case,
            omega_v: r.norms.omega[0],
            omega_omega: r.norms.omega[1],
            gamma_v: r.norms.gamma[0],
            gamma_omega: r.norms.gamma[1],
            completion: r.completion,
        }
    }

    fn values(&self) -> [f64; 5] {
        [self.omega_v, self.omega_omega, self.gamma_v, self.gamma_omega, self.completion.key()]
    }
}

/// Whether `ideal < predicted < delayed` holds for one operator, per
/// quantity.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Ordering {
    pub omega: [bool; 2],
    pub gamma: [bool; 2],
    pub completion: bool,
}

impl Ordering {
    pub fn norms_hold(&self) -> bool {
        self.omega.iter().chain(&self.gamma).all(|&b| b)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClosedLoopReport {
    pub open_loop: Vec<OpenLoopRow>,
    pub closed_loop: Vec<ClosedLoopRow>,
}

impl ClosedLoopReport {
    fn row(&self, operator: &str, case: Case) -> Option<&ClosedLoopRow> {
        self.closed_loop.iter().find(|r| r.operator == operator && r.case == case)
    }

    pub fn operators(&self) -> Vec<String> {
        let mut names: Vec<String> = Vec::new();
        for r in &self.closed_loop {
            if !names.contains(&r.operator) {
                names.push(r.operator.clone());
            }
        }
        names
    }

    pub fn ordering(&self, operator: &str) -> Option<Ordering> {
        let i = self.row(operator, Case::Ideal)?.values();
        let p = self.row(operator, Case::Predicted)?.values();
        let d = self.row(operator, Case::Delayed)?.values();
        let between = |k: usize| i[k] < p[k] && p[k] < d[k];
        Some(Ordering {
            omega: [between(0), between(1)],
            gamma: [between(2), between(3)],
            completion: between(4),
        })
    }

    /// Mean normalized error over every variable and operator.
    pub fn mean_delta_n(&self) -> (f64, f64) {
        let mean = |pick: fn(&OpenLoopRow) -> Option<f64>| {
            let v: Vec<f64> = self.open_loop.iter().filter_map(pick).collect();
            v.iter().sum::<f64>() / v.len().max(1) as f64
        };
        (mean(|r| r.pilstm), mean(|r| r.conv))
    }

    /// `tables3.csv`, `tables4.csv`, `completion.csv` and `report.json`.
    pub fn write(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let fmt = |v: Option<f64>| v.map_or_else(|| "n/a".to_string(), |x| format!("{x:.3}"));

        let mut t3 = String::from("operator,variable,pilstm_delta_n_pct,conv_delta_n_pct\n");
        for r in &self.open_loop {
            t3 += &format!("{},{},{},{}\n", r.operator, r.variable, fmt(r.pilstm), fmt(r.conv));
        }
        let mut t4 = String::from("operator,case,omega_xmv,omega_xmomega,gamma_v,gamma_omega\n");
        for r in &self.closed_loop {
            t4 += &format!(
                "{},{},{:.6},{:.6},{:.6},{:.6}\n",
                r.operator, r.case, r.omega_v, r.omega_omega, r.gamma_v, r.gamma_omega
            );
        }
        let mut ct = String::from("operator,ideal_s,delayed_s,predicted_s\n");
        for op in self.operators() {
            let cell = |case| fmt(self.row(&op, case).and_then(|r| r.completion.seconds()));
            ct += &format!("{op},{},{},{}\n", cell(Case::Ideal), cell(Case::Delayed), cell(Case::Predicted));
        }
        for (name, text) in [("tables3.csv", t3), ("tables4.csv", t4), ("completion.csv", ct)] {
            let path = dir.join(name);
            std::fs::write(&path, text).map_err(|e| Error::io(&path, e))?;
        }
        let path = dir.join("report.json");
        std::fs::write(&path, serde_json::to_string_pretty(self)?).map_err(|e| Error::io(&path, e))
    }
}

/// Runs ideal, delayed and predicted cases for each persona in `personas`
/// (indices into the persona table), and replays each ideal run open-loop.
pub fn eval_closed_loop(base: &ScenarioConfig, persona_ids: &[usize], models: &PilstmModels) -> Result<ClosedLoopReport> {
    let table = personas();
    let mut report = ClosedLoopReport {
        open_loop: Vec::new(),
        closed_loop: Vec::new(),
    };
    for &p in persona_ids {
        if p >= table.len() {
            return Err(Error::Config(format!("persona {p} does not exist")));
        }
        for case in [Case::Ideal, Case::Delayed, Case::Predicted] {
            let mut config = base.clone().with_persona(p).with_case(case);
            config.predictor.kind = PredictorKind::Pilstm;
            let (log, run) = run_case(&config, Some(models))?;
            report.closed_loop.push(ClosedLoopRow::from_report(&run));
            if case == Case::Ideal {
                let rows = eval_open_loop(&log, &config.operator.name, &config.delay, config.seed, models)?;
                report.open_loop.extend(rows);
            }
        }
    }
    Ok(report)
}
