//! Run logs at the 10 Hz coupling rate, their CSV form, and the sliding
//! windows the learned predictors are trained on.

use std::fmt;
use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;
use std::str::FromStr;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::compensation::FEATURE_DIM;
use crate::coupling::CouplingVariable;
use crate::dynamics::{Pose, Vec2};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Case {
    Ideal,
    Delayed,
    Predicted,
}

impl Case {
    pub const ALL: [Case; 3] = [Case::Ideal, Case::Delayed, Case::Predicted];

    pub fn name(self) -> &'static str {
        match self {
            Case::Ideal => "ideal",
            Case::Delayed => "delayed",
            Case::Predicted => "predicted",
        }
    }
}

impl fmt::Display for Case {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Case {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Case::ALL
            .into_iter()
            .find(|c| c.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown case `{s}`")))
    }
}

/// One coupling variable as seen at one tick.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct CouplingSample {
    pub x_actual: f64,
    pub x_delayed: f64,
    pub x_p_delayed: f64,
    pub xdot_delayed: f64,
    pub xdot_p_delayed: f64,
}

impl CouplingSample {
    pub fn features(&self) -> [f64; FEATURE_DIM] {
        [self.x_delayed, self.x_p_delayed, self.xdot_delayed, self.xdot_p_delayed]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LogRow {
    pub t: f64,
    /// Indexed by [`CouplingVariable::index`].
    pub coupling: [CouplingSample; 4],
    pub pose: Pose,
    pub s_r: f64,
    pub s_l: f64,
    pub u_s: Vec2,
    /// Estimate applied by the receiving side for each coupling variable
    /// (the delayed value itself when no predictor is active).
    pub x_hat: [f64; 4],
    pub lag_fwd: usize,
    pub lag_bwd: usize,
    pub v_s: f64,
    pub omega_s: f64,
    /// Unfiltered master state.
    pub x_m: Vec2,
    /// Operator force actually applied by the scripted operator.
    pub f_h: Vec2,
    pub u_m: Vec2,
}

impl LogRow {
    pub fn sample(&self, var: CouplingVariable) -> &CouplingSample {
        &self.coupling[var.index()]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunLog {
    pub scenario: String,
    pub seed: u64,
    pub case: Case,
    pub rows: Vec<LogRow>,
}

impl RunLog {
    pub fn new(scenario: impl Into<String>, seed: u64, case: Case) -> Self {
        Self {
            scenario: scenario.into(),
            seed,
            case,
            rows: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn column(&self, var: CouplingVariable, pick: impl Fn(&CouplingSample) -> f64) -> Vec<f64> {
        self.rows.iter().map(|r| pick(r.sample(var))).collect()
    }

    pub fn actual(&self, var: CouplingVariable) -> Vec<f64> {
        self.column(var, |s| s.x_actual)
    }

    pub fn delayed(&self, var: CouplingVariable) -> Vec<f64> {
        self.column(var, |s| s.x_delayed)
    }

    pub fn estimate(&self, var: CouplingVariable) -> Vec<f64> {
        self.rows.iter().map(|r| r.x_hat[var.index()]).collect()
    }
}

const TRAILER: [&str; 15] = [
    "x_mv_hat",
    "x_momega_hat",
    "f_ev_hat",
    "f_eomega_hat",
    "lag_fwd",
    "lag_bwd",
    "v_s",
    "omega_s",
    "x_mv_master",
    "x_momega_master",
    "f_hv",
    "f_homega",
    "u_mv",
    "u_momega",
    "scenario",
];

/// Column names in file order.
pub fn log_header() -> Vec<String> {
    let mut h = vec!["t".to_string()];
    for var in CouplingVariable::ALL {
        let v = var.name();
        let tail = v.split_once('_').map(|(_, t)| t).unwrap_or(v);
        let head = &v[..1];
        h.push(v.to_string());
        h.push(format!("{v}_del"));
        h.push(format!("{v}_p_del"));
        h.push(format!("{head}dot_{tail}_del"));
        h.push(format!("{head}dot_{tail}_p_del"));
    }
    for c in ["pose_x", "pose_y", "heading", "s_r", "s_l", "u_sv", "u_somega", "case", "seed"] {
        h.push(c.to_string());
    }
    h.extend(TRAILER.iter().map(|s| s.to_string()));
    h
}

fn fmt_f64(v: f64) -> String {
    // shortest representation that parses back to the same bits
    format!("{v:?}")
}

pub fn write_log_to<W: Write>(log: &RunLog, writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    let map = |e: csv::Error| Error::Parse {
        line: 0,
        message: e.to_string(),
    };
    w.write_record(log_header()).map_err(map)?;
    for row in &log.rows {
        let mut rec: Vec<String> = Vec::with_capacity(60);
        rec.push(fmt_f64(row.t));
        for s in &row.coupling {
            for v in [s.x_actual, s.x_delayed, s.x_p_delayed, s.xdot_delayed, s.xdot_p_delayed] {
                rec.push(fmt_f64(v));
            }
        }
        for v in [row.pose.x, row.pose.y, row.pose.heading, row.s_r, row.s_l, row.u_s[0], row.u_s[1]] {
            rec.push(fmt_f64(v));
        }
        rec.push(log.case.name().to_string());
        rec.push(log.seed.to_string());
        for v in row.x_hat {
            rec.push(fmt_f64(v));
        }
        rec.push(row.lag_fwd.to_string());
        rec.push(row.lag_bwd.to_string());
        for v in [
            row.v_s,
            row.omega_s,
            row.x_m[0],
            row.x_m[1],
            row.f_h[0],
            row.f_h[1],
            row.u_m[0],
            row.u_m[1],
        ] {
            rec.push(fmt_f64(v));
        }
        rec.push(log.scenario.clone());
        w.write_record(&rec).map_err(map)?;
    }
    w.flush().map_err(|e| Error::io("<log writer>", e))?;
    Ok(())
}

pub fn write_log(log: &RunLog, path: &Path) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    write_log_to(log, std::io::BufWriter::new(file))
}

pub fn read_log_from<R: Read>(reader: R) -> Result<RunLog> {
    let mut r = csv::ReaderBuilder::new().has_headers(true).from_reader(reader);
    let expected = log_header();
    let headers = r.headers().map_err(|e| Error::Parse {
        line: 1,
        message: e.to_string(),
    })?;
    if headers.iter().ne(expected.iter().map(String::as_str)) {
        return Err(Error::Parse {
            line: 1,
            message: "unexpected log header".into(),
        });
    }
    let mut log = RunLog::new("", 0, Case::Ideal);
    for (i, rec) in r.records().enumerate() {
        let rec = rec.map_err(|e| Error::Parse {
            line: e.position().map_or(i as u64 + 2, |p| p.line()),
            message: e.to_string(),
        })?;
        let line = rec.position().map_or(i as u64 + 2, |p| p.line());
        let parse_err = |col: usize, msg: String| Error::Parse {
            line,
            message: format!("column `{}`: {msg}", expected[col]),
        };
        if rec.len() != expected.len() {
            return Err(parse_err(rec.len().min(expected.len() - 1), format!(
                "expected {} fields, found {}",
                expected.len(),
                rec.len()
            )));
        }
        let f = |col: usize| -> Result<f64> {
            rec[col]
                .parse::<f64>()
                .map_err(|e| parse_err(col, e.to_string()))
        };
        let u = |col: usize| -> Result<u64> {
            rec[col]
                .parse::<u64>()
                .map_err(|e| parse_err(col, e.to_string()))
        };
        let mut coupling = [CouplingSample::default(); 4];
        for (k, s) in coupling.iter_mut().enumerate() {
            let b = 1 + 5 * k;
            *s = CouplingSample {
                x_actual: f(b)?,
                x_delayed: f(b + 1)?,
                x_p_delayed: f(b + 2)?,
                xdot_delayed: f(b + 3)?,
                xdot_p_delayed: f(b + 4)?,
            };
        }
        let case: Case = rec[28].parse().map_err(|e: Error| parse_err(28, e.to_string()))?;
        let seed = u(29)?;
        let scenario = rec[44].to_string();
        if i == 0 {
            log.case = case;
            log.seed = seed;
            log.scenario = scenario;
        } else if case != log.case || seed != log.seed || scenario != log.scenario {
            return Err(parse_err(28, "case/seed/scenario differ from the first row".into()));
        }
        log.rows.push(LogRow {
            t: f(0)?,
            coupling,
            pose: Pose {
                x: f(21)?,
                y: f(22)?,
                heading: f(23)?,
            },
            s_r: f(24)?,
            s_l: f(25)?,
            u_s: [f(26)?, f(27)?],
            x_hat: [f(30)?, f(31)?, f(32)?, f(33)?],
            lag_fwd: u(34)? as usize,
            lag_bwd: u(35)? as usize,
            v_s: f(36)?,
            omega_s: f(37)?,
            x_m: [f(38)?, f(39)?],
            f_h: [f(40)?, f(41)?],
            u_m: [f(42)?, f(43)?],
        });
    }
    Ok(log)
}

pub fn read_log(path: &Path) -> Result<RunLog> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    read_log_from(std::io::BufReader::new(file))
}

/// Sliding windows over one coupling variable of one or more logs.
///
/// Window `j` covers feature rows `starts[j] .. starts[j] + n` and its
/// target is the actual value at row `starts[j] + n`. Windows never span
/// two logs.
#[derive(Debug, Clone, PartialEq)]
pub struct WindowSet {
    pub variable: CouplingVariable,
    pub n: usize,
    pub rows: Vec<[f64; FEATURE_DIM]>,
    pub targets: Vec<f64>,
    pub starts: Vec<usize>,
}

impl WindowSet {
    pub fn len(&self) -> usize {
        self.starts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.starts.is_empty()
    }

    pub fn target(&self, j: usize) -> f64 {
        self.targets[self.starts[j] + self.n]
    }

    /// Row index of window `j`'s target.
    pub fn target_row(&self, j: usize) -> usize {
        self.starts[j] + self.n
    }

    pub fn last_features(&self, j: usize) -> &[f64; FEATURE_DIM] {
        &self.rows[self.starts[j] + self.n - 1]
    }

    pub fn matrix(&self, j: usize) -> Array2<f64> {
        let s = self.starts[j];
        Array2::from_shape_fn((self.n, FEATURE_DIM), |(i, k)| self.rows[s + i][k])
    }

    pub fn get(&self, j: usize) -> (Array2<f64>, f64) {
        (self.matrix(j), self.target(j))
    }

    /// Whether window `j` directly follows window `j - 1` in time.
    pub fn follows_previous(&self, j: usize) -> bool {
        j > 0 && self.starts[j] == self.starts[j - 1] + 1
    }

    fn subset(&self, range: std::ops::Range<usize>) -> Self {
        Self {
            variable: self.variable,
            n: self.n,
            rows: self.rows.clone(),
            targets: self.targets.clone(),
            starts: self.starts[range].to_vec(),
        }
    }
}

/// Windows of length `n` over one log.
pub fn window(log: &RunLog, var: CouplingVariable, n: usize) -> Result<WindowSet> {
    window_logs(&[log], var, n)
}

/// Windows over several logs, concatenated in order.
pub fn window_logs(logs: &[&RunLog], var: CouplingVariable, n: usize) -> Result<WindowSet> {
    if n == 0 {
        return Err(Error::Config("window length must be positive".into()));
    }
    let mut set = WindowSet {
        variable: var,
        n,
        rows: Vec::new(),
        targets: Vec::new(),
        starts: Vec::new(),
    };
    for log in logs {
        if log.len() < n {
            return Err(Error::InsufficientData(format!(
                "log `{}` has {} rows, fewer than the window length {n}",
                log.scenario,
                log.len()
            )));
        }
        let offset = set.rows.len();
        for row in &log.rows {
            let s = row.sample(var);
            set.rows.push(s.features());
            set.targets.push(s.x_actual);
        }
        set.starts.extend((0..log.len() - n).map(|i| offset + i));
    }
    Ok(set)
}

/// Contiguous temporal split: the first `floor(ratio * len)` windows
/// train, the rest validate.
pub fn split(windows: &WindowSet, ratio: f64) -> Result<(WindowSet, WindowSet)> {
    if !(ratio > 0.0 && ratio < 1.0) {
        return Err(Error::Config(format!("split ratio must lie in (0, 1), got {ratio}")));
    }
    let cut = (windows.len() as f64 * ratio).floor() as usize;
    Ok((windows.subset(0..cut), windows.subset(cut..windows.len())))
}
