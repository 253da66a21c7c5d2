//! Scenario description: everything a run needs, loadable from JSON.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::channel::DelayModel;
use crate::control::ControllerGains;
use crate::dataset::Case;
use crate::dynamics::{HapticDeviceParams, SlipEstimator, TerrainProfile, UgvParams};
use crate::error::{Error, Result};
use crate::operator::{personas, OperatorParams};
use crate::track::{Track, TrackId, TrackSpec};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum TrackChoice {
    Preset(TrackId),
    Custom(TrackSpec),
}

impl TrackChoice {
    pub fn spec(&self) -> TrackSpec {
        match self {
            TrackChoice::Preset(id) => TrackSpec::preset(*id),
            TrackChoice::Custom(spec) => spec.clone(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PredictorKind {
    Conv,
    Pilstm,
}

impl std::str::FromStr for PredictorKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "conv" => Ok(PredictorKind::Conv),
            "pilstm" => Ok(PredictorKind::Pilstm),
            _ => Err(Error::Config(format!("unknown predictor `{s}`, expected conv or pilstm"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictorConfig {
    pub kind: PredictorKind,
    /// Directory holding one checkpoint per coupling variable, named
    /// `<variable>.json`.
    #[serde(default)]
    pub checkpoint_dir: Option<PathBuf>,
}

impl Default for PredictorConfig {
    fn default() -> Self {
        Self {
            kind: PredictorKind::Conv,
            checkpoint_dir: None,
        }
    }
}

/// Slip compensation on the UGV: first-order slip estimate times a gain.
/// The default gain under-compensates, leaving a velocity loss in soft
/// ground for the force channel to report.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SlipCompensation {
    pub time_constant: f64,
    pub gain: f64,
}

impl Default for SlipCompensation {
    fn default() -> Self {
        Self {
            time_constant: 1.0,
            gain: 0.8,
        }
    }
}

impl SlipCompensation {
    pub fn estimator(&self) -> SlipEstimator {
        SlipEstimator {
            time_constant: self.time_constant,
            gain: self.gain,
            estimate: [0.0, 0.0],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ScenarioConfig {
    pub version: u32,
    pub name: String,
    pub track: TrackChoice,
    /// Replaces the track's own terrain when set.
    pub terrain: Option<TerrainProfile>,
    /// Shared by the forward, backward and video channels; each gets its
    /// own seed derived from `seed`.
    pub delay: DelayModel,
    pub case: Case,
    pub predictor: PredictorConfig,
    pub gains: ControllerGains,
    pub filter_cutoff_hz: f64,
    pub device: HapticDeviceParams,
    pub ugv: UgvParams,
    pub slip_compensation: SlipCompensation,
    /// Half-width of the per-wheel slip perturbation.
    pub slip_noise: f64,
    pub operator: OperatorParams,
    /// Seconds.
    pub duration: f64,
    /// End the run when the UGV crosses the end mark or leaves the corridor.
    pub stop_at_finish: bool,
    pub seed: u64,
    pub out: Option<PathBuf>,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        Self {
            version: SCHEMA_VERSION,
            name: "scenario".into(),
            track: TrackChoice::Preset(TrackId::A),
            terrain: None,
            delay: DelayModel::default(),
            case: Case::Ideal,
            predictor: PredictorConfig::default(),
            gains: ControllerGains::default(),
            filter_cutoff_hz: 0.8,
            device: HapticDeviceParams::default(),
            ugv: UgvParams::default(),
            slip_compensation: SlipCompensation::default(),
            slip_noise: 0.02,
            operator: personas()[0].clone(),
            duration: 300.0,
            stop_at_finish: true,
            seed: 0,
            out: None,
        }
    }
}

impl ScenarioConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let config: Self = serde_json::from_str(&text)?;
        config.validate()?;
        Ok(config)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string_pretty(self)?;
        std::fs::write(path, text).map_err(|e| Error::io(path, e))
    }

    pub fn validate(&self) -> Result<()> {
        if self.version != SCHEMA_VERSION {
            return Err(Error::Config(format!(
                "scenario schema version {} is not supported (expected {SCHEMA_VERSION})",
                self.version
            )));
        }
        if !(self.duration > 0.0 && self.duration.is_finite()) {
            return Err(Error::Config(format!("duration must be positive, got {}", self.duration)));
        }
        if !(self.slip_noise >= 0.0) {
            return Err(Error::Config(format!("slip noise must be >= 0, got {}", self.slip_noise)));
        }
        let sc = self.slip_compensation;
        if !(sc.time_constant >= 0.0 && sc.gain >= 0.0) {
            return Err(Error::Config(format!("invalid slip compensation {sc:?}")));
        }
        self.track.spec().validate()?;
        if let Some(t) = &self.terrain {
            t.validate()?;
        }
        self.delay.validate()?;
        self.gains.validate()?;
        self.device.validate()?;
        self.ugv.validate()?;
        self.operator.validate()?;
        if self.operator.target_speed > self.ugv.v_max {
            return Err(Error::Config(format!(
                "operator target speed {} exceeds v_max {}",
                self.operator.target_speed, self.ugv.v_max
            )));
        }
        if self.case == Case::Predicted && self.predictor.kind == PredictorKind::Pilstm {
            if let Some(dir) = &self.predictor.checkpoint_dir {
                if !dir.is_dir() {
                    return Err(Error::Config(format!("checkpoint directory {} does not exist", dir.display())));
                }
            }
        }
        Ok(())
    }

    pub fn build_track(&self) -> Result<Track> {
        let mut spec = self.track.spec();
        if let Some(t) = &self.terrain {
            spec.terrain = t.clone();
        }
        Track::new(spec)
    }

    pub fn ticks(&self) -> u64 {
        (self.duration / crate::compensation::SAMPLE_DT).round() as u64
    }

    pub fn with_persona(mut self, index: usize) -> Self {
        self.operator = personas()[index].clone();
        self
    }

    pub fn with_case(mut self, case: Case) -> Self {
        self.case = case;
        self
    }
}

/// Independent random stream seeds derived from one run seed.
pub fn derive_seed(seed: u64, stream: u64) -> u64 {
    // splitmix64 finalizer over the pair
    let mut z = seed ^ stream.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}
