//! Min-max scaling of features and targets onto `[-1, 1]`.

use serde::{Deserialize, Serialize};

use crate::compensation::FEATURE_DIM;
use crate::error::{Error, Result};

/// Affine map of one channel onto `[-1, 1]` from its training range.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MinMax {
    pub min: f64,
    pub max: f64,
}

impl MinMax {
    pub fn fit(values: impl IntoIterator<Item = f64>) -> Result<Self> {
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        for v in values {
            if !v.is_finite() {
                return Err(Error::Numeric(format!("non-finite value {v} in scaler input")));
            }
            lo = lo.min(v);
            hi = hi.max(v);
        }
        if lo > hi {
            return Err(Error::Empty("scaler input"));
        }
        Ok(Self { min: lo, max: hi })
    }

    fn centre(&self) -> f64 {
        0.5 * (self.min + self.max)
    }

    /// Multiplier from raw to scaled units; 1 for a constant channel.
    pub fn factor(&self) -> f64 {
        let span = self.max - self.min;
        if span > 1e-12 {
            2.0 / span
        } else {
            1.0
        }
    }

    pub fn scale(&self, x: f64) -> f64 {
        (x - self.centre()) * self.factor()
    }

    pub fn unscale(&self, s: f64) -> f64 {
        s / self.factor() + self.centre()
    }

    pub fn span(&self) -> f64 {
        self.max - self.min
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scaler {
    pub features: [MinMax; FEATURE_DIM],
    pub target: MinMax,
}

impl Scaler {
    pub fn fit(rows: &[[f64; FEATURE_DIM]], targets: &[f64]) -> Result<Self> {
        let mut features = [MinMax { min: 0.0, max: 0.0 }; FEATURE_DIM];
        for (k, f) in features.iter_mut().enumerate() {
            *f = MinMax::fit(rows.iter().map(|r| r[k]))?;
        }
        Ok(Self {
            features,
            target: MinMax::fit(targets.iter().copied())?,
        })
    }

    pub fn scale_row(&self, row: &[f64; FEATURE_DIM]) -> [f64; FEATURE_DIM] {
        std::array::from_fn(|k| self.features[k].scale(row[k]))
    }

    pub fn unscale_row(&self, row: &[f64; FEATURE_DIM]) -> [f64; FEATURE_DIM] {
        std::array::from_fn(|k| self.features[k].unscale(row[k]))
    }
}
