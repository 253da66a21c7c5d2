use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::Error;
use crate::predict_conv::ConvPredictorParams;

/// The four signals that cross the network.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum CouplingVariable {
    #[serde(rename = "x_mv")]
    Xmv,
    #[serde(rename = "x_momega")]
    Xmomega,
    #[serde(rename = "f_ev")]
    Fev,
    #[serde(rename = "f_eomega")]
    Feomega,
}

impl CouplingVariable {
    pub const ALL: [CouplingVariable; 4] = [Self::Xmv, Self::Xmomega, Self::Fev, Self::Feomega];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn name(self) -> &'static str {
        match self {
            Self::Xmv => "x_mv",
            Self::Xmomega => "x_momega",
            Self::Fev => "f_ev",
            Self::Feomega => "f_eomega",
        }
    }

    /// Motion commands travel operator -> UGV; forces travel back.
    pub fn is_forward(self) -> bool {
        matches!(self, Self::Xmv | Self::Xmomega)
    }

    /// 0 for the linear axis, 1 for the angular axis.
    pub fn axis(self) -> usize {
        match self {
            Self::Xmv | Self::Fev => 0,
            Self::Xmomega | Self::Feomega => 1,
        }
    }

    pub fn conv_params(self) -> ConvPredictorParams {
        if self.is_forward() {
            ConvPredictorParams::forward()
        } else {
            ConvPredictorParams::backward()
        }
    }
}

impl fmt::Display for CouplingVariable {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for CouplingVariable {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Self::ALL
            .into_iter()
            .find(|v| v.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown coupling variable `{s}`")))
    }
}
