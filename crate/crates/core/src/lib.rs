pub mod channel;
pub mod compensation;
pub mod control;
pub mod coupling;
pub mod dataset;
pub mod dynamics;
pub mod error;
pub mod harness;
pub mod metrics;
pub mod operator;
pub mod pilstm;
pub mod predict_conv;
pub mod track;

pub use error::{Error, Result};
