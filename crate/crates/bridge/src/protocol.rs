//! Wire messages of the `/teleop` socket: JSON text frames tagged by
//! `type`. Unknown fields are ignored; a `v` field, when present, must
//! match [`PROTOCOL_VERSION`].

use serde::{Deserialize, Serialize};
use teleop_core::dataset::Case;

pub const PROTOCOL_VERSION: u32 = 1;

#[derive(Debug, thiserror::Error)]
pub enum ProtocolError {
    #[error("malformed message: {0}")]
    Malformed(#[from] serde_json::Error),
    #[error("unsupported protocol version {0}, expected {PROTOCOL_VERSION}")]
    Version(u32),
    #[error("non-finite value in `{0}`")]
    NonFinite(&'static str),
}

fn version() -> u32 {
    PROTOCOL_VERSION
}

/// Drive input from the cockpit.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CommandMsg {
    #[serde(default = "version")]
    pub v: u32,
    pub seq: u64,
    #[serde(default)]
    pub client_time: f64,
    /// Forward input in `[-1, 1]`.
    pub v_norm: f64,
    /// Turn input in `[-1, 1]`, positive left.
    pub omega_norm: f64,
}

/// Request to restart the run in another case.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModeMsg {
    #[serde(default = "version")]
    pub v: u32,
    pub seq: u64,
    pub mode: Case,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase")]
pub enum ClientMessage {
    Cmd(CommandMsg),
    Mode(ModeMsg),
}

impl ClientMessage {
    pub fn seq(&self) -> u64 {
        match self {
            ClientMessage::Cmd(c) => c.seq,
            ClientMessage::Mode(m) => m.seq,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct PoseMsg {
    pub x: f64,
    pub y: f64,
    pub heading: f64,
}

/// Snapshot of the loop after one tick.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StateFrame {
    #[serde(default = "version")]
    pub v: u32,
    pub server_time: f64,
    pub tick: u64,
    pub mode: Case,
    pub pose: PoseMsg,
    pub v_s: f64,
    pub omega_s: f64,
    /// Master state sent towards the UGV.
    pub x_m: [f64; 2],
    /// Force feedback driving the master: delayed or predicted per mode.
    pub force_feedback: [f64; 2],
    pub slip: [f64; 2],
    /// Age of the newest forward and backward samples, seconds.
    pub delay: [f64; 2],
    /// Packets in flight forward and backward.
    pub backlog: [usize; 2],
    /// Running tracking norms.
    pub omega: [f64; 2],
    pub gamma: [f64; 2],
    pub finished: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorMsg {
    #[serde(default = "version")]
    pub v: u32,
    #[serde(default)]
    pub seq: Option<u64>,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase")]
pub enum ServerMessage {
    Frame(StateFrame),
    Error(ErrorMsg),
}

impl ServerMessage {
    pub fn error(seq: Option<u64>, message: impl Into<String>) -> Self {
        ServerMessage::Error(ErrorMsg {
            v: PROTOCOL_VERSION,
            seq,
            message: message.into(),
        })
    }
}

fn check_version(v: u32) -> Result<(), ProtocolError> {
    if v != PROTOCOL_VERSION {
        return Err(ProtocolError::Version(v));
    }
    Ok(())
}

/// Parses a client message; drive inputs are clamped to `[-1, 1]`.
pub fn decode_command(text: &str) -> Result<ClientMessage, ProtocolError> {
    let mut msg: ClientMessage = serde_json::from_str(text)?;
    match &mut msg {
        ClientMessage::Cmd(c) => {
            check_version(c.v)?;
            if !c.v_norm.is_finite() {
                return Err(ProtocolError::NonFinite("v_norm"));
            }
            if !c.omega_norm.is_finite() {
                return Err(ProtocolError::NonFinite("omega_norm"));
            }
            c.v_norm = c.v_norm.clamp(-1.0, 1.0);
            c.omega_norm = c.omega_norm.clamp(-1.0, 1.0);
        }
        ClientMessage::Mode(m) => check_version(m.v)?,
    }
    Ok(msg)
}

pub fn encode_command(msg: &ClientMessage) -> String {
    serde_json::to_string(msg).expect("client messages always serialize")
}

pub fn encode_frame(msg: &ServerMessage) -> String {
    serde_json::to_string(msg).expect("server messages always serialize")
}

pub fn decode_frame(text: &str) -> Result<ServerMessage, ProtocolError> {
    let msg: ServerMessage = serde_json::from_str(text)?;
    match &msg {
        ServerMessage::Frame(f) => check_version(f.v)?,
        ServerMessage::Error(e) => check_version(e.v)?,
    }
    Ok(msg)
}
