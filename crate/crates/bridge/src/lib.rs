//! Websocket bridge that lets a person drive the simulated vehicle through
//! the emulated delayed link, switching compensation modes on the fly.

pub mod protocol;
pub mod server;
pub mod session;

pub use protocol::{
    decode_command, decode_frame, encode_command, encode_frame, ClientMessage, CommandMsg, ErrorMsg, ModeMsg, PoseMsg,
    ProtocolError, ServerMessage, StateFrame, PROTOCOL_VERSION,
};
pub use server::{Bridge, BridgeError, TICK};
pub use session::{CockpitSession, DriveMapping, SessionError};
