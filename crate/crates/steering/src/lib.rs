//! Live gait steering: a 40 Hz mock-robot loop commanded over WebSocket.

pub mod protocol;
pub mod server;
pub mod session;

pub use protocol::{Command, CommandMessage, ErrorCode, ProtocolError, ServerMessage, Snapshot, PROTOCOL_VERSION};
pub use server::{spawn, ServerConfig, ServerHandle};
pub use session::{Session, SessionConfig};
