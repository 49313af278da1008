//! Command-line front end and live WebSocket gateway for the `vocsync`
//! simulator.

pub mod cli;
pub mod commands;
pub mod gateway;
pub mod protocol;

pub use commands::Failure;
pub use gateway::{Gateway, GatewayHandle, GatewayOptions};
pub use protocol::{Frame, PROTOCOL_VERSION};
