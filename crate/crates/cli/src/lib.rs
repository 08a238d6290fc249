//! Command-line and HTTP front ends for the bias engine.

pub mod api;
pub mod commands;
pub mod error;

pub use api::{router, AppState};
pub use commands::{execute, Cli, Command};
pub use error::{ApiError, ErrorCode};
