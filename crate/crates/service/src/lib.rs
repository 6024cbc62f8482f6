//! Process front end for hullguard: the command-line interface, the live
//! teleoperation server and its WebSocket protocol.

pub mod cli;
pub mod protocol;
pub mod server;

use std::path::PathBuf;

use hullguard_core::geometry::ply::PlyError;
use hullguard_core::perception::PerceptionError;
use hullguard_core::teleop::TeleopError;

pub use server::{start, RecordOptions, ServeOptions, Server, SessionSummary, ShutdownHandle};

pub const EXIT_FAILURE: i32 = 1;
pub const EXIT_USAGE: i32 = 2;
pub const EXIT_INTEGRITY: i32 = 3;

#[derive(Debug, thiserror::Error)]
pub enum ServiceError {
    #[error(transparent)]
    Teleop(#[from] TeleopError),
    #[error(transparent)]
    Perception(#[from] PerceptionError),
    #[error(transparent)]
    Ply(#[from] PlyError),
    #[error("{}: {source}", path.display())]
    Io { path: PathBuf, source: std::io::Error },
    #[error("cannot listen on {addr}: {source}")]
    Bind { addr: String, source: std::io::Error },
    #[error("{}: {message}", path.display())]
    Parse { path: PathBuf, message: String },
    #[error("cannot start thread: {0}")]
    Thread(std::io::Error),
    #[error("a session thread panicked")]
    Panicked,
}

impl ServiceError {
    pub fn exit_code(&self) -> i32 {
        match self {
            ServiceError::Teleop(TeleopError::Integrity(_)) => EXIT_INTEGRITY,
            _ => EXIT_FAILURE,
        }
    }
}
