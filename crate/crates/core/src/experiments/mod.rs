//! Experiment harness behind the command-line tool.
//!
//! An [`ExperimentSpec`] comes from a flat `key = value` file with flag
//! overrides on top. [`Workload`] loads or synthesizes the image, tiles it
//! and resolves the value source; the `cmd_*` functions build plans, run
//! sessions over UDP, sweep simulated channels and audit saved artifacts.
//!
//! Every CSV starts with a `# stocoap <name> v1` schema line.

mod commands;
mod config;
mod io;
mod sim;
mod synth;

pub use commands::{
    cmd_metrics, cmd_plan, cmd_recv, cmd_send, cmd_simulate, receive_session, send_session,
    MetricsRow, PlanOutput, SendSummary,
};
pub use config::{ExperimentSpec, ValueSource};
pub use io::{
    read_drop_script, read_index_values, read_region, write_index_values, write_region,
};
pub use sim::{derive_seed, BlockRow, CellSummary, SimReport, TrialRow, Workload};
pub use synth::{gaussian_heatmap, synthetic_image};

use std::path::PathBuf;

use thiserror::Error;

use crate::channel::ChannelError;
use crate::image::ImageError;
use crate::model::{FeasibilityReport, ModelError};
use crate::protocol::ProtocolError;
use crate::wire::WireError;

#[derive(Debug, Error)]
pub enum ExperimentError {
    #[error("usage: {0}")]
    Usage(String),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("{path}: {message}")]
    Parse { path: PathBuf, message: String },
    #[error("requirements are infeasible: {0}")]
    Infeasible(FeasibilityReport),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Image(#[from] ImageError),
    #[error(transparent)]
    Protocol(#[from] ProtocolError),
    #[error(transparent)]
    Channel(#[from] ChannelError),
    #[error(transparent)]
    Wire(#[from] WireError),
}

impl ExperimentError {
    /// Process exit status: 2 for usage errors, 1 for everything else.
    pub fn exit_code(&self) -> i32 {
        match self {
            ExperimentError::Usage(_) => 2,
            _ => 1,
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        ExperimentError::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn parse(path: impl Into<PathBuf>, message: impl Into<String>) -> Self {
        ExperimentError::Parse {
            path: path.into(),
            message: message.into(),
        }
    }
}

pub type Result<T> = std::result::Result<T, ExperimentError>;
