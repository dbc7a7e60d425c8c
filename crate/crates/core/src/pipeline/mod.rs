//! Stage runner: configuration, manifest bookkeeping and the stage implementations.

mod config;
mod manifest;
mod stages;

pub use config::*;
pub use manifest::{file_digest, stage_digest, Input, Manifest, StageRecord, MANIFEST_FILE};
pub use stages::{Pipeline, Stage, StageOutcome};
