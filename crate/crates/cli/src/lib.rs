//! Library half of the `swarmforge` binary: run configuration and the
//! resumable stage pipeline.

pub mod config;
pub mod pipeline;

pub use config::RunConfig;
pub use pipeline::{run_pipeline, Layout, StageReport, Status};
