//! Pipeline orchestration for the command-line tool: configuration, the
//! probe-machine stage map and the subcommand implementations.

mod commands;
mod config;
mod stage_map;

pub use commands::{
    cmd_build_library, cmd_decode, cmd_design, cmd_probe_op, cmd_run, cmd_sequence, cmd_verify, read_graph,
    run_pipeline, ComponentRecord, DesignOutput, LibraryOutput, Manifest, OutcomeRecord, Pipeline, PipelineError,
    RunOutput, Seeds, StageRecord, VerifyDiff,
};
pub use config::{ConfigError, DecodeMode, LibraryConfig, PipelineConfig, SequencingConfig};
pub use stage_map::{component, Component, STAGE_MAP};
