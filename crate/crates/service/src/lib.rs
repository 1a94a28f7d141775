//! Job orchestration, persistence, HTTP API and command-line interface for
//! the demonstration-to-plan pipeline.

pub mod api;
pub mod cli;
pub mod config;
pub mod job;
pub mod pipeline;
pub mod store;

use thiserror::Error;

pub use config::Config;
pub use job::{JobRecord, JobState, ReviewAction, ReviewStage, Stage};
pub use pipeline::{ArtifactKind, JobInputs, NamedFile, Pipeline, ReviewRequest};

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("job {0} not found")]
    NotFound(String),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("cannot {action} in state {state}")]
    InvalidState { state: JobState, action: String },
    #[error("revision conflict: request is for revision {expected}, job is at {actual}")]
    Conflict { expected: u64, actual: u64 },
    #[error("plan has {0} pending validation violation(s)")]
    PendingViolations(usize),
    #[error("invalid stream: {0}")]
    InvalidStream(String),
    #[error("{0} is not available yet")]
    ArtifactMissing(String),
    #[error(transparent)]
    Planner(#[from] demo2plan::planner::PlannerError),
    #[error("stage failed: {0}")]
    Stage(String),
    #[error("storage: {0}")]
    Storage(String),
}

impl PipelineError {
    /// Machine-readable code used in API problem bodies.
    pub fn code(&self) -> &'static str {
        match self {
            PipelineError::NotFound(_) => "not_found",
            PipelineError::InvalidArgument(_) => "invalid_argument",
            PipelineError::InvalidState { .. } => "invalid_state",
            PipelineError::Conflict { .. } => "revision_conflict",
            PipelineError::PendingViolations(_) => "pending_violations",
            PipelineError::InvalidStream(_) => "invalid_stream",
            PipelineError::ArtifactMissing(_) => "artifact_missing",
            PipelineError::Planner(_) => "model_error",
            PipelineError::Stage(_) => "stage_failed",
            PipelineError::Storage(_) => "storage",
        }
    }

    pub fn status(&self) -> u16 {
        match self {
            PipelineError::NotFound(_) | PipelineError::ArtifactMissing(_) => 404,
            PipelineError::InvalidArgument(_) | PipelineError::InvalidStream(_) => 400,
            PipelineError::InvalidState { .. } | PipelineError::Conflict { .. } => 409,
            PipelineError::PendingViolations(_) => 422,
            PipelineError::Planner(_) => 502,
            PipelineError::Stage(_) | PipelineError::Storage(_) => 500,
        }
    }
}
