//! Job records and the state machine that governs them.

use std::fmt;

use demo2plan::affordance::AnchorMismatch;
use demo2plan::planner::InstructionSource;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum JobState {
    Created,
    Analyzing,
    NeedsReview,
    Planning,
    Grounding,
    Compiled,
    Failed,
}

impl JobState {
    pub fn as_str(self) -> &'static str {
        match self {
            JobState::Created => "created",
            JobState::Analyzing => "analyzing",
            JobState::NeedsReview => "needs_review",
            JobState::Planning => "planning",
            JobState::Grounding => "grounding",
            JobState::Compiled => "compiled",
            JobState::Failed => "failed",
        }
    }

    /// Whether `self -> next` is a legal transition.
    ///
    /// Text-only jobs go from created straight to planning. Grounding falls
    /// back to review when anchors and plan disagree.
    pub fn can_become(self, next: JobState) -> bool {
        use JobState::*;
        if next == Failed {
            return self != Failed;
        }
        matches!(
            (self, next),
            (Created, Analyzing)
                | (Created, Planning)
                | (Analyzing, NeedsReview)
                | (NeedsReview, Planning)
                | (Planning, NeedsReview)
                | (NeedsReview, Grounding)
                | (Grounding, NeedsReview)
                | (Grounding, Compiled)
        )
    }
}

impl fmt::Display for JobState {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// What a job in `needs_review` is waiting on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReviewStage {
    Instruction,
    Plan,
    Grounding,
}

impl ReviewStage {
    pub fn as_str(self) -> &'static str {
        match self {
            ReviewStage::Instruction => "instruction",
            ReviewStage::Plan => "plan",
            ReviewStage::Grounding => "grounding",
        }
    }
}

/// The pipeline stage an `advance` call runs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    AnalyzeVideo,
    Plan,
    Ground,
    Compile,
}

impl Stage {
    /// State the job holds while the stage runs.
    pub fn running_state(self) -> JobState {
        match self {
            Stage::AnalyzeVideo => JobState::Analyzing,
            Stage::Plan => JobState::Planning,
            Stage::Ground | Stage::Compile => JobState::Grounding,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReviewAction {
    EditInstruction,
    Feedback,
    Approve,
    OverrideMismatch,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct InstructionRecord {
    pub text: String,
    pub source: InstructionSource,
}

/// Paths of job artifacts, relative to the job directory.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct Artifacts {
    #[serde(default)]
    pub frames: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub stream: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub transcript: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scene: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub plan: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub anchors: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub document: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AuditKind {
    Created,
    StageStarted,
    StageCompleted,
    StageFailed,
    InstructionEdited,
    FeedbackApplied,
    Approved,
    MismatchOverridden,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AuditEvent {
    pub seq: u64,
    pub at: String,
    pub kind: AuditKind,
    /// Job revision after the event.
    pub revision: u64,
    pub state: JobState,
    #[serde(default, skip_serializing_if = "String::is_empty")]
    pub detail: String,
    /// Model requests made during the event.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub request_hashes: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub approval: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub config_digest: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JobRecord {
    pub job_id: String,
    pub state: JobState,
    pub created_at: String,
    pub updated_at: String,
    pub revision: u64,
    /// Set while a stage runs.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub running: Option<Stage>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub review: Option<ReviewStage>,
    /// The pending review has been approved and the next stage may run.
    #[serde(default)]
    pub approved: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub instruction: Option<InstructionRecord>,
    /// Validation violations of the current plan, as messages.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub violations: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mismatch: Option<AnchorMismatch>,
    #[serde(default)]
    pub mismatch_override: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub last_error: Option<String>,
    pub artifacts: Artifacts,
    pub audit_log: Vec<AuditEvent>,
}

impl JobRecord {
    pub fn new(job_id: String, now: String) -> Self {
        JobRecord {
            job_id,
            state: JobState::Created,
            created_at: now.clone(),
            updated_at: now,
            revision: 0,
            running: None,
            review: None,
            approved: false,
            instruction: None,
            violations: Vec::new(),
            mismatch: None,
            mismatch_override: false,
            last_error: None,
            artifacts: Artifacts::default(),
            audit_log: Vec::new(),
        }
    }

    pub fn has_video(&self) -> bool {
        !self.artifacts.frames.is_empty()
    }

    /// The stage the next `advance` would run, if any.
    pub fn next_stage(&self) -> Option<Stage> {
        if self.running.is_some() {
            return None;
        }
        match self.state {
            JobState::Created if self.instruction.is_some() => Some(Stage::Plan),
            JobState::Created if self.has_video() => Some(Stage::AnalyzeVideo),
            JobState::NeedsReview if self.approved => match self.review? {
                ReviewStage::Instruction => Some(Stage::Plan),
                ReviewStage::Plan => Some(Stage::Ground),
                ReviewStage::Grounding => Some(Stage::Compile),
            },
            JobState::Grounding => Some(Stage::Compile),
            _ => None,
        }
    }

    /// Model requests recorded in the audit log, in order, without repeats.
    pub fn request_hashes(&self) -> Vec<String> {
        let mut out: Vec<String> = Vec::new();
        for h in self.audit_log.iter().flat_map(|e| &e.request_hashes) {
            if !out.contains(h) {
                out.push(h.clone());
            }
        }
        out
    }

    pub fn approvals(&self) -> Vec<String> {
        self.audit_log.iter().filter_map(|e| e.approval.clone()).collect()
    }

    pub fn config_digest(&self) -> Option<String> {
        self.audit_log.iter().rev().find_map(|e| e.config_digest.clone())
    }
}
