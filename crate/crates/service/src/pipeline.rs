//! Job orchestration: creation, stage execution and human review.

use std::collections::HashMap;
use std::path::Path;
use std::sync::Arc;

use demo2plan::affordance::{ground, GroundingReport};
use demo2plan::compiler::{compile, validate_document_str, CompileError, CompileOptions, Provenance};
use demo2plan::gateway::{load_frame, sample_frames, ImageRef, PromptSet, SessionState, Transport};
use demo2plan::perception::{parse_stream, parse_stream_str};
use demo2plan::planner::{InstructionSource, InstructionText, PlannerError, PlannerOutput, SymbolicPlanner};
use demo2plan::task_model::SceneDescription;
use parking_lot::Mutex;
use serde::{Deserialize, Serialize};

use crate::config::Config;
use crate::job::{AuditEvent, AuditKind, InstructionRecord, JobRecord, JobState, ReviewAction, ReviewStage, Stage};
use crate::store::{safe_relative, JobStore};
use crate::PipelineError;

pub const STREAM_FILE: &str = "inputs/stream.jsonl";
pub const TRANSCRIPT_FILE: &str = "transcript.json";
pub const SCENE_FILE: &str = "scene.json";
pub const PLAN_FILE: &str = "plan.json";
pub const ANCHORS_FILE: &str = "anchors.json";
pub const DOCUMENT_FILE: &str = "document.json";

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NamedFile {
    /// Relative path; frames keep only their file name.
    pub name: String,
    pub bytes: Vec<u8>,
}

/// Uploaded material for a new job. Depth rasters are stored next to the
/// stream under the relative paths the stream refers to.
#[derive(Debug, Clone, Default)]
pub struct JobInputs {
    pub frames: Vec<NamedFile>,
    pub stream: Option<Vec<u8>>,
    pub depth: Vec<NamedFile>,
    pub instruction: Option<String>,
}

impl JobInputs {
    /// Reads a frame directory and a stream file together with the depth
    /// rasters it references.
    pub fn from_paths(frames_dir: Option<&Path>, stream: Option<&Path>, instruction: Option<String>) -> Result<Self, PipelineError> {
        let io = |p: &Path, e: std::io::Error| PipelineError::InvalidArgument(format!("{}: {e}", p.display()));
        let mut inputs = JobInputs { instruction, ..Default::default() };
        if let Some(dir) = frames_dir {
            for path in demo2plan::gateway::list_frames(dir).map_err(|e| PipelineError::InvalidArgument(e.to_string()))? {
                let name = path.file_name().and_then(|n| n.to_str()).unwrap_or_default().to_string();
                inputs.frames.push(NamedFile { name, bytes: std::fs::read(&path).map_err(|e| io(&path, e))? });
            }
        }
        if let Some(path) = stream {
            let bytes = std::fs::read(path).map_err(|e| io(path, e))?;
            let parsed = parse_stream_str(&String::from_utf8_lossy(&bytes)).map_err(|e| PipelineError::InvalidStream(e.to_string()))?;
            let base = path.parent().unwrap_or(Path::new("."));
            let mut seen = std::collections::BTreeSet::new();
            for rel in parsed.frames.iter().filter_map(|f| f.depth_path.as_ref()) {
                if seen.insert(rel.clone()) {
                    let p = base.join(rel);
                    inputs.depth.push(NamedFile { name: rel.clone(), bytes: std::fs::read(&p).map_err(|e| io(&p, e))? });
                }
            }
            inputs.stream = Some(bytes);
        }
        Ok(inputs)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReviewRequest {
    pub action: ReviewAction,
    #[serde(default)]
    pub payload: Option<String>,
    /// Revision the reviewer saw; a stale value is rejected.
    #[serde(default)]
    pub revision: Option<u64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ArtifactKind {
    Transcript,
    Scene,
    Plan,
    Anchors,
    Document,
}

impl ArtifactKind {
    pub fn name(self) -> &'static str {
        match self {
            ArtifactKind::Transcript => "transcript",
            ArtifactKind::Scene => "scene",
            ArtifactKind::Plan => "plan",
            ArtifactKind::Anchors => "anchors",
            ArtifactKind::Document => "document",
        }
    }
}

fn now() -> String {
    chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Millis, true)
}

fn push_event(record: &mut JobRecord, kind: AuditKind, detail: impl Into<String>) -> &mut AuditEvent {
    let at = now();
    record.updated_at = at.clone();
    record.audit_log.push(AuditEvent {
        seq: record.audit_log.len() as u64,
        at,
        kind,
        revision: record.revision,
        state: record.state,
        detail: detail.into(),
        request_hashes: Vec::new(),
        approval: None,
        config_digest: None,
    });
    record.audit_log.last_mut().expect("just pushed")
}

fn is_recoverable(e: &PlannerError) -> bool {
    matches!(
        e,
        PlannerError::ParseFailure { .. } | PlannerError::SchemaViolation { .. } | PlannerError::ActionVocabularyViolation { .. }
    )
}

fn non_empty(payload: &Option<String>, what: &str) -> Result<String, PipelineError> {
    match payload.as_deref().map(str::trim) {
        Some(t) if !t.is_empty() => Ok(t.to_string()),
        _ => Err(PipelineError::InvalidArgument(format!("{what} needs a non-empty payload"))),
    }
}

/// What a finished stage does to the record.
struct StageResult {
    state: JobState,
    review: Option<ReviewStage>,
    detail: String,
    error: Option<String>,
    request_hashes: Vec<String>,
    config_digest: Option<String>,
    apply: Box<dyn FnOnce(&mut JobRecord) + Send>,
}

impl StageResult {
    fn new(state: JobState, review: Option<ReviewStage>, detail: impl Into<String>) -> Self {
        StageResult {
            state,
            review,
            detail: detail.into(),
            error: None,
            request_hashes: Vec::new(),
            config_digest: None,
            apply: Box::new(|_| {}),
        }
    }

    fn failed(error: impl Into<String>) -> Self {
        let error = error.into();
        StageResult { error: Some(error.clone()), ..StageResult::new(JobState::Failed, None, error) }
    }

    fn needs_review(review: ReviewStage, error: impl Into<String>) -> Self {
        let error = error.into();
        StageResult { error: Some(error.clone()), ..StageResult::new(JobState::NeedsReview, Some(review), error) }
    }
}

pub struct Pipeline {
    store: JobStore,
    config: Config,
    transport: Arc<dyn Transport>,
    planner: SymbolicPlanner,
    locks: Mutex<HashMap<String, Arc<Mutex<()>>>>,
}

impl Pipeline {
    pub fn new(config: Config, transport: Arc<dyn Transport>) -> Result<Self, PipelineError> {
        let prompts = PromptSet::load(config.prompts_dir.as_deref()).map_err(|e| PipelineError::InvalidArgument(e.to_string()))?;
        Ok(Pipeline {
            store: JobStore::new(&config.jobs_dir),
            config,
            transport,
            planner: SymbolicPlanner::new(prompts),
            locks: Mutex::new(HashMap::new()),
        })
    }

    pub fn store(&self) -> &JobStore {
        &self.store
    }

    pub fn config(&self) -> &Config {
        &self.config
    }

    fn lock(&self, job_id: &str) -> Arc<Mutex<()>> {
        self.locks.lock().entry(job_id.to_string()).or_default().clone()
    }

    pub fn get(&self, job_id: &str) -> Result<JobRecord, PipelineError> {
        self.store.load(job_id)
    }

    pub fn list(&self) -> Result<Vec<JobRecord>, PipelineError> {
        self.store.list()
    }

    /// Marks jobs whose stage was cut short by a restart as failed.
    pub fn recover_interrupted(&self) -> Result<Vec<String>, PipelineError> {
        let mut ids = Vec::new();
        for mut record in self.store.list()? {
            if let Some(stage) = record.running.take() {
                record.state = JobState::Failed;
                record.last_error = Some(format!("{stage:?} was interrupted by a restart"));
                push_event(&mut record, AuditKind::StageFailed, "interrupted by a restart");
                self.store.save(&record)?;
                ids.push(record.job_id);
            }
        }
        Ok(ids)
    }

    pub fn create_job(&self, inputs: JobInputs) -> Result<JobRecord, PipelineError> {
        let instruction = match inputs.instruction.as_deref().map(str::trim) {
            Some("") | None => None,
            Some(t) => Some(InstructionText::human(t).map_err(|e| PipelineError::InvalidArgument(e.to_string()))?),
        };
        if inputs.frames.is_empty() && instruction.is_none() {
            return Err(PipelineError::InvalidArgument("a job needs frames, an instruction, or both".into()));
        }
        if let Some(bytes) = &inputs.stream {
            let text = std::str::from_utf8(bytes).map_err(|e| PipelineError::InvalidStream(e.to_string()))?;
            parse_stream_str(text).map_err(|e| PipelineError::InvalidStream(e.to_string()))?;
        }
        let id = ulid::Ulid::new().to_string();
        let mut record = JobRecord::new(id.clone(), now());
        let mut frames = Vec::with_capacity(inputs.frames.len());
        for f in &inputs.frames {
            let name = safe_relative(&f.name)?;
            let name = name.file_name().and_then(|n| n.to_str()).unwrap_or_default();
            let rel = format!("inputs/frames/{name}");
            self.store.write_bytes(&id, &rel, &f.bytes)?;
            frames.push(rel);
        }
        frames.sort();
        frames.dedup();
        if frames.len() != inputs.frames.len() {
            return Err(PipelineError::InvalidArgument("frame file names must be unique".into()));
        }
        record.artifacts.frames = frames;
        if let Some(bytes) = &inputs.stream {
            for d in &inputs.depth {
                let rel = safe_relative(&d.name)?;
                self.store.write_bytes(&id, &format!("inputs/{}", rel.display()), &d.bytes)?;
            }
            self.store.write_bytes(&id, STREAM_FILE, bytes)?;
            record.artifacts.stream = Some(STREAM_FILE.into());
        }
        let detail = format!(
            "{} frame(s), {}, {}",
            record.artifacts.frames.len(),
            if record.artifacts.stream.is_some() { "stream" } else { "no stream" },
            if instruction.is_some() { "instruction given" } else { "no instruction" }
        );
        record.instruction = instruction.map(|i| InstructionRecord { text: i.text, source: i.source });
        push_event(&mut record, AuditKind::Created, detail);
        self.store.save(&record)?;
        log::info!("created job {id}");
        Ok(record)
    }

    /// Checks that the job can advance, marks the stage as running and
    /// returns it. The stage itself is run by [`Pipeline::run_stage`].
    pub fn begin_advance(&self, job_id: &str) -> Result<(Stage, JobRecord), PipelineError> {
        let lock = self.lock(job_id);
        let _guard = lock.lock();
        let mut record = self.store.load(job_id)?;
        let stage = record.next_stage().ok_or_else(|| PipelineError::InvalidState {
            state: record.state,
            action: if record.running.is_some() {
                "advance (a stage is already running)".into()
            } else if record.state == JobState::NeedsReview {
                "advance before approval".into()
            } else {
                "advance".into()
            },
        })?;
        let next = stage.running_state();
        if next != record.state && !record.state.can_become(next) {
            return Err(PipelineError::InvalidState { state: record.state, action: "advance".into() });
        }
        record.state = next;
        record.running = Some(stage);
        record.last_error = None;
        push_event(&mut record, AuditKind::StageStarted, format!("{stage:?}"));
        self.store.save(&record)?;
        Ok((stage, record))
    }

    /// Runs a stage started by [`Pipeline::begin_advance`] and records its result.
    pub fn run_stage(&self, job_id: &str, stage: Stage) -> Result<JobRecord, PipelineError> {
        let snapshot = self.store.load(job_id)?;
        let result = match stage {
            Stage::AnalyzeVideo => self.stage_analyze(&snapshot),
            Stage::Plan => self.stage_plan(&snapshot),
            Stage::Ground => self.stage_ground(&snapshot),
            Stage::Compile => self.stage_compile(&snapshot),
        }
        .unwrap_or_else(|e| StageResult::failed(e.to_string()));
        let lock = self.lock(job_id);
        let _guard = lock.lock();
        let mut record = self.store.load(job_id)?;
        if !record.state.can_become(result.state) && record.state != result.state {
            return Err(PipelineError::InvalidState { state: record.state, action: format!("finish {stage:?}") });
        }
        record.running = None;
        record.state = result.state;
        record.review = result.review;
        record.approved = false;
        record.last_error = result.error.clone();
        (result.apply)(&mut record);
        let kind = match result.state {
            JobState::Failed => AuditKind::StageFailed,
            _ if result.error.is_some() => AuditKind::StageFailed,
            _ => AuditKind::StageCompleted,
        };
        let event = push_event(&mut record, kind, result.detail);
        event.request_hashes = result.request_hashes;
        event.config_digest = result.config_digest;
        self.store.save(&record)?;
        Ok(record)
    }

    /// Runs the next stage to completion.
    pub fn advance(&self, job_id: &str) -> Result<JobRecord, PipelineError> {
        let (stage, _) = self.begin_advance(job_id)?;
        self.run_stage(job_id, stage)
    }

    fn new_session(&self) -> SessionState {
        self.planner
            .new_session(self.config.token_budget)
            .with_model(self.config.model_id.clone(), self.config.temperature)
    }

    fn session(&self, record: &JobRecord) -> Result<SessionState, PipelineError> {
        match &record.artifacts.transcript {
            Some(rel) => self.store.read_json(&record.job_id, rel),
            None => Ok(self.new_session()),
        }
    }

    fn frames(&self, record: &JobRecord) -> Result<Vec<ImageRef>, PipelineError> {
        let indices = sample_frames(record.artifacts.frames.len(), self.config.frame_samples)
            .map_err(|e| PipelineError::Stage(e.to_string()))?;
        let dir = self.store.job_dir(&record.job_id);
        indices
            .into_iter()
            .map(|i| load_frame(&dir.join(&record.artifacts.frames[i]), self.config.max_edge).map_err(|e| PipelineError::Stage(e.to_string())))
            .collect()
    }

    fn new_hashes(before: usize, session: &SessionState) -> Vec<String> {
        session.exchanges.iter().skip(before).map(|e| e.request_hash.clone()).collect()
    }

    fn stage_analyze(&self, record: &JobRecord) -> Result<StageResult, PipelineError> {
        let frames = self.frames(record)?;
        let mut session = self.session(record)?;
        let before = session.exchanges.len();
        let outcome = self.planner.analyze_video(&frames, &mut session, self.transport.as_ref());
        self.store.write_json(&record.job_id, TRANSCRIPT_FILE, &session)?;
        let mut result = match outcome {
            Ok(instruction) => {
                let mut r = StageResult::new(JobState::NeedsReview, Some(ReviewStage::Instruction), "instruction transcribed");
                r.apply = Box::new(move |rec| {
                    rec.instruction = Some(InstructionRecord { text: instruction.text, source: instruction.source })
                });
                r
            }
            Err(e) if is_recoverable(&e) => StageResult::needs_review(ReviewStage::Instruction, e.to_string()),
            Err(e) => StageResult::failed(e.to_string()),
        };
        result.request_hashes = Self::new_hashes(before, &session);
        let apply = std::mem::replace(&mut result.apply, Box::new(|_| {}));
        result.apply = Box::new(move |rec| {
            rec.artifacts.transcript = Some(TRANSCRIPT_FILE.into());
            apply(rec)
        });
        Ok(result)
    }

    fn stage_plan(&self, record: &JobRecord) -> Result<StageResult, PipelineError> {
        let Some(instruction) = &record.instruction else {
            return Ok(StageResult::needs_review(ReviewStage::Instruction, "no instruction to plan from"));
        };
        let instruction = InstructionText::new(instruction.text.clone(), instruction.source)
            .map_err(|e| PipelineError::InvalidArgument(e.to_string()))?;
        let mut session = self.session(record)?;
        let before = session.exchanges.len();
        let transport = self.transport.as_ref();
        let outcome = (|| -> Result<(Option<SceneDescription>, PlannerOutput), PipelineError> {
            let scene = if record.has_video() {
                let first = self.frames(record)?.into_iter().next().expect("sampled frames are non-empty");
                Some(self.planner.analyze_scene(&first, &instruction, &mut session, transport).map_err(PipelineError::Planner)?)
            } else {
                None
            };
            let plan = self.planner.plan_tasks(&instruction, scene.as_ref(), &mut session, transport).map_err(PipelineError::Planner)?;
            Ok((scene, plan))
        })();
        self.store.write_json(&record.job_id, TRANSCRIPT_FILE, &session)?;
        let hashes = Self::new_hashes(before, &session);
        let mut result = match outcome {
            Ok((scene, plan)) => {
                if let Some(s) = &scene {
                    self.store.write_json(&record.job_id, SCENE_FILE, s)?;
                }
                self.store.write_json(&record.job_id, PLAN_FILE, &plan)?;
                let violations: Vec<String> = plan.violations.iter().map(|v| format!("step {}: {}", v.step_index, v.kind)).collect();
                let detail = format!("{} step(s), {} violation(s)", plan.steps.len(), violations.len());
                let mut r = StageResult::new(JobState::NeedsReview, Some(ReviewStage::Plan), detail);
                let has_scene = scene.is_some();
                r.apply = Box::new(move |rec| {
                    rec.artifacts.scene = has_scene.then(|| SCENE_FILE.into());
                    rec.artifacts.plan = Some(PLAN_FILE.into());
                    rec.violations = violations;
                });
                r
            }
            Err(PipelineError::Planner(e)) if is_recoverable(&e) => StageResult::needs_review(ReviewStage::Instruction, e.to_string()),
            Err(e) => StageResult::failed(e.to_string()),
        };
        result.request_hashes = hashes;
        let apply = std::mem::replace(&mut result.apply, Box::new(|_| {}));
        result.apply = Box::new(move |rec| {
            rec.artifacts.transcript = Some(TRANSCRIPT_FILE.into());
            apply(rec)
        });
        Ok(result)
    }

    fn plan_of(&self, record: &JobRecord) -> Result<PlannerOutput, PipelineError> {
        let rel = record.artifacts.plan.as_deref().ok_or_else(|| PipelineError::ArtifactMissing("plan".into()))?;
        self.store.read_json(&record.job_id, rel)
    }

    fn stage_ground(&self, record: &JobRecord) -> Result<StageResult, PipelineError> {
        let plan = self.plan_of(record)?;
        let Some(rel) = &record.artifacts.stream else {
            let mut r = StageResult::new(JobState::Grounding, None, "no stream; affordances will be unavailable");
            r.apply = Box::new(|rec| {
                rec.artifacts.anchors = None;
                rec.mismatch = None;
            });
            return Ok(r);
        };
        let path = self.store.job_dir(&record.job_id).join(rel);
        let stream = parse_stream(&path).map_err(|e| PipelineError::InvalidStream(e.to_string()))?;
        let report = ground(&stream, &plan.steps, &self.config.grounding()).map_err(|e| PipelineError::Stage(e.to_string()))?;
        self.store.write_json(&record.job_id, ANCHORS_FILE, &report)?;
        let digest = report.config_digest.clone();
        let mut result = if report.needs_review() {
            StageResult::needs_review(
                ReviewStage::Grounding,
                report.alignment_error.clone().unwrap_or_else(|| "grounding needs review".into()),
            )
        } else {
            StageResult::new(JobState::Grounding, None, format!("{} anchor(s)", report.anchors.len()))
        };
        let mismatch = report.mismatch.clone();
        result.config_digest = Some(digest);
        result.apply = Box::new(move |rec| {
            rec.artifacts.anchors = Some(ANCHORS_FILE.into());
            rec.mismatch = mismatch;
            rec.mismatch_override = false;
        });
        Ok(result)
    }

    /// Provenance of a job's document, rebuilt from its audit log.
    pub fn provenance(&self, record: &JobRecord) -> Provenance {
        Provenance {
            transport: self.transport.mode().to_string(),
            model_id: self.config.model_id.clone(),
            fixture_hashes: record.request_hashes(),
            analyzer_config_digest: record.config_digest(),
            approvals: record.approvals(),
        }
    }

    fn stage_compile(&self, record: &JobRecord) -> Result<StageResult, PipelineError> {
        let plan = self.plan_of(record)?;
        let scene: SceneDescription = match &record.artifacts.scene {
            Some(rel) => self.store.read_json(&record.job_id, rel)?,
            None => SceneDescription::implied_by(&plan.steps),
        };
        let grounding: Option<GroundingReport> = match &record.artifacts.anchors {
            Some(rel) => Some(self.store.read_json(&record.job_id, rel)?),
            None => None,
        };
        let instruction = record.instruction.as_ref().map(|i| i.text.as_str()).unwrap_or_default();
        let options = CompileOptions {
            strict: self.config.strict_compile,
            mismatch_override: record.mismatch_override,
            provenance: self.provenance(record),
        };
        let doc = match compile(instruction, &scene, &plan, grounding.as_ref(), &options) {
            Ok(doc) => doc,
            Err(e @ CompileError::AlignmentUnresolved(_)) => return Ok(StageResult::needs_review(ReviewStage::Grounding, e.to_string())),
            Err(e) => return Ok(StageResult::failed(e.to_string())),
        };
        let text = doc.to_canonical_json();
        let report = validate_document_str(&text, true);
        if !report.is_valid() {
            let errors: Vec<String> = report.schema_errors.into_iter().chain(report.invariant_errors).collect();
            return Ok(StageResult::failed(format!("compiled document is invalid: {}", errors.join("; "))));
        }
        self.store.write_text(&record.job_id, DOCUMENT_FILE, &text)?;
        let mut r = StageResult::new(JobState::Compiled, None, format!("{} task(s) compiled", doc.tasks.len()));
        r.apply = Box::new(|rec| rec.artifacts.document = Some(DOCUMENT_FILE.into()));
        Ok(r)
    }

    pub fn submit_review(&self, job_id: &str, request: &ReviewRequest) -> Result<JobRecord, PipelineError> {
        let lock = self.lock(job_id);
        let _guard = lock.lock();
        let mut record = self.store.load(job_id)?;
        let action = format!("{:?}", request.action);
        let (JobState::NeedsReview, None, Some(review)) = (record.state, record.running, record.review) else {
            return Err(PipelineError::InvalidState { state: record.state, action });
        };
        if let Some(expected) = request.revision {
            if expected != record.revision {
                return Err(PipelineError::Conflict { expected, actual: record.revision });
            }
        }
        match request.action {
            ReviewAction::EditInstruction => {
                let text = non_empty(&request.payload, "edit_instruction")?;
                if review == ReviewStage::Grounding {
                    return Err(PipelineError::InvalidState { state: record.state, action: "edit the instruction during grounding review".into() });
                }
                let edited = InstructionText::new(text, InstructionSource::HumanEdited)
                    .map_err(|e| PipelineError::InvalidArgument(e.to_string()))?;
                record.instruction = Some(InstructionRecord { text: edited.text, source: edited.source });
                record.revision += 1;
                record.review = Some(ReviewStage::Instruction);
                record.approved = false;
                record.violations.clear();
                record.artifacts.plan = None;
                record.artifacts.scene = None;
                push_event(&mut record, AuditKind::InstructionEdited, "");
            }
            ReviewAction::Feedback => {
                let text = non_empty(&request.payload, "feedback")?;
                let mut session = self.session(&record)?;
                let before = session.exchanges.len();
                let transport = self.transport.as_ref();
                let detail;
                match review {
                    ReviewStage::Instruction => {
                        let revised = self.planner.revise_instruction(&text, &mut session, transport)?;
                        record.instruction = Some(InstructionRecord { text: revised.text, source: revised.source });
                        detail = text;
                    }
                    ReviewStage::Plan => {
                        let prior = self.plan_of(&record)?;
                        let scene: Option<SceneDescription> = match &record.artifacts.scene {
                            Some(rel) => Some(self.store.read_json(job_id, rel)?),
                            None => None,
                        };
                        let revised = self.planner.apply_feedback(&text, &prior, scene.as_ref(), &mut session, transport)?;
                        self.store.write_json(job_id, PLAN_FILE, &revised)?;
                        record.violations = revised.violations.iter().map(|v| format!("step {}: {}", v.step_index, v.kind)).collect();
                        detail = text;
                    }
                    ReviewStage::Grounding => {
                        return Err(PipelineError::InvalidArgument("feedback applies to instruction or plan review".into()))
                    }
                }
                self.store.write_json(job_id, TRANSCRIPT_FILE, &session)?;
                record.artifacts.transcript = Some(TRANSCRIPT_FILE.into());
                record.revision += 1;
                record.approved = false;
                let hashes = Self::new_hashes(before, &session);
                push_event(&mut record, AuditKind::FeedbackApplied, detail).request_hashes = hashes;
            }
            ReviewAction::Approve => {
                match review {
                    ReviewStage::Instruction if record.instruction.is_none() => {
                        return Err(PipelineError::InvalidArgument("there is no instruction to approve; edit it first".into()))
                    }
                    ReviewStage::Plan if !record.violations.is_empty() => {
                        return Err(PipelineError::PendingViolations(record.violations.len()))
                    }
                    ReviewStage::Grounding => {
                        return Err(PipelineError::InvalidArgument("a grounding mismatch is resolved with override_mismatch".into()))
                    }
                    _ => {}
                }
                record.approved = true;
                let approval = format!("{}@{}", review.as_str(), record.revision);
                push_event(&mut record, AuditKind::Approved, request.payload.clone().unwrap_or_default()).approval = Some(approval);
            }
            ReviewAction::OverrideMismatch => {
                if review != ReviewStage::Grounding {
                    return Err(PipelineError::InvalidState { state: record.state, action: "override a mismatch outside grounding review".into() });
                }
                record.mismatch_override = true;
                record.approved = true;
                let approval = format!("mismatch_override@{}", record.revision);
                push_event(&mut record, AuditKind::MismatchOverridden, request.payload.clone().unwrap_or_default()).approval = Some(approval);
            }
        }
        self.store.save(&record)?;
        Ok(record)
    }

    /// Advances until the job compiles, fails, or needs a decision that
    /// `auto_approve` cannot make. With `auto_approve`, instruction and
    /// violation-free plans are approved as they come.
    pub fn run_to_completion(&self, job_id: &str, auto_approve: bool) -> Result<JobRecord, PipelineError> {
        loop {
            let record = self.store.load(job_id)?;
            if record.next_stage().is_some() {
                self.advance(job_id)?;
                continue;
            }
            let approvable = matches!(record.review, Some(ReviewStage::Instruction) if record.instruction.is_some())
                || (record.review == Some(ReviewStage::Plan) && record.violations.is_empty());
            if auto_approve && record.state == JobState::NeedsReview && approvable {
                let request = ReviewRequest { action: ReviewAction::Approve, payload: None, revision: Some(record.revision) };
                self.submit_review(job_id, &request)?;
                continue;
            }
            return Ok(record);
        }
    }

    /// The raw JSON of an artifact.
    pub fn artifact(&self, job_id: &str, kind: ArtifactKind) -> Result<String, PipelineError> {
        let record = self.store.load(job_id)?;
        let rel = match kind {
            ArtifactKind::Transcript => &record.artifacts.transcript,
            ArtifactKind::Scene => &record.artifacts.scene,
            ArtifactKind::Plan => &record.artifacts.plan,
            ArtifactKind::Anchors => &record.artifacts.anchors,
            ArtifactKind::Document => &record.artifacts.document,
        };
        let rel = rel.as_deref().ok_or_else(|| PipelineError::ArtifactMissing(kind.name().into()))?;
        self.store.read_text(job_id, rel)
    }
}
