//! The hardware-independent executable document: compilation from a
//! reviewed plan plus grounding, canonical serialization, and validation.
//!
//! The document layout is this crate's own; the JSON Schema shipped at
//! `schema/executable-document.schema.json` describes it.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

use crate::affordance::{AffordanceSlot, GroundingReport};
use crate::canonical::{to_canonical_string, CanonicalFormat};
use crate::planner::PlannerOutput;
use crate::task_model::{validate_plan, ActionKind, SceneDescription, TaskStep, Violation};

pub const SCHEMA_VERSION: &str = "1.0";
pub const MEDIA_TYPE: &str = "application/vnd.demo2plan.plan+json; version=1.0";
pub const SCHEMA_JSON: &str = include_str!("../schema/executable-document.schema.json");

/// Tolerance on the norm of direction fields.
pub const UNIT_NORM_TOLERANCE: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct Provenance {
    /// `live`, `record`, `replay` or `scripted`.
    pub transport: String,
    pub model_id: String,
    /// Request hashes of every model exchange, in order.
    pub fixture_hashes: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub analyzer_config_digest: Option<String>,
    /// Human approvals, e.g. `plan@3`.
    #[serde(default)]
    pub approvals: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExecutableTask {
    pub action: ActionKind,
    pub args: Vec<String>,
    pub explanation: String,
    pub preconditions: Vec<String>,
    pub postconditions: Vec<String>,
    pub affordance: AffordanceSlot,
    #[serde(flatten)]
    pub extra: BTreeMap<String, Value>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExecutableDocument {
    pub schema_version: String,
    pub instruction: String,
    pub scene_before: SceneDescription,
    pub scene_after: SceneDescription,
    pub tasks: Vec<ExecutableTask>,
    pub summary: String,
    pub provenance: Provenance,
    /// Fields this version does not know; kept only in lenient parsing.
    #[serde(flatten)]
    pub extra: BTreeMap<String, Value>,
}

impl ExecutableDocument {
    pub fn to_value(&self) -> Value {
        serde_json::to_value(self).expect("document serializes")
    }

    /// Pretty JSON with sorted keys and 6 significant digits.
    pub fn to_canonical_json(&self) -> String {
        to_canonical_string(&self.to_value(), CanonicalFormat::DOCUMENT)
    }

    /// Parses a document. Strict mode rejects unknown fields.
    pub fn from_json(text: &str, strict: bool) -> Result<Self, CompileError> {
        let doc: ExecutableDocument = serde_json::from_str(text).map_err(|e| CompileError::Parse(e.to_string()))?;
        if strict {
            let mut unknown: Vec<String> = doc.extra.keys().cloned().collect();
            for (i, t) in doc.tasks.iter().enumerate() {
                unknown.extend(t.extra.keys().map(|k| format!("tasks[{i}].{k}")));
            }
            if !unknown.is_empty() {
                return Err(CompileError::UnknownFields(unknown));
            }
        }
        Ok(doc)
    }

    pub fn steps(&self) -> Vec<TaskStep> {
        self.tasks
            .iter()
            .map(|t| TaskStep {
                action: t.action,
                args: t.args.clone(),
                explanation: t.explanation.clone(),
                affordance: Some(t.affordance.clone()),
            })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct CompileOptions {
    /// Require an available affordance for every Grab and Release.
    pub strict: bool,
    /// A human accepted an anchor/plan mismatch; missing records become
    /// explicit unavailable markers.
    pub mismatch_override: bool,
    pub provenance: Provenance,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum CompileError {
    #[error("plan has {} validation violation(s)", .0.len())]
    PlanViolations(Vec<Violation>),
    #[error("grounding needs review: {0}")]
    AlignmentUnresolved(String),
    #[error("step {step_index} ({action}) has no affordance record: {reason}")]
    MissingAffordance { step_index: usize, action: ActionKind, reason: String },
    #[error("grounding has {found} affordance slots for {expected} steps")]
    StepCountMismatch { expected: usize, found: usize },
    #[error("unknown fields: {}", .0.join(", "))]
    UnknownFields(Vec<String>),
    #[error("document does not parse: {0}")]
    Parse(String),
}

/// Builds the executable document. The output is normalized: parsing its
/// canonical serialization yields an equal document.
pub fn compile(
    instruction: &str,
    scene_before: &SceneDescription,
    plan: &PlannerOutput,
    grounding: Option<&GroundingReport>,
    options: &CompileOptions,
) -> Result<ExecutableDocument, CompileError> {
    let report = validate_plan(scene_before, &plan.steps);
    if !report.is_valid() {
        return Err(CompileError::PlanViolations(report.violations));
    }
    let slots: Vec<AffordanceSlot> = match grounding {
        Some(g) => {
            if let Some(err) = &g.alignment_error {
                if !options.mismatch_override {
                    return Err(CompileError::AlignmentUnresolved(err.clone()));
                }
            }
            if g.affordances.len() != plan.steps.len() {
                return Err(CompileError::StepCountMismatch { expected: plan.steps.len(), found: g.affordances.len() });
            }
            g.affordances.clone()
        }
        None => plan
            .steps
            .iter()
            .map(|_| AffordanceSlot::Unavailable { reason: "no demonstration stream was provided".into() })
            .collect(),
    };
    if options.strict {
        for (i, (step, slot)) in plan.steps.iter().zip(&slots).enumerate() {
            if let (ActionKind::Grab | ActionKind::Release, AffordanceSlot::Unavailable { reason }) = (step.action, slot) {
                return Err(CompileError::MissingAffordance { step_index: i, action: step.action, reason: reason.clone() });
            }
        }
    }
    let tasks = plan
        .steps
        .iter()
        .zip(slots)
        .map(|(step, affordance)| ExecutableTask {
            action: step.action,
            args: step.args.clone(),
            explanation: step.explanation.clone(),
            preconditions: step.action.preconditions(&step.args),
            postconditions: step.action.postconditions(&step.args),
            affordance,
            extra: BTreeMap::new(),
        })
        .collect();
    let mut provenance = options.provenance.clone();
    if provenance.analyzer_config_digest.is_none() {
        provenance.analyzer_config_digest = grounding.map(|g| g.config_digest.clone());
    }
    let doc = ExecutableDocument {
        schema_version: SCHEMA_VERSION.to_string(),
        instruction: instruction.trim().to_string(),
        scene_before: scene_before.clone(),
        scene_after: report.final_state.describe(scene_before),
        tasks,
        summary: plan.summary.clone(),
        provenance,
        extra: BTreeMap::new(),
    };
    // round floats exactly as serialization will
    ExecutableDocument::from_json(&doc.to_canonical_json(), true)
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct DocumentReport {
    pub schema_errors: Vec<String>,
    pub invariant_errors: Vec<String>,
}

impl DocumentReport {
    pub fn is_valid(&self) -> bool {
        self.schema_errors.is_empty() && self.invariant_errors.is_empty()
    }
}

fn type_name(v: &Value) -> &'static str {
    match v {
        Value::Null => "null",
        Value::Bool(_) => "boolean",
        Value::Number(_) => "number",
        Value::String(_) => "string",
        Value::Array(_) => "array",
        Value::Object(_) => "object",
    }
}

struct SchemaCheck<'a> {
    errors: &'a mut Vec<String>,
    strict: bool,
}

impl SchemaCheck<'_> {
    fn object<'v>(&mut self, v: &'v Value, path: &str, required: &[&str], optional: &[&str]) -> Option<&'v serde_json::Map<String, Value>> {
        let Some(map) = v.as_object() else {
            self.errors.push(format!("{path}: expected object, found {}", type_name(v)));
            return None;
        };
        for key in required {
            if !map.contains_key(*key) {
                self.errors.push(format!("{path}: missing required field `{key}`"));
            }
        }
        if self.strict {
            for key in map.keys() {
                if !required.contains(&key.as_str()) && !optional.contains(&key.as_str()) {
                    self.errors.push(format!("{path}: unknown field `{key}`"));
                }
            }
        }
        Some(map)
    }

    fn string(&mut self, v: Option<&Value>, path: &str) {
        if let Some(v) = v {
            if !v.is_string() {
                self.errors.push(format!("{path}: expected string, found {}", type_name(v)));
            }
        }
    }

    fn string_array(&mut self, v: Option<&Value>, path: &str) -> Option<Vec<String>> {
        let v = v?;
        let Some(items) = v.as_array() else {
            self.errors.push(format!("{path}: expected array, found {}", type_name(v)));
            return None;
        };
        let mut out = Vec::new();
        for (i, item) in items.iter().enumerate() {
            match item.as_str() {
                Some(s) => out.push(s.to_string()),
                None => self.errors.push(format!("{path}[{i}]: expected string")),
            }
        }
        Some(out)
    }

    fn scene(&mut self, v: Option<&Value>, path: &str) {
        let Some(v) = v else { return };
        let Some(map) = self.object(v, path, &["objects"], &["relations", "rationale"]) else { return };
        if let Some(objects) = map.get("objects").and_then(Value::as_array) {
            for (i, o) in objects.iter().enumerate() {
                let p = format!("{path}.objects[{i}]");
                if let Some(m) = self.object(o, &p, &["name", "graspable"], &[]) {
                    self.string(m.get("name"), &format!("{p}.name"));
                    if m.get("graspable").is_some_and(|g| !g.is_boolean()) {
                        self.errors.push(format!("{p}.graspable: expected boolean"));
                    }
                }
            }
        } else if map.contains_key("objects") {
            self.errors.push(format!("{path}.objects: expected array"));
        }
        if let Some(relations) = map.get("relations").and_then(Value::as_array) {
            for (i, r) in relations.iter().enumerate() {
                let p = format!("{path}.relations[{i}]");
                if let Some(m) = self.object(r, &p, &["subject", "relation", "object"], &[]) {
                    for k in ["subject", "relation", "object"] {
                        self.string(m.get(k), &format!("{p}.{k}"));
                    }
                }
            }
        }
        self.string(map.get("rationale"), &format!("{path}.rationale"));
    }

    fn task(&mut self, v: &Value, path: &str) {
        let Some(map) = self.object(
            v,
            path,
            &["action", "args", "explanation", "preconditions", "postconditions", "affordance"],
            &[],
        ) else {
            return;
        };
        let action = match map.get("action").and_then(Value::as_str) {
            Some(a) => match a.parse::<ActionKind>() {
                Ok(k) if k.name() == a => Some(k),
                _ => {
                    self.errors.push(format!("{path}.action: `{a}` is not in the action vocabulary"));
                    None
                }
            },
            None => {
                self.errors.push(format!("{path}.action: expected string"));
                None
            }
        };
        if let (Some(args), Some(action)) = (self.string_array(map.get("args"), &format!("{path}.args")), action) {
            if args.len() != action.arity() {
                self.errors.push(format!("{path}.args: {action} takes {} argument(s), found {}", action.arity(), args.len()));
            }
            if args.iter().any(|a| a.trim().is_empty()) {
                self.errors.push(format!("{path}.args: empty object name"));
            }
        }
        self.string(map.get("explanation"), &format!("{path}.explanation"));
        self.string_array(map.get("preconditions"), &format!("{path}.preconditions"));
        self.string_array(map.get("postconditions"), &format!("{path}.postconditions"));
        if let Some(slot) = map.get("affordance") {
            match slot.get("status").and_then(Value::as_str) {
                Some("unavailable") => {
                    if let Some(m) = self.object(slot, &format!("{path}.affordance"), &["status", "reason"], &[]) {
                        self.string(m.get("reason"), &format!("{path}.affordance.reason"));
                    }
                }
                Some("available") => {
                    if let Some(m) = self.object(slot, &format!("{path}.affordance"), &["status", "record"], &[]) {
                        if let Some(record) = m.get("record") {
                            if serde_json::from_value::<crate::affordance::AffordanceRecord>(record.clone()).is_err() {
                                self.errors.push(format!("{path}.affordance.record: not a valid affordance record"));
                            }
                        }
                    }
                }
                _ => self.errors.push(format!("{path}.affordance.status: expected `available` or `unavailable`")),
            }
        }
    }
}

/// Structural check of a document value against the published schema.
pub fn check_schema(value: &Value, strict: bool) -> Vec<String> {
    let mut errors = Vec::new();
    let mut c = SchemaCheck { errors: &mut errors, strict };
    let required = ["schema_version", "instruction", "scene_before", "scene_after", "tasks", "summary", "provenance"];
    if let Some(map) = c.object(value, "$", &required, &[]) {
        match map.get("schema_version").and_then(Value::as_str) {
            Some(SCHEMA_VERSION) | None => {}
            Some(other) => c.errors.push(format!("$.schema_version: unsupported version `{other}`")),
        }
        c.string(map.get("instruction"), "$.instruction");
        c.string(map.get("summary"), "$.summary");
        c.scene(map.get("scene_before"), "$.scene_before");
        c.scene(map.get("scene_after"), "$.scene_after");
        match map.get("tasks") {
            Some(Value::Array(tasks)) => {
                for (i, t) in tasks.iter().enumerate() {
                    c.task(t, &format!("$.tasks[{i}]"));
                }
            }
            Some(other) => c.errors.push(format!("$.tasks: expected array, found {}", type_name(other))),
            None => {}
        }
        if let Some(p) = map.get("provenance") {
            if let Some(m) = c.object(
                p,
                "$.provenance",
                &["transport", "model_id", "fixture_hashes"],
                &["analyzer_config_digest", "approvals"],
            ) {
                c.string(m.get("transport"), "$.provenance.transport");
                c.string(m.get("model_id"), "$.provenance.model_id");
                c.string_array(m.get("fixture_hashes"), "$.provenance.fixture_hashes");
            }
        }
    }
    errors
}

/// Semantic checks on a parsed document.
pub fn check_invariants(doc: &ExecutableDocument) -> Vec<String> {
    let mut errors = Vec::new();
    let steps = doc.steps();
    let report = validate_plan(&doc.scene_before, &steps);
    for v in &report.violations {
        errors.push(format!("plan: {v}"));
    }
    if report.is_valid() && report.final_state.describe(&doc.scene_before) != doc.scene_after {
        errors.push("scene_after differs from the simulated final state".into());
    }
    for (i, task) in doc.tasks.iter().enumerate() {
        if task.preconditions != task.action.preconditions(&task.args)
            || task.postconditions != task.action.postconditions(&task.args)
        {
            errors.push(format!("tasks[{i}]: conditions do not match the {} semantics", task.action));
        }
        if let AffordanceSlot::Available { record } = &task.affordance {
            if record.payload.action() != task.action {
                errors.push(format!("tasks[{i}]: {} task carries a {} affordance", task.action, record.payload.action()));
            }
            for (field, v) in record.payload.unit_vectors() {
                let n = v.norm();
                if (n - 1.0).abs() > UNIT_NORM_TOLERANCE {
                    errors.push(format!("tasks[{i}].affordance.{field}: norm {n} is not 1"));
                }
            }
            for (j, p) in record.posture.iter().enumerate() {
                for (field, v) in [("upper_arm", p.upper_arm), ("forearm", p.forearm)] {
                    if let Some(v) = v {
                        if (v.norm() - 1.0).abs() > UNIT_NORM_TOLERANCE {
                            errors.push(format!("tasks[{i}].affordance.posture[{j}].{field}: not a unit vector"));
                        }
                    }
                }
            }
            if let crate::affordance::AffordancePayload::Rotate { angle, .. } = record.payload {
                if !(angle > 0.0 && angle < 2.0 * std::f64::consts::PI) {
                    errors.push(format!("tasks[{i}].affordance.angle: {angle} outside (0, 2π)"));
                }
            }
            if let crate::affordance::AffordancePayload::MoveHand { waypoints, waypoint_frames } = &record.payload {
                if waypoints.len() < 2 || waypoints.len() != waypoint_frames.len() {
                    errors.push(format!("tasks[{i}].affordance.waypoints: need both segment endpoints"));
                }
            }
        }
    }
    errors
}

pub fn validate_document_str(text: &str, strict: bool) -> DocumentReport {
    let value: Value = match serde_json::from_str(text) {
        Ok(v) => v,
        Err(e) => return DocumentReport { schema_errors: vec![format!("not JSON: {e}")], invariant_errors: Vec::new() },
    };
    let schema_errors = check_schema(&value, strict);
    if !schema_errors.is_empty() {
        return DocumentReport { schema_errors, invariant_errors: Vec::new() };
    }
    match ExecutableDocument::from_json(text, strict) {
        Ok(doc) => DocumentReport { schema_errors, invariant_errors: check_invariants(&doc) },
        Err(e) => DocumentReport { schema_errors: vec![e.to_string()], invariant_errors: Vec::new() },
    }
}

/// Validates a document file in strict mode.
pub fn validate_document(path: &Path) -> DocumentReport {
    match fs::read_to_string(path) {
        Ok(text) => validate_document_str(&text, true),
        Err(e) => DocumentReport { schema_errors: vec![format!("{}: {e}", path.display())], invariant_errors: Vec::new() },
    }
}
