//! Symbolic task planning: video analyzer, scene analyzer and task planner
//! prompting stages, with corrective feedback on a stateful session.
//!
//! Every stage asks the model for a fenced JSON block. Parsing never drops
//! a response silently: it either yields typed output or a [`PlannerError`]
//! that carries the raw text for review.

use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

use crate::gateway::{send, ChatMessage, GatewayError, ImageRef, PromptSet, SessionState, Transport};
use crate::task_model::{
    validate_plan, Relation, SceneDescription, SceneObject, StepParseError, TaskStep, Violation,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InstructionSource {
    Model,
    HumanEdited,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct InstructionText {
    pub text: String,
    pub source: InstructionSource,
}

impl InstructionText {
    pub fn new(text: impl Into<String>, source: InstructionSource) -> Result<Self, PlannerError> {
        let text = text.into().trim().to_string();
        if text.is_empty() {
            return Err(PlannerError::InvalidArgument("instruction is empty".into()));
        }
        Ok(InstructionText { text, source })
    }

    pub fn human(text: impl Into<String>) -> Result<Self, PlannerError> {
        Self::new(text, InstructionSource::HumanEdited)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlannerOutput {
    pub steps: Vec<TaskStep>,
    pub step_explanations: Vec<String>,
    pub scene_after: SceneDescription,
    pub summary: String,
    /// Validation findings against the input scene; must be resolved before
    /// the plan can be compiled.
    #[serde(default)]
    pub violations: Vec<Violation>,
    #[serde(default)]
    pub revision: u32,
    #[serde(default)]
    pub raw_response: String,
}

impl PlannerOutput {
    pub fn is_clean(&self) -> bool {
        self.violations.is_empty()
    }
}

#[derive(Debug, Error)]
pub enum PlannerError {
    #[error("could not parse model output: {reason}")]
    ParseFailure { reason: String, raw: String },
    #[error("model output is missing fields: {}", missing.join(", "))]
    SchemaViolation { missing: Vec<String>, raw: String },
    #[error("action `{token}` is not in the robot vocabulary")]
    ActionVocabularyViolation { token: String, raw: String },
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error(transparent)]
    Gateway(#[from] GatewayError),
}

impl PlannerError {
    /// The unparsed model response, when the failure came from parsing.
    pub fn raw(&self) -> Option<&str> {
        match self {
            PlannerError::ParseFailure { raw, .. }
            | PlannerError::SchemaViolation { raw, .. }
            | PlannerError::ActionVocabularyViolation { raw, .. } => Some(raw),
            _ => None,
        }
    }
}

/// Returns the contents of the first fenced code block, skipping an
/// optional language tag.
pub fn extract_fenced_block(text: &str) -> Option<&str> {
    let start = text.find("```")?;
    let after = &text[start + 3..];
    let body_start = after.find('\n').map(|i| i + 1).unwrap_or(0);
    let tag = after[..body_start].trim();
    if !tag.is_empty() && !tag.chars().all(|c| c.is_ascii_alphanumeric()) {
        // fence and content on one line: ```{"a":1}```
        let end = after.find("```")?;
        return Some(after[..end].trim());
    }
    let body = &after[body_start..];
    let end = body.find("```")?;
    Some(body[..end].trim())
}

fn parse_json_block(raw: &str) -> Result<Value, PlannerError> {
    let block = extract_fenced_block(raw).ok_or_else(|| PlannerError::ParseFailure {
        reason: "no fenced block in response".into(),
        raw: raw.to_string(),
    })?;
    serde_json::from_str(block).map_err(|e| PlannerError::ParseFailure {
        reason: format!("fenced block is not valid JSON: {e}"),
        raw: raw.to_string(),
    })
}

fn missing_fields(value: &Value, fields: &[&str]) -> Vec<String> {
    fields
        .iter()
        .filter(|f| value.get(**f).is_none_or(Value::is_null))
        .map(|f| f.to_string())
        .collect()
}

pub fn parse_instruction(raw: &str) -> Result<InstructionText, PlannerError> {
    let value = parse_json_block(raw)?;
    let missing = missing_fields(&value, &["instruction"]);
    if !missing.is_empty() {
        return Err(PlannerError::SchemaViolation { missing, raw: raw.to_string() });
    }
    let text = value["instruction"].as_str().ok_or_else(|| PlannerError::ParseFailure {
        reason: "instruction is not a string".into(),
        raw: raw.to_string(),
    })?;
    InstructionText::new(text, InstructionSource::Model).map_err(|_| PlannerError::SchemaViolation {
        missing: vec!["instruction".into()],
        raw: raw.to_string(),
    })
}

fn parse_objects(value: &Value, raw: &str) -> Result<Vec<SceneObject>, PlannerError> {
    let items = value.as_array().ok_or_else(|| PlannerError::ParseFailure {
        reason: "objects is not a list".into(),
        raw: raw.to_string(),
    })?;
    items
        .iter()
        .map(|item| match item {
            Value::String(name) => Ok(SceneObject { name: name.trim().to_string(), graspable: true }),
            Value::Object(_) => {
                let name = item["name"].as_str().ok_or_else(|| PlannerError::SchemaViolation {
                    missing: vec!["objects[].name".into()],
                    raw: raw.to_string(),
                })?;
                let graspable = match &item["graspable"] {
                    Value::Bool(b) => *b,
                    Value::String(s) => matches!(s.to_lowercase().as_str(), "true" | "yes"),
                    Value::Null => true,
                    _ => false,
                };
                Ok(SceneObject { name: name.trim().to_string(), graspable })
            }
            _ => Err(PlannerError::ParseFailure {
                reason: "object entry is neither a name nor an object".into(),
                raw: raw.to_string(),
            }),
        })
        .collect()
}

fn parse_relations(value: &Value, raw: &str) -> Result<Vec<Relation>, PlannerError> {
    let Some(items) = value.as_array() else {
        return if value.is_null() {
            Ok(Vec::new())
        } else {
            Err(PlannerError::ParseFailure { reason: "relations is not a list".into(), raw: raw.to_string() })
        };
    };
    items
        .iter()
        .map(|item| {
            let parts: Option<[&str; 3]> = match item {
                Value::Array(a) if a.len() == 3 => {
                    Some([a[0].as_str(), a[1].as_str(), a[2].as_str()]).and_then(|[a, b, c]| Some([a?, b?, c?]))
                }
                Value::Object(_) => (|| {
                    Some([item["subject"].as_str()?, item["relation"].as_str()?, item["object"].as_str()?])
                })(),
                _ => None,
            };
            let [s, r, o] = parts.ok_or_else(|| PlannerError::ParseFailure {
                reason: "relation must be [subject, relation, object]".into(),
                raw: raw.to_string(),
            })?;
            Ok(Relation { subject: s.trim().into(), relation: r.trim().into(), object: o.trim().into() })
        })
        .collect()
}

pub fn parse_scene(raw: &str) -> Result<SceneDescription, PlannerError> {
    let value = parse_json_block(raw)?;
    let missing = missing_fields(&value, &["objects", "relations", "rationale"]);
    if !missing.is_empty() {
        return Err(PlannerError::SchemaViolation { missing, raw: raw.to_string() });
    }
    let scene = SceneDescription {
        objects: parse_objects(&value["objects"], raw)?,
        relations: parse_relations(&value["relations"], raw)?,
        rationale: value["rationale"].as_str().unwrap_or_default().to_string(),
    };
    scene.validate().map_err(|e| PlannerError::SchemaViolation {
        missing: vec![format!("objects ({e})")],
        raw: raw.to_string(),
    })?;
    Ok(scene)
}

/// Parses a planner response. Steps are checked against the vocabulary and
/// arity rules; scene validation happens separately.
pub fn parse_plan(raw: &str) -> Result<PlannerOutput, PlannerError> {
    let value = parse_json_block(raw)?;
    let missing = missing_fields(&value, &["task_sequence", "step_explanations", "environment_after", "summary"]);
    if !missing.is_empty() {
        return Err(PlannerError::SchemaViolation { missing, raw: raw.to_string() });
    }
    let tokens = value["task_sequence"].as_array().ok_or_else(|| PlannerError::ParseFailure {
        reason: "task_sequence is not a list".into(),
        raw: raw.to_string(),
    })?;
    let mut steps = Vec::with_capacity(tokens.len());
    for token in tokens {
        let text = token.as_str().ok_or_else(|| PlannerError::ParseFailure {
            reason: "task_sequence entries must be strings".into(),
            raw: raw.to_string(),
        })?;
        let step = text.parse::<TaskStep>().map_err(|e| match e {
            StepParseError::UnknownAction(u) => PlannerError::ActionVocabularyViolation {
                token: u.0,
                raw: raw.to_string(),
            },
            other => PlannerError::ParseFailure { reason: other.to_string(), raw: raw.to_string() },
        })?;
        steps.push(step);
    }
    let explanations: Vec<String> = value["step_explanations"]
        .as_array()
        .map(|a| a.iter().map(|e| e.as_str().unwrap_or_default().to_string()).collect())
        .unwrap_or_default();
    if explanations.len() != steps.len() {
        return Err(PlannerError::ParseFailure {
            reason: format!("{} explanations for {} steps", explanations.len(), steps.len()),
            raw: raw.to_string(),
        });
    }
    for (step, explanation) in steps.iter_mut().zip(&explanations) {
        step.explanation = explanation.clone();
    }
    let env = &value["environment_after"];
    let scene_after = SceneDescription {
        objects: parse_objects(env.get("objects").unwrap_or(&Value::Array(vec![])), raw)?,
        relations: parse_relations(env.get("relations").unwrap_or(&Value::Null), raw)?,
        rationale: env.get("rationale").and_then(Value::as_str).unwrap_or_default().to_string(),
    };
    Ok(PlannerOutput {
        steps,
        step_explanations: explanations,
        scene_after,
        summary: value["summary"].as_str().unwrap_or_default().to_string(),
        violations: Vec::new(),
        revision: 0,
        raw_response: raw.to_string(),
    })
}

fn render_objects(scene: Option<&SceneDescription>) -> String {
    match scene {
        Some(s) => s
            .objects
            .iter()
            .map(|o| format!("- {} ({})", o.name, if o.graspable { "graspable" } else { "not graspable" }))
            .collect::<Vec<_>>()
            .join("\n"),
        None => "(not provided; infer the objects from the instruction)".into(),
    }
}

fn render_environment(scene: Option<&SceneDescription>) -> String {
    match scene {
        Some(s) if !s.relations.is_empty() => s
            .relations
            .iter()
            .map(|r| format!("- {} {} {}", r.subject, r.relation, r.object))
            .collect::<Vec<_>>()
            .join("\n"),
        Some(_) => "(none)".into(),
        None => "(not provided)".into(),
    }
}

/// Runs the three prompting stages against a session and transport.
#[derive(Debug, Clone, Default)]
pub struct SymbolicPlanner {
    pub prompts: PromptSet,
}

impl SymbolicPlanner {
    pub fn new(prompts: PromptSet) -> Self {
        SymbolicPlanner { prompts }
    }

    /// A fresh session whose system prompt comes from the prompt set.
    pub fn new_session(&self, budget: usize) -> SessionState {
        SessionState::new(self.prompts.system.text.trim(), budget)
    }

    pub fn analyze_video(
        &self,
        frames: &[ImageRef],
        session: &mut SessionState,
        transport: &dyn Transport,
    ) -> Result<InstructionText, PlannerError> {
        if frames.is_empty() {
            return Err(PlannerError::InvalidArgument("no frames to analyze".into()));
        }
        let text = self.prompts.video_analyzer.render(&[])?;
        let message = ChatMessage::user(text).with_images(frames.iter().cloned());
        let raw = send(session, message, transport)?;
        parse_instruction(&raw)
    }

    /// Sends feedback on the last instruction and parses the revised one.
    pub fn revise_instruction(
        &self,
        feedback: &str,
        session: &mut SessionState,
        transport: &dyn Transport,
    ) -> Result<InstructionText, PlannerError> {
        let raw = self.send_feedback(feedback, session, transport)?;
        parse_instruction(&raw)
    }

    pub fn analyze_scene(
        &self,
        first_frame: &ImageRef,
        instruction: &InstructionText,
        session: &mut SessionState,
        transport: &dyn Transport,
    ) -> Result<SceneDescription, PlannerError> {
        let text = self.prompts.scene_analyzer.render(&[("ACTION", &instruction.text)])?;
        let message = ChatMessage::user(text).with_images([first_frame.clone()]);
        let raw = send(session, message, transport)?;
        parse_scene(&raw)
    }

    /// Plans against `scene`, or without scene information when `None`
    /// (validation then runs against the objects the plan mentions).
    pub fn plan_tasks(
        &self,
        instruction: &InstructionText,
        scene: Option<&SceneDescription>,
        session: &mut SessionState,
        transport: &dyn Transport,
    ) -> Result<PlannerOutput, PlannerError> {
        if let Some(s) = scene {
            s.validate().map_err(|e| PlannerError::InvalidArgument(format!("scene: {e}")))?;
        }
        let text = self.prompts.task_planner.render(&[
            ("ACTION", &instruction.text),
            ("OBJECTS", &render_objects(scene)),
            ("ENVIRONMENT", &render_environment(scene)),
        ])?;
        let raw = send(session, ChatMessage::user(text), transport)?;
        let mut output = parse_plan(&raw)?;
        attach_violations(&mut output, scene);
        Ok(output)
    }

    pub fn apply_feedback(
        &self,
        feedback: &str,
        prior: &PlannerOutput,
        scene: Option<&SceneDescription>,
        session: &mut SessionState,
        transport: &dyn Transport,
    ) -> Result<PlannerOutput, PlannerError> {
        let raw = self.send_feedback(feedback, session, transport)?;
        let mut output = parse_plan(&raw)?;
        output.revision = prior.revision + 1;
        attach_violations(&mut output, scene);
        Ok(output)
    }

    fn send_feedback(
        &self,
        feedback: &str,
        session: &mut SessionState,
        transport: &dyn Transport,
    ) -> Result<String, PlannerError> {
        let feedback = feedback.trim();
        if feedback.is_empty() {
            return Err(PlannerError::InvalidArgument("feedback is empty".into()));
        }
        let text = self.prompts.feedback.render(&[("FEEDBACK", feedback)])?;
        let raw = send(session, ChatMessage::user(text), transport)?;
        session.truncate_history()?;
        Ok(raw)
    }
}

fn attach_violations(output: &mut PlannerOutput, scene: Option<&SceneDescription>) {
    let implied;
    let scene = match scene {
        Some(s) => s,
        None => {
            implied = SceneDescription::implied_by(&output.steps);
            &implied
        }
    };
    output.violations = validate_plan(scene, &output.steps).violations;
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gateway::ScriptedTransport;
    use crate::task_model::ActionKind;

    const JUICE_PLAN: &str = r#"Here is the plan.
```json
{
  "task_sequence": ["Grab(juice)", "PickUp(juice)", "MoveHand(top shelf)", "Put(juice, top shelf)", "Release(juice)"],
  "step_explanations": ["grab", "lift", "move", "place", "let go"],
  "environment_after": {"objects": [{"name": "juice", "graspable": true}], "relations": [["juice", "on", "top shelf"]]},
  "summary": "Relocate the juice."
}
```
Let me know if this works."#;

    fn juice_scene() -> SceneDescription {
        parse_scene(
            r#"```json
{"objects": [{"name": "juice", "graspable": true}, {"name": "bottom shelf", "graspable": false}, {"name": "top shelf", "graspable": false}],
 "relations": [{"subject": "juice", "relation": "on", "object": "bottom shelf"}],
 "rationale": "the juice is moved between shelves"}
```"#,
        )
        .unwrap()
    }

    #[test]
    fn fenced_block_extraction() {
        assert_eq!(extract_fenced_block("a\n```json\n{\"x\":1}\n```\nb"), Some("{\"x\":1}"));
        assert_eq!(extract_fenced_block("```\n[1]\n```"), Some("[1]"));
        assert_eq!(extract_fenced_block("```{\"x\":1}```"), Some("{\"x\":1}"));
        assert_eq!(extract_fenced_block("no fence"), None);
        assert_eq!(extract_fenced_block("```json\nunterminated"), None);
    }

    #[test]
    fn plan_parses_and_validates() {
        let planner = SymbolicPlanner::default();
        let mut session = planner.new_session(8192);
        let transport = ScriptedTransport::new([JUICE_PLAN]);
        let instruction = InstructionText::human("Move the juice to the top shelf.").unwrap();
        let scene = juice_scene();
        let out = planner.plan_tasks(&instruction, Some(&scene), &mut session, &transport).unwrap();
        let actions: Vec<ActionKind> = out.steps.iter().map(|s| s.action).collect();
        assert_eq!(
            actions,
            [ActionKind::Grab, ActionKind::PickUp, ActionKind::MoveHand, ActionKind::Put, ActionKind::Release]
        );
        assert!(out.is_clean(), "{:?}", out.violations);
        assert_eq!(out.steps[3].explanation, "place");
        let prompt = &session.messages[1].text;
        assert!(prompt.contains("Move the juice to the top shelf."));
        assert!(prompt.contains("- bottom shelf (not graspable)"));
        assert!(prompt.contains("- juice on bottom shelf"));
    }

    #[test]
    fn unknown_action_is_a_vocabulary_violation() {
        let raw = "```json\n{\"task_sequence\": [\"Throw(can)\"], \"step_explanations\": [\"x\"], \"environment_after\": {}, \"summary\": \"\"}\n```";
        match parse_plan(raw) {
            Err(PlannerError::ActionVocabularyViolation { token, raw: r }) => {
                assert_eq!(token, "Throw");
                assert_eq!(r, raw);
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn put_with_one_argument_is_a_parse_failure() {
        let raw = "```json\n{\"task_sequence\": [\"Put(juice)\"], \"step_explanations\": [\"x\"], \"environment_after\": {}, \"summary\": \"\"}\n```";
        assert!(matches!(parse_plan(raw), Err(PlannerError::ParseFailure { .. })));
    }

    #[test]
    fn malformed_scene_keeps_raw_text() {
        let raw = "the scene has a cup";
        let err = parse_scene(raw).unwrap_err();
        assert!(matches!(err, PlannerError::ParseFailure { .. }));
        assert_eq!(err.raw(), Some(raw));
    }

    #[test]
    fn empty_scene_is_a_schema_violation() {
        let raw = "```json\n{\"objects\": [], \"relations\": [], \"rationale\": \"none\"}\n```";
        assert!(matches!(parse_scene(raw), Err(PlannerError::SchemaViolation { .. })));
        let raw = "```json\n{\"objects\": [\"cup\"]}\n```";
        match parse_scene(raw) {
            Err(PlannerError::SchemaViolation { missing, .. }) => {
                assert_eq!(missing, vec!["relations", "rationale"])
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn scene_prompt_substitutes_action() {
        let planner = SymbolicPlanner::default();
        let mut session = planner.new_session(8192);
        let t = ScriptedTransport::new([
            "```json\n{\"objects\": [\"fridge handle\"], \"relations\": [], \"rationale\": \"only the handle is touched\"}\n```",
        ]);
        let frame = ImageRef::new("image/png", vec![1, 2, 3]);
        let instruction = InstructionText::human("Open the fridge.").unwrap();
        let scene = planner.analyze_scene(&frame, &instruction, &mut session, &t).unwrap();
        assert_eq!(scene.objects[0].name, "fridge handle");
        assert!(session.messages[1].text.contains("\"Open the fridge.\""));
        assert_eq!(session.messages[1].images.len(), 1);
    }

    #[test]
    fn video_analysis_marks_model_source() {
        let planner = SymbolicPlanner::default();
        let mut session = planner.new_session(8192);
        let t = ScriptedTransport::new(["```json\n{\"instruction\": \"Open the fridge.\"}\n```"]);
        let frames: Vec<ImageRef> = (0..5).map(|i| ImageRef::new("image/png", vec![i])).collect();
        let out = planner.analyze_video(&frames, &mut session, &t).unwrap();
        assert_eq!(out.source, InstructionSource::Model);
        assert_eq!(out.text, "Open the fridge.");
        assert_eq!(session.messages[1].images.len(), 5);
    }

    #[test]
    fn feedback_increments_revision_and_rejects_empty_text() {
        let planner = SymbolicPlanner::default();
        let mut session = planner.new_session(8192);
        let t = ScriptedTransport::new([JUICE_PLAN, JUICE_PLAN]);
        let instruction = InstructionText::human("Move the juice.").unwrap();
        let scene = juice_scene();
        let first = planner.plan_tasks(&instruction, Some(&scene), &mut session, &t).unwrap();
        assert!(matches!(
            planner.apply_feedback("   ", &first, Some(&scene), &mut session, &t),
            Err(PlannerError::InvalidArgument(_))
        ));
        let second = planner
            .apply_feedback("use the top shelf", &first, Some(&scene), &mut session, &t)
            .unwrap();
        assert_eq!(second.revision, 1);
        assert!(session.messages.iter().any(|m| m.text.contains("use the top shelf")));
    }

    #[test]
    fn plan_without_scene_validates_holding_only() {
        let planner = SymbolicPlanner::default();
        let mut session = planner.new_session(8192);
        let t = ScriptedTransport::new([JUICE_PLAN]);
        let instruction = InstructionText::human("Move the juice.").unwrap();
        let out = planner.plan_tasks(&instruction, None, &mut session, &t).unwrap();
        assert!(out.is_clean());
    }

    #[test]
    fn invalid_plan_is_returned_with_violations() {
        let raw = "```json\n{\"task_sequence\": [\"Release(juice)\"], \"step_explanations\": [\"x\"], \"environment_after\": {}, \"summary\": \"\"}\n```";
        let planner = SymbolicPlanner::default();
        let mut session = planner.new_session(8192);
        let t = ScriptedTransport::new([raw]);
        let out = planner
            .plan_tasks(&InstructionText::human("x").unwrap(), Some(&juice_scene()), &mut session, &t)
            .unwrap();
        assert_eq!(out.violations.len(), 1);
    }
}
