//! Robot action vocabulary, world-state simulation and plan validation.
//!
//! The vocabulary is closed: eight actions defined by how they change the
//! motion constraints on the manipulated object. Each action carries
//! preconditions and postconditions over a single-hand world state, and a
//! plan is valid when folding the postconditions over the initial scene
//! never hits a failed precondition.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::affordance::AffordanceSlot;

/// Normalized identity key for an object name: trimmed and case-folded.
pub fn object_key(name: &str) -> String {
    name.trim().to_lowercase()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum ActionKind {
    Grab,
    MoveHand,
    Release,
    PickUp,
    Put,
    Rotate,
    Slide,
    MoveOnSurface,
}

impl ActionKind {
    pub const ALL: [ActionKind; 8] = [
        ActionKind::Grab,
        ActionKind::MoveHand,
        ActionKind::Release,
        ActionKind::PickUp,
        ActionKind::Put,
        ActionKind::Rotate,
        ActionKind::Slide,
        ActionKind::MoveOnSurface,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ActionKind::Grab => "Grab",
            ActionKind::MoveHand => "MoveHand",
            ActionKind::Release => "Release",
            ActionKind::PickUp => "PickUp",
            ActionKind::Put => "Put",
            ActionKind::Rotate => "Rotate",
            ActionKind::Slide => "Slide",
            ActionKind::MoveOnSurface => "MoveOnSurface",
        }
    }

    pub fn arity(self) -> usize {
        match self {
            ActionKind::Put => 2,
            _ => 1,
        }
    }

    /// Whether the action requires the first argument to be held.
    pub fn requires_holding(self) -> bool {
        !matches!(self, ActionKind::Grab | ActionKind::MoveHand)
    }

    pub fn description(self) -> &'static str {
        match self {
            ActionKind::Grab => "Take hold of arg1.",
            ActionKind::MoveHand => {
                "Move the robot hand closer to arg1, where arg1 describes the hand's destination."
            }
            ActionKind::Release => "Release arg1.",
            ActionKind::PickUp => "Lift arg1.",
            ActionKind::Put => "Place arg1 onto arg2.",
            ActionKind::Rotate => "Open or close something by rotating arg1 along an axis.",
            ActionKind::Slide => "Open or close something by linearly moving arg1 along an axis.",
            ActionKind::MoveOnSurface => "Move arg1 across a surface.",
        }
    }

    /// Human-readable preconditions with arguments substituted.
    pub fn preconditions(self, args: &[String]) -> Vec<String> {
        let arg1 = args.first().map(String::as_str).unwrap_or("arg1");
        match self {
            ActionKind::Grab => vec![
                format!("{arg1} is within reachable distance"),
                "no object is currently held".to_string(),
            ],
            ActionKind::MoveHand => Vec::new(),
            _ => vec![format!("{arg1} is currently being held")],
        }
    }

    /// Human-readable postconditions with arguments substituted.
    pub fn postconditions(self, args: &[String]) -> Vec<String> {
        let arg1 = args.first().map(String::as_str).unwrap_or("arg1");
        match self {
            ActionKind::Grab => vec![format!("{arg1} is being held")],
            ActionKind::MoveHand => Vec::new(),
            ActionKind::Release => vec![format!("{arg1} is no longer held")],
            ActionKind::Put => {
                let arg2 = args.get(1).map(String::as_str).unwrap_or("arg2");
                vec![
                    format!("{arg1} continues to be held"),
                    format!("{arg1} is on {arg2}"),
                ]
            }
            _ => vec![format!("{arg1} continues to be held")],
        }
    }
}

impl fmt::Display for ActionKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("unknown action `{0}`")]
pub struct UnknownAction(pub String);

impl FromStr for ActionKind {
    type Err = UnknownAction;

    /// Case-insensitive; underscores and spaces are ignored so that
    /// `move_hand` and `MoveHand` name the same action.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let folded: String = s
            .trim()
            .chars()
            .filter(|c| *c != '_' && !c.is_whitespace())
            .collect::<String>()
            .to_lowercase();
        ActionKind::ALL
            .into_iter()
            .find(|a| a.name().to_lowercase() == folded)
            .ok_or_else(|| UnknownAction(s.trim().to_string()))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum StepParseError {
    #[error(transparent)]
    UnknownAction(#[from] UnknownAction),
    #[error("{action} takes {expected} argument(s), found {found}")]
    Arity {
        action: ActionKind,
        expected: usize,
        found: usize,
    },
    #[error("empty object name in arguments of {0}")]
    EmptyArgument(ActionKind),
    #[error("malformed task `{0}`")]
    Malformed(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskStep {
    pub action: ActionKind,
    pub args: Vec<String>,
    #[serde(default)]
    pub explanation: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub affordance: Option<AffordanceSlot>,
}

impl TaskStep {
    pub fn new<S: Into<String>>(
        action: ActionKind,
        args: impl IntoIterator<Item = S>,
    ) -> Result<Self, StepParseError> {
        let args: Vec<String> = args.into_iter().map(|a| a.into().trim().to_string()).collect();
        if args.len() != action.arity() {
            return Err(StepParseError::Arity {
                action,
                expected: action.arity(),
                found: args.len(),
            });
        }
        if args.iter().any(String::is_empty) {
            return Err(StepParseError::EmptyArgument(action));
        }
        Ok(TaskStep {
            action,
            args,
            explanation: String::new(),
            affordance: None,
        })
    }

    pub fn with_explanation(mut self, explanation: impl Into<String>) -> Self {
        self.explanation = explanation.into();
        self
    }

    pub fn arg1(&self) -> &str {
        &self.args[0]
    }
}

impl FromStr for TaskStep {
    type Err = StepParseError;

    /// Parses `Action(arg1)` or `Put(arg1, arg2)`.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let s = s.trim();
        let open = s.find('(').ok_or_else(|| StepParseError::Malformed(s.to_string()))?;
        if !s.ends_with(')') {
            return Err(StepParseError::Malformed(s.to_string()));
        }
        let action: ActionKind = s[..open].parse()?;
        let inner = &s[open + 1..s.len() - 1];
        let args: Vec<&str> = if inner.trim().is_empty() {
            Vec::new()
        } else {
            inner.split(',').collect()
        };
        TaskStep::new(action, args)
    }
}

impl fmt::Display for TaskStep {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}({})", self.action, self.args.join(", "))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SceneObject {
    pub name: String,
    pub graspable: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Relation {
    pub subject: String,
    pub relation: String,
    pub object: String,
}

/// Objects, graspability and spatial relations of the working area.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct SceneDescription {
    pub objects: Vec<SceneObject>,
    #[serde(default)]
    pub relations: Vec<Relation>,
    #[serde(default)]
    pub rationale: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum SceneError {
    #[error("scene lists no objects")]
    Empty,
    #[error("duplicate object `{0}`")]
    DuplicateObject(String),
    #[error("empty object name")]
    EmptyName,
    #[error("relation endpoint `{0}` is not a listed object")]
    DanglingRelation(String),
}

impl SceneDescription {
    pub fn validate(&self) -> Result<(), SceneError> {
        if self.objects.is_empty() {
            return Err(SceneError::Empty);
        }
        let mut seen = BTreeSet::new();
        for object in &self.objects {
            let key = object_key(&object.name);
            if key.is_empty() {
                return Err(SceneError::EmptyName);
            }
            if !seen.insert(key) {
                return Err(SceneError::DuplicateObject(object.name.clone()));
            }
        }
        for relation in &self.relations {
            for end in [&relation.subject, &relation.object] {
                if !seen.contains(&object_key(end)) {
                    return Err(SceneError::DanglingRelation(end.clone()));
                }
            }
        }
        Ok(())
    }

    /// A scene listing every object the steps mention, used when no scene
    /// image was analyzed (text-only planning).
    pub fn implied_by(steps: &[TaskStep]) -> Self {
        let mut seen = BTreeSet::new();
        let mut objects = Vec::new();
        for arg in steps.iter().flat_map(|s| s.args.iter()) {
            if seen.insert(object_key(arg)) {
                objects.push(SceneObject {
                    name: arg.trim().to_string(),
                    graspable: true,
                });
            }
        }
        SceneDescription {
            objects,
            relations: Vec::new(),
            rationale: "implied by the task arguments; no scene image was analyzed".to_string(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Articulation {
    Closed,
    Open,
}

impl Articulation {
    fn toggled(self) -> Self {
        match self {
            Articulation::Closed => Articulation::Open,
            Articulation::Open => Articulation::Closed,
        }
    }
}

/// Relation words that mean "is supported by"; PickUp removes them and Put adds one.
const SUPPORT_WORDS: [&str; 8] = [
    "on",
    "on top of",
    "onto",
    "in",
    "inside",
    "within",
    "resting on",
    "placed on",
];

fn is_support_word(word: &str) -> bool {
    let w = word.trim().to_lowercase();
    SUPPORT_WORDS.contains(&w.as_str())
}

/// Single-hand symbolic world state. All names are stored as [`object_key`]s.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct WorldState {
    /// key -> display name
    pub objects: BTreeMap<String, String>,
    pub holding: Option<String>,
    /// (subject, supporter) -> relation word
    pub on_relations: BTreeMap<(String, String), String>,
    pub articulation: BTreeMap<String, Articulation>,
    /// Relations the simulator does not change.
    pub static_relations: BTreeSet<(String, String, String)>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize, Error)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ViolationKind {
    #[error("precondition violated: {reason}")]
    PreconditionViolation { reason: String },
    #[error("unknown object `{name}`")]
    UnknownObject { name: String },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize, Error)]
#[error("step {step_index}: {kind}")]
pub struct Violation {
    pub step_index: usize,
    #[serde(flatten)]
    pub kind: ViolationKind,
}

impl WorldState {
    pub fn from_scene(scene: &SceneDescription) -> Self {
        let mut state = WorldState::default();
        for object in &scene.objects {
            state
                .objects
                .insert(object_key(&object.name), object.name.trim().to_string());
        }
        for r in &scene.relations {
            let (s, o) = (object_key(&r.subject), object_key(&r.object));
            if is_support_word(&r.relation) {
                state.on_relations.insert((s, o), r.relation.trim().to_string());
            } else {
                state
                    .static_relations
                    .insert((s, r.relation.trim().to_string(), o));
            }
        }
        state
    }

    pub fn contains(&self, name: &str) -> bool {
        self.objects.contains_key(&object_key(name))
    }

    pub fn is_holding(&self, name: &str) -> bool {
        self.holding.as_deref() == Some(object_key(name).as_str())
    }

    pub fn articulation_of(&self, name: &str) -> Articulation {
        self.articulation
            .get(&object_key(name))
            .copied()
            .unwrap_or(Articulation::Closed)
    }

    fn display(&self, key: &str) -> String {
        self.objects.get(key).cloned().unwrap_or_else(|| key.to_string())
    }

    /// Applies one step, returning the successor state.
    pub fn apply(&self, step: &TaskStep) -> Result<WorldState, ViolationKind> {
        if step.args.len() != step.action.arity() {
            return Err(ViolationKind::PreconditionViolation {
                reason: format!(
                    "{} takes {} argument(s), found {}",
                    step.action,
                    step.action.arity(),
                    step.args.len()
                ),
            });
        }
        for arg in &step.args {
            if !self.contains(arg) {
                return Err(ViolationKind::UnknownObject { name: arg.clone() });
            }
        }
        let target = object_key(step.arg1());
        if step.action == ActionKind::Grab {
            if let Some(held) = &self.holding {
                return Err(ViolationKind::PreconditionViolation {
                    reason: format!(
                        "cannot grab {}: {} is already held",
                        step.arg1(),
                        self.display(held)
                    ),
                });
            }
        } else if step.action.requires_holding() && self.holding.as_deref() != Some(&target) {
            let reason = match &self.holding {
                None => format!("{} requires {} to be held, but nothing is held", step.action, step.arg1()),
                Some(h) => format!(
                    "{} requires {} to be held, but {} is held",
                    step.action,
                    step.arg1(),
                    self.display(h)
                ),
            };
            return Err(ViolationKind::PreconditionViolation { reason });
        }

        let mut next = self.clone();
        match step.action {
            ActionKind::Grab => next.holding = Some(target),
            ActionKind::Release => next.holding = None,
            ActionKind::PickUp => next.on_relations.retain(|(s, _), _| *s != target),
            ActionKind::Put => {
                let supporter = object_key(&step.args[1]);
                next.on_relations.retain(|(s, _), _| *s != target);
                next.on_relations.insert((target, supporter), "on".to_string());
            }
            ActionKind::Rotate | ActionKind::Slide => {
                let current = next.articulation_of(step.arg1());
                next.articulation.insert(target, current.toggled());
            }
            ActionKind::MoveHand | ActionKind::MoveOnSurface => {}
        }
        Ok(next)
    }

    /// Renders the state as a scene description, keeping graspability from `base`.
    pub fn describe(&self, base: &SceneDescription) -> SceneDescription {
        let graspable: BTreeMap<String, bool> = base
            .objects
            .iter()
            .map(|o| (object_key(&o.name), o.graspable))
            .collect();
        let objects = self
            .objects
            .iter()
            .map(|(key, name)| SceneObject {
                name: name.clone(),
                graspable: graspable.get(key).copied().unwrap_or(true),
            })
            .collect();
        let mut relations: Vec<Relation> = self
            .on_relations
            .iter()
            .map(|((s, o), word)| Relation {
                subject: self.display(s),
                relation: word.clone(),
                object: self.display(o),
            })
            .chain(self.static_relations.iter().map(|(s, word, o)| Relation {
                subject: self.display(s),
                relation: word.clone(),
                object: self.display(o),
            }))
            .collect();
        relations.sort();
        let mut notes = vec![match &self.holding {
            Some(h) => format!("holding {}", self.display(h)),
            None => "hand empty".to_string(),
        }];
        for (key, state) in &self.articulation {
            let word = match state {
                Articulation::Open => "open",
                Articulation::Closed => "closed",
            };
            notes.push(format!("{} {word}", self.display(key)));
        }
        SceneDescription {
            objects,
            relations,
            rationale: format!("simulated final state: {}", notes.join("; ")),
        }
    }
}

/// Applies a step, tagging any failure with its position in the plan.
pub fn apply_step(
    state: &WorldState,
    step: &TaskStep,
    step_index: usize,
) -> Result<WorldState, Violation> {
    state
        .apply(step)
        .map_err(|kind| Violation { step_index, kind })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub final_state: WorldState,
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    pub fn is_valid(&self) -> bool {
        self.violations.is_empty()
    }
}

/// Simulates `steps` from `scene`. A violating step is recorded and skipped;
/// simulation continues from the unchanged state.
pub fn validate_plan(scene: &SceneDescription, steps: &[TaskStep]) -> ValidationReport {
    let mut state = WorldState::from_scene(scene);
    let mut violations = Vec::new();
    for (index, step) in steps.iter().enumerate() {
        match apply_step(&state, step, index) {
            Ok(next) => state = next,
            Err(v) => violations.push(v),
        }
    }
    ValidationReport {
        final_state: state,
        violations,
    }
}

/// Validated plan with the scenes before and after execution.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlanDocument {
    pub schema_version: String,
    pub instruction: String,
    pub scene_before: SceneDescription,
    pub scene_after: SceneDescription,
    pub steps: Vec<TaskStep>,
    pub summary: String,
}

impl PlanDocument {
    /// Builds the document, refusing plans that do not validate.
    pub fn new(
        instruction: impl Into<String>,
        scene_before: SceneDescription,
        steps: Vec<TaskStep>,
        summary: impl Into<String>,
    ) -> Result<Self, Vec<Violation>> {
        let report = validate_plan(&scene_before, &steps);
        if !report.is_valid() {
            return Err(report.violations);
        }
        Ok(PlanDocument {
            schema_version: crate::compiler::SCHEMA_VERSION.to_string(),
            instruction: instruction.into(),
            scene_after: report.final_state.describe(&scene_before),
            scene_before,
            steps,
            summary: summary.into(),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn step(s: &str) -> TaskStep {
        s.parse().unwrap()
    }

    fn juice_scene() -> SceneDescription {
        SceneDescription {
            objects: vec![
                SceneObject { name: "juice".into(), graspable: true },
                SceneObject { name: "bottom shelf".into(), graspable: false },
                SceneObject { name: "top shelf".into(), graspable: false },
            ],
            relations: vec![Relation {
                subject: "juice".into(),
                relation: "on".into(),
                object: "bottom shelf".into(),
            }],
            rationale: String::new(),
        }
    }

    #[test]
    fn grab_sets_holding() {
        let state = WorldState::from_scene(&juice_scene());
        let next = state.apply(&step("Grab(juice)")).unwrap();
        assert!(next.is_holding("juice"));
    }

    #[test]
    fn grab_while_holding_violates() {
        let mut scene = juice_scene();
        scene.objects.push(SceneObject { name: "cup".into(), graspable: true });
        let state = WorldState::from_scene(&scene).apply(&step("Grab(juice)")).unwrap();
        let err = state.apply(&step("Grab(cup)")).unwrap_err();
        assert!(matches!(err, ViolationKind::PreconditionViolation { .. }));
    }

    #[test]
    fn move_hand_leaves_state_unchanged() {
        let state = WorldState::from_scene(&juice_scene());
        assert_eq!(state.apply(&step("MoveHand(top shelf)")).unwrap(), state);
    }

    #[test]
    fn juice_relocation_is_valid() {
        let steps: Vec<_> = [
            "Grab(juice)",
            "PickUp(juice)",
            "MoveHand(top shelf)",
            "Put(juice, top shelf)",
            "Release(juice)",
        ]
        .iter()
        .map(|s| step(s))
        .collect();
        let report = validate_plan(&juice_scene(), &steps);
        assert!(report.is_valid(), "{:?}", report.violations);
        assert_eq!(report.final_state.holding, None);
        assert!(report
            .final_state
            .on_relations
            .contains_key(&("juice".to_string(), "top shelf".to_string())));
        assert!(!report
            .final_state
            .on_relations
            .contains_key(&("juice".to_string(), "bottom shelf".to_string())));
    }

    #[test]
    fn release_without_holding_reports_index_zero() {
        let mut scene = juice_scene();
        scene.objects.push(SceneObject { name: "can".into(), graspable: true });
        let report = validate_plan(&scene, &[step("Release(can)")]);
        assert_eq!(report.violations.len(), 1);
        assert_eq!(report.violations[0].step_index, 0);
    }

    #[test]
    fn empty_plan_keeps_initial_state() {
        let scene = juice_scene();
        let report = validate_plan(&scene, &[]);
        assert!(report.is_valid());
        assert_eq!(report.final_state, WorldState::from_scene(&scene));
    }

    #[test]
    fn unknown_object_is_reported() {
        let report = validate_plan(&juice_scene(), &[step("Grab(apple)")]);
        assert_eq!(
            report.violations[0].kind,
            ViolationKind::UnknownObject { name: "apple".into() }
        );
    }

    #[test]
    fn names_match_case_insensitively() {
        let report = validate_plan(&juice_scene(), &[step("Grab( Juice )"), step("Release(JUICE)")]);
        assert!(report.is_valid());
    }

    #[test]
    fn rotate_toggles_articulation_on_the_manipulated_object() {
        let scene = SceneDescription {
            objects: vec![SceneObject { name: "fridge handle".into(), graspable: true }],
            relations: vec![],
            rationale: String::new(),
        };
        let steps = [step("Grab(fridge handle)"), step("Rotate(fridge handle)")];
        let report = validate_plan(&scene, &steps);
        assert_eq!(report.final_state.articulation_of("fridge handle"), Articulation::Open);
        let mut twice = steps.to_vec();
        twice.push(step("Slide(fridge handle)"));
        let report = validate_plan(&scene, &twice);
        assert_eq!(report.final_state.articulation_of("fridge handle"), Articulation::Closed);
    }

    #[test]
    fn parse_rejects_unknown_action_and_bad_arity() {
        assert_eq!(
            "Throw(can)".parse::<TaskStep>().unwrap_err(),
            StepParseError::UnknownAction(UnknownAction("Throw".into()))
        );
        assert!(matches!(
            "Put(juice)".parse::<TaskStep>().unwrap_err(),
            StepParseError::Arity { expected: 2, found: 1, .. }
        ));
        assert!(matches!(
            "Grab()".parse::<TaskStep>().unwrap_err(),
            StepParseError::Arity { expected: 1, found: 0, .. }
        ));
        assert!(matches!("Grab juice".parse::<TaskStep>(), Err(StepParseError::Malformed(_))));
        assert_eq!("move_hand(x)".parse::<TaskStep>().unwrap().action, ActionKind::MoveHand);
    }

    #[test]
    fn describe_reflects_simulation() {
        let steps: Vec<_> = ["Grab(juice)", "PickUp(juice)", "Put(juice, top shelf)", "Release(juice)"]
            .iter()
            .map(|s| step(s))
            .collect();
        let report = validate_plan(&juice_scene(), &steps);
        let after = report.final_state.describe(&juice_scene());
        assert_eq!(
            after.relations,
            vec![Relation { subject: "juice".into(), relation: "on".into(), object: "top shelf".into() }]
        );
        assert!(after.validate().is_ok());
    }

    #[test]
    fn scene_validation() {
        assert_eq!(SceneDescription::default().validate(), Err(SceneError::Empty));
        let mut dup = juice_scene();
        dup.objects.push(SceneObject { name: "Juice".into(), graspable: true });
        assert!(matches!(dup.validate(), Err(SceneError::DuplicateObject(_))));
        let mut dangling = juice_scene();
        dangling.relations[0].object = "table".into();
        assert!(matches!(dangling.validate(), Err(SceneError::DanglingRelation(_))));
    }
}
