//! Plan-quality evaluation: normalized Levenshtein similarity between
//! planned and annotated action sequences, the planner ablation, and
//! failure-taxonomy tallies.

use std::collections::BTreeMap;
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::gateway::{load_frame, ScriptedTransport, Transport, DEFAULT_MAX_EDGE, DEFAULT_TOKEN_BUDGET};
use crate::planner::{InstructionSource, InstructionText, PlannerError, PlannerOutput, SymbolicPlanner};
use crate::task_model::{object_key, ActionKind, TaskStep};

/// Reported means and standard deviations for the three pipelines over 58
/// videos. Reference values for live-mode reruns only.
pub const REFERENCE_PLANNER: (f64, f64) = (0.76, 0.16);
pub const REFERENCE_PLANNER_FB: (f64, f64) = (0.87, 0.12);
pub const REFERENCE_PLANNER_SA_FB: (f64, f64) = (0.90, 0.11);
pub const REFERENCE_VIDEO_COUNT: usize = 58;
/// Fraction of video-analyzer transcriptions judged valid.
pub const REFERENCE_VALID_FRACTION: f64 = 0.207;

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("io error on {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("malformed {path}: {reason}")]
    Format { path: PathBuf, reason: String },
    #[error("no video in the corpus could be scored")]
    NothingScored,
}

/// Unit-cost edit distance under an arbitrary equality.
pub fn levenshtein_by<T>(a: &[T], b: &[T], eq: impl Fn(&T, &T) -> bool) -> usize {
    let mut prev: Vec<usize> = (0..=b.len()).collect();
    let mut cur = vec![0; b.len() + 1];
    for (i, x) in a.iter().enumerate() {
        cur[0] = i + 1;
        for (j, y) in b.iter().enumerate() {
            let sub = prev[j] + usize::from(!eq(x, y));
            cur[j + 1] = sub.min(prev[j + 1] + 1).min(cur[j] + 1);
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    prev[b.len()]
}

pub fn levenshtein<T: PartialEq>(a: &[T], b: &[T]) -> usize {
    levenshtein_by(a, b, |x, y| x == y)
}

/// One token of a plan: the action and, optionally, its first argument.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Token {
    pub action: ActionKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub arg: Option<String>,
}

impl Token {
    pub fn from_step(step: &TaskStep) -> Self {
        Token { action: step.action, arg: step.args.first().cloned() }
    }

    /// Action-only comparison, or action plus case-folded first argument.
    pub fn matches(&self, other: &Token, strict: bool) -> bool {
        self.action == other.action
            && (!strict || self.arg.as_deref().map(object_key) == other.arg.as_deref().map(object_key))
    }
}

impl fmt::Display for Token {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.arg {
            Some(a) => write!(f, "{}({a})", self.action),
            None => write!(f, "{}", self.action),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Normalizer {
    /// Divide by the longer sequence length.
    #[default]
    MaxLength,
    /// Divide by the summed lengths.
    SumOfLengths,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct MetricOptions {
    pub strict: bool,
    pub normalizer: Normalizer,
}

pub fn token_distance(a: &[Token], b: &[Token], strict: bool) -> usize {
    levenshtein_by(a, b, |x, y| x.matches(y, strict))
}

/// `1 - d / n` with `n` from the normalizer; two empty sequences score 1.
pub fn similarity_with(a: &[Token], b: &[Token], options: MetricOptions) -> f64 {
    let n = match options.normalizer {
        Normalizer::MaxLength => a.len().max(b.len()),
        Normalizer::SumOfLengths => a.len() + b.len(),
    };
    if n == 0 {
        return 1.0;
    }
    1.0 - token_distance(a, b, options.strict) as f64 / n as f64
}

/// Action-only similarity with max-length normalization.
pub fn similarity(a: &[ActionKind], b: &[ActionKind]) -> f64 {
    let n = a.len().max(b.len());
    if n == 0 {
        return 1.0;
    }
    1.0 - levenshtein(a, b) as f64 / n as f64
}

/// Ground-truth action labels for one video.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AnnotatedSequence {
    pub video_id: String,
    pub actions: Vec<ActionKind>,
    /// Object arguments per action; empty when unannotated.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub args: Vec<Vec<String>>,
}

impl AnnotatedSequence {
    pub fn tokens(&self) -> Vec<Token> {
        self.actions
            .iter()
            .enumerate()
            .map(|(i, &action)| Token { action, arg: self.args.get(i).and_then(|a| a.first().cloned()) })
            .collect()
    }

    fn check(&self, path: &Path) -> Result<(), EvalError> {
        if !self.args.is_empty() && self.args.len() != self.actions.len() {
            return Err(EvalError::Format {
                path: path.to_path_buf(),
                reason: format!("{} actions but {} argument lists", self.actions.len(), self.args.len()),
            });
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TaxonomyLabel {
    Valid,
    IllusoryObject,
    IllusoryMotion,
    VisuallyDifficult,
}

impl TaxonomyLabel {
    pub const ALL: [TaxonomyLabel; 4] = [
        TaxonomyLabel::Valid,
        TaxonomyLabel::IllusoryObject,
        TaxonomyLabel::IllusoryMotion,
        TaxonomyLabel::VisuallyDifficult,
    ];
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaxonomyTally {
    pub total: usize,
    pub counts: BTreeMap<TaxonomyLabel, usize>,
    /// Fractions of `total`; all zero for an empty input.
    pub fractions: BTreeMap<TaxonomyLabel, f64>,
}

pub fn tally_taxonomy(labels: &[TaxonomyLabel]) -> TaxonomyTally {
    let mut counts: BTreeMap<TaxonomyLabel, usize> = TaxonomyLabel::ALL.iter().map(|&l| (l, 0)).collect();
    for l in labels {
        *counts.entry(*l).or_default() += 1;
    }
    let total = labels.len();
    let fractions = counts
        .iter()
        .map(|(&l, &c)| (l, if total == 0 { 0.0 } else { c as f64 / total as f64 }))
        .collect();
    TaxonomyTally { total, counts, fractions }
}

/// A model answer for one prompting stage, plus the human text sent with it.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct StageFixture {
    /// Instruction text for the planner stage, feedback text for the
    /// feedback stage; unused by the scene stage.
    #[serde(default)]
    pub input: String,
    /// Recorded model response; `None` when the stage must go to a transport.
    #[serde(default)]
    pub response: Option<String>,
    /// Response to use instead when the planner prompt carried a scene
    /// analysis, whose different prompt would draw a different answer.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub response_with_scene: Option<String>,
    /// First frame for the scene stage, relative to the fixture file.
    #[serde(default)]
    pub image: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CorpusEntry {
    pub video_id: String,
    pub annotation_path: PathBuf,
    #[serde(default)]
    pub instruction_fixture: Option<PathBuf>,
    #[serde(default)]
    pub scene_fixture: Option<PathBuf>,
    #[serde(default)]
    pub feedback_fixture: Option<PathBuf>,
}

/// Entries with paths resolved against the manifest directory.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Corpus {
    pub entries: Vec<CorpusEntry>,
}

impl Corpus {
    /// Reads a JSON array of entries, or JSON Lines with one entry per line.
    pub fn load(manifest: &Path) -> Result<Self, EvalError> {
        let text = read(manifest)?;
        let base = manifest.parent().unwrap_or(Path::new("."));
        let format = |reason: String| EvalError::Format { path: manifest.to_path_buf(), reason };
        let mut entries: Vec<CorpusEntry> = if text.trim_start().starts_with('[') {
            serde_json::from_str(&text).map_err(|e| format(e.to_string()))?
        } else {
            text.lines()
                .enumerate()
                .filter(|(_, l)| !l.trim().is_empty())
                .map(|(i, l)| serde_json::from_str(l).map_err(|e| format(format!("line {}: {e}", i + 1))))
                .collect::<Result<_, _>>()?
        };
        for e in &mut entries {
            e.annotation_path = base.join(&e.annotation_path);
            for p in [&mut e.instruction_fixture, &mut e.scene_fixture, &mut e.feedback_fixture] {
                if let Some(p) = p {
                    *p = base.join(&*p);
                }
            }
        }
        Ok(Corpus { entries })
    }
}

fn read(path: &Path) -> Result<String, EvalError> {
    fs::read_to_string(path).map_err(|source| EvalError::Io { path: path.to_path_buf(), source })
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T, EvalError> {
    serde_json::from_str(&read(path)?).map_err(|e| EvalError::Format { path: path.to_path_buf(), reason: e.to_string() })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AblationMode {
    Planner,
    PlannerFb,
    PlannerSaFb,
}

impl AblationMode {
    pub const ALL: [AblationMode; 3] = [AblationMode::Planner, AblationMode::PlannerFb, AblationMode::PlannerSaFb];

    pub fn label(self) -> &'static str {
        match self {
            AblationMode::Planner => "Task planner",
            AblationMode::PlannerFb => "Task planner + FB",
            AblationMode::PlannerSaFb => "Task planner + SA + FB",
        }
    }

    pub fn reference(self) -> (f64, f64) {
        match self {
            AblationMode::Planner => REFERENCE_PLANNER,
            AblationMode::PlannerFb => REFERENCE_PLANNER_FB,
            AblationMode::PlannerSaFb => REFERENCE_PLANNER_SA_FB,
        }
    }

    fn uses_feedback(self) -> bool {
        self != AblationMode::Planner
    }

    fn uses_scene(self) -> bool {
        self == AblationMode::PlannerSaFb
    }
}

impl std::str::FromStr for AblationMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "planner" => Ok(AblationMode::Planner),
            "planner_fb" => Ok(AblationMode::PlannerFb),
            "planner_sa_fb" => Ok(AblationMode::PlannerSaFb),
            other => Err(format!("unknown ablation mode `{other}`")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VideoScore {
    pub video_id: String,
    pub similarity: f64,
    pub distance: usize,
    pub predicted: Vec<Token>,
    pub expected: Vec<Token>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SkippedVideo {
    pub video_id: String,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationReport {
    pub mode: AblationMode,
    pub metric: MetricOptions,
    pub mean: f64,
    /// Sample standard deviation; 0 with fewer than two scored videos.
    pub stddev: f64,
    pub scores: Vec<VideoScore>,
    pub skipped: Vec<SkippedVideo>,
}

pub fn mean_and_sample_stddev(values: &[f64]) -> (f64, f64) {
    if values.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

/// Which transport answers a video's model calls.
pub enum TransportSource<'a> {
    /// Replays the `response` of each stage fixture in order.
    Scripted,
    /// A caller-supplied transport per video (live, record or replay).
    PerVideo(&'a (dyn Fn(&CorpusEntry) -> Box<dyn Transport> + Send + Sync)),
}

enum Outcome {
    Scored(VideoScore),
    Skipped(SkippedVideo),
}

struct Stages {
    instruction: StageFixture,
    scene: Option<(StageFixture, PathBuf)>,
    feedback: Option<StageFixture>,
}

fn load_stages(entry: &CorpusEntry, mode: AblationMode) -> Result<Stages, String> {
    let required = |p: &Option<PathBuf>, what: &str| -> Result<(StageFixture, PathBuf), String> {
        let path = p.as_ref().ok_or_else(|| format!("no {what} fixture"))?;
        let f: StageFixture = read_json(path).map_err(|e| e.to_string())?;
        Ok((f, path.clone()))
    };
    let instruction = required(&entry.instruction_fixture, "instruction")?.0;
    let scene = if mode.uses_scene() { Some(required(&entry.scene_fixture, "scene")?) } else { None };
    let feedback = if mode.uses_feedback() { Some(required(&entry.feedback_fixture, "feedback")?.0) } else { None };
    Ok(Stages { instruction, scene, feedback })
}

fn plan_video(
    planner: &SymbolicPlanner,
    stages: &Stages,
    transport: &dyn Transport,
) -> Result<PlannerOutput, String> {
    let err = |e: PlannerError| e.to_string();
    let instruction = InstructionText::new(stages.instruction.input.clone(), InstructionSource::HumanEdited).map_err(err)?;
    let mut session = planner.new_session(DEFAULT_TOKEN_BUDGET);
    let scene = match &stages.scene {
        Some((fixture, path)) => {
            let rel = fixture.image.as_ref().ok_or("scene fixture names no image")?;
            let image_path = path.parent().unwrap_or(Path::new(".")).join(rel);
            let image = load_frame(&image_path, DEFAULT_MAX_EDGE).map_err(|e| e.to_string())?;
            Some(planner.analyze_scene(&image, &instruction, &mut session, transport).map_err(err)?)
        }
        None => None,
    };
    let mut plan = planner.plan_tasks(&instruction, scene.as_ref(), &mut session, transport).map_err(err)?;
    if let Some(fb) = &stages.feedback {
        plan = planner.apply_feedback(&fb.input, &plan, scene.as_ref(), &mut session, transport).map_err(err)?;
    }
    Ok(plan)
}

fn evaluate_entry(
    entry: &CorpusEntry,
    mode: AblationMode,
    metric: MetricOptions,
    planner: &SymbolicPlanner,
    source: &TransportSource<'_>,
) -> Outcome {
    let skip = |reason: String| Outcome::Skipped(SkippedVideo { video_id: entry.video_id.clone(), reason });
    let annotation: AnnotatedSequence = match read_json(&entry.annotation_path) {
        Ok(a) => a,
        Err(e) => return skip(e.to_string()),
    };
    if let Err(e) = annotation.check(&entry.annotation_path) {
        return skip(e.to_string());
    }
    let stages = match load_stages(entry, mode) {
        Ok(s) => s,
        Err(e) => return skip(e),
    };
    let transport: Box<dyn Transport> = match source {
        TransportSource::Scripted => {
            let mut responses = Vec::new();
            let ordered = [
                stages.scene.as_ref().map(|s| (&s.0, "scene")),
                Some((&stages.instruction, "instruction")),
                stages.feedback.as_ref().map(|f| (f, "feedback")),
            ];
            for (fixture, what) in ordered.into_iter().flatten() {
                let scripted = match (&fixture.response_with_scene, mode.uses_scene() && what != "scene") {
                    (Some(r), true) => Some(r),
                    _ => fixture.response.as_ref(),
                };
                match scripted {
                    Some(r) => responses.push(r.clone()),
                    None => return skip(format!("{what} fixture has no recorded response")),
                }
            }
            Box::new(ScriptedTransport::new(responses))
        }
        TransportSource::PerVideo(make) => make(entry),
    };
    let plan = match plan_video(planner, &stages, transport.as_ref()) {
        Ok(p) => p,
        Err(e) => return skip(e),
    };
    let predicted: Vec<Token> = plan.steps.iter().map(Token::from_step).collect();
    let expected = annotation.tokens();
    Outcome::Scored(VideoScore {
        video_id: entry.video_id.clone(),
        similarity: similarity_with(&predicted, &expected, metric),
        distance: token_distance(&predicted, &expected, metric.strict),
        predicted,
        expected,
    })
}

/// Scores every video of the corpus in one pipeline mode. Videos are
/// evaluated in parallel; results keep manifest order.
pub fn run_ablation(
    corpus: &Corpus,
    mode: AblationMode,
    metric: MetricOptions,
    planner: &SymbolicPlanner,
    source: &TransportSource<'_>,
) -> Result<AblationReport, EvalError> {
    let outcomes: Vec<Outcome> =
        corpus.entries.par_iter().map(|e| evaluate_entry(e, mode, metric, planner, source)).collect();
    let mut scores = Vec::new();
    let mut skipped = Vec::new();
    for o in outcomes {
        match o {
            Outcome::Scored(s) => scores.push(s),
            Outcome::Skipped(s) => skipped.push(s),
        }
    }
    if scores.is_empty() {
        return Err(EvalError::NothingScored);
    }
    let values: Vec<f64> = scores.iter().map(|s| s.similarity).collect();
    let (mean, stddev) = mean_and_sample_stddev(&values);
    Ok(AblationReport { mode, metric, mean, stddev, scores, skipped })
}

/// Plain-text table with one row per pipeline.
pub fn format_table(reports: &[AblationReport]) -> String {
    let width = AblationMode::ALL.iter().map(|m| m.label().len()).max().unwrap_or(0).max("Pipeline".len());
    let mut out = format!("{:<width$}  {:>5}  {:>18}  {:>6}\n", "Pipeline", "Mean", "Standard deviation", "Videos");
    out.push_str(&format!("{}\n", "-".repeat(width + 37)));
    for r in reports {
        out.push_str(&format!(
            "{:<width$}  {:>5.2}  {:>18.2}  {:>6}\n",
            r.mode.label(),
            r.mean,
            r.stddev,
            r.scores.len()
        ));
    }
    out.push_str("SA: Scene analyzer, FB: Human corrective feedback.\n");
    out
}
