//! Grounding of the task plan in the demonstration: clip classification,
//! grasp/release anchors, alignment with the plan, and per-task affordances.

mod align;
mod anchors;
mod clips;
mod extract;
mod geometry;
mod quantize;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use align::{align_anchors, partition_by_arc_length, AnchorMismatch, PartitionShares, StepAlignment, StepGrounding};
pub use anchors::{
    detect_anchors, identify_grasped_object, locate_anchor, score_candidates, AnchorEvent, AnchorKind,
    CandidateScore, Position,
};
pub use clips::{classify_clip, classify_clips, segment_clips, ClipKind, ClipSegment};
pub use extract::{
    encode_posture, extract_direction, extract_rotation, extract_slide, extract_surface_normal, extract_waypoints,
    PostureSample, Side, Waypoint,
};
pub use geometry::{
    fit_plane, fit_rotation, fit_slide, kasa_fit, point_segment_distance, rdp, rdp_indices, surface_normal,
    PlaneFit, RotationFit, SlideFit,
};
pub use quantize::{code_vector, codebook, quantize_code, quantize_direction};

use crate::canonical::{sha256_hex, to_canonical_string, CanonicalFormat};
use crate::perception::{DetectionStream, PositionSource, Vec3};
use crate::task_model::{object_key, ActionKind, TaskStep};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum GroundingError {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("zero-length direction vector")]
    ZeroVector,
    #[error("need {needed} hand observations, found {found}")]
    InsufficientTrajectory { needed: usize, found: usize },
    #[error("degenerate geometry: {0}")]
    DegenerateGeometry(String),
    #[error("no candidate object detected in frames {start_frame}..={end_frame}")]
    NoCandidateDetected { start_frame: usize, end_frame: usize },
    #[error(
        "plan expects {} grasps and {} releases, video shows {} and {}",
        .0.expected_grasps, .0.expected_releases, .0.found_grasps, .0.found_releases
    )]
    AnchorCountMismatch(AnchorMismatch),
    #[error("anchors do not alternate grasp/release in time")]
    AnchorOrder,
}

pub const DEFAULT_GRASP_TAXONOMY: [&str; 4] = ["power", "precision", "lateral", "hook"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GroundingConfig {
    pub clip_length_s: f64,
    /// Overrides `clip_length_s` when set.
    pub clip_length_frames: Option<usize>,
    pub direction_window: usize,
    /// RDP tolerance for metric trajectories, meters.
    pub rdp_epsilon: f64,
    /// RDP tolerance for pixel-only trajectories.
    pub rdp_epsilon_px: f64,
    pub shares: PartitionShares,
    pub default_grasp_type: String,
    pub grasp_taxonomy: Vec<String>,
    pub posture_window: usize,
    pub min_radius: f64,
    pub min_radius_px: f64,
}

impl Default for GroundingConfig {
    fn default() -> Self {
        GroundingConfig {
            clip_length_s: 2.0,
            clip_length_frames: None,
            direction_window: 10,
            rdp_epsilon: 0.01,
            rdp_epsilon_px: 4.0,
            shares: PartitionShares::default(),
            default_grasp_type: "power".into(),
            grasp_taxonomy: DEFAULT_GRASP_TAXONOMY.iter().map(|s| s.to_string()).collect(),
            posture_window: 5,
            min_radius: 1e-3,
            min_radius_px: 1.0,
        }
    }
}

impl GroundingConfig {
    pub fn clip_length(&self, fps: f64) -> usize {
        self.clip_length_frames.unwrap_or_else(|| (fps * self.clip_length_s).round().max(0.0) as usize)
    }

    /// SHA-256 of the canonical JSON form.
    pub fn digest(&self) -> String {
        let value = serde_json::to_value(self).expect("config serializes");
        sha256_hex(to_canonical_string(&value, CanonicalFormat::COMPACT).as_bytes())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum AffordancePayload {
    Grab { approach_direction: Vec3, grasp_type: String },
    MoveHand { waypoints: Vec<Vec3>, waypoint_frames: Vec<usize> },
    Release { withdrawal_direction: Vec3 },
    PickUp { departure_direction: Vec3 },
    Put { approach_direction: Vec3 },
    Rotate { axis: Vec3, center: Vec3, angle: f64, radius: f64 },
    Slide { displacement: Vec3, principal_magnitude: f64 },
    MoveOnSurface { surface_normal: Vec3, quantized_normal: Vec3 },
}

impl AffordancePayload {
    pub fn action(&self) -> ActionKind {
        match self {
            AffordancePayload::Grab { .. } => ActionKind::Grab,
            AffordancePayload::MoveHand { .. } => ActionKind::MoveHand,
            AffordancePayload::Release { .. } => ActionKind::Release,
            AffordancePayload::PickUp { .. } => ActionKind::PickUp,
            AffordancePayload::Put { .. } => ActionKind::Put,
            AffordancePayload::Rotate { .. } => ActionKind::Rotate,
            AffordancePayload::Slide { .. } => ActionKind::Slide,
            AffordancePayload::MoveOnSurface { .. } => ActionKind::MoveOnSurface,
        }
    }

    /// Fields that must be unit vectors.
    pub fn unit_vectors(&self) -> Vec<(&'static str, Vec3)> {
        match self {
            AffordancePayload::Grab { approach_direction, .. } => vec![("approach_direction", *approach_direction)],
            AffordancePayload::Release { withdrawal_direction } => vec![("withdrawal_direction", *withdrawal_direction)],
            AffordancePayload::PickUp { departure_direction } => vec![("departure_direction", *departure_direction)],
            AffordancePayload::Put { approach_direction } => vec![("approach_direction", *approach_direction)],
            AffordancePayload::Rotate { axis, .. } => vec![("axis", *axis)],
            AffordancePayload::MoveOnSurface { surface_normal, quantized_normal } => {
                vec![("surface_normal", *surface_normal), ("quantized_normal", *quantized_normal)]
            }
            AffordancePayload::MoveHand { .. } | AffordancePayload::Slide { .. } => Vec::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AffordanceRecord {
    #[serde(flatten)]
    pub payload: AffordancePayload,
    /// Frames the record was extracted from, inclusive.
    pub frames: [usize; 2],
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub posture: Vec<PostureSample>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub warnings: Vec<String>,
}

/// A step's affordance, or the reason it could not be extracted.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum AffordanceSlot {
    Available { record: AffordanceRecord },
    Unavailable { reason: String },
}

impl AffordanceSlot {
    pub fn record(&self) -> Option<&AffordanceRecord> {
        match self {
            AffordanceSlot::Available { record } => Some(record),
            AffordanceSlot::Unavailable { .. } => None,
        }
    }
}

/// Everything grounding produced for a stream and plan: the anchors report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundingReport {
    pub clip_length_frames: usize,
    pub position_source: PositionSource,
    pub clips: Vec<ClipSegment>,
    pub anchors: Vec<AnchorEvent>,
    pub alignment: Vec<StepAlignment>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mismatch: Option<AnchorMismatch>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub alignment_error: Option<String>,
    /// One slot per plan step.
    pub affordances: Vec<AffordanceSlot>,
    pub config_digest: String,
    #[serde(default)]
    pub warnings: Vec<String>,
}

impl GroundingReport {
    /// Alignment failed and a human must decide before compiling.
    pub fn needs_review(&self) -> bool {
        self.alignment_error.is_some()
    }

    /// Copies the affordance slots onto the plan steps.
    pub fn annotate(&self, steps: &[TaskStep]) -> Vec<TaskStep> {
        steps
            .iter()
            .zip(&self.affordances)
            .map(|(s, a)| {
                let mut s = s.clone();
                s.affordance = Some(a.clone());
                s
            })
            .collect()
    }
}

/// Grab arguments of the plan, in order, without duplicates.
pub fn candidate_labels(steps: &[TaskStep]) -> Vec<String> {
    let mut out: Vec<String> = Vec::new();
    for s in steps.iter().filter(|s| s.action == ActionKind::Grab) {
        if !out.iter().any(|o| object_key(o) == object_key(s.arg1())) {
            out.push(s.arg1().to_string());
        }
    }
    out
}

struct Extractor<'a> {
    stream: &'a DetectionStream,
    anchors: &'a [AnchorEvent],
    config: &'a GroundingConfig,
    metric: bool,
}

impl Extractor<'_> {
    fn postures(&self, frames: &[usize], warnings: &mut Vec<String>) -> Vec<PostureSample> {
        if !self.stream.frames.iter().any(|f| f.skeleton.is_some()) {
            warnings.push("stream has no skeleton; posture omitted".into());
            return Vec::new();
        }
        let mut out = Vec::new();
        for &f in frames {
            let (p, w) = encode_posture(self.stream, f, self.config.posture_window);
            warnings.extend(w);
            out.extend(p);
        }
        out
    }

    fn grasp_type(&self, frame: usize, warnings: &mut Vec<String>) -> String {
        let observed = self
            .stream
            .frames_in(frame, frame + self.config.direction_window)
            .iter()
            .find_map(|f| f.hand_state.as_ref().and_then(|s| s.grasp_type.clone()));
        let label = observed.unwrap_or_else(|| self.config.default_grasp_type.clone());
        if !self.config.grasp_taxonomy.iter().any(|t| t.eq_ignore_ascii_case(&label)) {
            warnings.push(format!("grasp type `{label}` is not in the configured taxonomy"));
        }
        label
    }

    fn extract(&self, step: &TaskStep, align: &StepAlignment) -> Result<AffordanceRecord, GroundingError> {
        let window = self.config.direction_window;
        let mut warnings = Vec::new();
        let anchor_frame = |i: Option<usize>, what: &str| {
            i.map(|i| self.anchors[i].frame_index).ok_or_else(|| {
                GroundingError::InvalidArgument(format!("{} is not between a grasp and a release; no {what} anchor", step.action))
            })
        };
        let (payload, frames, posture_frames) = match (step.action, align.grounding) {
            (ActionKind::Grab | ActionKind::Release, StepGrounding::Anchor { anchor_index, frame_index }) => {
                let anchor = &self.anchors[anchor_index];
                if object_key(&anchor.object_label) != object_key(step.arg1()) {
                    warnings.push(format!(
                        "anchor at frame {frame_index} identified `{}`, plan names `{}`",
                        anchor.object_label,
                        step.arg1()
                    ));
                }
                if step.action == ActionKind::Grab {
                    let approach_direction = extract_direction(self.stream, frame_index, window, Side::Before)?;
                    let grasp_type = self.grasp_type(frame_index, &mut warnings);
                    (
                        AffordancePayload::Grab { approach_direction, grasp_type },
                        [frame_index.saturating_sub(window), frame_index],
                        vec![frame_index],
                    )
                } else {
                    let withdrawal_direction = extract_direction(self.stream, frame_index, window, Side::After)?;
                    (
                        AffordancePayload::Release { withdrawal_direction },
                        [frame_index, frame_index + window],
                        vec![frame_index],
                    )
                }
            }
            (ActionKind::PickUp, StepGrounding::Segment { .. }) => {
                let f = anchor_frame(align.grasp_anchor, "grasp")?;
                let departure_direction = extract_direction(self.stream, f, window, Side::After)?;
                (AffordancePayload::PickUp { departure_direction }, [f, f + window], vec![f])
            }
            (ActionKind::Put, StepGrounding::Segment { .. }) => {
                let f = anchor_frame(align.release_anchor, "release")?;
                let approach_direction = extract_direction(self.stream, f, window, Side::Before)?;
                (AffordancePayload::Put { approach_direction }, [f.saturating_sub(window), f], vec![f])
            }
            (ActionKind::MoveHand, StepGrounding::Segment { start_frame, end_frame }) => {
                let epsilon = if self.metric { self.config.rdp_epsilon } else { self.config.rdp_epsilon_px };
                let w = extract_waypoints(self.stream, start_frame, end_frame, epsilon)?;
                let waypoint_frames: Vec<usize> = w.iter().map(|w| w.frame_index).collect();
                (
                    AffordancePayload::MoveHand {
                        waypoints: w.iter().map(|w| w.position).collect(),
                        waypoint_frames: waypoint_frames.clone(),
                    },
                    [start_frame, end_frame],
                    waypoint_frames,
                )
            }
            (ActionKind::Rotate, StepGrounding::Segment { start_frame, end_frame }) => {
                let min_radius = if self.metric { self.config.min_radius } else { self.config.min_radius_px };
                let fit = extract_rotation(self.stream, start_frame, end_frame, min_radius)?;
                (
                    AffordancePayload::Rotate { axis: fit.axis, center: fit.center, angle: fit.angle, radius: fit.radius },
                    [start_frame, end_frame],
                    vec![start_frame, end_frame],
                )
            }
            (ActionKind::Slide, StepGrounding::Segment { start_frame, end_frame }) => {
                let fit = extract_slide(self.stream, start_frame, end_frame)?;
                if fit.displacement.norm() == 0.0 {
                    warnings.push("no net hand motion during the slide".into());
                }
                (
                    AffordancePayload::Slide { displacement: fit.displacement, principal_magnitude: fit.principal_magnitude },
                    [start_frame, end_frame],
                    vec![start_frame, end_frame],
                )
            }
            (ActionKind::MoveOnSurface, StepGrounding::Segment { start_frame, end_frame }) => {
                let n = extract_surface_normal(self.stream, start_frame, end_frame)?;
                (
                    AffordancePayload::MoveOnSurface { surface_normal: n, quantized_normal: quantize_direction(&n)? },
                    [start_frame, end_frame],
                    vec![start_frame, end_frame],
                )
            }
            (action, grounding) => {
                return Err(GroundingError::InvalidArgument(format!("{action} cannot be grounded by {grounding:?}")))
            }
        };
        let posture = self.postures(&posture_frames, &mut warnings);
        Ok(AffordanceRecord { payload, frames, posture, warnings })
    }
}

/// Runs the full grounding pass. Alignment failures are reported in the
/// result, with every slot marked unavailable, rather than returned as errors.
pub fn ground(
    stream: &DetectionStream,
    steps: &[TaskStep],
    config: &GroundingConfig,
) -> Result<GroundingReport, GroundingError> {
    let clip_length = config.clip_length(stream.header.fps);
    let clips = classify_clips(stream, clip_length)?;
    let candidates = candidate_labels(steps);
    let (anchors, mut warnings) = detect_anchors(&clips, stream, &candidates);
    let source = stream.position_source();
    if source == PositionSource::Pixel {
        warnings.push("no depth or skeleton data; affordances are in pixel units".into());
    }
    let mut report = GroundingReport {
        clip_length_frames: clip_length,
        position_source: source,
        clips,
        anchors,
        alignment: Vec::new(),
        mismatch: None,
        alignment_error: None,
        affordances: Vec::new(),
        config_digest: config.digest(),
        warnings,
    };
    match align_anchors(&report.anchors, steps, stream, config.shares) {
        Ok(alignment) => {
            let extractor = Extractor { stream, anchors: &report.anchors, config, metric: source != PositionSource::Pixel };
            report.affordances = steps
                .iter()
                .zip(&alignment)
                .map(|(step, a)| match extractor.extract(step, a) {
                    Ok(record) => AffordanceSlot::Available { record },
                    Err(e) => AffordanceSlot::Unavailable { reason: e.to_string() },
                })
                .collect();
            report.alignment = alignment;
        }
        Err(e) => {
            if let GroundingError::AnchorCountMismatch(m) = &e {
                report.mismatch = Some(m.clone());
            }
            let reason = format!("alignment failed: {e}");
            report.affordances = steps.iter().map(|_| AffordanceSlot::Unavailable { reason: reason.clone() }).collect();
            report.alignment_error = Some(e.to_string());
        }
    }
    Ok(report)
}
