//! Per-task affordance extraction from the hand trajectory.

use serde::{Deserialize, Serialize};

use super::geometry::{fit_rotation, fit_slide, rdp_indices, surface_normal, RotationFit, SlideFit};
use super::quantize::quantize_direction;
use super::GroundingError;
use crate::perception::{DetectionStream, Vec3};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Side {
    Before,
    After,
}

/// Hand positions for the frames in `[start, end]`.
fn positions(stream: &DetectionStream, start: usize, end: usize) -> Vec<(usize, Vec3)> {
    stream.hand_trajectory(start, end)
}

/// Mean displacement of the hand over `window` frames on one side of
/// `frame`, normalized and quantized.
pub fn extract_direction(
    stream: &DetectionStream,
    frame: usize,
    window: usize,
    side: Side,
) -> Result<Vec3, GroundingError> {
    let (start, end) = match side {
        Side::Before => (frame.saturating_sub(window), frame),
        Side::After => (frame, frame + window),
    };
    let traj = positions(stream, start, end);
    if traj.len() < 2 {
        return Err(GroundingError::InsufficientTrajectory { needed: 2, found: traj.len() });
    }
    let sum = traj.windows(2).fold(Vec3::zeros(), |acc, w| acc + (w[1].1 - w[0].1));
    let mean = sum / (traj.len() - 1) as f64;
    quantize_direction(&mean).map_err(|_| GroundingError::InsufficientTrajectory { needed: 2, found: 1 })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Waypoint {
    pub frame_index: usize,
    pub position: Vec3,
}

/// RDP-simplified hand path over `[start, end]`, endpoints included.
pub fn extract_waypoints(
    stream: &DetectionStream,
    start: usize,
    end: usize,
    epsilon: f64,
) -> Result<Vec<Waypoint>, GroundingError> {
    let traj = positions(stream, start, end);
    if traj.len() < 2 {
        return Err(GroundingError::InsufficientTrajectory { needed: 2, found: traj.len() });
    }
    let pts: Vec<Vec3> = traj.iter().map(|p| p.1).collect();
    Ok(rdp_indices(&pts, epsilon)
        .into_iter()
        .map(|i| Waypoint { frame_index: traj[i].0, position: traj[i].1 })
        .collect())
}

pub fn extract_rotation(
    stream: &DetectionStream,
    start: usize,
    end: usize,
    min_radius: f64,
) -> Result<RotationFit, GroundingError> {
    let pts: Vec<Vec3> = positions(stream, start, end).into_iter().map(|p| p.1).collect();
    fit_rotation(&pts, min_radius)
}

pub fn extract_slide(stream: &DetectionStream, start: usize, end: usize) -> Result<SlideFit, GroundingError> {
    let pts: Vec<Vec3> = positions(stream, start, end).into_iter().map(|p| p.1).collect();
    fit_slide(&pts)
}

pub fn extract_surface_normal(stream: &DetectionStream, start: usize, end: usize) -> Result<Vec3, GroundingError> {
    let pts: Vec<Vec3> = positions(stream, start, end).into_iter().map(|p| p.1).collect();
    surface_normal(&pts)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PostureSample {
    pub frame_index: usize,
    /// Frame whose skeleton was used; differs when the exact frame had none.
    pub source_frame: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub upper_arm: Option<Vec3>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub forearm: Option<Vec3>,
}

/// Quantized upper-arm and forearm directions at `frame`, using the nearest
/// skeleton within `window` frames. Missing data yields warnings, not errors.
pub fn encode_posture(stream: &DetectionStream, frame: usize, window: usize) -> (Option<PostureSample>, Vec<String>) {
    let mut warnings = Vec::new();
    let nearest = stream
        .frames_in(frame.saturating_sub(window), frame + window)
        .iter()
        .filter(|f| f.skeleton.is_some())
        .min_by_key(|f| (f.frame_index.abs_diff(frame), f.frame_index));
    let Some(source) = nearest else {
        warnings.push(format!("no skeleton within {window} frames of frame {frame}; posture omitted"));
        return (None, warnings);
    };
    let s = source.skeleton.expect("filtered");
    let upper_arm = quantize_direction(&(s.elbow - s.shoulder)).ok();
    if upper_arm.is_none() {
        warnings.push(format!("frame {}: elbow coincides with shoulder; upper arm omitted", source.frame_index));
    }
    let forearm = quantize_direction(&(s.wrist - s.elbow)).ok();
    if forearm.is_none() {
        warnings.push(format!("frame {}: wrist coincides with elbow; forearm omitted", source.frame_index));
    }
    (Some(PostureSample { frame_index: frame, source_frame: source.frame_index, upper_arm, forearm }), warnings)
}
