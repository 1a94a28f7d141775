use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::GroundingError;
use crate::perception::{DetectionFrame, DetectionStream};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ClipKind {
    Grasp,
    Release,
    Other,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClipSegment {
    pub start_frame: usize,
    pub end_frame: usize,
    pub kind: ClipKind,
}

/// Tiles `[0, frame_count)` into clips of `clip_length` frames; the last
/// clip may be shorter. Kinds start as `Other`.
pub fn segment_clips(frame_count: usize, clip_length: usize) -> Result<Vec<ClipSegment>, GroundingError> {
    if clip_length < 2 {
        return Err(GroundingError::InvalidArgument(format!(
            "clip length must be at least 2 frames, got {clip_length}"
        )));
    }
    Ok((0..frame_count)
        .step_by(clip_length)
        .map(|start| ClipSegment {
            start_frame: start,
            end_frame: (start + clip_length - 1).min(frame_count - 1),
            kind: ClipKind::Other,
        })
        .collect())
}

fn holding(frame: &DetectionFrame) -> Option<bool> {
    frame.hand_state.as_ref().map(|s| s.holding)
}

/// Compares hand state at the first and last frames of the clip, using the
/// nearest frame inside the clip that has a hand state.
pub fn classify_clip(clip: &ClipSegment, stream: &DetectionStream) -> ClipKind {
    let frames = stream.frames_in(clip.start_frame, clip.end_frame);
    let first = frames.iter().find_map(holding);
    let last = frames.iter().rev().find_map(holding);
    match (first, last) {
        (Some(false), Some(true)) => ClipKind::Grasp,
        (Some(true), Some(false)) => ClipKind::Release,
        _ => ClipKind::Other,
    }
}

pub fn classify_clips(stream: &DetectionStream, clip_length: usize) -> Result<Vec<ClipSegment>, GroundingError> {
    let mut clips = segment_clips(stream.header.frame_count, clip_length)?;
    clips.par_iter_mut().for_each(|c| c.kind = classify_clip(c, stream));
    Ok(clips)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::perception::{HandState, StreamHeader};

    fn bounds(clips: &[ClipSegment]) -> Vec<(usize, usize)> {
        clips.iter().map(|c| (c.start_frame, c.end_frame)).collect()
    }

    #[test]
    fn tiling() {
        assert_eq!(bounds(&segment_clips(100, 30).unwrap()), vec![(0, 29), (30, 59), (60, 89), (90, 99)]);
        assert_eq!(bounds(&segment_clips(10, 10).unwrap()), vec![(0, 9)]);
        assert!(segment_clips(10, 1).is_err());
    }

    fn stream(states: &[Option<bool>]) -> DetectionStream {
        let header = StreamHeader { width: 10, height: 10, fps: 10.0, frame_count: states.len(), intrinsics: None };
        let frames = states
            .iter()
            .enumerate()
            .map(|(i, s)| {
                let mut f = DetectionFrame::new(i, i as u64 * 100);
                f.hand_state = s.map(|holding| HandState { holding, grasp_type: None });
                f
            })
            .collect();
        DetectionStream::new(header, frames).unwrap()
    }

    fn kind(states: &[Option<bool>]) -> ClipKind {
        let s = stream(states);
        classify_clip(&ClipSegment { start_frame: 0, end_frame: states.len() - 1, kind: ClipKind::Other }, &s)
    }

    #[test]
    fn classification() {
        assert_eq!(kind(&[Some(false), Some(false), Some(true)]), ClipKind::Grasp);
        assert_eq!(kind(&[Some(true), Some(true), Some(false)]), ClipKind::Release);
        assert_eq!(kind(&[Some(true), Some(false), Some(true)]), ClipKind::Other);
        assert_eq!(kind(&[None, None, None]), ClipKind::Other);
        // nearest observed frames stand in for missing endpoints
        assert_eq!(kind(&[None, Some(false), Some(true), None]), ClipKind::Grasp);
    }
}
