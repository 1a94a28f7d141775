//! Grasped-object identification and grasp/release moment location.

use serde::{Deserialize, Serialize};

use super::clips::{ClipKind, ClipSegment};
use super::GroundingError;
use crate::perception::{DetectionStream, Vec3};
use crate::task_model::object_key;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AnchorKind {
    Grasp,
    Release,
}

/// A 2D pixel position with its 3D lift when depth or skeleton data allow.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Position {
    pub pixel: [f64; 2],
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub world: Option<Vec3>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnchorEvent {
    pub kind: AnchorKind,
    pub frame_index: usize,
    pub hand_position: Position,
    pub object_label: String,
    pub object_position: Position,
    pub distance_px: f64,
    pub clip_index: usize,
}

/// Candidate score: mean hand-object center distance over co-detected frames.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CandidateScore {
    pub label: String,
    pub mean_distance: f64,
    pub mean_confidence: f64,
    pub frames: usize,
}

/// Scores each candidate over the clip; candidates never co-detected with
/// the hand are omitted.
pub fn score_candidates(clip: &ClipSegment, stream: &DetectionStream, candidates: &[String]) -> Vec<CandidateScore> {
    let frames = stream.frames_in(clip.start_frame, clip.end_frame);
    let mut seen: Vec<String> = Vec::new();
    let mut scores = Vec::new();
    for label in candidates {
        let key = object_key(label);
        if seen.contains(&key) {
            continue;
        }
        seen.push(key);
        let (mut dist, mut conf, mut n) = (0.0, 0.0, 0usize);
        for f in frames {
            if let (Some(hand), Some(obj)) = (&f.hand_box, f.object(label)) {
                dist += hand.center_distance(&obj.bbox);
                conf += obj.confidence;
                n += 1;
            }
        }
        if n > 0 {
            scores.push(CandidateScore {
                label: label.clone(),
                mean_distance: dist / n as f64,
                mean_confidence: conf / n as f64,
                frames: n,
            });
        }
    }
    scores
}

/// The candidate with the smallest mean distance to the hand; ties go to
/// higher mean confidence, then to the lexicographically smaller label.
pub fn identify_grasped_object(
    clip: &ClipSegment,
    stream: &DetectionStream,
    candidates: &[String],
) -> Result<String, GroundingError> {
    score_candidates(clip, stream, candidates)
        .into_iter()
        .min_by(|a, b| {
            a.mean_distance
                .total_cmp(&b.mean_distance)
                .then(b.mean_confidence.total_cmp(&a.mean_confidence))
                .then(object_key(&a.label).cmp(&object_key(&b.label)))
        })
        .map(|s| s.label)
        .ok_or_else(|| GroundingError::NoCandidateDetected {
            start_frame: clip.start_frame,
            end_frame: clip.end_frame,
        })
}

/// The frame in the clip where hand and object centers are closest;
/// earliest frame on ties.
pub fn locate_anchor(
    clip: &ClipSegment,
    clip_index: usize,
    stream: &DetectionStream,
    object_label: &str,
) -> Result<AnchorEvent, GroundingError> {
    let kind = match clip.kind {
        ClipKind::Grasp => AnchorKind::Grasp,
        ClipKind::Release => AnchorKind::Release,
        ClipKind::Other => {
            return Err(GroundingError::InvalidArgument("anchors need a grasp or release clip".into()))
        }
    };
    let mut best: Option<(f64, usize)> = None;
    let frames = stream.frames_in(clip.start_frame, clip.end_frame);
    for (i, f) in frames.iter().enumerate() {
        if let (Some(hand), Some(obj)) = (&f.hand_box, f.object(object_label)) {
            let d = hand.center_distance(&obj.bbox);
            if best.is_none_or(|(bd, _)| d < bd) {
                best = Some((d, i));
            }
        }
    }
    let (distance, i) = best.ok_or(GroundingError::NoCandidateDetected {
        start_frame: clip.start_frame,
        end_frame: clip.end_frame,
    })?;
    let frame = &frames[i];
    let hand = frame.hand_box.expect("co-detected");
    let obj = frame.object(object_label).expect("co-detected").bbox;
    let source = stream.position_source();
    Ok(AnchorEvent {
        kind,
        frame_index: frame.frame_index,
        hand_position: Position {
            pixel: hand.center(),
            world: match source {
                crate::perception::PositionSource::Pixel => None,
                s => stream.hand_point(frame, s),
            },
        },
        object_label: object_label.to_string(),
        object_position: Position { pixel: obj.center(), world: stream.lift(frame, &obj) },
        distance_px: distance,
        clip_index,
    })
}

/// Locates an anchor in every grasp and release clip. Grasp clips pick the
/// closest candidate; release clips use the object of the preceding grasp.
pub fn detect_anchors(
    clips: &[ClipSegment],
    stream: &DetectionStream,
    candidates: &[String],
) -> (Vec<AnchorEvent>, Vec<String>) {
    let mut anchors = Vec::new();
    let mut warnings = Vec::new();
    let mut held: Option<String> = None;
    for (i, clip) in clips.iter().enumerate() {
        let label = match clip.kind {
            ClipKind::Other => continue,
            ClipKind::Grasp => identify_grasped_object(clip, stream, candidates),
            ClipKind::Release => match &held {
                Some(h) => Ok(h.clone()),
                None => identify_grasped_object(clip, stream, candidates),
            },
        };
        let anchor = label.and_then(|l| locate_anchor(clip, i, stream, &l));
        match anchor {
            Ok(a) => {
                held = match a.kind {
                    AnchorKind::Grasp => Some(a.object_label.clone()),
                    AnchorKind::Release => None,
                };
                anchors.push(a);
            }
            Err(e) => warnings.push(format!(
                "{:?} clip {}..{}: {e}",
                clip.kind, clip.start_frame, clip.end_frame
            )),
        }
    }
    (anchors, warnings)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::perception::{BBox, Detection, DetectionFrame, StreamHeader};

    /// Hand at the origin side; objects at given x per frame.
    fn stream(objects: &[&[(&str, Option<f64>, f64)]]) -> DetectionStream {
        let header = StreamHeader { width: 1000, height: 100, fps: 10.0, frame_count: objects.len(), intrinsics: None };
        let frames = objects
            .iter()
            .enumerate()
            .map(|(i, objs)| {
                let mut f = DetectionFrame::new(i, i as u64 * 100);
                f.hand_box = Some(BBox::new(100.0, 50.0, 20.0, 20.0));
                for (label, x, conf) in objs.iter() {
                    if let Some(x) = x {
                        f.objects.push(Detection {
                            label: label.to_string(),
                            bbox: BBox::new(100.0 + x, 50.0, 10.0, 10.0),
                            confidence: *conf,
                        });
                    }
                }
                f
            })
            .collect();
        DetectionStream::new(header, frames).unwrap()
    }

    fn clip(n: usize, kind: ClipKind) -> ClipSegment {
        ClipSegment { start_frame: 0, end_frame: n - 1, kind }
    }

    fn labels(v: &[&str]) -> Vec<String> {
        v.iter().map(|s| s.to_string()).collect()
    }

    #[test]
    fn closest_mean_distance_wins() {
        let s = stream(&[
            &[("a", Some(30.0), 0.9), ("b", Some(120.0), 0.9)],
            &[("a", Some(50.0), 0.9), ("b", Some(110.0), 0.9)],
            &[("a", Some(40.0), 0.9), ("b", Some(130.0), 0.9)],
            &[("a", Some(35.0), 0.9), ("b", Some(125.0), 0.9)],
            &[("a", Some(45.0), 0.9), ("b", Some(115.0), 0.9)],
        ]);
        let c = clip(5, ClipKind::Grasp);
        let scores = score_candidates(&c, &s, &labels(&["a", "b"]));
        assert_eq!(scores[0].mean_distance, 40.0);
        assert_eq!(scores[1].mean_distance, 120.0);
        assert_eq!(identify_grasped_object(&c, &s, &labels(&["a", "b"])).unwrap(), "a");
    }

    #[test]
    fn ties_prefer_confidence_then_label() {
        let s = stream(&[&[("b", Some(10.0), 0.9), ("a", Some(10.0), 0.5)]]);
        assert_eq!(identify_grasped_object(&clip(1, ClipKind::Grasp), &s, &labels(&["a", "b"])).unwrap(), "b");
        let s = stream(&[&[("b", Some(10.0), 0.5), ("a", Some(10.0), 0.5)]]);
        assert_eq!(identify_grasped_object(&clip(1, ClipKind::Grasp), &s, &labels(&["b", "a"])).unwrap(), "a");
    }

    #[test]
    fn missing_candidates() {
        let s = stream(&[&[("cup", Some(10.0), 0.9)]]);
        assert_eq!(identify_grasped_object(&clip(1, ClipKind::Grasp), &s, &labels(&["cup"])).unwrap(), "cup");
        assert!(matches!(
            identify_grasped_object(&clip(1, ClipKind::Grasp), &s, &labels(&["juice"])),
            Err(GroundingError::NoCandidateDetected { .. })
        ));
    }

    #[test]
    fn anchor_is_the_argmin_frame() {
        let s = stream(&[
            &[("a", Some(50.0), 0.9)],
            &[("a", Some(30.0), 0.9)],
            &[("a", Some(10.0), 0.9)],
            &[("a", Some(25.0), 0.9)],
        ]);
        let a = locate_anchor(&clip(4, ClipKind::Grasp), 0, &s, "a").unwrap();
        assert_eq!(a.frame_index, 2);
        assert_eq!(a.kind, AnchorKind::Grasp);
        assert_eq!(a.distance_px, 10.0);
    }

    #[test]
    fn anchor_ties_and_single_visibility() {
        let s = stream(&[&[("a", Some(10.0), 0.9)], &[("a", Some(10.0), 0.9)]]);
        assert_eq!(locate_anchor(&clip(2, ClipKind::Release), 0, &s, "a").unwrap().frame_index, 0);
        let s = stream(&[&[("a", Some(70.0), 0.9)], &[("a", None, 0.9)], &[("a", None, 0.9)]]);
        assert_eq!(locate_anchor(&clip(3, ClipKind::Grasp), 0, &s, "a").unwrap().frame_index, 0);
    }
}
