//! Mapping anchors onto plan steps and partitioning the frames between them.

use serde::{Deserialize, Serialize};

use super::anchors::{AnchorEvent, AnchorKind};
use super::GroundingError;
use crate::perception::DetectionStream;
use crate::task_model::{ActionKind, TaskStep};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum StepGrounding {
    Anchor { anchor_index: usize, frame_index: usize },
    Segment { start_frame: usize, end_frame: usize },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StepAlignment {
    pub step_index: usize,
    pub action: ActionKind,
    pub grounding: StepGrounding,
    /// Anchors of the enclosing grasp/release pair, when there is one.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub grasp_anchor: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub release_anchor: Option<usize>,
}

/// Shares of the grasp-to-release arc given to PickUp and Put; other steps
/// in the interval split the remainder equally.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PartitionShares {
    pub pickup: f64,
    pub put: f64,
}

impl Default for PartitionShares {
    fn default() -> Self {
        PartitionShares { pickup: 0.1, put: 0.1 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnchorMismatch {
    pub expected_grasps: usize,
    pub found_grasps: usize,
    pub expected_releases: usize,
    pub found_releases: usize,
}

/// Cumulative arc length of the hand trajectory in `[lo, hi]` as
/// `(frame, length)` pairs.
fn arc_profile(stream: &DetectionStream, lo: usize, hi: usize) -> Vec<(usize, f64)> {
    let traj = stream.hand_trajectory(lo, hi);
    let mut out = Vec::with_capacity(traj.len());
    let mut total = 0.0;
    for (i, (frame, p)) in traj.iter().enumerate() {
        if i > 0 {
            total += (p - traj[i - 1].1).norm();
        }
        out.push((*frame, total));
    }
    out
}

/// Splits `[lo, hi]` into consecutive segments whose hand-path lengths are
/// proportional to `weights`. Adjacent segments share their boundary frame.
/// Without a usable trajectory the split is proportional in frames.
pub fn partition_by_arc_length(stream: &DetectionStream, lo: usize, hi: usize, weights: &[f64]) -> Vec<(usize, usize)> {
    let sum: f64 = weights.iter().sum();
    let profile = arc_profile(stream, lo, hi);
    let total = profile.last().map(|p| p.1).unwrap_or(0.0);
    let mut bounds = vec![lo];
    let mut acc = 0.0;
    for w in &weights[..weights.len().saturating_sub(1)] {
        acc += w / sum;
        let b = if total > 0.0 && profile.len() >= 2 {
            let target = acc * total;
            profile.iter().find(|(_, l)| *l >= target - 1e-12 * total).map(|p| p.0).unwrap_or(hi)
        } else {
            lo + ((hi - lo) as f64 * acc).round() as usize
        };
        bounds.push(b.clamp(*bounds.last().unwrap(), hi));
    }
    bounds.push(hi);
    bounds.windows(2).map(|w| (w[0], w[1])).collect()
}

fn alternates(anchors: &[AnchorEvent]) -> bool {
    anchors.iter().enumerate().all(|(i, a)| {
        a.kind == if i % 2 == 0 { AnchorKind::Grasp } else { AnchorKind::Release }
    }) && anchors.windows(2).all(|w| w[0].frame_index < w[1].frame_index)
}

/// k-th grasp anchor to the k-th Grab, k-th release anchor to the k-th
/// Release; the other steps share the frames between neighbouring anchors.
pub fn align_anchors(
    anchors: &[AnchorEvent],
    steps: &[TaskStep],
    stream: &DetectionStream,
    shares: PartitionShares,
) -> Result<Vec<StepAlignment>, GroundingError> {
    let grasps: Vec<usize> = (0..anchors.len()).filter(|&i| anchors[i].kind == AnchorKind::Grasp).collect();
    let releases: Vec<usize> = (0..anchors.len()).filter(|&i| anchors[i].kind == AnchorKind::Release).collect();
    let mismatch = AnchorMismatch {
        expected_grasps: steps.iter().filter(|s| s.action == ActionKind::Grab).count(),
        found_grasps: grasps.len(),
        expected_releases: steps.iter().filter(|s| s.action == ActionKind::Release).count(),
        found_releases: releases.len(),
    };
    if mismatch.expected_grasps != mismatch.found_grasps || mismatch.expected_releases != mismatch.found_releases {
        return Err(GroundingError::AnchorCountMismatch(mismatch));
    }
    if !alternates(anchors) {
        return Err(GroundingError::AnchorOrder);
    }

    // anchor index for each Grab/Release step
    let (mut g, mut r) = (0, 0);
    let anchor_of: Vec<Option<usize>> = steps
        .iter()
        .map(|s| match s.action {
            ActionKind::Grab => {
                g += 1;
                Some(grasps[g - 1])
            }
            ActionKind::Release => {
                r += 1;
                Some(releases[r - 1])
            }
            _ => None,
        })
        .collect();

    let last_frame = stream.header.frame_count - 1;
    let mut out: Vec<StepAlignment> = Vec::with_capacity(steps.len());
    let mut i = 0;
    while i < steps.len() {
        if let Some(a) = anchor_of[i] {
            out.push(StepAlignment {
                step_index: i,
                action: steps[i].action,
                grounding: StepGrounding::Anchor { anchor_index: a, frame_index: anchors[a].frame_index },
                grasp_anchor: None,
                release_anchor: None,
            });
            i += 1;
            continue;
        }
        let run_start = i;
        while i < steps.len() && anchor_of[i].is_none() {
            i += 1;
        }
        let prev = run_start.checked_sub(1).and_then(|p| anchor_of[p]);
        let next = anchor_of.get(i).copied().flatten();
        let lo = prev.map(|a| anchors[a].frame_index).unwrap_or(0);
        let hi = next.map(|a| anchors[a].frame_index).unwrap_or(last_frame);
        let enclosed = matches!(
            (prev.map(|a| anchors[a].kind), next.map(|a| anchors[a].kind)),
            (Some(AnchorKind::Grasp), Some(AnchorKind::Release))
        );
        let run = &steps[run_start..i];
        let weights: Vec<f64> = if enclosed {
            let fixed: f64 = run
                .iter()
                .map(|s| match s.action {
                    ActionKind::PickUp => shares.pickup,
                    ActionKind::Put => shares.put,
                    _ => 0.0,
                })
                .sum();
            let others = run.iter().filter(|s| !matches!(s.action, ActionKind::PickUp | ActionKind::Put)).count();
            let rest = if others > 0 { ((1.0 - fixed) / others as f64).max(0.0) } else { 0.0 };
            let w: Vec<f64> = run
                .iter()
                .map(|s| match s.action {
                    ActionKind::PickUp => shares.pickup,
                    ActionKind::Put => shares.put,
                    _ => rest,
                })
                .collect();
            if w.iter().sum::<f64>() > 0.0 { w } else { vec![1.0; run.len()] }
        } else {
            vec![1.0; run.len()]
        };
        for (k, (start_frame, end_frame)) in partition_by_arc_length(stream, lo, hi, &weights).into_iter().enumerate() {
            out.push(StepAlignment {
                step_index: run_start + k,
                action: run[k].action,
                grounding: StepGrounding::Segment { start_frame, end_frame },
                grasp_anchor: if enclosed { prev } else { None },
                release_anchor: if enclosed { next } else { None },
            });
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::affordance::anchors::Position;
    use crate::perception::{BBox, DetectionFrame, StreamHeader};

    /// Hand moving along x with the given per-frame step lengths.
    fn stream(steps: &[f64]) -> DetectionStream {
        let n = steps.len() + 1;
        let header = StreamHeader { width: 10_000, height: 100, fps: 10.0, frame_count: n, intrinsics: None };
        let mut x = 10.0;
        let frames = (0..n)
            .map(|i| {
                if i > 0 {
                    x += steps[i - 1];
                }
                let mut f = DetectionFrame::new(i, i as u64 * 100);
                f.hand_box = Some(BBox::new(x, 50.0, 4.0, 4.0));
                f
            })
            .collect();
        DetectionStream::new(header, frames).unwrap()
    }

    fn anchor(kind: AnchorKind, frame: usize) -> AnchorEvent {
        let p = Position { pixel: [0.0, 0.0], world: None };
        AnchorEvent {
            kind,
            frame_index: frame,
            hand_position: p,
            object_label: "juice".into(),
            object_position: p,
            distance_px: 0.0,
            clip_index: 0,
        }
    }

    fn plan(s: &[&str]) -> Vec<TaskStep> {
        s.iter().map(|t| t.parse().unwrap()).collect()
    }

    #[test]
    fn one_pair_aligns_exactly() {
        let s = stream(&[1.0; 20]);
        let a = [anchor(AnchorKind::Grasp, 5), anchor(AnchorKind::Release, 15)];
        let out = align_anchors(&a, &plan(&["Grab(juice)", "Release(juice)"]), &s, PartitionShares::default()).unwrap();
        assert_eq!(out[0].grounding, StepGrounding::Anchor { anchor_index: 0, frame_index: 5 });
        assert_eq!(out[1].grounding, StepGrounding::Anchor { anchor_index: 1, frame_index: 15 });
    }

    #[test]
    fn extra_grasp_is_a_mismatch() {
        let s = stream(&[1.0; 30]);
        let a = [
            anchor(AnchorKind::Grasp, 5),
            anchor(AnchorKind::Release, 10),
            anchor(AnchorKind::Grasp, 20),
        ];
        match align_anchors(&a, &plan(&["Grab(juice)", "Release(juice)"]), &s, PartitionShares::default()) {
            Err(GroundingError::AnchorCountMismatch(m)) => {
                assert_eq!((m.expected_grasps, m.found_grasps), (1, 2));
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn inter_anchor_steps_split_by_arc_length() {
        // frames 0..=100; unit steps except frames 10..20 which move 5 px each
        let mut steps = vec![1.0; 100];
        for s in &mut steps[10..20] {
            *s = 5.0;
        }
        let s = stream(&steps);
        // arc from frame 0 to 100: 90*1 + 10*5 = 140; PickUp ends at 14 px, Put starts at 126 px
        let a = [anchor(AnchorKind::Grasp, 0), anchor(AnchorKind::Release, 100)];
        let p = plan(&["Grab(juice)", "PickUp(juice)", "MoveHand(shelf)", "Put(juice, shelf)", "Release(juice)"]);
        let out = align_anchors(&a, &p, &s, PartitionShares::default()).unwrap();
        let seg = |i: usize| match out[i].grounding {
            StepGrounding::Segment { start_frame, end_frame } => (start_frame, end_frame),
            _ => panic!(),
        };
        // cumulative length reaches 14 at frame 11 (10 + 5 = 15 >= 14)
        assert_eq!(seg(1), (0, 11));
        // 126 = 140 - 14 is first reached at frame 86 (40 + 86 = 126)
        assert_eq!(seg(2), (11, 86));
        assert_eq!(seg(3), (86, 100));
        assert_eq!(out[1].grasp_anchor, Some(0));
        assert_eq!(out[3].release_anchor, Some(1));
    }

    #[test]
    fn steps_outside_pairs_split_the_gap_equally() {
        let s = stream(&[1.0; 40]);
        let a = [anchor(AnchorKind::Grasp, 20), anchor(AnchorKind::Release, 30)];
        let p = plan(&["MoveHand(fridge)", "MoveHand(handle)", "Grab(handle)", "Release(handle)", "MoveHand(home)"]);
        let out = align_anchors(&a, &p, &s, PartitionShares::default()).unwrap();
        assert_eq!(out[0].grounding, StepGrounding::Segment { start_frame: 0, end_frame: 10 });
        assert_eq!(out[1].grounding, StepGrounding::Segment { start_frame: 10, end_frame: 20 });
        assert_eq!(out[4].grounding, StepGrounding::Segment { start_frame: 30, end_frame: 40 });
        assert_eq!(out[0].grasp_anchor, None);
    }

    #[test]
    fn out_of_order_anchors_are_rejected() {
        let s = stream(&[1.0; 30]);
        let a = [anchor(AnchorKind::Release, 5), anchor(AnchorKind::Grasp, 10)];
        assert!(matches!(
            align_anchors(&a, &plan(&["Grab(juice)", "Release(juice)"]), &s, PartitionShares::default()),
            Err(GroundingError::AnchorOrder)
        ));
    }
}
