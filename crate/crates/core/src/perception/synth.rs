//! Synthetic detection streams with analytically known ground truth.
//!
//! The hand follows scripted 3D segments in camera coordinates and is
//! projected through the script's intrinsics. A held object follows the hand
//! with a carry offset that ramps from zero at the grasp frame to zero at the
//! release frame, so hand and object coincide exactly at both anchors.

use std::f64::consts::PI;
use std::path::Path;
use std::sync::Arc;

use image::{Rgb, RgbImage};
use rand::rngs::StdRng;
use rand::SeedableRng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::depth::LayeredDepth;
use super::{
    BBox, Detection, DetectionFrame, DetectionStream, HandState, Intrinsics, PerceptionError,
    Skeleton, StreamHeader, Vec3,
};
use crate::task_model::object_key;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EventKind {
    Grasp,
    Release,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScriptEvent {
    pub kind: EventKind,
    pub frame: usize,
    pub object: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScriptObject {
    pub label: String,
    pub position: Vec3,
    /// Box size in pixels.
    pub size: [f64; 2],
    pub confidence: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum HandSegment {
    Linear { start_frame: usize, end_frame: usize, from: Vec3, to: Vec3 },
    /// `center + radius * (cos t * u + sin t * v)` for `t` from
    /// `start_angle` to `start_angle + sweep`.
    Arc {
        start_frame: usize,
        end_frame: usize,
        center: Vec3,
        radius: f64,
        u: Vec3,
        v: Vec3,
        start_angle: f64,
        sweep: f64,
    },
}

impl HandSegment {
    pub fn frames(&self) -> (usize, usize) {
        match self {
            HandSegment::Linear { start_frame, end_frame, .. }
            | HandSegment::Arc { start_frame, end_frame, .. } => (*start_frame, *end_frame),
        }
    }

    fn at(&self, frame: usize) -> Vec3 {
        let (start, end) = self.frames();
        let s = if end == start { 1.0 } else { (frame as f64 - start as f64) / (end - start) as f64 };
        let s = s.clamp(0.0, 1.0);
        match self {
            HandSegment::Linear { from, to, .. } => from + (to - from) * s,
            HandSegment::Arc { center, radius, u, v, start_angle, sweep, .. } => {
                let t = start_angle + s * sweep;
                center + (u * t.cos() + v * t.sin()) * *radius
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticScript {
    pub width: u32,
    pub height: u32,
    pub fps: f64,
    pub frame_count: usize,
    pub intrinsics: Intrinsics,
    pub hand: Vec<HandSegment>,
    pub objects: Vec<ScriptObject>,
    pub events: Vec<ScriptEvent>,
    pub hand_box_size: [f64; 2],
    /// Peak offset of a carried object from the hand, meters.
    pub carry_offset: Vec3,
    #[serde(default)]
    pub grasp_type: Option<String>,
    /// Standard deviation of box-center jitter, pixels.
    #[serde(default)]
    pub pixel_noise: f64,
    /// Frames where the hand detector misses.
    #[serde(default)]
    pub dropout_frames: Vec<usize>,
    #[serde(default)]
    pub skeleton: bool,
    #[serde(default)]
    pub depth: bool,
    #[serde(default)]
    pub seed: u64,
}

/// Forearm and upper-arm offsets used for synthetic skeletons.
pub const SYNTHETIC_ELBOW_FROM_WRIST: [f64; 3] = [0.05, 0.22, 0.08];
pub const SYNTHETIC_SHOULDER_FROM_ELBOW: [f64; 3] = [0.1, -0.04, 0.24];

impl SyntheticScript {
    /// An empty script with square pixels and the principal point at the
    /// image center.
    pub fn new(width: u32, height: u32, fps: f64, frame_count: usize) -> Self {
        SyntheticScript {
            width,
            height,
            fps,
            frame_count,
            intrinsics: Intrinsics { fx: 500.0, fy: 500.0, cx: width as f64 / 2.0, cy: height as f64 / 2.0 },
            hand: Vec::new(),
            objects: Vec::new(),
            events: Vec::new(),
            hand_box_size: [60.0, 60.0],
            carry_offset: Vec3::new(0.02, 0.015, 0.0),
            grasp_type: None,
            pixel_noise: 0.0,
            dropout_frames: Vec::new(),
            skeleton: false,
            depth: false,
            seed: 0,
        }
    }

    pub fn segment(mut self, segment: HandSegment) -> Self {
        self.hand.push(segment);
        self
    }

    pub fn linear(self, start_frame: usize, end_frame: usize, from: Vec3, to: Vec3) -> Self {
        self.segment(HandSegment::Linear { start_frame, end_frame, from, to })
    }

    pub fn object(mut self, label: &str, position: Vec3) -> Self {
        self.objects.push(ScriptObject {
            label: label.to_string(),
            position,
            size: [40.0, 50.0],
            confidence: 0.9,
        });
        self
    }

    pub fn grasp(mut self, frame: usize, object: &str) -> Self {
        self.events.push(ScriptEvent { kind: EventKind::Grasp, frame, object: object.into() });
        self
    }

    pub fn release(mut self, frame: usize, object: &str) -> Self {
        self.events.push(ScriptEvent { kind: EventKind::Release, frame, object: object.into() });
        self
    }

    /// Approach `object` from `start`, grasp at `grasp_frame`, carry it to
    /// `place`, release at `release_frame`, then withdraw to `end`.
    #[allow(clippy::too_many_arguments)]
    pub fn pick_and_place(
        width: u32,
        height: u32,
        fps: f64,
        frame_count: usize,
        label: &str,
        start: Vec3,
        object: Vec3,
        place: Vec3,
        end: Vec3,
        grasp_frame: usize,
        release_frame: usize,
    ) -> Self {
        SyntheticScript::new(width, height, fps, frame_count)
            .object(label, object)
            .linear(0, grasp_frame, start, object)
            .linear(grasp_frame, release_frame, object, place)
            .linear(release_frame, frame_count - 1, place, end)
            .grasp(grasp_frame, label)
            .release(release_frame, label)
    }

    /// A seeded pick-and-place of `target` among `distractors` in a 640x480,
    /// 30 fps, 240-frame stream. The grasp falls in the first or second
    /// 2 s clip and the release two clips later, both at least 10 frames
    /// from a clip boundary.
    pub fn random_pick_and_place(seed: u64, target: &str, distractors: &[&str]) -> Self {
        use rand::Rng;
        let mut rng = StdRng::seed_from_u64(seed);
        let clip = 60;
        let grasp_clip = rng.random_range(0..2usize);
        let grasp_frame = grasp_clip * clip + rng.random_range(10..=50usize);
        let release_frame = (grasp_clip + 2) * clip + rng.random_range(10..=50usize);
        let point = |rng: &mut StdRng| {
            let z = rng.random_range(0.8..1.2);
            // keep boxes well inside the 640x480 frame at fx = 500
            Vec3::new(rng.random_range(-0.45..0.45) * z, rng.random_range(-0.32..0.32) * z, z)
        };
        let object = point(&mut rng);
        let mut script = SyntheticScript::pick_and_place(
            640,
            480,
            30.0,
            240,
            target,
            point(&mut rng),
            object,
            point(&mut rng),
            point(&mut rng),
            grasp_frame,
            release_frame,
        );
        for label in distractors {
            let mut p = point(&mut rng);
            while (p - object).xy().norm() < 0.12 {
                p = point(&mut rng);
            }
            script = script.object(label, p);
        }
        script.seed = seed;
        script
    }

    /// True hand position at `frame`: inside a segment it is interpolated;
    /// between segments the hand rests at the previous segment's end.
    pub fn hand_at(&self, frame: usize) -> Vec3 {
        let mut current = self.hand[0].at(0);
        for seg in &self.hand {
            let (start, end) = seg.frames();
            if frame < start {
                break;
            }
            current = seg.at(frame.min(end));
        }
        current
    }

    fn validate(&self) -> Result<(), PerceptionError> {
        let err = |m: String| Err(PerceptionError::Script(m));
        if self.frame_count < 2 || self.fps <= 0.0 || self.width == 0 || self.height == 0 {
            return err("frame_count, fps and image size must be positive".into());
        }
        if self.hand.is_empty() {
            return err("no hand segments".into());
        }
        let mut last_end = 0;
        for (i, seg) in self.hand.iter().enumerate() {
            let (start, end) = seg.frames();
            if end < start || end >= self.frame_count || (i > 0 && start < last_end) {
                return err(format!("hand segment {i} covers an invalid frame range {start}..{end}"));
            }
            if let HandSegment::Arc { radius, u, v, .. } = seg {
                if *radius <= 0.0 || (u.norm() - 1.0).abs() > 1e-9 || (v.norm() - 1.0).abs() > 1e-9 || u.dot(v).abs() > 1e-9 {
                    return err(format!("arc segment {i} needs a positive radius and orthonormal u, v"));
                }
            }
            last_end = end;
        }
        let mut events = self.events.clone();
        events.sort_by_key(|e| e.frame);
        let mut held: Option<&str> = None;
        for e in &events {
            if e.frame >= self.frame_count {
                return err(format!("event at frame {} beyond the stream", e.frame));
            }
            let Some(obj) = self.objects.iter().find(|o| object_key(&o.label) == object_key(&e.object)) else {
                return err(format!("event names unknown object {}", e.object));
            };
            match (e.kind, held) {
                (EventKind::Grasp, None) => {
                    let gap = (self.hand_at(e.frame) - self.object_before(&obj.label, e.frame)).norm();
                    if gap > 1e-9 {
                        return err(format!("hand is {gap} m from {} when grasping at frame {}", obj.label, e.frame));
                    }
                    held = Some(&e.object);
                }
                (EventKind::Grasp, Some(h)) => {
                    return err(format!("grasp of {} at frame {} while holding {h}", e.object, e.frame))
                }
                (EventKind::Release, None) => {
                    return err(format!("release of {} at frame {} before any grasp", e.object, e.frame))
                }
                (EventKind::Release, Some(h)) => {
                    if object_key(h) != object_key(&e.object) {
                        return err(format!("release of {} while holding {h}", e.object));
                    }
                    held = None;
                }
            }
        }
        for w in events.windows(2) {
            if w[0].frame == w[1].frame {
                return err(format!("two events at frame {}", w[0].frame));
            }
        }
        Ok(())
    }

    /// Grasp/release intervals in frame order: `(label, grasp, release)`;
    /// release is `None` when the object is still held at the end.
    fn intervals(&self) -> Vec<(String, usize, Option<usize>)> {
        let mut events = self.events.clone();
        events.sort_by_key(|e| e.frame);
        let mut out: Vec<(String, usize, Option<usize>)> = Vec::new();
        for e in events {
            match e.kind {
                EventKind::Grasp => out.push((e.object.clone(), e.frame, None)),
                EventKind::Release => {
                    if let Some(last) = out.last_mut() {
                        last.2 = Some(e.frame);
                    }
                }
            }
        }
        out
    }

    /// Object position just before `frame`, ignoring any grasp at `frame`.
    fn object_before(&self, label: &str, frame: usize) -> Vec3 {
        let mut pos = self
            .objects
            .iter()
            .find(|o| object_key(&o.label) == object_key(label))
            .map(|o| o.position)
            .unwrap_or_else(Vec3::zeros);
        for (l, g, r) in self.intervals() {
            if object_key(&l) != object_key(label) || g >= frame {
                continue;
            }
            pos = self.hand_at(r.unwrap_or(frame).min(frame));
        }
        pos
    }

    /// True 3D object position at `frame`.
    pub fn object_at(&self, label: &str, frame: usize) -> Vec3 {
        for (l, g, r) in self.intervals() {
            if object_key(&l) != object_key(label) {
                continue;
            }
            let end = r.unwrap_or(self.frame_count - 1);
            if (g..=end).contains(&frame) {
                let ramp = if end > g { (PI * (frame - g) as f64 / (end - g) as f64).sin() } else { 0.0 };
                return self.hand_at(frame) + self.carry_offset * ramp.max(0.0);
            }
        }
        self.object_before(label, frame + 1)
    }

    pub fn is_holding(&self, frame: usize) -> bool {
        self.intervals()
            .iter()
            .any(|(_, g, r)| frame >= *g && frame <= r.unwrap_or(usize::MAX))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TruthAnchor {
    pub kind: EventKind,
    pub frame: usize,
    pub object: String,
}

/// Noise-free quantities the generated stream was built from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticTruth {
    pub anchors: Vec<TruthAnchor>,
    /// True hand position per frame, meters.
    pub hand_positions: Vec<Vec3>,
    /// True hand pixel center per frame.
    pub hand_pixels: Vec<[f64; 2]>,
    /// True object pixel centers per frame, by label.
    pub object_pixels: Vec<(String, Vec<[f64; 2]>)>,
}

impl SyntheticTruth {
    pub fn object_pixels(&self, label: &str) -> Option<&[[f64; 2]]> {
        self.object_pixels
            .iter()
            .find(|(l, _)| object_key(l) == object_key(label))
            .map(|(_, p)| p.as_slice())
    }
}

#[derive(Debug, Clone)]
pub struct SyntheticStream {
    pub stream: DetectionStream,
    pub truth: SyntheticTruth,
    pub depth: Option<Arc<LayeredDepth>>,
}

fn in_image(p: [f64; 2], w: u32, h: u32) -> bool {
    p[0] >= 0.0 && p[1] >= 0.0 && p[0] <= w as f64 && p[1] <= h as f64
}

/// Generates a stream and its ground truth from `script`.
pub fn synthesize_stream(script: &SyntheticScript) -> Result<SyntheticStream, PerceptionError> {
    script.validate()?;
    let k = script.intrinsics;
    let mut rng = StdRng::seed_from_u64(script.seed);
    let noise = Normal::new(0.0, script.pixel_noise.max(0.0))
        .map_err(|e| PerceptionError::Script(e.to_string()))?;
    let mut jitter = |p: [f64; 2]| -> [f64; 2] {
        if script.pixel_noise > 0.0 {
            [p[0] + noise.sample(&mut rng), p[1] + noise.sample(&mut rng)]
        } else {
            p
        }
    };

    let header = StreamHeader {
        width: script.width,
        height: script.height,
        fps: script.fps,
        frame_count: script.frame_count,
        intrinsics: Some(k),
    };
    let mut layered = LayeredDepth::new(script.width, script.height, 3.0);
    let mut frames = Vec::with_capacity(script.frame_count);
    let mut truth = SyntheticTruth {
        anchors: Vec::new(),
        hand_positions: Vec::with_capacity(script.frame_count),
        hand_pixels: Vec::with_capacity(script.frame_count),
        object_pixels: script.objects.iter().map(|o| (o.label.clone(), Vec::new())).collect(),
    };
    let mut events = script.events.clone();
    events.sort_by_key(|e| e.frame);
    truth.anchors = events
        .iter()
        .map(|e| TruthAnchor { kind: e.kind, frame: e.frame, object: e.object.clone() })
        .collect();

    for i in 0..script.frame_count {
        let mut frame = DetectionFrame::new(i, (i as f64 * 1000.0 / script.fps).round() as u64);
        let hand = script.hand_at(i);
        let hand_px = k.project(&hand);
        truth.hand_positions.push(hand);
        truth.hand_pixels.push(hand_px);

        let mut layers: Vec<(BBox, f64)> = Vec::new();
        let mut placed: Vec<(f64, BBox, &ScriptObject)> = Vec::new();
        for (j, obj) in script.objects.iter().enumerate() {
            let p = script.object_at(&obj.label, i);
            let px = k.project(&p);
            truth.object_pixels[j].1.push(px);
            let c = jitter(px);
            if in_image(c, script.width, script.height) && p.z > 0.0 {
                placed.push((p.z, BBox::new(c[0], c[1], obj.size[0], obj.size[1]), obj));
            }
        }
        // farther objects are drawn first so nearer ones occlude them
        placed.sort_by(|a, b| b.0.total_cmp(&a.0));
        for (z, b, obj) in &placed {
            layers.push((*b, *z));
            frame.objects.push(Detection { label: obj.label.clone(), bbox: *b, confidence: obj.confidence });
        }
        frame.objects.sort_by(|a, b| a.label.cmp(&b.label));

        let hc = jitter(hand_px);
        let dropped = script.dropout_frames.contains(&i);
        if !dropped && in_image(hc, script.width, script.height) && hand.z > 0.0 {
            let hb = BBox::new(hc[0], hc[1], script.hand_box_size[0], script.hand_box_size[1]);
            layers.push((hb, hand.z));
            frame.hand_box = Some(hb);
            frame.hand_state = Some(HandState {
                holding: script.is_holding(i),
                grasp_type: if script.is_holding(i) { script.grasp_type.clone() } else { None },
            });
            if script.skeleton {
                let elbow = hand + Vec3::from(SYNTHETIC_ELBOW_FROM_WRIST);
                let shoulder = elbow + Vec3::from(SYNTHETIC_SHOULDER_FROM_ELBOW);
                frame.skeleton = Some(Skeleton { shoulder, elbow, wrist: hand });
            }
        }
        if script.depth {
            frame.depth_path = Some(format!("depth/{i:06}.png"));
            layered.layers.insert(i, layers);
        }
        frames.push(frame);
    }

    let mut stream = DetectionStream::new(header, frames)
        .map_err(|e| PerceptionError::Script(format!("generated stream is invalid: {e}")))?;
    let depth = if script.depth {
        let layered = Arc::new(layered);
        stream = stream.with_depth(layered.clone());
        Some(layered)
    } else {
        None
    };
    Ok(SyntheticStream { stream, truth, depth })
}

/// Writes the depth rasters referenced by `stream` under `dir`.
pub fn write_depth_rasters(stream: &DetectionStream, depth: &LayeredDepth, dir: &Path) -> Result<(), PerceptionError> {
    use rayon::prelude::*;
    stream.frames.par_iter().try_for_each(|frame| {
        let Some(rel) = &frame.depth_path else { return Ok(()) };
        let path = dir.join(rel);
        if let Some(parent) = path.parent() {
            std::fs::create_dir_all(parent).map_err(|e| PerceptionError::Depth(e.to_string()))?;
        }
        depth.render(frame.frame_index).save(&path)
    })
}

fn label_color(label: &str) -> Rgb<u8> {
    let digest = crate::canonical::sha256_hex(object_key(label).as_bytes());
    let byte = |i: usize| u8::from_str_radix(&digest[i..i + 2], 16).unwrap_or(128);
    Rgb([64 + byte(0) / 2, 64 + byte(2) / 2, 64 + byte(4) / 2])
}

fn fill(img: &mut RgbImage, b: &BBox, color: Rgb<u8>) {
    let x0 = (b.cx - b.w / 2.0).max(0.0) as u32;
    let y0 = (b.cy - b.h / 2.0).max(0.0) as u32;
    let x1 = ((b.cx + b.w / 2.0).max(0.0) as u32).min(img.width());
    let y1 = ((b.cy + b.h / 2.0).max(0.0) as u32).min(img.height());
    for y in y0..y1 {
        for x in x0..x1 {
            img.put_pixel(x, y, color);
        }
    }
}

/// Draws a flat-shaded picture of a frame: object boxes, then the hand.
pub fn render_frame(header: &StreamHeader, frame: &DetectionFrame) -> RgbImage {
    let mut img = RgbImage::from_pixel(header.width, header.height, Rgb([200, 200, 196]));
    for d in &frame.objects {
        fill(&mut img, &d.bbox, label_color(&d.label));
    }
    if let Some(h) = &frame.hand_box {
        fill(&mut img, h, Rgb([224, 172, 140]));
    }
    img
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pick() -> SyntheticScript {
        SyntheticScript::pick_and_place(
            640,
            480,
            30.0,
            140,
            "juice",
            Vec3::new(0.2, -0.1, 0.9),
            Vec3::new(0.0, 0.1, 1.0),
            Vec3::new(-0.1, -0.15, 1.05),
            Vec3::new(0.15, -0.25, 0.85),
            40,
            90,
        )
    }

    #[test]
    fn holding_flips_at_scripted_frames() {
        let s = synthesize_stream(&pick()).unwrap();
        let holding: Vec<bool> = s.stream.frames.iter().map(|f| f.hand_state.as_ref().unwrap().holding).collect();
        assert!(!holding[39] && holding[40]);
        assert!(holding[90] && !holding[91]);
    }

    #[test]
    fn carried_object_meets_hand_at_anchors_only() {
        let script = pick();
        for f in [40, 90] {
            assert!((script.object_at("juice", f) - script.hand_at(f)).norm() < 1e-12);
        }
        assert!((script.object_at("juice", 65) - script.hand_at(65)).norm() > 1e-3);
        // stays where it was released
        assert_eq!(script.object_at("juice", 130), script.hand_at(90));
        assert_eq!(script.object_at("juice", 10), Vec3::new(0.0, 0.1, 1.0));
    }

    #[test]
    fn arc_positions_lie_on_the_circle() {
        let center = Vec3::new(0.1, 0.0, 1.0);
        let script = SyntheticScript::new(640, 480, 30.0, 50)
            .segment(HandSegment::Arc {
                start_frame: 0,
                end_frame: 49,
                center,
                radius: 0.2,
                u: Vec3::x(),
                v: Vec3::y(),
                start_angle: 0.0,
                sweep: PI / 2.0,
            })
            .object("handle", center + Vec3::new(0.2, 0.0, 0.0));
        let s = synthesize_stream(&script).unwrap();
        for p in &s.truth.hand_positions {
            assert!(((p - center).norm() - 0.2).abs() < 1e-12);
        }
        assert!((s.truth.hand_positions[49] - (center + Vec3::new(0.0, 0.2, 0.0))).norm() < 1e-12);
    }

    #[test]
    fn release_before_grasp_is_rejected() {
        let script = SyntheticScript::new(640, 480, 30.0, 50)
            .linear(0, 49, Vec3::new(0.0, 0.0, 1.0), Vec3::new(0.1, 0.0, 1.0))
            .object("can", Vec3::new(0.0, 0.0, 1.0))
            .release(5, "can")
            .grasp(10, "can");
        assert!(matches!(synthesize_stream(&script), Err(PerceptionError::Script(_))));
    }

    #[test]
    fn grasp_away_from_object_is_rejected() {
        let script = SyntheticScript::new(640, 480, 30.0, 50)
            .linear(0, 49, Vec3::new(0.0, 0.0, 1.0), Vec3::new(0.1, 0.0, 1.0))
            .object("can", Vec3::new(0.3, 0.0, 1.0))
            .grasp(10, "can");
        assert!(synthesize_stream(&script).is_err());
    }

    #[test]
    fn output_passes_parsing() {
        let mut script = pick();
        script.pixel_noise = 1.0;
        script.skeleton = true;
        script.dropout_frames = vec![3, 50];
        let s = synthesize_stream(&script).unwrap();
        let text = super::super::serialize_stream(&s.stream);
        let parsed = super::super::parse_stream_str(&text).unwrap();
        assert_eq!(parsed, s.stream);
        assert!(parsed.frames[3].hand_box.is_none());
    }

    #[test]
    fn layered_depth_reports_hand_depth() {
        let mut script = pick();
        script.depth = true;
        let s = synthesize_stream(&script).unwrap();
        let f = &s.stream.frames[20];
        let z = s.stream.depth_at(f, f.hand_box.as_ref().unwrap()).unwrap();
        assert!((z - s.truth.hand_positions[20].z).abs() < 1e-12);
        let lifted = s.stream.lift(f, f.hand_box.as_ref().unwrap()).unwrap();
        assert!((lifted - s.truth.hand_positions[20]).norm() < 1e-9);
    }

    #[test]
    fn noise_is_reproducible() {
        let mut script = pick();
        script.pixel_noise = 2.0;
        script.seed = 7;
        let a = synthesize_stream(&script).unwrap();
        let b = synthesize_stream(&script).unwrap();
        assert_eq!(a.stream, b.stream);
    }

    #[test]
    fn render_draws_the_hand() {
        let s = synthesize_stream(&pick()).unwrap();
        let f = &s.stream.frames[0];
        let img = render_frame(&s.stream.header, f);
        let h = f.hand_box.unwrap();
        assert_eq!(*img.get_pixel(h.cx as u32, h.cy as u32), Rgb([224, 172, 140]));
    }
}
