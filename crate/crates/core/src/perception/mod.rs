//! Detection-stream input: per-frame hand boxes, hand state, object
//! candidates and optional depth and skeleton.

mod depth;
mod stream;
mod synth;

use std::fmt;
use std::sync::Arc;

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use depth::{median_in_box, DepthProvider, DepthRaster, LayeredDepth, RasterDepth};
pub use stream::{parse_stream, parse_stream_str, serialize_stream, write_stream};
pub use synth::{
    render_frame, synthesize_stream, write_depth_rasters, EventKind, HandSegment, ScriptEvent,
    ScriptObject, SyntheticScript, SyntheticStream, SyntheticTruth, TruthAnchor,
};

pub type Vec3 = Vector3<f64>;

/// Center-format box in pixels.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BBox {
    pub cx: f64,
    pub cy: f64,
    pub w: f64,
    pub h: f64,
}

impl BBox {
    pub fn new(cx: f64, cy: f64, w: f64, h: f64) -> Self {
        BBox { cx, cy, w, h }
    }

    pub fn center(&self) -> [f64; 2] {
        [self.cx, self.cy]
    }

    pub fn center_distance(&self, other: &BBox) -> f64 {
        (self.cx - other.cx).hypot(self.cy - other.cy)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct HandState {
    pub holding: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub grasp_type: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Detection {
    pub label: String,
    #[serde(rename = "box")]
    pub bbox: BBox,
    pub confidence: f64,
}

/// Right-arm joints in camera coordinates, meters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Skeleton {
    pub shoulder: Vec3,
    pub elbow: Vec3,
    pub wrist: Vec3,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectionFrame {
    pub frame_index: usize,
    pub timestamp_ms: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub hand_box: Option<BBox>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub hand_state: Option<HandState>,
    #[serde(default)]
    pub objects: Vec<Detection>,
    /// Sidecar 16-bit millimeter depth raster, relative to the stream file.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub depth_path: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub skeleton: Option<Skeleton>,
}

impl DetectionFrame {
    pub fn new(frame_index: usize, timestamp_ms: u64) -> Self {
        DetectionFrame {
            frame_index,
            timestamp_ms,
            hand_box: None,
            hand_state: None,
            objects: Vec::new(),
            depth_path: None,
            skeleton: None,
        }
    }

    /// The most confident detection of `label` (case-insensitive).
    pub fn object(&self, label: &str) -> Option<&Detection> {
        let key = crate::task_model::object_key(label);
        self.objects
            .iter()
            .filter(|d| crate::task_model::object_key(&d.label) == key)
            .max_by(|a, b| a.confidence.total_cmp(&b.confidence))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Intrinsics {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
}

impl Intrinsics {
    pub fn project(&self, p: &Vec3) -> [f64; 2] {
        [self.fx * p.x / p.z + self.cx, self.fy * p.y / p.z + self.cy]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StreamHeader {
    pub width: u32,
    pub height: u32,
    pub fps: f64,
    pub frame_count: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub intrinsics: Option<Intrinsics>,
}

#[derive(Debug, Error)]
pub enum StreamError {
    #[error("line {line}: {reason}")]
    Format { line: usize, reason: String },
    #[error("line {line}: {reason}")]
    Invariant { line: usize, reason: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum PerceptionError {
    #[error("invalid depth {0}")]
    InvalidDepth(f64),
    #[error("intrinsics are required to backproject")]
    MissingIntrinsics,
    #[error("script error: {0}")]
    Script(String),
    #[error("depth: {0}")]
    Depth(String),
}

/// Pinhole backprojection of pixel `(u, v)` at depth `z` meters.
pub fn backproject(u: f64, v: f64, z: f64, intrinsics: &Intrinsics) -> Result<Vec3, PerceptionError> {
    if !z.is_finite() || z <= 0.0 {
        return Err(PerceptionError::InvalidDepth(z));
    }
    Ok(Vec3::new(
        (u - intrinsics.cx) * z / intrinsics.fx,
        (v - intrinsics.cy) * z / intrinsics.fy,
        z,
    ))
}

/// Where a 3D hand position came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PositionSource {
    Depth,
    Skeleton,
    /// Pixel coordinates with z = 0; no metric information.
    Pixel,
}

/// A validated stream plus an optional depth source.
#[derive(Clone)]
pub struct DetectionStream {
    pub header: StreamHeader,
    pub frames: Vec<DetectionFrame>,
    depth: Option<Arc<dyn DepthProvider>>,
}

impl fmt::Debug for DetectionStream {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("DetectionStream")
            .field("header", &self.header)
            .field("frames", &self.frames.len())
            .field("depth", &self.depth.is_some())
            .finish()
    }
}

impl PartialEq for DetectionStream {
    fn eq(&self, other: &Self) -> bool {
        self.header == other.header && self.frames == other.frames
    }
}

impl DetectionStream {
    /// Validates and wraps frames. Frames must already be sorted.
    pub fn new(header: StreamHeader, frames: Vec<DetectionFrame>) -> Result<Self, StreamError> {
        stream::validate_header(&header, 1)?;
        for (i, frame) in frames.iter().enumerate() {
            let previous = i.checked_sub(1).map(|p| &frames[p]);
            stream::validate_frame(&header, frame, previous, i + 2)?;
        }
        Ok(DetectionStream { header, frames, depth: None })
    }

    pub fn with_depth(mut self, provider: Arc<dyn DepthProvider>) -> Self {
        self.depth = Some(provider);
        self
    }

    pub fn has_depth(&self) -> bool {
        self.depth.is_some()
            && self.header.intrinsics.is_some()
            && self.frames.iter().any(|f| f.depth_path.is_some())
    }

    pub fn depth_provider(&self) -> Option<&Arc<dyn DepthProvider>> {
        self.depth.as_ref()
    }

    pub fn frame(&self, frame_index: usize) -> Option<&DetectionFrame> {
        self.frames
            .binary_search_by_key(&frame_index, |f| f.frame_index)
            .ok()
            .map(|i| &self.frames[i])
    }

    /// Frames whose index lies in `[start, end]`.
    pub fn frames_in(&self, start: usize, end: usize) -> &[DetectionFrame] {
        let lo = self.frames.partition_point(|f| f.frame_index < start);
        let hi = self.frames.partition_point(|f| f.frame_index <= end);
        &self.frames[lo..hi.max(lo)]
    }

    /// Median depth in meters inside `bbox` at `frame`, if available.
    pub fn depth_at(&self, frame: &DetectionFrame, bbox: &BBox) -> Option<f64> {
        let provider = self.depth.as_ref()?;
        frame.depth_path.as_ref()?;
        provider.median_depth(frame, bbox).filter(|z| z.is_finite() && *z > 0.0)
    }

    /// Lifts a pixel position to 3D with the median depth of `bbox`.
    pub fn lift(&self, frame: &DetectionFrame, bbox: &BBox) -> Option<Vec3> {
        let intrinsics = self.header.intrinsics.as_ref()?;
        let z = self.depth_at(frame, bbox)?;
        backproject(bbox.cx, bbox.cy, z, intrinsics).ok()
    }

    /// The source used for 3D hand positions across this stream: depth when
    /// available, else skeleton wrists, else pixels.
    pub fn position_source(&self) -> PositionSource {
        if self.has_depth() {
            PositionSource::Depth
        } else if self.frames.iter().any(|f| f.skeleton.is_some()) {
            PositionSource::Skeleton
        } else {
            PositionSource::Pixel
        }
    }

    /// The hand position at `frame` under `source`.
    pub fn hand_point(&self, frame: &DetectionFrame, source: PositionSource) -> Option<Vec3> {
        match source {
            PositionSource::Depth => self.lift(frame, frame.hand_box.as_ref()?),
            PositionSource::Skeleton => frame.skeleton.map(|s| s.wrist),
            PositionSource::Pixel => frame.hand_box.map(|b| Vec3::new(b.cx, b.cy, 0.0)),
        }
    }

    /// `(frame_index, position)` for every frame in `[start, end]` with a
    /// usable hand observation.
    pub fn hand_trajectory(&self, start: usize, end: usize) -> Vec<(usize, Vec3)> {
        let source = self.position_source();
        self.frames_in(start, end)
            .iter()
            .filter_map(|f| self.hand_point(f, source).map(|p| (f.frame_index, p)))
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn intrinsics() -> Intrinsics {
        Intrinsics { fx: 500.0, fy: 520.0, cx: 320.0, cy: 240.0 }
    }

    #[test]
    fn backproject_principal_point() {
        let p = backproject(320.0, 240.0, 1.0, &intrinsics()).unwrap();
        assert_eq!(p, Vec3::new(0.0, 0.0, 1.0));
    }

    #[test]
    fn backproject_one_focal_length_off_axis() {
        let p = backproject(320.0 + 500.0, 240.0, 2.0, &intrinsics()).unwrap();
        assert_eq!(p, Vec3::new(2.0, 0.0, 2.0));
    }

    #[test]
    fn backproject_rejects_bad_depth() {
        for z in [0.0, -1.0, f64::NAN, f64::INFINITY] {
            assert!(backproject(1.0, 1.0, z, &intrinsics()).is_err());
        }
    }

    #[test]
    fn project_inverts_backproject() {
        let k = intrinsics();
        let p = backproject(100.5, 37.25, 0.8, &k).unwrap();
        let [u, v] = k.project(&p);
        assert!((u - 100.5).abs() < 1e-12 && (v - 37.25).abs() < 1e-12);
    }

    #[test]
    fn object_lookup_is_case_insensitive_and_prefers_confidence() {
        let mut f = DetectionFrame::new(0, 0);
        f.objects.push(Detection { label: "Juice".into(), bbox: BBox::new(1.0, 1.0, 1.0, 1.0), confidence: 0.4 });
        f.objects.push(Detection { label: "juice".into(), bbox: BBox::new(2.0, 2.0, 1.0, 1.0), confidence: 0.9 });
        assert_eq!(f.object(" JUICE ").unwrap().bbox.cx, 2.0);
        assert!(f.object("cup").is_none());
    }

    #[test]
    fn frames_in_range() {
        let header = StreamHeader { width: 10, height: 10, fps: 10.0, frame_count: 20, intrinsics: None };
        let frames = [0, 2, 5, 9].iter().map(|&i| DetectionFrame::new(i, i as u64 * 100)).collect();
        let s = DetectionStream::new(header, frames).unwrap();
        let idx: Vec<usize> = s.frames_in(2, 8).iter().map(|f| f.frame_index).collect();
        assert_eq!(idx, vec![2, 5]);
        assert!(s.frames_in(6, 8).is_empty());
        assert!(s.frame(5).is_some() && s.frame(4).is_none());
    }
}
