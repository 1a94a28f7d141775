//! Line-delimited JSON stream files: one header line, then one line per frame.

use std::fs;
use std::path::Path;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::depth::RasterDepth;
use super::{BBox, DetectionFrame, DetectionStream, StreamError, StreamHeader};

#[derive(Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase")]
enum Record {
    Header(StreamHeader),
    Frame(DetectionFrame),
}

/// Same shape as [`Record`] but borrowing, for serialization.
#[derive(Serialize)]
#[serde(tag = "type", rename_all = "lowercase")]
enum RecordRef<'a> {
    Header(&'a StreamHeader),
    Frame(&'a DetectionFrame),
}

fn invariant(line: usize, reason: impl Into<String>) -> StreamError {
    StreamError::Invariant { line, reason: reason.into() }
}

pub(super) fn validate_header(header: &StreamHeader, line: usize) -> Result<(), StreamError> {
    if !(header.fps.is_finite() && header.fps > 0.0) {
        return Err(invariant(line, format!("fps must be positive, got {}", header.fps)));
    }
    if header.frame_count < 1 {
        return Err(invariant(line, "frame_count must be at least 1"));
    }
    if header.width == 0 || header.height == 0 {
        return Err(invariant(line, "image size must be positive"));
    }
    if let Some(k) = &header.intrinsics {
        if !(k.fx > 0.0 && k.fy > 0.0 && k.cx.is_finite() && k.cy.is_finite()) {
            return Err(invariant(line, "focal lengths must be positive"));
        }
    }
    Ok(())
}

fn validate_box(header: &StreamHeader, b: &BBox, what: &str, line: usize) -> Result<(), StreamError> {
    let finite = [b.cx, b.cy, b.w, b.h].iter().all(|x| x.is_finite());
    if !finite || b.w < 0.0 || b.h < 0.0 {
        return Err(invariant(line, format!("{what} box has invalid size")));
    }
    if b.cx < 0.0 || b.cy < 0.0 || b.cx > header.width as f64 || b.cy > header.height as f64 {
        return Err(invariant(
            line,
            format!(
                "{what} box center ({}, {}) outside {}x{} image",
                b.cx, b.cy, header.width, header.height
            ),
        ));
    }
    Ok(())
}

pub(super) fn validate_frame(
    header: &StreamHeader,
    frame: &DetectionFrame,
    previous: Option<&DetectionFrame>,
    line: usize,
) -> Result<(), StreamError> {
    if let Some(prev) = previous {
        if frame.frame_index == prev.frame_index {
            return Err(invariant(line, format!("duplicate frame_index {}", frame.frame_index)));
        }
        if frame.frame_index < prev.frame_index {
            return Err(invariant(
                line,
                format!("frame_index {} after {} is not increasing", frame.frame_index, prev.frame_index),
            ));
        }
        if frame.timestamp_ms < prev.timestamp_ms {
            return Err(invariant(line, "timestamp_ms decreases"));
        }
    }
    if frame.frame_index >= header.frame_count {
        return Err(invariant(
            line,
            format!("frame_index {} beyond frame_count {}", frame.frame_index, header.frame_count),
        ));
    }
    if let Some(b) = &frame.hand_box {
        validate_box(header, b, "hand", line)?;
    }
    for d in &frame.objects {
        if d.label.trim().is_empty() {
            return Err(invariant(line, "object label is empty"));
        }
        if !(0.0..=1.0).contains(&d.confidence) {
            return Err(invariant(line, format!("confidence {} of {} outside [0, 1]", d.confidence, d.label)));
        }
        validate_box(header, &d.bbox, &d.label, line)?;
    }
    if frame.depth_path.is_some() && header.intrinsics.is_none() {
        return Err(invariant(line, "frame carries depth but the header has no intrinsics"));
    }
    Ok(())
}

/// Parses stream text. Depth paths are kept as written; use
/// [`parse_stream`] to attach a raster depth source.
pub fn parse_stream_str(text: &str) -> Result<DetectionStream, StreamError> {
    let mut header: Option<StreamHeader> = None;
    let mut frames: Vec<DetectionFrame> = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        if raw.trim().is_empty() {
            continue;
        }
        let record: Record = serde_json::from_str(raw)
            .map_err(|e| StreamError::Format { line, reason: e.to_string() })?;
        match (record, &header) {
            (Record::Header(h), None) => {
                validate_header(&h, line)?;
                header = Some(h);
            }
            (Record::Header(_), Some(_)) => {
                return Err(StreamError::Format { line, reason: "second header line".into() })
            }
            (Record::Frame(_), None) => {
                return Err(StreamError::Format { line, reason: "frame before header".into() })
            }
            (Record::Frame(f), Some(h)) => {
                validate_frame(h, &f, frames.last(), line)?;
                frames.push(f);
            }
        }
    }
    let header = header.ok_or(StreamError::Format { line: 1, reason: "missing header line".into() })?;
    Ok(DetectionStream { header, frames, depth: None })
}

/// Reads a stream file. When frames reference depth rasters they are
/// resolved relative to the file's directory.
pub fn parse_stream(path: &Path) -> Result<DetectionStream, StreamError> {
    let text = fs::read_to_string(path)?;
    let stream = parse_stream_str(&text)?;
    if stream.frames.iter().any(|f| f.depth_path.is_some()) {
        let base = path.parent().unwrap_or_else(|| Path::new("."));
        return Ok(stream.with_depth(Arc::new(RasterDepth::new(base))));
    }
    Ok(stream)
}

pub fn serialize_stream(stream: &DetectionStream) -> String {
    let mut out = serde_json::to_string(&RecordRef::Header(&stream.header)).expect("header serializes");
    out.push('\n');
    for frame in &stream.frames {
        out.push_str(&serde_json::to_string(&RecordRef::Frame(frame)).expect("frame serializes"));
        out.push('\n');
    }
    out
}

pub fn write_stream(stream: &DetectionStream, path: &Path) -> Result<(), StreamError> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent)?;
    }
    fs::write(path, serialize_stream(stream))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    const TWO_FRAMES: &str = r#"{"type":"header","width":640,"height":480,"fps":30,"frame_count":2}
{"type":"frame","frame_index":0,"timestamp_ms":0,"hand_box":{"cx":100,"cy":100,"w":40,"h":40},"hand_state":{"holding":false},"objects":[{"label":"cup","box":{"cx":200,"cy":120,"w":30,"h":50},"confidence":0.9}]}
{"type":"frame","frame_index":1,"timestamp_ms":33,"objects":[]}
"#;

    #[test]
    fn parses_two_frames() {
        let s = parse_stream_str(TWO_FRAMES).unwrap();
        assert_eq!(s.header.width, 640);
        assert_eq!(s.frames.len(), 2);
        assert_eq!(s.frames[0].objects[0].label, "cup");
        assert!(s.frames[1].hand_box.is_none());
    }

    #[test]
    fn round_trip() {
        let s = parse_stream_str(TWO_FRAMES).unwrap();
        let again = parse_stream_str(&serialize_stream(&s)).unwrap();
        assert_eq!(s, again);
    }

    #[test]
    fn duplicate_index_is_an_invariant_error() {
        let text = TWO_FRAMES.replace("\"frame_index\":1", "\"frame_index\":0");
        match parse_stream_str(&text) {
            Err(StreamError::Invariant { line: 3, reason }) => assert!(reason.contains("duplicate")),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn box_outside_image_is_an_invariant_error() {
        let text = TWO_FRAMES.replace("\"cx\":200", "\"cx\":700");
        assert!(matches!(parse_stream_str(&text), Err(StreamError::Invariant { line: 2, .. })));
    }

    #[test]
    fn format_errors_carry_line_numbers() {
        let text = TWO_FRAMES.replace("\"timestamp_ms\":33,", "\"timestamp_ms\":\"x\",");
        assert!(matches!(parse_stream_str(&text), Err(StreamError::Format { line: 3, .. })));
        assert!(matches!(parse_stream_str(""), Err(StreamError::Format { .. })));
        let no_header = TWO_FRAMES.lines().skip(1).collect::<Vec<_>>().join("\n");
        assert!(matches!(parse_stream_str(&no_header), Err(StreamError::Format { line: 1, .. })));
    }

    #[test]
    fn confidence_and_depth_rules() {
        let text = TWO_FRAMES.replace("0.9", "1.5");
        assert!(matches!(parse_stream_str(&text), Err(StreamError::Invariant { .. })));
        let text = TWO_FRAMES.replace("\"objects\":[]", "\"objects\":[],\"depth_path\":\"d.png\"");
        assert!(matches!(parse_stream_str(&text), Err(StreamError::Invariant { line: 3, .. })));
        let text = TWO_FRAMES.replace("\"fps\":30", "\"fps\":0");
        assert!(matches!(parse_stream_str(&text), Err(StreamError::Invariant { line: 1, .. })));
    }
}
