//! Frame sampling and encoding for vision prompts.

use std::fs;
use std::io::Cursor;
use std::path::{Path, PathBuf};

use image::{ImageFormat, ImageReader};

use super::message::ImageRef;
use super::GatewayError;

pub const DEFAULT_SAMPLE_COUNT: usize = 5;
pub const DEFAULT_MAX_EDGE: u32 = 768;

/// Evenly spaced frame indices: `round(i * (frame_count - 1) / (k - 1))`,
/// rounding half up. Returns every index when there are fewer than `k` frames.
pub fn sample_frames(frame_count: usize, k: usize) -> Result<Vec<usize>, GatewayError> {
    if frame_count < 1 {
        return Err(GatewayError::InvalidArgument("frame_count must be at least 1".into()));
    }
    if k < 2 {
        return Err(GatewayError::InvalidArgument("sample count must be at least 2".into()));
    }
    if frame_count < k {
        return Ok((0..frame_count).collect());
    }
    let span = frame_count - 1;
    let steps = k - 1;
    // floor(i * span / steps + 1/2) in integers
    Ok((0..k).map(|i| (2 * i * span + steps) / (2 * steps)).collect())
}

/// Image files of a frame directory in lexicographic order.
pub fn list_frames(dir: &Path) -> Result<Vec<PathBuf>, GatewayError> {
    let mut frames: Vec<PathBuf> = fs::read_dir(dir)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| {
            matches!(
                p.extension().and_then(|e| e.to_str()).map(|e| e.to_lowercase()).as_deref(),
                Some("png" | "jpg" | "jpeg")
            )
        })
        .collect();
    frames.sort();
    Ok(frames)
}

/// Loads a frame, downscaling it to `max_edge` when larger. Frames already
/// within the limit are passed through byte-for-byte.
pub fn load_frame(path: &Path, max_edge: u32) -> Result<ImageRef, GatewayError> {
    let bytes = fs::read(path)?;
    encode_frame(&bytes, max_edge)
}

pub fn encode_frame(bytes: &[u8], max_edge: u32) -> Result<ImageRef, GatewayError> {
    let reader = ImageReader::new(Cursor::new(bytes))
        .with_guessed_format()
        .map_err(|e| GatewayError::Image(e.to_string()))?;
    let format = reader.format().ok_or_else(|| GatewayError::Image("unknown image format".into()))?;
    let media_type = match format {
        ImageFormat::Png => "image/png",
        ImageFormat::Jpeg => "image/jpeg",
        other => return Err(GatewayError::Image(format!("unsupported format {other:?}"))),
    };
    let image = reader.decode().map_err(|e| GatewayError::Image(e.to_string()))?;
    if image.width().max(image.height()) <= max_edge {
        return Ok(ImageRef::new(media_type, bytes.to_vec()));
    }
    let resized = image.resize(max_edge, max_edge, image::imageops::FilterType::Triangle);
    let mut out = Cursor::new(Vec::new());
    resized
        .write_to(&mut out, ImageFormat::Png)
        .map_err(|e| GatewayError::Image(e.to_string()))?;
    Ok(ImageRef::new("image/png", out.into_inner()))
}
