//! Depth sources: 16-bit millimeter rasters on disk, or an in-memory
//! layered model used by the synthesizer.

use std::collections::HashMap;
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex};

use image::codecs::png::{CompressionType, FilterType, PngEncoder};
use image::{ExtendedColorType, ImageEncoder};

use super::{BBox, DetectionFrame, PerceptionError};

/// Median depth in meters inside a box at a frame.
pub trait DepthProvider: Send + Sync {
    fn median_depth(&self, frame: &DetectionFrame, bbox: &BBox) -> Option<f64>;
}

/// Inclusive pixel range whose pixel centers fall inside `b`, clipped to the image.
fn pixel_range(b: &BBox, width: u32, height: u32) -> Option<(u32, u32, u32, u32)> {
    let x0 = (b.cx - b.w / 2.0 - 0.5).ceil().max(0.0);
    let x1 = (b.cx + b.w / 2.0 - 0.5).floor().min(width as f64 - 1.0);
    let y0 = (b.cy - b.h / 2.0 - 0.5).ceil().max(0.0);
    let y1 = (b.cy + b.h / 2.0 - 0.5).floor().min(height as f64 - 1.0);
    if x1 < x0 || y1 < y0 {
        return None;
    }
    Some((x0 as u32, x1 as u32, y0 as u32, y1 as u32))
}

fn median(mut values: Vec<f64>) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    values.sort_by(f64::total_cmp);
    let n = values.len();
    Some(if n % 2 == 1 { values[n / 2] } else { (values[n / 2 - 1] + values[n / 2]) / 2.0 })
}

/// A depth image in millimeters; zero marks a hole.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DepthRaster {
    pub width: u32,
    pub height: u32,
    pub mm: Vec<u16>,
}

impl DepthRaster {
    pub fn load(path: &Path) -> Result<Self, PerceptionError> {
        let img = image::open(path).map_err(|e| PerceptionError::Depth(format!("{}: {e}", path.display())))?;
        let luma = img.into_luma16();
        Ok(DepthRaster { width: luma.width(), height: luma.height(), mm: luma.into_raw() })
    }

    pub fn save(&self, path: &Path) -> Result<(), PerceptionError> {
        let err = |e: String| PerceptionError::Depth(format!("{}: {e}", path.display()));
        if self.mm.len() != (self.width * self.height) as usize {
            return Err(err("raster size mismatch".into()));
        }
        let bytes: Vec<u8> = self.mm.iter().flat_map(|v| v.to_ne_bytes()).collect();
        let file = std::io::BufWriter::new(std::fs::File::create(path).map_err(|e| err(e.to_string()))?);
        // depth maps are piecewise constant; the Sub filter compresses them well and quickly
        PngEncoder::new_with_quality(file, CompressionType::Fast, FilterType::Sub)
            .write_image(&bytes, self.width, self.height, ExtendedColorType::L16)
            .map_err(|e| err(e.to_string()))
    }

    /// Median of the non-hole pixels inside `b`, in meters.
    pub fn median_in(&self, b: &BBox) -> Option<f64> {
        median_in_box(self, b)
    }
}

pub fn median_in_box(raster: &DepthRaster, b: &BBox) -> Option<f64> {
    let (x0, x1, y0, y1) = pixel_range(b, raster.width, raster.height)?;
    let mut values = Vec::new();
    for y in y0..=y1 {
        for x in x0..=x1 {
            let mm = raster.mm[(y * raster.width + x) as usize];
            if mm > 0 {
                values.push(mm as f64 / 1000.0);
            }
        }
    }
    median(values)
}

/// Loads rasters referenced by `depth_path` relative to a base directory.
pub struct RasterDepth {
    base: PathBuf,
    cache: Mutex<HashMap<String, Arc<DepthRaster>>>,
}

impl RasterDepth {
    pub fn new(base: impl Into<PathBuf>) -> Self {
        RasterDepth { base: base.into(), cache: Mutex::new(HashMap::new()) }
    }

    fn raster(&self, rel: &str) -> Option<Arc<DepthRaster>> {
        if let Some(r) = self.cache.lock().ok()?.get(rel) {
            return Some(r.clone());
        }
        let raster = match DepthRaster::load(&self.base.join(rel)) {
            Ok(r) => Arc::new(r),
            Err(e) => {
                log::warn!("{e}");
                return None;
            }
        };
        self.cache.lock().ok()?.insert(rel.to_string(), raster.clone());
        Some(raster)
    }
}

impl DepthProvider for RasterDepth {
    fn median_depth(&self, frame: &DetectionFrame, bbox: &BBox) -> Option<f64> {
        let raster = self.raster(frame.depth_path.as_deref()?)?;
        median_in_box(&raster, bbox)
    }
}

/// Per-frame stack of constant-depth boxes over a background plane. Later
/// layers are drawn on top.
#[derive(Debug, Clone, PartialEq)]
pub struct LayeredDepth {
    pub width: u32,
    pub height: u32,
    pub background: f64,
    /// frame index -> layers
    pub layers: HashMap<usize, Vec<(BBox, f64)>>,
}

impl LayeredDepth {
    pub fn new(width: u32, height: u32, background: f64) -> Self {
        LayeredDepth { width, height, background, layers: HashMap::new() }
    }

    fn depth_at_pixel(layers: &[(BBox, f64)], x: u32, y: u32, background: f64) -> f64 {
        let (px, py) = (x as f64 + 0.5, y as f64 + 0.5);
        layers
            .iter()
            .rev()
            .find(|(b, _)| (px - b.cx).abs() <= b.w / 2.0 && (py - b.cy).abs() <= b.h / 2.0)
            .map(|(_, z)| *z)
            .unwrap_or(background)
    }

    pub fn median_at(&self, frame_index: usize, b: &BBox) -> Option<f64> {
        let layers = self.layers.get(&frame_index).map(Vec::as_slice).unwrap_or(&[]);
        let (x0, x1, y0, y1) = pixel_range(b, self.width, self.height)?;
        let mut values = Vec::with_capacity(((x1 - x0 + 1) * (y1 - y0 + 1)) as usize);
        for y in y0..=y1 {
            for x in x0..=x1 {
                values.push(Self::depth_at_pixel(layers, x, y, self.background));
            }
        }
        median(values)
    }

    /// Rasterizes one frame to millimeters.
    pub fn render(&self, frame_index: usize) -> DepthRaster {
        let to_mm = |z: f64| (z * 1000.0).round().clamp(0.0, u16::MAX as f64) as u16;
        let mut mm = vec![to_mm(self.background); (self.width * self.height) as usize];
        for (b, z) in self.layers.get(&frame_index).map(Vec::as_slice).unwrap_or(&[]) {
            let Some((x0, x1, y0, y1)) = pixel_range(b, self.width, self.height) else { continue };
            for y in y0..=y1 {
                let row = (y * self.width) as usize;
                mm[row + x0 as usize..=row + x1 as usize].fill(to_mm(*z));
            }
        }
        DepthRaster { width: self.width, height: self.height, mm }
    }
}

impl DepthProvider for LayeredDepth {
    fn median_depth(&self, frame: &DetectionFrame, bbox: &BBox) -> Option<f64> {
        self.median_at(frame.frame_index, bbox)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn median_ignores_holes_and_averages_even_counts() {
        let raster = DepthRaster { width: 2, height: 2, mm: vec![1000, 2000, 0, 4000] };
        assert_eq!(raster.median_in(&BBox::new(1.0, 1.0, 2.0, 2.0)), Some(2.0));
        let raster = DepthRaster { width: 2, height: 1, mm: vec![1000, 2000] };
        assert_eq!(raster.median_in(&BBox::new(1.0, 0.5, 2.0, 1.0)), Some(1.5));
        assert_eq!(raster.median_in(&BBox::new(50.0, 50.0, 2.0, 2.0)), None);
    }

    #[test]
    fn layered_depth_puts_later_layers_on_top() {
        let mut d = LayeredDepth::new(100, 100, 3.0);
        d.layers.insert(0, vec![(BBox::new(50.0, 50.0, 40.0, 40.0), 1.0), (BBox::new(50.0, 50.0, 10.0, 10.0), 0.5)]);
        assert_eq!(d.median_at(0, &BBox::new(50.0, 50.0, 10.0, 10.0)), Some(0.5));
        assert_eq!(d.median_at(0, &BBox::new(50.0, 50.0, 30.0, 30.0)), Some(1.0));
        assert_eq!(d.median_at(1, &BBox::new(50.0, 50.0, 30.0, 30.0)), Some(3.0));
    }

    #[test]
    fn rendered_raster_round_trips_through_png() {
        let mut d = LayeredDepth::new(32, 24, 2.5);
        d.layers.insert(3, vec![(BBox::new(10.0, 10.0, 6.0, 6.0), 0.75)]);
        let raster = d.render(3);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("d.png");
        raster.save(&path).unwrap();
        let loaded = DepthRaster::load(&path).unwrap();
        assert_eq!(loaded, raster);
        let b = BBox::new(10.0, 10.0, 4.0, 4.0);
        assert_eq!(loaded.median_in(&b), d.median_at(3, &b));
    }
}
