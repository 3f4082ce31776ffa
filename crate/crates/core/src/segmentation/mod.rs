//! Foreground/background classification and mask refinement.
//!
//! Refinement runs from small details to large features: pinholes, disk
//! smoothing, small and thin object culling, then hole and near-hole filling.

mod cull;
mod holes;
mod label;
mod morph;

pub use cull::{cull_small, cull_thin};
pub use holes::{fill_all_holes, fill_holes, fill_near_holes};
pub use label::{label_components, label_with, Component, Connectivity, LabelMap};
pub use morph::{dilate8, disk_smooth, disk_smooth_within, remove_pinholes, smooth_schedule};

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::imaging::{color_distance, rgb_to_ycc, RasterImage, Rect};

/// Row-major foreground flags.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct BitMask {
    width: usize,
    height: usize,
    bits: Vec<bool>,
}

impl BitMask {
    pub fn new(width: usize, height: usize) -> Self {
        Self {
            width,
            height,
            bits: vec![false; width * height],
        }
    }

    pub fn from_bits(width: usize, height: usize, bits: Vec<bool>) -> Self {
        assert_eq!(bits.len(), width * height, "mask size mismatch");
        Self { width, height, bits }
    }

    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> bool) -> Self {
        let mut bits = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                bits.push(f(x, y));
            }
        }
        Self { width, height, bits }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn dimensions(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    pub fn bits(&self) -> &[bool] {
        &self.bits
    }

    pub fn get(&self, x: usize, y: usize) -> bool {
        self.bits[y * self.width + x]
    }

    pub fn set(&mut self, x: usize, y: usize, v: bool) {
        self.bits[y * self.width + x] = v;
    }

    pub fn fill_rect(&mut self, r: Rect, v: bool) {
        for y in r.y0..r.y1() {
            self.bits[y * self.width + r.x0..y * self.width + r.x1()].fill(v);
        }
    }

    pub fn count(&self) -> usize {
        self.bits.iter().filter(|&&b| b).count()
    }

    pub fn is_empty(&self) -> bool {
        !self.bits.contains(&true)
    }

    /// True when every foreground pixel of `self` is foreground in `other`.
    pub fn is_subset_of(&self, other: &BitMask) -> bool {
        self.bits.iter().zip(&other.bits).all(|(&a, &b)| !a || b)
    }
}

/// One disk smoothing pass: radius in pixels and the foreground fraction
/// that must be exceeded.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DiskStep {
    pub radius: usize,
    pub majority: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SegmentationConfig {
    pub color_threshold: f64,
    pub chroma_weight: f64,
    pub disk_schedule: Vec<DiskStep>,
    pub min_area_fraction: f64,
    pub min_thickness: usize,
    pub min_aspect: f64,
    pub near_hole_max_iters: usize,
}

impl Default for SegmentationConfig {
    fn default() -> Self {
        Self {
            color_threshold: 18.0,
            chroma_weight: 2.0,
            disk_schedule: [2, 3, 5]
                .into_iter()
                .map(|radius| DiskStep { radius, majority: 0.5 })
                .collect(),
            min_area_fraction: 1e-4,
            min_thickness: 2,
            min_aspect: 25.0,
            near_hole_max_iters: 4,
        }
    }
}

impl SegmentationConfig {
    pub fn diagnostics(&self) -> Vec<String> {
        let mut out = Vec::new();
        if !(self.color_threshold >= 0.0) {
            out.push("segment.color_threshold must be non-negative".into());
        }
        if !(self.chroma_weight >= 1.0) {
            out.push("segment.chroma_weight must be at least 1".into());
        }
        if self.disk_schedule.windows(2).any(|w| w[1].radius <= w[0].radius) {
            out.push("segment.disk_schedule radii must be strictly increasing".into());
        }
        for s in &self.disk_schedule {
            if s.radius < 1 {
                out.push("segment.disk_schedule radii must be at least 1".into());
            }
            if !(s.majority > 0.0 && s.majority < 1.0) {
                out.push(format!(
                    "segment.disk_schedule majority {} must lie strictly between 0 and 1",
                    s.majority
                ));
            }
        }
        if !(self.min_area_fraction > 0.0) {
            out.push("segment.min_area_fraction must be positive".into());
        }
        if !(self.min_aspect >= 1.0) {
            out.push("segment.min_aspect must be at least 1".into());
        }
        out
    }
}

/// Foreground wherever the weighted YCbCr distance to the background exceeds
/// the threshold.
pub fn raw_mask(frame: &RasterImage, bg: &RasterImage, cfg: &SegmentationConfig) -> Result<BitMask> {
    if frame.dimensions() != bg.dimensions() {
        return Err(Error::DimensionMismatch {
            frame: 0,
            expected: bg.dimensions(),
            found: frame.dimensions(),
        });
    }
    let bits = frame
        .pixels()
        .par_iter()
        .zip(bg.pixels().par_iter())
        .map(|(&f, &b)| color_distance(rgb_to_ycc(f), rgb_to_ycc(b), cfg.chroma_weight) > cfg.color_threshold)
        .collect();
    Ok(BitMask::from_bits(frame.width(), frame.height(), bits))
}

/// Full refinement chain for one frame/background pair.
pub fn segment_frame(frame: &RasterImage, bg: &RasterImage, cfg: &SegmentationConfig) -> Result<BitMask> {
    let raw = raw_mask(frame, bg, cfg)?;
    let m = remove_pinholes(&raw);
    let m = smooth_schedule(&m, &cfg.disk_schedule);
    let frame_area = m.width() * m.height();
    let m = cull_small(&label_components(&m), frame_area, cfg.min_area_fraction);
    let m = cull_thin(&label_components(&m), cfg.min_thickness, cfg.min_aspect);
    let m = fill_all_holes(&m);
    Ok(fill_near_holes(&m, cfg))
}
