//! Camera-shake removal by block matching.
//!
//! An offset `d` between a reference and a target frame is the translation
//! that registers the target onto the reference: `translate_crop(target, d, ..)`
//! reproduces the reference content. Cumulative offsets feed `translate_crop`
//! directly.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::frameio::FrameSource;
use crate::imaging::{to_grayscale, translate_crop, GrayImage, Offset2D, RasterImage, Rect};
use crate::median::{geometric_median, WeiszfeldOptions};

#[derive(Clone, Debug, PartialEq)]
pub struct DeshakeConfig {
    /// Largest per-step translation searched, in pixels.
    pub max_offset: usize,
    pub block_size: usize,
    /// Blocks whose luma standard deviation falls below this are ignored.
    pub contrast_threshold: f64,
    /// Restrict measurement to this region (the part of the scene declared static).
    pub subregion: Option<Rect>,
    pub median: WeiszfeldOptions,
}

impl Default for DeshakeConfig {
    fn default() -> Self {
        Self {
            max_offset: 8,
            block_size: 32,
            contrast_threshold: 4.0,
            subregion: None,
            median: WeiszfeldOptions::default(),
        }
    }
}

impl DeshakeConfig {
    pub fn diagnostics(&self) -> Vec<String> {
        let mut out = Vec::new();
        if self.max_offset < 1 {
            out.push("deshake.max_offset must be at least 1".to_string());
        }
        if self.block_size < 3 * self.max_offset {
            out.push(format!(
                "deshake.block_size ({}) must be a few times the largest expected offset: at least 3 x max_offset = {}",
                self.block_size,
                3 * self.max_offset
            ));
        }
        if !(self.contrast_threshold >= 0.0) {
            out.push("deshake.contrast_threshold must be non-negative".to_string());
        }
        if let Some(r) = self.subregion {
            if r.is_empty() {
                out.push("deshake.subregion must be non-empty".to_string());
            }
        }
        if !(self.median.tol > 0.0) {
            out.push("deshake median tolerance must be positive".to_string());
        }
        out
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct BlockMeasurement {
    pub block: Rect,
    pub offset: Offset2D,
    pub rms: f64,
    pub contrast: f64,
    pub accepted: bool,
}

/// Cumulative per-frame offsets; entry 0 is always zero.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct OffsetTrace(Vec<Offset2D>);

impl OffsetTrace {
    pub fn offsets(&self) -> &[Offset2D] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// Per-frame steps, i.e. first differences.
    pub fn steps(&self) -> Vec<Offset2D> {
        self.0.windows(2).map(|w| w[1] - w[0]).collect()
    }

    /// Tab-separated sidecar: frame, step dx, step dy, cumulative dx, cumulative dy.
    pub fn to_tsv(&self) -> String {
        let mut out = String::from("frame\tdx\tdy\tcum_dx\tcum_dy\n");
        let mut prev = Offset2D::ZERO;
        for (i, c) in self.0.iter().enumerate() {
            let step = *c - prev;
            out.push_str(&format!("{i}\t{}\t{}\t{}\t{}\n", step.dx, step.dy, c.dx, c.dy));
            prev = *c;
        }
        out
    }

    pub fn from_tsv(text: &str) -> Result<Self> {
        let mut steps = Vec::new();
        for (n, line) in text.lines().enumerate().skip(1) {
            if line.trim().is_empty() {
                continue;
            }
            let cols: Vec<i64> = line
                .split('\t')
                .map(|c| c.trim().parse())
                .collect::<std::result::Result<_, _>>()
                .map_err(|_| Error::Config(format!("offsets.tsv line {}: bad number", n + 1)))?;
            if cols.len() != 5 || cols[0] as usize != steps.len() {
                return Err(Error::Config(format!("offsets.tsv line {}: malformed", n + 1)));
            }
            steps.push(Offset2D::new(cols[3], cols[4]));
        }
        if steps.first() != Some(&Offset2D::ZERO) {
            return Err(Error::Config("offsets.tsv must start with a zero offset".into()));
        }
        Ok(OffsetTrace(steps))
    }
}

/// Population standard deviation of luma inside `block`.
pub fn block_contrast(img: &GrayImage, block: Rect) -> f64 {
    let n = block.area() as f64;
    let mut sum = 0.0;
    for y in block.y0..block.y1() {
        sum += img.row(y)[block.x0..block.x1()].iter().map(|&v| v as f64).sum::<f64>();
    }
    let mean = sum / n;
    let mut var = 0.0;
    for y in block.y0..block.y1() {
        var += img.row(y)[block.x0..block.x1()]
            .iter()
            .map(|&v| (v as f64 - mean).powi(2))
            .sum::<f64>();
    }
    (var / n).sqrt()
}

/// Candidate offsets in tie-break order: |dx|+|dy|, then dy, then dx.
fn search_order(max_offset: usize) -> Vec<Offset2D> {
    let m = max_offset as i64;
    let mut v: Vec<Offset2D> = (-m..=m)
        .flat_map(|dy| (-m..=m).map(move |dx| Offset2D::new(dx, dy)))
        .collect();
    v.sort_by_key(|o| (o.manhattan(), o.dy, o.dx));
    v
}

fn searchable(img: &GrayImage, block: Rect, max_offset: usize) -> bool {
    block.x0 >= max_offset
        && block.y0 >= max_offset
        && block.x1() + max_offset <= img.width()
        && block.y1() + max_offset <= img.height()
        && !block.is_empty()
}

fn ssd_bounded(
    reference: &GrayImage,
    target: &GrayImage,
    block: Rect,
    d: Offset2D,
    bound: f64,
) -> Option<f64> {
    let tx = (block.x0 as i64 - d.dx) as usize;
    let mut total = 0.0f64;
    for y in block.y0..block.y1() {
        let ty = (y as i64 - d.dy) as usize;
        let a = &reference.row(y)[block.x0..block.x1()];
        let b = &target.row(ty)[tx..tx + block.width];
        let row: f32 = a.iter().zip(b).map(|(p, q)| (p - q) * (p - q)).sum();
        total += row as f64;
        if total >= bound {
            return None;
        }
    }
    Some(total)
}

fn search_block(
    reference: &GrayImage,
    target: &GrayImage,
    block: Rect,
    order: &[Offset2D],
) -> (Offset2D, f64) {
    let mut best = Offset2D::ZERO;
    let mut best_ssd = f64::INFINITY;
    for &d in order {
        if let Some(ssd) = ssd_bounded(reference, target, block, d, best_ssd) {
            best = d;
            best_ssd = ssd;
        }
    }
    (best, (best_ssd / block.area() as f64).sqrt())
}

/// Exhaustive search for the offset minimizing RMS difference over `block`.
pub fn best_block_offset(
    reference: &GrayImage,
    target: &GrayImage,
    block: Rect,
    max_offset: usize,
) -> Result<(Offset2D, f64)> {
    if reference.width() != target.width() || reference.height() != target.height() {
        return Err(Error::DimensionMismatch {
            frame: 0,
            expected: (reference.width(), reference.height()),
            found: (target.width(), target.height()),
        });
    }
    if !searchable(target, block, max_offset) {
        return Err(Error::BlockNotSearchable);
    }
    Ok(search_block(reference, target, block, &search_order(max_offset)))
}

/// Blocks tiling the analysis region, inset by `max_offset` from the frame
/// border so every candidate window stays in bounds. Partial tiles are dropped.
pub fn analysis_blocks(width: usize, height: usize, cfg: &DeshakeConfig) -> Vec<Rect> {
    let m = cfg.max_offset;
    if width <= 2 * m || height <= 2 * m || cfg.block_size == 0 {
        return Vec::new();
    }
    let inner = Rect::new(m, m, width - 2 * m, height - 2 * m);
    let region = match cfg.subregion {
        Some(r) => match r.intersect(&inner) {
            Some(r) => r,
            None => return Vec::new(),
        },
        None => inner,
    };
    let bs = cfg.block_size;
    let mut blocks = Vec::new();
    let mut y = region.y0;
    while y + bs <= region.y1() {
        let mut x = region.x0;
        while x + bs <= region.x1() {
            blocks.push(Rect::new(x, y, bs, bs));
            x += bs;
        }
        y += bs;
    }
    blocks
}

pub fn measure_blocks(
    reference: &GrayImage,
    target: &GrayImage,
    cfg: &DeshakeConfig,
) -> Vec<BlockMeasurement> {
    let order = search_order(cfg.max_offset);
    analysis_blocks(reference.width(), reference.height(), cfg)
        .into_par_iter()
        .map(|block| {
            let contrast = block_contrast(reference, block);
            if contrast < cfg.contrast_threshold {
                return BlockMeasurement {
                    block,
                    offset: Offset2D::ZERO,
                    rms: 0.0,
                    contrast,
                    accepted: false,
                };
            }
            let (offset, rms) = search_block(reference, target, block, &order);
            BlockMeasurement {
                block,
                offset,
                rms,
                contrast,
                accepted: true,
            }
        })
        .collect()
}

/// Robust offset between two frames: geometric median of accepted block
/// offsets, rounded half away from zero.
pub fn frame_offset(reference: &GrayImage, target: &GrayImage, cfg: &DeshakeConfig) -> Result<Offset2D> {
    if reference.width() != target.width() || reference.height() != target.height() {
        return Err(Error::DimensionMismatch {
            frame: 1,
            expected: (reference.width(), reference.height()),
            found: (target.width(), target.height()),
        });
    }
    let points: Vec<[f64; 2]> = measure_blocks(reference, target, cfg)
        .iter()
        .filter(|m| m.accepted)
        .map(|m| [m.offset.dx as f64, m.offset.dy as f64])
        .collect();
    if points.is_empty() {
        return Err(Error::NoUsableBlocks { frame: 1 });
    }
    let [mx, my] = geometric_median(&points, cfg.median)?;
    Ok(Offset2D::new(mx.round() as i64, my.round() as i64))
}

pub fn accumulate(steps: &[Offset2D]) -> OffsetTrace {
    let mut trace = Vec::with_capacity(steps.len() + 1);
    let mut acc = Offset2D::ZERO;
    trace.push(acc);
    for &s in steps {
        acc = acc + s;
        trace.push(acc);
    }
    OffsetTrace(trace)
}

/// Largest rectangle that stays inside every frame after its cumulative offset.
pub fn common_crop(trace: &OffsetTrace, width: usize, height: usize) -> Result<Rect> {
    let (w, h) = (width as i64, height as i64);
    let (mut max_dx, mut min_dx, mut max_dy, mut min_dy) = (0i64, 0i64, 0i64, 0i64);
    for (i, o) in trace.offsets().iter().enumerate() {
        max_dx = max_dx.max(o.dx);
        min_dx = min_dx.min(o.dx);
        max_dy = max_dy.max(o.dy);
        min_dy = min_dy.min(o.dy);
        if w - max_dx + min_dx <= 0 || h - max_dy + min_dy <= 0 {
            return Err(Error::CameraMotionExceedsFrame { frame: i });
        }
    }
    Ok(Rect::new(
        max_dx as usize,
        max_dy as usize,
        (w - max_dx + min_dx) as usize,
        (h - max_dy + min_dy) as usize,
    ))
}

fn check_dims(frame: usize, expected: (usize, usize), found: (usize, usize)) -> Result<()> {
    if expected != found {
        return Err(Error::DimensionMismatch { frame, expected, found });
    }
    Ok(())
}

/// Measure consecutive frame offsets over a frame source, decoding each frame once.
pub fn measure_trace<S: FrameSource + ?Sized>(source: &S, cfg: &DeshakeConfig) -> Result<OffsetTrace> {
    if source.is_empty() {
        return Err(Error::EmptySequence);
    }
    let first = source.load(0)?;
    let dims = first.dimensions();
    let mut prev = to_grayscale(&first);
    let mut steps = Vec::with_capacity(source.len().saturating_sub(1));
    for i in 1..source.len() {
        let frame = source.load(i)?;
        check_dims(i, dims, frame.dimensions())?;
        let gray = to_grayscale(&frame);
        let step = frame_offset(&prev, &gray, cfg).map_err(|e| match e {
            Error::NoUsableBlocks { .. } => Error::NoUsableBlocks { frame: i },
            other => other,
        })?;
        log::debug!("frame {i}: step ({}, {})", step.dx, step.dy);
        steps.push(step);
        prev = gray;
    }
    Ok(accumulate(&steps))
}

/// Register every frame onto the first and crop to the common field.
pub fn stabilize(frames: &[RasterImage], cfg: &DeshakeConfig) -> Result<(Vec<RasterImage>, OffsetTrace)> {
    let trace = measure_trace(frames, cfg)?;
    let (w, h) = frames[0].dimensions();
    let crop = common_crop(&trace, w, h)?;
    let out = frames
        .par_iter()
        .zip(trace.offsets().par_iter())
        .map(|(f, &o)| translate_crop(f, o, crop))
        .collect::<Result<Vec<_>>>()?;
    Ok((out, trace))
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Deterministic high-contrast texture.
    fn texture(w: usize, h: usize, seed: u64) -> GrayImage {
        GrayImage::from_fn(w, h, |x, y| {
            let mut z = (x as u64 * 73_856_093) ^ (y as u64 * 19_349_663) ^ seed;
            z = z.wrapping_mul(0x9E37_79B9_7F4A_7C15);
            z ^= z >> 29;
            (z % 256) as f32
        })
    }

    /// View of `img` through a window displaced by `v`, padded with `pad`.
    fn displaced(img: &GrayImage, v: Offset2D, pad: f32) -> GrayImage {
        GrayImage::from_fn(img.width(), img.height(), |x, y| {
            let sx = x as i64 + v.dx;
            let sy = y as i64 + v.dy;
            if sx < 0 || sy < 0 || sx >= img.width() as i64 || sy >= img.height() as i64 {
                pad
            } else {
                img.get(sx as usize, sy as usize)
            }
        })
    }

    #[test]
    fn contrast_of_constant_and_two_level_blocks() {
        let flat = GrayImage::from_fn(8, 8, |_, _| 77.0);
        assert_eq!(block_contrast(&flat, flat.full_rect()), 0.0);
        let checker = GrayImage::from_fn(8, 8, |x, y| if (x + y) % 2 == 0 { 0.0 } else { 255.0 });
        assert!((block_contrast(&checker, checker.full_rect()) - 127.5).abs() < 1e-9);
    }

    #[test]
    fn contrast_matches_direct_formula() {
        let img = texture(20, 20, 3);
        let block = Rect::new(3, 5, 9, 7);
        let vals: Vec<f64> = (block.y0..block.y1())
            .flat_map(|y| (block.x0..block.x1()).map(move |x| (x, y)))
            .map(|(x, y)| img.get(x, y) as f64)
            .collect();
        let mean = vals.iter().sum::<f64>() / vals.len() as f64;
        let sd = (vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / vals.len() as f64).sqrt();
        assert!((block_contrast(&img, block) - sd).abs() < 1e-9);
    }

    #[test]
    fn best_offset_identity_and_shift() {
        let a = texture(64, 64, 1);
        let block = Rect::new(16, 16, 24, 24);
        assert_eq!(best_block_offset(&a, &a, block, 5).unwrap(), (Offset2D::ZERO, 0.0));
        let v = Offset2D::new(3, -2);
        let b = displaced(&a, v, 0.0);
        let (d, rms) = best_block_offset(&a, &b, block, 5).unwrap();
        assert_eq!(d, v);
        assert_eq!(rms, 0.0);
    }

    #[test]
    fn textureless_ties_resolve_to_zero() {
        let a = GrayImage::from_fn(40, 40, |_, _| 12.0);
        let r = best_block_offset(&a, &a, Rect::new(10, 10, 12, 12), 4).unwrap();
        assert_eq!(r, (Offset2D::ZERO, 0.0));
    }

    #[test]
    fn border_block_is_not_searchable() {
        let a = texture(40, 40, 1);
        let err = best_block_offset(&a, &a, Rect::new(2, 10, 12, 12), 4).unwrap_err();
        assert_eq!(err.to_string(), "block not searchable");
    }

    #[test]
    fn tie_break_prefers_small_manhattan_then_dy_then_dx() {
        let order = search_order(1);
        assert_eq!(order[0], Offset2D::ZERO);
        assert_eq!(
            &order[1..5],
            &[
                Offset2D::new(0, -1),
                Offset2D::new(-1, 0),
                Offset2D::new(1, 0),
                Offset2D::new(0, 1)
            ]
        );
    }

    #[test]
    fn frame_offset_global_shift() {
        let a = texture(160, 120, 9);
        let cfg = DeshakeConfig { max_offset: 4, block_size: 16, ..Default::default() };
        let b = displaced(&a, Offset2D::new(2, 1), 0.0);
        assert_eq!(frame_offset(&a, &b, &cfg).unwrap(), Offset2D::new(2, 1));
        assert_eq!(frame_offset(&a, &a, &cfg).unwrap(), Offset2D::ZERO);
    }

    #[test]
    fn frame_offset_ignores_moving_sprite() {
        let a = texture(160, 120, 9);
        let cfg = DeshakeConfig { max_offset: 10, block_size: 30, ..Default::default() };
        let mut b = displaced(&a, Offset2D::new(2, 1), 0.0);
        // one block region shows a sprite whose content moved by (-8, 0)
        let sprite = texture(160, 120, 77);
        let block = analysis_blocks(160, 120, &cfg)[1];
        let moved = displaced(&sprite, Offset2D::new(-8, 0), 0.0);
        let mut vals = b.values().to_vec();
        for y in block.y0 - 10..block.y1() + 10 {
            for x in block.x0 - 10..block.x1() + 10 {
                vals[y * 160 + x] = moved.get(x, y);
            }
        }
        let mut a_vals = a.values().to_vec();
        for y in block.y0 - 10..block.y1() + 10 {
            for x in block.x0 - 10..block.x1() + 10 {
                a_vals[y * 160 + x] = sprite.get(x, y);
            }
        }
        let a = GrayImage::new(160, 120, a_vals).unwrap();
        b = GrayImage::new(160, 120, vals).unwrap();
        let blocks = measure_blocks(&a, &b, &cfg);
        assert!(blocks.iter().any(|m| m.offset == Offset2D::new(-8, 0)));
        assert_eq!(frame_offset(&a, &b, &cfg).unwrap(), Offset2D::new(2, 1));
    }

    #[test]
    fn flat_frames_have_no_usable_blocks() {
        let a = GrayImage::from_fn(100, 100, |_, _| 50.0);
        let err = frame_offset(&a, &a, &DeshakeConfig::default()).unwrap_err();
        assert!(matches!(err, Error::NoUsableBlocks { .. }));
    }

    #[test]
    fn accumulate_examples() {
        assert_eq!(accumulate(&[]).offsets(), &[Offset2D::ZERO]);
        let t = accumulate(&[Offset2D::new(1, 0), Offset2D::new(1, 0), Offset2D::new(-1, 2)]);
        assert_eq!(
            t.offsets(),
            &[Offset2D::ZERO, Offset2D::new(1, 0), Offset2D::new(2, 0), Offset2D::new(1, 2)]
        );
    }

    #[test]
    fn common_crop_examples() {
        let zero = accumulate(&[Offset2D::ZERO; 3]);
        assert_eq!(common_crop(&zero, 100, 80).unwrap(), Rect::new(0, 0, 100, 80));
        assert_eq!(common_crop(&accumulate(&[]), 100, 80).unwrap(), Rect::new(0, 0, 100, 80));
        let t = OffsetTrace(vec![
            Offset2D::ZERO,
            Offset2D::new(-5, 1),
            Offset2D::new(3, 2),
            Offset2D::new(1, 0),
        ]);
        assert_eq!(common_crop(&t, 100, 80).unwrap(), Rect::new(3, 2, 92, 78));
        let big = OffsetTrace(vec![Offset2D::ZERO, Offset2D::new(60, 0), Offset2D::new(-45, 0)]);
        assert!(matches!(
            common_crop(&big, 100, 80),
            Err(Error::CameraMotionExceedsFrame { frame: 2 })
        ));
    }

    #[test]
    fn tsv_round_trip() {
        let t = accumulate(&[Offset2D::new(1, -2), Offset2D::new(0, 3)]);
        let text = t.to_tsv();
        assert!(text.starts_with("frame\tdx\tdy\tcum_dx\tcum_dy\n0\t0\t0\t0\t0\n1\t1\t-2\t1\t-2\n"));
        assert_eq!(OffsetTrace::from_tsv(&text).unwrap(), t);
    }

    #[test]
    fn diagnostics_flag_small_blocks() {
        assert!(DeshakeConfig::default().diagnostics().is_empty());
        let cfg = DeshakeConfig { max_offset: 8, block_size: 20, ..Default::default() };
        let d = cfg.diagnostics();
        assert_eq!(d.len(), 1);
        assert!(d[0].contains("3 x max_offset"));
    }
}
