//! Motion-trail rendering: fade-weighted foreground overlay onto backgrounds.

use std::cmp::Ordering;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::imaging::{luma, RasterImage, Rgb};
use crate::segmentation::BitMask;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum FadeCurve {
    #[default]
    Linear,
    Quadratic,
    Cubic,
}

impl FadeCurve {
    fn exponent(self) -> i32 {
        match self {
            FadeCurve::Linear => 1,
            FadeCurve::Quadratic => 2,
            FadeCurve::Cubic => 3,
        }
    }
}

/// How a foreground's weight evolves around its source frame.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct FadeProfile {
    /// Fade-in length in frames; 0 gives a sharp onset.
    pub pre_frames: usize,
    /// Fade-out length in frames: the trail length.
    pub post_frames: usize,
    pub curve: FadeCurve,
}

impl Default for FadeProfile {
    fn default() -> Self {
        Self::fade_out(10, FadeCurve::Linear)
    }
}

impl FadeProfile {
    pub fn fade_out(post_frames: usize, curve: FadeCurve) -> Self {
        Self {
            pre_frames: 0,
            post_frames,
            curve,
        }
    }
}

/// Weight of a foreground `dt = output - source` frames away from its source.
pub fn fade_weight(profile: &FadeProfile, dt: i64) -> f64 {
    let span = if dt >= 0 { profile.post_frames } else { profile.pre_frames };
    let d = dt.unsigned_abs() as usize;
    if d == 0 {
        return 1.0;
    }
    if d > span {
        return 0.0;
    }
    (1.0 - d as f64 / (span as f64 + 1.0)).powi(profile.curve.exponent())
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum BackgroundStyle {
    #[default]
    Normal,
    Desaturated,
    Erased,
}

/// How overlapping foregrounds at one pixel are combined.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum CombineRule {
    /// Only the heaviest foreground; leftover weight goes to the background.
    #[default]
    Heaviest,
    /// All foregrounds, weights rescaled to sum to the heaviest weight.
    Rescale,
    /// Foregrounds heaviest first until the accumulated weight reaches one.
    Accumulate,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct RenderConfig {
    pub profile: FadeProfile,
    pub background_style: BackgroundStyle,
    pub combine: CombineRule,
}

impl RenderConfig {
    pub fn diagnostics(&self) -> Vec<String> {
        if self.profile.pre_frames + self.profile.post_frames == 0 {
            vec!["render: pre_frames + post_frames must be at least 1".into()]
        } else {
            Vec::new()
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct OverlayCandidate {
    pub source_frame: usize,
    /// Output frame minus source frame.
    pub dt: i64,
    pub color: Rgb,
    pub weight: f64,
}

/// Heaviest first; ties go to the nearer, then the later source frame.
fn precedence(a: &OverlayCandidate, b: &OverlayCandidate) -> Ordering {
    b.weight
        .total_cmp(&a.weight)
        .then(a.dt.unsigned_abs().cmp(&b.dt.unsigned_abs()))
        .then(b.source_frame.cmp(&a.source_frame))
}

fn blend(acc: [f64; 3], color: Rgb, w: f64) -> [f64; 3] {
    [
        acc[0] + w * color[0] as f64,
        acc[1] + w * color[1] as f64,
        acc[2] + w * color[2] as f64,
    ]
}

fn quantize(c: [f64; 3]) -> Rgb {
    c.map(|v| v.round().clamp(0.0, 255.0) as u8)
}

pub fn composite_with(bg: Rgb, candidates: &mut [OverlayCandidate], rule: CombineRule) -> Rgb {
    if candidates.is_empty() {
        return bg;
    }
    candidates.sort_by(precedence);
    let top = candidates[0];
    match rule {
        CombineRule::Heaviest => quantize(blend(blend([0.0; 3], top.color, top.weight), bg, 1.0 - top.weight)),
        CombineRule::Rescale => {
            let total: f64 = candidates.iter().map(|c| c.weight).sum();
            if total <= 0.0 {
                return bg;
            }
            let scale = top.weight / total;
            let fg = candidates
                .iter()
                .fold([0.0; 3], |acc, c| blend(acc, c.color, c.weight * scale));
            quantize(blend(fg, bg, 1.0 - top.weight))
        }
        CombineRule::Accumulate => {
            let mut used = 0.0;
            let mut acc = [0.0; 3];
            for c in candidates.iter() {
                let take = c.weight.min(1.0 - used);
                if take <= 0.0 {
                    break;
                }
                acc = blend(acc, c.color, take);
                used += take;
            }
            quantize(blend(acc, bg, 1.0 - used))
        }
    }
}

/// Heaviest-foreground compositing of one pixel.
pub fn composite_pixel(bg: Rgb, candidates: &[OverlayCandidate]) -> Rgb {
    composite_with(bg, &mut candidates.to_vec(), CombineRule::Heaviest)
}

pub fn restyle_background(bg: &RasterImage, style: BackgroundStyle) -> RasterImage {
    match style {
        BackgroundStyle::Normal => bg.clone(),
        BackgroundStyle::Desaturated => {
            let mut out = bg.clone();
            out.pixels_mut().iter_mut().for_each(|p| {
                let g = luma(*p).round().clamp(0.0, 255.0) as u8;
                *p = [g; 3];
            });
            out
        }
        BackgroundStyle::Erased => RasterImage::filled(bg.width(), bg.height(), [128; 3]),
    }
}

/// Source frames whose foreground can appear in output frame `n`.
pub fn source_range(profile: &FadeProfile, n: usize, len: usize) -> std::ops::Range<usize> {
    n.saturating_sub(profile.post_frames)..(n + profile.pre_frames + 1).min(len)
}

/// One source frame and its foreground mask.
#[derive(Clone, Copy)]
pub struct TrailSource<'a> {
    pub index: usize,
    pub frame: &'a RasterImage,
    pub mask: &'a BitMask,
}

/// Render output frame `n` over `background` from the given sources.
pub fn render_frame(
    n: usize,
    background: &RasterImage,
    sources: &[TrailSource<'_>],
    cfg: &RenderConfig,
) -> Result<RasterImage> {
    let (w, h) = background.dimensions();
    for s in sources {
        if s.frame.dimensions() != (w, h) || s.mask.dimensions() != (w, h) {
            return Err(Error::DimensionMismatch {
                frame: s.index,
                expected: (w, h),
                found: s.frame.dimensions(),
            });
        }
    }
    let weighted: Vec<(TrailSource<'_>, f64)> = sources
        .iter()
        .map(|s| (*s, fade_weight(&cfg.profile, n as i64 - s.index as i64)))
        .filter(|(_, wgt)| *wgt > 0.0)
        .collect();
    let base = restyle_background(background, cfg.background_style);
    let mut out = base.clone();
    out.pixels_mut()
        .par_chunks_mut(w)
        .enumerate()
        .for_each_init(Vec::new, |cands, (y, row)| {
            for (x, px) in row.iter_mut().enumerate() {
                cands.clear();
                for (s, wgt) in &weighted {
                    if s.mask.get(x, y) {
                        cands.push(OverlayCandidate {
                            source_frame: s.index,
                            dt: n as i64 - s.index as i64,
                            color: s.frame.get(x, y),
                            weight: *wgt,
                        });
                    }
                }
                *px = composite_with(base.get(x, y), cands, cfg.combine);
            }
        });
    Ok(out)
}

/// Render every output frame from in-memory streams.
pub fn render_sequence(
    frames: &[RasterImage],
    backgrounds: &[RasterImage],
    masks: &[BitMask],
    cfg: &RenderConfig,
) -> Result<Vec<RasterImage>> {
    if frames.len() != backgrounds.len() || frames.len() != masks.len() {
        return Err(Error::LengthMismatch(format!(
            "{} frames, {} backgrounds, {} masks",
            frames.len(),
            backgrounds.len(),
            masks.len()
        )));
    }
    (0..frames.len())
        .into_par_iter()
        .map(|n| {
            let sources: Vec<TrailSource<'_>> = source_range(&cfg.profile, n, frames.len())
                .map(|m| TrailSource {
                    index: m,
                    frame: &frames[m],
                    mask: &masks[m],
                })
                .collect();
            render_frame(n, &backgrounds[n], &sources, cfg)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cand(source_frame: usize, dt: i64, color: Rgb, weight: f64) -> OverlayCandidate {
        OverlayCandidate { source_frame, dt, color, weight }
    }

    #[test]
    fn weight_examples() {
        let lin = FadeProfile::fade_out(4, FadeCurve::Linear);
        assert_eq!(fade_weight(&lin, 0), 1.0);
        assert_eq!(fade_weight(&lin, -1), 0.0);
        assert!((fade_weight(&lin, 2) - 0.6).abs() < 1e-12);
        let cubic = FadeProfile::fade_out(4, FadeCurve::Cubic);
        assert!((fade_weight(&cubic, 2) - 0.216).abs() < 1e-12);
        assert_eq!(fade_weight(&lin, 5), 0.0);
        assert!(fade_weight(&lin, 4) > 0.0);
    }

    #[test]
    fn symmetric_fade_in() {
        let p = FadeProfile { pre_frames: 2, post_frames: 5, curve: FadeCurve::Quadratic };
        assert!((fade_weight(&p, -1) - (2.0f64 / 3.0).powi(2)).abs() < 1e-12);
        assert_eq!(fade_weight(&p, -3), 0.0);
    }

    #[test]
    fn no_candidates_or_full_weight() {
        assert_eq!(composite_pixel([1, 2, 3], &[]), [1, 2, 3]);
        assert_eq!(composite_pixel([1, 2, 3], &[cand(4, 0, [200, 100, 50], 1.0)]), [200, 100, 50]);
    }

    #[test]
    fn heaviest_wins_and_ignores_others() {
        let c = [cand(1, 3, [255, 0, 0], 0.25), cand(2, 2, [0, 0, 255], 0.75)];
        assert_eq!(composite_pixel([0, 0, 0], &c), [0, 0, 191]);
    }

    #[test]
    fn ties_prefer_nearer_then_later() {
        let c = [cand(3, 2, [10, 0, 0], 0.5), cand(7, -2, [20, 0, 0], 0.5), cand(6, 1, [30, 0, 0], 0.5)];
        assert_eq!(composite_pixel([0, 0, 0], &c), [15, 0, 0]);
        let c = [cand(3, 2, [10, 0, 0], 0.5), cand(7, -2, [20, 0, 0], 0.5)];
        assert_eq!(composite_pixel([0, 0, 0], &c), [10, 0, 0]);
    }

    #[test]
    fn alternative_rules() {
        let mut c = [cand(1, 1, [200, 0, 0], 0.5), cand(2, 2, [0, 200, 0], 0.5)];
        // rescale: each 0.25, background 0.5
        assert_eq!(composite_with([100, 100, 100], &mut c, CombineRule::Rescale), [100, 100, 50]);
        // accumulate: both at 0.5, background 0
        assert_eq!(composite_with([100, 100, 100], &mut c, CombineRule::Accumulate), [100, 100, 0]);
    }

    #[test]
    fn restyles() {
        let bg = RasterImage::filled(2, 2, [255, 0, 0]);
        assert_eq!(restyle_background(&bg, BackgroundStyle::Normal), bg);
        assert_eq!(restyle_background(&bg, BackgroundStyle::Desaturated).get(1, 1), [76; 3]);
        assert_eq!(restyle_background(&bg, BackgroundStyle::Erased).get(0, 1), [128; 3]);
    }

    #[test]
    fn empty_masks_render_backgrounds() {
        let frames = vec![RasterImage::filled(4, 3, [9, 9, 9]); 3];
        let bgs: Vec<_> = (0..3).map(|i| RasterImage::filled(4, 3, [i as u8, 1, 2])).collect();
        let masks = vec![BitMask::new(4, 3); 3];
        let out = render_sequence(&frames, &bgs, &masks, &RenderConfig::default()).unwrap();
        assert_eq!(out, bgs);
        assert!(render_sequence(&frames, &bgs[..2], &masks, &RenderConfig::default()).is_err());
    }

    #[test]
    fn stationary_dot_keeps_full_weight() {
        let n = 10;
        let frames = vec![RasterImage::from_fn(5, 1, |x, _| if x == 2 { [255; 3] } else { [0; 3] }); n];
        let bgs = vec![RasterImage::filled(5, 1, [0; 3]); n];
        let masks = vec![BitMask::from_fn(5, 1, |x, _| x == 2); n];
        let cfg = RenderConfig { profile: FadeProfile::fade_out(5, FadeCurve::Linear), ..Default::default() };
        for f in render_sequence(&frames, &bgs, &masks, &cfg).unwrap() {
            assert_eq!(f.get(2, 0), [255; 3]);
        }
    }
}
