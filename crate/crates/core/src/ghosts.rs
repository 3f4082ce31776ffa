//! Advisory ghost detection.
//!
//! A ghost is revealed background that the segmentation still reports as
//! foreground after a long-parked object leaves. Suspects are only flagged;
//! masks are never modified here.

use crate::error::{Error, Result};
use crate::imaging::{RasterImage, Rect, Rgb};
use crate::median::{geometric_median, WeiszfeldOptions};
use crate::segmentation::{dilate8, BitMask, LabelMap};

#[derive(Clone, Debug, PartialEq)]
pub struct GhostConfig {
    /// Pairs count as near when their bounding-box centers are closer than
    /// this multiple of the larger bounding-box diagonal.
    pub proximity_factor: f64,
    /// Maximum relative area difference `|a - b| / max(a, b)`.
    pub area_tol: f64,
    pub comp_tol: f64,
    /// Surroundings with a larger RMS color spread are "too varied".
    pub spread_threshold: f64,
    /// Largest color distance at which an object still "approximates" its
    /// surroundings.
    pub match_tol: f64,
    pub dilation_radius: usize,
    pub median: WeiszfeldOptions,
}

impl Default for GhostConfig {
    fn default() -> Self {
        Self {
            proximity_factor: 4.0,
            area_tol: 0.5,
            comp_tol: 0.25,
            spread_threshold: 30.0,
            match_tol: 30.0,
            dilation_radius: 3,
            median: WeiszfeldOptions::default(),
        }
    }
}

impl GhostConfig {
    pub fn diagnostics(&self) -> Vec<String> {
        let mut out = Vec::new();
        if !(self.proximity_factor > 0.0) {
            out.push("ghosts.proximity_factor must be positive".into());
        }
        if !(0.0..=1.0).contains(&self.area_tol) {
            out.push("ghosts.area_tol must lie in [0, 1]".into());
        }
        if !(0.0..=1.0).contains(&self.comp_tol) {
            out.push("ghosts.comp_tol must lie in [0, 1]".into());
        }
        if !(self.spread_threshold >= 0.0) {
            out.push("ghosts.spread_threshold must be non-negative".into());
        }
        if !(self.match_tol >= 0.0) {
            out.push("ghosts.match_tol must be non-negative".into());
        }
        if self.dilation_radius == 0 {
            out.push("ghosts.dilation_radius must be at least 1".into());
        }
        out
    }
}

/// Per-object measurements written next to each mask.
#[derive(Clone, Debug, PartialEq)]
pub struct ObjectShape {
    pub label: u32,
    pub area: usize,
    pub bbox: Rect,
    /// Area over bounding-box area.
    pub compactness: f64,
    pub median_color: Rgb,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ObjectStats {
    pub label: u32,
    pub area: usize,
    pub bbox: Rect,
    pub compactness: f64,
    pub median_color: Rgb,
    /// `None` when the surroundings are too varied (or absent).
    pub surroundings_color: Option<Rgb>,
    pub surroundings_spread: f64,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct GhostVerdict {
    pub label: u32,
    pub suspected: bool,
    pub partner_label: Option<u32>,
    pub reason: String,
}

fn color_median(colors: &[[f64; 3]], opts: WeiszfeldOptions) -> Result<Rgb> {
    let m = geometric_median(colors, opts)?;
    Ok(m.map(|v| v.round().clamp(0.0, 255.0) as u8))
}

fn rgb_dist(a: Rgb, b: Rgb) -> f64 {
    (0..3)
        .map(|k| (a[k] as f64 - b[k] as f64).powi(2))
        .sum::<f64>()
        .sqrt()
}

pub fn measure_objects(lm: &LabelMap, frame: &RasterImage, opts: WeiszfeldOptions) -> Result<Vec<ObjectShape>> {
    if (lm.width(), lm.height()) != frame.dimensions() {
        return Err(Error::DimensionMismatch {
            frame: 0,
            expected: frame.dimensions(),
            found: (lm.width(), lm.height()),
        });
    }
    lm.components()
        .into_iter()
        .map(|c| {
            let mut colors = Vec::with_capacity(c.area);
            for y in c.bbox.y0..c.bbox.y1() {
                for x in c.bbox.x0..c.bbox.x1() {
                    if lm.get(x, y) == c.label {
                        colors.push(frame.get(x, y).map(f64::from));
                    }
                }
            }
            Ok(ObjectShape {
                label: c.label,
                area: c.area,
                bbox: c.bbox,
                compactness: c.area as f64 / c.bbox.area() as f64,
                median_color: color_median(&colors, opts)?,
            })
        })
        .collect()
}

/// Pixels within `radius` dilation steps of object `label` that belong to no object.
fn surroundings(lm: &LabelMap, label: u32, bbox: Rect, radius: usize) -> Vec<(usize, usize)> {
    let x0 = bbox.x0.saturating_sub(radius);
    let y0 = bbox.y0.saturating_sub(radius);
    let x1 = (bbox.x1() + radius).min(lm.width());
    let y1 = (bbox.y1() + radius).min(lm.height());
    let mut local = BitMask::from_fn(x1 - x0, y1 - y0, |x, y| lm.get(x0 + x, y0 + y) == label);
    for _ in 0..radius {
        local = dilate8(&local);
    }
    let mut out = Vec::new();
    for y in 0..local.height() {
        for x in 0..local.width() {
            if local.get(x, y) && lm.get(x0 + x, y0 + y) == 0 {
                out.push((x0 + x, y0 + y));
            }
        }
    }
    out
}

pub fn with_surroundings(
    shapes: &[ObjectShape],
    lm: &LabelMap,
    frame: &RasterImage,
    cfg: &GhostConfig,
) -> Result<Vec<ObjectStats>> {
    shapes
        .iter()
        .map(|s| {
            let colors: Vec<Rgb> = surroundings(lm, s.label, s.bbox, cfg.dilation_radius)
                .into_iter()
                .map(|(x, y)| frame.get(x, y))
                .collect();
            let (color, spread) = if colors.is_empty() {
                (None, f64::INFINITY)
            } else {
                let pts: Vec<[f64; 3]> = colors.iter().map(|c| c.map(f64::from)).collect();
                let med = color_median(&pts, cfg.median)?;
                let spread =
                    (colors.iter().map(|&c| rgb_dist(c, med).powi(2)).sum::<f64>() / colors.len() as f64).sqrt();
                ((spread <= cfg.spread_threshold).then_some(med), spread)
            };
            Ok(ObjectStats {
                label: s.label,
                area: s.area,
                bbox: s.bbox,
                compactness: s.compactness,
                median_color: s.median_color,
                surroundings_color: color,
                surroundings_spread: spread,
            })
        })
        .collect()
}

pub fn object_stats(lm: &LabelMap, frame: &RasterImage, cfg: &GhostConfig) -> Result<Vec<ObjectStats>> {
    let shapes = measure_objects(lm, frame, cfg.median)?;
    with_surroundings(&shapes, lm, frame, cfg)
}

fn similar_and_near(a: &ObjectStats, b: &ObjectStats, cfg: &GhostConfig) -> bool {
    let (ax, ay) = a.bbox.center();
    let (bx, by) = b.bbox.center();
    let near = (ax - bx).hypot(ay - by) < cfg.proximity_factor * a.bbox.diagonal().max(b.bbox.diagonal());
    let area_gap = a.area.abs_diff(b.area) as f64 / a.area.max(b.area) as f64;
    near && area_gap <= cfg.area_tol && (a.compactness - b.compactness).abs() <= cfg.comp_tol
}

/// Flag objects that look like revealed background next to a similar object.
pub fn flag_ghosts(stats: &[ObjectStats], cfg: &GhostConfig) -> Vec<GhostVerdict> {
    let mut verdicts: Vec<GhostVerdict> = stats
        .iter()
        .map(|s| GhostVerdict {
            label: s.label,
            suspected: false,
            partner_label: None,
            reason: if s.surroundings_color.is_none() {
                "surroundings too varied".into()
            } else {
                "no similar object nearby".into()
            },
        })
        .collect();
    for i in 0..stats.len() {
        for j in i + 1..stats.len() {
            let (a, b) = (&stats[i], &stats[j]);
            if !similar_and_near(a, b, cfg) {
                continue;
            }
            let own = |s: &ObjectStats| s.surroundings_color.map(|c| rgb_dist(s.median_color, c));
            let (idx, me, other) = match (own(a), own(b)) {
                (Some(da), Some(db)) if db < da => (j, b, a),
                (Some(_), _) => (i, a, b),
                (None, Some(_)) => (j, b, a),
                (None, None) => continue,
            };
            let own_dist = own(me).unwrap_or(f64::INFINITY);
            let partner_dist = rgb_dist(me.median_color, other.median_color);
            let v = &mut verdicts[idx];
            if own_dist <= cfg.match_tol && own_dist < partner_dist {
                if !v.suspected {
                    v.suspected = true;
                    v.partner_label = Some(other.label);
                    v.reason = format!(
                        "matches surroundings ({own_dist:.1}) better than object {} ({partner_dist:.1})",
                        other.label
                    );
                }
            } else if !v.suspected && own_dist > cfg.match_tol {
                v.reason = format!("contrasts with its surroundings ({own_dist:.1})");
            } else if !v.suspected {
                v.reason = format!("closer to object {} than to its surroundings", other.label);
            }
        }
    }
    verdicts
}

/// Copy of `frame` with suspected ghosts outlined in red.
pub fn overlay_suspects(frame: &RasterImage, stats: &[ObjectStats], verdicts: &[GhostVerdict]) -> RasterImage {
    let mut out = frame.clone();
    for (s, v) in stats.iter().zip(verdicts) {
        if !v.suspected {
            continue;
        }
        let b = s.bbox;
        for x in b.x0..b.x1() {
            out.set(x, b.y0, [255, 0, 0]);
            out.set(x, b.y1() - 1, [255, 0, 0]);
        }
        for y in b.y0..b.y1() {
            out.set(b.x0, y, [255, 0, 0]);
            out.set(b.x1() - 1, y, [255, 0, 0]);
        }
    }
    out
}

pub fn objects_to_tsv(shapes: &[ObjectShape]) -> String {
    let mut out = String::from("label\tarea\tx0\ty0\twidth\theight\tcompactness\tr\tg\tb\n");
    for s in shapes {
        out.push_str(&format!(
            "{}\t{}\t{}\t{}\t{}\t{}\t{:.6}\t{}\t{}\t{}\n",
            s.label,
            s.area,
            s.bbox.x0,
            s.bbox.y0,
            s.bbox.width,
            s.bbox.height,
            s.compactness,
            s.median_color[0],
            s.median_color[1],
            s.median_color[2]
        ));
    }
    out
}

pub fn objects_from_tsv(text: &str) -> Result<Vec<ObjectShape>> {
    let bad = |n: usize| Error::Config(format!("objects table line {n}: malformed"));
    text.lines()
        .enumerate()
        .skip(1)
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(n, line)| {
            let cols: Vec<&str> = line.split('\t').collect();
            if cols.len() != 10 {
                return Err(bad(n + 1));
            }
            let int = |k: usize| cols[k].parse::<usize>().map_err(|_| bad(n + 1));
            let byte = |k: usize| cols[k].parse::<u8>().map_err(|_| bad(n + 1));
            let bbox = Rect::new(int(2)?, int(3)?, int(4)?, int(5)?);
            let area = int(1)?;
            Ok(ObjectShape {
                label: int(0)? as u32,
                area,
                bbox,
                compactness: area as f64 / bbox.area() as f64,
                median_color: [byte(7)?, byte(8)?, byte(9)?],
            })
        })
        .collect()
}

pub fn verdicts_to_tsv(verdicts: &[GhostVerdict]) -> String {
    let mut out = String::from("label\tsuspected\tpartner\treason\n");
    for v in verdicts {
        out.push_str(&format!(
            "{}\t{}\t{}\t{}\n",
            v.label,
            v.suspected,
            v.partner_label.map_or("-".to_string(), |p| p.to_string()),
            v.reason
        ));
    }
    out
}
