//! Per-pixel sliding-window background estimation.
//!
//! Each output background is the per-pixel RGB geometric median of a
//! contiguous window of frames. Frames are streamed through a ring buffer so
//! every input is decoded exactly once.

use std::collections::VecDeque;
use std::ops::Range;

use rayon::prelude::*;
use wide::{f32x8, CmpEq, CmpGt};

use crate::error::{Error, Result};
use crate::frameio::FrameSource;
use crate::imaging::{RasterImage, Rgb};
use crate::median::{WeiszfeldOptions, HELD_SHARE, STALL_GRADIENT};

/// Where the window sits relative to the frame it produces a background for.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum WindowAlignment {
    /// Centered on the frame; even widths take one extra later neighbor.
    #[default]
    Centered,
    /// The frame and its predecessors only.
    Trailing,
}

#[derive(Clone, Debug, PartialEq)]
pub struct WindowSpec {
    pub width: usize,
    pub alignment: WindowAlignment,
    pub median: WeiszfeldOptions,
}

impl Default for WindowSpec {
    fn default() -> Self {
        Self::centered(51)
    }
}

impl WindowSpec {
    pub fn centered(width: usize) -> Self {
        Self {
            width,
            alignment: WindowAlignment::Centered,
            median: WeiszfeldOptions::default(),
        }
    }

    /// Frames contributing to the background of frame `n`, truncated to `0..len`.
    pub fn range(&self, n: usize, len: usize) -> Range<usize> {
        let (before, after) = match self.alignment {
            WindowAlignment::Centered => ((self.width - 1) / 2, self.width / 2),
            WindowAlignment::Trailing => (self.width - 1, 0),
        };
        n.saturating_sub(before)..(n + after + 1).min(len)
    }

    pub fn diagnostics(&self) -> Vec<String> {
        let mut out = Vec::new();
        if self.width == 0 {
            out.push("background.width must be at least 1 frame".to_string());
        }
        if !(self.median.tol > 0.0) {
            out.push("background median tolerance must be positive".to_string());
        }
        out
    }
}

/// Counters from a streaming run.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct StreamStats {
    pub decoded: usize,
    pub peak_resident: usize,
}

const LANES: usize = 8;

/// Pixels per transposed tile in `window_background`.
const TILE: usize = 64;

/// Filler for unused tail lanes, far from any 8-bit color.
const PAD: f32 = 1.0e6;

/// Sample count rounded up to whole lanes.
fn padded_len(n: usize) -> usize {
    n.div_ceil(LANES) * LANES
}

/// Reusable structure-of-arrays sample buffer for the RGB median kernel.
/// Unused slots hold `PAD`.
#[derive(Default)]
struct Samples {
    r: Vec<f32>,
    g: Vec<f32>,
    b: Vec<f32>,
}

impl Samples {
    fn reset(&mut self, len: usize) {
        for c in [&mut self.r, &mut self.g, &mut self.b] {
            c.clear();
            c.resize(len, PAD);
        }
    }

    fn set(&mut self, i: usize, p: Rgb) {
        self.r[i] = p[0] as f32;
        self.g[i] = p[1] as f32;
        self.b[i] = p[2] as f32;
    }

    fn load(&mut self, samples: &[Rgb]) {
        self.reset(padded_len(samples.len()));
        samples.iter().enumerate().for_each(|(i, &p)| self.set(i, p));
    }

    /// The `n` samples starting at `start`, padded to whole lanes.
    fn view(&self, start: usize, n: usize) -> Channels<'_> {
        let span = start..start + padded_len(n);
        let rem = n % LANES;
        Channels {
            r: &self.r[span.clone()],
            g: &self.g[span.clone()],
            b: &self.b[span],
            n,
            tail_mask: std::array::from_fn(|i| if rem == 0 || i < rem { 1.0 } else { 0.0 }),
        }
    }
}

/// One pixel's samples: `n` valid values per channel, padded to whole lanes.
#[derive(Clone, Copy)]
struct Channels<'a> {
    r: &'a [f32],
    g: &'a [f32],
    b: &'a [f32],
    n: usize,
    /// Weight mask for the last block.
    tail_mask: [f32; LANES],
}

/// Sums of one Weiszfeld step at `y`. Samples equal to `y` get no weight and
/// are counted in `coincident`.
struct StepSums {
    /// Weighted sum of `x - y`.
    pull: [f32; 3],
    den: f32,
    coincident: f32,
    min_d2: f32,
}

fn hsum(v: f32x8) -> f32 {
    v.to_array().iter().sum()
}

fn hmin(v: [f32; LANES]) -> f32 {
    v.iter().fold(f32::INFINITY, |a, &b| a.min(b))
}

fn lane(c: &[f32], i: usize) -> f32x8 {
    f32x8::new(c[i..i + LANES].try_into().unwrap())
}

fn step_portable(s: Channels<'_>, y: [f32; 3]) -> StepSums {
    let (yr, yg, yb) = (f32x8::splat(y[0]), f32x8::splat(y[1]), f32x8::splat(y[2]));
    let last = s.r.len() - LANES;
    let mut pr = f32x8::ZERO;
    let mut pg = f32x8::ZERO;
    let mut pb = f32x8::ZERO;
    let mut den = f32x8::ZERO;
    let mut coincident = f32x8::ZERO;
    let mut min_d2 = f32x8::splat(f32::INFINITY);
    for i in (0..s.r.len()).step_by(LANES) {
        let (dr, dg, db) = (lane(s.r, i) - yr, lane(s.g, i) - yg, lane(s.b, i) - yb);
        let d2 = dr * dr + dg * dg + db * db;
        min_d2 = min_d2.min(d2);
        let mask = if i == last { f32x8::new(s.tail_mask) } else { f32x8::ONE };
        let apart = d2.cmp_gt(f32x8::ZERO);
        let w = apart.blend(mask / d2.sqrt(), f32x8::ZERO);
        coincident += apart.blend(f32x8::ZERO, mask);
        pr += w * dr;
        pg += w * dg;
        pb += w * db;
        den += w;
    }
    StepSums {
        pull: [hsum(pr), hsum(pg), hsum(pb)],
        den: hsum(den),
        coincident: hsum(coincident),
        min_d2: hmin(min_d2.to_array()),
    }
}

#[cfg(target_arch = "x86_64")]
#[target_feature(enable = "avx2,fma")]
unsafe fn step_avx2(s: Channels<'_>, y: [f32; 3]) -> StepSums {
    use std::arch::x86_64::*;
    let (yr, yg, yb) = (_mm256_set1_ps(y[0]), _mm256_set1_ps(y[1]), _mm256_set1_ps(y[2]));
    let one = _mm256_set1_ps(1.0);
    let zero = _mm256_setzero_ps();
    let len = s.r.len();
    assert!(len.is_multiple_of(LANES) && s.g.len() == len && s.b.len() == len);
    let (sr, sg, sb) = (s.r.as_ptr(), s.g.as_ptr(), s.b.as_ptr());
    let mut pr = zero;
    let mut pg = zero;
    let mut pb = zero;
    let mut den = zero;
    let mut coincident = zero;
    let mut min_d2 = _mm256_set1_ps(f32::INFINITY);
    let mut i = 0;
    while i < len {
        // SAFETY: `i + LANES <= len` for all three equally long slices.
        let dr = _mm256_sub_ps(_mm256_loadu_ps(sr.add(i)), yr);
        let dg = _mm256_sub_ps(_mm256_loadu_ps(sg.add(i)), yg);
        let db = _mm256_sub_ps(_mm256_loadu_ps(sb.add(i)), yb);
        let d2 = _mm256_fmadd_ps(db, db, _mm256_fmadd_ps(dg, dg, _mm256_mul_ps(dr, dr)));
        min_d2 = _mm256_min_ps(min_d2, d2);
        let mask = if i + LANES == len { _mm256_loadu_ps(s.tail_mask.as_ptr()) } else { one };
        let apart = _mm256_cmp_ps::<_CMP_GT_OQ>(d2, zero);
        let w = _mm256_and_ps(apart, _mm256_div_ps(mask, _mm256_sqrt_ps(d2)));
        coincident = _mm256_add_ps(coincident, _mm256_andnot_ps(apart, mask));
        pr = _mm256_fmadd_ps(w, dr, pr);
        pg = _mm256_fmadd_ps(w, dg, pg);
        pb = _mm256_fmadd_ps(w, db, pb);
        den = _mm256_add_ps(den, w);
        i += LANES;
    }
    let mut out = [[0.0f32; LANES]; 6];
    for (dst, v) in out.iter_mut().zip([pr, pg, pb, den, coincident, min_d2]) {
        _mm256_storeu_ps(dst.as_mut_ptr(), v);
    }
    let sum = |a: &[f32; LANES]| a.iter().sum::<f32>();
    StepSums {
        pull: [sum(&out[0]), sum(&out[1]), sum(&out[2])],
        den: sum(&out[3]),
        coincident: sum(&out[4]),
        min_d2: hmin(out[5]),
    }
}

fn use_avx2() -> bool {
    #[cfg(target_arch = "x86_64")]
    {
        std::is_x86_feature_detected!("avx2") && std::is_x86_feature_detected!("fma")
    }
    #[cfg(not(target_arch = "x86_64"))]
    {
        false
    }
}

fn step(s: Channels<'_>, y: [f32; 3], avx2: bool) -> StepSums {
    #[cfg(target_arch = "x86_64")]
    if avx2 {
        // SAFETY: `avx2` is only set when the CPU supports AVX2 and FMA.
        return unsafe { step_avx2(s, y) };
    }
    let _ = avx2;
    step_portable(s, y)
}

/// Per-channel means of the valid samples.
fn mean(s: Channels<'_>) -> [f32; 3] {
    let full = s.n - s.n % LANES;
    let mut acc = [f32x8::ZERO; 3];
    for i in (0..full).step_by(LANES) {
        acc[0] += lane(s.r, i);
        acc[1] += lane(s.g, i);
        acc[2] += lane(s.b, i);
    }
    let channels = [s.r, s.g, s.b];
    std::array::from_fn(|k| (hsum(acc[k]) + channels[k][full..s.n].iter().sum::<f32>()) / s.n as f32)
}

/// Squared distance from `y` to the closest sample.
fn nearest_d2(s: Channels<'_>, y: [f32; 3]) -> f32 {
    let (yr, yg, yb) = (f32x8::splat(y[0]), f32x8::splat(y[1]), f32x8::splat(y[2]));
    let mut min_d2 = f32x8::splat(f32::INFINITY);
    for i in (0..s.r.len()).step_by(LANES) {
        let (dr, dg, db) = (lane(s.r, i) - yr, lane(s.g, i) - yg, lane(s.b, i) - yb);
        min_d2 = min_d2.min(dr * dr + dg * dg + db * db);
    }
    hmin(min_d2.to_array())
}

/// Number of samples at squared distance exactly `d2` from `y`.
fn count_at(s: Channels<'_>, y: [f32; 3], d2: f32) -> usize {
    let (yr, yg, yb) = (f32x8::splat(y[0]), f32x8::splat(y[1]), f32x8::splat(y[2]));
    let target = f32x8::splat(d2);
    let mut count = f32x8::ZERO;
    for i in (0..s.r.len()).step_by(LANES) {
        let (dr, dg, db) = (lane(s.r, i) - yr, lane(s.g, i) - yg, lane(s.b, i) - yb);
        count += (dr * dr + dg * dg + db * db).cmp_eq(target).blend(f32x8::ONE, f32x8::ZERO);
    }
    hsum(count) as usize
}

fn norm(v: [f32; 3]) -> f32 {
    (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt()
}

impl Channels<'_> {
    fn point(&self, i: usize) -> [f32; 3] {
        [self.r[i], self.g[i], self.b[i]]
    }

    /// Number of samples equal to sample `i`.
    fn copies(&self, i: usize) -> usize {
        let p = self.point(i);
        (0..self.n).filter(|&j| self.point(j) == p).count()
    }

    /// Index of and squared distance to the first closest sample.
    fn closest(&self, y: [f32; 3]) -> (usize, f32) {
        (0..self.n)
            .map(|i| {
                let p = self.point(i);
                (i, (p[0] - y[0]).powi(2) + (p[1] - y[1]).powi(2) + (p[2] - y[2]).powi(2))
            })
            .fold((0, f32::INFINITY), |best, c| if c.1 < best.1 { c } else { best })
    }
}

/// Vertex test for sample `i`: `None` if it minimizes the distance sum,
/// otherwise a descent point away from it.
fn vertex_escape(s: Channels<'_>, i: usize, avx2: bool) -> Option<[f32; 3]> {
    let p = s.point(i);
    let sums = step(s, p, avx2);
    let r = norm(sums.pull);
    if r <= sums.coincident || sums.den == 0.0 {
        return None;
    }
    let k = (1.0 - sums.coincident / r) / sums.den;
    Some(std::array::from_fn(|c| p[c] + k * sums.pull[c]))
}

/// Samples already found not to be the minimizer. Once full, no further
/// samples are tested.
#[derive(Default)]
struct Rejected {
    idx: [usize; 8],
    len: usize,
}

impl Rejected {
    fn blocks(&self, i: usize) -> bool {
        self.len == self.idx.len() || self.idx[..self.len].contains(&i)
    }

    fn push(&mut self, i: usize) {
        self.idx[self.len] = i;
        self.len += 1;
    }
}

/// Weiszfeld in RGB with lane-split accumulators. Same iteration, vertex test
/// and stall rule as `median::geometric_median`, in single precision.
fn median_rgb(s: Channels<'_>, opts: WeiszfeldOptions) -> [f32; 3] {
    median_rgb_with(s, opts, use_avx2())
}

fn median_rgb_with(s: Channels<'_>, opts: WeiszfeldOptions, avx2: bool) -> [f32; 3] {
    if s.n == 1 {
        return s.point(0);
    }
    let tol = opts.tol as f32;
    let tol2 = tol * tol;
    let stall = STALL_GRADIENT as f32;
    let mut rejected = Rejected::default();
    let mut y = mean(s);
    for _ in 0..opts.max_iter {
        let sums = step(s, y, avx2);
        if sums.min_d2 < tol2 {
            let (i, _) = s.closest(y);
            if !rejected.blocks(i) {
                match vertex_escape(s, i, avx2) {
                    None => return s.point(i),
                    Some(away) => {
                        rejected.push(i);
                        y = away;
                        continue;
                    }
                }
            }
        }
        if sums.den == 0.0 {
            break;
        }
        let delta = sums.pull.map(|v| v / sums.den);
        let next = std::array::from_fn(|c| y[c] + delta[c]);
        let len = norm(delta);
        if len >= tol {
            y = next;
            continue;
        }
        if len * sums.den < stall {
            y = next;
            break;
        }
        // Short steps against a large gradient: nearby samples are holding the
        // iterate back. Only a closest sample carrying enough of the weight is
        // vertex-tested. Counting samples at the closest distance gives a
        // cheap upper bound on that weight.
        let held = count_at(s, y, sums.min_d2) as f32 / sums.min_d2.sqrt();
        if held < HELD_SHARE as f32 * sums.den {
            y = next;
            continue;
        }
        let (i, d2) = s.closest(y);
        let held = s.copies(i) as f32 / d2.sqrt();
        if held >= HELD_SHARE as f32 * sums.den && !rejected.blocks(i) {
            match vertex_escape(s, i, avx2) {
                None => return s.point(i),
                Some(away) => {
                    rejected.push(i);
                    y = if 2.0 / d2.sqrt() >= sums.den { away } else { next };
                    continue;
                }
            }
        }
        y = next;
    }
    if nearest_d2(s, y) < tol2 {
        let (i, _) = s.closest(y);
        if vertex_escape(s, i, avx2).is_none() {
            return s.point(i);
        }
    }
    y
}

fn to_rgb(c: [f32; 3]) -> Rgb {
    c.map(|v| v.round().clamp(0.0, 255.0) as u8)
}

/// Geometric median of RGB samples, rounded to 8 bits.
pub fn pixel_background(samples: &[Rgb], opts: WeiszfeldOptions) -> Result<Rgb> {
    if samples.is_empty() {
        return Err(Error::NoPoints);
    }
    let mut s = Samples::default();
    s.load(samples);
    Ok(to_rgb(median_rgb(s.view(0, samples.len()), opts)))
}

/// Background for one window of equally sized frames.
pub fn window_background(window: &[&RasterImage], opts: WeiszfeldOptions) -> Result<RasterImage> {
    let first = window.first().ok_or(Error::EmptySequence)?;
    let (w, h) = first.dimensions();
    let mut pixels = vec![[0u8; 3]; w * h];
    let n = window.len();
    let stride = padded_len(n);
    pixels.par_chunks_mut(w).enumerate().for_each_init(
        Samples::default,
        |s, (y, out)| {
            let rows: Vec<&[Rgb]> = window.iter().map(|f| f.row(y)).collect();
            for (t, tile) in out.chunks_mut(TILE).enumerate() {
                let x0 = t * TILE;
                s.reset(tile.len() * stride);
                // Transpose so each pixel's samples are contiguous.
                let Samples { r, g, b } = s;
                for (k, row) in rows.iter().enumerate() {
                    let dst = r.chunks_exact_mut(stride).zip(g.chunks_exact_mut(stride)).zip(b.chunks_exact_mut(stride));
                    for (((r, g), b), p) in dst.zip(&row[x0..x0 + tile.len()]) {
                        r[k] = p[0] as f32;
                        g[k] = p[1] as f32;
                        b[k] = p[2] as f32;
                    }
                }
                for (i, px) in tile.iter_mut().enumerate() {
                    *px = to_rgb(median_rgb(s.view(i * stride, n), opts));
                }
            }
        },
    );
    RasterImage::new(w, h, pixels)
}

/// Stream backgrounds for every frame of `source` into `sink`, in order.
///
/// At most `spec.width` decoded frames are resident at once and each frame
/// is loaded exactly once.
pub fn sliding_background_stream<S, F>(source: &S, spec: &WindowSpec, mut sink: F) -> Result<StreamStats>
where
    S: FrameSource + ?Sized,
    F: FnMut(usize, RasterImage) -> Result<()>,
{
    let len = source.len();
    if len == 0 {
        return Err(Error::EmptySequence);
    }
    if spec.width == 0 {
        return Err(Error::Config("background window width must be at least 1".into()));
    }
    let mut buffer: VecDeque<(usize, RasterImage)> = VecDeque::with_capacity(spec.width);
    let mut stats = StreamStats::default();
    let mut dims = None;
    let mut next = 0;
    for n in 0..len {
        let range = spec.range(n, len);
        while buffer.front().is_some_and(|(i, _)| *i < range.start) {
            buffer.pop_front();
        }
        while next < range.end {
            let frame = source.load(next)?;
            stats.decoded += 1;
            let expected = *dims.get_or_insert(frame.dimensions());
            if frame.dimensions() != expected {
                return Err(Error::DimensionMismatch {
                    frame: next,
                    expected,
                    found: frame.dimensions(),
                });
            }
            buffer.push_back((next, frame));
            next += 1;
            stats.peak_resident = stats.peak_resident.max(buffer.len());
        }
        let window: Vec<&RasterImage> = buffer
            .iter()
            .filter(|(i, _)| range.contains(i))
            .map(|(_, f)| f)
            .collect();
        sink(n, window_background(&window, spec.median)?)?;
    }
    Ok(stats)
}

pub fn sliding_background(frames: &[RasterImage], spec: &WindowSpec) -> Result<Vec<RasterImage>> {
    let mut out = Vec::with_capacity(frames.len());
    sliding_background_stream(frames, spec, |_, bg| {
        out.push(bg);
        Ok(())
    })?;
    Ok(out)
}
