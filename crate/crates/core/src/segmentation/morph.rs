//! Pinhole removal, disk majority smoothing and 8-connected dilation.

use rayon::prelude::*;

use crate::imaging::Rect;

use super::{BitMask, DiskStep};

/// Flip every pixel whose in-bounds 4-neighbors all carry the opposite class.
/// One simultaneous pass.
pub fn remove_pinholes(m: &BitMask) -> BitMask {
    let (w, h) = m.dimensions();
    let bits = m.bits();
    let out = (0..w * h)
        .into_par_iter()
        .map(|i| {
            let (x, y) = (i % w, i / w);
            let v = bits[i];
            let mut seen = 0;
            let mut opposite = 0;
            let mut look = |j: usize| {
                seen += 1;
                if bits[j] != v {
                    opposite += 1;
                }
            };
            if x > 0 {
                look(i - 1);
            }
            if x + 1 < w {
                look(i + 1);
            }
            if y > 0 {
                look(i - w);
            }
            if y + 1 < h {
                look(i + w);
            }
            if seen > 0 && opposite == seen {
                !v
            } else {
                v
            }
        })
        .collect();
    BitMask::from_bits(w, h, out)
}

/// Half-widths of the lattice disk `dx^2 + dy^2 <= r^2`, indexed by `dy + r`.
fn disk_spans(radius: usize) -> Vec<usize> {
    let r = radius as i64;
    (-r..=r)
        .map(|dy| {
            let mut hw = 0;
            while (hw + 1) * (hw + 1) + dy * dy <= r * r {
                hw += 1;
            }
            hw as usize
        })
        .collect()
}

fn row_prefix(m: &BitMask) -> Vec<u32> {
    let (w, h) = m.dimensions();
    let mut p = vec![0u32; (w + 1) * h];
    for y in 0..h {
        let row = &m.bits()[y * w..(y + 1) * w];
        let dst = &mut p[y * (w + 1)..(y + 1) * (w + 1)];
        for x in 0..w {
            dst[x + 1] = dst[x] + row[x] as u32;
        }
    }
    p
}

fn disk_pixel(
    m: &BitMask,
    prefix: &[u32],
    spans: &[usize],
    radius: usize,
    majority: f64,
    x: usize,
    y: usize,
) -> bool {
    let (w, h) = m.dimensions();
    let mut fg = 0u64;
    let mut total = 0u64;
    let y_lo = y.saturating_sub(radius);
    let y_hi = (y + radius).min(h - 1);
    for yy in y_lo..=y_hi {
        let hw = spans[yy + radius - y];
        let x0 = x.saturating_sub(hw);
        let x1 = (x + hw).min(w - 1) + 1;
        let row = &prefix[yy * (w + 1)..];
        fg += (row[x1] - row[x0]) as u64;
        total += (x1 - x0) as u64;
    }
    fg as f64 > majority * total as f64
}

/// A pixel becomes foreground iff the foreground fraction of its in-bounds
/// disk of `radius` exceeds `majority`. All pixels update simultaneously.
pub fn disk_smooth(m: &BitMask, radius: usize, majority: f64) -> BitMask {
    let (w, h) = m.dimensions();
    let prefix = row_prefix(m);
    let spans = disk_spans(radius);
    let bits = (0..w * h)
        .into_par_iter()
        .map(|i| disk_pixel(m, &prefix, &spans, radius, majority, i % w, i / w))
        .collect();
    BitMask::from_bits(w, h, bits)
}

/// `disk_smooth` applied only to pixels inside `regions`; other pixels keep
/// their input value.
pub fn disk_smooth_within(m: &BitMask, radius: usize, majority: f64, regions: &[Rect]) -> BitMask {
    let prefix = row_prefix(m);
    let spans = disk_spans(radius);
    let mut out = m.clone();
    for r in regions {
        for y in r.y0..r.y1().min(m.height()) {
            for x in r.x0..r.x1().min(m.width()) {
                out.set(x, y, disk_pixel(m, &prefix, &spans, radius, majority, x, y));
            }
        }
    }
    out
}

pub fn smooth_schedule(m: &BitMask, schedule: &[DiskStep]) -> BitMask {
    schedule
        .iter()
        .fold(m.clone(), |acc, s| disk_smooth(&acc, s.radius, s.majority))
}

/// One step of dilation with the 3x3 (8-connected) structuring element.
pub fn dilate8(m: &BitMask) -> BitMask {
    let (w, h) = m.dimensions();
    BitMask::from_fn(w, h, |x, y| {
        let (x0, x1) = (x.saturating_sub(1), (x + 1).min(w - 1));
        let (y0, y1) = (y.saturating_sub(1), (y + 1).min(h - 1));
        (y0..=y1).any(|yy| (x0..=x1).any(|xx| m.get(xx, yy)))
    })
}
