//! Hole ("lake") and near-hole ("bay") filling.

use crate::imaging::Rect;

use super::{dilate8, disk_smooth_within, label_components, label_with, BitMask, Connectivity, LabelMap, SegmentationConfig};

/// Fill the background pockets of object `label` that do not reach its
/// bounding box border. Pockets are 4-connected.
pub fn fill_holes(m: &BitMask, lm: &LabelMap, label: u32) -> BitMask {
    let mut out = m.clone();
    let comps = lm.components();
    if let Some(c) = comps.get(label as usize - 1) {
        fill_object_holes(&mut out, lm, label, c.bbox);
    }
    out
}

/// Sets enclosed pixels in `out`; returns how many were newly set.
fn fill_object_holes(out: &mut BitMask, lm: &LabelMap, label: u32, bbox: Rect) -> usize {
    let (bw, bh) = (bbox.width, bbox.height);
    if bw < 3 || bh < 3 {
        return 0;
    }
    let inverted = BitMask::from_fn(bw, bh, |x, y| lm.get(bbox.x0 + x, bbox.y0 + y) != label);
    let pockets = label_with(&inverted, Connectivity::Four);
    if pockets.count() == 0 {
        return 0;
    }
    let mut touches = vec![false; pockets.count() as usize + 1];
    for x in 0..bw {
        touches[pockets.get(x, 0) as usize] = true;
        touches[pockets.get(x, bh - 1) as usize] = true;
    }
    for y in 0..bh {
        touches[pockets.get(0, y) as usize] = true;
        touches[pockets.get(bw - 1, y) as usize] = true;
    }
    let mut added = 0;
    for y in 0..bh {
        for x in 0..bw {
            let p = pockets.get(x, y);
            if p != 0 && !touches[p as usize] && !out.get(bbox.x0 + x, bbox.y0 + y) {
                out.set(bbox.x0 + x, bbox.y0 + y, true);
                added += 1;
            }
        }
    }
    added
}

/// Fill the holes of every 8-connected object in `m`.
pub fn fill_all_holes(m: &BitMask) -> BitMask {
    let lm = label_components(m);
    let mut out = m.clone();
    for c in lm.components() {
        fill_object_holes(&mut out, &lm, c.label, c.bbox);
    }
    out
}

fn grow(r: Rect, by: usize, w: usize, h: usize) -> Rect {
    let x0 = r.x0.saturating_sub(by);
    let y0 = r.y0.saturating_sub(by);
    Rect::new(x0, y0, (r.x1() + by).min(w) - x0, (r.y1() + by).min(h) - y0)
}

/// Iterated dilate, fill, smooth. Regions that become enclosed once the
/// foreground is dilated by one 8-connected step are filled on the undilated
/// mask, then the surrounding moat is removed by disk smoothing local to each
/// filled region, with a radius growing by one per iteration from the last
/// schedule radius. Ends with a plain hole fill.
pub fn fill_near_holes(m: &BitMask, cfg: &SegmentationConfig) -> BitMask {
    let (w, h) = m.dimensions();
    let last = cfg.disk_schedule.last();
    let base_radius = last.map_or(1, |s| s.radius);
    let majority = last.map_or(0.5, |s| s.majority);
    let mut cur = m.clone();
    for iter in 0..cfg.near_hole_max_iters {
        let dilated = dilate8(&cur);
        let sealed = fill_all_holes(&dilated);
        let enclosed = BitMask::from_bits(
            w,
            h,
            sealed.bits().iter().zip(dilated.bits()).map(|(&s, &d)| s && !d).collect(),
        );
        if enclosed.is_empty() {
            break;
        }
        let radius = base_radius + iter;
        let regions: Vec<Rect> = label_with(&enclosed, Connectivity::Four)
            .components()
            .iter()
            .map(|c| grow(c.bbox, radius + 1, w, h))
            .collect();
        let mut next = cur.clone();
        for (i, &e) in enclosed.bits().iter().enumerate() {
            if e {
                next.set(i % w, i / w, true);
            }
        }
        let next = disk_smooth_within(&next, radius, majority, &regions);
        if next == cur {
            break;
        }
        log::trace!("near-hole pass {iter}: radius {radius}, {} regions", regions.len());
        cur = next;
    }
    fill_all_holes(&cur)
}
