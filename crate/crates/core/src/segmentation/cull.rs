//! Removal of objects too small or too thin to be real foreground.

use super::{BitMask, LabelMap};

/// Drop components whose area is strictly below `min_area_fraction * frame_area`.
pub fn cull_small(lm: &LabelMap, frame_area: usize, min_area_fraction: f64) -> BitMask {
    let limit = min_area_fraction * frame_area as f64;
    let comps = lm.components();
    lm.to_mask(|l| comps[l as usize - 1].area as f64 >= limit)
}

/// Drop components whose bounding box is thinner than `min_thickness` or more
/// elongated than `min_aspect`.
pub fn cull_thin(lm: &LabelMap, min_thickness: usize, min_aspect: f64) -> BitMask {
    let comps = lm.components();
    lm.to_mask(|l| {
        let b = comps[l as usize - 1].bbox;
        let (lo, hi) = (b.width.min(b.height), b.width.max(b.height));
        lo >= min_thickness && hi as f64 / lo as f64 <= min_aspect
    })
}
