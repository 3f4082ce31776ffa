//! Geometric median by Weiszfeld iteration.

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct WeiszfeldOptions {
    /// Convergence threshold on step length, also the radius within which
    /// an iterate snaps to an input point.
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for WeiszfeldOptions {
    fn default() -> Self {
        Self {
            tol: 0.05,
            max_iter: 100,
        }
    }
}

fn distance<const D: usize>(a: &[f64; D], b: &[f64; D]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt()
}

/// Where to go from input point `anchor` if it is not the minimizer.
///
/// `anchor` minimizes the distance sum exactly when the unit vectors from it
/// to the other points sum to a length no greater than its multiplicity.
/// Returns `None` in that case, otherwise the Vardi-Zhang step away from it.
pub(crate) fn vertex_escape<const D: usize>(
    anchor: [f64; D],
    points: impl Iterator<Item = [f64; D]>,
) -> Option<[f64; D]> {
    let mut multiplicity = 0.0;
    let mut pull = [0.0; D];
    let mut num = [0.0; D];
    let mut den = 0.0;
    for p in points {
        let d = distance(&anchor, &p);
        if d == 0.0 {
            multiplicity += 1.0;
            continue;
        }
        for k in 0..D {
            pull[k] += (p[k] - anchor[k]) / d;
            num[k] += p[k] / d;
        }
        den += 1.0 / d;
    }
    let r = pull.iter().map(|v| v * v).sum::<f64>().sqrt();
    if r <= multiplicity {
        return None;
    }
    let keep = 1.0 - multiplicity / r;
    Some(std::array::from_fn(|k| anchor[k] + keep * (num[k] / den - anchor[k])))
}

/// Net pull, in unit vectors, below which a short step counts as convergence.
/// Above it a short step means nearby input points are throttling the
/// iteration rather than the iterate having settled.
pub(crate) const STALL_GRADIENT: f64 = 0.5;

/// Minimum share of the Weiszfeld weight that the closest point and its
/// copies must carry before a stall is blamed on it.
pub(crate) const HELD_SHARE: f64 = 0.1;

/// Approximate the point minimizing the sum of Euclidean distances to `points`.
///
/// Starts from the coordinate-wise mean and stops when a step is shorter than
/// `tol`. An iterate closer than `tol` to an input point returns that point
/// verbatim when it is the minimizer; otherwise the iteration steps away
/// from it. A short step taken while the distance sum still has a clear
/// slope is treated as a stall next to an input point rather than as
/// convergence.
pub fn geometric_median<const D: usize>(
    points: &[[f64; D]],
    opts: WeiszfeldOptions,
) -> Result<[f64; D]> {
    let first = points.first().ok_or(Error::NoPoints)?;
    if points.len() == 1 {
        return Ok(*first);
    }
    let n = points.len() as f64;
    let mut y = [0.0; D];
    for p in points {
        for k in 0..D {
            y[k] += p[k];
        }
    }
    y.iter_mut().for_each(|c| *c /= n);

    let closest = |y: &[f64; D]| {
        (0..points.len())
            .map(|i| (i, distance(y, &points[i])))
            .min_by(|a, b| a.1.total_cmp(&b.1))
            .unwrap_or((0, f64::INFINITY))
    };
    let is_vertex = |i: usize| vertex_escape(points[i], points.iter().copied());
    // Input points already found not to be the minimizer.
    let mut rejected: Vec<usize> = Vec::new();
    for _ in 0..opts.max_iter {
        let (i, d) = closest(&y);
        if d < opts.tol && !rejected.contains(&i) {
            match is_vertex(i) {
                None => return Ok(points[i]),
                Some(away) => {
                    rejected.push(i);
                    y = away;
                    continue;
                }
            }
        }
        let mut num = [0.0; D];
        let mut den = 0.0;
        for p in points {
            let d = distance(&y, p);
            if d == 0.0 {
                continue;
            }
            let w = 1.0 / d;
            for k in 0..D {
                num[k] += w * p[k];
            }
            den += w;
        }
        let next = num.map(|c| c / den);
        let step = distance(&next, &y);
        if step >= opts.tol {
            y = next;
            continue;
        }
        if step * den < STALL_GRADIENT {
            y = next;
            break;
        }
        // Stalled. If the closest point carries enough of the weight it is
        // either the minimizer or in the way; otherwise keep iterating.
        let held = points.iter().filter(|p| **p == points[i]).count() as f64 / d;
        if held >= HELD_SHARE * den && !rejected.contains(&i) {
            match is_vertex(i) {
                None => return Ok(points[i]),
                Some(away) => {
                    rejected.push(i);
                    y = if 2.0 / d >= den { away } else { next };
                    continue;
                }
            }
        }
        y = next;
    }
    match closest(&y) {
        (i, d) if d < opts.tol && is_vertex(i).is_none() => Ok(points[i]),
        _ => Ok(y),
    }
}
