//! Synthetic inputs shared by the criterion benchmarks.

use trailforge::RasterImage;

/// Deterministic textured frame of the given size.
pub fn textured_frame(width: usize, height: usize, seed: u32) -> RasterImage {
    RasterImage::from_fn(width, height, |x, y| {
        let mut h = (x as u32).wrapping_mul(0x9E37_79B1) ^ (y as u32).wrapping_mul(0x85EB_CA77) ^ seed;
        h ^= h >> 15;
        h = h.wrapping_mul(0x2C1B_3C6D);
        h ^= h >> 12;
        [h as u8, (h >> 8) as u8, (h >> 16) as u8]
    })
}
