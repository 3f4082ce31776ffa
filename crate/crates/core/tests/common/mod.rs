//! Synthetic scenes shared by the integration and acceptance tests.
#![allow(dead_code)]

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};
use trailforge::frameio::{frame_file_name, write_png};
use trailforge::{BitMask, Offset2D, RasterImage, Rect, Rgb};

pub fn rng(seed: u64) -> StdRng {
    StdRng::seed_from_u64(seed)
}

/// Per-pixel uniform noise: every block is unique and high contrast.
pub fn noise_image(width: usize, height: usize, rng: &mut StdRng) -> RasterImage {
    let pixels = (0..width * height).map(|_| rng.gen::<[u8; 3]>()).collect();
    RasterImage::new(width, height, pixels).unwrap()
}

/// Low-amplitude texture around a base color, quiet enough that it never
/// crosses the segmentation threshold on its own.
pub fn plate(width: usize, height: usize, base: Rgb, rng: &mut StdRng) -> RasterImage {
    let pixels = (0..width * height)
        .map(|_| base.map(|c| (c as i32 + rng.gen_range(-3..=3)).clamp(0, 255) as u8))
        .collect();
    RasterImage::new(width, height, pixels).unwrap()
}

/// Cumulative camera positions of a random integer walk starting at zero.
pub fn random_walk(n: usize, max_step: i64, rng: &mut StdRng) -> Vec<Offset2D> {
    let mut pos = Offset2D::ZERO;
    let mut out = vec![pos];
    for _ in 1..n {
        pos = pos + Offset2D::new(rng.gen_range(-max_step..=max_step), rng.gen_range(-max_step..=max_step));
        out.push(pos);
    }
    out
}

/// A shaken sequence cut from `master`: frame i shows the scene moved by `walk[i]`.
///
/// Returns the frames and the master-space origin of frame 0.
pub fn shaken_sequence(
    master: &RasterImage,
    width: usize,
    height: usize,
    walk: &[Offset2D],
) -> (Vec<RasterImage>, (usize, usize)) {
    let bx = walk.iter().map(|w| w.dx).max().unwrap().max(0) as usize;
    let by = walk.iter().map(|w| w.dy).max().unwrap().max(0) as usize;
    let frames = walk
        .iter()
        .map(|w| {
            let ox = (bx as i64 - w.dx) as usize;
            let oy = (by as i64 - w.dy) as usize;
            assert!(ox + width <= master.width() && oy + height <= master.height());
            RasterImage::from_fn(width, height, |x, y| master.get(ox + x, oy + y))
        })
        .collect();
    (frames, (bx, by))
}

/// Master large enough to cut a `width` x `height` view at every walk position.
pub fn master_for_walk(width: usize, height: usize, walk: &[Offset2D], rng: &mut StdRng) -> RasterImage {
    let span = |f: fn(&Offset2D) -> i64| {
        let max = walk.iter().map(f).max().unwrap().max(0);
        let min = walk.iter().map(f).min().unwrap().min(0);
        (max - min) as usize
    };
    noise_image(width + span(|w| w.dx), height + span(|w| w.dy), rng)
}

pub fn crop(img: &RasterImage, r: Rect) -> RasterImage {
    RasterImage::from_fn(r.width, r.height, |x, y| img.get(r.x0 + x, r.y0 + y))
}

/// Digital disk of diameter `d` in a `d` x `d` box.
pub fn disk_shape(d: usize) -> BitMask {
    let c = (d as f64 - 1.0) / 2.0;
    let r2 = (d as f64 / 2.0).powi(2);
    BitMask::from_fn(d, d, |x, y| (x as f64 - c).powi(2) + (y as f64 - c).powi(2) <= r2)
}

/// Paint `color` over `img` wherever `shape` (placed at `at`) is set.
pub fn paint(img: &mut RasterImage, shape: &BitMask, at: (i64, i64), color: Rgb) {
    for y in 0..shape.height() {
        for x in 0..shape.width() {
            let (px, py) = (at.0 + x as i64, at.1 + y as i64);
            if shape.get(x, y) && px >= 0 && py >= 0 && (px as usize) < img.width() && (py as usize) < img.height() {
                img.set(px as usize, py as usize, color);
            }
        }
    }
}

/// Mask of `shape` placed at `at` in a `width` x `height` frame.
pub fn placed(width: usize, height: usize, shape: &BitMask, at: (usize, usize)) -> BitMask {
    BitMask::from_fn(width, height, |x, y| {
        x >= at.0 && y >= at.1 && x - at.0 < shape.width() && y - at.1 < shape.height() && shape.get(x - at.0, y - at.1)
    })
}

pub const SPRITE_COLOR: Rgb = [200, 40, 40];
pub const SALT_COLOR: Rgb = [250, 250, 20];
pub const GLINT_COLOR: Rgb = [255, 255, 255];

/// The segmentation scene: a 40 x 40 square sprite with an 8 x 8 interior
/// hole showing the plate, 200 isolated salt pixels and a 1 x 300 glint.
pub struct SegmentationScene {
    pub plate: RasterImage,
    pub frame: RasterImage,
    /// The sprite with its hole filled.
    pub solid_sprite: BitMask,
}

pub fn segmentation_scene(plate_seed: u64, salt_seed: u64, sprite_at: (usize, usize)) -> SegmentationScene {
    let (w, h) = (400, 320);
    let plate = plate(w, h, [90, 110, 100], &mut rng(plate_seed));
    let mut r = rng(salt_seed);
    let mut frame = plate.clone();
    let sprite = BitMask::from_fn(40, 40, |_, _| true);
    paint(&mut frame, &sprite, (sprite_at.0 as i64, sprite_at.1 as i64), SPRITE_COLOR);
    let hole = Rect::new(sprite_at.0 + 16, sprite_at.1 + 16, 8, 8);
    for y in hole.y0..hole.y1() {
        for x in hole.x0..hole.x1() {
            frame.set(x, y, plate.get(x, y));
        }
    }
    let glint_y = 20;
    for x in 50..350 {
        frame.set(x, glint_y, GLINT_COLOR);
    }
    let solid_sprite = placed(w, h, &sprite, sprite_at);
    // salt: isolated single pixels away from the sprite and glint
    let keep_out = Rect::new(sprite_at.0.saturating_sub(3), sprite_at.1.saturating_sub(3), 46, 46);
    let mut salted = BitMask::new(w, h);
    let mut placed_count = 0;
    while placed_count < 200 {
        let (x, y) = (r.gen_range(1..w - 1), r.gen_range(1..h - 1));
        let near_salt = (x - 1..=x + 1).any(|sx| (y - 1..=y + 1).any(|sy| salted.get(sx, sy)));
        if keep_out.contains(x, y) || y.abs_diff(glint_y) <= 1 || near_salt {
            continue;
        }
        salted.set(x, y, true);
        frame.set(x, y, SALT_COLOR);
        placed_count += 1;
    }
    SegmentationScene {
        plate,
        frame,
        solid_sprite,
    }
}

/// A short shaken sequence of the segmentation scene with the sprite moving
/// across the plate.
pub fn moving_sprite_sequence(n: usize, seed: u64) -> Vec<RasterImage> {
    let mut r = rng(seed);
    let walk = random_walk(n, 2, &mut r);
    (0..n)
        .map(|i| {
            let scene = segmentation_scene(seed, seed + 1 + i as u64, (30 + 12 * i, 140 + (i % 5) * 3));
            // noise strip keeps blocks matchable; shift the whole frame by the walk
            let mut textured = scene.frame.clone();
            for y in 0..textured.height() {
                for x in 0..textured.width() {
                    if y >= 260 {
                        let v = ((x * 7919 + y * 104_729) % 251) as u8;
                        textured.set(x, y, [v, v.wrapping_mul(3), v.wrapping_add(90)]);
                    }
                }
            }
            let wk = walk[i];
            RasterImage::from_fn(textured.width(), textured.height(), |x, y| {
                let sx = (x as i64 - wk.dx).clamp(0, textured.width() as i64 - 1) as usize;
                let sy = (y as i64 - wk.dy).clamp(0, textured.height() as i64 - 1) as usize;
                textured.get(sx, sy)
            })
        })
        .collect()
}

pub fn write_sequence(dir: &Path, frames: &[RasterImage]) {
    fs::create_dir_all(dir).unwrap();
    for (i, f) in frames.iter().enumerate() {
        write_png(&dir.join(frame_file_name(i, "png")), f).unwrap();
    }
}

/// Every file under `dir` (recursively) with its bytes, keyed by relative path.
pub fn snapshot(dir: &Path) -> BTreeMap<String, Vec<u8>> {
    fn walk(root: &Path, dir: &Path, out: &mut BTreeMap<String, Vec<u8>>) {
        for entry in fs::read_dir(dir).unwrap() {
            let p = entry.unwrap().path();
            if p.is_dir() {
                walk(root, &p, out);
            } else {
                let rel = p.strip_prefix(root).unwrap().to_string_lossy().into_owned();
                out.insert(rel, fs::read(&p).unwrap());
            }
        }
    }
    let mut out = BTreeMap::new();
    walk(dir, dir, &mut out);
    out
}
