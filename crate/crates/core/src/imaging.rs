//! Image containers, color conversions and frame geometry.

use std::ops::{Add, Neg, Sub};

use crate::error::{Error, Result};

pub type Rgb = [u8; 3];

/// Rec. 601 luma weights.
pub const LUMA_WEIGHTS: [f64; 3] = [0.299, 0.587, 0.114];

/// An 8-bit RGB raster, row-major.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RasterImage {
    width: usize,
    height: usize,
    pixels: Vec<Rgb>,
}

impl RasterImage {
    pub fn new(width: usize, height: usize, pixels: Vec<Rgb>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::InvalidImage(format!("zero-sized image {width}x{height}")));
        }
        if pixels.len() != width * height {
            return Err(Error::InvalidImage(format!(
                "pixel count {} does not match {width}x{height}",
                pixels.len()
            )));
        }
        Ok(Self { width, height, pixels })
    }

    pub fn filled(width: usize, height: usize, color: Rgb) -> Self {
        assert!(width > 0 && height > 0, "zero-sized image");
        Self {
            width,
            height,
            pixels: vec![color; width * height],
        }
    }

    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> Rgb) -> Self {
        assert!(width > 0 && height > 0, "zero-sized image");
        let mut pixels = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                pixels.push(f(x, y));
            }
        }
        Self { width, height, pixels }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn dimensions(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    pub fn pixels(&self) -> &[Rgb] {
        &self.pixels
    }

    pub fn pixels_mut(&mut self) -> &mut [Rgb] {
        &mut self.pixels
    }

    pub fn into_pixels(self) -> Vec<Rgb> {
        self.pixels
    }

    pub fn get(&self, x: usize, y: usize) -> Rgb {
        self.pixels[y * self.width + x]
    }

    pub fn set(&mut self, x: usize, y: usize, color: Rgb) {
        self.pixels[y * self.width + x] = color;
    }

    pub fn row(&self, y: usize) -> &[Rgb] {
        &self.pixels[y * self.width..(y + 1) * self.width]
    }

    /// Interleaved RGB bytes.
    pub fn as_bytes(&self) -> &[u8] {
        self.pixels.as_flattened()
    }

    pub fn full_rect(&self) -> Rect {
        Rect::new(0, 0, self.width, self.height)
    }
}

/// Single-channel luma image with fractional values in 0..=255.
#[derive(Clone, Debug, PartialEq)]
pub struct GrayImage {
    width: usize,
    height: usize,
    values: Vec<f32>,
}

impl GrayImage {
    pub fn new(width: usize, height: usize, values: Vec<f32>) -> Result<Self> {
        if width == 0 || height == 0 || values.len() != width * height {
            return Err(Error::InvalidImage(format!(
                "gray image {width}x{height} with {} values",
                values.len()
            )));
        }
        Ok(Self { width, height, values })
    }

    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> f32) -> Self {
        let mut values = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                values.push(f(x, y));
            }
        }
        Self { width, height, values }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn values(&self) -> &[f32] {
        &self.values
    }

    pub fn get(&self, x: usize, y: usize) -> f32 {
        self.values[y * self.width + x]
    }

    pub fn row(&self, y: usize) -> &[f32] {
        &self.values[y * self.width..(y + 1) * self.width]
    }

    pub fn full_rect(&self) -> Rect {
        Rect::new(0, 0, self.width, self.height)
    }
}

/// Full-range YCbCr color with chroma centered at 128.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct YccPixel {
    pub y: f64,
    pub cb: f64,
    pub cr: f64,
}

/// Axis-aligned pixel rectangle.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Rect {
    pub x0: usize,
    pub y0: usize,
    pub width: usize,
    pub height: usize,
}

impl Rect {
    pub const fn new(x0: usize, y0: usize, width: usize, height: usize) -> Self {
        Self { x0, y0, width, height }
    }

    pub fn x1(&self) -> usize {
        self.x0 + self.width
    }

    pub fn y1(&self) -> usize {
        self.y0 + self.height
    }

    pub fn area(&self) -> usize {
        self.width * self.height
    }

    pub fn is_empty(&self) -> bool {
        self.width == 0 || self.height == 0
    }

    pub fn fits_within(&self, width: usize, height: usize) -> bool {
        !self.is_empty() && self.x1() <= width && self.y1() <= height
    }

    pub fn contains(&self, x: usize, y: usize) -> bool {
        x >= self.x0 && x < self.x1() && y >= self.y0 && y < self.y1()
    }

    pub fn center(&self) -> (f64, f64) {
        (
            self.x0 as f64 + self.width as f64 / 2.0,
            self.y0 as f64 + self.height as f64 / 2.0,
        )
    }

    pub fn diagonal(&self) -> f64 {
        (self.width as f64).hypot(self.height as f64)
    }

    pub fn intersect(&self, other: &Rect) -> Option<Rect> {
        let x0 = self.x0.max(other.x0);
        let y0 = self.y0.max(other.y0);
        let x1 = self.x1().min(other.x1());
        let y1 = self.y1().min(other.y1());
        (x1 > x0 && y1 > y0).then(|| Rect::new(x0, y0, x1 - x0, y1 - y0))
    }
}

/// Integer frame translation.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash)]
pub struct Offset2D {
    pub dx: i64,
    pub dy: i64,
}

impl Offset2D {
    pub const ZERO: Offset2D = Offset2D { dx: 0, dy: 0 };

    pub const fn new(dx: i64, dy: i64) -> Self {
        Self { dx, dy }
    }

    pub fn manhattan(&self) -> i64 {
        self.dx.abs() + self.dy.abs()
    }
}

impl Add for Offset2D {
    type Output = Offset2D;
    fn add(self, rhs: Offset2D) -> Offset2D {
        Offset2D::new(self.dx + rhs.dx, self.dy + rhs.dy)
    }
}

impl Sub for Offset2D {
    type Output = Offset2D;
    fn sub(self, rhs: Offset2D) -> Offset2D {
        Offset2D::new(self.dx - rhs.dx, self.dy - rhs.dy)
    }
}

impl Neg for Offset2D {
    type Output = Offset2D;
    fn neg(self) -> Offset2D {
        Offset2D::new(-self.dx, -self.dy)
    }
}

pub fn luma(p: Rgb) -> f64 {
    LUMA_WEIGHTS[0] * p[0] as f64 + LUMA_WEIGHTS[1] * p[1] as f64 + LUMA_WEIGHTS[2] * p[2] as f64
}

pub fn to_grayscale(img: &RasterImage) -> GrayImage {
    let values = img.pixels().iter().map(|&p| luma(p) as f32).collect();
    GrayImage {
        width: img.width(),
        height: img.height(),
        values,
    }
}

pub fn rgb_to_ycc(p: Rgb) -> YccPixel {
    let [r, g, b] = p.map(f64::from);
    YccPixel {
        y: 0.299 * r + 0.587 * g + 0.114 * b,
        cb: (128.0 - 0.168736 * r - 0.331264 * g + 0.5 * b).clamp(0.0, 255.0),
        cr: (128.0 + 0.5 * r - 0.418688 * g - 0.081312 * b).clamp(0.0, 255.0),
    }
}

/// Euclidean distance in YCbCr with both chroma axes scaled by `chroma_weight`.
pub fn color_distance(a: YccPixel, b: YccPixel, chroma_weight: f64) -> f64 {
    let dy = a.y - b.y;
    let dcb = a.cb - b.cb;
    let dcr = a.cr - b.cr;
    (dy * dy + chroma_weight * chroma_weight * (dcb * dcb + dcr * dcr)).sqrt()
}

/// Shift `img` by `offset` and cut out `crop`.
///
/// Output pixel `(x, y)` reads input `(crop.x0 + x - dx, crop.y0 + y - dy)`.
pub fn translate_crop(img: &RasterImage, offset: Offset2D, crop: Rect) -> Result<RasterImage> {
    if crop.is_empty() {
        return Err(Error::CropExceedsFrame);
    }
    let sx = crop.x0 as i64 - offset.dx;
    let sy = crop.y0 as i64 - offset.dy;
    if sx < 0
        || sy < 0
        || sx + crop.width as i64 > img.width() as i64
        || sy + crop.height as i64 > img.height() as i64
    {
        return Err(Error::CropExceedsFrame);
    }
    let (sx, sy) = (sx as usize, sy as usize);
    let mut pixels = Vec::with_capacity(crop.area());
    for y in 0..crop.height {
        pixels.extend_from_slice(&img.row(sy + y)[sx..sx + crop.width]);
    }
    RasterImage::new(crop.width, crop.height, pixels)
}
