//! Frame and mask file I/O: PNG, binary PPM (P6) and numbered frame directories.

use std::fs::{self, File};
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};

use crate::error::{Error, Result};
use crate::imaging::{RasterImage, Rgb};
use crate::segmentation::BitMask;

/// File name of frame `index` inside a stage directory.
pub fn frame_file_name(index: usize, ext: &str) -> String {
    format!("frame_{index:06}.{ext}")
}

fn decode_err(path: &Path, message: impl ToString) -> Error {
    Error::Decode {
        path: path.to_path_buf(),
        message: message.to_string(),
    }
}

fn open_png(path: &Path) -> Result<png::Reader<BufReader<File>>> {
    let file = File::open(path).map_err(|e| Error::io(format!("open {}", path.display()), e))?;
    let mut decoder = png::Decoder::new(BufReader::new(file));
    decoder.set_transformations(png::Transformations::normalize_to_color8());
    decoder.read_info().map_err(|e| decode_err(path, e))
}

pub fn read_png(path: &Path) -> Result<RasterImage> {
    let mut reader = open_png(path)?;
    let size = reader
        .output_buffer_size()
        .ok_or_else(|| decode_err(path, "image too large"))?;
    let mut buf = vec![0u8; size];
    let info = reader.next_frame(&mut buf).map_err(|e| decode_err(path, e))?;
    let (w, h) = (info.width as usize, info.height as usize);
    let channels = info.color_type.samples();
    let mut pixels = Vec::with_capacity(w * h);
    for y in 0..h {
        let line = &buf[y * info.line_size..y * info.line_size + w * channels];
        for px in line.chunks_exact(channels) {
            pixels.push(match channels {
                1 | 2 => [px[0]; 3],
                _ => [px[0], px[1], px[2]],
            });
        }
    }
    RasterImage::new(w, h, pixels).map_err(|e| decode_err(path, e))
}

pub fn write_png(path: &Path, img: &RasterImage) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(format!("create {}", path.display()), e))?;
    let mut encoder = png::Encoder::new(BufWriter::new(file), img.width() as u32, img.height() as u32);
    encoder.set_color(png::ColorType::Rgb);
    encoder.set_depth(png::BitDepth::Eight);
    let mut writer = encoder
        .write_header()
        .map_err(|e| Error::io(format!("write {}", path.display()), e.into()))?;
    writer
        .write_image_data(img.as_bytes())
        .map_err(|e| Error::io(format!("write {}", path.display()), e.into()))?;
    writer
        .finish()
        .map_err(|e| Error::io(format!("write {}", path.display()), e.into()))
}

/// Write a mask as a 1-bit grayscale PNG (0 = background, 1 = white foreground).
pub fn write_mask_png(path: &Path, mask: &BitMask) -> Result<()> {
    let (w, h) = (mask.width(), mask.height());
    let stride = w.div_ceil(8);
    let mut data = vec![0u8; stride * h];
    for y in 0..h {
        for x in 0..w {
            if mask.get(x, y) {
                data[y * stride + x / 8] |= 0x80 >> (x % 8);
            }
        }
    }
    let file = File::create(path).map_err(|e| Error::io(format!("create {}", path.display()), e))?;
    let mut encoder = png::Encoder::new(BufWriter::new(file), w as u32, h as u32);
    encoder.set_color(png::ColorType::Grayscale);
    encoder.set_depth(png::BitDepth::One);
    let mut writer = encoder
        .write_header()
        .map_err(|e| Error::io(format!("write {}", path.display()), e.into()))?;
    writer
        .write_image_data(&data)
        .map_err(|e| Error::io(format!("write {}", path.display()), e.into()))?;
    writer
        .finish()
        .map_err(|e| Error::io(format!("write {}", path.display()), e.into()))
}

/// Read a mask PNG of any depth; nonzero luma is foreground.
pub fn read_mask_png(path: &Path) -> Result<BitMask> {
    let img = read_png(path)?;
    let bits = img.pixels().iter().map(|p| p[0] >= 128).collect();
    Ok(BitMask::from_bits(img.width(), img.height(), bits))
}

fn ppm_token<R: BufRead>(r: &mut R, path: &Path) -> Result<String> {
    let mut tok = String::new();
    let mut byte = [0u8; 1];
    loop {
        if r.read(&mut byte).map_err(|e| Error::io("read ppm header", e))? == 0 {
            return Err(decode_err(path, "truncated PPM header"));
        }
        let c = byte[0];
        if c == b'#' && tok.is_empty() {
            let mut skip = Vec::new();
            r.read_until(b'\n', &mut skip)
                .map_err(|e| Error::io("read ppm header", e))?;
        } else if c.is_ascii_whitespace() {
            if !tok.is_empty() {
                return Ok(tok);
            }
        } else {
            tok.push(c as char);
        }
    }
}

pub fn read_ppm(path: &Path) -> Result<RasterImage> {
    let file = File::open(path).map_err(|e| Error::io(format!("open {}", path.display()), e))?;
    let mut r = BufReader::new(file);
    if ppm_token(&mut r, path)? != "P6" {
        return Err(decode_err(path, "not a binary PPM (P6)"));
    }
    let mut num = |name: &str| -> Result<usize> {
        ppm_token(&mut r, path)?
            .parse()
            .map_err(|_| decode_err(path, format!("bad PPM {name}")))
    };
    let (w, h, maxval) = (num("width")?, num("height")?, num("maxval")?);
    if maxval != 255 {
        return Err(decode_err(path, format!("unsupported PPM maxval {maxval}")));
    }
    let mut data = vec![0u8; w * h * 3];
    r.read_exact(&mut data)
        .map_err(|_| decode_err(path, "truncated PPM pixel data"))?;
    let pixels: Vec<Rgb> = data.chunks_exact(3).map(|c| [c[0], c[1], c[2]]).collect();
    RasterImage::new(w, h, pixels).map_err(|e| decode_err(path, e))
}

pub fn write_ppm(path: &Path, img: &RasterImage) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(format!("create {}", path.display()), e))?;
    let mut w = BufWriter::new(file);
    write!(w, "P6\n{} {}\n255\n", img.width(), img.height())
        .and_then(|_| w.write_all(img.as_bytes()))
        .and_then(|_| w.flush())
        .map_err(|e| Error::io(format!("write {}", path.display()), e))
}

fn extension(path: &Path) -> Option<String> {
    path.extension()
        .and_then(|e| e.to_str())
        .map(|e| e.to_ascii_lowercase())
}

/// Decode a PNG or PPM frame, chosen by file extension.
pub fn read_frame(path: &Path) -> Result<RasterImage> {
    match extension(path).as_deref() {
        Some("ppm") => read_ppm(path),
        _ => read_png(path),
    }
}

pub fn write_frame(path: &Path, img: &RasterImage) -> Result<()> {
    match extension(path).as_deref() {
        Some("ppm") => write_ppm(path, img),
        _ => write_png(path, img),
    }
}

/// Dimensions from the file header, without decoding pixel data.
pub fn probe_frame(path: &Path) -> Result<(usize, usize)> {
    match extension(path).as_deref() {
        Some("ppm") => {
            let file = File::open(path).map_err(|e| Error::io(format!("open {}", path.display()), e))?;
            let mut r = BufReader::new(file);
            if ppm_token(&mut r, path)? != "P6" {
                return Err(decode_err(path, "not a binary PPM (P6)"));
            }
            let mut num = || -> Result<usize> {
                ppm_token(&mut r, path)?
                    .parse()
                    .map_err(|_| decode_err(path, "bad PPM header"))
            };
            Ok((num()?, num()?))
        }
        _ => {
            let reader = open_png(path)?;
            let info = reader.info();
            Ok((info.width as usize, info.height as usize))
        }
    }
}

/// Image files (`.png`, `.ppm`) in `dir`, in lexicographic = temporal order.
pub fn list_frames(dir: &Path) -> Result<Vec<PathBuf>> {
    let entries = fs::read_dir(dir).map_err(|e| Error::io(format!("read dir {}", dir.display()), e))?;
    let mut paths = Vec::new();
    for entry in entries {
        let path = entry
            .map_err(|e| Error::io(format!("read dir {}", dir.display()), e))?
            .path();
        if path.is_file() && matches!(extension(&path).as_deref(), Some("png" | "ppm")) {
            paths.push(path);
        }
    }
    paths.sort();
    Ok(paths)
}

/// Random access to a decoded frame sequence.
pub trait FrameSource: Sync {
    fn len(&self) -> usize;

    fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn load(&self, index: usize) -> Result<RasterImage>;
}

impl FrameSource for [RasterImage] {
    fn len(&self) -> usize {
        <[RasterImage]>::len(self)
    }

    fn load(&self, index: usize) -> Result<RasterImage> {
        Ok(self[index].clone())
    }
}

impl FrameSource for Vec<RasterImage> {
    fn len(&self) -> usize {
        self.as_slice().len()
    }

    fn load(&self, index: usize) -> Result<RasterImage> {
        Ok(self[index].clone())
    }
}

/// Frames decoded on demand from a directory listing.
pub struct FrameDir {
    paths: Vec<PathBuf>,
}

impl FrameDir {
    pub fn open(dir: &Path) -> Result<Self> {
        let paths = list_frames(dir)?;
        if paths.is_empty() {
            return Err(Error::NoFrames(dir.to_path_buf()));
        }
        Ok(Self { paths })
    }

    pub fn from_paths(paths: Vec<PathBuf>) -> Self {
        Self { paths }
    }

    pub fn paths(&self) -> &[PathBuf] {
        &self.paths
    }
}

impl FrameSource for FrameDir {
    fn len(&self) -> usize {
        self.paths.len()
    }

    fn load(&self, index: usize) -> Result<RasterImage> {
        read_frame(&self.paths[index])
    }
}

/// Wraps a source and counts decodes per frame.
pub struct CountingSource<S> {
    inner: S,
    counts: Vec<AtomicUsize>,
}

impl<S: FrameSource> CountingSource<S> {
    pub fn new(inner: S) -> Self {
        let counts = (0..inner.len()).map(|_| AtomicUsize::new(0)).collect();
        Self { inner, counts }
    }

    pub fn total_decodes(&self) -> usize {
        self.counts.iter().map(|c| c.load(Ordering::Relaxed)).sum()
    }

    pub fn decode_counts(&self) -> Vec<usize> {
        self.counts.iter().map(|c| c.load(Ordering::Relaxed)).collect()
    }

    pub fn into_inner(self) -> S {
        self.inner
    }
}

impl<S: FrameSource> FrameSource for CountingSource<S> {
    fn len(&self) -> usize {
        self.inner.len()
    }

    fn load(&self, index: usize) -> Result<RasterImage> {
        self.counts[index].fetch_add(1, Ordering::Relaxed);
        self.inner.load(index)
    }
}
