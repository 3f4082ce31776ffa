//! Content hashing and per-stage cache manifests.

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};

const FNV_OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
const FNV_PRIME: u64 = 0x0000_0100_0000_01b3;

/// Streaming 64-bit FNV-1a hasher.
#[derive(Clone, Copy, Debug)]
pub struct Fnv1a(u64);

impl Default for Fnv1a {
    fn default() -> Self {
        Self(FNV_OFFSET)
    }
}

impl Fnv1a {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn write(&mut self, bytes: &[u8]) {
        for &b in bytes {
            self.0 ^= b as u64;
            self.0 = self.0.wrapping_mul(FNV_PRIME);
        }
    }

    pub fn finish(self) -> u64 {
        self.0
    }
}

pub fn fnv1a(bytes: &[u8]) -> u64 {
    let mut h = Fnv1a::new();
    h.write(bytes);
    h.finish()
}

/// Hash the names and contents of `files`, in order.
pub fn hash_files<P: AsRef<Path>>(files: &[P]) -> Result<u64> {
    let mut h = Fnv1a::new();
    for f in files {
        let f = f.as_ref();
        let name = f.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
        h.write(name.as_bytes());
        h.write(&[0]);
        let bytes = fs::read(f).map_err(|e| Error::io(format!("read {}", f.display()), e))?;
        h.write(&(bytes.len() as u64).to_le_bytes());
        h.write(&bytes);
    }
    Ok(h.finish())
}

/// Record of a completed stage, stored as `manifest.txt` in its directory.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct StageManifest {
    pub stage: String,
    pub input_hash: u64,
    pub config_hash: u64,
    pub frames: usize,
    pub complete: bool,
}

pub const MANIFEST_FILE: &str = "manifest.txt";

impl StageManifest {
    pub fn to_text(&self) -> String {
        format!(
            "stage\t{}\ninput_hash\t{:016x}\nconfig_hash\t{:016x}\nframes\t{}\ncomplete\t{}\n",
            self.stage, self.input_hash, self.config_hash, self.frames, self.complete
        )
    }

    pub fn parse(text: &str) -> Option<Self> {
        let mut m = StageManifest {
            stage: String::new(),
            input_hash: 0,
            config_hash: 0,
            frames: 0,
            complete: false,
        };
        let mut seen = 0;
        for line in text.lines() {
            let (k, v) = line.split_once('\t')?;
            match k {
                "stage" => m.stage = v.to_string(),
                "input_hash" => m.input_hash = u64::from_str_radix(v, 16).ok()?,
                "config_hash" => m.config_hash = u64::from_str_radix(v, 16).ok()?,
                "frames" => m.frames = v.parse().ok()?,
                "complete" => m.complete = v.parse().ok()?,
                _ => return None,
            }
            seen += 1;
        }
        (seen == 5).then_some(m)
    }

    pub fn read(dir: &Path) -> Option<Self> {
        Self::parse(&fs::read_to_string(dir.join(MANIFEST_FILE)).ok()?)
    }

    pub fn write(&self, dir: &Path) -> Result<()> {
        let path = dir.join(MANIFEST_FILE);
        fs::write(&path, self.to_text()).map_err(|e| Error::io(format!("write {}", path.display()), e))
    }

    /// True when this manifest certifies outputs for the given inputs.
    pub fn matches(&self, stage: &str, input_hash: u64, config_hash: u64, frames: usize) -> bool {
        self.complete
            && self.stage == stage
            && self.input_hash == input_hash
            && self.config_hash == config_hash
            && self.frames == frames
    }
}
