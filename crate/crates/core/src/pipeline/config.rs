//! Pipeline configuration: a flat `key = value` file plus overrides.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::background::{WindowAlignment, WindowSpec};
use crate::deshake::DeshakeConfig;
use crate::error::{Error, Result};
use crate::ghosts::GhostConfig;
use crate::imaging::Rect;
use crate::segmentation::{DiskStep, SegmentationConfig};
use crate::trails::{BackgroundStyle, CombineRule, FadeCurve, RenderConfig};

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Stage {
    Deshake,
    Background,
    Segment,
    Ghosts,
    Render,
}

impl Stage {
    pub const ALL: [Stage; 5] = [
        Stage::Deshake,
        Stage::Background,
        Stage::Segment,
        Stage::Ghosts,
        Stage::Render,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Stage::Deshake => "deshake",
            Stage::Background => "background",
            Stage::Segment => "segment",
            Stage::Ghosts => "ghosts",
            Stage::Render => "render",
        }
    }

    /// Directory under the work dir holding this stage's outputs.
    pub fn dir_name(self) -> &'static str {
        match self {
            Stage::Deshake => "stable",
            Stage::Background => "bg",
            Stage::Segment => "fg",
            Stage::Ghosts => "ghosts",
            Stage::Render => "out",
        }
    }
}

impl FromStr for Stage {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Stage::ALL
            .into_iter()
            .find(|st| st.name() == s.trim())
            .ok_or_else(|| Error::Config(format!("unknown stage '{}'", s.trim())))
    }
}

/// Parse a comma-separated stage list into pipeline order.
pub fn parse_stages(list: &str) -> Result<Vec<Stage>> {
    let mut stages = list
        .split(',')
        .filter(|s| !s.trim().is_empty())
        .map(str::parse)
        .collect::<Result<Vec<Stage>>>()?;
    stages.sort();
    stages.dedup();
    Ok(stages)
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum Threads {
    #[default]
    Auto,
    Fixed(usize),
}

#[derive(Clone, Debug, PartialEq)]
pub struct PipelineConfig {
    pub input_dir: PathBuf,
    pub work_dir: PathBuf,
    pub stages: Vec<Stage>,
    pub threads: Threads,
    pub deshake: DeshakeConfig,
    pub background: WindowSpec,
    pub segmentation: SegmentationConfig,
    pub render: RenderConfig,
    /// Frame rate substituted into the encoder command.
    pub fps: f64,
    pub ghosts: GhostConfig,
    pub ghost_overlay: bool,
    /// External encoder command template run after rendering.
    pub encode: Option<String>,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            input_dir: PathBuf::from("frames"),
            work_dir: PathBuf::from("work"),
            stages: Stage::ALL.to_vec(),
            threads: Threads::Auto,
            deshake: DeshakeConfig::default(),
            background: WindowSpec::default(),
            segmentation: SegmentationConfig::default(),
            render: RenderConfig::default(),
            fps: 30.0,
            ghosts: GhostConfig::default(),
            ghost_overlay: false,
            encode: None,
        }
    }
}

fn parse_num<T: FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .parse()
        .map_err(|_| Error::Config(format!("{key}: cannot parse '{value}'")))
}

fn parse_bool(key: &str, value: &str) -> Result<bool> {
    match value {
        "true" | "yes" | "on" | "1" => Ok(true),
        "false" | "no" | "off" | "0" => Ok(false),
        _ => Err(Error::Config(format!("{key}: expected true or false, got '{value}'"))),
    }
}

fn parse_rect(key: &str, value: &str) -> Result<Option<Rect>> {
    if value == "none" || value.is_empty() {
        return Ok(None);
    }
    let parts = value
        .split(',')
        .map(|p| parse_num::<usize>(key, p.trim()))
        .collect::<Result<Vec<_>>>()?;
    match parts[..] {
        [x0, y0, w, h] => Ok(Some(Rect::new(x0, y0, w, h))),
        _ => Err(Error::Config(format!("{key}: expected x0,y0,width,height"))),
    }
}

fn parse_schedule(key: &str, value: &str) -> Result<Vec<DiskStep>> {
    value
        .split(',')
        .filter(|s| !s.trim().is_empty())
        .map(|step| {
            let (r, m) = step
                .trim()
                .split_once(':')
                .ok_or_else(|| Error::Config(format!("{key}: expected radius:majority pairs")))?;
            Ok(DiskStep {
                radius: parse_num(key, r.trim())?,
                majority: parse_num(key, m.trim())?,
            })
        })
        .collect()
}

fn curve_name(c: FadeCurve) -> &'static str {
    match c {
        FadeCurve::Linear => "linear",
        FadeCurve::Quadratic => "quadratic",
        FadeCurve::Cubic => "cubic",
    }
}

fn style_name(s: BackgroundStyle) -> &'static str {
    match s {
        BackgroundStyle::Normal => "normal",
        BackgroundStyle::Desaturated => "desaturated",
        BackgroundStyle::Erased => "erased",
    }
}

fn combine_name(c: CombineRule) -> &'static str {
    match c {
        CombineRule::Heaviest => "heaviest",
        CombineRule::Rescale => "rescale",
        CombineRule::Accumulate => "accumulate",
    }
}

fn alignment_name(a: WindowAlignment) -> &'static str {
    match a {
        WindowAlignment::Centered => "centered",
        WindowAlignment::Trailing => "trailing",
    }
}

fn one_of<T: Copy>(key: &str, value: &str, options: &[(&str, T)]) -> Result<T> {
    options
        .iter()
        .find(|(name, _)| *name == value)
        .map(|(_, v)| *v)
        .ok_or_else(|| {
            let names: Vec<&str> = options.iter().map(|(n, _)| *n).collect();
            Error::Config(format!("{key}: expected one of {}, got '{value}'", names.join("|")))
        })
}

impl PipelineConfig {
    /// Apply one `key = value` setting. Relative paths resolve against `base`.
    pub fn set(&mut self, key: &str, value: &str, base: Option<&Path>) -> Result<()> {
        let key = key.trim();
        let value = value.trim();
        let path = |v: &str| match base {
            Some(b) if Path::new(v).is_relative() => b.join(v),
            _ => PathBuf::from(v),
        };
        match key {
            "input_dir" => self.input_dir = path(value),
            "work_dir" => self.work_dir = path(value),
            "stages" => self.stages = parse_stages(value)?,
            "threads" => {
                self.threads = if value == "auto" {
                    Threads::Auto
                } else {
                    Threads::Fixed(parse_num(key, value)?)
                }
            }
            "deshake.max_offset" => self.deshake.max_offset = parse_num(key, value)?,
            "deshake.block_size" => self.deshake.block_size = parse_num(key, value)?,
            "deshake.contrast_threshold" => self.deshake.contrast_threshold = parse_num(key, value)?,
            "deshake.subregion" => self.deshake.subregion = parse_rect(key, value)?,
            "background.width" => self.background.width = parse_num(key, value)?,
            "background.alignment" => {
                self.background.alignment = one_of(
                    key,
                    value,
                    &[("centered", WindowAlignment::Centered), ("trailing", WindowAlignment::Trailing)],
                )?
            }
            "background.median_tol" => self.background.median.tol = parse_num(key, value)?,
            "background.median_max_iter" => self.background.median.max_iter = parse_num(key, value)?,
            "segment.color_threshold" => self.segmentation.color_threshold = parse_num(key, value)?,
            "segment.chroma_weight" => self.segmentation.chroma_weight = parse_num(key, value)?,
            "segment.disk_schedule" => self.segmentation.disk_schedule = parse_schedule(key, value)?,
            "segment.min_area_fraction" => self.segmentation.min_area_fraction = parse_num(key, value)?,
            "segment.min_thickness" => self.segmentation.min_thickness = parse_num(key, value)?,
            "segment.min_aspect" => self.segmentation.min_aspect = parse_num(key, value)?,
            "segment.near_hole_max_iters" => self.segmentation.near_hole_max_iters = parse_num(key, value)?,
            "render.pre_frames" => self.render.profile.pre_frames = parse_num(key, value)?,
            "render.post_frames" => self.render.profile.post_frames = parse_num(key, value)?,
            "render.curve" => {
                self.render.profile.curve = one_of(
                    key,
                    value,
                    &[
                        ("linear", FadeCurve::Linear),
                        ("quadratic", FadeCurve::Quadratic),
                        ("cubic", FadeCurve::Cubic),
                    ],
                )?
            }
            "render.background_style" => {
                self.render.background_style = one_of(
                    key,
                    value,
                    &[
                        ("normal", BackgroundStyle::Normal),
                        ("desaturated", BackgroundStyle::Desaturated),
                        ("erased", BackgroundStyle::Erased),
                    ],
                )?
            }
            "render.combine" => {
                self.render.combine = one_of(
                    key,
                    value,
                    &[
                        ("heaviest", CombineRule::Heaviest),
                        ("rescale", CombineRule::Rescale),
                        ("accumulate", CombineRule::Accumulate),
                    ],
                )?
            }
            "render.fps" => self.fps = parse_num(key, value)?,
            "render.encode" => self.encode = (!value.is_empty()).then(|| value.to_string()),
            "ghosts.proximity_factor" => self.ghosts.proximity_factor = parse_num(key, value)?,
            "ghosts.area_tol" => self.ghosts.area_tol = parse_num(key, value)?,
            "ghosts.comp_tol" => self.ghosts.comp_tol = parse_num(key, value)?,
            "ghosts.spread_threshold" => self.ghosts.spread_threshold = parse_num(key, value)?,
            "ghosts.match_tol" => self.ghosts.match_tol = parse_num(key, value)?,
            "ghosts.dilation_radius" => self.ghosts.dilation_radius = parse_num(key, value)?,
            "ghosts.overlay" => self.ghost_overlay = parse_bool(key, value)?,
            _ => return Err(Error::Config(format!("unknown key '{key}'"))),
        }
        Ok(())
    }

    /// Apply a `key=value` override as given on the command line.
    pub fn set_override(&mut self, assignment: &str) -> Result<()> {
        let (k, v) = assignment
            .split_once('=')
            .ok_or_else(|| Error::Config(format!("override '{assignment}' is not key=value")))?;
        self.set(k, v, None)
    }

    /// Parse config text; relative paths resolve against `base`.
    pub fn parse(text: &str, base: Option<&Path>) -> Result<Self> {
        let mut cfg = Self::default();
        for (n, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("line {}: expected key = value", n + 1)))?;
            cfg.set(k, v, base)
                .map_err(|e| Error::Config(format!("line {}: {}", n + 1, strip_prefix(&e))))?;
        }
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::parse(&text, path.parent())
    }

    /// Canonical text of the settings that influence `stage`'s outputs.
    pub fn stage_text(&self, stage: Stage) -> String {
        let mut s = String::new();
        match stage {
            Stage::Deshake => {
                let d = &self.deshake;
                let sub = d.subregion.map_or("none".to_string(), |r| {
                    format!("{},{},{},{}", r.x0, r.y0, r.width, r.height)
                });
                let _ = writeln!(s, "deshake.max_offset={}", d.max_offset);
                let _ = writeln!(s, "deshake.block_size={}", d.block_size);
                let _ = writeln!(s, "deshake.contrast_threshold={:?}", d.contrast_threshold);
                let _ = writeln!(s, "deshake.subregion={sub}");
                let _ = writeln!(s, "deshake.median={:?},{}", d.median.tol, d.median.max_iter);
            }
            Stage::Background => {
                let b = &self.background;
                let _ = writeln!(s, "background.width={}", b.width);
                let _ = writeln!(s, "background.alignment={}", alignment_name(b.alignment));
                let _ = writeln!(s, "background.median_tol={:?}", b.median.tol);
                let _ = writeln!(s, "background.median_max_iter={}", b.median.max_iter);
            }
            Stage::Segment => {
                let g = &self.segmentation;
                let sched: Vec<String> = g
                    .disk_schedule
                    .iter()
                    .map(|d| format!("{}:{:?}", d.radius, d.majority))
                    .collect();
                let _ = writeln!(s, "segment.color_threshold={:?}", g.color_threshold);
                let _ = writeln!(s, "segment.chroma_weight={:?}", g.chroma_weight);
                let _ = writeln!(s, "segment.disk_schedule={}", sched.join(","));
                let _ = writeln!(s, "segment.min_area_fraction={:?}", g.min_area_fraction);
                let _ = writeln!(s, "segment.min_thickness={}", g.min_thickness);
                let _ = writeln!(s, "segment.min_aspect={:?}", g.min_aspect);
                let _ = writeln!(s, "segment.near_hole_max_iters={}", g.near_hole_max_iters);
            }
            Stage::Ghosts => {
                let g = &self.ghosts;
                let _ = writeln!(s, "ghosts.proximity_factor={:?}", g.proximity_factor);
                let _ = writeln!(s, "ghosts.area_tol={:?}", g.area_tol);
                let _ = writeln!(s, "ghosts.comp_tol={:?}", g.comp_tol);
                let _ = writeln!(s, "ghosts.spread_threshold={:?}", g.spread_threshold);
                let _ = writeln!(s, "ghosts.match_tol={:?}", g.match_tol);
                let _ = writeln!(s, "ghosts.dilation_radius={}", g.dilation_radius);
                let _ = writeln!(s, "ghosts.overlay={}", self.ghost_overlay);
            }
            Stage::Render => {
                let r = &self.render;
                let _ = writeln!(s, "render.pre_frames={}", r.profile.pre_frames);
                let _ = writeln!(s, "render.post_frames={}", r.profile.post_frames);
                let _ = writeln!(s, "render.curve={}", curve_name(r.profile.curve));
                let _ = writeln!(s, "render.background_style={}", style_name(r.background_style));
                let _ = writeln!(s, "render.combine={}", combine_name(r.combine));
            }
        }
        s
    }

    /// Human-readable problems; empty means runnable.
    pub fn validate(&self) -> Vec<String> {
        let mut out = Vec::new();
        if self.stages.is_empty() {
            out.push("stages: at least one stage must be enabled".to_string());
        }
        let has = |s: Stage| self.stages.contains(&s);
        let needs = [
            (Stage::Segment, Stage::Background),
            (Stage::Ghosts, Stage::Segment),
            (Stage::Render, Stage::Background),
            (Stage::Render, Stage::Segment),
        ];
        for (stage, dep) in needs {
            if has(stage) && !has(dep) {
                out.push(format!("stages: {} requires {}", stage.name(), dep.name()));
            }
        }
        if self.threads == Threads::Fixed(0) {
            out.push("threads must be at least 1 or auto".to_string());
        }
        if !(self.fps > 0.0) {
            out.push("render.fps must be positive".to_string());
        }
        out.extend(self.deshake.diagnostics());
        out.extend(self.background.diagnostics());
        out.extend(self.segmentation.diagnostics());
        out.extend(self.render.diagnostics());
        out.extend(self.ghosts.diagnostics());
        out
    }
}

fn strip_prefix(e: &Error) -> String {
    match e {
        Error::Config(m) => m.clone(),
        other => other.to_string(),
    }
}
