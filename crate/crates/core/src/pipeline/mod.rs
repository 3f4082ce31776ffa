//! Stage orchestration over frame directories with content-hashed caching.
//!
//! Layout under `work_dir`: `stable/` (registered frames and `offsets.tsv`),
//! `bg/` (backgrounds), `fg/` (masks and object tables), `ghosts/` (verdict
//! tables and optional overlays) and `out/` (rendered frames), each with a
//! `manifest.txt`, plus `run.json` summarizing the last run.

mod cache;
mod config;

use std::collections::{HashMap, VecDeque};
use std::fs;
use std::path::{Path, PathBuf};
use std::process::Command;
use std::time::Instant;

use rayon::prelude::*;

pub use cache::{fnv1a, hash_files, Fnv1a, StageManifest, MANIFEST_FILE};
pub use config::{parse_stages, PipelineConfig, Stage, Threads};

use crate::background::sliding_background_stream;
use crate::deshake::{common_crop, measure_trace, OffsetTrace};
use crate::error::{Error, Result};
use crate::frameio::{
    frame_file_name, list_frames, probe_frame, read_frame, read_mask_png, write_mask_png, write_png, FrameDir,
};
use crate::ghosts::{flag_ghosts, measure_objects, object_stats, objects_to_tsv, overlay_suspects, verdicts_to_tsv};
use crate::imaging::{translate_crop, RasterImage, Rect};
use crate::segmentation::{label_components, segment_frame, BitMask};
use crate::trails::{render_frame, source_range, TrailSource};

#[derive(Clone, Debug, PartialEq)]
pub struct StageReport {
    pub stage: Stage,
    pub cached: bool,
    pub seconds: f64,
    pub frames: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct DeshakeSummary {
    pub crop: Rect,
    pub final_offset: (i64, i64),
    pub max_abs_offset: (i64, i64),
}

#[derive(Clone, Debug, PartialEq)]
pub struct RunReport {
    pub frames: usize,
    pub width: usize,
    pub height: usize,
    pub threads: usize,
    pub stages: Vec<StageReport>,
    pub deshake: Option<DeshakeSummary>,
    pub seconds: f64,
}

impl RunReport {
    pub fn stage(&self, stage: Stage) -> Option<&StageReport> {
        self.stages.iter().find(|r| r.stage == stage)
    }

    pub fn to_json(&self) -> serde_json::Value {
        let stages: Vec<serde_json::Value> = self
            .stages
            .iter()
            .map(|r| {
                serde_json::json!({
                    "stage": r.stage.name(),
                    "cached": r.cached,
                    "seconds": r.seconds,
                    "frames": r.frames,
                })
            })
            .collect();
        let deshake = self.deshake.as_ref().map(|d| {
            serde_json::json!({
                "crop": [d.crop.x0, d.crop.y0, d.crop.width, d.crop.height],
                "final_offset": [d.final_offset.0, d.final_offset.1],
                "max_abs_offset": [d.max_abs_offset.0, d.max_abs_offset.1],
            })
        });
        serde_json::json!({
            "frames": self.frames,
            "width": self.width,
            "height": self.height,
            "threads": self.threads,
            "seconds": self.seconds,
            "stages": stages,
            "deshake": deshake,
        })
    }
}

fn io_err(context: &str, path: &Path, e: std::io::Error) -> Error {
    Error::io(format!("{context} {}", path.display()), e)
}

fn stage_err(stage: Stage) -> impl Fn(Error) -> Error {
    move |e| match e {
        Error::Stage { .. } => e,
        other => Error::Stage {
            stage: stage.name(),
            source: Box::new(other),
        },
    }
}

/// Paths `dir/frame_%06d.<ext>` for `0..n`.
fn numbered(dir: &Path, n: usize, ext: &str) -> Vec<PathBuf> {
    (0..n).map(|i| dir.join(frame_file_name(i, ext))).collect()
}

fn objects_path(dir: &Path, i: usize) -> PathBuf {
    dir.join(format!("objects_{i:06}.tsv"))
}

fn fresh_dir(dir: &Path) -> Result<()> {
    if dir.exists() {
        fs::remove_dir_all(dir).map_err(|e| io_err("clear", dir, e))?;
    }
    fs::create_dir_all(dir).map_err(|e| io_err("create", dir, e))
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| io_err("write", path, e))
}

/// Input frames, checked for readability and uniform size from their headers.
fn scan_inputs(dir: &Path) -> Result<(Vec<PathBuf>, (usize, usize))> {
    if !dir.is_dir() {
        return Err(Error::NoFrames(dir.to_path_buf()));
    }
    let paths = list_frames(dir)?;
    if paths.is_empty() {
        return Err(Error::NoFrames(dir.to_path_buf()));
    }
    let probes: Vec<Result<(usize, usize)>> = paths.par_iter().map(|p| probe_frame(p)).collect();
    let bad: Vec<PathBuf> = paths
        .iter()
        .zip(&probes)
        .filter(|(_, r)| r.is_err())
        .map(|(p, _)| p.clone())
        .collect();
    if !bad.is_empty() {
        return Err(Error::UnreadableFrames(bad));
    }
    let dims: Vec<(usize, usize)> = probes.into_iter().map(|r| r.unwrap_or_default()).collect();
    if let Some(i) = dims.iter().position(|&d| d != dims[0]) {
        return Err(Error::DimensionMismatch {
            frame: i,
            expected: dims[0],
            found: dims[i],
        });
    }
    Ok((paths, dims[0]))
}

struct Runner<'a> {
    cfg: &'a PipelineConfig,
    hashes: HashMap<&'static str, u64>,
    reports: Vec<StageReport>,
}

impl Runner<'_> {
    fn dir(&self, stage: Stage) -> PathBuf {
        self.cfg.work_dir.join(stage.dir_name())
    }

    /// Content hash of a named file list, computed once per run.
    fn hash(&mut self, key: &'static str, files: &[PathBuf]) -> Result<u64> {
        if let Some(&h) = self.hashes.get(key) {
            return Ok(h);
        }
        let h = hash_files(files)?;
        self.hashes.insert(key, h);
        Ok(h)
    }

    /// Run `body` unless a valid cache exists; `outputs` must all be present for a hit.
    fn stage(
        &mut self,
        stage: Stage,
        input_hash: u64,
        frames: usize,
        outputs: &[PathBuf],
        body: impl FnOnce(&Path) -> Result<()>,
    ) -> Result<()> {
        let start = Instant::now();
        let dir = self.dir(stage);
        let config_hash = fnv1a(self.cfg.stage_text(stage).as_bytes());
        let hit = StageManifest::read(&dir)
            .is_some_and(|m| m.matches(stage.name(), input_hash, config_hash, frames))
            && outputs.iter().all(|p| p.is_file());
        if hit {
            log::info!("{}: cache hit", stage.name());
        } else {
            log::info!("{}: running over {frames} frames", stage.name());
            fresh_dir(&dir).map_err(stage_err(stage))?;
            body(&dir).map_err(stage_err(stage))?;
            StageManifest {
                stage: stage.name().to_string(),
                input_hash,
                config_hash,
                frames,
                complete: true,
            }
            .write(&dir)
            .map_err(stage_err(stage))?;
        }
        let seconds = start.elapsed().as_secs_f64();
        log::info!("{}: {:.2} s", stage.name(), seconds);
        self.reports.push(StageReport {
            stage,
            cached: hit,
            seconds,
            frames,
        });
        Ok(())
    }
}

fn combine(hashes: &[u64]) -> u64 {
    let mut h = Fnv1a::new();
    for x in hashes {
        h.write(&x.to_le_bytes());
    }
    h.finish()
}

fn summarize(trace: &OffsetTrace, crop: Rect) -> DeshakeSummary {
    let offs = trace.offsets();
    let last = offs.last().copied().unwrap_or_default();
    DeshakeSummary {
        crop,
        final_offset: (last.dx, last.dy),
        max_abs_offset: (
            offs.iter().map(|o| o.dx.abs()).max().unwrap_or(0),
            offs.iter().map(|o| o.dy.abs()).max().unwrap_or(0),
        ),
    }
}

fn run_stages(cfg: &PipelineConfig, inputs: Vec<PathBuf>, threads: usize, dims: (usize, usize)) -> Result<RunReport> {
    let start = Instant::now();
    let n = inputs.len();
    let mut runner = Runner {
        cfg,
        hashes: HashMap::new(),
        reports: Vec::new(),
    };
    let enabled = |s: Stage| cfg.stages.contains(&s);
    let mut frames = inputs.clone();
    let mut frame_key = "input";
    let mut deshake = None;
    let mut out_dims = dims;

    if enabled(Stage::Deshake) {
        let input_hash = runner.hash("input", &inputs)?;
        let dir = runner.dir(Stage::Deshake);
        let stable = numbered(&dir, n, "png");
        let tsv = dir.join("offsets.tsv");
        let mut outputs = stable.clone();
        outputs.push(tsv.clone());
        runner.stage(Stage::Deshake, input_hash, n, &outputs, |dir| {
            let source = FrameDir::from_paths(inputs.clone());
            let trace = measure_trace(&source, &cfg.deshake)?;
            let crop = common_crop(&trace, dims.0, dims.1)?;
            write_text(&dir.join("offsets.tsv"), &trace.to_tsv())?;
            (0..n).into_par_iter().try_for_each(|i| {
                let frame = read_frame(&inputs[i])?;
                let out = translate_crop(&frame, trace.offsets()[i], crop)?;
                write_png(&stable[i], &out)
            })
        })?;
        let text = fs::read_to_string(&tsv).map_err(|e| io_err("read", &tsv, e))?;
        let trace = OffsetTrace::from_tsv(&text)?;
        let crop = common_crop(&trace, dims.0, dims.1)?;
        out_dims = (crop.width, crop.height);
        deshake = Some(summarize(&trace, crop));
        frames = stable;
        frame_key = "stable";
    }

    let bg_dir = runner.dir(Stage::Background);
    let bgs = numbered(&bg_dir, n, "png");
    if enabled(Stage::Background) {
        let input_hash = runner.hash(frame_key, &frames)?;
        runner.stage(Stage::Background, input_hash, n, &bgs, |_| {
            let source = FrameDir::from_paths(frames.clone());
            let stats = sliding_background_stream(&source, &cfg.background, |i, bg| write_png(&bgs[i], &bg))?;
            log::debug!("background: {} decodes, peak {} resident", stats.decoded, stats.peak_resident);
            Ok(())
        })?;
    }

    let fg_dir = runner.dir(Stage::Segment);
    let masks = numbered(&fg_dir, n, "png");
    if enabled(Stage::Segment) {
        let input_hash = combine(&[runner.hash(frame_key, &frames)?, runner.hash("bg", &bgs)?]);
        let mut outputs = masks.clone();
        outputs.extend((0..n).map(|i| objects_path(&fg_dir, i)));
        runner.stage(Stage::Segment, input_hash, n, &outputs, |dir| {
            (0..n).into_par_iter().try_for_each(|i| {
                let frame = read_frame(&frames[i])?;
                let bg = read_frame(&bgs[i])?;
                let mask = segment_frame(&frame, &bg, &cfg.segmentation).map_err(|e| match e {
                    Error::DimensionMismatch { expected, found, .. } => Error::DimensionMismatch {
                        frame: i,
                        expected,
                        found,
                    },
                    other => other,
                })?;
                write_mask_png(&masks[i], &mask)?;
                let shapes = measure_objects(&label_components(&mask), &frame, cfg.ghosts.median)?;
                write_text(&objects_path(dir, i), &objects_to_tsv(&shapes))
            })
        })?;
    }

    if enabled(Stage::Ghosts) {
        let input_hash = combine(&[runner.hash(frame_key, &frames)?, runner.hash("fg", &masks)?]);
        let dir = runner.dir(Stage::Ghosts);
        let mut outputs = numbered(&dir, n, "tsv");
        if cfg.ghost_overlay {
            outputs.extend((0..n).map(|i| dir.join(format!("overlay_{i:06}.png"))));
        }
        runner.stage(Stage::Ghosts, input_hash, n, &outputs, |dir| {
            let flagged: usize = (0..n)
                .into_par_iter()
                .map(|i| -> Result<usize> {
                    let frame = read_frame(&frames[i])?;
                    let lm = label_components(&read_mask_png(&masks[i])?);
                    let stats = object_stats(&lm, &frame, &cfg.ghosts)?;
                    let verdicts = flag_ghosts(&stats, &cfg.ghosts);
                    write_text(&dir.join(frame_file_name(i, "tsv")), &verdicts_to_tsv(&verdicts))?;
                    if cfg.ghost_overlay {
                        let img = overlay_suspects(&frame, &stats, &verdicts);
                        write_png(&dir.join(format!("overlay_{i:06}.png")), &img)?;
                    }
                    Ok(verdicts.iter().filter(|v| v.suspected).count())
                })
                .try_reduce(|| 0, |a, b| Ok(a + b))?;
            log::info!("ghosts: {flagged} suspected objects");
            Ok(())
        })?;
    }

    if enabled(Stage::Render) {
        let input_hash = combine(&[
            runner.hash(frame_key, &frames)?,
            runner.hash("bg", &bgs)?,
            runner.hash("fg", &masks)?,
        ]);
        let outs = numbered(&runner.dir(Stage::Render), n, "png");
        runner.stage(Stage::Render, input_hash, n, &outs, |_| {
            let mut window: VecDeque<(usize, RasterImage, BitMask)> = VecDeque::new();
            let mut next = 0;
            for i in 0..n {
                let range = source_range(&cfg.render.profile, i, n);
                while window.front().is_some_and(|(j, _, _)| *j < range.start) {
                    window.pop_front();
                }
                next = next.max(range.start);
                while next < range.end {
                    window.push_back((next, read_frame(&frames[next])?, read_mask_png(&masks[next])?));
                    next += 1;
                }
                let sources: Vec<TrailSource<'_>> = window
                    .iter()
                    .map(|(j, frame, mask)| TrailSource {
                        index: *j,
                        frame,
                        mask,
                    })
                    .collect();
                let bg = read_frame(&bgs[i])?;
                write_png(&outs[i], &render_frame(i, &bg, &sources, &cfg.render)?)?;
            }
            Ok(())
        })?;
        if let Some(template) = &cfg.encode {
            encode(template, &runner.dir(Stage::Render), cfg.fps)?;
        }
    }

    Ok(RunReport {
        frames: n,
        width: out_dims.0,
        height: out_dims.1,
        threads,
        stages: runner.reports,
        deshake,
        seconds: start.elapsed().as_secs_f64(),
    })
}

/// Substitute `{frames}` and `{fps}` into `template` and run it through `sh -c`.
pub fn encoder_command(template: &str, out_dir: &Path, fps: f64) -> String {
    let pattern = out_dir.join("frame_%06d.png");
    template
        .replace("{frames}", &pattern.to_string_lossy())
        .replace("{fps}", &fps.to_string())
}

fn encode(template: &str, out_dir: &Path, fps: f64) -> Result<()> {
    let cmd = encoder_command(template, out_dir, fps);
    log::info!("encode: {cmd}");
    let status = Command::new("sh")
        .arg("-c")
        .arg(&cmd)
        .status()
        .map_err(|e| Error::Encoder(format!("{cmd}: {e}")))?;
    if !status.success() {
        return Err(Error::Encoder(format!("{cmd}: exited with {status}")));
    }
    Ok(())
}

/// Execute the enabled stages, reusing valid caches, and write `run.json`.
pub fn run(cfg: &PipelineConfig) -> Result<RunReport> {
    let problems = cfg.validate();
    if !problems.is_empty() {
        return Err(Error::Config(problems.join("; ")));
    }
    let threads = match cfg.threads {
        Threads::Auto => 0,
        Threads::Fixed(t) => t,
    };
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| Error::Config(format!("cannot start worker pool: {e}")))?;
    let threads = pool.current_num_threads();
    pool.install(|| {
        let (inputs, dims) = scan_inputs(&cfg.input_dir)?;
        log::info!(
            "{} frames of {}x{} from {}, {threads} workers",
            inputs.len(),
            dims.0,
            dims.1,
            cfg.input_dir.display()
        );
        fs::create_dir_all(&cfg.work_dir).map_err(|e| io_err("create", &cfg.work_dir, e))?;
        let report = run_stages(cfg, inputs, threads, dims)?;
        let json = serde_json::to_string_pretty(&report.to_json()).unwrap_or_default();
        write_text(&cfg.work_dir.join("run.json"), &json)?;
        Ok(report)
    })
}
