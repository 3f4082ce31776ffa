//! Exit codes and override handling of the `trailforge` binary.

use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use trailforge::frameio::{frame_file_name, write_png};
use trailforge::RasterImage;

fn trailforge(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_trailforge")).args(args).output().unwrap()
}

/// A small sprite crossing a flat plate.
fn write_frames(dir: &Path, n: usize) {
    fs::create_dir_all(dir).unwrap();
    for i in 0..n {
        let img = RasterImage::from_fn(48, 32, |x, y| {
            let sx = 4 + 6 * i;
            if (sx..sx + 6).contains(&x) && (12..18).contains(&y) {
                [220, 30, 30]
            } else {
                [90, 100, 110]
            }
        });
        write_png(&dir.join(frame_file_name(i, "png")), &img).unwrap();
    }
}

fn write_config(dir: &Path, extra: &str) -> String {
    let path = dir.join("trail.conf");
    fs::write(
        &path,
        format!("input_dir = in\nwork_dir = work\nstages = background,segment,render\nbackground.width = 3\n{extra}"),
    )
    .unwrap();
    path.to_str().unwrap().to_string()
}

fn code(out: &Output) -> i32 {
    out.status.code().unwrap()
}

#[test]
fn run_writes_outputs_and_caches_on_rerun() {
    let tmp = tempfile::tempdir().unwrap();
    write_frames(&tmp.path().join("in"), 5);
    let conf = write_config(tmp.path(), "");
    let first = trailforge(&["run", "--config", &conf, "--threads", "2"]);
    assert_eq!(code(&first), 0, "{}", String::from_utf8_lossy(&first.stderr));
    let work = tmp.path().join("work");
    assert!(work.join("run.json").is_file());
    assert_eq!(fs::read_dir(work.join("out")).unwrap().filter(|e| {
        e.as_ref().unwrap().path().extension().is_some_and(|x| x == "png")
    }).count(), 5);
    let second = trailforge(&["run", "--config", &conf]);
    assert_eq!(code(&second), 0);
    let stdout = String::from_utf8_lossy(&second.stdout);
    assert_eq!(stdout.matches("cached").count(), 3, "{stdout}");
}

#[test]
fn validate_accepts_a_good_config_without_reading_frames() {
    let tmp = tempfile::tempdir().unwrap();
    let conf = write_config(tmp.path(), "");
    let out = trailforge(&["validate", "--config", &conf]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    assert!(String::from_utf8_lossy(&out.stdout).starts_with("ok"));
    assert!(!tmp.path().join("work").exists());
}

#[test]
fn config_errors_exit_with_one() {
    let tmp = tempfile::tempdir().unwrap();
    let conf = write_config(tmp.path(), "background.width = many\n");
    assert_eq!(code(&trailforge(&["validate", "--config", &conf])), 1);
    let conf = write_config(tmp.path(), "");
    assert_eq!(code(&trailforge(&["validate", "--config", &conf, "--set", "no.such_key=1"])), 1);
    assert_eq!(code(&trailforge(&["validate", "--config", &conf, "--stages", "render"])), 1);
    let missing = tmp.path().join("absent.conf");
    assert_eq!(code(&trailforge(&["validate", "--config", missing.to_str().unwrap()])), 1);
}

#[test]
fn command_line_overrides_beat_the_file() {
    let tmp = tempfile::tempdir().unwrap();
    let conf = write_config(tmp.path(), "render.post_frames = 0\nrender.pre_frames = 0\n");
    assert_eq!(code(&trailforge(&["validate", "--config", &conf])), 1);
    let out = trailforge(&["validate", "--config", &conf, "--set", "render.post_frames=4"]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn missing_input_is_an_io_error() {
    let tmp = tempfile::tempdir().unwrap();
    let conf = write_config(tmp.path(), "");
    let out = trailforge(&["run", "--config", &conf]);
    assert_eq!(code(&out), 2, "{}", String::from_utf8_lossy(&out.stderr));
    assert!(String::from_utf8_lossy(&out.stderr).contains("error"));
}

#[test]
fn failing_encoder_is_a_stage_failure() {
    let tmp = tempfile::tempdir().unwrap();
    write_frames(&tmp.path().join("in"), 3);
    let conf = write_config(tmp.path(), "");
    let out = trailforge(&["run", "--config", &conf, "--encode", "exit 9"]);
    assert_eq!(code(&out), 3, "{}", String::from_utf8_lossy(&out.stderr));
}
