//! End-to-end pipeline runs over small frame directories.

mod common;

use std::fs;
use std::path::Path;

use common::{moving_sprite_sequence, snapshot, write_sequence};
use proptest::prelude::*;
use trailforge::frameio::write_png;
use trailforge::pipeline::{run, PipelineConfig, RunReport, Stage, Threads};
use trailforge::trails::{BackgroundStyle, CombineRule, FadeCurve};
use trailforge::{Error, RasterImage};

fn config(input: &Path, work: &Path) -> PipelineConfig {
    let mut cfg = PipelineConfig {
        input_dir: input.to_path_buf(),
        work_dir: work.to_path_buf(),
        threads: Threads::Fixed(2),
        ..PipelineConfig::default()
    };
    cfg.background.width = 5;
    cfg.render.profile.post_frames = 3;
    cfg
}

fn cached(report: &RunReport) -> Vec<(Stage, bool)> {
    report.stages.iter().map(|s| (s.stage, s.cached)).collect()
}

fn artifacts(work: &Path) -> std::collections::BTreeMap<String, Vec<u8>> {
    let mut snap = snapshot(work);
    snap.remove("run.json");
    snap
}

#[test]
fn unchanged_rerun_hits_every_cache_and_keeps_bytes() {
    let tmp = tempfile::tempdir().unwrap();
    let input = tmp.path().join("in");
    write_sequence(&input, &moving_sprite_sequence(8, 11));
    let cfg = config(&input, &tmp.path().join("work"));
    let first = run(&cfg).unwrap();
    assert!(first.stages.iter().all(|s| !s.cached));
    assert_eq!(first.stages.len(), 5);
    let before = artifacts(&cfg.work_dir);
    let second = run(&cfg).unwrap();
    assert!(second.stages.iter().all(|s| s.cached), "{:?}", cached(&second));
    assert_eq!(artifacts(&cfg.work_dir), before);
    let json: serde_json::Value = serde_json::from_str(&fs::read_to_string(cfg.work_dir.join("run.json")).unwrap()).unwrap();
    assert_eq!(json["frames"], 8);
    assert_eq!(json["stages"].as_array().unwrap().len(), 5);
    assert_eq!(json["stages"][1]["stage"], "background");
    assert_eq!(json["stages"][1]["cached"], true);
}

#[test]
fn deleted_stage_output_is_regenerated_identically() {
    let tmp = tempfile::tempdir().unwrap();
    let input = tmp.path().join("in");
    write_sequence(&input, &moving_sprite_sequence(8, 12));
    let cfg = config(&input, &tmp.path().join("work"));
    run(&cfg).unwrap();
    let before = artifacts(&cfg.work_dir);
    fs::remove_dir_all(cfg.work_dir.join("bg")).unwrap();
    fs::remove_file(cfg.work_dir.join("out").join("frame_000003.png")).unwrap();
    let report = run(&cfg).unwrap();
    assert_eq!(
        cached(&report),
        vec![
            (Stage::Deshake, true),
            (Stage::Background, false),
            (Stage::Segment, true),
            (Stage::Ghosts, true),
            (Stage::Render, false),
        ]
    );
    assert_eq!(artifacts(&cfg.work_dir), before);
}

#[test]
fn config_change_reruns_only_affected_stages() {
    let tmp = tempfile::tempdir().unwrap();
    let input = tmp.path().join("in");
    write_sequence(&input, &moving_sprite_sequence(6, 13));
    let mut cfg = config(&input, &tmp.path().join("work"));
    run(&cfg).unwrap();
    cfg.render.profile.curve = FadeCurve::Cubic;
    cfg.fps = 12.0;
    let report = run(&cfg).unwrap();
    let stale: Vec<Stage> = report.stages.iter().filter(|s| !s.cached).map(|s| s.stage).collect();
    assert_eq!(stale, vec![Stage::Render]);
    // Downstream caches key on mask content, so a setting that leaves every
    // mask unchanged reruns only the segment stage.
    let masks = |work: &Path| {
        let mut snap = snapshot(&work.join("fg"));
        snap.remove("manifest.txt");
        snap
    };
    let masks_before = masks(&cfg.work_dir);
    cfg.segmentation.near_hole_max_iters = 5;
    let report = run(&cfg).unwrap();
    let stale: Vec<Stage> = report.stages.iter().filter(|s| !s.cached).map(|s| s.stage).collect();
    assert!(masks(&cfg.work_dir) == masks_before);
    assert_eq!(stale, vec![Stage::Segment]);
    // A threshold no color difference reaches empties every mask.
    cfg.segmentation.color_threshold = 1000.0;
    let report = run(&cfg).unwrap();
    let stale: Vec<Stage> = report.stages.iter().filter(|s| !s.cached).map(|s| s.stage).collect();
    assert_eq!(stale, vec![Stage::Segment, Stage::Ghosts, Stage::Render]);
}

#[test]
fn worker_count_does_not_change_outputs() {
    let tmp = tempfile::tempdir().unwrap();
    let input = tmp.path().join("in");
    write_sequence(&input, &moving_sprite_sequence(6, 14));
    let snaps: Vec<_> = [1, 3]
        .into_iter()
        .map(|t| {
            let mut cfg = config(&input, &tmp.path().join(format!("work{t}")));
            cfg.threads = Threads::Fixed(t);
            cfg.ghost_overlay = true;
            run(&cfg).unwrap();
            artifacts(&cfg.work_dir)
        })
        .collect();
    assert_eq!(snaps[0], snaps[1]);
    assert!(snaps[0].keys().any(|k| k.starts_with("ghosts/overlay_")));
}

#[test]
fn without_deshake_later_stages_read_the_input() {
    let tmp = tempfile::tempdir().unwrap();
    let input = tmp.path().join("in");
    let frames = moving_sprite_sequence(5, 15);
    write_sequence(&input, &frames);
    let mut cfg = config(&input, &tmp.path().join("work"));
    cfg.stages = vec![Stage::Background, Stage::Segment, Stage::Render];
    let report = run(&cfg).unwrap();
    assert_eq!((report.width, report.height), frames[0].dimensions());
    assert!(report.deshake.is_none());
    assert!(!cfg.work_dir.join("stable").exists());
    assert_eq!(snapshot(&cfg.work_dir.join("out")).keys().filter(|k| k.ends_with(".png")).count(), 5);
}

#[test]
fn mismatched_frame_sizes_fail_before_any_stage() {
    let tmp = tempfile::tempdir().unwrap();
    let input = tmp.path().join("in");
    write_sequence(&input, &vec![RasterImage::filled(8, 6, [1, 2, 3]); 3]);
    write_png(&input.join("frame_000003.png"), &RasterImage::filled(9, 6, [1, 2, 3])).unwrap();
    let cfg = config(&input, &tmp.path().join("work"));
    let err = run(&cfg).unwrap_err();
    assert!(matches!(err, Error::DimensionMismatch { frame: 3, .. }), "{err}");
    assert_eq!(err.exit_code(), 3);
    assert!(!cfg.work_dir.exists());
}

#[test]
fn unreadable_frames_are_all_reported() {
    let tmp = tempfile::tempdir().unwrap();
    let input = tmp.path().join("in");
    write_sequence(&input, &vec![RasterImage::filled(8, 6, [1, 2, 3]); 2]);
    fs::write(input.join("frame_000002.png"), b"not a png").unwrap();
    fs::write(input.join("frame_000003.png"), b"").unwrap();
    let err = run(&config(&input, &tmp.path().join("work"))).unwrap_err();
    match &err {
        Error::UnreadableFrames(paths) => assert_eq!(paths.len(), 2),
        other => panic!("unexpected {other}"),
    }
    assert_eq!(err.exit_code(), 2);
}

#[test]
fn failing_encoder_is_a_stage_error() {
    let tmp = tempfile::tempdir().unwrap();
    let input = tmp.path().join("in");
    write_sequence(&input, &moving_sprite_sequence(4, 16));
    let mut cfg = config(&input, &tmp.path().join("work"));
    cfg.encode = Some("exit 7".into());
    let err = run(&cfg).unwrap_err();
    assert!(err.to_string().contains("encoder"), "{err}");
    assert_eq!(err.exit_code(), 3);
}

fn curve_name(c: FadeCurve) -> &'static str {
    match c {
        FadeCurve::Linear => "linear",
        FadeCurve::Quadratic => "quadratic",
        FadeCurve::Cubic => "cubic",
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn config_text_sets_exactly_the_named_fields(
        width in 1usize..200,
        threshold in 0.0f64..100.0,
        post in 1usize..30,
        curve in prop_oneof![Just(FadeCurve::Linear), Just(FadeCurve::Quadratic), Just(FadeCurve::Cubic)],
        combine in prop_oneof![Just(("heaviest", CombineRule::Heaviest)), Just(("rescale", CombineRule::Rescale)), Just(("accumulate", CombineRule::Accumulate))],
        style in prop_oneof![Just(("normal", BackgroundStyle::Normal)), Just(("erased", BackgroundStyle::Erased))],
        threads in prop::option::of(1usize..64),
        radii in prop::collection::btree_set(1usize..12, 1..4),
    ) {
        let schedule: Vec<String> = radii.iter().map(|r| format!("{r}:0.5")).collect();
        let text = format!(
            "# generated\nbackground.width = {width}\nsegment.color_threshold={threshold:?}  # inline\n\n\
             render.post_frames = {post}\nrender.curve = {}\nrender.combine = {}\nrender.background_style = {}\n\
             threads = {}\nsegment.disk_schedule = {}\n",
            curve_name(curve),
            combine.0,
            style.0,
            threads.map_or("auto".to_string(), |t| t.to_string()),
            schedule.join(", "),
        );
        let cfg = PipelineConfig::parse(&text, None).unwrap();
        let mut expected = PipelineConfig::default();
        expected.background.width = width;
        expected.segmentation.color_threshold = threshold;
        expected.render.profile.post_frames = post;
        expected.render.profile.curve = curve;
        expected.render.combine = combine.1;
        expected.render.background_style = style.1;
        expected.threads = threads.map_or(Threads::Auto, Threads::Fixed);
        for (step, r) in cfg.segmentation.disk_schedule.iter().zip(&radii) {
            prop_assert_eq!(step.radius, *r);
        }
        expected.segmentation.disk_schedule = cfg.segmentation.disk_schedule.clone();
        prop_assert_eq!(cfg.segmentation.disk_schedule.len(), radii.len());
        prop_assert_eq!(&cfg, &expected);
        prop_assert!(cfg.validate().is_empty(), "{:?}", cfg.validate());
    }

    #[test]
    fn overrides_match_file_settings(width in 1usize..200, post in 0usize..30) {
        let from_file = PipelineConfig::parse(&format!("background.width={width}\nrender.post_frames={post}"), None).unwrap();
        let mut from_flags = PipelineConfig::default();
        from_flags.set_override(&format!("background.width={width}")).unwrap();
        from_flags.set_override(&format!("render.post_frames = {post}")).unwrap();
        prop_assert_eq!(from_file, from_flags);
    }

    #[test]
    fn stage_lists_are_ordered_and_deduplicated(picks in prop::collection::vec(0usize..5, 1..10)) {
        let names: Vec<&str> = picks.iter().map(|&i| Stage::ALL[i].name()).collect();
        let cfg = PipelineConfig::parse(&format!("stages = {}", names.join(",")), None).unwrap();
        let mut expected: Vec<Stage> = picks.iter().map(|&i| Stage::ALL[i]).collect();
        expected.sort();
        expected.dedup();
        prop_assert_eq!(cfg.stages, expected);
    }
}
