use std::path::Path;

use stylize_core::collection::ExemplarEntry;
use stylize_core::config::{PipelineConfig, RefineMode};
use stylize_core::image::{load_image, Image, Plane};
use stylize_core::mrf::SelectionMode;
use stylize_core::pipeline::{report_path, run_pipeline, run_to_file, PipelineRequest, Stage};
use stylize_core::synthetic::{
    landmarks_68, render_portrait, write_collection, write_fixture, FaceGeometry, PortraitStyle,
};
use stylize_core::Error;

fn portrait_request(dir: &Path, w: usize, h: usize, exemplars: usize) -> PipelineRequest {
    let geom = FaceGeometry::centered(w, h);
    let (img, pts) = render_portrait(w, h, &geom, &PortraitStyle::default(), 1);
    let input = write_fixture(dir, "input", &img, &pts).unwrap();
    let entries: Vec<ExemplarEntry> = (0..exemplars)
        .map(|k| {
            let g = geom.shifted(12.0 * k as f64 - 10.0, 6.0 * k as f64, 0.95 + 0.04 * k as f64);
            let (e, p) = render_portrait(w, h, &g, &PortraitStyle::variant(k), 100 + k as u64);
            write_fixture(dir, &format!("ex{k}"), &e, &p).unwrap()
        })
        .collect();
    let collection = write_collection(&dir.join("style.txt"), "synthetic", &entries).unwrap();
    PipelineRequest {
        input: input.image,
        landmarks: input.landmarks,
        collection,
        ..Default::default()
    }
}

#[test]
fn empty_collection_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let req = portrait_request(dir.path(), 80, 60, 1);
    std::fs::write(&req.collection, "style_name = empty\n# nothing here\n").unwrap();
    let err = run_pipeline(&req, &PipelineConfig::default()).unwrap_err();
    assert_eq!(err.stage, Stage::LoadCollection);
    assert!(matches!(err.source, Error::NoExemplars));
    assert!(err.to_string().contains("no exemplars"));
}

#[test]
fn missing_input_names_stage_and_path() {
    let dir = tempfile::tempdir().unwrap();
    let mut req = portrait_request(dir.path(), 80, 60, 1);
    req.input = dir.path().join("nope.png");
    let err = run_pipeline(&req, &PipelineConfig::default()).unwrap_err();
    assert_eq!(err.stage, Stage::LoadInput);
    assert!(err.to_string().starts_with("[load-input]"));
    assert!(err.to_string().contains("nope.png"));
}

#[test]
fn invalid_config_fails_before_loading() {
    let dir = tempfile::tempdir().unwrap();
    let req = PipelineRequest {
        input: dir.path().join("absent.png"),
        ..Default::default()
    };
    let cfg = PipelineConfig {
        stride: 99,
        ..Default::default()
    };
    assert_eq!(run_pipeline(&req, &cfg).unwrap_err().stage, Stage::Config);
}

#[test]
fn three_exemplars_at_quarter_scale() {
    let dir = tempfile::tempdir().unwrap();
    let mut req = portrait_request(dir.path(), 1320, 1000, 3);
    let dump = dir.path().join("dump");
    req.dump_dir = Some(dump.clone());
    let cfg = PipelineConfig {
        working_scale: 0.25,
        ..Default::default()
    };
    let out_path = dir.path().join("out.png");
    let out = run_to_file(&req, &cfg, &out_path).unwrap();
    assert_eq!((out.image.width(), out.image.height()), (330, 250));
    assert!(out.labels.labels.iter().all(|&l| l < 3));
    assert_eq!(out.labels.labels.len(), out.grid.node_count());
    assert_eq!(out.report.label_histogram.iter().sum::<usize>(), out.grid.node_count());

    let saved = load_image(&out_path).unwrap();
    assert_eq!((saved.width(), saved.height(), saved.channels()), (330, 250, 3));
    let report = std::fs::read_to_string(report_path(&out_path)).unwrap();
    for key in ["bp_iterations", "label_histogram", "warnings_floored_unaries", "time_mrf_ms"] {
        assert!(report.contains(&format!("{key} = ")), "missing {key}");
    }
    let labels_txt = std::fs::read_to_string(dump.join("labels.txt")).unwrap();
    let parsed: Vec<usize> = labels_txt.split_whitespace().map(|s| s.parse().unwrap()).collect();
    assert_eq!(parsed, out.labels.labels);
    for f in ["labels.png", "field_0.flo", "warped_2.png", "remapped.png", "input_c0_layer0.png", "gain_c1_layer3.png"] {
        assert!(dump.join(f).is_file(), "missing dump {f}");
    }
}

#[test]
fn mmse_with_refinement_and_matte() {
    let dir = tempfile::tempdir().unwrap();
    let mut req = portrait_request(dir.path(), 200, 150, 2);
    let matte = Image::from_plane(Plane::from_fn(200, 150, |x, _| if x < 100 { 1.0 } else { 0.0 }));
    let bg = Image::new(200, 150, 3, 0.0);
    stylize_core::image::save_image(dir.path().join("matte.png"), &matte).unwrap();
    stylize_core::image::save_image(dir.path().join("bg.png"), &bg).unwrap();
    req.matte = Some(dir.path().join("matte.png"));
    req.background = Some(dir.path().join("bg.png"));
    let cfg = PipelineConfig {
        selection_mode: SelectionMode::Mmse,
        refine: RefineMode::Blockmatch,
        working_scale: 0.5,
        ..Default::default()
    };
    let out = run_pipeline(&req, &cfg).unwrap();
    assert_eq!((out.image.width(), out.image.height()), (100, 75));
    for n in 0..out.grid.node_count() {
        let s: f64 = out.labels.distribution(n).iter().sum();
        assert!((s - 1.0).abs() < 1e-9);
    }
    // right half replaced by the black background
    for y in 0..75 {
        for x in 52..100 {
            assert_eq!(out.image.get(x, y, 1), 0.0);
        }
    }

    req.background = None;
    assert_eq!(run_pipeline(&req, &cfg).unwrap_err().stage, Stage::Config);
}

// Input: 0.2 left of x = 90, 0.8 right; exemplars are flat 0.2 and 0.8.
fn piecewise_request(dir: &Path) -> PipelineRequest {
    let (w, h) = (160, 120);
    let pts = landmarks_68(&FaceGeometry::centered(w, h));
    let input = Image::from_plane(Plane::from_fn(w, h, |x, _| if x < 90 { 0.2 } else { 0.8 }));
    let input = write_fixture(dir, "input", &input, &pts).unwrap();
    let entries: Vec<ExemplarEntry> = [0.2, 0.8]
        .iter()
        .enumerate()
        .map(|(k, &v)| write_fixture(dir, &format!("flat{k}"), &Image::new(w, h, 1, v), &pts).unwrap())
        .collect();
    PipelineRequest {
        input: input.image,
        landmarks: input.landmarks,
        collection: write_collection(&dir.join("flat.txt"), "flat", &entries).unwrap(),
        ..Default::default()
    }
}

#[test]
fn label_field_is_scale_invariant() {
    let dir = tempfile::tempdir().unwrap();
    let req = piecewise_request(dir.path());
    let full = run_pipeline(&req, &PipelineConfig::default()).unwrap();
    let half = run_pipeline(
        &req,
        &PipelineConfig {
            working_scale: 0.5,
            ..Default::default()
        },
    )
    .unwrap();
    assert_eq!((full.grid.cols, full.grid.rows), (half.grid.cols, half.grid.rows));
    assert_eq!(full.labels.labels, half.labels.labels);
    // unambiguous: both exemplars are used, left columns take the dark one
    let h = full.labels.histogram();
    assert!(h[0] > 0 && h[1] > 0);
    assert_eq!(full.labels.labels[full.grid.node(0, 0)], 0);
    assert_eq!(full.labels.labels[full.grid.node(full.grid.cols - 1, 0)], 1);
}

#[test]
fn repeated_runs_are_identical() {
    let dir = tempfile::tempdir().unwrap();
    let req = portrait_request(dir.path(), 240, 180, 2);
    let cfg = PipelineConfig {
        working_scale: 0.5,
        ..Default::default()
    };
    let a = run_pipeline(&req, &cfg).unwrap();
    let b = run_pipeline(&req, &cfg).unwrap();
    assert_eq!(a.image, b.image);
    assert_eq!(a.labels, b.labels);
}
