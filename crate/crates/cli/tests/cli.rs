use std::path::Path;
use std::process::Command;

use stylize_core::collection::ExemplarEntry;
use stylize_core::image::load_image;
use stylize_core::synthetic::{render_portrait, write_collection, write_fixture, FaceGeometry, PortraitStyle};

fn stylize() -> Command {
    Command::new(env!("CARGO_BIN_EXE_stylize"))
}

fn fixtures(dir: &Path) -> (ExemplarEntry, std::path::PathBuf) {
    let (w, h) = (240, 180);
    let geom = FaceGeometry::centered(w, h);
    let (img, pts) = render_portrait(w, h, &geom, &PortraitStyle::default(), 1);
    let input = write_fixture(dir, "input", &img, &pts).unwrap();
    let entries: Vec<ExemplarEntry> = (0..2)
        .map(|k| {
            let g = geom.shifted(4.0 * k as f64, -3.0, 1.0);
            let (e, p) = render_portrait(w, h, &g, &PortraitStyle::variant(k + 1), 7 + k as u64);
            write_fixture(dir, &format!("ex{k}"), &e, &p).unwrap()
        })
        .collect();
    let collection = write_collection(&dir.join("style.txt"), "cli", &entries).unwrap();
    (input, collection)
}

#[test]
fn writes_output_report_and_dumps() {
    let dir = tempfile::tempdir().unwrap();
    let (input, collection) = fixtures(dir.path());
    let config = dir.path().join("run.toml");
    std::fs::write(&config, "working_scale = 1.0\nselection_mode = \"argmax\"\n").unwrap();
    let out = dir.path().join("styled.png");
    let dump = dir.path().join("diag");
    let status = stylize()
        .args(["--input", input.image.to_str().unwrap()])
        .args(["--landmarks", input.landmarks.to_str().unwrap()])
        .args(["--collection", collection.to_str().unwrap()])
        .args(["--out", out.to_str().unwrap()])
        .args(["--config", config.to_str().unwrap()])
        .args(["--scale", "0.5", "--mode", "mmse", "--refine", "blockmatch"])
        .args(["--dump-dir", dump.to_str().unwrap()])
        .output()
        .unwrap();
    assert!(status.status.success(), "{}", String::from_utf8_lossy(&status.stderr));
    let img = load_image(&out).unwrap();
    // --scale overrides the config file
    assert_eq!((img.width(), img.height()), (120, 90));
    let report = std::fs::read_to_string(dir.path().join("styled.png.report.txt")).unwrap();
    assert!(report.contains("working_size = 120x90"));
    assert!(report.contains("exemplars = 2"));
    assert!(dump.join("labels.png").is_file());
}

#[test]
fn failure_is_stage_tagged() {
    let dir = tempfile::tempdir().unwrap();
    let (input, _) = fixtures(dir.path());
    let empty = dir.path().join("empty.txt");
    std::fs::write(&empty, "style_name = none\n").unwrap();
    let out = stylize()
        .args(["--input", input.image.to_str().unwrap()])
        .args(["--landmarks", input.landmarks.to_str().unwrap()])
        .args(["--collection", empty.to_str().unwrap()])
        .args(["--out", dir.path().join("o.png").to_str().unwrap()])
        .output()
        .unwrap();
    assert!(!out.status.success());
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.contains("[load-collection] no exemplars"), "{stderr}");
}

#[test]
fn bad_config_file_is_reported() {
    let dir = tempfile::tempdir().unwrap();
    let (input, collection) = fixtures(dir.path());
    let config = dir.path().join("bad.toml");
    std::fs::write(&config, "stack_depth = 1\n").unwrap();
    let out = stylize()
        .args(["--input", input.image.to_str().unwrap()])
        .args(["--landmarks", input.landmarks.to_str().unwrap()])
        .args(["--collection", collection.to_str().unwrap()])
        .args(["--out", dir.path().join("o.png").to_str().unwrap()])
        .args(["--config", config.to_str().unwrap()])
        .output()
        .unwrap();
    assert!(!out.status.success());
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.contains("[config]") && stderr.contains("bad.toml"), "{stderr}");
}

#[test]
fn unknown_mode_is_rejected() {
    let out = stylize()
        .args(["--input", "a.png", "--landmarks", "a.txt", "--collection", "c.txt", "--out", "o.png"])
        .args(["--mode", "median"])
        .output()
        .unwrap();
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("median"));
}
