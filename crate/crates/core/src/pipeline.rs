//! End-to-end stylization: load, align, select, transfer, clean up, save.

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use rayon::prelude::*;

use crate::align::{compose, local_affine_field, refine_dense, triangulate, warp, CorrespondenceField};
use crate::cleanup::{remove_artifacts, substitute_background};
use crate::collection::CollectionManifest;
use crate::config::PipelineConfig;
use crate::error::Error;
use crate::filter::resize_area;
use crate::image::{load_image, save_image, save_image_16, to_luma, Image, Plane};
use crate::landmarks::{load_landmarks, LandmarkSet};
use crate::metrics::psnr;
use crate::mrf::{build_patch_mrf, run_bp, select_labels, LabelField, PatchGrid};
use crate::stack::{build_stack, energy_map};
use crate::transfer::{pixel_weights, remap_with_style, ExemplarStyle, StyleAccumulator};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stage {
    Config,
    LoadInput,
    LoadCollection,
    LoadExemplar,
    Align,
    Mrf,
    Transfer,
    Cleanup,
    Background,
    Output,
    Dump,
}

impl Stage {
    pub fn name(self) -> &'static str {
        match self {
            Stage::Config => "config",
            Stage::LoadInput => "load-input",
            Stage::LoadCollection => "load-collection",
            Stage::LoadExemplar => "load-exemplar",
            Stage::Align => "align",
            Stage::Mrf => "mrf",
            Stage::Transfer => "transfer",
            Stage::Cleanup => "cleanup",
            Stage::Background => "background",
            Stage::Output => "output",
            Stage::Dump => "dump",
        }
    }
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// A failure tagged with the stage that raised it.
#[derive(Debug, thiserror::Error)]
#[error("[{stage}] {source}")]
pub struct PipelineError {
    pub stage: Stage,
    #[source]
    pub source: Error,
}

trait AtStage<T> {
    fn at(self, stage: Stage) -> Result<T, PipelineError>;
}

impl<T> AtStage<T> for crate::Result<T> {
    fn at(self, stage: Stage) -> Result<T, PipelineError> {
        self.map_err(|source| PipelineError { stage, source })
    }
}

/// File inputs of one run.
#[derive(Debug, Clone, Default)]
pub struct PipelineRequest {
    pub input: PathBuf,
    pub landmarks: PathBuf,
    pub collection: PathBuf,
    /// Single-channel matte and replacement background; both or neither.
    pub matte: Option<PathBuf>,
    pub background: Option<PathBuf>,
    /// Where diagnostics go; required when `dump_intermediate` is set.
    pub dump_dir: Option<PathBuf>,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct RunReport {
    pub style_name: String,
    pub exemplars: usize,
    pub input_size: (usize, usize),
    pub working_size: (usize, usize),
    pub patch_size: usize,
    pub stride: usize,
    pub nodes: usize,
    pub bp_iterations: usize,
    pub bp_converged: bool,
    pub floored_unaries: usize,
    pub label_histogram: Vec<usize>,
    pub psnr_vs_input: f64,
    pub timings: Vec<(Stage, Duration)>,
}

impl RunReport {
    /// Plain `key = value` lines.
    pub fn to_text(&self) -> String {
        let hist: Vec<String> = self.label_histogram.iter().map(usize::to_string).collect();
        let mut out = String::new();
        let mut kv = |k: &str, v: String| out.push_str(&format!("{k} = {v}\n"));
        kv("style_name", self.style_name.clone());
        kv("exemplars", self.exemplars.to_string());
        kv("input_size", format!("{}x{}", self.input_size.0, self.input_size.1));
        kv("working_size", format!("{}x{}", self.working_size.0, self.working_size.1));
        kv("patch_size", self.patch_size.to_string());
        kv("stride", self.stride.to_string());
        kv("nodes", self.nodes.to_string());
        kv("bp_iterations", self.bp_iterations.to_string());
        kv("bp_converged", self.bp_converged.to_string());
        kv("warnings_floored_unaries", self.floored_unaries.to_string());
        kv("label_histogram", hist.join(","));
        kv("psnr_vs_input_db", format!("{:.4}", self.psnr_vs_input));
        let mut total = Duration::ZERO;
        for (stage, d) in &self.timings {
            kv(&format!("time_{}_ms", stage.name().replace('-', "_")), format!("{:.3}", d.as_secs_f64() * 1e3));
            total += *d;
        }
        kv("time_total_ms", format!("{:.3}", total.as_secs_f64() * 1e3));
        out
    }
}

#[derive(Debug, Clone)]
pub struct PipelineOutput {
    /// Final stylized image at working resolution.
    pub image: Image,
    /// Remapped image before artifact removal.
    pub remapped: Image,
    /// The input at working resolution.
    pub input: Image,
    pub labels: LabelField,
    pub grid: PatchGrid,
    pub report: RunReport,
}

struct Exemplar {
    image: Image,
    field: CorrespondenceField,
    warped_luma: Plane,
}

fn match_channels(img: Image, channels: usize) -> Image {
    match (img.channels(), channels) {
        (a, b) if a == b => img,
        (3, 1) => to_luma(&img),
        _ => {
            let p = img.plane(0).clone();
            Image::from_planes(vec![p.clone(), p.clone(), p]).expect("three planes")
        }
    }
}

fn scaled_size(w: usize, h: usize, scale: f64) -> (usize, usize) {
    if scale == 1.0 {
        return (w, h);
    }
    let s = |v: usize| ((v as f64 * scale).round() as usize).max(1);
    (s(w), s(h))
}

fn to_working(img: Image, lm: &LandmarkSet, scale: f64) -> crate::Result<(Image, LandmarkSet)> {
    let (w, h) = (img.width(), img.height());
    let (nw, nh) = scaled_size(w, h, scale);
    if (nw, nh) == (w, h) {
        return Ok((img, lm.clone()));
    }
    let lm = lm.rescaled(nw, nh, nw as f64 / w as f64, nh as f64 / h as f64)?;
    Ok((resize_area(&img, nw, nh), lm))
}

fn load_with_landmarks(image: &Path, landmarks: &Path, scale: f64) -> crate::Result<(Image, LandmarkSet)> {
    let img = load_image(image)?;
    let lm = load_landmarks(landmarks, img.width(), img.height())?;
    to_working(img, &lm, scale)
}

fn load_auxiliary(path: &Path, width: usize, height: usize, channels: usize) -> crate::Result<Image> {
    let img = match_channels(load_image(path)?, channels);
    if (img.width(), img.height()) == (width, height) {
        return Ok(img);
    }
    Ok(resize_area(&img, width, height))
}

struct Timer {
    timings: Vec<(Stage, Duration)>,
    start: Instant,
}

impl Timer {
    fn new() -> Self {
        Timer {
            timings: Vec::new(),
            start: Instant::now(),
        }
    }

    fn lap(&mut self, stage: Stage) {
        let now = Instant::now();
        self.timings.push((stage, now - self.start));
        self.start = now;
    }
}

/// Run the whole pipeline in memory; writes only diagnostics (if enabled).
pub fn run_pipeline(req: &PipelineRequest, config: &PipelineConfig) -> Result<PipelineOutput, PipelineError> {
    config.validate().at(Stage::Config)?;
    if req.matte.is_some() != req.background.is_some() {
        return Err(Error::InvalidArgument("matte and background must be given together".into()))
            .at(Stage::Config);
    }
    let dump_dir = match (&req.dump_dir, config.dump_intermediate) {
        (Some(d), _) => Some(d.clone()),
        (None, true) => {
            return Err(Error::InvalidArgument("dump_intermediate set without a dump directory".into()))
                .at(Stage::Config)
        }
        (None, false) => None,
    };
    let scale = config.working_scale;
    let mut timer = Timer::new();

    let raw_input = load_image(&req.input).at(Stage::LoadInput)?;
    let input_size = (raw_input.width(), raw_input.height());
    let input_lm = load_landmarks(&req.landmarks, input_size.0, input_size.1).at(Stage::LoadInput)?;
    let (input, input_lm) = to_working(raw_input, &input_lm, scale).at(Stage::LoadInput)?;
    let (w, h, channels) = (input.width(), input.height(), input.channels());
    timer.lap(Stage::LoadInput);

    let manifest = CollectionManifest::load(&req.collection).at(Stage::LoadCollection)?;
    timer.lap(Stage::LoadCollection);

    let loaded = manifest
        .exemplars
        .par_iter()
        .map(|e| load_with_landmarks(&e.image, &e.landmarks, scale))
        .collect::<crate::Result<Vec<_>>>()
        .at(Stage::LoadExemplar)?;
    let first = (loaded[0].0.width(), loaded[0].0.height());
    if let Some(i) = loaded.iter().position(|(img, _)| (img.width(), img.height()) != first) {
        return Err(Error::DimensionMismatch(format!(
            "{} does not share the collection's resolution",
            manifest.exemplars[i].image.display()
        )))
        .at(Stage::LoadExemplar);
    }
    timer.lap(Stage::LoadExemplar);

    let mesh = triangulate(&input_lm).at(Stage::Align)?;
    let refinement = config.refine.refinement();
    let exemplars = loaded
        .into_par_iter()
        .map(|(img, lm)| {
            let img = match_channels(img, channels);
            let affine = local_affine_field(&input_lm, &lm, &mesh, w, h)?;
            let warped = warp(&img, &affine);
            let residual = refine_dense(&warped, &input, &refinement)?;
            let (field, warped) = if residual.mean_magnitude() == 0.0 {
                (affine, warped)
            } else {
                let f = compose(&affine, &residual)?;
                let wp = warp(&img, &f);
                (f, wp)
            };
            Ok(Exemplar {
                image: img,
                field,
                warped_luma: to_luma(&warped).into_planes().remove(0),
            })
        })
        .collect::<crate::Result<Vec<_>>>()
        .at(Stage::Align)?;
    timer.lap(Stage::Align);

    let grid = PatchGrid::new(w, h, config.working_patch(), config.working_stride()).at(Stage::Mrf)?;
    let input_luma = to_luma(&input).into_planes().remove(0);
    let lumas: Vec<Plane> = exemplars.iter().map(|e| e.warped_luma.clone()).collect();
    let mrf = build_patch_mrf(&grid, &input_luma, &lumas, &config.mrf_params()).at(Stage::Mrf)?;
    let bp = run_bp(&mrf, &config.bp_options()).at(Stage::Mrf)?;
    if bp.floored_unaries > 0 {
        log::warn!("{} unary potentials floored", bp.floored_unaries);
    }
    if !bp.converged {
        log::warn!("belief propagation stopped after {} iterations without converging", bp.iterations);
    }
    let labels = select_labels(&bp.beliefs, config.selection_mode);
    timer.lap(Stage::Mrf);

    let mut params = config.transfer_params();
    params.keep_gains = dump_dir.is_some();
    let weights = pixel_weights(&labels, &grid).at(Stage::Transfer)?;
    let mut acc = StyleAccumulator::new(&weights, channels, params.depth);
    for (k, e) in exemplars.iter().enumerate() {
        let style = ExemplarStyle::analyze(&e.image, &e.field, params.depth).at(Stage::Transfer)?;
        acc.add(k, &style).at(Stage::Transfer)?;
    }
    let blended = acc.finish().at(Stage::Transfer)?;
    let transferred = remap_with_style(&input, &blended, &params).at(Stage::Transfer)?;
    timer.lap(Stage::Transfer);

    let mut image = remove_artifacts(&transferred.image, &input, config.working_gf_radius(), config.gf_eps)
        .at(Stage::Cleanup)?;
    timer.lap(Stage::Cleanup);

    if let (Some(matte_path), Some(bg_path)) = (&req.matte, &req.background) {
        let matte = load_auxiliary(matte_path, w, h, 1).at(Stage::Background)?;
        if matte.plane(0).data().iter().any(|v| !(0.0..=1.0).contains(v)) {
            return Err(Error::format(matte_path, "matte samples outside [0, 1]")).at(Stage::Background);
        }
        let bg = load_auxiliary(bg_path, w, h, channels).at(Stage::Background)?;
        image = substitute_background(&image, &matte, &bg).at(Stage::Background)?;
        timer.lap(Stage::Background);
    }

    if let Some(dir) = &dump_dir {
        write_diagnostics(dir, &input, &exemplars, &labels, &grid, &transferred, &params)
            .at(Stage::Dump)?;
        timer.lap(Stage::Dump);
    }

    let report = RunReport {
        style_name: manifest.style_name.clone(),
        exemplars: exemplars.len(),
        input_size,
        working_size: (w, h),
        patch_size: grid.patch_size,
        stride: grid.stride,
        nodes: grid.node_count(),
        bp_iterations: bp.iterations,
        bp_converged: bp.converged,
        floored_unaries: bp.floored_unaries,
        label_histogram: labels.histogram(),
        psnr_vs_input: psnr(&image, &input).at(Stage::Output)?,
        timings: timer.timings,
    };
    Ok(PipelineOutput {
        image,
        remapped: transferred.image,
        input,
        labels,
        grid,
        report,
    })
}

/// `<out>.report.txt`, next to the output image.
pub fn report_path(out: &Path) -> PathBuf {
    let mut name = out.as_os_str().to_owned();
    name.push(".report.txt");
    PathBuf::from(name)
}

/// Run the pipeline, save the image at `out` and the report beside it.
pub fn run_to_file(
    req: &PipelineRequest,
    config: &PipelineConfig,
    out: &Path,
) -> Result<PipelineOutput, PipelineError> {
    let mut result = run_pipeline(req, config)?;
    let start = Instant::now();
    save_image(out, &result.image).at(Stage::Output)?;
    result.report.timings.push((Stage::Output, start.elapsed()));
    let report = report_path(out);
    fs::write(&report, result.report.to_text())
        .map_err(|e| Error::io(&report, e))
        .at(Stage::Output)?;
    Ok(result)
}

const PALETTE: [[f64; 3]; 8] = [
    [0.90, 0.10, 0.10],
    [0.10, 0.60, 0.90],
    [0.20, 0.80, 0.20],
    [0.95, 0.75, 0.10],
    [0.60, 0.20, 0.80],
    [0.10, 0.85, 0.75],
    [0.95, 0.45, 0.70],
    [0.50, 0.50, 0.50],
];

/// One pixel per node, coloured by selected exemplar.
pub fn label_map_image(labels: &LabelField, grid: &PatchGrid) -> Image {
    let planes = (0..3)
        .map(|c| Plane::from_fn(grid.cols, grid.rows, |x, y| PALETTE[labels.labels[grid.node(x, y)] % 8][c]))
        .collect();
    Image::from_planes(planes).expect("three planes")
}

/// Node labels as whitespace-separated rows.
pub fn label_map_text(labels: &LabelField, grid: &PatchGrid) -> String {
    (0..grid.rows)
        .map(|r| {
            let row: Vec<String> = (0..grid.cols).map(|c| labels.labels[grid.node(c, r)].to_string()).collect();
            row.join(" ") + "\n"
        })
        .collect()
}

// Signed planes stored around mid-grey so zero reads as 0.5.
fn save_signed(path: PathBuf, plane: &Plane) -> crate::Result<()> {
    save_image_16(path, &Image::from_plane(plane.map(|v| v + 0.5)))
}

fn write_diagnostics(
    dir: &Path,
    input: &Image,
    exemplars: &[Exemplar],
    labels: &LabelField,
    grid: &PatchGrid,
    transferred: &crate::transfer::TransferOutput,
    params: &crate::transfer::TransferParams,
) -> crate::Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    save_image(dir.join("labels.png"), &label_map_image(labels, grid))?;
    let labels_txt = dir.join("labels.txt");
    fs::write(&labels_txt, label_map_text(labels, grid)).map_err(|e| Error::io(&labels_txt, e))?;
    for (k, e) in exemplars.iter().enumerate() {
        e.field.write_flo(dir.join(format!("field_{k}.flo")))?;
        save_image(dir.join(format!("warped_{k}.png")), &warp(&e.image, &e.field))?;
    }
    for (c, plane) in input.planes().iter().enumerate() {
        let stack = build_stack(plane, params.depth)?;
        for (l, layer) in stack.layers.iter().enumerate() {
            save_signed(dir.join(format!("input_c{c}_layer{l}.png")), layer)?;
            save_signed(dir.join(format!("input_c{c}_energy{l}.png")), &energy_map(layer, l))?;
        }
        save_image_16(dir.join(format!("input_c{c}_residual.png")), &Image::from_plane(stack.residual))?;
    }
    for (c, gains) in transferred.gains.iter().enumerate() {
        for (l, g) in gains.iter().enumerate() {
            // gains span [0, gain_max]; stored normalized
            let g = g.map(|v| v / params.gain_max);
            save_image_16(dir.join(format!("gain_c{c}_layer{l}.png")), &Image::from_plane(g))?;
        }
    }
    save_image_16(dir.join("remapped.png"), &transferred.image.clamp01())?;
    Ok(())
}
