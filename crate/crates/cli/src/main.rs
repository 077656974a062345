use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;
use stylize_core::config::{PipelineConfig, RefineMode};
use stylize_core::mrf::SelectionMode;
use stylize_core::pipeline::{report_path, run_to_file, PipelineRequest};

/// Transfer the local contrast of a headshot style collection onto a portrait.
#[derive(Debug, Parser)]
#[command(name = "stylize", version)]
struct Args {
    /// Input portrait.
    #[arg(long)]
    input: PathBuf,
    /// 68-point landmark file for the input.
    #[arg(long)]
    landmarks: PathBuf,
    /// Style collection manifest.
    #[arg(long)]
    collection: PathBuf,
    /// Output image; the run report is written to `<out>.report.txt`.
    #[arg(long)]
    out: PathBuf,
    /// Working scale applied to every image before processing.
    #[arg(long)]
    scale: Option<f64>,
    #[arg(long, value_parser = parse_mode)]
    mode: Option<SelectionMode>,
    #[arg(long, value_parser = parse_refine)]
    refine: Option<RefineMode>,
    /// Write diagnostics (label map, fields, stacks, gains) here.
    #[arg(long)]
    dump_dir: Option<PathBuf>,
    /// Single-channel matte; requires --background.
    #[arg(long, requires = "background")]
    matte: Option<PathBuf>,
    #[arg(long, requires = "matte")]
    background: Option<PathBuf>,
    /// TOML configuration; flags given on the command line take precedence.
    #[arg(long)]
    config: Option<PathBuf>,
}

fn parse_mode(s: &str) -> Result<SelectionMode, String> {
    s.parse().map_err(|e: stylize_core::Error| e.to_string())
}

fn parse_refine(s: &str) -> Result<RefineMode, String> {
    s.parse().map_err(|e: stylize_core::Error| e.to_string())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let args = Args::parse();

    let mut config = match &args.config {
        Some(path) => match PipelineConfig::load(path) {
            Ok(c) => c,
            Err(e) => {
                eprintln!("stylize: [config] {e}");
                return ExitCode::FAILURE;
            }
        },
        None => PipelineConfig::default(),
    };
    if let Some(s) = args.scale {
        config.working_scale = s;
    }
    if let Some(m) = args.mode {
        config.selection_mode = m;
    }
    if let Some(r) = args.refine {
        config.refine = r;
    }
    if args.dump_dir.is_some() {
        config.dump_intermediate = true;
    }

    let request = PipelineRequest {
        input: args.input,
        landmarks: args.landmarks,
        collection: args.collection,
        matte: args.matte,
        background: args.background,
        dump_dir: args.dump_dir,
    };
    match run_to_file(&request, &config, &args.out) {
        Ok(out) => {
            log::info!("wrote {} and {}", args.out.display(), report_path(&args.out).display());
            let r = &out.report;
            println!(
                "{}: {}x{}, {} nodes, bp {} iterations (converged: {})",
                args.out.display(),
                r.working_size.0,
                r.working_size.1,
                r.nodes,
                r.bp_iterations,
                r.bp_converged
            );
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("stylize: {e}");
            ExitCode::FAILURE
        }
    }
}
