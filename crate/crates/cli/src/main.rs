//! `pce`: command-line front end for the coded-exposure toolkit.
//!
//! Exit codes: 0 success, 1 invalid input or arguments, 2 I/O failure.

mod config;

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use log::info;

use pce_core::annotations::{
    build_chunk_labels, filter_confidence, format_labels, parse_chunk_labels, parse_labels,
    save_chunk_labels,
};
use pce_core::demo::{run_demo, DemoConfig};
use pce_core::encoder::{encode_video, export_coded, load_coded, ExportMode};
use pce_core::eval::{evaluate, EvalConfig};
use pce_core::reconstruct::reconstruct_chunk;
use pce_core::sensing::{load_matrix, save_matrix};
use pce_core::sweep::{sweep, DetectionTemplate, SweepAxis, SweepSettings};
use pce_core::video::{load_video, save_video};
use pce_core::{Dictionary3D, MatrixDistribution, OmpConfig, SensingMatrix, Video, VideoFormat};

#[derive(Debug, Parser)]
#[command(name = "pce", version, about = "Pixel-wise coded exposure video toolkit")]
#[command(arg_required_else_help = true)]
struct Cli {
    /// key=value file supplying default flag values for the subcommand
    #[arg(long, global = true, value_name = "FILE")]
    config: Option<PathBuf>,

    /// Worker threads for encoding, reconstruction and evaluation
    #[arg(long, global = true)]
    workers: Option<usize>,

    /// error | warn | info | debug (overrides PCE_LOG)
    #[arg(long, global = true)]
    log_level: Option<String>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate one sensing matrix
    #[command(args_override_self = true)]
    GenMatrix(GenMatrixArgs),
    /// Compress a video into coded frames
    #[command(args_override_self = true)]
    Compress(CompressArgs),
    /// Reconstruct source frames from raw coded sums
    #[command(args_override_self = true)]
    Reconstruct(ReconstructArgs),
    /// Merge per-frame labels into per-chunk boxes
    #[command(args_override_self = true)]
    MergeLabels(MergeLabelsArgs),
    /// Score chunk detections against chunk ground truth
    #[command(args_override_self = true)]
    Evaluate(EvaluateArgs),
    /// Sweep bump time or compression rate
    #[command(args_override_self = true)]
    Sweep(SweepArgs),
    /// Run the whole pipeline on a synthetic scene
    #[command(args_override_self = true)]
    Demo(DemoArgs),
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Dist {
    Uniform,
    Gaussian,
}

impl From<Dist> for MatrixDistribution {
    fn from(d: Dist) -> Self {
        match d {
            Dist::Uniform => MatrixDistribution::Uniform,
            Dist::Gaussian => MatrixDistribution::TruncatedGaussian,
        }
    }
}

#[derive(Debug, Clone, Copy, ValueEnum, PartialEq, Eq)]
enum Export {
    Normalized,
    Raw,
    Both,
}

#[derive(Debug, Args)]
struct GenMatrixArgs {
    #[arg(long)]
    height: usize,
    #[arg(long)]
    width: usize,
    /// Chunk length (compression rate)
    #[arg(long, default_value_t = 13)]
    compression: usize,
    #[arg(long, default_value_t = 3)]
    bump: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, value_enum, default_value_t = Dist::Uniform)]
    dist: Dist,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct CompressArgs {
    /// PCEV1 file or directory of PGM frames
    #[arg(long = "in")]
    input: PathBuf,
    /// Output directory
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 13)]
    compression: usize,
    #[arg(long, default_value_t = 3)]
    bump: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, value_enum, default_value_t = Dist::Uniform)]
    dist: Dist,
    #[arg(long, value_enum, default_value_t = Export::Both)]
    export: Export,
}

#[derive(Debug, Args)]
struct OmpArgs {
    #[arg(long, default_value_t = 7)]
    patch: usize,
    #[arg(long, default_value_t = 3)]
    stride: usize,
    #[arg(long, default_value_t = 16)]
    sparsity: usize,
    #[arg(long, default_value_t = 1e-3)]
    tol: f64,
}

impl OmpArgs {
    fn config(&self) -> OmpConfig {
        OmpConfig {
            max_sparsity: self.sparsity,
            residual_tol: self.tol,
            patch_stride: self.stride,
        }
    }
}

#[derive(Debug, Args)]
struct ReconstructArgs {
    /// PCEC1 raw-sum container
    #[arg(long)]
    coded: PathBuf,
    /// PCESM1 file, or a directory of per-chunk matrices written by `compress`
    #[arg(long)]
    matrix: PathBuf,
    /// Output video (PCEV1 file, or PGM directory with --pgm)
    #[arg(long)]
    out: PathBuf,
    /// Reconstruct only this coded frame
    #[arg(long)]
    chunk: Option<usize>,
    #[arg(long)]
    pgm: bool,
    #[command(flatten)]
    omp: OmpArgs,
    /// Print per-coded-frame wall time
    #[arg(long)]
    report_time: bool,
}

#[derive(Debug, Args)]
struct MergeLabelsArgs {
    #[arg(long)]
    labels: PathBuf,
    #[arg(long, default_value_t = 13)]
    compression: usize,
    #[arg(long, default_value_t = 0.99)]
    min_conf: f64,
    /// Source frame count; defaults to one past the last labelled frame
    #[arg(long)]
    frames: Option<usize>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct EvaluateArgs {
    #[arg(long)]
    det: PathBuf,
    #[arg(long)]
    gt: PathBuf,
    /// report.json or report.csv
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct SweepArgs {
    #[arg(long)]
    video: PathBuf,
    #[arg(long)]
    labels: PathBuf,
    #[arg(long, value_parser = ["bump", "compression"])]
    axis: String,
    #[arg(long, value_delimiter = ',', required = true)]
    values: Vec<usize>,
    /// Detections path with a {value} placeholder
    #[arg(long)]
    det_template: Option<String>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, value_enum, default_value_t = Dist::Uniform)]
    dist: Dist,
    #[arg(long, default_value_t = 0.99)]
    min_conf: f64,
    /// CSV output; printed to stdout when absent
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct DemoArgs {
    #[arg(long, default_value_t = 7)]
    seed: u64,
    #[arg(long, default_value_t = 13)]
    compression: usize,
    #[arg(long, default_value_t = 3)]
    bump: usize,
    #[arg(long, default_value_t = 64)]
    width: usize,
    #[arg(long, default_value_t = 64)]
    height: usize,
    #[arg(long, default_value_t = 52)]
    frames: usize,
    #[arg(long, value_enum, default_value_t = Dist::Uniform)]
    dist: Dist,
    #[command(flatten)]
    omp: OmpArgs,
    /// Directory for all intermediate artifacts
    #[arg(long)]
    out: Option<PathBuf>,
}

fn main() -> ExitCode {
    let argv = match config::expand_args(std::env::args_os().collect()) {
        Ok(argv) => argv,
        Err(e) => {
            eprintln!("error: config: {e:#}");
            return exit_code(&e);
        }
    };
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return match e.kind() {
                clap::error::ErrorKind::DisplayHelp | clap::error::ErrorKind::DisplayVersion => {
                    ExitCode::SUCCESS
                }
                _ => ExitCode::from(1),
            };
        }
    };
    init_logging(cli.log_level.as_deref());
    if let Err(e) = configure_workers(cli.workers) {
        eprintln!("error: {e:#}");
        return ExitCode::from(1);
    }
    let (name, result) = match cli.command {
        Command::GenMatrix(a) => ("gen-matrix", gen_matrix(a)),
        Command::Compress(a) => ("compress", compress(a)),
        Command::Reconstruct(a) => ("reconstruct", reconstruct(a)),
        Command::MergeLabels(a) => ("merge-labels", merge_labels(a)),
        Command::Evaluate(a) => ("evaluate", evaluate_cmd(a)),
        Command::Sweep(a) => ("sweep", sweep_cmd(a)),
        Command::Demo(a) => ("demo", demo(a)),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {name}: {e:#}");
            exit_code(&e)
        }
    }
}

/// 2 when any cause in the chain is an I/O failure, 1 otherwise.
fn exit_code(e: &anyhow::Error) -> ExitCode {
    let io = e.chain().any(|cause| {
        cause.downcast_ref::<std::io::Error>().is_some()
            || cause
                .downcast_ref::<pce_core::Error>()
                .is_some_and(pce_core::Error::is_io)
    });
    ExitCode::from(if io { 2 } else { 1 })
}

fn init_logging(level: Option<&str>) {
    let env = env_logger::Env::new().filter_or("PCE_LOG", "warn");
    let mut builder = env_logger::Builder::from_env(env);
    if let Some(level) = level {
        builder.parse_filters(level);
    }
    let _ = builder.try_init();
}

fn configure_workers(workers: Option<usize>) -> Result<()> {
    if let Some(n) = workers {
        if n == 0 {
            bail!("--workers must be at least 1");
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .context("configuring worker pool")?;
    }
    Ok(())
}

fn read_video(path: &Path) -> Result<Video> {
    load_video(path, VideoFormat::detect(path))
        .with_context(|| format!("loading video {}", path.display()))
}

fn create_dir(path: &Path) -> Result<()> {
    fs::create_dir_all(path).with_context(|| format!("creating {}", path.display()))
}

pub(crate) fn matrix_file_name(chunk: usize) -> String {
    format!("matrix_{chunk:06}.pcesm")
}

fn gen_matrix(a: GenMatrixArgs) -> Result<()> {
    let m = SensingMatrix::generate(a.height, a.width, a.compression, a.bump, a.dist.into(), a.seed)?;
    save_matrix(&m, &a.out)?;
    info!("wrote {}", a.out.display());
    Ok(())
}

fn compress(a: CompressArgs) -> Result<()> {
    let video = read_video(&a.input)?;
    let seq = encode_video(&video, a.compression, a.bump, a.dist.into(), a.seed)?;
    create_dir(&a.out)?;
    if matches!(a.export, Export::Normalized | Export::Both) {
        export_coded(&seq, &a.out.join("coded.pcev"), ExportMode::Normalized(VideoFormat::RawContainer))?;
        export_coded(&seq, &a.out.join("coded_frames"), ExportMode::Normalized(VideoFormat::PgmSequence))?;
    }
    if matches!(a.export, Export::Raw | Export::Both) {
        export_coded(&seq, &a.out.join("coded.pcec"), ExportMode::RawSums)?;
    }
    let matrices = a.out.join("matrices");
    create_dir(&matrices)?;
    for f in &seq.frames {
        let m = f.matrix.as_ref().expect("encoder attaches matrices");
        save_matrix(m, &matrices.join(matrix_file_name(f.chunk_index)))?;
    }
    println!(
        "coded_frames={} dropped_frames={} payload_ratio={:.6}",
        seq.len(),
        seq.dropped_frames,
        seq.payload_ratio()
    );
    Ok(())
}

fn reconstruct(a: ReconstructArgs) -> Result<()> {
    let cfg = a.omp.config();
    cfg.validate(a.omp.patch)?;
    let coded = load_coded(&a.coded).with_context(|| format!("loading {}", a.coded.display()))?;
    let selected: Vec<usize> = match a.chunk {
        Some(k) if k >= coded.len() => {
            bail!("--chunk {k} outside the {} coded frame(s) in {}", coded.len(), a.coded.display())
        }
        Some(k) => vec![k],
        None => (0..coded.len()).collect(),
    };
    let matrix_for = |k: usize| -> Result<(SensingMatrix, PathBuf)> {
        let path = if a.matrix.is_dir() {
            a.matrix.join(matrix_file_name(k))
        } else if selected.len() == 1 {
            a.matrix.clone()
        } else {
            bail!(
                "{} holds {} coded frames; pass a matrix directory or select one with --chunk",
                a.coded.display(),
                coded.len()
            )
        };
        let m = load_matrix(&path).with_context(|| format!("loading {}", path.display()))?;
        Ok((m, path))
    };

    let mut dict: Option<Dictionary3D> = None;
    let mut pixels = Vec::new();
    let mut frames = 0;
    for &k in &selected {
        let (matrix, matrix_path) = matrix_for(k)?;
        let frame = &coded[k];
        if (frame.height, frame.width, frame.bump_len)
            != (matrix.height(), matrix.width(), matrix.bump_len())
        {
            bail!(pce_core::Error::Dimension(format!(
                "coded frame {k} of {} is {}x{} (bump {}), matrix {} is {}x{} (bump {})",
                a.coded.display(),
                frame.height,
                frame.width,
                frame.bump_len,
                matrix_path.display(),
                matrix.height(),
                matrix.width(),
                matrix.bump_len()
            )));
        }
        if dict.as_ref().is_none_or(|d| d.chunk_len() != matrix.chunk_len()) {
            dict = Some(Dictionary3D::new(a.omp.patch, matrix.chunk_len())?);
        }
        let rec = reconstruct_chunk(frame, &matrix, dict.as_ref().unwrap(), &cfg)?;
        if a.report_time {
            println!(
                "frame {k}: {:.3} s ({} patches)",
                rec.elapsed.as_secs_f64(),
                rec.patches
            );
        }
        frames += rec.video.frame_count();
        pixels.extend_from_slice(rec.video.pixels());
    }
    let (w, h) = (coded[0].width, coded[0].height);
    let video = Video::new(w, h, frames, pixels)?;
    let format = if a.pgm {
        VideoFormat::PgmSequence
    } else {
        VideoFormat::RawContainer
    };
    save_video(&video, &a.out, format)?;
    Ok(())
}

fn merge_labels(a: MergeLabelsArgs) -> Result<()> {
    let frames = parse_labels(&a.labels).with_context(|| format!("reading {}", a.labels.display()))?;
    let frames = filter_confidence(&frames, a.min_conf);
    let total = a
        .frames
        .unwrap_or_else(|| frames.last().map_or(0, |f| f.frame_index + 1));
    let chunks = build_chunk_labels(&frames, a.compression, total)?;
    save_chunk_labels(&chunks, &a.out)?;
    println!("chunks={}", chunks.len());
    Ok(())
}

fn evaluate_cmd(a: EvaluateArgs) -> Result<()> {
    let det = parse_chunk_labels(&a.det).with_context(|| format!("reading {}", a.det.display()))?;
    let gt = parse_chunk_labels(&a.gt).with_context(|| format!("reading {}", a.gt.display()))?;
    let report = evaluate(&det, &gt, &EvalConfig::default())?;
    match &a.out {
        Some(path) if path.extension().is_some_and(|e| e == "csv") => {
            fs::write(path, report.to_csv()).with_context(|| format!("writing {}", path.display()))?
        }
        Some(path) => fs::write(path, serde_json::to_string_pretty(&report)?)
            .with_context(|| format!("writing {}", path.display()))?,
        None => println!("{}", serde_json::to_string_pretty(&report)?),
    }
    println!("mAP={:.6}", report.map);
    Ok(())
}

fn sweep_cmd(a: SweepArgs) -> Result<()> {
    let axis: SweepAxis = a.axis.parse()?;
    let video = read_video(&a.video)?;
    let labels = parse_labels(&a.labels).with_context(|| format!("reading {}", a.labels.display()))?;
    let labels = filter_confidence(&labels, a.min_conf);
    let settings = SweepSettings {
        axis,
        values: a.values,
        seed: a.seed,
        distribution: a.dist.into(),
        detections: a.det_template.map(DetectionTemplate),
        eval: EvalConfig::default(),
    };
    let table = sweep(&video, &labels, &settings)?;
    let csv = table.to_csv();
    match &a.out {
        Some(path) => fs::write(path, &csv).with_context(|| format!("writing {}", path.display()))?,
        None => print!("{csv}"),
    }
    Ok(())
}

fn demo(a: DemoArgs) -> Result<()> {
    let cfg = DemoConfig {
        width: a.width,
        height: a.height,
        frames: a.frames,
        compression: a.compression,
        bump: a.bump,
        seed: a.seed,
        distribution: a.dist.into(),
        patch_size: a.omp.patch,
        omp: a.omp.config(),
    };
    let out = run_demo(&cfg)?;
    let summary = format!(
        "coded_frames={}\npsnr_db={:.4}\nnaive_psnr_db={:.4}\nmAP={:.6}\n",
        out.coded.len(),
        out.psnr_db,
        out.naive_psnr_db,
        out.report.map
    );
    print!("{summary}");
    for (k, t) in out.frame_times.iter().enumerate() {
        println!("reconstruct frame {k}: {:.3} s", t.as_secs_f64());
    }
    if let Some(dir) = &a.out {
        create_dir(dir)?;
        save_video(&out.video, &dir.join("video.pcev"), VideoFormat::RawContainer)?;
        fs::write(dir.join("labels.txt"), format_labels(&out.frame_labels))
            .with_context(|| format!("writing into {}", dir.display()))?;
        export_coded(&out.coded, &dir.join("coded.pcec"), ExportMode::RawSums)?;
        export_coded(&out.coded, &dir.join("coded.pcev"), ExportMode::Normalized(VideoFormat::RawContainer))?;
        let matrices = dir.join("matrices");
        create_dir(&matrices)?;
        for f in &out.coded.frames {
            save_matrix(f.matrix.as_ref().expect("attached"), &matrices.join(matrix_file_name(f.chunk_index)))?;
        }
        save_video(&out.reconstructed, &dir.join("reconstructed.pcev"), VideoFormat::RawContainer)?;
        save_chunk_labels(&out.chunk_labels, &dir.join("chunk_labels.txt"))?;
        save_chunk_labels(&out.detections, &dir.join("detections.txt"))?;
        fs::write(dir.join("report.json"), serde_json::to_string_pretty(&out.report)?)
            .with_context(|| format!("writing into {}", dir.display()))?;
        fs::write(dir.join("summary.txt"), summary)
            .with_context(|| format!("writing into {}", dir.display()))?;
    }
    Ok(())
}
