use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use serde::Serialize;
use serde_json::json;

use crate::backend;
use crate::config::{layer_solver, layer_task, ConfigFile};
use crate::error::{CliError, CliResult};
use crate::manifest::RunManifest;
use crate::{BlindArgs, DegradeArgs, ReconstructArgs, SolverFlags};
use vidsolve_core::frames::{read_frame_dir, write_frame_dir};
use vidsolve_core::metrics::{psnr, ssim};
use vidsolve_core::ops::TaskSpec;
use vidsolve_core::pipeline::{
    blind_reconstruct, degrade as apply_task, reconstruct as run_solver, IdentityPreRestorer,
    OraclePreRestorer, PreRestorer, SolverConfig,
};
use vidsolve_core::tensor::{load_vtf, save_vtf};
use vidsolve_core::{PixelRange, VideoTensor};

/// Reads a `.vtf` file or a directory of PNG frames.
pub fn read_video(path: &Path) -> CliResult<VideoTensor> {
    let result = if path.is_dir() {
        read_frame_dir(path)
    } else {
        load_vtf(path)
    };
    result.map_err(|e| CliError::from(e).context(path.display()))
}

fn prepare_out(dir: &Path) -> CliResult<()> {
    fs::create_dir_all(dir).map_err(|e| CliError::io(format!("--out {}: {e}", dir.display())))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> CliResult<()> {
    fs::write(path, serde_json::to_string_pretty(value)? + "\n")
        .map_err(|e| CliError::io(format!("{}: {e}", path.display())))
}

/// Writes `<name>.vtf` and `frames/`, recording both in the manifest.
fn write_video(v: &VideoTensor, out: &Path, name: &str, m: &mut RunManifest) -> CliResult<()> {
    let vtf = out.join(format!("{name}.vtf"));
    save_vtf(v, &vtf)?;
    let frames = out.join("frames");
    write_frame_dir(v, &frames)?;
    m.outputs.insert(name.to_string(), vtf);
    m.outputs.insert("frames".into(), frames);
    Ok(())
}

fn write_metrics(
    result: &VideoTensor,
    reference: &Path,
    out: &Path,
    m: &mut RunManifest,
) -> CliResult<String> {
    let truth = read_video(reference)?.convert_range(PixelRange::Unit);
    let result = result.convert_range(PixelRange::Unit);
    let p = psnr(&result, &truth).map_err(|e| CliError::from(e).context("--reference"))?;
    // SSIM needs 11×11 frames; smaller videos report PSNR only.
    let s = ssim(&result, &truth).ok();
    let path = out.join("metrics.json");
    write_json(&path, &json!({ "psnr": p, "ssim": s }))?;
    m.outputs.insert("metrics".into(), path);
    m.reference = Some(reference.to_path_buf());
    Ok(match &s {
        Some(s) => format!("PSNR {:.2} dB, SSIM {:.4}", p.mean, s.mean),
        None => format!("PSNR {:.2} dB", p.mean),
    })
}

fn elapsed_ms(start: Instant) -> f64 {
    start.elapsed().as_secs_f64() * 1e3
}

pub fn degrade(args: DegradeArgs) -> CliResult<ExitCode> {
    let start = Instant::now();
    let replay = args
        .manifest
        .as_deref()
        .map(RunManifest::load)
        .transpose()?;
    let file = ConfigFile::load(args.config.as_deref())?;

    let input: PathBuf = args
        .input
        .or_else(|| replay.as_ref().map(|m| m.input.clone()))
        .ok_or_else(|| CliError::config("--input is required (or --manifest to replay)"))?;
    let mut task: TaskSpec = match (args.task, replay.as_ref().and_then(|m| m.task.clone())) {
        (Some(t), _) => TaskSpec::new(t, 0),
        (None, Some(recorded)) => recorded,
        (None, None) => {
            return Err(CliError::config(
                "--task is required (or --manifest to replay)",
            ))
        }
    };
    if let Some(recorded) = replay.as_ref().and_then(|m| m.task.as_ref()) {
        task.seed = recorded.seed;
    }
    if let Some(seed) = args.seed {
        task.seed = seed;
    }
    let task = layer_task(&task, &file.task).map_err(|e| match &args.config {
        Some(path) => e.context(format!("--config {}", path.display())),
        None => e,
    })?;

    let x = read_video(&input)?;
    let measured = apply_task(&x, &task)?;
    prepare_out(&args.out)?;
    let mut m = RunManifest::new("degrade", &input, task.seed);
    write_video(&measured.video, &args.out, "measurement", &mut m)?;
    m.operator = Some(measured.record.operator.clone());
    m.input_shape = Some(measured.record.input_shape);
    m.task = Some(task);
    m.elapsed_ms = elapsed_ms(start);
    let path = m.save(&args.out)?;
    println!(
        "{} → {} ({}), manifest {}",
        x.shape(),
        measured.video.shape(),
        measured.record.task.task,
        path.display()
    );
    Ok(ExitCode::SUCCESS)
}

/// Defaults, then the manifest's snapshot, then the file, then flags.
fn solver_config(
    base: Option<&SolverConfig>,
    file: &ConfigFile,
    flags: &SolverFlags,
) -> CliResult<SolverConfig> {
    let base = base.cloned().unwrap_or_default();
    let cfg = match &flags.config {
        Some(path) => layer_solver(&base, &file.solver)
            .map_err(|e| e.context(format!("--config {}", path.display())))?,
        None => base,
    };
    layer_solver(&cfg, &flags.as_table())
}

pub fn reconstruct(args: ReconstructArgs) -> CliResult<ExitCode> {
    let start = Instant::now();
    let recorded = RunManifest::load(&args.manifest)?;
    let a = recorded.degradation()?;
    let file = ConfigFile::load(args.solver.config.as_deref())?;
    let cfg = solver_config(recorded.config.as_ref(), &file, &args.solver)?;

    let input = match args.input {
        Some(p) => p,
        None => recorded
            .outputs
            .get("measurement")
            .cloned()
            .ok_or_else(|| {
                CliError::config("--input is required: the manifest records no measurement")
            })?,
    };
    let y = read_video(&input)?;
    if y.shape() != a.output_shape() {
        return Err(CliError::config(format!(
            "measurement {} has shape {}, the manifest's operator produces {}",
            input.display(),
            y.shape(),
            a.output_shape()
        )));
    }
    let backend = backend::build(&cfg, &file.remote)?;
    let out = run_solver(
        &y,
        &a,
        &cfg,
        backend.denoiser.as_ref(),
        backend.codec.as_ref(),
    )?;

    prepare_out(&args.out)?;
    let mut m = RunManifest::new("reconstruct", &input, cfg.seed);
    m.task = recorded.task.clone();
    m.operator = recorded.operator.clone();
    m.input_shape = recorded.input_shape;
    m.config = Some(cfg);
    write_video(&out.video, &args.out, "reconstruction", &mut m)?;
    let report = args.out.join("report.json");
    write_json(&report, &out.report)?;
    m.outputs.insert("report".into(), report);
    let mut summary = format!("final residual {:.4e}", out.report.final_residual);
    if let Some(reference) = &args.reference {
        summary = format!(
            "{summary}, {}",
            write_metrics(&out.video, reference, &args.out, &mut m)?
        );
    }
    m.elapsed_ms = elapsed_ms(start);
    m.save(&args.out)?;
    println!(
        "{} frames, {} denoiser calls, {summary}",
        out.video.shape().n,
        out.report.denoiser_calls
    );
    Ok(ExitCode::SUCCESS)
}

fn pre_restorer(spec: &str) -> CliResult<Box<dyn PreRestorer>> {
    match spec {
        "identity" => Ok(Box::new(IdentityPreRestorer)),
        _ => match spec.strip_prefix("oracle:").filter(|p| !p.is_empty()) {
            Some(path) => Ok(Box::new(OraclePreRestorer(read_video(Path::new(path))?))),
            None => Err(CliError::config(format!(
                "unknown pre-restorer {spec:?}, expected identity or oracle:PATH"
            ))),
        },
    }
}

pub fn blind(args: BlindArgs) -> CliResult<ExitCode> {
    let start = Instant::now();
    let file = ConfigFile::load(args.solver.config.as_deref())?;
    let cfg = solver_config(None, &file, &args.solver)?;
    let pre = pre_restorer(&args.pre)?;
    let y = read_video(&args.input)?;
    let backend = backend::build(&cfg, &file.remote)?;
    let out = blind_reconstruct(
        &y,
        pre.as_ref(),
        &cfg,
        backend.denoiser.as_ref(),
        backend.codec.as_ref(),
    )?;

    prepare_out(&args.out)?;
    let mut m = RunManifest::new("blind", &args.input, cfg.seed);
    m.pre_restorer = Some(args.pre.clone());
    m.config = Some(cfg);
    write_video(&out.video, &args.out, "reconstruction", &mut m)?;
    let report = args.out.join("report.json");
    write_json(
        &report,
        &json!({
            "round1": { "psf": out.round1, "residual": out.round1_residual, "run": out.round1_run.report },
            "round2": { "psf": out.round2, "residual": out.round2_residual, "run": out.round2_report },
        }),
    )?;
    m.outputs.insert("report".into(), report);
    let mut summary = format!(
        "σ round 1 {:.4}, round 2 {:.4}; residual {:.4e} → {:.4e}",
        out.round1.sigma, out.round2.sigma, out.round1_residual, out.round2_residual
    );
    if let Some(reference) = &args.reference {
        summary = format!(
            "{summary}, {}",
            write_metrics(&out.video, reference, &args.out, &mut m)?
        );
    }
    m.elapsed_ms = elapsed_ms(start);
    m.save(&args.out)?;
    println!("{summary}");
    Ok(ExitCode::SUCCESS)
}
