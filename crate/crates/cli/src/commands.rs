use std::ffi::OsString;
use std::path::{Path, PathBuf};
use std::time::Instant;

use nlpca_core::anscombe::{experiment_csv, variance_stabilization_experiment, InverseKind};
use nlpca_core::factorization::Lambda;
use nlpca_core::imaging::io::{read_image, write_image, ImageFormat, Raster};
use nlpca_core::imaging::{simulate_poisson, CountImage, Image, IntensityImage, Pixel};
use nlpca_core::pipeline::{self, phantom, BenchConfig, BenchMethod, Binning, Method, Phantom, PipelineConfig};
use nlpca_core::Rng;
use serde_json::json;

use crate::manifest::{manifest_path, write_text, RunManifest};
use crate::{
    AnscombeArgs, BenchArgs, CliError, DenoiseArgs, EvaluateArgs, PhantomArgs, ReplayArgs, SimulateArgs,
};

const ANSCOMBE_DISCLOSURE: &str = "note: the Anscombe baseline uses the closed-form asymptotically unbiased inverse \
(or the algebraic one), not the exact unbiased inverse; its PSNR is a lower bound for that variant";

fn format_of(path: &Path) -> Result<ImageFormat, CliError> {
    ImageFormat::from_path(path).ok_or_else(|| {
        CliError::usage(format!(
            "{}: unknown image format (use .pgm, .csv or .raw3d)",
            path.display()
        ))
    })
}

/// 2D images stored as single-band RAW3D come back as `[h, w]`.
fn squeeze<T: Pixel>(image: Image<T>) -> Result<Image<T>, CliError> {
    if image.ndim() == 3 && image.bands() == 1 {
        let shape = vec![image.height(), image.width()];
        return Ok(Image::new(shape, image.into_data())?);
    }
    Ok(image)
}

fn read_raster(path: &Path) -> Result<Raster, CliError> {
    let format = format_of(path)?;
    Ok(read_image(path, format)?)
}

fn read_intensity(path: &Path) -> Result<IntensityImage, CliError> {
    squeeze(read_raster(path)?.to_intensity())
}

fn read_counts(path: &Path) -> Result<CountImage, CliError> {
    squeeze(read_raster(path)?.to_counts()?)
}

fn write_raster(image: Raster, path: &Path) -> Result<(), CliError> {
    let format = format_of(path)?;
    Ok(write_image(&image, path, format)?)
}

fn check_peak(peak: f64) -> Result<(), CliError> {
    if peak > 0.0 && peak.is_finite() {
        Ok(())
    } else {
        Err(CliError::usage(format!("--peak must be a positive number, got {peak}")))
    }
}

fn finish_manifest(mut manifest: RunManifest, start: Instant, path: Option<PathBuf>) -> Result<(), CliError> {
    manifest.wall_time_s = start.elapsed().as_secs_f64();
    match path {
        Some(p) => manifest.write(&p),
        None => Ok(()),
    }
}

pub fn simulate(a: SimulateArgs, argv: &[OsString]) -> Result<(), CliError> {
    let start = Instant::now();
    check_peak(a.peak)?;
    format_of(&a.output)?;
    let truth = read_intensity(&a.input)?;
    let counts = simulate_poisson(&truth, a.peak, &mut Rng::new(a.seed))?;
    let total = counts.sum();
    write_raster(counts.into(), &a.output)?;

    let mut m = RunManifest::new("simulate", argv);
    m.seed = Some(a.seed);
    m.inputs = vec![a.input.clone()];
    m.outputs = vec![a.output.clone()];
    m.config = json!({ "peak": a.peak });
    m.metrics = json!({ "total_counts": total });
    finish_manifest(m, start, Some(manifest_path(a.common.manifest.as_ref(), &a.output)))
}

fn parse_patch(spec: &str, ndim: usize) -> Result<Vec<usize>, CliError> {
    let parts = spec
        .split(['x', 'X'])
        .map(|p| p.trim().parse::<usize>())
        .collect::<Result<Vec<_>, _>>()
        .map_err(|_| CliError::usage(format!("--patch expects a side or a shape like 5x5x23, got {spec:?}")))?;
    match parts.len() {
        1 if ndim == 2 => Ok(vec![parts[0], parts[0]]),
        1 => Ok(vec![parts[0], parts[0], 1]),
        _ => Ok(parts),
    }
}

fn denoise_config(a: &DenoiseArgs, ndim: usize) -> Result<PipelineConfig, CliError> {
    let method = Method::parse(&a.method)
        .ok_or_else(|| CliError::usage(format!("unknown method {:?} (nlpca, nlspca or anscombe)", a.method)))?;
    let mut config = if ndim == 3 {
        PipelineConfig::spectral(method)
    } else {
        PipelineConfig::new(method)
    };
    if let Some(p) = &a.patch {
        config.patch_shape = parse_patch(p, ndim)?;
    }
    if let Some(r) = a.rank {
        config.solver.rank = r;
    }
    if let Some(k) = a.clusters {
        config.clusters = k;
    }
    if let Some(l) = a.lambda {
        config.solver.lambda = Lambda::Fixed(l);
    }
    if let Some(n) = a.max_iter {
        config.solver.max_iter = n;
    }
    if let Some(t) = a.stop_tol {
        config.solver.stop_tol = t;
    }
    if let Some(c) = a.cond {
        config.solver.cond = c;
    }
    config.solver.guard = a.guard;
    if let Some(b) = a.bin {
        let mut bin_shape = vec![b, b];
        if ndim == 3 {
            bin_shape.push(1);
        }
        config.binning = Some(Binning {
            bin_shape,
            interpolate: true,
        });
    }
    if let Some(inv) = &a.inverse {
        config.inverse = match inv.to_ascii_lowercase().as_str() {
            "algebraic" => InverseKind::Algebraic,
            "asymptotic" | "asymptotic-unbiased" => InverseKind::AsymptoticUnbiased,
            _ => return Err(CliError::usage(format!("unknown inverse {inv:?} (algebraic or asymptotic)"))),
        };
    }
    config.seed = a.seed;
    config.threads = a.threads;
    config.validate()?;
    Ok(config)
}

pub fn denoise(a: DenoiseArgs, argv: &[OsString]) -> Result<(), CliError> {
    let start = Instant::now();
    if let Some(p) = a.peak {
        check_peak(p)?;
    }
    format_of(&a.output)?;
    let y = read_counts(&a.input)?;
    let config = denoise_config(&a, y.ndim())?;
    let truth = a.truth.as_deref().map(read_intensity).transpose()?;
    if config.method == Method::AnscombeNlpca {
        eprintln!("{ANSCOMBE_DISCLOSURE}");
    }

    let mut out = pipeline::run(&y, &config)?;
    if let (Some(truth), Some(peak)) = (&truth, a.peak) {
        out.report.metrics = Some(pipeline::evaluate(&out.image, truth, peak)?);
    }
    write_raster(out.image.into(), &a.output)?;
    if let Some(path) = &a.report {
        let text = serde_json::to_string_pretty(&out.report)
            .map_err(|e| CliError::usage(format!("cannot serialize report: {e}")))?;
        write_text(path, &(text + "\n"))?;
    }
    for cluster in &out.report.clusters {
        for w in &cluster.warnings {
            eprintln!("warning: cluster {}: {w}", cluster.cluster);
        }
    }

    let mut m = RunManifest::new("denoise", argv);
    m.seed = Some(a.seed);
    m.inputs = std::iter::once(a.input.clone()).chain(a.truth.clone()).collect();
    m.outputs = std::iter::once(a.output.clone()).chain(a.report.clone()).collect();
    m.config = serde_json::to_value(&config).unwrap_or_default();
    m.metrics = json!({
        "metrics": out.report.metrics,
        "kmeans": out.report.kmeans,
        "final_losses": out.report.clusters.iter().map(|c| c.final_loss).collect::<Vec<_>>(),
    });
    finish_manifest(m, start, Some(manifest_path(a.common.manifest.as_ref(), &a.output)))
}

pub fn evaluate(a: EvaluateArgs, argv: &[OsString]) -> Result<(), CliError> {
    let start = Instant::now();
    check_peak(a.peak)?;
    let estimate = read_intensity(&a.estimate)?;
    let truth = read_intensity(&a.truth)?;
    let metrics = pipeline::evaluate(&estimate, &truth, a.peak)?;
    println!("psnr,mae");
    println!("{},{}", metrics.psnr, metrics.mae);

    let mut m = RunManifest::new("evaluate", argv);
    m.inputs = vec![a.estimate.clone(), a.truth.clone()];
    m.config = json!({ "peak": a.peak });
    m.metrics = serde_json::to_value(&metrics).unwrap_or_default();
    finish_manifest(m, start, a.common.manifest.clone())
}

pub fn anscombe_check(a: AnscombeArgs, argv: &[OsString]) -> Result<(), CliError> {
    let start = Instant::now();
    let rows = variance_stabilization_experiment(&a.f_list, a.draws, &Rng::new(a.seed))?;
    let csv = experiment_csv(&rows);
    match &a.output {
        Some(path) => write_text(path, &csv)?,
        None => print!("{csv}"),
    }

    let mut m = RunManifest::new("anscombe-check", argv);
    m.seed = Some(a.seed);
    m.outputs = a.output.iter().cloned().collect();
    m.config = json!({ "f_list": a.f_list, "draws": a.draws });
    m.metrics = serde_json::to_value(&rows).unwrap_or_default();
    let path = a.common.manifest.clone().or_else(|| a.output.as_ref().map(|o| manifest_path(None, o)));
    finish_manifest(m, start, path)
}

pub fn bench(a: BenchArgs, argv: &[OsString]) -> Result<(), CliError> {
    let start = Instant::now();
    let phantom_kind =
        Phantom::parse(&a.phantom).ok_or_else(|| CliError::usage(format!("unknown phantom {:?}", a.phantom)))?;
    let methods = a
        .methods
        .iter()
        .map(|name| BenchMethod::parse(name).ok_or_else(|| CliError::usage(format!("unknown bench method {name:?}"))))
        .collect::<Result<Vec<_>, _>>()?;
    let mut config = BenchConfig {
        phantom: phantom_kind,
        size: a.size,
        peaks: a.peaks.clone(),
        reps: a.reps,
        methods,
        seed: a.seed,
        bin: a.bin,
        ..BenchConfig::default()
    };
    config.base.threads = a.threads;
    if let Some(p) = a.patch {
        config.base.patch_shape = vec![p, p];
    }
    if let Some(k) = a.clusters {
        config.base.clusters = k;
    }
    let result = pipeline::run_bench(&config)?;
    if a.methods.iter().any(|m| m.starts_with("anscombe")) {
        eprintln!("{ANSCOMBE_DISCLOSURE}");
    }
    match &a.output {
        Some(path) => write_text(path, &result.csv)?,
        None => print!("{}", result.csv),
    }
    let mut outputs: Vec<PathBuf> = a.output.iter().cloned().collect();
    if let Some(dir) = &a.images {
        std::fs::create_dir_all(dir).map_err(|e| crate::manifest::io_error(dir, e))?;
        for (name, image) in result.images {
            let path = dir.join(format!("{name}.raw3d"));
            write_raster(image.into(), &path)?;
            outputs.push(path);
        }
    }

    let mut m = RunManifest::new("bench", argv);
    m.seed = Some(a.seed);
    m.outputs = outputs;
    m.config = serde_json::to_value(&config).unwrap_or_default();
    m.metrics = serde_json::to_value(&result.cells).unwrap_or_default();
    let path = a.common.manifest.clone().or_else(|| a.output.as_ref().map(|o| manifest_path(None, o)));
    finish_manifest(m, start, path)
}

pub fn write_phantom(a: PhantomArgs) -> Result<(), CliError> {
    let kind = Phantom::parse(&a.name).ok_or_else(|| CliError::usage(format!("unknown phantom {:?}", a.name)))?;
    format_of(&a.output)?;
    write_raster(phantom(kind, a.size)?.into(), &a.output)
}

pub fn replay(a: ReplayArgs) -> Result<(), CliError> {
    let manifest = RunManifest::read(&a.manifest)?;
    if manifest.args.first().map(String::as_str) != Some(manifest.command.as_str()) {
        return Err(CliError::usage(format!(
            "{}: manifest args do not start with its command {:?}",
            a.manifest.display(),
            manifest.command
        )));
    }
    if manifest.command == "replay" {
        return Err(CliError::usage("refusing to replay a replay"));
    }
    std::env::set_current_dir(&manifest.working_dir).map_err(|e| crate::manifest::io_error(&manifest.working_dir, e))?;
    let argv: Vec<OsString> = manifest.args.iter().map(OsString::from).collect();
    crate::run(&argv)
}
