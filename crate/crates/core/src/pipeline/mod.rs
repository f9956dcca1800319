//! End-to-end denoisers: patchize, cluster, factorize each cluster, fuse and
//! reproject.
//!
//! Random streams are derived from [`PipelineConfig::seed`]: substream 0 seeds
//! the clustering and substream `k + 1` initializes the factors of cluster `k`.
//! Clusters are factorized in parallel, so results do not depend on the thread
//! count.

mod bench;
mod phantoms;
mod report;

use std::time::Instant;

use ndarray::Array2;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::anscombe::{self, InverseKind};
use crate::clustering::{bregman_kmeans, cluster_image_for_spectral, Clustering, Divergence};
use crate::error::{NlpcaError, Result};
use crate::factorization::{estimate, factorize, SolverConfig, SolverMode};
use crate::imaging::{mae, psnr, rescale_from_peak, CountImage, IntensityImage};
use crate::patchgrid::{self, PatchGeometry, PatchSet};
use crate::rng::Rng;

pub use bench::{run_bench, BenchCell, BenchConfig, BenchMethod, BenchResult};
pub use phantoms::{phantom, Phantom, PHANTOM_MAX, PHANTOM_SIZE};
pub use report::{ClusterReport, KmeansReport, Metrics, RunReport, Timings};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    /// Newton updates of coefficients and dictionary.
    Nlpca,
    /// Sparse (l1-penalized) coefficients.
    Nlspca,
    /// Gaussian PCA of Anscombe-transformed patches, then inverse transform.
    AnscombeNlpca,
}

impl Method {
    pub fn solver_mode(self) -> SolverMode {
        match self {
            Method::Nlpca => SolverMode::PoissonNlpca,
            Method::Nlspca => SolverMode::PoissonNlspca,
            Method::AnscombeNlpca => SolverMode::GaussianPca,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Method::Nlpca => "nlpca",
            Method::Nlspca => "nlspca",
            Method::AnscombeNlpca => "anscombe",
        }
    }

    pub fn parse(name: &str) -> Option<Self> {
        match name.to_ascii_lowercase().as_str() {
            "nlpca" => Some(Method::Nlpca),
            "nlspca" => Some(Method::Nlspca),
            "anscombe" | "anscombe_nlpca" | "anscombe-nlpca" => Some(Method::AnscombeNlpca),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Binning {
    pub bin_shape: Vec<usize>,
    /// Bilinear enlargement when true, block replication otherwise.
    pub interpolate: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineConfig {
    pub patch_shape: Vec<usize>,
    /// Patch step per axis; all ones when empty.
    pub step: Vec<usize>,
    pub clusters: usize,
    pub kmeans_max_iter: usize,
    /// `solver.mode` is overridden by `method`.
    pub solver: SolverConfig,
    pub method: Method,
    pub binning: Option<Binning>,
    /// Inverse transform of the Anscombe method.
    pub inverse: InverseKind,
    pub seed: u64,
    /// Cap on concurrently factorized clusters; `None` uses the global pool.
    pub threads: Option<usize>,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            patch_shape: vec![20, 20],
            step: Vec::new(),
            clusters: 14,
            kmeans_max_iter: 100,
            solver: SolverConfig::default(),
            method: Method::Nlpca,
            binning: None,
            inverse: InverseKind::AsymptoticUnbiased,
            seed: 0,
            threads: None,
        }
    }
}

impl PipelineConfig {
    pub fn new(method: Method) -> Self {
        PipelineConfig {
            method,
            ..Self::default()
        }
    }

    /// Settings for hyperspectral cubes: 5x5x23 patches, 30 clusters, rank 2.
    pub fn spectral(method: Method) -> Self {
        let mut config = Self::new(method);
        config.patch_shape = vec![5, 5, 23];
        config.clusters = 30;
        config.solver.rank = 2;
        config
    }

    pub fn validate(&self) -> Result<()> {
        if self.clusters == 0 {
            return Err(NlpcaError::invalid("number of clusters must be at least 1"));
        }
        if self.kmeans_max_iter == 0 {
            return Err(NlpcaError::invalid("k-means iteration limit must be at least 1"));
        }
        if self.threads == Some(0) {
            return Err(NlpcaError::invalid("thread count must be at least 1"));
        }
        if let Some(b) = &self.binning {
            if b.bin_shape.iter().any(|&s| s == 0) {
                return Err(NlpcaError::invalid("bin sizes must be positive"));
            }
        }
        self.solver.validate()
    }

    fn solver_config(&self) -> SolverConfig {
        SolverConfig {
            mode: self.method.solver_mode(),
            ..self.solver.clone()
        }
    }

    fn geometry(&self, shape: &[usize]) -> Result<PatchGeometry> {
        if self.patch_shape.len() != shape.len() {
            return Err(NlpcaError::shape(format!(
                "patch shape {:?} does not match image shape {:?}",
                self.patch_shape, shape
            )));
        }
        if self.step.is_empty() {
            PatchGeometry::dense(shape, &self.patch_shape)
        } else {
            PatchGeometry::new(shape, &self.patch_shape, &self.step)
        }
    }
}

/// Estimate plus the run report.
#[derive(Debug, Clone, PartialEq)]
pub struct Denoised {
    pub image: IntensityImage,
    pub report: RunReport,
}

/// Denoises a 2D count image.
pub fn denoise(y: &CountImage, config: &PipelineConfig) -> Result<IntensityImage> {
    Ok(denoise_with_report(y, config)?.image)
}

pub fn denoise_with_report(y: &CountImage, config: &PipelineConfig) -> Result<Denoised> {
    config.validate()?;
    if y.ndim() != 2 {
        return Err(NlpcaError::shape(format!("denoise expects a 2D image, got {:?}; use denoise_spectral", y.shape())));
    }
    let start = Instant::now();
    let geometry = config.geometry(y.shape())?;
    let patches = patchgrid::patchize(y, &geometry)?;
    let t0 = Instant::now();
    let clustering = cluster_patches(&patches.matrix, config)?;
    let clustering_ms = ms(t0);
    let labels = clustering.labels.clone();
    finish(y, patches, &labels, &clustering, config, clustering_ms, start)
}

/// Bins, denoises at the coarse resolution and enlarges back to the input shape.
pub fn denoise_binned(y: &CountImage, config: &PipelineConfig) -> Result<IntensityImage> {
    Ok(denoise_binned_with_report(y, config)?.image)
}

pub fn denoise_binned_with_report(y: &CountImage, config: &PipelineConfig) -> Result<Denoised> {
    config.validate()?;
    let binning = config
        .binning
        .as_ref()
        .ok_or_else(|| NlpcaError::invalid("binned denoising needs a bin shape"))?;
    if binning.bin_shape.len() != y.ndim() {
        return Err(NlpcaError::shape(format!(
            "bin shape {:?} does not match image shape {:?}",
            binning.bin_shape,
            y.shape()
        )));
    }
    let start = Instant::now();
    let coarse = patchgrid::bin(y, &binning.bin_shape)?;
    let inner = PipelineConfig {
        binning: None,
        ..config.clone()
    };
    let mut out = if coarse.ndim() == 3 {
        denoise_spectral_with_report(&coarse, &inner)?
    } else {
        denoise_with_report(&coarse, &inner)?
    };
    let t0 = Instant::now();
    let padded: Vec<usize> = coarse.shape().iter().zip(&binning.bin_shape).map(|(c, b)| c * b).collect();
    let scale = 1.0 / binning.bin_shape.iter().product::<usize>() as f64;
    let enlarged = if binning.interpolate {
        patchgrid::upsample_bilinear(&out.image, &padded, scale)?
    } else {
        replicate(&out.image, &binning.bin_shape, scale)?
    };
    out.image = patchgrid::crop(&enlarged, y.shape())?;
    out.report.config = config.clone();
    out.report.image_shape = y.shape().to_vec();
    out.report.timings.reprojection_ms += ms(t0);
    out.report.timings.total_ms = ms(start);
    Ok(out)
}

/// Denoises a `[height, width, bands]` cube with 3D patches.
///
/// Patches are clustered once on the band-summed image using the spatial
/// footprint of the 3D patches; every 3D patch takes the label of its spatial
/// anchor.
pub fn denoise_spectral(y: &CountImage, config: &PipelineConfig) -> Result<IntensityImage> {
    Ok(denoise_spectral_with_report(y, config)?.image)
}

pub fn denoise_spectral_with_report(y: &CountImage, config: &PipelineConfig) -> Result<Denoised> {
    config.validate()?;
    if y.ndim() != 3 || config.patch_shape.len() != 3 {
        return Err(NlpcaError::shape(format!(
            "spectral denoising needs a 3D cube and 3D patches, got image {:?} and patch {:?}",
            y.shape(),
            config.patch_shape
        )));
    }
    if config.patch_shape[2] > y.bands() {
        return Err(NlpcaError::shape(format!(
            "patch depth {} exceeds the {} available bands",
            config.patch_shape[2],
            y.bands()
        )));
    }
    let start = Instant::now();
    let geometry = config.geometry(y.shape())?;
    let patches = patchgrid::patchize(y, &geometry)?;

    let t0 = Instant::now();
    let summed = cluster_image_for_spectral(y)?;
    let spatial_config = PipelineConfig {
        patch_shape: config.patch_shape[..2].to_vec(),
        step: if config.step.is_empty() { Vec::new() } else { config.step[..2].to_vec() },
        ..config.clone()
    };
    let spatial = patchgrid::patchize(&summed, &spatial_config.geometry(summed.shape())?)?;
    let clustering = cluster_patches(&spatial.matrix, config)?;
    let clustering_ms = ms(t0);
    let spatial_count = geometry.spatial_anchor_count();
    let labels: Vec<usize> = (0..geometry.patch_count()).map(|i| clustering.labels[i % spatial_count]).collect();
    finish(y, patches, &labels, &clustering, config, clustering_ms, start)
}

/// Dispatches to the binned, spectral or plain denoiser.
pub fn run(y: &CountImage, config: &PipelineConfig) -> Result<Denoised> {
    if config.binning.is_some() {
        denoise_binned_with_report(y, config)
    } else if y.ndim() == 3 {
        denoise_spectral_with_report(y, config)
    } else {
        denoise_with_report(y, config)
    }
}

/// PSNR (after rescaling the estimate by `reference_max / peak`) and MAE of a
/// peak-domain estimate against a ground truth on its original scale.
pub fn evaluate(estimate: &IntensityImage, truth: &IntensityImage, peak: f64) -> Result<Metrics> {
    let rescaled = rescale_from_peak(estimate, peak, truth.max_value())?;
    Ok(Metrics {
        psnr: psnr(&rescaled, truth)?,
        mae: mae(&rescaled, truth)?,
    })
}

fn ms(since: Instant) -> f64 {
    since.elapsed().as_secs_f64() * 1e3
}

fn cluster_patches(matrix: &Array2<f64>, config: &PipelineConfig) -> Result<Clustering> {
    let m = matrix.nrows();
    let k = config.clusters.min(m);
    let mut rng = Rng::new(config.seed).substream(0);
    let result = match config.method {
        Method::AnscombeNlpca => {
            let transformed = matrix.mapv(anscombe::forward);
            bregman_kmeans(transformed.view(), k, Divergence::Gaussian, &mut rng, config.kmeans_max_iter)
        }
        _ => bregman_kmeans(matrix.view(), k, Divergence::Poisson, &mut rng, config.kmeans_max_iter),
    };
    result.map_err(|e| e.with_context("clustering"))
}

struct ClusterFit {
    estimate: Array2<f64>,
    report: ClusterReport,
}

fn fit_cluster(k: usize, rows: &[usize], data: &Array2<f64>, config: &PipelineConfig, solver: &SolverConfig) -> Result<ClusterFit> {
    let n = data.ncols();
    let mut y = Array2::zeros((rows.len(), n));
    for (dst, &src) in rows.iter().enumerate() {
        y.row_mut(dst).assign(&data.row(src));
    }
    let rng = Rng::new(config.seed).substream(k as u64 + 1);
    let (pair, diag) = match factorize(y.view(), solver, &mut rng.clone()) {
        // Plain Newton steps can overshoot from the random start when counts
        // are high; refit from the same start with step halving.
        Err(NlpcaError::Numeric { context, message }) if !solver.guard && solver.mode != SolverMode::GaussianPca => {
            let guarded = SolverConfig {
                guard: true,
                ..solver.clone()
            };
            let (pair, mut diag) =
                factorize(y.view(), &guarded, &mut rng.clone()).map_err(|e| e.with_context(format!("cluster {k}")))?;
            diag.warnings.push(format!("unguarded fit failed ({context}: {message}); refitted with step halving"));
            (pair, diag)
        }
        other => other.map_err(|e| e.with_context(format!("cluster {k}")))?,
    };
    let est = match config.method {
        Method::AnscombeNlpca => pair.u.dot(&pair.v).mapv(|x| anscombe::inverse(x, config.inverse)),
        _ => estimate(&pair)?,
    };
    Ok(ClusterFit {
        estimate: est,
        report: ClusterReport {
            cluster: k,
            size: rows.len(),
            final_loss: diag.final_loss(),
            iterations: diag.iterations.len(),
            converged: diag.converged,
            lambda: diag.lambda,
            spiral_updates: diag.spiral.updates,
            spiral_stalls: diag.spiral.stalls,
            spiral_increases: diag.spiral.increases,
            warnings: diag.warnings,
        },
    })
}

fn finish(
    y: &CountImage,
    patches: PatchSet,
    labels: &[usize],
    clustering: &Clustering,
    config: &PipelineConfig,
    clustering_ms: f64,
    start: Instant,
) -> Result<Denoised> {
    let k = clustering.k();
    let mut members: Vec<Vec<usize>> = vec![Vec::new(); k];
    for (i, &l) in labels.iter().enumerate() {
        members[l].push(i);
    }
    let data = match config.method {
        Method::AnscombeNlpca => patches.matrix.mapv(anscombe::forward),
        _ => patches.matrix.clone(),
    };
    let solver = config.solver_config();

    let t0 = Instant::now();
    let work = || -> Result<Vec<Option<ClusterFit>>> {
        members
            .par_iter()
            .enumerate()
            .map(|(c, rows)| {
                if rows.is_empty() {
                    Ok(None)
                } else {
                    fit_cluster(c, rows, &data, config, &solver).map(Some)
                }
            })
            .collect()
    };
    let fits = match config.threads {
        Some(t) => rayon::ThreadPoolBuilder::new()
            .num_threads(t)
            .build()
            .map_err(|e| NlpcaError::invalid(format!("cannot build thread pool: {e}")))?
            .install(work)?,
        None => work()?,
    };
    let factorization_ms = ms(t0);

    let t0 = Instant::now();
    let mut fused = Array2::zeros(patches.matrix.dim());
    let mut reports = Vec::with_capacity(k);
    for (fit, rows) in fits.into_iter().zip(&members) {
        if let Some(fit) = fit {
            for (src, &dst) in rows.iter().enumerate() {
                fused.row_mut(dst).assign(&fit.estimate.row(src));
            }
            reports.push(fit.report);
        }
    }
    let estimate_patches = PatchSet::new(patches.geometry.clone(), fused)?;
    let mut values = patchgrid::reproject_values(&estimate_patches)?;
    if config.method == Method::AnscombeNlpca {
        values.iter_mut().for_each(|v| *v = v.max(0.0));
    }
    let image = IntensityImage::new(y.shape().to_vec(), values)?;
    let reprojection_ms = ms(t0);

    let report = RunReport {
        method: config.method,
        config: config.clone(),
        image_shape: y.shape().to_vec(),
        patch_count: patches.geometry.patch_count(),
        patch_len: patches.geometry.patch_len(),
        kmeans: KmeansReport {
            clusters: k,
            iterations: clustering.iterations,
            converged: clustering.converged,
            objective: clustering.objective.last().copied(),
        },
        clusters: reports,
        timings: Timings {
            clustering_ms,
            factorization_ms,
            reprojection_ms,
            total_ms: ms(start),
        },
        metrics: None,
    };
    Ok(Denoised { image, report })
}

fn replicate(image: &IntensityImage, bin_shape: &[usize], scale: f64) -> Result<IntensityImage> {
    let shape: Vec<usize> = image.shape().iter().zip(bin_shape).map(|(s, b)| s * b).collect();
    let bb = bin_shape.get(2).copied().unwrap_or(1);
    IntensityImage::from_fn(shape, |r, c, k| image.get(r / bin_shape[0], c / bin_shape[1], k / bb) * scale)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::imaging::simulate_poisson;

    fn small_config(method: Method) -> PipelineConfig {
        let mut config = PipelineConfig::new(method);
        config.patch_shape = vec![6, 6];
        config.clusters = 3;
        config.seed = 5;
        config
    }

    fn noisy(peak: f64, seed: u64) -> (IntensityImage, CountImage) {
        let truth = IntensityImage::from_fn(vec![24, 24], |r, c, _| if (r / 8 + c / 8) % 2 == 0 { 255.0 } else { 40.0 }).unwrap();
        let counts = simulate_poisson(&truth, peak, &mut Rng::new(seed)).unwrap();
        (truth, counts)
    }

    #[test]
    fn defaults_match_the_reference_settings() {
        let c = PipelineConfig::default();
        assert_eq!(c.patch_shape, vec![20, 20]);
        assert_eq!(c.clusters, 14);
        assert_eq!(c.solver.rank, 4);
        assert_eq!(c.solver.max_iter, 20);
        assert_eq!(c.solver.stop_tol, 0.1);
        assert_eq!(c.solver.cond, 1e-3);
        let s = PipelineConfig::spectral(Method::Nlspca);
        assert_eq!((s.patch_shape, s.clusters, s.solver.rank), (vec![5, 5, 23], 30, 2));
    }

    #[test]
    fn outputs_are_positive_and_shaped() {
        let (_, y) = noisy(2.0, 1);
        for method in [Method::Nlpca, Method::Nlspca] {
            let out = denoise(&y, &small_config(method)).unwrap();
            assert_eq!(out.shape(), y.shape());
            assert!(out.data().iter().all(|&v| v > 0.0));
        }
        let out = denoise(&y, &small_config(Method::AnscombeNlpca)).unwrap();
        assert!(out.data().iter().all(|&v| v >= 0.0));
    }

    #[test]
    fn deterministic_and_thread_independent() {
        let (_, y) = noisy(1.0, 2);
        let mut config = small_config(Method::Nlpca);
        let a = denoise(&y, &config).unwrap();
        config.threads = Some(1);
        let b = denoise(&y, &config).unwrap();
        assert_eq!(a, b);
        config.seed += 1;
        assert_ne!(a, denoise(&y, &config).unwrap());
    }

    #[test]
    fn report_accounts_for_every_patch() {
        let (_, y) = noisy(1.0, 3);
        let out = denoise_with_report(&y, &small_config(Method::Nlspca)).unwrap();
        let total: usize = out.report.clusters.iter().map(|c| c.size).sum();
        assert_eq!(total, out.report.patch_count);
        assert_eq!(out.report.patch_count, 19 * 19);
        assert!(out.report.clusters.iter().all(|c| c.lambda > 0.0 && c.spiral_increases == 0));
    }

    #[test]
    fn binned_keeps_shape_and_scale() {
        let truth = IntensityImage::filled(vec![25, 25], 10.0).unwrap();
        let y = simulate_poisson(&truth, 4.0, &mut Rng::new(9)).unwrap();
        let mut config = small_config(Method::Nlpca);
        config.patch_shape = vec![4, 4];
        config.clusters = 2;
        for interpolate in [true, false] {
            config.binning = Some(Binning {
                bin_shape: vec![3, 3],
                interpolate,
            });
            let out = denoise_binned(&y, &config).unwrap();
            assert_eq!(out.shape(), &[25, 25]);
            let mean = out.sum() / out.len() as f64;
            assert!((mean - 4.0).abs() < 0.4, "{mean}");
        }
        config.binning = None;
        assert!(denoise_binned(&y, &config).is_err());
    }

    #[test]
    fn single_band_cube_matches_plain_denoise() {
        let (_, y) = noisy(1.0, 4);
        let cube = CountImage::new(vec![24, 24, 1], y.data().to_vec()).unwrap();
        for method in [Method::Nlpca, Method::AnscombeNlpca] {
            let plain = denoise(&y, &small_config(method)).unwrap();
            let mut config = small_config(method);
            config.patch_shape = vec![6, 6, 1];
            let spectral = denoise_spectral(&cube, &config).unwrap();
            assert_eq!(spectral.data(), plain.data());
        }
    }

    #[test]
    fn spectral_rejects_deep_patches() {
        let cube = CountImage::filled(vec![8, 8, 3], 1).unwrap();
        let mut config = small_config(Method::Nlpca);
        config.patch_shape = vec![3, 3, 4];
        assert!(denoise_spectral(&cube, &config).is_err());
        config.patch_shape = vec![3, 3];
        assert!(denoise_spectral(&cube, &config).is_err());
    }

    #[test]
    fn invalid_configs_are_rejected() {
        let (_, y) = noisy(1.0, 5);
        let mut config = small_config(Method::Nlpca);
        config.clusters = 0;
        assert!(denoise(&y, &config).is_err());
        let mut config = small_config(Method::Nlpca);
        config.patch_shape = vec![30, 30];
        assert!(denoise(&y, &config).is_err());
        let mut config = small_config(Method::Nlpca);
        config.threads = Some(0);
        assert!(denoise(&y, &config).is_err());
    }

    #[test]
    fn method_names_round_trip() {
        for m in [Method::Nlpca, Method::Nlspca, Method::AnscombeNlpca] {
            assert_eq!(Method::parse(m.name()), Some(m));
        }
        assert_eq!(Method::parse("bm3d"), None);
    }
}
