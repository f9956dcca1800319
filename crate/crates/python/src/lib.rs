//! Python bindings: `import nlpca`.
//!
//! Images cross the boundary as numpy arrays of shape `(h, w)` or
//! `(h, w, bands)`. Count inputs may be any numeric dtype holding
//! nonnegative integers.

use std::path::PathBuf;

use ndarray::{Array2, ArrayD, IxDyn};
use nlpca_core::anscombe::{self, InverseKind};
use nlpca_core::clustering::{bregman_kmeans, Divergence};
use nlpca_core::factorization::{self, Lambda, SolverConfig, SolverMode};
use nlpca_core::imaging::io::{self as imgio, ImageFormat, Raster};
use nlpca_core::imaging::{self, CountImage, Image, IntensityImage};
use nlpca_core::pipeline::{self, Binning, Method, Phantom, PipelineConfig};
use nlpca_core::{NlpcaError, Rng};
use numpy::{AllowTypeChange, IntoPyArray, PyArray2, PyArrayDyn, PyArrayLike2, PyArrayLikeDyn};
use pyo3::exceptions::{PyArithmeticError, PyOSError, PyValueError};
use pyo3::prelude::*;

fn to_py(e: NlpcaError) -> PyErr {
    match e {
        NlpcaError::Io { .. } => PyOSError::new_err(e.to_string()),
        NlpcaError::Numeric { .. } | NlpcaError::DegenerateIntensity => PyArithmeticError::new_err(e.to_string()),
        _ => PyValueError::new_err(e.to_string()),
    }
}

type Floats<'py> = PyArrayLikeDyn<'py, f64, AllowTypeChange>;

fn intensity_from(array: &Floats<'_>) -> PyResult<IntensityImage> {
    let view = array.as_array();
    IntensityImage::new(view.shape().to_vec(), view.iter().copied().collect()).map_err(to_py)
}

fn counts_from(array: &Floats<'_>) -> PyResult<CountImage> {
    intensity_from(array)?.to_counts().map_err(to_py)
}

fn image_to_py<'py, T: numpy::Element + Copy>(py: Python<'py>, image: Image<T>) -> PyResult<Bound<'py, PyArrayDyn<T>>>
where
    T: nlpca_core::imaging::Pixel,
{
    let shape = image.shape().to_vec();
    let array = ArrayD::from_shape_vec(IxDyn(&shape), image.into_data()).map_err(|e| PyValueError::new_err(e.to_string()))?;
    Ok(array.into_pyarray(py))
}

fn parse_method(name: &str) -> PyResult<Method> {
    Method::parse(name).ok_or_else(|| PyValueError::new_err(format!("unknown method {name:?}")))
}

fn parse_inverse(name: &str) -> PyResult<InverseKind> {
    match name {
        "algebraic" => Ok(InverseKind::Algebraic),
        "asymptotic" => Ok(InverseKind::AsymptoticUnbiased),
        _ => Err(PyValueError::new_err(format!("unknown inverse {name:?} (algebraic or asymptotic)"))),
    }
}

fn format_of(path: &PathBuf) -> PyResult<ImageFormat> {
    ImageFormat::from_path(path)
        .ok_or_else(|| PyValueError::new_err(format!("{}: unknown image format", path.display())))
}

/// Denoiser settings. Defaults are the 2D ones (20x20 patches, 14 clusters,
/// rank 4); `Config.spectral(method)` gives the hyperspectral ones.
#[pyclass(name = "Config", from_py_object)]
#[derive(Clone)]
struct PyConfig {
    inner: PipelineConfig,
}

#[pymethods]
impl PyConfig {
    #[new]
    #[pyo3(signature = (method = "nlpca"))]
    fn new(method: &str) -> PyResult<Self> {
        Ok(PyConfig {
            inner: PipelineConfig::new(parse_method(method)?),
        })
    }

    #[staticmethod]
    #[pyo3(signature = (method = "nlpca"))]
    fn spectral(method: &str) -> PyResult<Self> {
        Ok(PyConfig {
            inner: PipelineConfig::spectral(parse_method(method)?),
        })
    }

    #[getter]
    fn method(&self) -> &'static str {
        self.inner.method.name()
    }

    #[setter]
    fn set_method(&mut self, name: &str) -> PyResult<()> {
        self.inner.method = parse_method(name)?;
        Ok(())
    }

    #[getter]
    fn patch_shape(&self) -> Vec<usize> {
        self.inner.patch_shape.clone()
    }

    #[setter]
    fn set_patch_shape(&mut self, shape: Vec<usize>) {
        self.inner.patch_shape = shape;
    }

    #[getter]
    fn clusters(&self) -> usize {
        self.inner.clusters
    }

    #[setter]
    fn set_clusters(&mut self, k: usize) {
        self.inner.clusters = k;
    }

    #[getter]
    fn rank(&self) -> usize {
        self.inner.solver.rank
    }

    #[setter]
    fn set_rank(&mut self, rank: usize) {
        self.inner.solver.rank = rank;
    }

    #[getter]
    fn max_iter(&self) -> usize {
        self.inner.solver.max_iter
    }

    #[setter]
    fn set_max_iter(&mut self, n: usize) {
        self.inner.solver.max_iter = n;
    }

    #[getter]
    fn stop_tol(&self) -> f64 {
        self.inner.solver.stop_tol
    }

    #[setter]
    fn set_stop_tol(&mut self, tol: f64) {
        self.inner.solver.stop_tol = tol;
    }

    #[getter]
    fn cond(&self) -> f64 {
        self.inner.solver.cond
    }

    #[setter]
    fn set_cond(&mut self, cond: f64) {
        self.inner.solver.cond = cond;
    }

    /// Fixed l1 weight, or `None` for the per-cluster default.
    #[getter]
    fn lambda_(&self) -> Option<f64> {
        match self.inner.solver.lambda {
            Lambda::Fixed(v) => Some(v),
            Lambda::Scaled(_) => None,
        }
    }

    #[setter]
    fn set_lambda_(&mut self, value: Option<f64>) {
        self.inner.solver.lambda = match value {
            Some(v) => Lambda::Fixed(v),
            None => SolverConfig::default().lambda,
        };
    }

    #[getter]
    fn guard(&self) -> bool {
        self.inner.solver.guard
    }

    #[setter]
    fn set_guard(&mut self, guard: bool) {
        self.inner.solver.guard = guard;
    }

    /// Bin shape of the binned variant, or `None`.
    #[getter]
    fn bin(&self) -> Option<Vec<usize>> {
        self.inner.binning.as_ref().map(|b| b.bin_shape.clone())
    }

    #[setter]
    fn set_bin(&mut self, shape: Option<Vec<usize>>) {
        self.inner.binning = shape.map(|bin_shape| Binning {
            bin_shape,
            interpolate: true,
        });
    }

    #[getter]
    fn inverse(&self) -> &'static str {
        match self.inner.inverse {
            InverseKind::Algebraic => "algebraic",
            InverseKind::AsymptoticUnbiased => "asymptotic",
        }
    }

    #[setter]
    fn set_inverse(&mut self, name: &str) -> PyResult<()> {
        self.inner.inverse = parse_inverse(name)?;
        Ok(())
    }

    #[getter]
    fn seed(&self) -> u64 {
        self.inner.seed
    }

    #[setter]
    fn set_seed(&mut self, seed: u64) {
        self.inner.seed = seed;
    }

    #[getter]
    fn threads(&self) -> Option<usize> {
        self.inner.threads
    }

    #[setter]
    fn set_threads(&mut self, threads: Option<usize>) {
        self.inner.threads = threads;
    }

    fn to_json(&self) -> PyResult<String> {
        serde_json::to_string(&self.inner).map_err(|e| PyValueError::new_err(e.to_string()))
    }

    fn __repr__(&self) -> String {
        format!(
            "Config(method={:?}, patch_shape={:?}, clusters={}, rank={}, seed={})",
            self.inner.method.name(),
            self.inner.patch_shape,
            self.inner.clusters,
            self.inner.solver.rank,
            self.inner.seed
        )
    }
}

fn config_or_default(config: Option<PyConfig>, ndim: usize) -> PipelineConfig {
    match config {
        Some(c) => c.inner,
        None if ndim == 3 => PipelineConfig::spectral(Method::Nlpca),
        None => PipelineConfig::default(),
    }
}

/// Poisson counts with mean `truth * peak / max(truth)`.
#[pyfunction]
#[pyo3(signature = (truth, peak, seed = 0))]
fn simulate_poisson<'py>(
    py: Python<'py>,
    truth: Floats<'py>,
    peak: f64,
    seed: u64,
) -> PyResult<Bound<'py, PyArrayDyn<u32>>> {
    let truth = intensity_from(&truth)?;
    let counts = imaging::simulate_poisson(&truth, peak, &mut Rng::new(seed)).map_err(to_py)?;
    image_to_py(py, counts)
}

/// Denoises a count image (2D, 3D cube, or binned per the config).
#[pyfunction]
#[pyo3(signature = (counts, config = None))]
fn denoise<'py>(py: Python<'py>, counts: Floats<'py>, config: Option<PyConfig>) -> PyResult<Bound<'py, PyArrayDyn<f64>>> {
    Ok(denoise_with_report(py, counts, config)?.0)
}

/// Like `denoise`, also returning the run report as a dict.
#[pyfunction]
#[pyo3(signature = (counts, config = None))]
fn denoise_with_report<'py>(
    py: Python<'py>,
    counts: Floats<'py>,
    config: Option<PyConfig>,
) -> PyResult<(Bound<'py, PyArrayDyn<f64>>, Bound<'py, PyAny>)> {
    let y = counts_from(&counts)?;
    let config = config_or_default(config, y.ndim());
    let out = py.detach(|| pipeline::run(&y, &config)).map_err(to_py)?;
    let json = serde_json::to_string(&out.report).map_err(|e| PyValueError::new_err(e.to_string()))?;
    let report = py.import("json")?.call_method1("loads", (json,))?;
    Ok((image_to_py(py, out.image)?, report))
}

/// `(psnr, mae)` of a peak-domain estimate after rescaling by `max(truth) / peak`.
#[pyfunction]
fn evaluate(estimate: Floats<'_>, truth: Floats<'_>, peak: f64) -> PyResult<(f64, f64)> {
    let m = pipeline::evaluate(&intensity_from(&estimate)?, &intensity_from(&truth)?, peak).map_err(to_py)?;
    Ok((m.psnr, m.mae))
}

/// PSNR in dB on the 0-255 scale; `inf` for identical images.
#[pyfunction]
fn psnr(estimate: Floats<'_>, truth: Floats<'_>) -> PyResult<f64> {
    imaging::psnr(&intensity_from(&estimate)?, &intensity_from(&truth)?).map_err(to_py)
}

/// `sum |estimate - truth| / sum |truth|`.
#[pyfunction]
fn mae(estimate: Floats<'_>, truth: Floats<'_>) -> PyResult<f64> {
    imaging::mae(&intensity_from(&estimate)?, &intensity_from(&truth)?).map_err(to_py)
}

#[pyfunction]
fn anscombe_forward<'py>(py: Python<'py>, counts: Floats<'py>) -> PyResult<Bound<'py, PyArrayDyn<f64>>> {
    let counts = counts_from(&counts)?;
    image_to_py(py, anscombe::anscombe_forward(&counts).map_err(to_py)?)
}

/// `kind` is "asymptotic" ((x/2)^2 - 1/8) or "algebraic" ((x/2)^2 - 3/8).
#[pyfunction]
#[pyo3(signature = (values, kind = "asymptotic"))]
fn anscombe_inverse<'py>(py: Python<'py>, values: Floats<'py>, kind: &str) -> PyResult<Bound<'py, PyArrayDyn<f64>>> {
    let kind = parse_inverse(kind)?;
    let view = values.as_array();
    let data: Vec<f64> = view.iter().copied().collect();
    image_to_py(py, anscombe::anscombe_inverse(&data, view.shape(), kind).map_err(to_py)?)
}

/// Exact count recovery from forward-transformed counts.
#[pyfunction]
fn anscombe_inverse_counts<'py>(py: Python<'py>, values: Floats<'py>) -> PyResult<Bound<'py, PyArrayDyn<u32>>> {
    let values = intensity_from(&values)?;
    image_to_py(py, anscombe::anscombe_inverse_counts(&values).map_err(to_py)?)
}

/// Standard deviation of the transformed samples, as `[(f, std), ...]`.
#[pyfunction]
#[pyo3(signature = (f_values, draws = 1_000_000, seed = 0))]
fn variance_stabilization(py: Python<'_>, f_values: Vec<f64>, draws: usize, seed: u64) -> PyResult<Vec<(f64, f64)>> {
    let rows = py
        .detach(|| anscombe::variance_stabilization_experiment(&f_values, draws, &Rng::new(seed)))
        .map_err(to_py)?;
    Ok(rows.into_iter().map(|r| (r.f, r.std)).collect())
}

/// Bregman hard clustering of the rows of `points`; returns `(labels, centers)`.
#[pyfunction]
#[pyo3(signature = (points, k, divergence = "poisson", seed = 0, max_iter = 100))]
fn kmeans<'py>(
    py: Python<'py>,
    points: PyArrayLike2<'py, f64, AllowTypeChange>,
    k: usize,
    divergence: &str,
    seed: u64,
    max_iter: usize,
) -> PyResult<(Vec<usize>, Bound<'py, PyArray2<f64>>)> {
    let kind = match divergence {
        "poisson" => Divergence::Poisson,
        "gaussian" => Divergence::Gaussian,
        _ => return Err(PyValueError::new_err(format!("unknown divergence {divergence:?}"))),
    };
    let points = points.as_array().to_owned();
    let result = py
        .detach(|| bregman_kmeans(points.view(), k, kind, &mut Rng::new(seed), max_iter))
        .map_err(to_py)?;
    Ok((result.labels, result.centers.into_pyarray(py)))
}

/// Factorizes a count matrix `y ~ exp(U V)` (or `U V` for "gaussian");
/// returns `(U, V, final_loss)`.
#[pyfunction]
#[pyo3(signature = (y, rank = 4, mode = "nlpca", seed = 0, max_iter = 20, stop_tol = 0.1, cond = 1e-3, lambda_ = None))]
#[allow(clippy::too_many_arguments)]
fn factorize<'py>(
    py: Python<'py>,
    y: PyArrayLike2<'py, f64, AllowTypeChange>,
    rank: usize,
    mode: &str,
    seed: u64,
    max_iter: usize,
    stop_tol: f64,
    cond: f64,
    lambda_: Option<f64>,
) -> PyResult<(Bound<'py, PyArray2<f64>>, Bound<'py, PyArray2<f64>>, Option<f64>)> {
    let mode = match mode {
        "nlpca" => SolverMode::PoissonNlpca,
        "nlspca" => SolverMode::PoissonNlspca,
        "gaussian" => SolverMode::GaussianPca,
        _ => return Err(PyValueError::new_err(format!("unknown mode {mode:?}"))),
    };
    let mut config = SolverConfig {
        rank,
        mode,
        max_iter,
        stop_tol,
        cond,
        ..SolverConfig::default()
    };
    if let Some(l) = lambda_ {
        config.lambda = Lambda::Fixed(l);
    }
    let y: Array2<f64> = y.as_array().to_owned();
    let (pair, diag) = py
        .detach(|| factorization::factorize(y.view(), &config, &mut Rng::new(seed)))
        .map_err(to_py)?;
    Ok((pair.u.into_pyarray(py), pair.v.into_pyarray(py), diag.final_loss()))
}

/// Synthetic test image ("ridges", "flag" or "swoosh") with maximum 255.
#[pyfunction]
#[pyo3(signature = (name = "ridges", size = 128))]
fn phantom<'py>(py: Python<'py>, name: &str, size: usize) -> PyResult<Bound<'py, PyArrayDyn<f64>>> {
    let kind = Phantom::parse(name).ok_or_else(|| PyValueError::new_err(format!("unknown phantom {name:?}")))?;
    image_to_py(py, pipeline::phantom(kind, size).map_err(to_py)?)
}

/// Reads a .pgm, .csv or .raw3d file as float64.
#[pyfunction]
fn read_image<'py>(py: Python<'py>, path: PathBuf) -> PyResult<Bound<'py, PyArrayDyn<f64>>> {
    let raster = imgio::read_image(&path, format_of(&path)?).map_err(to_py)?;
    image_to_py(py, raster.to_intensity())
}

/// Writes a float64 image; integer-valued arrays are written as counts.
#[pyfunction]
fn write_image(path: PathBuf, image: Floats<'_>) -> PyResult<()> {
    let image = intensity_from(&image)?;
    let raster = match image.to_counts() {
        Ok(counts) => Raster::Counts(counts),
        Err(_) => Raster::Intensity(image),
    };
    imgio::write_image(&raster, &path, format_of(&path)?).map_err(to_py)
}

#[pymodule]
fn nlpca(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add("__version__", env!("CARGO_PKG_VERSION"))?;
    m.add_class::<PyConfig>()?;
    m.add_function(wrap_pyfunction!(simulate_poisson, m)?)?;
    m.add_function(wrap_pyfunction!(denoise, m)?)?;
    m.add_function(wrap_pyfunction!(denoise_with_report, m)?)?;
    m.add_function(wrap_pyfunction!(evaluate, m)?)?;
    m.add_function(wrap_pyfunction!(psnr, m)?)?;
    m.add_function(wrap_pyfunction!(mae, m)?)?;
    m.add_function(wrap_pyfunction!(anscombe_forward, m)?)?;
    m.add_function(wrap_pyfunction!(anscombe_inverse, m)?)?;
    m.add_function(wrap_pyfunction!(anscombe_inverse_counts, m)?)?;
    m.add_function(wrap_pyfunction!(variance_stabilization, m)?)?;
    m.add_function(wrap_pyfunction!(kmeans, m)?)?;
    m.add_function(wrap_pyfunction!(factorize, m)?)?;
    m.add_function(wrap_pyfunction!(phantom, m)?)?;
    m.add_function(wrap_pyfunction!(read_image, m)?)?;
    m.add_function(wrap_pyfunction!(write_image, m)?)?;
    Ok(())
}
