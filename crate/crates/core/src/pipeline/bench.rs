//! Methods x peaks x noise realizations benchmark on a phantom.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{NlpcaError, Result};
use crate::imaging::{simulate_poisson, IntensityImage};
use crate::pipeline::phantoms::{phantom, Phantom, PHANTOM_SIZE};
use crate::pipeline::{evaluate, run, Binning, Method, PipelineConfig};
use crate::rng::Rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BenchMethod {
    Nlpca,
    Nlspca,
    Anscombe,
    NlpcaBin,
    NlspcaBin,
}

impl BenchMethod {
    pub const ALL: [BenchMethod; 5] = [
        BenchMethod::Nlpca,
        BenchMethod::Nlspca,
        BenchMethod::Anscombe,
        BenchMethod::NlpcaBin,
        BenchMethod::NlspcaBin,
    ];

    pub fn name(self) -> &'static str {
        match self {
            BenchMethod::Nlpca => "nlpca",
            BenchMethod::Nlspca => "nlspca",
            BenchMethod::Anscombe => "anscombe",
            BenchMethod::NlpcaBin => "nlpca_bin",
            BenchMethod::NlspcaBin => "nlspca_bin",
        }
    }

    pub fn parse(name: &str) -> Option<Self> {
        let name = name.to_ascii_lowercase().replace('-', "_");
        BenchMethod::ALL.into_iter().find(|m| m.name() == name)
    }

    fn method(self) -> Method {
        match self {
            BenchMethod::Nlpca | BenchMethod::NlpcaBin => Method::Nlpca,
            BenchMethod::Nlspca | BenchMethod::NlspcaBin => Method::Nlspca,
            BenchMethod::Anscombe => Method::AnscombeNlpca,
        }
    }

    fn binned(self) -> bool {
        matches!(self, BenchMethod::NlpcaBin | BenchMethod::NlspcaBin)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchConfig {
    pub phantom: Phantom,
    pub size: usize,
    pub peaks: Vec<f64>,
    /// Noise realizations per (method, peak) cell.
    pub reps: usize,
    pub methods: Vec<BenchMethod>,
    pub seed: u64,
    /// Settings shared by all methods; `method` and `binning` are overridden.
    pub base: PipelineConfig,
    /// Side of the square bins of the binned methods.
    pub bin: usize,
}

impl Default for BenchConfig {
    fn default() -> Self {
        BenchConfig {
            phantom: Phantom::Ridges,
            size: PHANTOM_SIZE,
            peaks: vec![0.1, 1.0],
            reps: 5,
            methods: BenchMethod::ALL.to_vec(),
            seed: 0,
            base: PipelineConfig::default(),
            bin: 3,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchCell {
    /// `noisy` for the unprocessed counts, otherwise a [`BenchMethod`] name.
    pub method: String,
    pub peak: f64,
    pub psnr: Vec<f64>,
    pub mean_psnr: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BenchResult {
    pub cells: Vec<BenchCell>,
    /// One row per method (after a `noisy` row), one column per peak.
    pub csv: String,
    /// First-realization estimate of every cell, keyed `<method>_peak<peak>`.
    pub images: Vec<(String, IntensityImage)>,
}

/// Realization `rep` at peak index `p` uses noise substream `p * 2^32 + rep`
/// of the bench seed and pipeline seed `seed + rep`.
pub fn run_bench(config: &BenchConfig) -> Result<BenchResult> {
    if config.reps == 0 || config.peaks.is_empty() {
        return Err(NlpcaError::invalid("bench needs at least one peak and one repetition"));
    }
    if config.peaks.iter().any(|&p| !(p > 0.0 && p.is_finite())) {
        return Err(NlpcaError::invalid("peaks must be positive"));
    }
    if config.bin == 0 {
        return Err(NlpcaError::invalid("bin size must be positive"));
    }
    let truth = phantom(config.phantom, config.size)?;
    let master = Rng::new(config.seed);
    let rows: Vec<Option<BenchMethod>> = std::iter::once(None).chain(config.methods.iter().copied().map(Some)).collect();
    let mut cells = Vec::new();
    let mut images = Vec::new();

    for row in &rows {
        for (p, &peak) in config.peaks.iter().enumerate() {
            let name = row.map_or("noisy", |m| m.name());
            let mut psnrs = Vec::with_capacity(config.reps);
            for rep in 0..config.reps {
                let mut noise = master.substream(((p as u64) << 32) | rep as u64);
                let counts = simulate_poisson(&truth, peak, &mut noise)?;
                let estimate = match row {
                    None => counts.to_intensity(),
                    Some(m) => {
                        let pipeline = PipelineConfig {
                            method: m.method(),
                            binning: m.binned().then(|| Binning {
                                bin_shape: vec![config.bin, config.bin],
                                interpolate: true,
                            }),
                            seed: config.seed.wrapping_add(rep as u64),
                            ..config.base.clone()
                        };
                        run(&counts, &pipeline)
                            .map_err(|e| e.with_context(format!("{name} at peak {peak}, realization {rep}")))?
                            .image
                    }
                };
                psnrs.push(evaluate(&estimate, &truth, peak)?.psnr);
                if rep == 0 {
                    images.push((format!("{name}_peak{peak}"), estimate));
                }
            }
            let mean_psnr = psnrs.iter().sum::<f64>() / psnrs.len() as f64;
            cells.push(BenchCell {
                method: name.to_string(),
                peak,
                psnr: psnrs,
                mean_psnr,
            });
        }
    }

    let mut csv = String::from("method");
    for peak in &config.peaks {
        let _ = write!(csv, ",{peak}");
    }
    csv.push('\n');
    for chunk in cells.chunks(config.peaks.len()) {
        csv.push_str(&chunk[0].method);
        for cell in chunk {
            let _ = write!(csv, ",{:.4}", cell.mean_psnr);
        }
        csv.push('\n');
    }
    Ok(BenchResult { cells, csv, images })
}
