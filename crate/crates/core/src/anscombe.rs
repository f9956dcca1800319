//! Anscombe variance-stabilizing transform `A(y) = 2 sqrt(y + 3/8)` and its
//! closed-form inverses.

use serde::{Deserialize, Serialize};

use crate::error::{NlpcaError, Result};
use crate::imaging::{CountImage, IntensityImage};
use crate::rng::Rng;

/// Fewest Poisson draws per intensity accepted by [`variance_stabilization_experiment`].
pub const MIN_EXPERIMENT_DRAWS: usize = 10_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InverseKind {
    /// `(x/2)^2 - 3/8`, the exact algebraic inverse.
    Algebraic,
    /// `(x/2)^2 - 1/8`, unbiased to leading order for large counts.
    AsymptoticUnbiased,
}

#[inline]
pub fn forward(y: f64) -> f64 {
    2.0 * (y + 0.375).sqrt()
}

#[inline]
pub fn inverse(x: f64, kind: InverseKind) -> f64 {
    let offset = match kind {
        InverseKind::Algebraic => 0.375,
        InverseKind::AsymptoticUnbiased => 0.125,
    };
    ((x / 2.0).powi(2) - offset).max(0.0)
}

/// Elementwise forward transform of a count image.
pub fn anscombe_forward(counts: &CountImage) -> Result<IntensityImage> {
    IntensityImage::new(counts.shape().to_vec(), counts.data().iter().map(|&y| forward(y as f64)).collect())
}

/// Elementwise inverse, clamped at zero. Negative inputs are allowed.
pub fn anscombe_inverse(values: &[f64], shape: &[usize], kind: InverseKind) -> Result<IntensityImage> {
    IntensityImage::new(shape.to_vec(), values.iter().map(|&x| inverse(x, kind)).collect())
}

/// Algebraic inverse rounded to the nearest count.
///
/// The real-valued inverse of a floating-point forward transform is only
/// within a few ulps of the original count; rounding makes this an exact left
/// inverse of [`anscombe_forward`] on counts.
pub fn anscombe_inverse_counts(values: &IntensityImage) -> Result<CountImage> {
    let data = values
        .data()
        .iter()
        .map(|&x| {
            let y = inverse(x, InverseKind::Algebraic).round();
            if y <= u32::MAX as f64 {
                Ok(y as u32)
            } else {
                Err(NlpcaError::invalid(format!("{x} maps outside the count range")))
            }
        })
        .collect::<Result<Vec<u32>>>()?;
    CountImage::new(values.shape().to_vec(), data)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StdRow {
    pub f: f64,
    pub std: f64,
}

/// Sample standard deviation of `A(y)` for `draws` Poisson samples at each
/// intensity. One sub-stream of `rng` per intensity, in list order.
pub fn variance_stabilization_experiment(f_values: &[f64], draws: usize, rng: &Rng) -> Result<Vec<StdRow>> {
    if draws < MIN_EXPERIMENT_DRAWS {
        return Err(NlpcaError::invalid(format!(
            "need at least {MIN_EXPERIMENT_DRAWS} draws, got {draws}"
        )));
    }
    f_values
        .iter()
        .enumerate()
        .map(|(idx, &f)| {
            if !(f >= 0.0 && f.is_finite()) {
                return Err(NlpcaError::invalid(format!("intensity {f} must be nonnegative")));
            }
            let mut stream = rng.substream(idx as u64 + 1);
            // Welford accumulation
            let (mut mean, mut m2) = (0.0, 0.0);
            for k in 0..draws {
                let x = forward(stream.poisson(f) as f64);
                let delta = x - mean;
                mean += delta / (k + 1) as f64;
                m2 += delta * (x - mean);
            }
            Ok(StdRow {
                f,
                std: (m2 / (draws - 1) as f64).sqrt(),
            })
        })
        .collect()
}

/// Renders experiment rows as CSV with header `f,std`.
pub fn experiment_csv(rows: &[StdRow]) -> String {
    let mut out = String::from("f,std\n");
    for row in rows {
        out.push_str(&format!("{},{}\n", row.f, row.std));
    }
    out
}
