use crate::error::{NlpcaError, Result};
use crate::imaging::IntensityImage;

/// Dynamic range of the 8-bit reference scale used by [`psnr`].
pub const PSNR_PEAK: f64 = 255.0;

fn check_same_shape(a: &IntensityImage, b: &IntensityImage) -> Result<()> {
    if a.shape() != b.shape() {
        return Err(NlpcaError::shape(format!(
            "estimate {:?} vs reference {:?}",
            a.shape(),
            b.shape()
        )));
    }
    Ok(())
}

/// Peak signal-to-noise ratio in dB on the 0-255 scale.
///
/// Identical images give `f64::INFINITY`.
pub fn psnr(estimate: &IntensityImage, truth: &IntensityImage) -> Result<f64> {
    check_same_shape(estimate, truth)?;
    let sse: f64 = estimate
        .data()
        .iter()
        .zip(truth.data())
        .map(|(a, b)| (a - b) * (a - b))
        .sum();
    let mse = sse / truth.len() as f64;
    if mse == 0.0 {
        return Ok(f64::INFINITY);
    }
    Ok(10.0 * (PSNR_PEAK * PSNR_PEAK / mse).log10())
}

/// Mean absolute error relative to the reference mass, `|fhat - f|_1 / |f|_1`.
pub fn mae(estimate: &IntensityImage, truth: &IntensityImage) -> Result<f64> {
    check_same_shape(estimate, truth)?;
    let mass: f64 = truth.data().iter().map(|v| v.abs()).sum();
    if mass <= 0.0 {
        return Err(NlpcaError::invalid("reference image has zero mass"));
    }
    let err: f64 = estimate
        .data()
        .iter()
        .zip(truth.data())
        .map(|(a, b)| (a - b).abs())
        .sum();
    Ok(err / mass)
}

/// Rescales a peak-domain estimate back to the reference range, by `reference_max / peak`.
pub fn rescale_from_peak(estimate: &IntensityImage, peak: f64, reference_max: f64) -> Result<IntensityImage> {
    if !(peak > 0.0) {
        return Err(NlpcaError::invalid(format!("peak must be positive, got {peak}")));
    }
    estimate.scaled(reference_max / peak)
}
