use crate::error::{NlpcaError, Result};
use crate::imaging::{CountImage, Image, IntensityImage};
use crate::rng::Rng;

/// Draws `y_i ~ Poisson(f_i * peak / max(f))` independently per element.
pub fn simulate_poisson(truth: &IntensityImage, peak: f64, rng: &mut Rng) -> Result<CountImage> {
    if !(peak > 0.0 && peak.is_finite()) {
        return Err(NlpcaError::invalid(format!("peak must be positive, got {peak}")));
    }
    let max = truth.max_value();
    if max <= 0.0 {
        return Err(NlpcaError::DegenerateIntensity);
    }
    let scale = peak / max;
    let data = truth
        .data()
        .iter()
        .map(|&f| {
            let y = rng.poisson(f * scale);
            u32::try_from(y).map_err(|_| NlpcaError::numeric("simulate_poisson", "count exceeds u32"))
        })
        .collect::<Result<Vec<u32>>>()?;
    Image::new(truth.shape().to_vec(), data)
}

/// Scales an image so that its maximum equals `peak`.
pub fn scale_to_peak(truth: &IntensityImage, peak: f64) -> Result<IntensityImage> {
    let max = truth.max_value();
    if max <= 0.0 {
        return Err(NlpcaError::DegenerateIntensity);
    }
    truth.scaled(peak / max)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn constant_image_has_mean_peak() {
        let f = IntensityImage::filled(vec![1000, 1000], 3.7).unwrap();
        let y = simulate_poisson(&f, 2.0, &mut Rng::new(5)).unwrap();
        let n = y.len() as f64;
        let mean = y.sum() / n;
        assert!((mean - 2.0).abs() < 3.0 * (2.0 / n).sqrt(), "mean {mean}");
    }

    #[test]
    fn low_peak_means_are_bounded() {
        // max 255 scaled to 0.1: counts are overwhelmingly zero.
        let f = IntensityImage::from_fn(vec![64, 64], |r, c, _| ((r * 64 + c) % 256) as f64 * 1.0).unwrap();
        let f = IntensityImage::new(f.shape().to_vec(), f.data().iter().map(|v| v.min(255.0)).collect()).unwrap();
        let scaled = scale_to_peak(&f, 0.1).unwrap();
        assert!(scaled.data().iter().all(|&v| (0.0..=0.1 + 1e-15).contains(&v)));
        let y = simulate_poisson(&f, 0.1, &mut Rng::new(1)).unwrap();
        assert!(y.sum() / (y.len() as f64) < 0.1);
    }

    #[test]
    fn fixed_seed_is_reproducible() {
        let ramp = IntensityImage::from_fn(vec![4, 4], |r, c, _| (r * 4 + c) as f64).unwrap();
        let a = simulate_poisson(&ramp, 30.0, &mut Rng::new(42)).unwrap();
        let b = simulate_poisson(&ramp, 30.0, &mut Rng::new(42)).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.shape(), ramp.shape());
    }

    #[test]
    fn degenerate_inputs() {
        let zero = IntensityImage::filled(vec![2, 2], 0.0).unwrap();
        assert!(matches!(
            simulate_poisson(&zero, 1.0, &mut Rng::new(0)),
            Err(NlpcaError::DegenerateIntensity)
        ));
        let one = IntensityImage::filled(vec![2, 2], 1.0).unwrap();
        assert!(simulate_poisson(&one, 0.0, &mut Rng::new(0)).is_err());
        assert!(simulate_poisson(&one, -1.0, &mut Rng::new(0)).is_err());
    }
}
