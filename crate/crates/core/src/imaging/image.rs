use serde::{Deserialize, Serialize};

use crate::error::{NlpcaError, Result};

/// Element type of an [`Image`].
pub trait Pixel: Copy + Default + PartialEq + std::fmt::Debug + Send + Sync {
    fn is_valid(self) -> bool;
    fn to_f64(self) -> f64;
}

impl Pixel for f64 {
    fn is_valid(self) -> bool {
        self.is_finite() && self >= 0.0
    }
    fn to_f64(self) -> f64 {
        self
    }
}

impl Pixel for u32 {
    fn is_valid(self) -> bool {
        true
    }
    fn to_f64(self) -> f64 {
        self as f64
    }
}

/// A 2D `[height, width]` or 3D `[height, width, bands]` image stored
/// row-major over its shape (the band index varies fastest).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Image<T> {
    shape: Vec<usize>,
    data: Vec<T>,
}

/// Nonnegative real intensities (ground truth or estimate).
pub type IntensityImage = Image<f64>;
/// Photon counts.
pub type CountImage = Image<u32>;

pub(crate) fn check_shape(shape: &[usize]) -> Result<usize> {
    if !(shape.len() == 2 || shape.len() == 3) {
        return Err(NlpcaError::shape(format!(
            "images are 2D or 3D, got {} dimensions",
            shape.len()
        )));
    }
    if shape.iter().any(|&d| d == 0) {
        return Err(NlpcaError::shape(format!("zero-sized dimension in {shape:?}")));
    }
    shape
        .iter()
        .try_fold(1usize, |acc, &d| acc.checked_mul(d))
        .ok_or_else(|| NlpcaError::shape(format!("dimension overflow for {shape:?}")))
}

impl<T: Pixel> Image<T> {
    pub fn new(shape: Vec<usize>, data: Vec<T>) -> Result<Self> {
        let len = check_shape(&shape)?;
        if len != data.len() {
            return Err(NlpcaError::shape(format!(
                "shape {shape:?} needs {len} elements, got {}",
                data.len()
            )));
        }
        if let Some(pos) = data.iter().position(|v| !v.is_valid()) {
            return Err(NlpcaError::invalid(format!(
                "element {pos} is negative or not finite: {:?}",
                data[pos]
            )));
        }
        Ok(Image { shape, data })
    }

    pub fn filled(shape: Vec<usize>, value: T) -> Result<Self> {
        let len = check_shape(&shape)?;
        Image::new(shape, vec![value; len])
    }

    /// Builds an image from a generator over `(row, col, band)`.
    pub fn from_fn(shape: Vec<usize>, mut f: impl FnMut(usize, usize, usize) -> T) -> Result<Self> {
        check_shape(&shape)?;
        let (h, w, b) = extent(&shape);
        let mut data = Vec::with_capacity(h * w * b);
        for r in 0..h {
            for c in 0..w {
                for k in 0..b {
                    data.push(f(r, c, k));
                }
            }
        }
        Image::new(shape, data)
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn ndim(&self) -> usize {
        self.shape.len()
    }

    pub fn height(&self) -> usize {
        self.shape[0]
    }

    pub fn width(&self) -> usize {
        self.shape[1]
    }

    /// Number of spectral bands; 1 for a 2D image.
    pub fn bands(&self) -> usize {
        self.shape.get(2).copied().unwrap_or(1)
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn data(&self) -> &[T] {
        &self.data
    }

    pub fn into_data(self) -> Vec<T> {
        self.data
    }

    pub fn index(&self, row: usize, col: usize, band: usize) -> usize {
        (row * self.width() + col) * self.bands() + band
    }

    pub fn get(&self, row: usize, col: usize, band: usize) -> T {
        self.data[self.index(row, col, band)]
    }

    pub fn to_intensity(&self) -> IntensityImage {
        Image {
            shape: self.shape.clone(),
            data: self.data.iter().map(|v| v.to_f64()).collect(),
        }
    }

    pub fn max_value(&self) -> f64 {
        self.data.iter().map(|v| v.to_f64()).fold(0.0, f64::max)
    }

    pub fn sum(&self) -> f64 {
        self.data.iter().map(|v| v.to_f64()).sum()
    }
}

impl IntensityImage {
    /// Multiplies every element by a nonnegative factor.
    pub fn scaled(&self, factor: f64) -> Result<IntensityImage> {
        Image::new(self.shape.clone(), self.data.iter().map(|v| v * factor).collect())
    }

    /// Converts to counts if every element is a representable integer.
    pub fn to_counts(&self) -> Result<CountImage> {
        let data = self
            .data
            .iter()
            .enumerate()
            .map(|(i, &v)| {
                if v.fract() == 0.0 && v <= u32::MAX as f64 {
                    Ok(v as u32)
                } else {
                    Err(NlpcaError::invalid(format!(
                        "element {i} = {v} is not a nonnegative integer count"
                    )))
                }
            })
            .collect::<Result<Vec<u32>>>()?;
        Image::new(self.shape.clone(), data)
    }
}

/// `(height, width, bands)` of a validated shape.
pub(crate) fn extent(shape: &[usize]) -> (usize, usize, usize) {
    (shape[0], shape[1], shape.get(2).copied().unwrap_or(1))
}
