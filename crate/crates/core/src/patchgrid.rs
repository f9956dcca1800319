//! Sliding-window patch extraction, uniform-average reprojection, binning and
//! interpolation.
//!
//! Patches are anchored wherever they fit entirely inside the image (no
//! padding). Anchors are enumerated lexicographically with the band anchor
//! slowest, then the row anchor, then the column anchor. Inside a patch,
//! pixels are vectorized row-major over (row, col, band), like images.

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::error::{NlpcaError, Result};
use crate::imaging::{extent, CountImage, Image, IntensityImage, Pixel};

/// Placement of patches over an image.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PatchGeometry {
    image_shape: Vec<usize>,
    patch_shape: Vec<usize>,
    step: Vec<usize>,
}

impl PatchGeometry {
    pub fn new(image_shape: &[usize], patch_shape: &[usize], step: &[usize]) -> Result<Self> {
        let nd = image_shape.len();
        if !(nd == 2 || nd == 3) || patch_shape.len() != nd || step.len() != nd {
            return Err(NlpcaError::shape(format!(
                "image {image_shape:?}, patch {patch_shape:?} and step {step:?} must share 2 or 3 dimensions"
            )));
        }
        for axis in 0..nd {
            if patch_shape[axis] == 0 || step[axis] == 0 {
                return Err(NlpcaError::invalid("patch and step sizes must be positive"));
            }
            if patch_shape[axis] > image_shape[axis] {
                return Err(NlpcaError::shape(format!(
                    "patch {patch_shape:?} larger than image {image_shape:?}"
                )));
            }
        }
        Ok(PatchGeometry {
            image_shape: image_shape.to_vec(),
            patch_shape: patch_shape.to_vec(),
            step: step.to_vec(),
        })
    }

    /// Fully overlapping patches (step 1 on every axis).
    pub fn dense(image_shape: &[usize], patch_shape: &[usize]) -> Result<Self> {
        Self::new(image_shape, patch_shape, &vec![1; image_shape.len()])
    }

    pub fn image_shape(&self) -> &[usize] {
        &self.image_shape
    }

    pub fn patch_shape(&self) -> &[usize] {
        &self.patch_shape
    }

    pub fn step(&self) -> &[usize] {
        &self.step
    }

    fn axis3(v: &[usize], fill: usize) -> [usize; 3] {
        [v[0], v[1], v.get(2).copied().unwrap_or(fill)]
    }

    /// Anchor positions along axis 0 (rows), 1 (cols) or 2 (bands).
    pub fn anchors(&self, axis: usize) -> Vec<usize> {
        let n = Self::axis3(&self.image_shape, 1)[axis];
        let p = Self::axis3(&self.patch_shape, 1)[axis];
        let s = Self::axis3(&self.step, 1)[axis];
        (0..=(n - p)).step_by(s).collect()
    }

    /// Number of patches `M`.
    pub fn patch_count(&self) -> usize {
        (0..3).map(|a| self.anchors(a).len()).product()
    }

    /// Number of pixels per patch `N`.
    pub fn patch_len(&self) -> usize {
        self.patch_shape.iter().product()
    }

    /// Number of distinct spatial (row, col) anchors.
    pub fn spatial_anchor_count(&self) -> usize {
        self.anchors(0).len() * self.anchors(1).len()
    }

    /// `(row, col, band)` anchor of patch `i`.
    pub fn anchor(&self, i: usize) -> (usize, usize, usize) {
        let rows = self.anchors(0);
        let cols = self.anchors(1);
        let bands = self.anchors(2);
        let spatial = rows.len() * cols.len();
        let (b, rest) = (i / spatial, i % spatial);
        (rows[rest / cols.len()], cols[rest % cols.len()], bands[b])
    }

    /// Flat image offsets of the pixels of a patch anchored at the origin, in
    /// vectorization order.
    fn patch_offsets(&self) -> Vec<usize> {
        let (_, w, b) = extent(&self.image_shape);
        let [ph, pw, pb] = Self::axis3(&self.patch_shape, 1);
        let mut out = Vec::with_capacity(ph * pw * pb);
        for r in 0..ph {
            for c in 0..pw {
                for k in 0..pb {
                    out.push((r * w + c) * b + k);
                }
            }
        }
        out
    }

    /// Flat image offset of every patch anchor, in anchor order.
    fn anchor_offsets(&self) -> Vec<usize> {
        let (_, w, b) = extent(&self.image_shape);
        let rows = self.anchors(0);
        let cols = self.anchors(1);
        let mut out = Vec::with_capacity(self.patch_count());
        for &k in &self.anchors(2) {
            for &r in &rows {
                for &c in &cols {
                    out.push((r * w + c) * b + k);
                }
            }
        }
        out
    }
}

/// Vectorized patches, one per row.
#[derive(Debug, Clone, PartialEq)]
pub struct PatchSet {
    pub geometry: PatchGeometry,
    pub matrix: Array2<f64>,
}

impl PatchSet {
    pub fn new(geometry: PatchGeometry, matrix: Array2<f64>) -> Result<Self> {
        if matrix.dim() != (geometry.patch_count(), geometry.patch_len()) {
            return Err(NlpcaError::shape(format!(
                "patch matrix {:?} does not match geometry ({}, {})",
                matrix.dim(),
                geometry.patch_count(),
                geometry.patch_len()
            )));
        }
        Ok(PatchSet { geometry, matrix })
    }
}

/// Stacks every patch of `image` as a row of an `M x N` matrix.
pub fn patchize<T: Pixel>(image: &Image<T>, geometry: &PatchGeometry) -> Result<PatchSet> {
    if image.shape() != geometry.image_shape() {
        return Err(NlpcaError::shape(format!(
            "image {:?} does not match geometry {:?}",
            image.shape(),
            geometry.image_shape()
        )));
    }
    let offsets = geometry.patch_offsets();
    let anchors = geometry.anchor_offsets();
    let data = image.data();
    let mut matrix = Array2::zeros((anchors.len(), offsets.len()));
    for (mut row, &base) in matrix.outer_iter_mut().zip(&anchors) {
        for (dst, &off) in row.iter_mut().zip(&offsets) {
            *dst = data[base + off].to_f64();
        }
    }
    PatchSet::new(geometry.clone(), matrix)
}

/// Per-pixel average of all patch values covering it, as raw values.
///
/// Pixels no patch covers (only possible with step > 1) take the value of the
/// nearest covered pixel, where nearest is taken independently per axis.
pub fn reproject_values(patches: &PatchSet) -> Result<Vec<f64>> {
    let geometry = &patches.geometry;
    PatchSet::new(geometry.clone(), patches.matrix.clone())?;
    let (h, w, b) = extent(geometry.image_shape());
    let offsets = geometry.patch_offsets();
    let anchors = geometry.anchor_offsets();
    // Running means, so pixels whose covering values agree are reproduced exactly.
    let mut out = vec![0.0; h * w * b];
    let mut hits = vec![0u32; h * w * b];
    for (row, &base) in patches.matrix.outer_iter().zip(&anchors) {
        for (&v, &off) in row.iter().zip(&offsets) {
            let i = base + off;
            hits[i] += 1;
            out[i] += (v - out[i]) / hits[i] as f64;
        }
    }

    if hits.iter().any(|&n| n == 0) {
        // Coverage is a product of per-axis coverage sets.
        let nearest: Vec<Vec<usize>> = (0..3)
            .map(|axis| {
                let len = [h, w, b][axis];
                let p = PatchGeometry::axis3(geometry.patch_shape(), 1)[axis];
                let mut covered = vec![false; len];
                for a in geometry.anchors(axis) {
                    covered[a..a + p].iter_mut().for_each(|c| *c = true);
                }
                let cov: Vec<usize> = (0..len).filter(|&i| covered[i]).collect();
                (0..len)
                    .map(|i| *cov.iter().min_by_key(|&&j| (j as isize - i as isize).unsigned_abs()).unwrap())
                    .collect()
            })
            .collect();
        for r in 0..h {
            for c in 0..w {
                for k in 0..b {
                    let i = (r * w + c) * b + k;
                    if hits[i] == 0 {
                        let j = (nearest[0][r] * w + nearest[1][c]) * b + nearest[2][k];
                        out[i] = out[j];
                    }
                }
            }
        }
    }
    Ok(out)
}

/// Uniform-average reprojection of patch estimates onto the image grid.
pub fn reproject(patches: &PatchSet) -> Result<IntensityImage> {
    let values = reproject_values(patches)?;
    IntensityImage::new(patches.geometry.image_shape().to_vec(), values)
}

/// Shape of the binned image: `ceil(shape / bin)` per axis.
pub fn binned_shape(shape: &[usize], bin_shape: &[usize]) -> Result<Vec<usize>> {
    if bin_shape.len() != shape.len() {
        return Err(NlpcaError::shape(format!("bin {bin_shape:?} vs image {shape:?}")));
    }
    if bin_shape.iter().any(|&s| s == 0) {
        return Err(NlpcaError::invalid("bin dimensions must be positive"));
    }
    Ok(shape.iter().zip(bin_shape).map(|(&n, &s)| n.div_ceil(s)).collect())
}

/// Sums counts over `bin_shape` blocks.
///
/// When a bin dimension does not divide the image, the image is padded with
/// zeros at the far edge; [`binned_shape`] gives the resulting shape and the
/// padded extent is `binned_shape * bin_shape`.
pub fn bin(counts: &CountImage, bin_shape: &[usize]) -> Result<CountImage> {
    let out_shape = binned_shape(counts.shape(), bin_shape)?;
    let (oh, ow, ob) = extent(&out_shape);
    let (sh, sw, sb) = (bin_shape[0], bin_shape[1], bin_shape.get(2).copied().unwrap_or(1));
    let mut data = vec![0u32; oh * ow * ob];
    for r in 0..counts.height() {
        for c in 0..counts.width() {
            for k in 0..counts.bands() {
                let dst = ((r / sh) * ow + c / sw) * ob + k / sb;
                data[dst] = data[dst]
                    .checked_add(counts.get(r, c, k))
                    .ok_or_else(|| NlpcaError::numeric("bin", "binned count overflows u32"))?;
            }
        }
    }
    Image::new(out_shape, data)
}

/// Per-axis interpolation taps for a pixel-center aligned resize.
fn taps(src: usize, dst: usize) -> Vec<(usize, usize, f64)> {
    (0..dst)
        .map(|t| {
            let s = ((t as f64 + 0.5) * src as f64 / dst as f64 - 0.5).clamp(0.0, (src - 1) as f64);
            let i0 = s.floor() as usize;
            let i1 = (i0 + 1).min(src - 1);
            (i0, i1, s - i0 as f64)
        })
        .collect()
}

/// Multilinear resize with pixel-center alignment and edge clamping; every
/// output value is multiplied by `intensity_scale`.
///
/// Axes whose size is unchanged are copied through untouched, so a spectral
/// axis of equal length is never mixed.
pub fn upsample_bilinear(image: &IntensityImage, target_shape: &[usize], intensity_scale: f64) -> Result<IntensityImage> {
    if target_shape.len() != image.ndim() {
        return Err(NlpcaError::shape(format!("target {target_shape:?} vs image {:?}", image.shape())));
    }
    if target_shape.iter().zip(image.shape()).any(|(t, s)| t < s) {
        return Err(NlpcaError::shape(format!(
            "target {target_shape:?} smaller than source {:?}",
            image.shape()
        )));
    }
    let (h, w, b) = (image.height(), image.width(), image.bands());
    let (th, tw, tb) = extent(target_shape);
    let (tr, tc, tk) = (taps(h, th), taps(w, tw), taps(b, tb));
    let src = image.data();
    let at = |r: usize, c: usize, k: usize| src[(r * w + c) * b + k];
    let mut data = Vec::with_capacity(th * tw * tb);
    for &(r0, r1, wr) in &tr {
        for &(c0, c1, wc) in &tc {
            for &(k0, k1, wk) in &tk {
                let lerp_k = |r, c| at(r, c, k0) * (1.0 - wk) + at(r, c, k1) * wk;
                let top = lerp_k(r0, c0) * (1.0 - wc) + lerp_k(r0, c1) * wc;
                let bottom = lerp_k(r1, c0) * (1.0 - wc) + lerp_k(r1, c1) * wc;
                data.push((top * (1.0 - wr) + bottom * wr) * intensity_scale);
            }
        }
    }
    IntensityImage::new(target_shape.to_vec(), data)
}

/// Keeps the leading `shape` corner of an image.
pub fn crop(image: &IntensityImage, shape: &[usize]) -> Result<IntensityImage> {
    if shape.len() != image.ndim() || shape.iter().zip(image.shape()).any(|(a, b)| a > b) {
        return Err(NlpcaError::shape(format!("cannot crop {:?} to {shape:?}", image.shape())));
    }
    IntensityImage::from_fn(shape.to_vec(), |r, c, k| image.get(r, c, k))
}
