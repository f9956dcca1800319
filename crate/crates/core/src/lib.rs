//! Poisson non-local PCA denoising for photon-limited images.
//!
//! The pipeline cuts a count image into overlapping patches, groups similar
//! patches with Bregman k-means, fits each group with a low-rank
//! exponential-family factorization (optionally with an l1 penalty on the
//! coefficients), and averages the fitted patches back onto the pixel grid.
//! An Anscombe-transform + Gaussian PCA baseline and a binned variant are
//! provided alongside.

pub mod anscombe;
pub mod clustering;
mod error;
pub mod factorization;
pub mod imaging;
pub mod patchgrid;
pub mod pipeline;
pub mod rng;

pub use error::{NlpcaError, Result};
pub use imaging::{CountImage, IntensityImage};
pub use rng::Rng;
