//! Image containers, Poisson noise simulation, quality metrics and file I/O.

mod image;
pub mod io;
mod metrics;
mod noise;

pub use image::{CountImage, Image, IntensityImage, Pixel};
pub(crate) use image::extent;
pub use metrics::{mae, psnr, rescale_from_peak, PSNR_PEAK};
pub use noise::{scale_to_peak, simulate_poisson};
