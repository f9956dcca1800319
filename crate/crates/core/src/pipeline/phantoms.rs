//! Synthetic ground-truth images on the 0-255 scale.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{NlpcaError, Result};
use crate::imaging::IntensityImage;

pub const PHANTOM_SIZE: usize = 128;
pub const PHANTOM_MAX: f64 = 255.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Phantom {
    /// Parallel oblique bright ridges with flat shoulders on a dark background.
    Ridges,
    /// Horizontal stripes with a canton of small star-like blocks.
    Flag,
    /// Bright smooth curve on a dark background.
    Swoosh,
}

impl Phantom {
    pub const ALL: [Phantom; 3] = [Phantom::Ridges, Phantom::Flag, Phantom::Swoosh];

    pub fn name(self) -> &'static str {
        match self {
            Phantom::Ridges => "ridges",
            Phantom::Flag => "flag",
            Phantom::Swoosh => "swoosh",
        }
    }

    pub fn parse(name: &str) -> Option<Self> {
        Phantom::ALL.into_iter().find(|p| p.name() == name.to_ascii_lowercase())
    }
}

/// Square phantom of side `size` with maximum exactly [`PHANTOM_MAX`].
///
/// Coordinates are normalized by `size`, so every size shows the same scene.
pub fn phantom(kind: Phantom, size: usize) -> Result<IntensityImage> {
    if size < 8 {
        return Err(NlpcaError::invalid(format!("phantom size must be at least 8, got {size}")));
    }
    let s = size as f64;
    let image = match kind {
        Phantom::Ridges => IntensityImage::from_fn(vec![size, size], |r, c, _| {
            let (y, x) = ((r as f64 + 0.5) / s, (c as f64 + 0.5) / s);
            // Position across the ridges, in units of their spacing.
            let t = ((0.8 * x + 0.6 * y) * 4.0).fract();
            if (t - 0.5).abs() < 0.12 {
                255.0
            } else if (t - 0.5).abs() < 0.2 {
                110.0
            } else {
                25.0
            }
        }),
        Phantom::Flag => IntensityImage::from_fn(vec![size, size], |r, c, _| {
            let (y, x) = ((r as f64 + 0.5) / s, (c as f64 + 0.5) / s);
            if y < 0.5 && x < 0.45 {
                // 4 x 4 grid of plus-shaped stars.
                let (gy, gx) = ((y / 0.125).fract(), (x / 0.1125).fract());
                let arm = |a: f64| (a - 0.5).abs() < 0.12;
                let reach = |a: f64| (a - 0.5).abs() < 0.32;
                if (arm(gy) && reach(gx)) || (arm(gx) && reach(gy)) {
                    255.0
                } else {
                    35.0
                }
            } else if ((y * 7.0) as usize) % 2 == 0 {
                200.0
            } else {
                70.0
            }
        }),
        Phantom::Swoosh => IntensityImage::from_fn(vec![size, size], |r, c, _| {
            let (y, x) = ((r as f64 + 0.5) / s, (c as f64 + 0.5) / s);
            let centre = 0.5 + 0.25 * (PI * (2.0 * x - 0.3)).sin() * (1.0 - 0.5 * x);
            let d = (y - centre) / 0.07;
            20.0 + 235.0 * (-0.5 * d * d).exp()
        }),
    }?;
    let max = image.max_value();
    let shape = image.shape().to_vec();
    IntensityImage::new(shape, image.into_data().into_iter().map(|v| v / max * PHANTOM_MAX).collect())
}
