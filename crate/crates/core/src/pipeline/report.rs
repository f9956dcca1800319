use serde::{Deserialize, Serialize};

use crate::pipeline::{Method, PipelineConfig};

/// JSON run report of one denoising call.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub method: Method,
    pub config: PipelineConfig,
    pub image_shape: Vec<usize>,
    pub patch_count: usize,
    pub patch_len: usize,
    pub kmeans: KmeansReport,
    /// One entry per non-empty cluster, in cluster order.
    pub clusters: Vec<ClusterReport>,
    pub timings: Timings,
    /// Present when a ground truth was supplied.
    pub metrics: Option<Metrics>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KmeansReport {
    pub clusters: usize,
    pub iterations: usize,
    pub converged: bool,
    pub objective: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterReport {
    pub cluster: usize,
    pub size: usize,
    pub final_loss: Option<f64>,
    pub iterations: usize,
    pub converged: bool,
    pub lambda: f64,
    pub spiral_updates: usize,
    pub spiral_stalls: usize,
    pub spiral_increases: usize,
    pub warnings: Vec<String>,
}

/// Wall-clock milliseconds per phase.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Timings {
    pub clustering_ms: f64,
    pub factorization_ms: f64,
    pub reprojection_ms: f64,
    pub total_ms: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    /// dB; `inf` for an exact reconstruction.
    #[serde(with = "lossless_f64")]
    pub psnr: f64,
    pub mae: f64,
}

/// JSON has no infinity, so non-finite values travel as strings.
mod lossless_f64 {
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    #[derive(Serialize, Deserialize)]
    #[serde(untagged)]
    enum Repr {
        Number(f64),
        Text(String),
    }

    pub fn serialize<S: Serializer>(v: &f64, s: S) -> Result<S::Ok, S::Error> {
        if v.is_finite() {
            Repr::Number(*v).serialize(s)
        } else {
            Repr::Text(format_special(*v)).serialize(s)
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        match Repr::deserialize(d)? {
            Repr::Number(v) => Ok(v),
            Repr::Text(t) => match t.as_str() {
                "inf" => Ok(f64::INFINITY),
                "-inf" => Ok(f64::NEG_INFINITY),
                "nan" => Ok(f64::NAN),
                other => Err(serde::de::Error::custom(format!("invalid number {other:?}"))),
            },
        }
    }

    fn format_special(v: f64) -> String {
        if v.is_nan() {
            "nan".into()
        } else if v > 0.0 {
            "inf".into()
        } else {
            "-inf".into()
        }
    }
}
