//! Multi-scale deep content features.
//!
//! The input image is resized to a square base, rescaled by each factor of a
//! [`ScaleSet`], passed through a [`Backend`] to its tapped 512-channel layer,
//! globally average pooled, and the per-scale vectors are pooled elementwise
//! ([`Aggregation`]) and L2-normalized. A foreground backend yields FF, a
//! background backend BF.

mod backend;
mod flops;
mod image;
#[cfg(feature = "onnx")]
pub mod onnx;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

pub use self::backend::{
    load_backend, validate_backend, Backend, BackendRole, FeatureMap, StubBackend, STUB_MODEL,
    TAPPED_CHANNELS, TAPPED_STRIDE,
};
pub use self::flops::{flops_for_layers, vgg16_pool5, Layer};
pub use self::image::{
    decode_image, preprocess_image, resize_bilinear, scale_image, scaled_side, Image,
};
use crate::error::{Error, Result};

pub const DEFAULT_BASE_SIDE: usize = 512;
pub const DEFAULT_SCALES: [f64; 6] = [0.6, 0.8, 1.0, 1.2, 1.4, 1.6];
pub const NORM_EPSILON: f64 = 1e-7;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScaleSet {
    pub factors: Vec<f64>,
    pub base_side: usize,
}

impl Default for ScaleSet {
    fn default() -> Self {
        ScaleSet {
            factors: DEFAULT_SCALES.to_vec(),
            base_side: DEFAULT_BASE_SIDE,
        }
    }
}

impl ScaleSet {
    pub fn new(factors: Vec<f64>, base_side: usize) -> Result<Self> {
        if factors.is_empty() {
            return Err(Error::InvalidInput("scale set is empty".into()));
        }
        if let Some(f) = factors.iter().find(|f| !(f.is_finite() && **f > 0.0)) {
            return Err(Error::InvalidInput(format!("scale factor must be positive, got {f}")));
        }
        if base_side == 0 {
            return Err(Error::InvalidInput("base side must be positive".into()));
        }
        Ok(ScaleSet {
            factors,
            base_side,
        })
    }

    /// Pixel sides of the rescaled images.
    pub fn sides(&self) -> Vec<usize> {
        self.factors
            .iter()
            .map(|&f| scaled_side(self.base_side, f).expect("factors validated"))
            .collect()
    }
}

/// Elementwise pooling across scales.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Aggregation {
    #[default]
    Max,
    Mean,
    Min,
}

impl Aggregation {
    pub const ALL: [Aggregation; 3] = [Aggregation::Max, Aggregation::Mean, Aggregation::Min];

    pub fn as_str(self) -> &'static str {
        match self {
            Aggregation::Max => "max",
            Aggregation::Mean => "mean",
            Aggregation::Min => "min",
        }
    }
}

impl fmt::Display for Aggregation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Aggregation {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "max" => Ok(Aggregation::Max),
            "mean" => Ok(Aggregation::Mean),
            "min" => Ok(Aggregation::Min),
            other => Err(Error::Config(format!("unknown aggregation `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ContentKind {
    /// Foreground features.
    FF,
    /// Background features.
    BF,
}

impl From<BackendRole> for ContentKind {
    fn from(role: BackendRole) -> Self {
        match role {
            BackendRole::Foreground => ContentKind::FF,
            BackendRole::Background => ContentKind::BF,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ContentFeature {
    pub image_id: String,
    pub kind: ContentKind,
    pub vec: Vec<f64>,
}

/// Global average pooling: per-channel mean over all spatial positions.
pub fn gap(map: &FeatureMap) -> Vec<f64> {
    let mut out = vec![0.0f64; map.channels];
    for cell in map.data.chunks_exact(map.channels) {
        for (o, &v) in out.iter_mut().zip(cell) {
            *o += v as f64;
        }
    }
    let n = (map.height * map.width) as f64;
    for o in &mut out {
        *o /= n;
    }
    out
}

/// Elementwise pooling of equal-length vectors.
pub fn aggregate(vectors: &[Vec<f64>], agg: Aggregation) -> Result<Vec<f64>> {
    let first = vectors
        .first()
        .ok_or_else(|| Error::InvalidInput("nothing to aggregate".into()))?;
    if let Some(v) = vectors.iter().find(|v| v.len() != first.len()) {
        return Err(Error::DimensionMismatch {
            expected: first.len(),
            actual: v.len(),
        });
    }
    let mut out = first.clone();
    for v in &vectors[1..] {
        for (o, &x) in out.iter_mut().zip(v) {
            *o = match agg {
                Aggregation::Max => o.max(x),
                Aggregation::Min => o.min(x),
                Aggregation::Mean => *o + x,
            };
        }
    }
    if agg == Aggregation::Mean {
        let n = vectors.len() as f64;
        for o in &mut out {
            *o /= n;
        }
    }
    Ok(out)
}

/// `v / (‖v‖₂ + eps)`.
pub fn normalize_feature(v: &[f64], eps: f64) -> Vec<f64> {
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    v.iter().map(|x| x / (norm + eps)).collect()
}

/// Per-scale GAP vectors of one image, in scale-list order.
pub fn per_scale_features(image: &Image, backend: &dyn Backend, scales: &ScaleSet) -> Result<Vec<Vec<f64>>> {
    let base = preprocess_image(image, scales.base_side)?;
    scales
        .factors
        .iter()
        .map(|&factor| {
            let scaled = scale_image(&base, factor)?;
            let map = backend.infer(&scaled).map_err(|e| match e {
                Error::Backend(m) => Error::Backend(format!("scale {factor}: {m}")),
                other => Error::Backend(format!("scale {factor}: {other}")),
            })?;
            if map.channels != TAPPED_CHANNELS {
                return Err(Error::Backend(format!(
                    "scale {factor}: tapped map has {} channels, expected {TAPPED_CHANNELS}",
                    map.channels
                )));
            }
            Ok(gap(&map))
        })
        .collect()
}

/// The aggregated multi-scale vector before normalization.
pub fn multiscale_aggregate(
    image: &Image,
    backend: &dyn Backend,
    scales: &ScaleSet,
    agg: Aggregation,
) -> Result<Vec<f64>> {
    aggregate(&per_scale_features(image, backend, scales)?, agg)
}

pub fn multiscale_features(
    image_id: &str,
    image: &Image,
    backend: &dyn Backend,
    scales: &ScaleSet,
    agg: Aggregation,
) -> Result<ContentFeature> {
    let pooled = multiscale_aggregate(image, backend, scales, agg)?;
    Ok(ContentFeature {
        image_id: image_id.to_string(),
        kind: backend.role().into(),
        vec: normalize_feature(&pooled, NORM_EPSILON),
    })
}

/// Convolution cost of one forward pass at a square input of `input_side`.
pub fn estimate_flops(backend: &dyn Backend, input_side: usize) -> Result<u64> {
    flops_for_layers(&backend.layers()?, input_side)
}
