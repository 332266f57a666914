use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::flops::Layer;
use super::image::Image;
use crate::error::{Error, Result};

/// Depth of the tapped layer every backend must produce.
pub const TAPPED_CHANNELS: usize = 512;
/// Total downsampling from input to the tapped layer.
pub const TAPPED_STRIDE: usize = 32;
const PROBE_SIDE: usize = 64;

/// Which pre-trained network a backend stands for.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BackendRole {
    /// Object-trained network; yields foreground features.
    Foreground,
    /// Scene-trained network; yields background features.
    Background,
}

impl BackendRole {
    pub fn as_str(self) -> &'static str {
        match self {
            BackendRole::Foreground => "foreground",
            BackendRole::Background => "background",
        }
    }
}

impl fmt::Display for BackendRole {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for BackendRole {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "foreground" => Ok(BackendRole::Foreground),
            "background" => Ok(BackendRole::Background),
            other => Err(Error::Config(format!("unknown backend role `{other}`"))),
        }
    }
}

/// A spatial activation map, row-major HWC.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMap {
    pub height: usize,
    pub width: usize,
    pub channels: usize,
    pub data: Vec<f32>,
}

impl FeatureMap {
    pub fn new(height: usize, width: usize, channels: usize, data: Vec<f32>) -> Result<Self> {
        if data.len() != height * width * channels {
            return Err(Error::DimensionMismatch {
                expected: height * width * channels,
                actual: data.len(),
            });
        }
        Ok(FeatureMap {
            height,
            width,
            channels,
            data,
        })
    }

    pub fn filled(height: usize, width: usize, channels: usize, value: f32) -> Self {
        FeatureMap {
            height,
            width,
            channels,
            data: vec![value; height * width * channels],
        }
    }

    pub fn at(&self, y: usize, x: usize, c: usize) -> f32 {
        self.data[(y * self.width + x) * self.channels + c]
    }
}

/// Image in, tapped activation map out.
pub trait Backend: Send + Sync {
    fn role(&self) -> BackendRole;

    fn infer(&self, image: &Image) -> Result<FeatureMap>;

    /// Convolution/pooling layers up to the tapped tensor, for cost estimates.
    fn layers(&self) -> Result<Vec<Layer>>;

    /// Stable identifier of the weights, recorded in feature-store headers.
    fn fingerprint(&self) -> String;
}

/// Checks the tapped-layer contract: a 64×64 zero image must give a 2×2×512 map.
pub fn validate_backend(backend: &dyn Backend) -> Result<()> {
    let probe = Image::filled(PROBE_SIDE, PROBE_SIDE, [0.0; 3]);
    let map = backend.infer(&probe)?;
    let side = PROBE_SIDE / TAPPED_STRIDE;
    if (map.height, map.width, map.channels) != (side, side, TAPPED_CHANNELS) {
        return Err(Error::Backend(format!(
            "probe produced a {}x{}x{} map, expected {side}x{side}x{TAPPED_CHANNELS}",
            map.height, map.width, map.channels
        )));
    }
    Ok(())
}

/// Model reference understood by [`load_backend`]: the literal `stub` selects
/// [`StubBackend`], anything else is an interchange-format model file.
pub const STUB_MODEL: &str = "stub";

/// Loads and validates a backend for `role`.
pub fn load_backend(model_path: impl AsRef<Path>, role: BackendRole) -> Result<Box<dyn Backend>> {
    let model_path = model_path.as_ref();
    let backend: Box<dyn Backend> = if model_path.as_os_str() == STUB_MODEL {
        Box::new(StubBackend::new(role))
    } else {
        open_model(model_path, role)?
    };
    if backend.role() != role {
        return Err(Error::Backend(format!(
            "{} is a {} model, expected {role}",
            model_path.display(),
            backend.role()
        )));
    }
    validate_backend(backend.as_ref())?;
    Ok(backend)
}

#[cfg(feature = "onnx")]
fn open_model(path: &Path, _role: BackendRole) -> Result<Box<dyn Backend>> {
    Ok(Box::new(super::onnx::OnnxBackend::load(path)?))
}

#[cfg(not(feature = "onnx"))]
fn open_model(path: &Path, _role: BackendRole) -> Result<Box<dyn Backend>> {
    Err(Error::Backend(format!(
        "{}: built without interchange-model support",
        path.display()
    )))
}

/// Deterministic stand-in for a pre-trained network.
///
/// Each output cell covers a 32×32 block of the input (partial blocks at the
/// right and bottom edges included) and channel `c` is the block average of
/// one colour channel, weighted by a smooth per-channel gain. The two roles
/// read the colour channels in different orders.
#[derive(Debug, Clone)]
pub struct StubBackend {
    role: BackendRole,
    gains: Vec<f32>,
    sources: Vec<usize>,
}

impl StubBackend {
    pub fn new(role: BackendRole) -> Self {
        let offset = match role {
            BackendRole::Foreground => 0,
            BackendRole::Background => 1,
        };
        let gains = (0..TAPPED_CHANNELS)
            .map(|c| 1.0 + (c / 3) as f32 / TAPPED_CHANNELS as f32)
            .collect();
        let sources = (0..TAPPED_CHANNELS).map(|c| (c + offset) % 3).collect();
        StubBackend {
            role,
            gains,
            sources,
        }
    }
}

impl Backend for StubBackend {
    fn role(&self) -> BackendRole {
        self.role
    }

    fn infer(&self, image: &Image) -> Result<FeatureMap> {
        let oh = image.height().div_ceil(TAPPED_STRIDE);
        let ow = image.width().div_ceil(TAPPED_STRIDE);
        let mut data = Vec::with_capacity(oh * ow * TAPPED_CHANNELS);
        for by in 0..oh {
            for bx in 0..ow {
                let (y0, y1) = (by * TAPPED_STRIDE, ((by + 1) * TAPPED_STRIDE).min(image.height()));
                let (x0, x1) = (bx * TAPPED_STRIDE, ((bx + 1) * TAPPED_STRIDE).min(image.width()));
                let mut sum = [0.0f64; 3];
                for y in y0..y1 {
                    for x in x0..x1 {
                        let p = image.pixel(x, y);
                        for c in 0..3 {
                            sum[c] += p[c] as f64;
                        }
                    }
                }
                let n = ((y1 - y0) * (x1 - x0)) as f64;
                let mean = sum.map(|s| (s / n) as f32);
                data.extend(
                    self.sources
                        .iter()
                        .zip(&self.gains)
                        .map(|(&src, &g)| mean[src] * g),
                );
            }
        }
        FeatureMap::new(oh, ow, TAPPED_CHANNELS, data)
    }

    fn layers(&self) -> Result<Vec<Layer>> {
        Err(Error::Backend("stub backend has no layer graph".into()))
    }

    fn fingerprint(&self) -> String {
        format!("stub-{}-v1", self.role)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    struct Shallow;

    impl Backend for Shallow {
        fn role(&self) -> BackendRole {
            BackendRole::Background
        }
        fn infer(&self, image: &Image) -> Result<FeatureMap> {
            Ok(FeatureMap::filled(
                image.height() / 32,
                image.width() / 32,
                256,
                0.0,
            ))
        }
        fn layers(&self) -> Result<Vec<Layer>> {
            Ok(vec![])
        }
        fn fingerprint(&self) -> String {
            "shallow".into()
        }
    }

    #[test]
    fn stub_loads_under_contract() {
        let b = load_backend(STUB_MODEL, BackendRole::Background).unwrap();
        assert_eq!(b.role(), BackendRole::Background);
        assert!(b.layers().is_err());
    }

    #[test]
    fn wrong_channel_count_fails_validation() {
        assert!(matches!(validate_backend(&Shallow), Err(Error::Backend(_))));
    }

    #[test]
    fn stub_box_averages() {
        let b = StubBackend::new(BackendRole::Foreground);
        let img = Image::from_fn(40, 32, |x, _| if x < 32 { [64.0, 0.0, 0.0] } else { [0.0, 128.0, 0.0] });
        let map = b.infer(&img).unwrap();
        assert_eq!((map.height, map.width, map.channels), (1, 2, 512));
        assert_eq!(map.at(0, 0, 0), 64.0);
        assert_eq!(map.at(0, 1, 1), 128.0);
        assert_eq!(map.at(0, 1, 0), 0.0);
    }

    #[test]
    fn roles_differ() {
        let img = Image::filled(32, 32, [10.0, 20.0, 30.0]);
        let f = StubBackend::new(BackendRole::Foreground).infer(&img).unwrap();
        let g = StubBackend::new(BackendRole::Background).infer(&img).unwrap();
        assert_ne!(f.data, g.data);
    }

    #[test]
    fn missing_model_file_is_an_error() {
        assert!(load_backend("/nonexistent/model.onnx", BackendRole::Foreground).is_err());
    }
}
