use std::path::Path;

use crate::error::{Error, Result};

/// An RGB image with `f32` samples in [0, 255], stored row-major HWC.
#[derive(Debug, Clone, PartialEq)]
pub struct Image {
    width: usize,
    height: usize,
    data: Vec<f32>,
}

impl Image {
    pub fn new(width: usize, height: usize, data: Vec<f32>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::Image(format!("empty image {width}x{height}")));
        }
        if data.len() != width * height * 3 {
            return Err(Error::DimensionMismatch {
                expected: width * height * 3,
                actual: data.len(),
            });
        }
        Ok(Image {
            width,
            height,
            data,
        })
    }

    pub fn filled(width: usize, height: usize, rgb: [f32; 3]) -> Self {
        let data = (0..width * height).flat_map(|_| rgb).collect();
        Image {
            width,
            height,
            data,
        }
    }

    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> [f32; 3]) -> Self {
        let mut data = Vec::with_capacity(width * height * 3);
        for y in 0..height {
            for x in 0..width {
                data.extend_from_slice(&f(x, y));
            }
        }
        Image {
            width,
            height,
            data,
        }
    }

    pub fn from_rgb8(img: &image::RgbImage) -> Self {
        Image {
            width: img.width() as usize,
            height: img.height() as usize,
            data: img.as_raw().iter().map(|&b| b as f32).collect(),
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn pixel(&self, x: usize, y: usize) -> [f32; 3] {
        let i = (y * self.width + x) * 3;
        [self.data[i], self.data[i + 1], self.data[i + 2]]
    }
}

pub fn decode_image(path: impl AsRef<Path>) -> Result<Image> {
    let path = path.as_ref();
    let reader = image::ImageReader::open(path)
        .map_err(|e| Error::io(path, e))?
        .with_guessed_format()
        .map_err(|e| Error::io(path, e))?;
    let img = reader
        .decode()
        .map_err(|e| Error::Image(format!("{}: {e}", path.display())))?;
    Ok(Image::from_rgb8(&img.to_rgb8()))
}

/// Bilinear resampling with half-pixel centers and edge clamping. A resize to
/// the current size returns an identical copy.
pub fn resize_bilinear(src: &Image, width: usize, height: usize) -> Result<Image> {
    if width == 0 || height == 0 {
        return Err(Error::Image(format!("cannot resize to {width}x{height}")));
    }
    if width == src.width && height == src.height {
        return Ok(src.clone());
    }
    let xs = axis_weights(src.width, width);
    let ys = axis_weights(src.height, height);
    let mut data = Vec::with_capacity(width * height * 3);
    for &(y0, y1, fy) in &ys {
        let row0 = &src.data[y0 * src.width * 3..(y0 + 1) * src.width * 3];
        let row1 = &src.data[y1 * src.width * 3..(y1 + 1) * src.width * 3];
        for &(x0, x1, fx) in &xs {
            for c in 0..3 {
                let top = row0[x0 * 3 + c] * (1.0 - fx) + row0[x1 * 3 + c] * fx;
                let bottom = row1[x0 * 3 + c] * (1.0 - fx) + row1[x1 * 3 + c] * fx;
                data.push(top * (1.0 - fy) + bottom * fy);
            }
        }
    }
    Ok(Image {
        width,
        height,
        data,
    })
}

fn axis_weights(src: usize, dst: usize) -> Vec<(usize, usize, f32)> {
    let ratio = src as f64 / dst as f64;
    (0..dst)
        .map(|i| {
            let s = ((i as f64 + 0.5) * ratio - 0.5).clamp(0.0, (src - 1) as f64);
            let i0 = s.floor() as usize;
            let i1 = (i0 + 1).min(src - 1);
            (i0, i1, (s - i0 as f64) as f32)
        })
        .collect()
}

/// Resizes any input to the square working resolution.
pub fn preprocess_image(raw: &Image, base_side: usize) -> Result<Image> {
    resize_bilinear(raw, base_side, base_side)
}

/// Side length of a square image of side `base` rescaled by `factor`,
/// truncated to whole pixels: 512 → 307, 409, 512, 614, 716, 819 for the
/// default factors.
pub fn scaled_side(base: usize, factor: f64) -> Result<usize> {
    if !(factor.is_finite() && factor > 0.0) {
        return Err(Error::InvalidInput(format!("scale factor must be positive, got {factor}")));
    }
    // the nudge keeps exact products such as 512 * 1.0 from landing just below
    let side = (base as f64 * factor + 1e-9).floor() as usize;
    Ok(side.max(1))
}

pub fn scale_image(base: &Image, factor: f64) -> Result<Image> {
    let w = scaled_side(base.width, factor)?;
    let h = scaled_side(base.height, factor)?;
    resize_bilinear(base, w, h)
}
