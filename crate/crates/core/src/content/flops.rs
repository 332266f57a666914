//! Floating-point operation estimate for the convolutional trunk.
//!
//! Each convolution contributes
//! `out_width · out_height · in_depth · out_depth · kernel_width · kernel_height`
//! (one multiply-accumulate counted as one operation, per group for grouped
//! convolutions). Pooling and activations are not counted.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Layer {
    Conv {
        in_channels: usize,
        out_channels: usize,
        kernel: (usize, usize),
        stride: (usize, usize),
        /// top, left, bottom, right
        pads: [usize; 4],
        groups: usize,
    },
    Pool {
        kernel: (usize, usize),
        stride: (usize, usize),
        pads: [usize; 4],
        ceil_mode: bool,
    },
}

impl Layer {
    pub fn conv3x3(in_channels: usize, out_channels: usize) -> Self {
        Layer::Conv {
            in_channels,
            out_channels,
            kernel: (3, 3),
            stride: (1, 1),
            pads: [1; 4],
            groups: 1,
        }
    }

    pub fn max_pool2() -> Self {
        Layer::Pool {
            kernel: (2, 2),
            stride: (2, 2),
            pads: [0; 4],
            ceil_mode: false,
        }
    }

    /// Output spatial size for an `h × w` input.
    pub fn output_size(&self, h: usize, w: usize) -> Result<(usize, usize)> {
        let (kernel, stride, pads, ceil) = match *self {
            Layer::Conv {
                kernel,
                stride,
                pads,
                ..
            } => (kernel, stride, pads, false),
            Layer::Pool {
                kernel,
                stride,
                pads,
                ceil_mode,
            } => (kernel, stride, pads, ceil_mode),
        };
        let dim = |len: usize, k: usize, s: usize, p0: usize, p1: usize| -> Result<usize> {
            let padded = len + p0 + p1;
            if s == 0 || padded < k {
                return Err(Error::InvalidInput(format!(
                    "layer {self:?} does not fit a {h}x{w} input"
                )));
            }
            let span = padded - k;
            Ok(if ceil { span.div_ceil(s) } else { span / s } + 1)
        };
        Ok((
            dim(h, kernel.0, stride.0, pads[0], pads[2])?,
            dim(w, kernel.1, stride.1, pads[1], pads[3])?,
        ))
    }
}

/// The convolutional trunk of the 16-layer VGG network up to its fifth pooling
/// layer.
pub fn vgg16_pool5() -> Vec<Layer> {
    let blocks: [(usize, usize, usize); 5] =
        [(3, 64, 2), (64, 128, 2), (128, 256, 3), (256, 512, 3), (512, 512, 3)];
    let mut layers = Vec::new();
    for (cin, cout, reps) in blocks {
        layers.push(Layer::conv3x3(cin, cout));
        for _ in 1..reps {
            layers.push(Layer::conv3x3(cout, cout));
        }
        layers.push(Layer::max_pool2());
    }
    layers
}

/// Sum of per-convolution operation counts for a square input of `side` pixels.
pub fn flops_for_layers(layers: &[Layer], side: usize) -> Result<u64> {
    if layers.is_empty() {
        return Err(Error::InvalidInput("no layers to count".into()));
    }
    let (mut h, mut w) = (side, side);
    let mut total: u64 = 0;
    for layer in layers {
        let (oh, ow) = layer.output_size(h, w)?;
        if let Layer::Conv {
            in_channels,
            out_channels,
            kernel,
            groups,
            ..
        } = *layer
        {
            let groups = groups.max(1);
            total += (oh * ow) as u64
                * (in_channels / groups) as u64
                * out_channels as u64
                * (kernel.0 * kernel.1) as u64;
        }
        h = oh;
        w = ow;
    }
    Ok(total)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_conv_product() {
        // 3x3 conv, 3 -> 64 channels, no padding: 6x6 input gives a 4x4 map
        let conv = Layer::Conv {
            in_channels: 3,
            out_channels: 64,
            kernel: (3, 3),
            stride: (1, 1),
            pads: [0; 4],
            groups: 1,
        };
        assert_eq!(flops_for_layers(&[conv], 6).unwrap(), 27_648);
    }

    #[test]
    fn doubling_side_quadruples() {
        let layers = vgg16_pool5();
        let a = flops_for_layers(&layers, 256).unwrap() as f64;
        let b = flops_for_layers(&layers, 512).unwrap() as f64;
        assert!((b / a - 4.0).abs() / 4.0 < 0.15);
    }

    #[test]
    fn vgg_trunk_shape() {
        let layers = vgg16_pool5();
        assert_eq!(layers.iter().filter(|l| matches!(l, Layer::Conv { .. })).count(), 13);
        let (mut h, mut w) = (64, 64);
        for l in &layers {
            (h, w) = l.output_size(h, w).unwrap();
        }
        assert_eq!((h, w), (2, 2));
        // the standard 224x224 count of roughly 15.3 G multiply-accumulates
        let at224 = flops_for_layers(&layers, 224).unwrap();
        assert_eq!(at224, 15_346_630_656);
    }

    #[test]
    fn too_small_input_is_an_error() {
        assert!(flops_for_layers(&vgg16_pool5(), 16).is_err());
        assert!(flops_for_layers(&[], 16).is_err());
    }
}
