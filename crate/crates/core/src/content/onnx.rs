//! Interchange-format (ONNX) backend running on the pure-Rust `tract` runtime.
//!
//! A model file `name.onnx` must be accompanied by a metadata sidecar
//! `name.json` describing the preprocessing the network expects and the name
//! of the tapped tensor.

use std::collections::HashMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use tract_onnx::pb;
use tract_onnx::prelude::*;

use super::backend::{Backend, BackendRole, FeatureMap};
use super::flops::Layer;
use super::image::Image;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ChannelOrder {
    #[default]
    Rgb,
    Bgr,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Layout {
    #[default]
    Nchw,
    Nhwc,
}

/// Sidecar record written next to every exported model.
///
/// Input pixels in [0, 255] are transformed per channel (in model channel
/// order) as `(pixel * scale - mean[c]) / std[c]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelMeta {
    pub role: BackendRole,
    pub tapped_output: String,
    #[serde(default)]
    pub channel_order: ChannelOrder,
    pub mean: [f32; 3],
    #[serde(default = "unit_std")]
    pub std: [f32; 3],
    #[serde(default = "unit_scale")]
    pub scale: f32,
    #[serde(default)]
    pub layout: Layout,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub source: Option<String>,
}

fn unit_std() -> [f32; 3] {
    [1.0; 3]
}

fn unit_scale() -> f32 {
    1.0
}

impl ModelMeta {
    pub fn sidecar_path(model_path: &Path) -> PathBuf {
        model_path.with_extension("json")
    }

    pub fn load(model_path: &Path) -> Result<Self> {
        let path = Self::sidecar_path(model_path);
        let text = fs::read_to_string(&path)
            .map_err(|e| Error::Backend(format!("metadata {}: {e}", path.display())))?;
        serde_json::from_str(&text)
            .map_err(|e| Error::Backend(format!("metadata {}: {e}", path.display())))
    }
}

fn backend_err(context: &str) -> impl Fn(TractError) -> Error + '_ {
    move |e| Error::Backend(format!("{context}: {e:#}"))
}

pub struct OnnxBackend {
    meta: ModelMeta,
    model: InferenceModel,
    layers: std::result::Result<Vec<Layer>, String>,
    fingerprint: String,
    plans: Mutex<HashMap<(usize, usize), Arc<TypedRunnableModel>>>,
}

impl std::fmt::Debug for OnnxBackend {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("OnnxBackend")
            .field("meta", &self.meta)
            .field("fingerprint", &self.fingerprint)
            .finish()
    }
}

impl OnnxBackend {
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let meta = ModelMeta::load(path)?;
        let bytes = fs::read(path)
            .map_err(|e| Error::Backend(format!("{}: {e}", path.display())))?;
        let ctx = path.display().to_string();
        let proto = tract_onnx::onnx()
            .proto_model_for_read(&mut bytes.as_slice())
            .map_err(backend_err(&ctx))?;
        let layers = layers_from_proto(&proto, &meta.tapped_output);
        let model = tract_onnx::onnx()
            .model_for_proto_model(&proto)
            .map_err(backend_err(&ctx))?;

        let mut hasher = Sha256::new();
        hasher.update(&bytes);
        hasher.update(serde_json::to_vec(&meta).expect("metadata serializes"));
        Ok(OnnxBackend {
            meta,
            model,
            layers,
            fingerprint: hex::encode(hasher.finalize()),
            plans: Mutex::new(HashMap::new()),
        })
    }

    pub fn meta(&self) -> &ModelMeta {
        &self.meta
    }

    fn plan(&self, height: usize, width: usize) -> Result<Arc<TypedRunnableModel>> {
        if let Some(p) = self.plans.lock().unwrap().get(&(height, width)) {
            return Ok(p.clone());
        }
        let shape = match self.meta.layout {
            Layout::Nchw => [1, 3, height, width],
            Layout::Nhwc => [1, height, width, 3],
        };
        let ctx = format!("building plan for {height}x{width}");
        let plan = self
            .model
            .clone()
            .with_input_fact(0, f32::fact(shape).into())
            .and_then(|m| m.with_outputs_by_name([self.meta.tapped_output.as_str()]))
            .and_then(|m| m.into_optimized())
            .and_then(|m| m.into_runnable())
            .map_err(backend_err(&ctx))?;
        self.plans
            .lock()
            .unwrap()
            .insert((height, width), plan.clone());
        Ok(plan)
    }

    fn input_tensor(&self, image: &Image) -> Result<Tensor> {
        let (h, w) = (image.height(), image.width());
        let m = &self.meta;
        let order = match m.channel_order {
            ChannelOrder::Rgb => [0usize, 1, 2],
            ChannelOrder::Bgr => [2, 1, 0],
        };
        let px = image.data();
        let value = |y: usize, x: usize, c: usize| {
            (px[(y * w + x) * 3 + order[c]] * m.scale - m.mean[c]) / m.std[c]
        };
        let mut data = Vec::with_capacity(h * w * 3);
        let shape = match m.layout {
            Layout::Nchw => {
                for c in 0..3 {
                    for y in 0..h {
                        for x in 0..w {
                            data.push(value(y, x, c));
                        }
                    }
                }
                [1, 3, h, w]
            }
            Layout::Nhwc => {
                for y in 0..h {
                    for x in 0..w {
                        for c in 0..3 {
                            data.push(value(y, x, c));
                        }
                    }
                }
                [1, h, w, 3]
            }
        };
        Tensor::from_shape(&shape, &data).map_err(backend_err("input tensor"))
    }
}

impl Backend for OnnxBackend {
    fn role(&self) -> BackendRole {
        self.meta.role
    }

    fn infer(&self, image: &Image) -> Result<FeatureMap> {
        let plan = self.plan(image.height(), image.width())?;
        let input = self.input_tensor(image)?;
        let outputs = plan
            .run(tvec!(input.into()))
            .map_err(backend_err("inference"))?;
        let view = outputs[0]
            .to_plain_array_view::<f32>()
            .map_err(backend_err("tapped output"))?;
        let shape = view.shape().to_vec();
        if shape.len() != 4 || shape[0] != 1 {
            return Err(Error::Backend(format!("tapped output has shape {shape:?}")));
        }
        let (oh, ow, oc) = match self.meta.layout {
            Layout::Nchw => (shape[2], shape[3], shape[1]),
            Layout::Nhwc => (shape[1], shape[2], shape[3]),
        };
        let mut data = Vec::with_capacity(oh * ow * oc);
        for y in 0..oh {
            for x in 0..ow {
                for c in 0..oc {
                    data.push(match self.meta.layout {
                        Layout::Nchw => view[[0, c, y, x]],
                        Layout::Nhwc => view[[0, y, x, c]],
                    });
                }
            }
        }
        FeatureMap::new(oh, ow, oc, data)
    }

    fn layers(&self) -> Result<Vec<Layer>> {
        self.layers.clone().map_err(Error::Backend)
    }

    fn fingerprint(&self) -> String {
        self.fingerprint.clone()
    }
}

fn attr<'a>(node: &'a pb::NodeProto, name: &str) -> Option<&'a pb::AttributeProto> {
    node.attribute.iter().find(|a| a.name == name)
}

fn pair(node: &pb::NodeProto, name: &str, default: usize) -> std::result::Result<(usize, usize), String> {
    match attr(node, name) {
        None => Ok((default, default)),
        Some(a) if a.ints.len() == 2 => Ok((a.ints[0] as usize, a.ints[1] as usize)),
        Some(_) => Err(format!("node `{}`: `{name}` is not 2-D", node.name)),
    }
}

fn pads(node: &pb::NodeProto) -> std::result::Result<[usize; 4], String> {
    if let Some(a) = attr(node, "auto_pad") {
        let mode = String::from_utf8_lossy(&a.s);
        if mode != "NOTSET" && mode != "VALID" && !mode.is_empty() {
            return Err(format!("node `{}`: auto_pad {mode} is not supported", node.name));
        }
    }
    match attr(node, "pads") {
        None => Ok([0; 4]),
        // ONNX order: top, left, bottom, right
        Some(a) if a.ints.len() == 4 => Ok([
            a.ints[0] as usize,
            a.ints[1] as usize,
            a.ints[2] as usize,
            a.ints[3] as usize,
        ]),
        Some(_) => Err(format!("node `{}`: pads are not 2-D", node.name)),
    }
}

const SHAPE_PRESERVING: &[&str] = &[
    "Relu",
    "LeakyRelu",
    "Sigmoid",
    "Tanh",
    "Clip",
    "BatchNormalization",
    "Dropout",
    "Identity",
    "Add",
    "Sub",
    "Mul",
    "Div",
    "Constant",
    "LRN",
];

/// Enumerates convolution and pooling layers in graph order up to the node
/// producing `tapped`. Any other shape-changing operator makes the graph
/// unsupported for cost estimation.
fn layers_from_proto(proto: &pb::ModelProto, tapped: &str) -> std::result::Result<Vec<Layer>, String> {
    let graph = proto.graph.as_ref().ok_or("model has no graph")?;
    let dims: HashMap<&str, &[i64]> = graph
        .initializer
        .iter()
        .map(|t| (t.name.as_str(), t.dims.as_slice()))
        .collect();
    let mut layers = Vec::new();
    for node in &graph.node {
        match node.op_type.as_str() {
            "Conv" => {
                let w = node
                    .input
                    .get(1)
                    .and_then(|n| dims.get(n.as_str()))
                    .ok_or_else(|| format!("conv `{}` has no constant weight", node.name))?;
                if w.len() != 4 {
                    return Err(format!("conv `{}` weight is not 4-D", node.name));
                }
                if pair(node, "dilations", 1)? != (1, 1) {
                    return Err(format!("conv `{}` is dilated", node.name));
                }
                let groups = attr(node, "group").map_or(1, |a| a.i.max(1) as usize);
                layers.push(Layer::Conv {
                    in_channels: w[1] as usize * groups,
                    out_channels: w[0] as usize,
                    kernel: (w[2] as usize, w[3] as usize),
                    stride: pair(node, "strides", 1)?,
                    pads: pads(node)?,
                    groups,
                });
            }
            "MaxPool" | "AveragePool" => {
                let kernel = pair(node, "kernel_shape", 1)?;
                layers.push(Layer::Pool {
                    kernel,
                    stride: pair(node, "strides", 1)?,
                    pads: pads(node)?,
                    ceil_mode: attr(node, "ceil_mode").is_some_and(|a| a.i != 0),
                });
            }
            op if SHAPE_PRESERVING.contains(&op) => {}
            op => return Err(format!("cannot infer shapes through `{op}` node `{}`", node.name)),
        }
        if node.output.iter().any(|o| o == tapped) || node.name == tapped {
            return Ok(layers);
        }
    }
    Err(format!("tapped tensor `{tapped}` not found in graph"))
}
