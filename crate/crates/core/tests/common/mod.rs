#![allow(dead_code)]

use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use ccf_core::embed::{EmbeddingStore, Family};
use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn store(family: Family, entries: &[(&str, &[f32])]) -> Arc<EmbeddingStore> {
    Arc::new(EmbeddingStore::from_entries(family, entries.iter().map(|(w, v)| (*w, v.to_vec()))).unwrap())
}

pub fn raw_cosine(a: &[f32], b: &[f32]) -> f64 {
    let dot: f64 = a.iter().zip(b).map(|(&x, &y)| x as f64 * y as f64).sum();
    let na: f64 = a.iter().map(|&x| (x as f64).powi(2)).sum::<f64>().sqrt();
    let nb: f64 = b.iter().map(|&x| (x as f64).powi(2)).sum::<f64>().sqrt();
    dot / (na * nb)
}

// ---------------------------------------------------------------------------
// Dual QP reference solver

/// Solves `min ½αᵀQα − Σα` over `0 ≤ α ≤ C, yᵀα = 0` by accelerated projected
/// gradient, with the projection onto the feasible set found by bisection on
/// the equality multiplier. Returns `(α, b)` for `f(x) = Σ α_i y_i K(x_i, x) + b`.
pub fn qp_dual(k: &Array2<f64>, y: &[f64], c: f64) -> (Vec<f64>, f64) {
    let n = y.len();
    let q = |i: usize, j: usize| y[i] * y[j] * k[[i, j]];
    let lipschitz = (0..n)
        .map(|i| (0..n).map(|j| q(i, j).abs()).sum::<f64>())
        .fold(0.0, f64::max);
    let step = 1.0 / lipschitz;

    let project = |v: &[f64]| -> Vec<f64> {
        let at = |mu: f64| -> (f64, Vec<f64>) {
            let a: Vec<f64> = v.iter().zip(y).map(|(&vi, &yi)| (vi - mu * yi).clamp(0.0, c)).collect();
            (a.iter().zip(y).map(|(a, y)| a * y).sum(), a)
        };
        let bound = v.iter().fold(c, |m, x| m.max(x.abs())) + 1.0;
        let (mut lo, mut hi) = (-bound, bound);
        for _ in 0..80 {
            let mid = 0.5 * (lo + hi);
            if at(mid).0 > 0.0 {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        at(0.5 * (lo + hi)).1
    };

    let grad = |a: &[f64]| -> Vec<f64> {
        (0..n)
            .map(|i| (0..n).map(|j| q(i, j) * a[j]).sum::<f64>() - 1.0)
            .collect()
    };
    let mut alpha = vec![0.0; n];
    let mut z = alpha.clone();
    let mut t = 1.0f64;
    for _ in 0..50_000 {
        let g = grad(&z);
        let next = project(&z.iter().zip(&g).map(|(zi, gi)| zi - step * gi).collect::<Vec<_>>());
        let moved = next.iter().zip(&alpha).fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
        if moved < 1e-12 {
            alpha = next;
            break;
        }
        let t_next = 0.5 * (1.0 + (1.0 + 4.0 * t * t).sqrt());
        z = next
            .iter()
            .zip(&alpha)
            .map(|(x, xp)| x + (t - 1.0) / t_next * (x - xp))
            .collect();
        alpha = next;
        t = t_next;
    }

    let margin = |i: usize| y[i] - (0..n).map(|j| alpha[j] * y[j] * k[[i, j]]).sum::<f64>();
    let eps = 1e-6 * c.max(1.0);
    let free: Vec<usize> = (0..n).filter(|&i| alpha[i] > eps && alpha[i] < c - eps).collect();
    let b = if free.is_empty() {
        // midpoint of the feasible interval for b
        let (mut lo, mut hi) = (f64::NEG_INFINITY, f64::INFINITY);
        for i in 0..n {
            let m = margin(i);
            let at_lower = alpha[i] <= eps;
            if (y[i] > 0.0) == at_lower {
                lo = lo.max(m);
            } else {
                hi = hi.min(m);
            }
        }
        0.5 * (lo + hi)
    } else {
        free.iter().map(|&i| margin(i)).sum::<f64>() / free.len() as f64
    };
    (alpha, b)
}

pub fn rbf_matrix(a: &Array2<f64>, b: &Array2<f64>, gamma: f64) -> Array2<f64> {
    Array2::from_shape_fn((a.nrows(), b.nrows()), |(i, j)| {
        let d: f64 = a.row(i).iter().zip(b.row(j)).map(|(x, z)| (x - z).powi(2)).sum();
        (-gamma * d).exp()
    })
}

pub fn blobs(per_class: usize, centers: &[(f64, f64)], spread: f64, seed: u64) -> (Array2<f64>, Vec<usize>) {
    let mut r = rng(seed);
    let n = per_class * centers.len();
    let mut x = Array2::zeros((n, 2));
    let mut y = Vec::with_capacity(n);
    for (c, &(cx, cy)) in centers.iter().enumerate() {
        for i in 0..per_class {
            let row = c * per_class + i;
            x[[row, 0]] = cx + r.gen_range(-spread..spread);
            x[[row, 1]] = cy + r.gen_range(-spread..spread);
            y.push(c);
        }
    }
    (x, y)
}

// ---------------------------------------------------------------------------
// ONNX fixtures

#[cfg(feature = "onnx")]
pub mod onnx {
    use super::*;
    use prost::Message;
    use tract_onnx::pb;
    use tract_onnx::pb::attribute_proto::AttributeType;
    use tract_onnx::pb::tensor_proto::DataType;

    pub fn ints(name: &str, v: &[i64]) -> pb::AttributeProto {
        pb::AttributeProto {
            name: name.into(),
            r#type: AttributeType::Ints as i32,
            ints: v.to_vec(),
            ..Default::default()
        }
    }

    pub fn node(op: &str, name: &str, inputs: &[&str], output: &str, attrs: Vec<pb::AttributeProto>) -> pb::NodeProto {
        pb::NodeProto {
            op_type: op.into(),
            name: name.into(),
            input: inputs.iter().map(|s| s.to_string()).collect(),
            output: vec![output.into()],
            attribute: attrs,
            ..Default::default()
        }
    }

    pub fn tensor(name: &str, dims: &[i64], data: Vec<f32>) -> pb::TensorProto {
        pb::TensorProto {
            name: name.into(),
            dims: dims.to_vec(),
            data_type: DataType::Float as i32,
            float_data: data,
            ..Default::default()
        }
    }

    fn value_info(name: &str, dims: &[Option<i64>]) -> pb::ValueInfoProto {
        use pb::tensor_shape_proto::dimension::Value;
        let dim = dims
            .iter()
            .enumerate()
            .map(|(i, d)| pb::tensor_shape_proto::Dimension {
                value: Some(match d {
                    Some(v) => Value::DimValue(*v),
                    None => Value::DimParam(format!("d{i}")),
                }),
                ..Default::default()
            })
            .collect();
        pb::ValueInfoProto {
            name: name.into(),
            r#type: Some(pb::TypeProto {
                value: Some(pb::type_proto::Value::TensorType(pb::type_proto::Tensor {
                    elem_type: DataType::Float as i32,
                    shape: Some(pb::TensorShapeProto { dim }),
                })),
                ..Default::default()
            }),
            ..Default::default()
        }
    }

    pub fn model(nodes: Vec<pb::NodeProto>, initializers: Vec<pb::TensorProto>, output: &str) -> Vec<u8> {
        let graph = pb::GraphProto {
            name: "fixture".into(),
            node: nodes,
            initializer: initializers,
            input: vec![value_info("input", &[Some(1), Some(3), None, None])],
            output: vec![value_info(output, &[Some(1), None, None, None])],
            ..Default::default()
        };
        pb::ModelProto {
            ir_version: 7,
            opset_import: vec![pb::OperatorSetIdProto {
                domain: String::new(),
                version: 13,
            }],
            graph: Some(graph),
            ..Default::default()
        }
        .encode_to_vec()
    }

    /// Five conv3x3 → ReLU → maxpool2 blocks ending in a 512-channel `pool5`.
    pub fn mini_vgg() -> (Vec<u8>, Vec<(usize, usize)>) {
        let channels = [(3usize, 4usize), (4, 4), (4, 8), (8, 8), (8, 512)];
        let mut nodes = Vec::new();
        let mut inits = Vec::new();
        let mut prev = "input".to_string();
        for (b, &(cin, cout)) in channels.iter().enumerate() {
            let w: Vec<f32> = (0..cout * cin * 9)
                .map(|i| ((i * 7919 + b * 31) % 17) as f32 / 17.0 - 0.4)
                .collect();
            let (wn, bn) = (format!("w{b}"), format!("b{b}"));
            inits.push(tensor(&wn, &[cout as i64, cin as i64, 3, 3], w));
            inits.push(tensor(&bn, &[cout as i64], vec![0.05; cout]));
            let (conv, relu, pool) = (format!("conv{b}"), format!("relu{b}"), format!("pool{}", b + 1));
            nodes.push(node(
                "Conv",
                &conv,
                &[&prev, &wn, &bn],
                &conv,
                vec![ints("kernel_shape", &[3, 3]), ints("pads", &[1, 1, 1, 1])],
            ));
            nodes.push(node("Relu", &relu, &[&conv], &relu, vec![]));
            nodes.push(node(
                "MaxPool",
                &pool,
                &[&relu],
                &pool,
                vec![ints("kernel_shape", &[2, 2]), ints("strides", &[2, 2])],
            ));
            prev = pool;
        }
        (model(nodes, inits, "pool5"), channels.to_vec())
    }

    /// 32×32 average pooling followed by a 1×1 convolution copying input
    /// channel `c % 3` to output channel `c`: exposes the preprocessed input.
    pub fn block_mean() -> Vec<u8> {
        let mut w = vec![0.0f32; 512 * 3];
        for c in 0..512 {
            w[c * 3 + c % 3] = 1.0;
        }
        let nodes = vec![
            node(
                "AveragePool",
                "avg",
                &["input"],
                "avg",
                vec![ints("kernel_shape", &[32, 32]), ints("strides", &[32, 32])],
            ),
            node("Conv", "mix", &["avg", "w"], "tap", vec![ints("kernel_shape", &[1, 1])]),
        ];
        model(nodes, vec![tensor("w", &[512, 3, 1, 1], w)], "tap")
    }

    pub fn write(dir: &Path, name: &str, bytes: &[u8], sidecar: serde_json::Value) -> PathBuf {
        let path = dir.join(format!("{name}.onnx"));
        fs::write(&path, bytes).unwrap();
        fs::write(path.with_extension("json"), sidecar.to_string()).unwrap();
        path
    }
}

// ---------------------------------------------------------------------------
// Synthetic scene corpus

/// Four categories where the tags only tell `transit_*` from `food_*` and the
/// image colour only tells `*_red` from `*_blue`. Image `i` of a category has
/// exactly the same tags as image `i` of its tag twin and exactly the same
/// pixels as image `i` of its colour twin.
pub const SCENE_CATEGORIES: [&str; 4] = ["food_blue", "food_red", "transit_blue", "transit_red"];
pub const TRAIN_PER_CLASS: usize = 8;
pub const TEST_PER_CLASS: usize = 4;

#[derive(Debug, Clone, Default)]
pub struct CorpusOptions {
    /// Adds a record whose image file does not exist.
    pub missing_image: bool,
    /// Adds a record whose tag document is empty.
    pub empty_tags: bool,
}

const TRANSIT_TAGS: [&str; 4] = ["tram", "metro", "bus", "train"];
const FOOD_TAGS: [&str; 4] = ["pizza", "pasta", "bread", "soup"];

fn embedding_lines() -> String {
    let mut r = rng(7);
    let mut lines = vec!["16 6".to_string()];
    let mut push = |word: &str, axis: usize, r: &mut ChaCha8Rng| {
        let mut v = [0.0f32; 6];
        v[axis] = 1.0;
        for x in v.iter_mut() {
            *x += r.gen_range(-0.15..0.15);
        }
        let comps: Vec<String> = v.iter().map(|x| format!("{x:.5}")).collect();
        lines.push(format!("{word} {}", comps.join(" ")));
    };
    for w in TRANSIT_TAGS.iter().chain(["transit"].iter()) {
        push(w, 0, &mut r);
    }
    for w in FOOD_TAGS.iter().chain(["food"].iter()) {
        push(w, 1, &mut r);
    }
    push("red", 2, &mut r);
    push("blue", 3, &mut r);
    push("green", 4, &mut r);
    push("yellow", 5, &mut r);
    push("city", 0, &mut r);
    push("kitchen", 1, &mut r);
    lines.join("\n") + "\n"
}

fn tags_for(category: &str, i: usize) -> Vec<String> {
    let vocab = if category.starts_with("transit") { TRANSIT_TAGS } else { FOOD_TAGS };
    let mut tags = vec![vocab[0].to_string(), vocab[1].to_string()];
    tags.push(vocab[2 + i % 2].to_string());
    if i % 3 == 0 {
        tags.push(vocab[i % 4].to_string());
    }
    tags
}

fn colour_for(category: &str, i: usize) -> [u8; 3] {
    let v = 150 + 10 * (i as u8 % 10);
    if category.ends_with("red") {
        [v, 30 + 5 * (i as u8 % 3), 40]
    } else {
        [40, 30 + 5 * (i as u8 % 3), v]
    }
}

fn write_png(path: &Path, rgb: [u8; 3], i: usize) {
    let img = image::RgbImage::from_fn(32, 32, |x, y| {
        let ripple = ((x + y + i as u32) % 8) as u8;
        image::Rgb([rgb[0].saturating_add(ripple), rgb[1], rgb[2].saturating_add(ripple)])
    });
    img.save(path).unwrap();
}

/// Writes images, tags, embeddings, a manifest and `ccf.toml` into `dir` and
/// returns the config path.
pub fn write_scene_corpus(dir: &Path, opts: &CorpusOptions) -> PathBuf {
    let img_dir = dir.join("images");
    fs::create_dir_all(&img_dir).unwrap();
    let mut manifest = String::from("image_id,image,category,split\n");
    let mut tag_lines = Vec::new();
    for cat in SCENE_CATEGORIES {
        for i in 0..TRAIN_PER_CLASS + TEST_PER_CLASS {
            let id = format!("{cat}-{i:02}");
            let split = if i < TRAIN_PER_CLASS { "train" } else { "test" };
            write_png(&img_dir.join(format!("{id}.png")), colour_for(cat, i), i);
            manifest.push_str(&format!("{id},images/{id}.png,{cat},{split}\n"));
            tag_lines.push(serde_json::json!({"image_id": id, "tags": tags_for(cat, i)}).to_string());
        }
    }
    if opts.missing_image {
        manifest.push_str("ghost,images/ghost.png,food_red,test\n");
        tag_lines.push(serde_json::json!({"image_id": "ghost", "tags": ["pizza"]}).to_string());
    }
    if opts.empty_tags {
        write_png(&img_dir.join("blank.png"), colour_for("food_blue", 0), 0);
        manifest.push_str("blank,images/blank.png,food_blue,test\n");
        tag_lines.push(serde_json::json!({"image_id": "blank", "tags": []}).to_string());
    }
    fs::write(dir.join("manifest.csv"), manifest).unwrap();
    fs::write(dir.join("tags.jsonl"), tag_lines.join("\n") + "\n").unwrap();
    fs::write(dir.join("wv.txt"), embedding_lines()).unwrap();

    let config = r#"seed = 11

[paths]
manifest = "manifest.csv"
tags = "tags.jsonl"
embeddings = [{ family = "wv", path = "wv.txt" }]
foreground_model = "stub"
background_model = "stub"
out_dir = "out"

[codebook]
k = 25
candidates = 500
lambda = 0.4

[content]
scales = [1.0, 1.5]
base_side = 64
aggregation = "max"

[classify]
c = [1.0, 10.0, 100.0]
gamma = [0.1, 0.01, 0.001]
folds = 4
runs = 1
variants = ["tf", "df", "ccf"]
"#;
    let path = dir.join("ccf.toml");
    fs::write(&path, config).unwrap();
    path
}
