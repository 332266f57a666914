//! Feature fusion: per-block standardization, PCA reduction of the larger
//! blocks to the smallest block size, and concatenation in (TF, BF, FF) order.
//!
//! Every transform is fitted on training rows only and then frozen.

use std::collections::HashSet;
use std::fmt;

use ndarray::{s, Array1, Array2, ArrayView1, Axis};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::linalg::symmetric_eigen;

pub const STD_FLOOR: f64 = 1e-8;

/// Per-column z-scoring with the population standard deviation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Standardizer {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl Standardizer {
    pub fn fit(rows: &Array2<f64>) -> Result<Self> {
        let n = rows.nrows();
        if n < 2 {
            return Err(Error::InvalidInput(format!(
                "standardizer needs at least 2 rows, got {n}"
            )));
        }
        let mean = rows.mean_axis(Axis(0)).expect("non-empty");
        let std = rows
            .axis_iter(Axis(1))
            .zip(mean.iter())
            .map(|(col, &m)| {
                let var = col.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / n as f64;
                var.sqrt().max(STD_FLOOR)
            })
            .collect();
        Ok(Standardizer {
            mean: mean.to_vec(),
            std,
        })
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn apply_row(&self, row: ArrayView1<f64>) -> Result<Array1<f64>> {
        if row.len() != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                actual: row.len(),
            });
        }
        Ok(Array1::from_iter(
            row.iter()
                .zip(self.mean.iter().zip(&self.std))
                .map(|(x, (m, s))| (x - m) / s),
        ))
    }

    pub fn apply(&self, rows: &Array2<f64>) -> Result<Array2<f64>> {
        if rows.ncols() != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                actual: rows.ncols(),
            });
        }
        let mut out = rows.clone();
        for mut row in out.rows_mut() {
            for ((x, m), s) in row.iter_mut().zip(&self.mean).zip(&self.std) {
                *x = (*x - m) / s;
            }
        }
        Ok(out)
    }
}

/// Principal axes of the training rows. `components` is `target_dim × source_dim`
/// with orthonormal rows; `variances` are the matching eigenvalues of the
/// sample covariance (denominator `n − 1`), in descending order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PcaModel {
    pub mean: Vec<f64>,
    pub components: Array2<f64>,
    pub variances: Vec<f64>,
}

impl PcaModel {
    pub fn source_dim(&self) -> usize {
        self.components.ncols()
    }

    pub fn target_dim(&self) -> usize {
        self.components.nrows()
    }

    /// Fits the top `q` components. When there are fewer rows than columns the
    /// decomposition runs on the `n × n` Gram matrix instead of the covariance.
    pub fn fit(rows: &Array2<f64>, q: usize) -> Result<Self> {
        let (n, d) = rows.dim();
        let bound = n.saturating_sub(1).min(d);
        if q == 0 || q > bound {
            return Err(Error::InvalidInput(format!(
                "PCA target dimension {q} must lie in 1..={bound} (rows − 1 = {}, columns = {d})",
                n.saturating_sub(1)
            )));
        }
        let mean = rows.mean_axis(Axis(0)).expect("non-empty");
        let centered = rows - &mean.view().insert_axis(Axis(0));
        let denom = (n - 1) as f64;

        let (components, variances) = if d <= n {
            let cov = centered.t().dot(&centered) / denom;
            let eig = symmetric_eigen(&cov)?;
            let comps = eig.vectors.slice(s![.., ..q]).t().to_owned();
            (comps, eig.values.slice(s![..q]).to_vec())
        } else {
            let gram = centered.dot(&centered.t()) / denom;
            let eig = symmetric_eigen(&gram)?;
            let mut comps = Array2::zeros((q, d));
            let mut variances = Vec::with_capacity(q);
            let scale_floor = 1e-12 * eig.values[0].abs().max(1.0);
            let mut filled = 0;
            for i in 0..q {
                let lambda = eig.values[i];
                if lambda <= scale_floor {
                    break;
                }
                let v = centered.t().dot(&eig.vectors.column(i)) / (denom * lambda).sqrt();
                comps.row_mut(i).assign(&v);
                variances.push(lambda);
                filled += 1;
            }
            complete_basis(&mut comps, filled);
            variances.resize(q, 0.0);
            (comps, variances)
        };
        let mut model = PcaModel {
            mean: mean.to_vec(),
            components,
            variances,
        };
        model.fix_signs();
        Ok(model)
    }

    /// Largest-magnitude component of each axis made positive.
    fn fix_signs(&mut self) {
        for mut row in self.components.rows_mut() {
            let pivot = row
                .iter()
                .copied()
                .fold(0.0f64, |p, x| if x.abs() > p.abs() { x } else { p });
            if pivot < 0.0 {
                row.mapv_inplace(|x| -x);
            }
        }
    }

    pub fn project(&self, row: ArrayView1<f64>) -> Result<Array1<f64>> {
        if row.len() != self.source_dim() {
            return Err(Error::DimensionMismatch {
                expected: self.source_dim(),
                actual: row.len(),
            });
        }
        let centered = Array1::from_iter(row.iter().zip(&self.mean).map(|(x, m)| x - m));
        Ok(self.components.dot(&centered))
    }
}

/// Extends rows `filled..` of `comps` to an orthonormal set using standard
/// basis vectors, for directions of zero training variance.
fn complete_basis(comps: &mut Array2<f64>, filled: usize) {
    let (q, d) = comps.dim();
    let mut next = filled;
    let mut j = 0;
    while next < q && j < d {
        let mut v = Array1::<f64>::zeros(d);
        v[j] = 1.0;
        for _ in 0..2 {
            for r in 0..next {
                let row = comps.row(r);
                let dot = row.dot(&v);
                v.scaled_add(-dot, &row);
            }
        }
        let norm = v.dot(&v).sqrt();
        if norm > 1e-6 {
            comps.row_mut(next).assign(&(v / norm));
            next += 1;
        }
        j += 1;
    }
}

/// Feature blocks in fused order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum BlockKind {
    TF,
    BF,
    FF,
}

impl BlockKind {
    pub const ALL: [BlockKind; 3] = [BlockKind::TF, BlockKind::BF, BlockKind::FF];

    pub fn as_str(self) -> &'static str {
        match self {
            BlockKind::TF => "tf",
            BlockKind::BF => "bf",
            BlockKind::FF => "ff",
        }
    }
}

impl fmt::Display for BlockKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Concatenates already-standardized block rows, projecting every block longer
/// than the shortest one through its PCA model.
pub fn fuse(blocks: &[(ArrayView1<f64>, Option<&PcaModel>)]) -> Result<Array1<f64>> {
    let q = blocks
        .iter()
        .map(|(b, _)| b.len())
        .min()
        .ok_or_else(|| Error::InvalidInput("no blocks to fuse".into()))?;
    let mut out = Vec::with_capacity(q * blocks.len());
    for (i, (row, pca)) in blocks.iter().enumerate() {
        if row.len() == q {
            out.extend(row.iter());
            continue;
        }
        let pca = pca.ok_or_else(|| {
            Error::InvalidInput(format!("block {i} has {} dims > {q} and no PCA model", row.len()))
        })?;
        if pca.target_dim() != q {
            return Err(Error::DimensionMismatch {
                expected: q,
                actual: pca.target_dim(),
            });
        }
        out.extend(pca.project(row.view())?.iter());
    }
    Ok(Array1::from_vec(out))
}

/// Rows of several feature blocks for the same ordered image ids.
#[derive(Debug, Clone)]
pub struct FeatureBlocks {
    pub ids: Vec<String>,
    pub blocks: Vec<(BlockKind, Array2<f64>)>,
}

impl FeatureBlocks {
    pub fn new(ids: Vec<String>, mut blocks: Vec<(BlockKind, Array2<f64>)>) -> Result<Self> {
        if blocks.is_empty() {
            return Err(Error::InvalidInput("no feature blocks".into()));
        }
        blocks.sort_by_key(|(k, _)| *k);
        for w in blocks.windows(2) {
            if w[0].0 == w[1].0 {
                return Err(Error::InvalidInput(format!("duplicate block {}", w[0].0)));
            }
        }
        for (kind, m) in &blocks {
            if m.nrows() != ids.len() {
                return Err(Error::InvalidInput(format!(
                    "block {kind} has {} rows for {} ids",
                    m.nrows(),
                    ids.len()
                )));
            }
        }
        Ok(FeatureBlocks { ids, blocks })
    }

    /// Rows selected by index, in the given order.
    pub fn select(&self, rows: &[usize]) -> FeatureBlocks {
        FeatureBlocks {
            ids: rows.iter().map(|&i| self.ids[i].clone()).collect(),
            blocks: self
                .blocks
                .iter()
                .map(|(k, m)| (*k, m.select(Axis(0), rows)))
                .collect(),
        }
    }

    /// Only the listed block kinds.
    pub fn with_kinds(&self, kinds: &[BlockKind]) -> Result<FeatureBlocks> {
        let blocks: Vec<_> = self
            .blocks
            .iter()
            .filter(|(k, _)| kinds.contains(k))
            .cloned()
            .collect();
        if blocks.len() != kinds.len() {
            return Err(Error::InvalidInput(format!("missing blocks among {kinds:?}")));
        }
        FeatureBlocks::new(self.ids.clone(), blocks)
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BlockTransform {
    pub kind: BlockKind,
    pub standardizer: Standardizer,
    pub pca: Option<PcaModel>,
}

/// Frozen standardize → PCA → concatenate transform.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FusionModel {
    pub blocks: Vec<BlockTransform>,
    pub block_dim: usize,
    /// SHA-256 over the sorted training ids the model was fitted on.
    pub fit_digest: String,
    fit_ids: HashSet<String>,
}

impl FusionModel {
    pub fn fit(train: &FeatureBlocks) -> Result<Self> {
        let q = train
            .blocks
            .iter()
            .map(|(_, m)| m.ncols())
            .min()
            .ok_or_else(|| Error::InvalidInput("no feature blocks".into()))?;
        let mut blocks = Vec::with_capacity(train.blocks.len());
        for (kind, rows) in &train.blocks {
            let standardizer = Standardizer::fit(rows)?;
            let pca = if rows.ncols() > q {
                Some(PcaModel::fit(&standardizer.apply(rows)?, q)?)
            } else {
                None
            };
            blocks.push(BlockTransform {
                kind: *kind,
                standardizer,
                pca,
            });
        }
        let mut sorted: Vec<&str> = train.ids.iter().map(String::as_str).collect();
        sorted.sort_unstable();
        let mut hasher = Sha256::new();
        for id in sorted {
            hasher.update(id.as_bytes());
            hasher.update([0]);
        }
        Ok(FusionModel {
            blocks,
            block_dim: q,
            fit_digest: hex::encode(hasher.finalize()),
            fit_ids: train.ids.iter().cloned().collect(),
        })
    }

    pub fn output_dim(&self) -> usize {
        self.block_dim * self.blocks.len()
    }

    pub fn transform(&self, rows: &FeatureBlocks) -> Result<Array2<f64>> {
        let kinds: Vec<BlockKind> = rows.blocks.iter().map(|(k, _)| *k).collect();
        let expected: Vec<BlockKind> = self.blocks.iter().map(|b| b.kind).collect();
        if kinds != expected {
            return Err(Error::InvalidInput(format!(
                "blocks {kinds:?} do not match fitted {expected:?}"
            )));
        }
        let standardized: Vec<Array2<f64>> = self
            .blocks
            .iter()
            .zip(&rows.blocks)
            .map(|(t, (_, m))| t.standardizer.apply(m))
            .collect::<Result<_>>()?;
        let mut out = Array2::zeros((rows.len(), self.output_dim()));
        for r in 0..rows.len() {
            let parts: Vec<(ArrayView1<f64>, Option<&PcaModel>)> = standardized
                .iter()
                .zip(&self.blocks)
                .map(|(m, t)| (m.row(r), t.pca.as_ref()))
                .collect();
            out.row_mut(r).assign(&fuse(&parts)?);
        }
        Ok(out)
    }

    /// Transforms evaluation rows, refusing any row the model was fitted on.
    pub fn transform_held_out(&self, rows: &FeatureBlocks) -> Result<Array2<f64>> {
        if let Some(id) = rows.ids.iter().find(|id| self.fit_ids.contains(*id)) {
            return Err(Error::Leakage(format!(
                "evaluation row `{id}` was part of the fitting data"
            )));
        }
        self.transform(rows)
    }
}
