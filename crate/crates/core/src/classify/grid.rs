use ndarray::{Array2, Axis};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::kernel::{kernel_from_distances, self_squared_distances};
use super::svm::{check_labels, fit_machines, predict_from_kernel, SvmParams};
use crate::error::{Error, Result};

pub const DEFAULT_FOLDS: usize = 5;

/// Candidate hyperparameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub c: Vec<f64>,
    pub gamma: Vec<f64>,
}

impl GridSpec {
    pub fn new(c: Vec<f64>, gamma: Vec<f64>) -> Result<Self> {
        let grid = GridSpec { c, gamma };
        grid.validate()?;
        Ok(grid)
    }

    /// C ∈ {1, 2, …, 200} ∪ {1000, 2000, …, 6000}, γ ∈ {10⁻¹, …, 10⁻⁷}.
    pub fn paper() -> Self {
        let c = (1..=200)
            .map(f64::from)
            .chain((1..=6).map(|m| 1000.0 * f64::from(m)))
            .collect();
        let gamma = (1..=7).map(|e| 10f64.powi(-e)).collect();
        GridSpec { c, gamma }
    }

    pub fn validate(&self) -> Result<()> {
        if self.c.is_empty() || self.gamma.is_empty() {
            return Err(Error::Config("grid needs at least one C and one gamma".into()));
        }
        if self.c.iter().chain(&self.gamma).any(|v| !(*v > 0.0 && v.is_finite())) {
            return Err(Error::Config("grid values must be positive".into()));
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.c.len() * self.gamma.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

impl Default for GridSpec {
    fn default() -> Self {
        GridSpec::paper()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CvRow {
    pub c: f64,
    pub gamma: f64,
    pub fold_accuracy: Vec<f64>,
    pub mean_accuracy: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridResult {
    pub best_c: f64,
    pub best_gamma: f64,
    pub best_accuracy: f64,
    /// Rows ordered by ascending C, then descending gamma.
    pub table: Vec<CvRow>,
}

/// Assigns each row to one of `folds` folds, class by class, after a seeded
/// shuffle. Returns the held-out rows of each fold in ascending order.
pub fn stratified_folds(y: &[usize], folds: usize, seed: u64) -> Result<Vec<Vec<usize>>> {
    if folds < 2 {
        return Err(Error::InvalidInput(format!("need at least 2 folds, got {folds}")));
    }
    let n_classes = y.iter().max().map_or(0, |m| m + 1);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = vec![Vec::new(); folds];
    let mut next = 0;
    for c in 0..n_classes {
        let mut rows: Vec<usize> = (0..y.len()).filter(|&i| y[i] == c).collect();
        if rows.is_empty() {
            continue;
        }
        if rows.len() < folds {
            return Err(Error::InvalidInput(format!(
                "class {c} has {} rows, fewer than {folds} folds",
                rows.len()
            )));
        }
        rows.shuffle(&mut rng);
        for r in rows {
            out[next].push(r);
            next = (next + 1) % folds;
        }
    }
    for f in &mut out {
        f.sort_unstable();
    }
    Ok(out)
}

/// Stratified k-fold search over `grid`; best mean accuracy wins, ties going
/// to the smaller C and then the larger gamma.
pub fn grid_search(
    x: &Array2<f64>,
    y: &[usize],
    grid: &GridSpec,
    folds: usize,
    seed: u64,
) -> Result<GridResult> {
    grid.validate()?;
    let n_classes = check_labels(y, x.nrows())?;
    let fold_rows = stratified_folds(y, folds, seed)?;
    let splits: Vec<(Vec<usize>, Vec<usize>)> = fold_rows
        .iter()
        .enumerate()
        .map(|(f, held)| {
            let mut train: Vec<usize> = fold_rows
                .iter()
                .enumerate()
                .filter(|(g, _)| *g != f)
                .flat_map(|(_, r)| r.iter().copied())
                .collect();
            train.sort_unstable();
            (train, held.clone())
        })
        .collect();
    let dist = self_squared_distances(x);

    // accuracy[gamma][c][fold]
    let per_gamma: Vec<Vec<Vec<f64>>> = grid
        .gamma
        .par_iter()
        .map(|&gamma| {
            let k = kernel_from_distances(&dist, gamma);
            let mut acc = vec![vec![0.0; splits.len()]; grid.c.len()];
            for (f, (train, held)) in splits.iter().enumerate() {
                let k_tr = k.select(Axis(0), train).select(Axis(1), train);
                let k_ev = k.select(Axis(0), held).select(Axis(1), train);
                let ty: Vec<usize> = train.iter().map(|&i| y[i]).collect();
                for (ci, &c) in grid.c.iter().enumerate() {
                    let machines = fit_machines(k_tr.view(), &ty, n_classes, &SvmParams::new(c, gamma));
                    let pred = predict_from_kernel(k_ev.view(), &machines);
                    let correct = pred.iter().zip(held).filter(|(p, &i)| **p == y[i]).count();
                    acc[ci][f] = correct as f64 / held.len() as f64;
                }
            }
            acc
        })
        .collect();

    let mut gamma_order: Vec<usize> = (0..grid.gamma.len()).collect();
    gamma_order.sort_by(|&a, &b| grid.gamma[b].total_cmp(&grid.gamma[a]));
    let mut c_order: Vec<usize> = (0..grid.c.len()).collect();
    c_order.sort_by(|&a, &b| grid.c[a].total_cmp(&grid.c[b]));

    let mut table: Vec<CvRow> = Vec::with_capacity(grid.len());
    let mut best: Option<usize> = None;
    for &ci in &c_order {
        for &gi in &gamma_order {
            let fold_accuracy = per_gamma[gi][ci].clone();
            let mean_accuracy = fold_accuracy.iter().sum::<f64>() / fold_accuracy.len() as f64;
            if best.map_or(true, |b| mean_accuracy > table[b].mean_accuracy + 1e-12) {
                best = Some(table.len());
            }
            table.push(CvRow {
                c: grid.c[ci],
                gamma: grid.gamma[gi],
                fold_accuracy,
                mean_accuracy,
            });
        }
    }
    let b = &table[best.expect("non-empty grid")];
    Ok(GridResult {
        best_c: b.c,
        best_gamma: b.gamma,
        best_accuracy: b.mean_accuracy,
        table,
    })
}
