use ndarray::{Array2, ArrayView2, Axis};
use serde::{Deserialize, Serialize};

use super::kernel::{kernel_from_distances, self_squared_distances, squared_distances};
use super::smo::{solve_binary, BinarySolution};
use crate::error::{Error, Result};

pub const KKT_TOLERANCE: f64 = 1e-3;
pub const DEFAULT_MAX_ITER: usize = 1_000_000;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SvmParams {
    pub c: f64,
    pub gamma: f64,
    pub tol: f64,
    pub max_iter: usize,
}

impl SvmParams {
    pub fn new(c: f64, gamma: f64) -> Self {
        SvmParams {
            c,
            gamma,
            tol: KKT_TOLERANCE,
            max_iter: DEFAULT_MAX_ITER,
        }
    }

    fn validate(&self) -> Result<()> {
        if !(self.c > 0.0 && self.c.is_finite()) || !(self.gamma > 0.0 && self.gamma.is_finite()) {
            return Err(Error::InvalidInput(format!(
                "C and gamma must be positive, got C={} gamma={}",
                self.c, self.gamma
            )));
        }
        Ok(())
    }
}

/// One class-versus-rest decision function over the model's support vectors.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Machine {
    /// Indices into [`SvmModel::support_vectors`].
    pub support: Vec<usize>,
    /// `α_i y_i` for each entry of `support`.
    pub coef: Vec<f64>,
    pub rho: f64,
    pub iterations: usize,
    pub converged: bool,
}

impl Machine {
    /// Dual variables; all lie in `[0, C]`.
    pub fn alphas(&self) -> impl Iterator<Item = f64> + '_ {
        self.coef.iter().map(|c| c.abs())
    }
}

/// One-vs-rest RBF support vector classifier.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SvmModel {
    pub labels: Vec<String>,
    pub params: SvmParams,
    pub support_vectors: Array2<f64>,
    /// Training-row index of each support vector.
    pub support_rows: Vec<usize>,
    pub machines: Vec<Machine>,
}

impl SvmModel {
    pub fn n_classes(&self) -> usize {
        self.machines.len()
    }

    pub fn with_labels(mut self, labels: Vec<String>) -> Result<Self> {
        if labels.len() != self.n_classes() {
            return Err(Error::InvalidInput(format!(
                "{} labels for {} classes",
                labels.len(),
                self.n_classes()
            )));
        }
        self.labels = labels;
        Ok(self)
    }

    /// Row-per-sample, column-per-class decision values.
    pub fn decision_values(&self, x: &Array2<f64>) -> Result<Array2<f64>> {
        if x.ncols() != self.support_vectors.ncols() {
            return Err(Error::DimensionMismatch {
                expected: self.support_vectors.ncols(),
                actual: x.ncols(),
            });
        }
        let k = kernel_from_distances(&squared_distances(x, &self.support_vectors), self.params.gamma);
        let mut out = Array2::zeros((x.nrows(), self.n_classes()));
        for (c, m) in self.machines.iter().enumerate() {
            for (r, krow) in k.axis_iter(Axis(0)).enumerate() {
                let s: f64 = m.support.iter().zip(&m.coef).map(|(&s, a)| a * krow[s]).sum();
                out[[r, c]] = s - m.rho;
            }
        }
        Ok(out)
    }

    pub fn predict(&self, x: &Array2<f64>) -> Result<Vec<usize>> {
        Ok(argmax_rows(&self.decision_values(x)?))
    }
}

/// Highest column per row; equal values go to the lower class index.
pub(crate) fn argmax_rows(scores: &Array2<f64>) -> Vec<usize> {
    scores
        .axis_iter(Axis(0))
        .map(|row| {
            let mut best = 0;
            for (c, &v) in row.iter().enumerate() {
                if v > row[best] {
                    best = c;
                }
            }
            best
        })
        .collect()
}

pub(crate) fn check_labels(y: &[usize], rows: usize) -> Result<usize> {
    if y.len() != rows {
        return Err(Error::InvalidInput(format!("{} labels for {rows} rows", y.len())));
    }
    let n_classes = y.iter().max().map_or(0, |m| m + 1);
    if n_classes < 2 {
        return Err(Error::InvalidInput("need at least 2 classes".into()));
    }
    let mut seen = vec![false; n_classes];
    for &l in y {
        seen[l] = true;
    }
    if let Some(missing) = seen.iter().position(|s| !s) {
        return Err(Error::InvalidInput(format!("class {missing} has no rows")));
    }
    Ok(n_classes)
}

/// One-vs-rest solutions on a precomputed training kernel.
pub(crate) fn fit_machines(
    k: ArrayView2<f64>,
    y: &[usize],
    n_classes: usize,
    params: &SvmParams,
) -> Vec<(Vec<f64>, BinarySolution)> {
    (0..n_classes)
        .map(|c| {
            let yb: Vec<f64> = y.iter().map(|&l| if l == c { 1.0 } else { -1.0 }).collect();
            let sol = solve_binary(k, &yb, params.c, params.tol, params.max_iter);
            (yb, sol)
        })
        .collect()
}

/// Predictions from kernel rows of evaluation samples against the training rows.
pub(crate) fn predict_from_kernel(k_eval: ArrayView2<f64>, machines: &[(Vec<f64>, BinarySolution)]) -> Vec<usize> {
    let mut scores = Array2::zeros((k_eval.nrows(), machines.len()));
    for (c, (yb, sol)) in machines.iter().enumerate() {
        for (r, krow) in k_eval.axis_iter(Axis(0)).enumerate() {
            scores[[r, c]] = sol.decision(yb, krow.iter().copied());
        }
    }
    argmax_rows(&scores)
}

/// Trains a one-vs-rest RBF SVM. Labels are class indices `0..n`; every class
/// must have at least one row.
pub fn train_svm(x: &Array2<f64>, y: &[usize], params: SvmParams) -> Result<SvmModel> {
    params.validate()?;
    let n_classes = check_labels(y, x.nrows())?;
    let k = kernel_from_distances(&self_squared_distances(x), params.gamma);
    let solved = fit_machines(k.view(), y, n_classes, &params);

    let mut support_rows: Vec<usize> = (0..x.nrows())
        .filter(|&i| solved.iter().any(|(_, s)| s.alpha[i] > 0.0))
        .collect();
    support_rows.sort_unstable();
    let mut slot = vec![usize::MAX; x.nrows()];
    for (s, &row) in support_rows.iter().enumerate() {
        slot[row] = s;
    }
    let machines = solved
        .into_iter()
        .map(|(yb, sol)| {
            let (support, coef) = (0..x.nrows())
                .filter(|&i| sol.alpha[i] > 0.0)
                .map(|i| (slot[i], sol.alpha[i] * yb[i]))
                .unzip();
            Machine {
                support,
                coef,
                rho: sol.rho,
                iterations: sol.iterations,
                converged: sol.converged,
            }
        })
        .collect();
    Ok(SvmModel {
        labels: (0..n_classes).map(|c| c.to_string()).collect(),
        params,
        support_vectors: x.select(Axis(0), &support_rows),
        support_rows,
        machines,
    })
}
