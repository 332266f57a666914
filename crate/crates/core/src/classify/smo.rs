//! Sequential minimal optimization for the binary C-SVC dual
//!
//!   min ½ αᵀQα − eᵀα   s.t.  yᵀα = 0,  0 ≤ α ≤ C,   Q_ij = y_i y_j K_ij
//!
//! with second-order working-set selection. Ties in selection go to the
//! lowest index so the solution depends only on row order.

use ndarray::ArrayView2;

const TAU: f64 = 1e-12;

#[derive(Debug, Clone)]
pub struct BinarySolution {
    pub alpha: Vec<f64>,
    pub rho: f64,
    pub iterations: usize,
    pub converged: bool,
}

impl BinarySolution {
    /// `Σ α_i y_i K(x_i, ·) − ρ` for one row of kernel values against the training rows.
    pub fn decision(&self, y: &[f64], k_row: impl Iterator<Item = f64>) -> f64 {
        self.alpha
            .iter()
            .zip(y)
            .zip(k_row)
            .filter(|((a, _), _)| **a > 0.0)
            .map(|((a, yi), k)| a * yi * k)
            .sum::<f64>()
            - self.rho
    }
}

/// Solves the dual for labels `y ∈ {−1, +1}` given the full kernel matrix.
pub fn solve_binary(k: ArrayView2<f64>, y: &[f64], c: f64, tol: f64, max_iter: usize) -> BinarySolution {
    let n = y.len();
    debug_assert_eq!(k.dim(), (n, n));
    let mut alpha = vec![0.0; n];
    let mut grad = vec![-1.0; n];
    let diag: Vec<f64> = (0..n).map(|i| k[[i, i]]).collect();
    let upper = |a: f64| a >= c;
    let lower = |a: f64| a <= 0.0;

    let mut iterations = 0;
    let mut converged = false;
    while iterations < max_iter {
        // i: maximal violating index among I_up
        let mut gmax = f64::NEG_INFINITY;
        let mut i = usize::MAX;
        for t in 0..n {
            let in_up = if y[t] > 0.0 { !upper(alpha[t]) } else { !lower(alpha[t]) };
            if in_up {
                let v = -y[t] * grad[t];
                if v > gmax {
                    gmax = v;
                    i = t;
                }
            }
        }
        if i == usize::MAX {
            converged = true;
            break;
        }
        // j: second-order choice among I_low
        let ki = k.row(i);
        let mut gmin = f64::INFINITY;
        let mut best = f64::INFINITY;
        let mut j = usize::MAX;
        for t in 0..n {
            let in_low = if y[t] > 0.0 { !lower(alpha[t]) } else { !upper(alpha[t]) };
            if !in_low {
                continue;
            }
            let v = -y[t] * grad[t];
            gmin = gmin.min(v);
            let b = gmax - v;
            if b > 0.0 {
                let mut a = diag[i] + diag[t] - 2.0 * ki[t];
                if a <= 0.0 {
                    a = TAU;
                }
                let obj = -(b * b) / a;
                if obj < best {
                    best = obj;
                    j = t;
                }
            }
        }
        if gmax - gmin < tol || j == usize::MAX {
            converged = true;
            break;
        }
        iterations += 1;

        let kj = k.row(j);
        let (old_i, old_j) = (alpha[i], alpha[j]);
        let mut quad = diag[i] + diag[j] - 2.0 * ki[j];
        if quad <= 0.0 {
            quad = TAU;
        }
        if y[i] != y[j] {
            let delta = (-grad[i] - grad[j]) / quad;
            let diff = alpha[i] - alpha[j];
            alpha[i] += delta;
            alpha[j] += delta;
            if diff > 0.0 {
                if alpha[j] < 0.0 {
                    alpha[j] = 0.0;
                    alpha[i] = diff;
                }
            } else if alpha[i] < 0.0 {
                alpha[i] = 0.0;
                alpha[j] = -diff;
            }
            if diff > 0.0 {
                if alpha[i] > c {
                    alpha[i] = c;
                    alpha[j] = c - diff;
                }
            } else if alpha[j] > c {
                alpha[j] = c;
                alpha[i] = c + diff;
            }
        } else {
            let delta = (grad[i] - grad[j]) / quad;
            let sum = alpha[i] + alpha[j];
            alpha[i] -= delta;
            alpha[j] += delta;
            if sum > c {
                if alpha[i] > c {
                    alpha[i] = c;
                    alpha[j] = sum - c;
                }
            } else if alpha[j] < 0.0 {
                alpha[j] = 0.0;
                alpha[i] = sum;
            }
            if sum > c {
                if alpha[j] > c {
                    alpha[j] = c;
                    alpha[i] = sum - c;
                }
            } else if alpha[i] < 0.0 {
                alpha[i] = 0.0;
                alpha[j] = sum;
            }
        }

        let (di, dj) = (alpha[i] - old_i, alpha[j] - old_j);
        for t in 0..n {
            grad[t] += y[t] * (y[i] * ki[t] * di + y[j] * kj[t] * dj);
        }
    }
    if !converged {
        log::warn!("SMO stopped after {max_iter} iterations without reaching tolerance {tol}");
    }

    // bias from free vectors, falling back to the midpoint of the feasible range
    let (mut ub, mut lb) = (f64::INFINITY, f64::NEG_INFINITY);
    let (mut free, mut sum) = (0usize, 0.0);
    for t in 0..n {
        let yg = y[t] * grad[t];
        if upper(alpha[t]) {
            if y[t] < 0.0 {
                ub = ub.min(yg);
            } else {
                lb = lb.max(yg);
            }
        } else if lower(alpha[t]) {
            if y[t] > 0.0 {
                ub = ub.min(yg);
            } else {
                lb = lb.max(yg);
            }
        } else {
            free += 1;
            sum += yg;
        }
    }
    let rho = if free > 0 { sum / free as f64 } else { (ub + lb) / 2.0 };

    BinarySolution {
        alpha,
        rho,
        iterations,
        converged,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::classify::kernel::{kernel_from_distances, self_squared_distances};
    use ndarray::array;

    #[test]
    fn two_points_split_evenly() {
        // linear kernel on ±1: α = 0.5 each, ρ = 0
        let k = array![[1.0, -1.0], [-1.0, 1.0]];
        let sol = solve_binary(k.view(), &[1.0, -1.0], 10.0, 1e-6, 1000);
        assert!(sol.converged);
        assert!((sol.alpha[0] - 0.5).abs() < 1e-9);
        assert!((sol.alpha[1] - 0.5).abs() < 1e-9);
        assert!(sol.rho.abs() < 1e-9);
    }

    #[test]
    fn equality_constraint_and_box() {
        let x = array![[0.0, 0.0], [1.0, 0.2], [0.3, 1.0], [2.0, 2.0], [2.5, 1.7], [1.9, 2.6]];
        let y = [1.0, 1.0, -1.0, -1.0, 1.0, -1.0];
        let k = kernel_from_distances(&self_squared_distances(&x), 0.8);
        for c in [0.1, 1.0, 50.0] {
            let sol = solve_binary(k.view(), &y, c, 1e-6, 100_000);
            assert!(sol.converged);
            let s: f64 = sol.alpha.iter().zip(&y).map(|(a, y)| a * y).sum();
            assert!(s.abs() < 1e-9);
            assert!(sol.alpha.iter().all(|&a| (0.0..=c).contains(&a)));
        }
    }
}
