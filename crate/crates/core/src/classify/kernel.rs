use ndarray::{Array2, Axis};

/// `exp(−γ‖x − z‖²)`.
pub fn rbf_kernel(x: &[f64], z: &[f64], gamma: f64) -> f64 {
    debug_assert_eq!(x.len(), z.len());
    debug_assert!(gamma > 0.0);
    let d: f64 = x.iter().zip(z).map(|(a, b)| (a - b) * (a - b)).sum();
    (-gamma * d).exp()
}

/// Squared Euclidean distances between the rows of `a` and the rows of `b`.
pub fn squared_distances(a: &Array2<f64>, b: &Array2<f64>) -> Array2<f64> {
    let na = a.map_axis(Axis(1), |r| r.dot(&r));
    let nb = b.map_axis(Axis(1), |r| r.dot(&r));
    let mut d = a.dot(&b.t());
    for ((i, j), v) in d.indexed_iter_mut() {
        *v = (na[i] + nb[j] - 2.0 * *v).max(0.0);
    }
    d
}

/// Squared distances among the rows of `a`, with an exact zero diagonal.
pub fn self_squared_distances(a: &Array2<f64>) -> Array2<f64> {
    let mut d = squared_distances(a, a);
    for i in 0..d.nrows() {
        d[[i, i]] = 0.0;
    }
    d
}

pub fn kernel_from_distances(d: &Array2<f64>, gamma: f64) -> Array2<f64> {
    d.mapv(|v| (-gamma * v).exp())
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn kernel_examples() {
        assert_eq!(rbf_kernel(&[1.0, 2.0], &[1.0, 2.0], 0.7), 1.0);
        assert!((rbf_kernel(&[0.0, 0.0], &[1.0, 0.0], 1.0) - (-1.0f64).exp()).abs() < 1e-15);
        assert!((rbf_kernel(&[0.0], &[30.0], 1e-12) - 1.0).abs() < 1e-9);
    }

    #[test]
    fn distance_matrix_matches_pairwise() {
        let a = array![[0.0, 1.0], [2.0, -1.0], [0.5, 0.5]];
        let b = array![[1.0, 1.0], [0.0, 0.0]];
        let d = squared_distances(&a, &b);
        for i in 0..3 {
            for j in 0..2 {
                let direct: f64 = (0..2).map(|k| (a[[i, k]] - b[[j, k]]).powi(2)).sum();
                assert!((d[[i, j]] - direct).abs() < 1e-12);
            }
        }
        let s = self_squared_distances(&a);
        assert!((0..3).all(|i| s[[i, i]] == 0.0));
        let k = kernel_from_distances(&s, 0.5);
        assert!((k[[0, 1]] - rbf_kernel(&[0.0, 1.0], &[2.0, -1.0], 0.5)).abs() < 1e-12);
    }
}
