mod common;

use ccf_core::classify::{
    confidence_interval, metrics_from_confusion, rbf_kernel, ConfusionMatrix,
};
use ccf_core::content::{aggregate, gap, normalize_feature, Aggregation, FeatureMap};
use ccf_core::embed::cosine;
use ccf_core::fusion::{BlockKind, FeatureBlocks, FusionModel, PcaModel, Standardizer};
use ccf_core::tags::unique_tags;
use nalgebra::DMatrix;
use ndarray::{Array2, Axis};
use proptest::prelude::*;

fn matrix(rows: usize, cols: usize) -> impl Strategy<Value = Array2<f64>> {
    prop::collection::vec(-10.0f64..10.0, rows * cols)
        .prop_map(move |v| Array2::from_shape_vec((rows, cols), v).unwrap())
}

fn sized_matrix() -> impl Strategy<Value = Array2<f64>> {
    (3usize..12, 1usize..9).prop_flat_map(|(r, c)| matrix(r, c))
}

/// Sample covariance eigenvalues, descending, from nalgebra.
fn reference_eigenvalues(x: &Array2<f64>) -> Vec<f64> {
    let (n, d) = x.dim();
    let mean = x.mean_axis(Axis(0)).unwrap();
    let centered = DMatrix::from_fn(n, d, |i, j| x[[i, j]] - mean[j]);
    let cov = centered.transpose() * &centered / (n as f64 - 1.0);
    let mut ev: Vec<f64> = cov.symmetric_eigen().eigenvalues.iter().copied().collect();
    ev.sort_by(|a, b| b.total_cmp(a));
    ev
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn pca_components_are_orthonormal_and_ordered(x in sized_matrix(), frac in 0.0f64..1.0) {
        let (n, d) = x.dim();
        let bound = (n - 1).min(d);
        let q = 1 + ((bound - 1) as f64 * frac) as usize;
        let pca = PcaModel::fit(&x, q).unwrap();
        let gram = pca.components.dot(&pca.components.t());
        for i in 0..q {
            for j in 0..q {
                let want = if i == j { 1.0 } else { 0.0 };
                prop_assert!((gram[[i, j]] - want).abs() < 1e-6, "CCᵀ[{i},{j}] = {}", gram[[i, j]]);
            }
        }
        prop_assert!(pca.variances.windows(2).all(|w| w[0] + 1e-9 >= w[1]));
        let projected_mean = pca.project(ndarray::ArrayView1::from(&pca.mean)).unwrap();
        prop_assert!(projected_mean.iter().all(|v| v.abs() < 1e-9));
    }

    #[test]
    fn pca_variances_match_a_reference_eigensolver(x in matrix(6, 4)) {
        let pca = PcaModel::fit(&x, 4).unwrap();
        let reference = reference_eigenvalues(&x);
        for (got, want) in pca.variances.iter().zip(&reference) {
            prop_assert!((got - want).abs() < 1e-8 * want.abs().max(1.0), "{got} vs {want}");
        }
        // the variance of each projected training column is its eigenvalue
        let projected: Vec<Vec<f64>> = x.rows().into_iter().map(|r| pca.project(r).unwrap().to_vec()).collect();
        for c in 0..4 {
            let col: Vec<f64> = projected.iter().map(|r| r[c]).collect();
            let m = col.iter().sum::<f64>() / 6.0;
            let var = col.iter().map(|v| (v - m).powi(2)).sum::<f64>() / 5.0;
            prop_assert!((var - pca.variances[c]).abs() < 1e-8 * var.max(1.0));
        }
    }

    #[test]
    fn full_rank_projection_preserves_distances(x in matrix(8, 4)) {
        let pca = PcaModel::fit(&x, 4).unwrap();
        let p: Vec<_> = x.rows().into_iter().map(|r| pca.project(r).unwrap()).collect();
        for i in 0..8 {
            for j in 0..i {
                let before = (&x.row(i) - &x.row(j)).mapv(|v| v * v).sum().sqrt();
                let after = (&p[i] - &p[j]).mapv(|v| v * v).sum().sqrt();
                prop_assert!((before - after).abs() < 1e-6);
            }
        }
    }

    #[test]
    fn standardized_training_columns_are_centred_and_scaled(x in sized_matrix()) {
        let s = Standardizer::fit(&x).unwrap();
        let z = s.apply(&x).unwrap();
        let n = x.nrows() as f64;
        for (c, col) in z.axis_iter(Axis(1)).enumerate() {
            let m = col.sum() / n;
            prop_assert!(m.abs() < 1e-9);
            let sd = (col.mapv(|v| (v - m).powi(2)).sum() / n).sqrt();
            if s.std[c] > 1e-8 {
                prop_assert!((sd - 1.0).abs() < 1e-6, "column {c}: std {sd}");
            } else {
                prop_assert!(col.iter().all(|v| *v == 0.0));
            }
        }
    }

    #[test]
    fn fused_width_is_three_times_the_smallest_block(a in 1usize..7, b in 1usize..7, c in 1usize..7) {
        let n = 10;
        let block = |d: usize, seed: f64| Array2::from_shape_fn((n, d), |(i, j)| ((i * 7 + j * 3) as f64 + seed).sin());
        let ids: Vec<String> = (0..n).map(|i| format!("r{i}")).collect();
        let blocks = FeatureBlocks::new(
            ids,
            vec![(BlockKind::FF, block(c, 0.3)), (BlockKind::TF, block(a, 0.1)), (BlockKind::BF, block(b, 0.2))],
        ).unwrap();
        let model = FusionModel::fit(&blocks).unwrap();
        prop_assert_eq!(model.output_dim(), 3 * a.min(b).min(c));
        prop_assert_eq!(model.transform(&blocks).unwrap().ncols(), 3 * a.min(b).min(c));
        let kinds: Vec<BlockKind> = model.blocks.iter().map(|t| t.kind).collect();
        prop_assert_eq!(kinds, vec![BlockKind::TF, BlockKind::BF, BlockKind::FF]);
    }

    #[test]
    fn accuracy_and_f_score_identities(
        counts in (2usize..5).prop_flat_map(|k| prop::collection::vec(prop::collection::vec(0usize..6, k), k))
    ) {
        let total: usize = counts.iter().flatten().sum();
        prop_assume!(total > 0);
        let cm = ConfusionMatrix { counts: counts.clone() };
        let m = metrics_from_confusion(&cm).unwrap();
        let trace: usize = (0..counts.len()).map(|i| counts[i][i]).sum();
        prop_assert_eq!(m.accuracy, trace as f64 / total as f64);
        prop_assert_eq!(cm.row_sums(), counts.iter().map(|r| r.iter().sum()).collect::<Vec<usize>>());
        for (c, pc) in m.per_class.iter().enumerate() {
            for v in [pc.precision, pc.recall, pc.f_score] {
                prop_assert!((0.0..=1.0).contains(&v));
            }
            if pc.precision > 0.0 && pc.recall > 0.0 {
                let harmonic = 2.0 / (1.0 / pc.precision + 1.0 / pc.recall);
                prop_assert!((pc.f_score - harmonic).abs() < 1e-12, "class {c}");
            }
        }
    }

    #[test]
    fn constant_runs_have_a_zero_width_interval(v in 0.0f64..1.0, n in 2usize..12) {
        let ci = confidence_interval(&vec![v; n], 0.95).unwrap();
        prop_assert_eq!(ci.halfwidth, 0.0);
        prop_assert_eq!(ci.mean, v);
    }

    #[test]
    fn cosine_is_symmetric_bounded_and_scale_free(
        a in prop::collection::vec(-5.0f64..5.0, 1..8),
        seed in prop::collection::vec(-5.0f64..5.0, 8),
        scale in 0.01f64..100.0,
    ) {
        let b = &seed[..a.len()];
        let ab = cosine(&a, b).value;
        prop_assert!((ab - cosine(b, &a).value).abs() <= 1e-12);
        prop_assert!(ab.abs() <= 1.0 + 1e-12);
        if a.iter().any(|x| *x != 0.0) {
            let scaled: Vec<f64> = a.iter().map(|x| x * scale).collect();
            prop_assert!((cosine(&a, &scaled).value - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn rbf_kernel_is_symmetric_and_bounded(
        x in prop::collection::vec(-3.0f64..3.0, 3),
        z in prop::collection::vec(-3.0f64..3.0, 3),
        gamma in 1e-7f64..1.0,
    ) {
        let k = rbf_kernel(&x, &z, gamma);
        prop_assert_eq!(k, rbf_kernel(&z, &x, gamma));
        prop_assert!(k > 0.0 && k <= 1.0);
        prop_assert_eq!(rbf_kernel(&x, &x, gamma), 1.0);
    }

    #[test]
    fn unique_tags_is_idempotent(
        pairs in prop::collection::vec((0usize..6, 0usize..4), 0..12)
    ) {
        let raw: Vec<String> = pairs.iter().map(|(w, r)| format!("w{w}r{r}")).collect();
        let roots: Vec<String> = pairs.iter().map(|(_, r)| format!("r{r}")).collect();
        let once = unique_tags(&raw, &roots).unwrap();
        let once_roots: Vec<String> = once.iter().map(|t| t[t.find('r').unwrap()..].to_string()).collect();
        prop_assert_eq!(unique_tags(&once, &once_roots).unwrap(), once);
    }

    #[test]
    fn gap_is_linear(
        a in prop::collection::vec(-4.0f32..4.0, 2 * 3 * 4),
        b in prop::collection::vec(-4.0f32..4.0, 2 * 3 * 4),
        alpha in -2.0f32..2.0,
        beta in -2.0f32..2.0,
    ) {
        let combo: Vec<f32> = a.iter().zip(&b).map(|(x, y)| alpha * x + beta * y).collect();
        let ga = gap(&FeatureMap::new(2, 3, 4, a).unwrap());
        let gb = gap(&FeatureMap::new(2, 3, 4, b).unwrap());
        let gc = gap(&FeatureMap::new(2, 3, 4, combo).unwrap());
        for c in 0..4 {
            let want = alpha as f64 * ga[c] + beta as f64 * gb[c];
            prop_assert!((gc[c] - want).abs() < 1e-5);
        }
    }

    #[test]
    fn aggregation_orders_and_normalization_bounds(
        vs in prop::collection::vec(prop::collection::vec(-3.0f64..3.0, 5), 1..6)
    ) {
        let max = aggregate(&vs, Aggregation::Max).unwrap();
        let min = aggregate(&vs, Aggregation::Min).unwrap();
        let mean = aggregate(&vs, Aggregation::Mean).unwrap();
        for i in 0..5 {
            prop_assert!(vs.iter().all(|v| max[i] >= v[i] && min[i] <= v[i]));
            prop_assert!(min[i] <= mean[i] + 1e-12 && mean[i] <= max[i] + 1e-12);
        }
        let norm_in: f64 = max.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm_in >= 1e-3 {
            let out = normalize_feature(&max, 1e-7);
            let norm: f64 = out.iter().map(|x| x * x).sum::<f64>().sqrt();
            prop_assert!((1.0 - 1e-4..=1.0).contains(&norm), "{norm}");
        }
    }
}

#[test]
fn analytic_first_component() {
    // points along (1, 1)/√2 with a small alternating orthogonal offset
    let x = Array2::from_shape_fn((41, 2), |(i, j)| {
        let t = i as f64 / 4.0 - 5.0;
        let e = if i % 2 == 0 { 1e-3 } else { -1e-3 };
        t / 2f64.sqrt() + if j == 0 { e } else { -e }
    });
    let pca = PcaModel::fit(&x, 1).unwrap();
    let h = 0.5f64.sqrt();
    assert!((pca.components[[0, 0]] - h).abs() < 1e-3);
    assert!((pca.components[[0, 1]] - h).abs() < 1e-3);
}
