use proptest::prelude::*;
use pulse_core::content::{kmeans, pca_fit_transform, representatives, EmbeddingMatrix, KMeansConfig};

fn matrix() -> impl Strategy<Value = EmbeddingMatrix> {
    (3usize..12, 1usize..7).prop_flat_map(|(n, d)| {
        prop::collection::vec(-5.0f64..5.0, n * d).prop_map(move |v| EmbeddingMatrix::from_vec(n, d, v).unwrap())
    })
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(300))]

    #[test]
    fn pca_components_are_orthonormal_and_ordered(x in matrix()) {
        let r = (x.rows() - 1).min(x.dim());
        let (m, y) = pca_fit_transform(&x, r).unwrap();
        for i in 0..r {
            for j in 0..r {
                let want = if i == j { 1.0 } else { 0.0 };
                prop_assert!((dot(&m.components[i], &m.components[j]) - want).abs() < 1e-8);
            }
        }
        for w in m.eigenvalues.windows(2) {
            prop_assert!(w[0] >= w[1] - 1e-9);
        }
        prop_assert!(m.explained() <= 1.0 + 1e-9);
        // Score variance along each component equals its eigenvalue.
        for c in 0..r {
            let var: f64 = (0..y.rows()).map(|i| y.row(i)[c].powi(2)).sum::<f64>() / (y.rows() - 1) as f64;
            prop_assert!((var - m.eigenvalues[c]).abs() < 1e-8 * m.eigenvalues[0].max(1.0));
        }
    }

    #[test]
    fn full_rank_pca_reconstructs(x in matrix()) {
        let r = (x.rows() - 1).min(x.dim());
        let (m, y) = pca_fit_transform(&x, r).unwrap();
        // With r covering the centred rank the projection is lossless.
        if r == x.dim() || !m.degenerate && m.explained() > 1.0 - 1e-12 {
            let back = m.inverse_transform(&y).unwrap();
            for i in 0..x.rows() {
                for (a, b) in x.row(i).iter().zip(back.row(i)) {
                    prop_assert!((a - b).abs() < 1e-8);
                }
            }
        }
    }

    #[test]
    fn pca_ignores_translation(x in matrix(), shift in -10.0f64..10.0) {
        let r = (x.rows() - 1).min(x.dim());
        let moved = EmbeddingMatrix::from_rows(x.dim(), (0..x.rows()).map(|i| x.row(i).iter().map(|v| v + shift).collect()).collect()).unwrap();
        let (a, _) = pca_fit_transform(&x, r).unwrap();
        let (b, _) = pca_fit_transform(&moved, r).unwrap();
        for (p, q) in a.eigenvalues.iter().zip(&b.eigenvalues) {
            prop_assert!((p - q).abs() < 1e-7 * a.eigenvalues[0].max(1.0));
        }
    }

    #[test]
    fn kmeans_objective_never_rises(x in matrix(), k in 1usize..4, seed in any::<u64>()) {
        let k = k.min(x.rows());
        let m = kmeans(&x, &KMeansConfig { k, seed, max_iter: 100 }).unwrap();
        for w in m.history.windows(2) {
            prop_assert!(w[1] <= w[0] + 1e-9 * w[0].max(1.0));
        }
        prop_assert_eq!(m.assignments.len(), x.rows());
        prop_assert!(m.assignments.iter().all(|&a| a < k));
        let again = kmeans(&x, &KMeansConfig { k, seed, max_iter: 100 }).unwrap();
        prop_assert_eq!(m, again);
    }

    #[test]
    fn representatives_are_nearest_members(x in matrix(), seed in any::<u64>(), n in 1usize..5) {
        let m = kmeans(&x, &KMeansConfig { k: 2, seed, max_iter: 100 }).unwrap();
        for c in 0..2 {
            let reps = representatives(&x, &m, c, n);
            let members = m.members(c);
            prop_assert_eq!(reps.len(), n.min(members.len()));
            let worst = reps.iter().map(|&i| m.distance(&x, i)).fold(0.0, f64::max);
            for i in members.iter().filter(|i| !reps.contains(i)) {
                prop_assert!(m.distance(&x, *i) >= worst - 1e-12);
            }
            prop_assert_eq!(&reps[..reps.len().min(1)], &representatives(&x, &m, c, 1)[..]);
        }
    }
}

#[test]
fn converged_points_sit_with_their_nearest_centroid() {
    let pts: Vec<Vec<f64>> = (0..40).map(|i| vec![(i % 7) as f64, (i / 7) as f64 * 1.3]).collect();
    let x = EmbeddingMatrix::from_rows(2, pts).unwrap();
    let m = kmeans(&x, &KMeansConfig { k: 4, seed: 3, max_iter: 300 }).unwrap();
    for i in 0..x.rows() {
        let own = m.distance(&x, i);
        for c in &m.centroids {
            let d = dot(x.row(i), x.row(i)) - 2.0 * dot(x.row(i), c) + dot(c, c);
            assert!(own * own <= d + 1e-9);
        }
    }
}
