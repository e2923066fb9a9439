mod common;

use common::*;
use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use spd_motion::network::{
    backward, forward_partitioned, forward_traced, knn_classify, sample_pairs, train, FeatureVector, Gallery, NetworkConfig, NetworkParams, TrainConfig,
};
use spd_motion::skeleton::PartitionScheme;
use spd_motion::spd::orthonormality_error;

fn scheme() -> PartitionScheme {
    PartitionScheme::new(vec![vec![0, 1, 2], vec![2, 3, 4, 5]], 6).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn rectified_matrices_stay_above_epsilon(seed in any::<u64>(), frames in 6usize..14, eps in 1e-6..1e-2f64) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let seq = partitioned(&random_sequence(&mut rng, frames, 6), &scheme());
        let cfg = NetworkConfig { epsilon: eps, spdc_dim: 4, feature_dim: 5, ..NetworkConfig::default() };
        let params = NetworkParams::init(2, &cfg, seed).unwrap();
        let trace = forward_traced(&seq, &params).unwrap();
        prop_assert!(trace.rectified_eigenvalues().iter().all(|&l| l >= eps * (1.0 - 1e-9)));
        for m in trace.rectified_matrices() {
            prop_assert!(spd_motion::spd::is_spd(m, 0.0));
        }
    }

    #[test]
    fn forward_is_bit_identical_on_rerun(seed in any::<u64>(), frames in 6usize..14) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let seq = partitioned(&random_sequence(&mut rng, frames, 6), &scheme());
        let params = NetworkParams::init(2, &NetworkConfig { spdc_dim: 4, feature_dim: 5, ..NetworkConfig::default() }, seed).unwrap();
        let a = forward_partitioned(&seq, &params).unwrap();
        let b = forward_partitioned(&seq, &params).unwrap();
        prop_assert_eq!(a.0.iter().map(|v| v.to_bits()).collect::<Vec<_>>(), b.0.iter().map(|v| v.to_bits()).collect::<Vec<_>>());
    }

    #[test]
    fn nearest_neighbour_ignores_global_isometries(
        (dim, feats, query, rot, shift) in (1usize..6).prop_flat_map(|d| (
            Just(d),
            prop::collection::vec(prop::collection::vec(-3.0..3.0f64, d), 1..12),
            prop::collection::vec(-3.0..3.0f64, d),
            prop::collection::vec(-1.0..1.0f64, d * d),
            prop::collection::vec(-10.0..10.0f64, d),
        ))
    ) {
        let q = DMatrix::from_vec(dim, dim, rot).qr().q();
        let shift = DVector::from_vec(shift);
        let moved = |v: &[f64]| FeatureVector((&q * DVector::from_column_slice(v) + &shift).iter().copied().collect());
        let gallery = Gallery { entries: feats.iter().enumerate().map(|(i, f)| (FeatureVector(f.clone()), i as u32)).collect() };
        let image = Gallery { entries: feats.iter().enumerate().map(|(i, f)| (moved(f), i as u32)).collect() };
        // skip near ties, where rounding may legitimately flip the winner
        let mut d: Vec<f64> = feats.iter().map(|f| FeatureVector(f.clone()).distance(&FeatureVector(query.clone()))).collect();
        d.sort_by(f64::total_cmp);
        prop_assume!(d.len() < 2 || d[1] - d[0] > 1e-9);
        prop_assert_eq!(knn_classify(&FeatureVector(query.clone()), &gallery).unwrap(), knn_classify(&moved(&query), &image).unwrap());
    }
}

#[test]
fn training_keeps_branches_tied_and_weights_orthonormal() {
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    let scheme = scheme();
    let data: Vec<_> = (0..8).map(|i| partitioned(&random_sequence(&mut rng, 8 + i % 3, 6), &scheme)).collect();
    let labels: Vec<u32> = (0..8).map(|i| i % 2).collect();
    let pairs = sample_pairs(&labels, 24, 0.5, 3).unwrap();
    let mut params = NetworkParams::init(2, &NetworkConfig { spdc_dim: 4, feature_dim: 4, ..NetworkConfig::default() }, 4).unwrap();
    for epoch in 0..4 {
        let cfg = TrainConfig { epochs: 1, seed: epoch, learning_rate: 0.05, ..TrainConfig::default() };
        params = train(&data, &pairs, params, &cfg).unwrap().0;
        for w in &params.stiefel {
            assert!(orthonormality_error(w.as_matrix()) < 1e-10, "epoch {epoch}");
        }
        // both branches share the parameters: identical inputs give a zero distance
        let g = backward(&params, &data[0], &data[0], true).unwrap();
        assert_eq!(g.loss, 0.0, "epoch {epoch}");
        assert_eq!(forward_partitioned(&data[1], &params).unwrap(), forward_partitioned(&data[1], &params).unwrap());
    }
}
