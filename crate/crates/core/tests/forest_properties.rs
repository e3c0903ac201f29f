use assoclab::features::{Encoders, FeatureVector, SpeedLabel};
use assoclab::forest::{train, ForestModel, ForestParams, Node};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random_vector<R: Rng>(rng: &mut R) -> FeatureVector {
    FeatureVector {
        hour_of_day: rng.random_range(0..24),
        rssi_dbm: rng.random_range(-100..=-55),
        device_model: rng.random_range(0..12),
        ap_model: rng.random_range(0..40),
        encrypted: rng.random_bool(0.6),
    }
}

/// SLOW mostly for weak signal and a few bad AP models, with label noise.
fn dataset(n: usize, noise: f64, seed: u64) -> (Vec<FeatureVector>, Vec<SpeedLabel>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let x: Vec<FeatureVector> = (0..n).map(|_| random_vector(&mut rng)).collect();
    let y = x
        .iter()
        .map(|v| {
            let slow = v.rssi_dbm < -85
                || v.ap_model % 7 == 0
                || (v.device_model == 3 && v.hour_of_day > 17);
            if rng.random_bool(noise) != slow {
                SpeedLabel::Slow
            } else {
                SpeedLabel::Fast
            }
        })
        .collect();
    (x, y)
}

fn encoders() -> Encoders {
    Encoders::fit([("dev", "ap")], 1).0
}

fn probes(n: usize, seed: u64) -> Vec<FeatureVector> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n).map(|_| random_vector(&mut rng)).collect()
}

#[test]
fn single_tree_forest_is_its_tree() {
    let (x, y) = dataset(2_000, 0.05, 1);
    let params = ForestParams {
        n_trees: 1,
        bootstrap: false,
        rng_seed: 4,
        ..Default::default()
    };
    let m = train(&x, &y, encoders(), &params).unwrap();
    for v in probes(1_000, 2) {
        let (label, score) = m.predict(&v);
        assert_eq!(label, m.trees[0].vote(&v));
        assert!(score == 0.0 || score == 1.0);
    }
    // Tree i depends only on (seed, i), not on the forest size.
    let bigger = train(
        &x,
        &y,
        encoders(),
        &ForestParams {
            n_trees: 4,
            ..params
        },
    )
    .unwrap();
    assert_eq!(bigger.trees[0], m.trees[0]);
}

#[test]
fn unbootstrapped_full_tree_fits_consistent_data() {
    let (x, y) = dataset(1_500, 0.0, 3);
    let params = ForestParams {
        n_trees: 1,
        bootstrap: false,
        features_per_split: FeatureVector::N_FEATURES,
        ..Default::default()
    };
    let m = train(&x, &y, encoders(), &params).unwrap();
    let correct = x
        .iter()
        .zip(&y)
        .filter(|(v, l)| m.predict(v).0 == **l)
        .count();
    assert_eq!(correct, x.len());
}

#[test]
fn tree_order_does_not_matter() {
    let (x, y) = dataset(2_000, 0.1, 5);
    let m = train(
        &x,
        &y,
        encoders(),
        &ForestParams {
            n_trees: 25,
            rng_seed: 9,
            ..Default::default()
        },
    )
    .unwrap();
    let mut shuffled = m.clone();
    shuffled.trees.reverse();
    shuffled.trees.rotate_left(7);
    for v in probes(1_000, 6) {
        assert_eq!(m.predict(&v), shuffled.predict(&v));
    }
}

#[test]
fn depth_is_bounded() {
    // Pure noise forces deep trees.
    let (x, y) = dataset(4_000, 0.5, 7);
    let m = train(
        &x,
        &y,
        encoders(),
        &ForestParams {
            n_trees: 10,
            ..Default::default()
        },
    )
    .unwrap();
    assert!(m.max_depth() <= 90);
    let shallow = train(
        &x,
        &y,
        encoders(),
        &ForestParams {
            n_trees: 10,
            max_depth: 4,
            ..Default::default()
        },
    )
    .unwrap();
    assert!(shallow.max_depth() <= 4);
    for t in &shallow.trees {
        assert!(t.depth() <= 4);
        assert!(t.n_leaves() <= 16);
    }
}

#[test]
fn save_and_load_preserve_predictions() {
    let (x, y) = dataset(3_000, 0.1, 8);
    let m = train(
        &x,
        &y,
        encoders(),
        &ForestParams {
            n_trees: 30,
            rng_seed: 1,
            ..Default::default()
        },
    )
    .unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("model.bin");
    m.save(&path).unwrap();
    let back = ForestModel::load(&path).unwrap();
    assert_eq!(back, m);
    for v in probes(1_000, 9) {
        assert_eq!(back.predict(&v), m.predict(&v));
    }
}

#[test]
fn fixed_seed_gives_identical_models() {
    let (x, y) = dataset(2_500, 0.1, 10);
    let p = ForestParams {
        n_trees: 20,
        rng_seed: 33,
        ..Default::default()
    };
    let a = train(&x, &y, encoders(), &p).unwrap();
    let b = train(&x, &y, encoders(), &p).unwrap();
    assert_eq!(a, b);
    assert_eq!(a.to_bytes(), b.to_bytes());
    let c = train(&x, &y, encoders(), &ForestParams { rng_seed: 34, ..p }).unwrap();
    assert_ne!(a.trees, c.trees);
}

#[test]
fn heavier_fast_weight_predicts_more_fast() {
    // Few distinct vectors, so leaves hold mixed labels and the weight decides.
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    let x: Vec<FeatureVector> = (0..3_000)
        .map(|_| FeatureVector {
            hour_of_day: rng.random_range(0..6),
            rssi_dbm: -60,
            device_model: rng.random_range(0..3),
            ap_model: 1,
            encrypted: true,
        })
        .collect();
    let y: Vec<SpeedLabel> = x
        .iter()
        .map(|v| {
            let p_slow = 0.15 + 0.12 * v.hour_of_day as f64;
            if rng.random_bool(p_slow) {
                SpeedLabel::Slow
            } else {
                SpeedLabel::Fast
            }
        })
        .collect();
    let fast_count = |w: f64| {
        let m = train(
            &x,
            &y,
            encoders(),
            &ForestParams {
                n_trees: 15,
                class_weight_fast: w,
                ..Default::default()
            },
        )
        .unwrap();
        x.iter()
            .filter(|v| m.predict(v).0 == SpeedLabel::Fast)
            .count()
    };
    let counts: Vec<usize> = [0.1, 0.3, 0.6, 1.0].into_iter().map(fast_count).collect();
    assert!(counts.windows(2).all(|w| w[0] <= w[1]), "{counts:?}");
    assert!(counts[0] < counts[3], "{counts:?}");
}

#[test]
fn leaves_hold_their_training_mass() {
    let (x, y) = dataset(1_000, 0.2, 13);
    let m = train(
        &x,
        &y,
        encoders(),
        &ForestParams {
            n_trees: 1,
            bootstrap: false,
            ..Default::default()
        },
    )
    .unwrap();
    let (mut wf, mut ws) = (0.0, 0.0);
    for n in &m.trees[0].nodes {
        if let Node::Leaf { w_fast, w_slow } = n {
            wf += w_fast;
            ws += w_slow;
        }
    }
    let n_slow = y.iter().filter(|l| **l == SpeedLabel::Slow).count() as f64;
    let n_fast = y.len() as f64 - n_slow;
    assert!((ws - n_slow).abs() < 1e-6);
    assert!((wf - 0.3 * n_fast).abs() < 1e-6);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn scores_are_vote_fractions(seed in any::<u64>(), n_trees in 1usize..12) {
        let (x, y) = dataset(300, 0.15, seed);
        let m = train(&x, &y, encoders(), &ForestParams { n_trees, rng_seed: seed, ..Default::default() }).unwrap();
        for v in probes(50, seed ^ 1) {
            let s = m.score(&v);
            let slow = m.trees.iter().filter(|t| t.vote(&v) == SpeedLabel::Slow).count();
            prop_assert_eq!(s, slow as f64 / n_trees as f64);
            prop_assert_eq!(m.predict(&v).0 == SpeedLabel::Slow, s >= 0.5);
        }
    }
}
