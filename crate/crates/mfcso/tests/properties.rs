//! Randomized invariant checks for the library pieces.

use proptest::prelude::*;

use mfcso::data::{stratified_kfold, Dataset};
use mfcso::engine::{cso_plain_update, cso_transfer_update, decode_mask};
use mfcso::filters::{knee_select, pcc_weights, tv_weights, FeatureWeights, FilterMethod};
use mfcso::knn::{balanced_error_rate, masked_cv_error, FeatureMask};

fn labels_strategy() -> impl Strategy<Value = Vec<usize>> {
    // 2-3 classes, at least 2 of each.
    (2usize..=3).prop_flat_map(|c| {
        proptest::collection::vec(0usize..c, 4 * c..32).prop_map(move |mut v| {
            for class in 0..c {
                for slot in 0..2 {
                    v[class * 2 + slot] = class;
                }
            }
            v
        })
    })
}

proptest! {
    #[test]
    fn stratification_balances_every_class(labels in labels_strategy(), k in 2usize..6, seed in 0u64..50) {
        let counts = {
            let c = labels.iter().max().unwrap() + 1;
            let mut v = vec![0usize; c];
            for &l in &labels { v[l] += 1; }
            v
        };
        prop_assume!(counts.iter().all(|&n| n >= 2));
        let folds = stratified_kfold(&labels, k, seed).unwrap();
        let k_eff = folds.k();
        prop_assert_eq!(k_eff, k.min(*counts.iter().min().unwrap()));
        // Per class, fold occupancy differs by at most one.
        for class in 0..counts.len() {
            let mut per_fold = vec![0usize; k_eff];
            for (i, &l) in labels.iter().enumerate() {
                if l == class {
                    per_fold[folds.fold_of()[i]] += 1;
                }
            }
            let lo = per_fold.iter().min().unwrap();
            let hi = per_fold.iter().max().unwrap();
            prop_assert!(hi - lo <= 1);
        }
    }

    #[test]
    fn knee_selection_is_nonempty_and_in_range(weights in proptest::collection::vec(0.0f64..1.0, 1..60)) {
        let n = weights.len();
        let fw = FeatureWeights { method: FilterMethod::Tv, weights };
        let sel = knee_select(&fw).unwrap();
        prop_assert!(!sel.is_empty());
        prop_assert!(sel.len() <= n);
        prop_assert!(sel.windows(2).all(|w| w[0] < w[1]));
        prop_assert!(sel.iter().all(|&j| j < n));
    }

    #[test]
    fn decode_mask_is_monotone_in_delta(position in proptest::collection::vec(0.0f64..1.0, 1..40), lo in 0.0f64..1.0, hi in 0.0f64..1.0) {
        let (lo, hi) = if lo <= hi { (lo, hi) } else { (hi, lo) };
        let loose = decode_mask(&position, lo);
        let tight = decode_mask(&position, hi);
        // Raising the threshold can only clear bits.
        for (a, b) in loose.bits().iter().zip(tight.bits()) {
            prop_assert!(*a || !*b);
        }
    }

    #[test]
    fn balanced_error_is_permutation_invariant(seed in 0u64..1000) {
        use rand::seq::SliceRandom;
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let n = rng.gen_range(6..40);
        let c = rng.gen_range(2..4);
        let truth: Vec<usize> = (0..n).map(|i| i % c).collect();
        let pred: Vec<usize> = (0..n).map(|_| rng.gen_range(0..c)).collect();
        let base = balanced_error_rate::<f64>(&pred, &truth, c).unwrap().error;
        let mut idx: Vec<usize> = (0..n).collect();
        idx.shuffle(&mut rng);
        let truth2: Vec<usize> = idx.iter().map(|&i| truth[i]).collect();
        let pred2: Vec<usize> = idx.iter().map(|&i| pred[i]).collect();
        let shuffled = balanced_error_rate::<f64>(&pred2, &truth2, c).unwrap().error;
        prop_assert_eq!(base, shuffled);
    }

    #[test]
    fn tv_and_pcc_respond_to_scaling_as_specified(seed in 0u64..500, scale in 1.5f64..20.0) {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let h = rng.gen_range(6..24);
        let rows: Vec<Vec<f64>> = (0..h).map(|_| vec![rng.gen(), rng.gen()]).collect();
        let labels: Vec<usize> = (0..h).map(|i| i % 2).collect();
        let scaled_rows: Vec<Vec<f64>> = rows.iter().map(|r| vec![r[0] * scale, r[1]]).collect();
        let d = Dataset::new("a", rows, labels.clone()).unwrap();
        let s = Dataset::new("b", scaled_rows, labels).unwrap();
        // TV scales quadratically; PCC is scale-free.
        let tv_a = tv_weights(&d).weights[0];
        let tv_s = tv_weights(&s).weights[0];
        prop_assert!((tv_s - tv_a * scale * scale).abs() <= 1e-9 * tv_s.abs().max(1.0));
        let pcc_a = pcc_weights(&d).weights[0];
        let pcc_s = pcc_weights(&s).weights[0];
        prop_assert!((pcc_a - pcc_s).abs() < 1e-9);
    }

    #[test]
    fn cso_updates_stay_in_bounds(
        dim in 1usize..12,
        seed in 0u64..1000,
    ) {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let mut pos: Vec<f64> = (0..dim).map(|_| rng.gen()).collect();
        let mut vel: Vec<f64> = (0..dim).map(|_| rng.gen_range(-2.0..2.0)).collect();
        let winner: Vec<f64> = (0..dim).map(|_| rng.gen()).collect();
        let other: Vec<f64> = (0..dim).map(|_| rng.gen()).collect();
        let r = (rng.gen(), rng.gen(), rng.gen());
        if seed % 2 == 0 {
            cso_plain_update(&mut pos, &mut vel, &winner, &other, rng.gen::<f64>(), r);
        } else {
            cso_transfer_update(&mut pos, &mut vel, &winner, &other, r);
        }
        prop_assert!(pos.iter().all(|&x| (0.0..=1.0).contains(&x)));
    }

    #[test]
    fn empty_mask_cv_error_is_rejected(seed in 0u64..100) {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let rows: Vec<Vec<f64>> = (0..8).map(|_| vec![rng.gen(), rng.gen()]).collect();
        let labels: Vec<usize> = (0..8).map(|i| i % 2).collect();
        let d = Dataset::new("t", rows, labels).unwrap();
        let folds = stratified_kfold(d.labels(), 2, seed).unwrap();
        let mask = FeatureMask::from_bits(vec![false, false]);
        prop_assert!(masked_cv_error(&d, &mask, &folds).is_err());
    }
}

/// The f32 instantiation follows the same RNG schedule as f64: the selected
/// sets coincide on well-separated data.
#[test]
fn f32_and_f64_runs_agree_on_clean_data() {
    use mfcso::engine::{run, AlgorithmConfig};
    use mfcso::harness::{synth_dataset, SyntheticSpec};

    let spec = SyntheticSpec {
        n_features: 30,
        n_informative: 6,
        n_samples: 40,
        n_classes: 2,
        noise: 0.1,
        seed: 21,
    };
    let cfg = AlgorithmConfig {
        population: 16,
        iterations: 8,
        inner_folds: 5,
        relieff_h: 3,
        seed: 2,
        ..AlgorithmConfig::default()
    };
    let (d64, _) = synth_dataset::<f64>(&spec).unwrap();
    let (d32, _) = synth_dataset::<f32>(&spec).unwrap();
    let r64 = run(&cfg, &d64).unwrap();
    let r32 = run(&cfg, &d32).unwrap();
    assert_eq!(r64.selected, r32.selected);
    assert_eq!(r64.best_task, r32.best_task);
}
