use otod_core::metrics::{auroc, fpr_at_tpr, tpr_threshold};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn brute_auroc(id: &[f64], ood: &[f64]) -> f64 {
    let mut wins = 0.0;
    for &i in id {
        for &o in ood {
            if i > o {
                wins += 1.0;
            } else if i == o {
                wins += 0.5;
            }
        }
    }
    wins / (id.len() * ood.len()) as f64
}

/// Scores on a coarse grid so ties are common.
fn tied_scores(max_len: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec((0i32..20).prop_map(|x| x as f64 * 0.5), 1..max_len)
}

proptest! {
    #[test]
    fn auroc_matches_pairwise_definition(id in tied_scores(120), ood in tied_scores(120)) {
        let fast = auroc(&id, &ood).unwrap();
        prop_assert!((fast - brute_auroc(&id, &ood)).abs() <= 1e-12);
    }

    #[test]
    fn auroc_swap_sums_to_one(id in tied_scores(80), ood in tied_scores(80)) {
        prop_assert_eq!(auroc(&id, &ood).unwrap() + auroc(&ood, &id).unwrap(), 1.0);
    }

    #[test]
    fn metrics_invariant_under_increasing_maps(
        id in prop::collection::vec(-5.0_f64..5.0, 1..100),
        ood in prop::collection::vec(-5.0_f64..5.0, 1..100),
    ) {
        let affine = |xs: &[f64]| xs.iter().map(|x| 2.0 * x + 7.0).collect::<Vec<_>>();
        let expo = |xs: &[f64]| xs.iter().map(|x| x.exp()).collect::<Vec<_>>();
        let base = (auroc(&id, &ood).unwrap(), fpr_at_tpr(&id, &ood, 0.95).unwrap());
        for (i, o) in [(affine(&id), affine(&ood)), (expo(&id), expo(&ood))] {
            prop_assert_eq!(auroc(&i, &o).unwrap(), base.0);
            prop_assert_eq!(fpr_at_tpr(&i, &o, 0.95).unwrap(), base.1);
        }
    }

    #[test]
    fn threshold_is_conservative(id in tied_scores(200), target in 0.01_f64..=1.0) {
        let tau = tpr_threshold(&id, target).unwrap();
        let achieved = id.iter().filter(|&&s| s >= tau).count() as f64 / id.len() as f64;
        prop_assert!(achieved >= target - 1e-9);
        // No larger ID score keeps the target.
        if let Some(next) = id.iter().copied().filter(|&s| s > tau).reduce(f64::min) {
            let above = id.iter().filter(|&&s| s >= next).count() as f64 / id.len() as f64;
            prop_assert!(above < target - 1e-9);
        }
    }

    #[test]
    fn fpr_grows_with_target(id in tied_scores(100), ood in tied_scores(100), t1 in 0.01_f64..1.0, t2 in 0.01_f64..1.0) {
        let (lo, hi) = if t1 <= t2 { (t1, t2) } else { (t2, t1) };
        prop_assert!(fpr_at_tpr(&id, &ood, lo).unwrap() <= fpr_at_tpr(&id, &ood, hi).unwrap());
    }
}

#[test]
fn fpr_of_identical_distributions_is_near_five_percent() {
    let mut rng = ChaCha8Rng::seed_from_u64(31);
    let id: Vec<f64> = (0..10_000).map(|_| rng.random::<f64>()).collect();
    let ood: Vec<f64> = (0..10_000).map(|_| rng.random::<f64>()).collect();
    let fpr = fpr_at_tpr(&id, &ood, 0.95).unwrap();
    assert!((fpr - 0.95).abs() <= 0.02, "fpr {fpr}");
    // The complementary quantile: OOD mass above the 5%-recall threshold.
    let tail = fpr_at_tpr(&id, &ood, 0.05).unwrap();
    assert!((tail - 0.05).abs() <= 0.02, "tail {tail}");
    let a = auroc(&id, &ood).unwrap();
    assert!((a - 0.5).abs() < 0.02);
}
