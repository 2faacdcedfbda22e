use std::collections::BTreeMap;

use otod_core::metrics::auroc;
use otod_core::scoring::{
    fit_mds, gen_score, msp, otod_score, score_batch, softmax, OtodConfig, ScorerSpec,
};
use otod_core::simulate::sample_gaussian;
use otod_core::synthetic::{synthetic_bundle, OodKind, SyntheticSpec};
use otod_core::tensor_io::{DatasetBundle, Dims, Matrix, TensorSet};
use otod_core::wasserstein::w1_part_score;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn nonzero_vec(len: std::ops::Range<usize>) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-8.0_f64..8.0, len)
        .prop_filter("nonzero", |v| v.iter().any(|&x| x != 0.0))
}

proptest! {
    #[test]
    fn fusion_reduces_to_each_part(f in nonzero_vec(2..40), l in nonzero_vec(2..12), t in 0.1_f64..20.0) {
        let feat = OtodConfig::new([1.0, 0.0, 0.0], t).unwrap();
        let logit = OtodConfig::new([0.0, 1.0, 0.0], t).unwrap();
        let prob = OtodConfig::new([0.0, 0.0, 1.0], 1.0).unwrap();
        prop_assert!((otod_score(&f, &l, &feat).unwrap() - w1_part_score(&f).unwrap()).abs() <= 1e-12);
        prop_assert!((otod_score(&f, &l, &logit).unwrap() - w1_part_score(&l).unwrap()).abs() <= 1e-12);
        let p = softmax(&l, 1.0).unwrap();
        prop_assert!((otod_score(&f, &l, &prob).unwrap() - w1_part_score(&p).unwrap()).abs() <= 1e-12);
    }

    #[test]
    fn otod_ignores_feature_scale(f in nonzero_vec(2..40), l in nonzero_vec(2..12), c in 0.01_f64..50.0) {
        let cfg = OtodConfig::uniform(3.0).unwrap();
        let scaled: Vec<f64> = f.iter().map(|x| x * c).collect();
        prop_assert!((otod_score(&f, &l, &cfg).unwrap() - otod_score(&scaled, &l, &cfg).unwrap()).abs() < 1e-12);
    }

    #[test]
    fn softmax_based_scores_ignore_logit_shift(l in nonzero_vec(2..12), c in -30.0_f64..30.0, t in 0.5_f64..10.0) {
        let shifted: Vec<f64> = l.iter().map(|x| x + c).collect();
        prop_assert!((msp(&l).unwrap() - msp(&shifted).unwrap()).abs() < 1e-12);
        let m = l.len();
        prop_assert!((gen_score(&l, 0.1, m).unwrap() - gen_score(&shifted, 0.1, m).unwrap()).abs() < 1e-12);
        let p = w1_part_score(&softmax(&l, t).unwrap()).unwrap();
        let ps = w1_part_score(&softmax(&shifted, t).unwrap()).unwrap();
        prop_assert!((p - ps).abs() < 1e-12);
    }

    #[test]
    fn softmax_is_a_distribution(l in prop::collection::vec(-500.0_f64..500.0, 1..30), t in 0.01_f64..1e6) {
        let p = softmax(&l, t).unwrap();
        prop_assert!(p.iter().all(|&x| x >= 0.0));
        prop_assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-9);
    }
}

fn set(features: Vec<Vec<f32>>, logits: Vec<Vec<f32>>) -> TensorSet {
    TensorSet::new(
        Matrix::from_rows(&features).unwrap(),
        Matrix::from_rows(&logits).unwrap(),
        None,
    )
    .unwrap()
}

fn auroc_for(spec: &ScorerSpec, bundle: &DatasetBundle) -> f64 {
    let scorer = spec.build::<f64>(bundle).unwrap();
    let id = score_batch(&bundle.id_test, &scorer).unwrap();
    let ood = score_batch(&bundle.ood_sets[0].1, &scorer).unwrap();
    auroc(&id.scores, &ood.scores).unwrap()
}

#[test]
fn baselines_rank_well_separated_id_above_ood() {
    let spec = SyntheticSpec {
        ood: vec![("far".into(), OodKind::Far)],
        ..SyntheticSpec::default()
    };
    let bundle = synthetic_bundle(&spec).unwrap();
    let scorers = [
        ScorerSpec::Msp,
        ScorerSpec::Ebo { temperature: 1.0 },
        ScorerSpec::Gen {
            gamma: 0.1,
            top_m: None,
        },
        ScorerSpec::Mds { epsilon: None },
        ScorerSpec::Klm { epsilon: None },
    ];
    for s in &scorers {
        let a = auroc_for(s, &bundle);
        assert!(a > 0.9, "{} auroc {a}", s.id());
    }
}

#[test]
fn otod_ranks_flat_id_above_spiky_ood() {
    // Near-constant positive vectors sit on the mean reference; spiky ones do not.
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut draw = |spiky: bool| {
        let features = (0..200)
            .map(|_| {
                (0..32)
                    .map(|j| {
                        let base = if spiky && j % 7 == 0 { 6.0 } else { 1.0 };
                        base + 0.05 * rng.random::<f32>()
                    })
                    .collect()
            })
            .collect();
        let logits = (0..200)
            .map(|_| {
                (0..8)
                    .map(|j| {
                        let base = if spiky && j == 2 { 9.0 } else { 0.5 };
                        base + 0.05 * rng.random::<f32>()
                    })
                    .collect()
            })
            .collect();
        set(features, logits)
    };
    let id = draw(false);
    let ood = draw(true);
    let bundle = DatasetBundle {
        dims: Dims { d: 32, k: 8 },
        id_train: None,
        id_test: id,
        ood_sets: vec![("spiky".into(), ood)],
        meta: BTreeMap::new(),
    };
    for t in [1.0, 3.0, 10.0] {
        let a = auroc_for(
            &ScorerSpec::Otod {
                alpha: [1.0 / 3.0; 3],
                temperature: t,
            },
            &bundle,
        );
        assert!(a > 0.9, "T={t} auroc {a}");
    }
}

#[test]
fn fitted_means_are_consistent_with_the_generator() {
    let d = 3;
    let n = 2000;
    let mus = [vec![1.0, -2.0, 0.5], vec![-1.0, 0.0, 3.0]];
    let sigma = vec![1.0, 0.3, 0.0, 0.3, 2.0, 0.1, 0.0, 0.1, 0.5];
    let mut features = Vec::new();
    let mut labels = Vec::new();
    for (c, mu) in mus.iter().enumerate() {
        for row in sample_gaussian(mu, &sigma, n, 100 + c as u64).unwrap() {
            features.push(row.iter().map(|&x| x as f32).collect::<Vec<f32>>());
            labels.push(c as u32);
        }
    }
    let logits: Vec<Vec<f32>> = labels
        .iter()
        .map(|&c| vec![c as f32, 1.0 - c as f32])
        .collect();
    let ts = TensorSet::new(
        Matrix::from_rows(&features).unwrap(),
        Matrix::from_rows(&logits).unwrap(),
        Some(labels),
    )
    .unwrap();
    let stats = fit_mds(&ts, 1e-6_f64).unwrap();
    for (mu, fitted) in mus.iter().zip(&stats.class_means) {
        for j in 0..d {
            let tol = 3.0 * sigma[j * d + j].sqrt() / (n as f64).sqrt();
            assert!(
                (mu[j] - fitted[j]).abs() < tol,
                "coord {j}: {} vs {}",
                mu[j],
                fitted[j]
            );
        }
    }
    // Precision is symmetric positive definite.
    let p = &stats.precision;
    for i in 0..d {
        assert!(p[i * d + i] > 0.0);
        for j in 0..d {
            assert_eq!(p[i * d + j], p[j * d + i]);
        }
    }
}

#[test]
fn f32_and_f64_kernels_agree() {
    let f = [0.3_f32, 1.7, 0.0, 2.2, 0.9];
    let l = [1.5_f32, -0.5, 0.25];
    let s32 = otod_score(&f, &l, &OtodConfig::uniform(3.0_f32).unwrap()).unwrap();
    let f64v: Vec<f64> = f.iter().map(|&x| x as f64).collect();
    let l64: Vec<f64> = l.iter().map(|&x| x as f64).collect();
    let s64 = otod_score(&f64v, &l64, &OtodConfig::uniform(3.0).unwrap()).unwrap();
    assert!((s32 as f64 - s64).abs() < 1e-5);
}
