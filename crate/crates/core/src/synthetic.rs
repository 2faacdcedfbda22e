//! Seeded synthetic bundles with a linear "classifier head", used for fixtures and
//! desk-scale calibration checks.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor_io::{DatasetBundle, Dims, Matrix, TensorSet};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OodKind {
    /// Same distribution as the ID test split.
    Same,
    /// Midpoints between two class means.
    Near,
    /// No class structure and inflated noise.
    Far,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticSpec {
    pub d: usize,
    pub k: usize,
    pub n_train_per_class: usize,
    pub n_test: usize,
    pub n_ood: usize,
    pub ood: Vec<(String, OodKind)>,
    pub seed: u64,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        Self {
            d: 16,
            k: 4,
            n_train_per_class: 50,
            n_test: 200,
            n_ood: 200,
            ood: vec![("near".into(), OodKind::Near), ("far".into(), OodKind::Far)],
            seed: 0,
        }
    }
}

const CLASS_SEPARATION: f64 = 2.0;
const FEATURE_NOISE: f64 = 0.5;
const FAR_NOISE: f64 = 1.5;
const LOGIT_SCALE: f64 = 1.5;
const LOGIT_NOISE: f64 = 0.2;

struct Head {
    means: Vec<Vec<f64>>,
    directions: Vec<Vec<f64>>,
}

impl Head {
    fn new(d: usize, k: usize) -> Self {
        let means: Vec<Vec<f64>> = (0..k)
            .map(|c| {
                (0..d)
                    .map(|j| {
                        if j % k == c {
                            1.0 + CLASS_SEPARATION
                        } else {
                            1.0
                        }
                    })
                    .collect()
            })
            .collect();
        let centroid: Vec<f64> = (0..d)
            .map(|j| means.iter().map(|m| m[j]).sum::<f64>() / k as f64)
            .collect();
        let directions = means
            .iter()
            .map(|m| {
                let diff: Vec<f64> = m.iter().zip(&centroid).map(|(a, b)| a - b).collect();
                let norm = diff.iter().map(|x| x * x).sum::<f64>().sqrt().max(1e-12);
                diff.into_iter().map(|x| x / norm).collect()
            })
            .collect();
        Self { means, directions }
    }

    fn logits<R: Rng>(&self, f: &[f64], rng: &mut R) -> Vec<f64> {
        self.directions
            .iter()
            .map(|w| {
                let z: f64 = rng.sample(StandardNormal);
                LOGIT_SCALE * w.iter().zip(f).map(|(a, b)| a * b).sum::<f64>() + LOGIT_NOISE * z
            })
            .collect()
    }
}

fn relu_sample<R: Rng>(mu: &[f64], noise: f64, rng: &mut R) -> Vec<f64> {
    let v: Vec<f64> = mu
        .iter()
        .map(|&m| (m + noise * rng.sample::<f64, _>(StandardNormal)).max(0.0))
        .collect();
    if v.iter().all(|&x| x == 0.0) {
        // Keep every feature vector usable by normalizing scorers.
        let mut v = v;
        v[0] = 1e-3;
        return v;
    }
    v
}

fn build_set<R: Rng>(
    head: &Head,
    n: usize,
    kind: OodKind,
    labeled: bool,
    per_class: Option<usize>,
    rng: &mut R,
) -> Result<TensorSet> {
    let k = head.means.len();
    let d = head.means[0].len();
    let mut features = Vec::with_capacity(n);
    let mut logits = Vec::with_capacity(n);
    let mut labels = Vec::with_capacity(n);
    for i in 0..n {
        let class = match per_class {
            Some(p) => i / p,
            None => rng.random_range(0..k),
        };
        let f = match kind {
            OodKind::Same => relu_sample(&head.means[class], FEATURE_NOISE, rng),
            OodKind::Near => {
                let other = (class + 1 + rng.random_range(0..k - 1)) % k;
                let mid: Vec<f64> = head.means[class]
                    .iter()
                    .zip(&head.means[other])
                    .map(|(a, b)| 0.5 * (a + b))
                    .collect();
                relu_sample(&mid, FEATURE_NOISE, rng)
            }
            OodKind::Far => relu_sample(&vec![1.0; d], FAR_NOISE, rng),
        };
        logits.push(
            head.logits(&f, rng)
                .into_iter()
                .map(|x| x as f32)
                .collect::<Vec<f32>>(),
        );
        features.push(f.into_iter().map(|x| x as f32).collect::<Vec<f32>>());
        labels.push(class as u32);
    }
    TensorSet::new(
        Matrix::from_rows(&features)?,
        Matrix::from_rows(&logits)?,
        labeled.then_some(labels),
    )
}

fn split_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Generates a labeled train split, a test split and the requested OOD splits.
pub fn synthetic_bundle(spec: &SyntheticSpec) -> Result<DatasetBundle> {
    if spec.d < 2 || spec.k < 2 {
        return Err(Error::InvalidConfig(
            "synthetic bundles need d >= 2 and K >= 2".into(),
        ));
    }
    if spec.n_train_per_class < 2 || spec.n_test == 0 || spec.n_ood == 0 {
        return Err(Error::InvalidConfig(
            "synthetic split sizes are too small".into(),
        ));
    }
    let head = Head::new(spec.d, spec.k);
    let id_train = build_set(
        &head,
        spec.n_train_per_class * spec.k,
        OodKind::Same,
        true,
        Some(spec.n_train_per_class),
        &mut split_rng(spec.seed, 0),
    )?;
    let id_test = build_set(
        &head,
        spec.n_test,
        OodKind::Same,
        false,
        None,
        &mut split_rng(spec.seed, 1),
    )?;
    let ood_sets = spec
        .ood
        .iter()
        .enumerate()
        .map(|(i, (name, kind))| {
            let set = build_set(
                &head,
                spec.n_ood,
                *kind,
                false,
                None,
                &mut split_rng(spec.seed, 2 + i as u64),
            )?;
            Ok((name.clone(), set))
        })
        .collect::<Result<Vec<_>>>()?;
    let mut meta = BTreeMap::new();
    meta.insert("source".into(), "synthetic".into());
    meta.insert("seed".into(), spec.seed.to_string());
    Ok(DatasetBundle {
        dims: Dims {
            d: spec.d,
            k: spec.k,
        },
        id_train: Some(id_train),
        id_test,
        ood_sets,
        meta,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor_io::validate_bundle;

    #[test]
    fn default_bundle_is_valid_and_deterministic() {
        let spec = SyntheticSpec::default();
        let a = synthetic_bundle(&spec).unwrap();
        assert!(validate_bundle(&a).ok);
        assert_eq!(a, synthetic_bundle(&spec).unwrap());
        assert_eq!(a.id_train.as_ref().unwrap().len(), 200);
        assert_eq!(a.ood_sets.len(), 2);
    }
}
