//! Post-hoc baselines: MSP, energy, generalized entropy, Mahalanobis and KL matching.

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::num::{log_sum_exp, Scalar};
use crate::tensor_io::TensorSet;

use super::softmax;

/// Probability floor applied to KLM class profiles.
pub const KLM_PROFILE_FLOOR: f64 = 1e-12;

/// Maximum softmax probability.
pub fn msp<S: Scalar>(logits: &[S]) -> Result<S> {
    let p = softmax(logits, S::one())?;
    Ok(p.into_iter().fold(S::zero(), S::max))
}

/// Energy score `T · log Σ exp(l_j / T)`.
pub fn ebo<S: Scalar>(logits: &[S], temperature: S) -> Result<S> {
    if !(temperature > S::zero()) {
        return Err(Error::InvalidConfig(format!(
            "temperature must be positive, got {temperature}"
        )));
    }
    let scaled: Vec<S> = logits.iter().map(|&l| l / temperature).collect();
    Ok(temperature * log_sum_exp(&scaled))
}

/// Negated generalized entropy over the `top_m` largest softmax probabilities.
pub fn gen_score<S: Scalar>(logits: &[S], gamma: S, top_m: usize) -> Result<S> {
    if top_m == 0 || top_m > logits.len() {
        return Err(Error::InvalidConfig(format!(
            "GEN top-M must lie in [1, {}], got {top_m}",
            logits.len()
        )));
    }
    if !(gamma > S::zero() && gamma < S::one()) {
        return Err(Error::InvalidConfig(format!(
            "GEN gamma must lie in (0, 1), got {gamma}"
        )));
    }
    let mut p = softmax(logits, S::one())?;
    p.sort_unstable_by(|a, b| b.partial_cmp(a).expect("softmax output is finite"));
    // Complement of the top probability, taken as the tail sum.
    let top_complement: S = p[1..].iter().rev().copied().sum();
    let entropy: S = p[..top_m]
        .iter()
        .enumerate()
        .map(|(i, &q)| {
            let complement = if i == 0 { top_complement } else { S::one() - q };
            q.powf(gamma) * complement.max(S::zero()).powf(gamma)
        })
        .sum();
    Ok(-entropy)
}

/// Class statistics fitted on labeled ID training data, shared by MDS and KLM.
#[derive(Debug, Clone, PartialEq)]
pub struct FittedStats<S> {
    pub class_means: Vec<Vec<S>>,
    /// Row-major `d × d` inverse of the regularized pooled covariance.
    pub precision: Vec<S>,
    pub class_softmax_profiles: Vec<Vec<S>>,
    pub fitted_on: Vec<usize>,
    pub epsilon: S,
    // Cached `P μ_c` and `μ_cᵀ P μ_c` for the expanded quadratic form.
    precision_means: Vec<Vec<S>>,
    mean_quadratics: Vec<S>,
}

impl<S: Scalar> FittedStats<S> {
    pub fn feature_dim(&self) -> usize {
        self.class_means.first().map_or(0, Vec::len)
    }

    pub fn num_classes(&self) -> usize {
        self.class_means.len()
    }
}

fn class_counts(labels: &[u32], k: usize) -> Result<Vec<usize>> {
    let mut counts = vec![0usize; k];
    for &l in labels {
        *counts
            .get_mut(l as usize)
            .ok_or_else(|| Error::Precondition(format!("label {l} outside [0, {k})")))? += 1;
    }
    if let Some(c) = counts.iter().position(|&n| n < 2) {
        return Err(Error::Precondition(format!(
            "class {c} has {} training samples; at least 2 required",
            counts[c]
        )));
    }
    Ok(counts)
}

/// Pooled within-class scatter divided by `N`, row-major `d × d`, in `f64`.
fn pooled_covariance(train: &TensorSet, labels: &[u32], means: &[Vec<f64>]) -> Vec<f64> {
    let d = train.feature_dim();
    let mut cov = vec![0.0_f64; d * d];
    let mut centered = vec![0.0_f64; d];
    for (row, &label) in train.features.iter_rows().zip(labels) {
        let mu = &means[label as usize];
        for ((c, &x), &m) in centered.iter_mut().zip(row).zip(mu) {
            *c = x as f64 - m;
        }
        for i in 0..d {
            let ci = centered[i];
            for j in i..d {
                cov[i * d + j] += ci * centered[j];
            }
        }
    }
    let n = train.len() as f64;
    for i in 0..d {
        for j in i..d {
            let v = cov[i * d + j] / n;
            cov[i * d + j] = v;
            cov[j * d + i] = v;
        }
    }
    cov
}

/// Scale-aware regularizer `1e-6 · trace(Σ̂) / d` for the pooled covariance of `train`.
pub fn default_mds_epsilon(train: &TensorSet) -> Result<f64> {
    let labels = train
        .labels
        .as_deref()
        .ok_or_else(|| Error::Precondition("MDS/KLM require labels on id_train".into()))?;
    let means = class_feature_means(train, labels, &class_counts(labels, train.num_classes())?);
    let d = train.feature_dim();
    let cov = pooled_covariance(train, labels, &means);
    let trace: f64 = (0..d).map(|i| cov[i * d + i]).sum();
    Ok(1e-6 * trace / d as f64)
}

fn class_feature_means(train: &TensorSet, labels: &[u32], counts: &[usize]) -> Vec<Vec<f64>> {
    let d = train.feature_dim();
    let mut means = vec![vec![0.0_f64; d]; counts.len()];
    for (row, &label) in train.features.iter_rows().zip(labels) {
        for (m, &x) in means[label as usize].iter_mut().zip(row) {
            *m += x as f64;
        }
    }
    for (m, &n) in means.iter_mut().zip(counts) {
        m.iter_mut().for_each(|v| *v /= n as f64);
    }
    means
}

/// Fits class means, the shared precision matrix and per-class mean softmax profiles.
pub fn fit_mds<S: Scalar>(train: &TensorSet, epsilon: S) -> Result<FittedStats<S>> {
    if !(epsilon >= S::zero()) {
        return Err(Error::InvalidConfig(format!(
            "covariance regularizer must be non-negative, got {epsilon}"
        )));
    }
    let labels = train
        .labels
        .as_deref()
        .ok_or_else(|| Error::Precondition("MDS/KLM require labels on id_train".into()))?;
    let k = train.num_classes();
    let d = train.feature_dim();
    let counts = class_counts(labels, k)?;
    let means = class_feature_means(train, labels, &counts);

    let mut cov = pooled_covariance(train, labels, &means);
    for i in 0..d {
        cov[i * d + i] += epsilon.as_f64();
    }
    let chol = DMatrix::from_row_slice(d, d, &cov)
        .cholesky()
        .ok_or_else(|| {
            Error::Numerical("pooled covariance is singular even after regularization".into())
        })?;
    let inv = chol.inverse();
    let mut precision = vec![S::zero(); d * d];
    for i in 0..d {
        for j in 0..d {
            precision[i * d + j] = S::of(0.5 * (inv[(i, j)] + inv[(j, i)]));
        }
    }

    let mut profiles = vec![vec![S::zero(); k]; k];
    for (row, &label) in train.logits.iter_rows().zip(labels) {
        let l: Vec<S> = row.iter().map(|&x| S::of(x as f64)).collect();
        for (acc, p) in profiles[label as usize]
            .iter_mut()
            .zip(softmax(&l, S::one())?)
        {
            *acc += p;
        }
    }
    for (profile, &n) in profiles.iter_mut().zip(&counts) {
        profile.iter_mut().for_each(|v| *v /= S::of_usize(n));
    }

    let class_means: Vec<Vec<S>> = means
        .iter()
        .map(|m| m.iter().map(|&v| S::of(v)).collect())
        .collect();
    Ok(FittedStats::assemble(
        class_means,
        precision,
        profiles,
        counts,
        epsilon,
    ))
}

impl<S: Scalar> FittedStats<S> {
    /// Builds stats from explicit parts; `precision` is row-major `d × d`.
    pub fn assemble(
        class_means: Vec<Vec<S>>,
        precision: Vec<S>,
        class_softmax_profiles: Vec<Vec<S>>,
        fitted_on: Vec<usize>,
        epsilon: S,
    ) -> Self {
        let d = class_means.first().map_or(0, Vec::len);
        assert_eq!(precision.len(), d * d, "precision must be d x d");
        let precision_means: Vec<Vec<S>> = class_means
            .iter()
            .map(|mu| mat_vec(&precision, mu))
            .collect();
        let mean_quadratics = class_means
            .iter()
            .zip(&precision_means)
            .map(|(mu, pmu)| dot(mu, pmu))
            .collect();
        Self {
            class_means,
            precision,
            class_softmax_profiles,
            fitted_on,
            epsilon,
            precision_means,
            mean_quadratics,
        }
    }
}

fn dot<S: Scalar>(a: &[S], b: &[S]) -> S {
    a.iter().zip(b).map(|(&x, &y)| x * y).sum()
}

fn mat_vec<S: Scalar>(m: &[S], v: &[S]) -> Vec<S> {
    m.chunks_exact(v.len()).map(|row| dot(row, v)).collect()
}

/// Negated minimum Mahalanobis distance to the fitted class means.
pub fn mds_score<S: Scalar>(features: &[S], stats: &FittedStats<S>) -> Result<S> {
    if features.len() != stats.feature_dim() {
        return Err(Error::DimensionMismatch(format!(
            "feature dim {} vs fitted dim {}",
            features.len(),
            stats.feature_dim()
        )));
    }
    let pf = mat_vec(&stats.precision, features);
    let fpf = dot(features, &pf);
    let two = S::of(2.0);
    let min = stats
        .precision_means
        .iter()
        .zip(&stats.mean_quadratics)
        .map(|(pmu, &mpm)| (fpf - two * dot(features, pmu) + mpm).max(S::zero()))
        .fold(S::infinity(), S::min);
    Ok(-min)
}

/// Negated minimum KL divergence from the sample's softmax to the class profiles.
pub fn klm_score<S: Scalar>(logits: &[S], stats: &FittedStats<S>) -> Result<S> {
    if logits.len() != stats.class_softmax_profiles.first().map_or(0, Vec::len) {
        return Err(Error::DimensionMismatch(format!(
            "logit dim {} vs fitted class count {}",
            logits.len(),
            stats.num_classes()
        )));
    }
    let p = softmax(logits, S::one())?;
    let floor = S::of(KLM_PROFILE_FLOOR);
    let min = stats
        .class_softmax_profiles
        .iter()
        .map(|q| {
            p.iter()
                .zip(q)
                .filter(|(&pi, _)| pi > S::zero())
                .map(|(&pi, &qi)| pi * (pi / qi.max(floor)).ln())
                .sum::<S>()
        })
        .fold(S::infinity(), S::min);
    Ok(-min)
}
