//! OOD scoring functions. Every scorer follows the same convention: higher scores
//! mean more in-distribution.

mod baselines;

use std::fmt::Write as _;
use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

pub use baselines::{
    default_mds_epsilon, ebo, fit_mds, gen_score, klm_score, mds_score, msp, FittedStats,
    KLM_PROFILE_FLOOR,
};

use crate::error::{Error, Result};
use crate::num::{log_sum_exp, Scalar};
use crate::tensor_io::{DatasetBundle, TensorSet};
use crate::wasserstein::w1_part_score;

const ALPHA_SUM_TOLERANCE: f64 = 1e-9;

/// Temperature-scaled softmax, computed with max subtraction.
pub fn softmax<S: Scalar>(logits: &[S], temperature: S) -> Result<Vec<S>> {
    if !(temperature > S::zero()) {
        return Err(Error::InvalidConfig(format!(
            "temperature must be positive, got {temperature}"
        )));
    }
    let scaled: Vec<S> = logits.iter().map(|&l| l / temperature).collect();
    let lse = log_sum_exp(&scaled);
    Ok(scaled.into_iter().map(|x| (x - lse).exp()).collect())
}

/// Fusion weights for the feature, logit and probability parts plus the softmax temperature.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OtodConfig<S> {
    pub alpha: [S; 3],
    pub temperature: S,
}

impl<S: Scalar> OtodConfig<S> {
    pub fn new(alpha: [S; 3], temperature: S) -> Result<Self> {
        if alpha.iter().any(|&a| !(a >= S::zero() && a <= S::one())) {
            return Err(Error::InvalidConfig(format!(
                "fusion weights must lie in [0, 1], got {alpha:?}"
            )));
        }
        let sum = alpha[0] + alpha[1] + alpha[2];
        if (sum.as_f64() - 1.0).abs() > ALPHA_SUM_TOLERANCE {
            return Err(Error::InvalidConfig(format!(
                "fusion weights must sum to 1, got {sum}"
            )));
        }
        if !(temperature > S::zero() && temperature.is_finite()) {
            return Err(Error::InvalidConfig(format!(
                "temperature must be positive, got {temperature}"
            )));
        }
        Ok(Self { alpha, temperature })
    }

    /// Equal weights over all three parts.
    pub fn uniform(temperature: S) -> Result<Self> {
        let third = S::one() / S::of(3.0);
        Self::new([third; 3], temperature)
    }
}

/// Fused optimal-transport score over features, logits and tempered softmax.
pub fn otod_score<S: Scalar>(features: &[S], logits: &[S], cfg: &OtodConfig<S>) -> Result<S> {
    let feature_part = w1_part_score(features)?;
    let logit_part = w1_part_score(logits)?;
    let prob_part = w1_part_score(&softmax(logits, cfg.temperature)?)?;
    let [a1, a2, a3] = cfg.alpha;
    Ok(a1 * feature_part + a2 * logit_part + a3 * prob_part)
}

/// Unfitted scorer description, as selected on the command line.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "scorer", rename_all = "lowercase")]
pub enum ScorerSpec {
    Otod { alpha: [f64; 3], temperature: f64 },
    Msp,
    Ebo { temperature: f64 },
    Gen { gamma: f64, top_m: Option<usize> },
    Mds { epsilon: Option<f64> },
    Klm { epsilon: Option<f64> },
}

impl ScorerSpec {
    pub fn id(&self) -> &'static str {
        match self {
            ScorerSpec::Otod { .. } => "otod",
            ScorerSpec::Msp => "msp",
            ScorerSpec::Ebo { .. } => "ebo",
            ScorerSpec::Gen { .. } => "gen",
            ScorerSpec::Mds { .. } => "mds",
            ScorerSpec::Klm { .. } => "klm",
        }
    }

    pub fn needs_fit(&self) -> bool {
        matches!(self, ScorerSpec::Mds { .. } | ScorerSpec::Klm { .. })
    }

    /// Validates parameters and fits ID statistics where the scorer needs them.
    pub fn build<S: Scalar>(&self, bundle: &DatasetBundle) -> Result<Scorer<S>> {
        let k = bundle.dims.k;
        let scorer = match *self {
            ScorerSpec::Otod { alpha, temperature } => {
                Scorer::Otod(OtodConfig::new(alpha.map(S::of), S::of(temperature))?)
            }
            ScorerSpec::Msp => Scorer::Msp,
            ScorerSpec::Ebo { temperature } => {
                if !(temperature > 0.0) {
                    return Err(Error::InvalidConfig(format!(
                        "temperature must be positive, got {temperature}"
                    )));
                }
                Scorer::Ebo {
                    temperature: S::of(temperature),
                }
            }
            ScorerSpec::Gen { gamma, top_m } => {
                let top_m = top_m.unwrap_or(k.min(100));
                if top_m == 0 || top_m > k {
                    return Err(Error::InvalidConfig(format!(
                        "GEN top-M must lie in [1, {k}], got {top_m}"
                    )));
                }
                if !(gamma > 0.0 && gamma < 1.0) {
                    return Err(Error::InvalidConfig(format!(
                        "GEN gamma must lie in (0, 1), got {gamma}"
                    )));
                }
                Scorer::Gen {
                    gamma: S::of(gamma),
                    top_m,
                }
            }
            ScorerSpec::Mds { epsilon } | ScorerSpec::Klm { epsilon } => {
                let train = bundle.id_train.as_ref().ok_or_else(|| {
                    Error::Precondition(format!("{} requires a labeled id_train split", self.id()))
                })?;
                if train.labels.is_none() {
                    return Err(Error::Precondition(format!(
                        "{} requires labels on id_train",
                        self.id()
                    )));
                }
                let eps = match epsilon {
                    Some(e) => e,
                    None => default_mds_epsilon(train)?,
                };
                let stats = Arc::new(fit_mds(train, S::of(eps))?);
                if matches!(self, ScorerSpec::Mds { .. }) {
                    Scorer::Mds(stats)
                } else {
                    Scorer::Klm(stats)
                }
            }
        };
        Ok(scorer)
    }
}

/// A ready-to-apply scorer.
#[derive(Debug, Clone)]
pub enum Scorer<S> {
    Otod(OtodConfig<S>),
    Msp,
    Ebo { temperature: S },
    Gen { gamma: S, top_m: usize },
    Mds(Arc<FittedStats<S>>),
    Klm(Arc<FittedStats<S>>),
}

impl<S: Scalar> Scorer<S> {
    pub fn id(&self) -> &'static str {
        match self {
            Scorer::Otod(_) => "otod",
            Scorer::Msp => "msp",
            Scorer::Ebo { .. } => "ebo",
            Scorer::Gen { .. } => "gen",
            Scorer::Mds(_) => "mds",
            Scorer::Klm(_) => "klm",
        }
    }

    fn canonical_params(&self) -> String {
        let mut s = String::new();
        match self {
            Scorer::Otod(cfg) => {
                let [a, b, c] = cfg.alpha.map(Scalar::as_f64);
                let _ = write!(
                    s,
                    "alpha={a:?},{b:?},{c:?};T={:?}",
                    cfg.temperature.as_f64()
                );
            }
            Scorer::Msp => {}
            Scorer::Ebo { temperature } => {
                let _ = write!(s, "T={:?}", temperature.as_f64());
            }
            Scorer::Gen { gamma, top_m } => {
                let _ = write!(s, "gamma={:?};M={top_m}", gamma.as_f64());
            }
            Scorer::Mds(stats) | Scorer::Klm(stats) => {
                let _ = write!(
                    s,
                    "eps={:?};n={:?}",
                    stats.epsilon.as_f64(),
                    stats.fitted_on
                );
            }
        }
        s
    }

    /// Stable short hash of the scorer id and parameters.
    pub fn config_digest(&self) -> String {
        let mut hasher = Sha256::new();
        hasher.update(self.id().as_bytes());
        hasher.update(b"|");
        hasher.update(self.canonical_params().as_bytes());
        hex::encode(&hasher.finalize()[..8])
    }

    pub fn score(&self, features: &[S], logits: &[S]) -> Result<S> {
        match self {
            Scorer::Otod(cfg) => otod_score(features, logits, cfg),
            Scorer::Msp => msp(logits),
            Scorer::Ebo { temperature } => ebo(logits, *temperature),
            Scorer::Gen { gamma, top_m } => gen_score(logits, *gamma, *top_m),
            Scorer::Mds(stats) => mds_score(features, stats),
            Scorer::Klm(stats) => klm_score(logits, stats),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreVector<S> {
    pub scores: Vec<S>,
    pub scorer_id: String,
    pub config_digest: String,
}

fn widen<S: Scalar>(row: &[f32]) -> Vec<S> {
    row.iter().map(|&x| S::of(x as f64)).collect()
}

/// Applies `scorer` to every sample of `ts`, preserving order. Runs on the current
/// rayon pool; the output does not depend on the thread count.
pub fn score_batch<S: Scalar>(ts: &TensorSet, scorer: &Scorer<S>) -> Result<ScoreVector<S>> {
    let scores = (0..ts.len())
        .into_par_iter()
        .map(|i| {
            let f = widen(ts.features.row(i));
            let l = widen(ts.logits.row(i));
            let s = scorer.score(&f, &l).map_err(|e| e.at_sample(i))?;
            if s.is_finite() {
                Ok(s)
            } else {
                Err(Error::Numerical(format!("non-finite score {s}")).at_sample(i))
            }
        })
        .collect::<Result<Vec<S>>>()?;
    Ok(ScoreVector {
        scores,
        scorer_id: scorer.id().to_string(),
        config_digest: scorer.config_digest(),
    })
}
