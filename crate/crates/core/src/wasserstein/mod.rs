//! Discrete one-dimensional Wasserstein-1 machinery.
//!
//! A vector of length `m` is read as a set of masses on the uniform grid
//! `{0, 1/(m-1), ..., 1}` of the unit interval. Distances are computed with the
//! generalized CDF-difference functional
//!
//! ```text
//! W1(a, b) = Δ · Σ_{k=0}^{m-2} |A(k) - B(k)|,   A(k) = Σ_{j<=k} a_j,   Δ = 1/(m-1)
//! ```
//!
//! which equals the optimal transport cost whenever `a` and `b` are nonnegative
//! with equal mass, and stays finite for signed or unequal-mass inputs (the
//! zero reference in particular).

mod oracle;

pub use oracle::{lp_w1_oracle, ORACLE_MAX_BINS};

use crate::error::{Error, Result};
use crate::num::{mean, Scalar};

/// Masses on the uniform unit-interval grid.
#[derive(Debug, Clone, PartialEq)]
pub struct Histogram<S> {
    weights: Vec<S>,
}

impl<S: Scalar> Histogram<S> {
    pub fn new(weights: Vec<S>) -> Result<Self> {
        if weights.len() < 2 {
            return Err(Error::Degenerate("histogram needs at least two bins"));
        }
        if weights.iter().any(|w| !w.is_finite()) {
            return Err(Error::Degenerate("histogram weights must be finite"));
        }
        Ok(Self { weights })
    }

    pub fn zeros(len: usize) -> Result<Self> {
        Self::new(vec![S::zero(); len])
    }

    pub fn weights(&self) -> &[S] {
        &self.weights
    }

    pub fn into_weights(self) -> Vec<S> {
        self.weights
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn mass(&self) -> S {
        self.weights.iter().copied().sum()
    }

    /// Grid spacing `1/(m-1)`.
    pub fn spacing(&self) -> S {
        S::one() / S::of_usize(self.weights.len() - 1)
    }
}

/// The two references a normalized vector is compared against.
#[derive(Debug, Clone, PartialEq)]
pub struct ReferencePair<S> {
    pub mean_ref: Histogram<S>,
    pub zero_ref: Histogram<S>,
}

impl<S: Scalar> ReferencePair<S> {
    pub fn for_histogram(h: &Histogram<S>) -> Self {
        Self {
            mean_ref: mean_vector(h.weights()),
            zero_ref: Histogram {
                weights: vec![S::zero(); h.len()],
            },
        }
    }
}

/// Scales `v` to unit Euclidean norm.
pub fn l2_normalize<S: Scalar>(v: &[S]) -> Result<Vec<S>> {
    // Rescale by the max magnitude first so the squared sum cannot overflow.
    let scale = v.iter().fold(S::zero(), |acc, x| acc.max(x.abs()));
    if scale == S::zero() {
        return Err(Error::Degenerate("cannot L2-normalize an all-zero vector"));
    }
    if !scale.is_finite() {
        return Err(Error::Degenerate("cannot L2-normalize a non-finite vector"));
    }
    let norm = v
        .iter()
        .map(|&x| (x / scale) * (x / scale))
        .sum::<S>()
        .sqrt()
        * scale;
    Ok(v.iter().map(|&x| x / norm).collect())
}

/// Constant vector of the same length whose entries equal the arithmetic mean of `v`.
///
/// Panics if `v` has fewer than two entries.
pub fn mean_vector<S: Scalar>(v: &[S]) -> Histogram<S> {
    assert!(v.len() >= 2, "mean_vector needs at least two entries");
    let m = mean(v);
    Histogram {
        weights: vec![m; v.len()],
    }
}

/// Generalized CDF-difference Wasserstein-1 distance.
pub fn cdf_w1<S: Scalar>(a: &Histogram<S>, b: &Histogram<S>) -> Result<S> {
    if a.len() != b.len() {
        return Err(Error::LengthMismatch {
            left: a.len(),
            right: b.len(),
        });
    }
    Ok(cdf_w1_unchecked(a.weights(), b.weights()))
}

// Caller guarantees equal lengths >= 2.
fn cdf_w1_unchecked<S: Scalar>(a: &[S], b: &[S]) -> S {
    let m = a.len();
    let mut gap = S::zero();
    let mut total = S::zero();
    for (&x, &y) in a[..m - 1].iter().zip(&b[..m - 1]) {
        gap += x - y;
        total += gap.abs();
    }
    total / S::of_usize(m - 1)
}

/// Single-vector OOD score: `-min(W1(v̂, u), W1(v̂, 0))` with `v̂` the L2-normalized input
/// and `u` its mean vector. Always `<= 0`; values closer to zero are more ID-like.
pub fn w1_part_score<S: Scalar>(v: &[S]) -> Result<S> {
    if v.len() < 2 {
        return Err(Error::Degenerate("score input needs at least two entries"));
    }
    let normalized = l2_normalize(v)?;
    let u = mean(&normalized);

    // Both references share the sweep over partial sums.
    let m = normalized.len();
    let mut partial = S::zero();
    let mut centered = S::zero();
    let mut to_mean = S::zero();
    let mut to_zero = S::zero();
    for &x in &normalized[..m - 1] {
        partial += x;
        centered += x - u;
        to_mean += centered.abs();
        to_zero += partial.abs();
    }
    let spacing = S::one() / S::of_usize(m - 1);
    Ok(-(to_mean.min(to_zero) * spacing))
}
