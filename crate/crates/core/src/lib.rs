//! Post-hoc out-of-distribution scoring with discrete Wasserstein-1 distances.
//!
//! The kernels are generic over [`Scalar`] (`f32` or `f64`); the aliases below fix
//! the scalar for the common cases. Tensors on disk are always `f32`.

pub mod error;
pub mod metrics;
pub mod num;
pub mod scoring;
pub mod simulate;
pub mod synthetic;
pub mod tensor_io;
pub mod wasserstein;

pub use error::{Error, Result};
pub use num::Scalar;

pub type Histogram = wasserstein::Histogram<f64>;
pub type Histogram32 = wasserstein::Histogram<f32>;
pub type ReferencePair = wasserstein::ReferencePair<f64>;
pub type OtodConfig = scoring::OtodConfig<f64>;
pub type OtodConfig32 = scoring::OtodConfig<f32>;
pub type FittedStats = scoring::FittedStats<f64>;
pub type FittedStats32 = scoring::FittedStats<f32>;
pub type Scorer = scoring::Scorer<f64>;
pub type Scorer32 = scoring::Scorer<f32>;
pub type ScoreVector = scoring::ScoreVector<f64>;
