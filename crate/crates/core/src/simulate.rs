//! Gaussian class-conditional simulation of the mean discrepancy of a score.
//!
//! Randomness comes from `ChaCha8Rng::seed_from_u64(seed)`. A sweep assigns shift
//! `i` the streams `2i` (ID draw) and `2i + 1` (OOD draw) of that generator, so each
//! grid point is reproducible on its own and independent of thread scheduling.

use nalgebra::{DMatrix, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::metrics::auroc;
use crate::wasserstein::{l2_normalize, w1_part_score};

/// Lower-triangular-free square-root factor `L` with `L Lᵀ = Σ`, row-major.
#[derive(Debug, Clone)]
pub struct GaussianFactor {
    d: usize,
    factor: Vec<f64>,
}

impl GaussianFactor {
    /// Factors a symmetric positive semi-definite row-major `d × d` matrix.
    pub fn new(sigma: &[f64], d: usize) -> Result<Self> {
        if sigma.len() != d * d {
            return Err(Error::DimensionMismatch(format!(
                "covariance has {} entries, expected {}",
                sigma.len(),
                d * d
            )));
        }
        let scale = sigma.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
        if !scale.is_finite() {
            return Err(Error::InvalidConfig("covariance must be finite".into()));
        }
        let tol = 1e-9 * scale.max(1.0);
        for i in 0..d {
            for j in 0..i {
                if (sigma[i * d + j] - sigma[j * d + i]).abs() > tol {
                    return Err(Error::InvalidConfig(format!(
                        "covariance is not symmetric at ({i}, {j})"
                    )));
                }
            }
        }
        let eigen = SymmetricEigen::new(DMatrix::from_row_slice(d, d, sigma));
        if let Some(&min) = eigen
            .eigenvalues
            .iter()
            .min_by(|a, b| a.partial_cmp(b).expect("finite eigenvalues"))
        {
            if min < -tol {
                return Err(Error::InvalidConfig(format!(
                    "covariance is not positive semi-definite (eigenvalue {min})"
                )));
            }
        }
        let mut factor = vec![0.0; d * d];
        for (k, &lambda) in eigen.eigenvalues.iter().enumerate() {
            let root = lambda.max(0.0).sqrt();
            for i in 0..d {
                factor[i * d + k] = eigen.eigenvectors[(i, k)] * root;
            }
        }
        Ok(Self { d, factor })
    }

    fn draw<R: Rng>(&self, mu: &[f64], rng: &mut R) -> Vec<f64> {
        let z: Vec<f64> = (0..self.d).map(|_| rng.sample(StandardNormal)).collect();
        mu.iter()
            .zip(self.factor.chunks_exact(self.d))
            .map(|(&m, row)| m + row.iter().zip(&z).map(|(a, b)| a * b).sum::<f64>())
            .collect()
    }

    pub fn sample<R: Rng>(&self, mu: &[f64], n: usize, rng: &mut R) -> Vec<Vec<f64>> {
        assert_eq!(mu.len(), self.d, "mean length must match the factor");
        (0..n).map(|_| self.draw(mu, rng)).collect()
    }
}

/// `n` i.i.d. draws from `N(mu, sigma)`; `sigma` is row-major `d × d`.
pub fn sample_gaussian(mu: &[f64], sigma: &[f64], n: usize, seed: u64) -> Result<Vec<Vec<f64>>> {
    let factor = GaussianFactor::new(sigma, mu.len())?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Ok(factor.sample(mu, n, &mut rng))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeanDiscrepancy {
    pub md: f64,
    pub stderr: f64,
}

fn mean_and_var(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (mean, 0.0);
    }
    let var = xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1.0);
    (mean, var)
}

/// `mean(S(id)) - mean(S(ood))` with its standard error.
pub fn mean_discrepancy<F>(
    scorer: F,
    id_samples: &[Vec<f64>],
    ood_samples: &[Vec<f64>],
) -> Result<MeanDiscrepancy>
where
    F: Fn(&[f64]) -> Result<f64>,
{
    let (id, ood) = score_both(&scorer, id_samples, ood_samples)?;
    Ok(discrepancy_of(&id, &ood))
}

fn score_both<F>(scorer: &F, id: &[Vec<f64>], ood: &[Vec<f64>]) -> Result<(Vec<f64>, Vec<f64>)>
where
    F: Fn(&[f64]) -> Result<f64>,
{
    if id.is_empty() || ood.is_empty() {
        return Err(Error::Precondition("sample sets must be non-empty".into()));
    }
    let score = |rows: &[Vec<f64>]| -> Result<Vec<f64>> {
        rows.iter()
            .enumerate()
            .map(|(i, r)| scorer(r).map_err(|e| e.at_sample(i)))
            .collect()
    };
    Ok((score(id)?, score(ood)?))
}

fn discrepancy_of(id: &[f64], ood: &[f64]) -> MeanDiscrepancy {
    let (mi, vi) = mean_and_var(id);
    let (mo, vo) = mean_and_var(ood);
    MeanDiscrepancy {
        md: mi - mo,
        stderr: (vi / id.len() as f64 + vo / ood.len() as f64).sqrt(),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GaussianSimSpec {
    pub d: usize,
    pub mu_in: Vec<f64>,
    /// Row-major `d × d`.
    pub sigma: Vec<f64>,
    pub shift_grid: Vec<f64>,
    pub direction: Vec<f64>,
    pub n_per_side: usize,
    pub seed: u64,
}

impl Default for GaussianSimSpec {
    fn default() -> Self {
        Self::isotropic(16, 5000, 0)
    }
}

impl GaussianSimSpec {
    /// Identity covariance, `mu_in` = all-ones, direction `e₁`, shifts `0, 0.25, ..., 3`.
    pub fn isotropic(d: usize, n_per_side: usize, seed: u64) -> Self {
        let mut sigma = vec![0.0; d * d];
        for i in 0..d {
            sigma[i * d + i] = 1.0;
        }
        let mut direction = vec![0.0; d];
        if d > 0 {
            direction[0] = 1.0;
        }
        Self {
            d,
            mu_in: vec![1.0; d],
            sigma,
            shift_grid: (0..=12).map(|i| 0.25 * i as f64).collect(),
            direction,
            n_per_side,
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidConfig(m));
        if self.d < 2 {
            return bad(format!("d must be at least 2, got {}", self.d));
        }
        if self.mu_in.len() != self.d || self.direction.len() != self.d {
            return bad("mu_in and direction must have length d".into());
        }
        if self.n_per_side == 0 {
            return bad("n_per_side must be positive".into());
        }
        if self.shift_grid.first() != Some(&0.0) {
            return bad("shift grid must start at 0".into());
        }
        if self.shift_grid.windows(2).any(|w| !(w[0] < w[1])) {
            return bad("shift grid must be strictly ascending".into());
        }
        if self.shift_grid.iter().any(|s| !s.is_finite()) {
            return bad("shifts must be finite".into());
        }
        let norm = self.direction.iter().map(|x| x * x).sum::<f64>().sqrt();
        if (norm - 1.0).abs() > 1e-9 {
            return bad(format!("direction must have unit norm, got {norm}"));
        }
        GaussianFactor::new(&self.sigma, self.d).map(|_| ())
    }

    /// `½ · ‖s · direction‖₁`.
    pub fn tv_proxy(&self, shift: f64) -> f64 {
        0.5 * shift * self.direction.iter().map(|x| x.abs()).sum::<f64>()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SweepPoint {
    pub shift: f64,
    pub tv_proxy: f64,
    pub md_estimate: f64,
    pub md_stderr: f64,
    pub auroc: f64,
}

fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

fn normalized_draws(
    factor: &GaussianFactor,
    mu: &[f64],
    n: usize,
    rng: &mut ChaCha8Rng,
) -> Result<Vec<Vec<f64>>> {
    factor
        .sample(mu, n, rng)
        .iter()
        .map(|r| l2_normalize(r))
        .collect()
}

/// Estimates the mean discrepancy and AUROC of `scorer` at every grid shift.
pub fn md_sweep<F>(spec: &GaussianSimSpec, scorer: F) -> Result<Vec<SweepPoint>>
where
    F: Fn(&[f64]) -> Result<f64> + Sync,
{
    spec.validate()?;
    let factor = GaussianFactor::new(&spec.sigma, spec.d)?;
    spec.shift_grid
        .par_iter()
        .enumerate()
        .map(|(i, &shift)| {
            let mu_ood: Vec<f64> = spec
                .mu_in
                .iter()
                .zip(&spec.direction)
                .map(|(m, u)| m + shift * u)
                .collect();
            let mut id_rng = stream_rng(spec.seed, 2 * i as u64);
            let mut ood_rng = stream_rng(spec.seed, 2 * i as u64 + 1);
            let id = normalized_draws(&factor, &spec.mu_in, spec.n_per_side, &mut id_rng)?;
            let ood = normalized_draws(&factor, &mu_ood, spec.n_per_side, &mut ood_rng)?;
            let (id_scores, ood_scores) = score_both(&scorer, &id, &ood)?;
            let md = discrepancy_of(&id_scores, &ood_scores);
            Ok(SweepPoint {
                shift,
                tv_proxy: spec.tv_proxy(shift),
                md_estimate: md.md,
                md_stderr: md.stderr,
                auroc: auroc(&id_scores, &ood_scores)?,
            })
        })
        .collect()
}

/// [`md_sweep`] with the single-vector optimal-transport score.
pub fn feature_md_sweep(spec: &GaussianSimSpec) -> Result<Vec<SweepPoint>> {
    md_sweep(spec, w1_part_score)
}

fn average_ranks(xs: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..xs.len()).collect();
    order.sort_by(|&a, &b| xs[a].partial_cmp(&xs[b]).expect("finite values"));
    let mut ranks = vec![0.0; xs.len()];
    let mut start = 0;
    while start < order.len() {
        let mut end = start + 1;
        while end < order.len() && xs[order[end]] == xs[order[start]] {
            end += 1;
        }
        let mid = (start + end + 1) as f64 / 2.0;
        for &idx in &order[start..end] {
            ranks[idx] = mid;
        }
        start = end;
    }
    ranks
}

/// Spearman rank correlation (Pearson correlation of average ranks).
pub fn spearman(x: &[f64], y: &[f64]) -> Result<f64> {
    if x.len() != y.len() {
        return Err(Error::LengthMismatch {
            left: x.len(),
            right: y.len(),
        });
    }
    if x.len() < 2 {
        return Err(Error::Precondition("need at least two points".into()));
    }
    let (rx, ry) = (average_ranks(x), average_ranks(y));
    let n = x.len() as f64;
    let (mx, my) = (rx.iter().sum::<f64>() / n, ry.iter().sum::<f64>() / n);
    let cov: f64 = rx.iter().zip(&ry).map(|(a, b)| (a - mx) * (b - my)).sum();
    let vx: f64 = rx.iter().map(|a| (a - mx) * (a - mx)).sum();
    let vy: f64 = ry.iter().map(|b| (b - my) * (b - my)).sum();
    if vx == 0.0 || vy == 0.0 {
        return Err(Error::Degenerate("constant input has no rank correlation"));
    }
    Ok(cov / (vx * vy).sqrt())
}
