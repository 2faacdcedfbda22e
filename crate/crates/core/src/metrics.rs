//! Threshold-free detection metrics with ID as the positive class.

use std::cmp::Ordering;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::num::Scalar;
use crate::scoring::{score_batch, Scorer};
use crate::tensor_io::DatasetBundle;

pub const DEFAULT_TPR: f64 = 0.95;

fn check_scores<S: Scalar>(what: &str, xs: &[S]) -> Result<()> {
    if xs.is_empty() {
        return Err(Error::Precondition(format!("{what} scores are empty")));
    }
    if let Some(i) = xs.iter().position(|x| !x.is_finite()) {
        return Err(Error::Precondition(format!(
            "{what} score {i} is not finite"
        )));
    }
    Ok(())
}

fn cmp<S: Scalar>(a: &S, b: &S) -> Ordering {
    a.partial_cmp(b).expect("scores are finite")
}

/// Mann-Whitney AUROC with midranks for ties.
pub fn auroc<S: Scalar>(id_scores: &[S], ood_scores: &[S]) -> Result<f64> {
    check_scores("ID", id_scores)?;
    check_scores("OOD", ood_scores)?;
    let mut pooled: Vec<(S, bool)> = id_scores
        .iter()
        .map(|&s| (s, true))
        .chain(ood_scores.iter().map(|&s| (s, false)))
        .collect();
    pooled.sort_unstable_by(|a, b| cmp(&a.0, &b.0));

    // Twice the rank sum keeps midranks integral.
    let mut doubled_rank_sum: u128 = 0;
    let mut start = 0;
    while start < pooled.len() {
        let mut end = start + 1;
        while end < pooled.len() && pooled[end].0 == pooled[start].0 {
            end += 1;
        }
        // ranks start+1 ..= end, midrank = (start + 1 + end) / 2
        let doubled_midrank = (start + 1 + end) as u128;
        let id_in_group = pooled[start..end].iter().filter(|p| p.1).count() as u128;
        doubled_rank_sum += doubled_midrank * id_in_group;
        start = end;
    }
    let n_id = id_scores.len() as u128;
    let n_ood = ood_scores.len() as u128;
    let doubled_u = doubled_rank_sum - n_id * (n_id + 1);
    Ok(doubled_u as f64 / (2 * n_id * n_ood) as f64)
}

/// FPR on OOD at the largest threshold whose ID recall reaches `tpr_target`.
pub fn fpr_at_tpr<S: Scalar>(id_scores: &[S], ood_scores: &[S], tpr_target: f64) -> Result<f64> {
    check_scores("ID", id_scores)?;
    check_scores("OOD", ood_scores)?;
    let threshold = tpr_threshold(id_scores, tpr_target)?;
    let false_positives = ood_scores.iter().filter(|&&s| s >= threshold).count();
    Ok(false_positives as f64 / ood_scores.len() as f64)
}

/// Largest `τ` with `#{id >= τ} / n_id >= tpr_target`.
pub fn tpr_threshold<S: Scalar>(id_scores: &[S], tpr_target: f64) -> Result<S> {
    check_scores("ID", id_scores)?;
    if !(tpr_target > 0.0 && tpr_target <= 1.0) {
        return Err(Error::InvalidConfig(format!(
            "TPR target must lie in (0, 1], got {tpr_target}"
        )));
    }
    let n = id_scores.len();
    // Absorb representation error in products like 0.95 * 100.
    let needed = ((tpr_target * n as f64) - 1e-9).ceil().clamp(1.0, n as f64) as usize;
    let mut sorted = id_scores.to_vec();
    sorted.sort_unstable_by(|a, b| cmp(b, a));
    Ok(sorted[needed - 1])
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OodRow {
    pub name: String,
    pub fpr_at_95: f64,
    pub auroc: f64,
    pub n_ood: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Average {
    pub fpr_at_95: f64,
    pub auroc: f64,
}

/// One benchmark row: per-OOD-set metrics plus their unweighted mean.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub scorer_id: String,
    pub config_digest: String,
    pub n_id: usize,
    pub per_ood: Vec<OodRow>,
    pub average: Average,
}

impl EvalReport {
    pub fn from_scores<S: Scalar>(
        scorer_id: &str,
        config_digest: &str,
        id_scores: &[S],
        ood: &[(String, Vec<S>)],
    ) -> Result<Self> {
        if ood.is_empty() {
            return Err(Error::Precondition("no OOD datasets to evaluate".into()));
        }
        let per_ood = ood
            .iter()
            .map(|(name, scores)| {
                Ok(OodRow {
                    name: name.clone(),
                    fpr_at_95: fpr_at_tpr(id_scores, scores, DEFAULT_TPR)
                        .map_err(|e| e.in_dataset(name))?,
                    auroc: auroc(id_scores, scores).map_err(|e| e.in_dataset(name))?,
                    n_ood: scores.len(),
                })
            })
            .collect::<Result<Vec<_>>>()?;
        let n = per_ood.len() as f64;
        let average = Average {
            fpr_at_95: per_ood.iter().map(|r| r.fpr_at_95).sum::<f64>() / n,
            auroc: per_ood.iter().map(|r| r.auroc).sum::<f64>() / n,
        };
        Ok(Self {
            scorer_id: scorer_id.to_string(),
            config_digest: config_digest.to_string(),
            n_id: id_scores.len(),
            per_ood,
            average,
        })
    }
}

/// Scores `id_test` and every OOD split once and aggregates the metrics.
pub fn evaluate<S: Scalar>(bundle: &DatasetBundle, scorer: &Scorer<S>) -> Result<EvalReport> {
    let id = score_batch(&bundle.id_test, scorer).map_err(|e| e.in_dataset("id_test"))?;
    let ood = bundle
        .ood_sets
        .iter()
        .map(|(name, set)| {
            score_batch(set, scorer)
                .map(|sv| (name.clone(), sv.scores))
                .map_err(|e| e.in_dataset(name))
        })
        .collect::<Result<Vec<_>>>()?;
    EvalReport::from_scores(&id.scorer_id, &id.config_digest, &id.scores, &ood)
}

/// Benchmark-style Markdown table, one row per report, rates in percent.
pub fn markdown_table(reports: &[EvalReport]) -> String {
    let mut out = String::new();
    let Some(first) = reports.first() else {
        return out;
    };
    let names: Vec<&str> = first.per_ood.iter().map(|r| r.name.as_str()).collect();
    out.push_str("| Method |");
    for name in names.iter().copied().chain(["Average"]) {
        let _ = write!(out, " {name} FPR@95↓ | {name} AUROC↑ |");
    }
    out.push('\n');
    out.push_str("|---|");
    out.push_str(&"---:|".repeat(2 * (names.len() + 1)));
    out.push('\n');
    for report in reports {
        let _ = write!(out, "| {} |", report.scorer_id.to_uppercase());
        for row in &report.per_ood {
            let _ = write!(
                out,
                " {:.2} | {:.2} |",
                100.0 * row.fpr_at_95,
                100.0 * row.auroc
            );
        }
        let _ = write!(
            out,
            " {:.2} | {:.2} |",
            100.0 * report.average.fpr_at_95,
            100.0 * report.average.auroc
        );
        out.push('\n');
    }
    out
}
