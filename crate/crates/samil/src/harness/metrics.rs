//! Evaluation metrics: balanced accuracy, pairwise-counted AUROC for the
//! three screening dichotomies, confusion matrix, and the attention-vs-
//! relevance rank curve.

use crate::error::{Error, Result};

pub const N_CLASSES: usize = 3;

fn check_labels(name: &str, labels: &[u8]) -> Result<()> {
    if let Some(&bad) = labels.iter().find(|&&l| l as usize >= N_CLASSES) {
        return Err(Error::Domain(format!("{name} contains label {bad}")));
    }
    Ok(())
}

/// Mean per-class recall. Every class must appear in `y_true`.
pub fn balanced_accuracy(y_true: &[u8], y_pred: &[u8]) -> Result<f64> {
    if y_true.len() != y_pred.len() || y_true.is_empty() {
        return Err(Error::Domain(format!(
            "label lengths {} vs {}",
            y_true.len(),
            y_pred.len()
        )));
    }
    check_labels("y_true", y_true)?;
    check_labels("y_pred", y_pred)?;
    let mut hits = [0usize; N_CLASSES];
    let mut totals = [0usize; N_CLASSES];
    for (&t, &p) in y_true.iter().zip(y_pred) {
        totals[t as usize] += 1;
        if t == p {
            hits[t as usize] += 1;
        }
    }
    if let Some(c) = totals.iter().position(|&n| n == 0) {
        return Err(Error::Domain(format!("class {c} absent from y_true")));
    }
    let recall_sum: f64 =
        (0..N_CLASSES).map(|c| hits[c] as f64 / totals[c] as f64).sum();
    Ok(recall_sum / N_CLASSES as f64)
}

/// Mann–Whitney AUROC by exhaustive pair counting:
/// (wins + ties/2) / (n⁺ · n⁻), computed in integers before the division.
pub fn auroc(scores: &[f64], y_binary: &[u8]) -> Result<f64> {
    if scores.len() != y_binary.len() || scores.is_empty() {
        return Err(Error::Domain("score/label lengths disagree".into()));
    }
    if y_binary.iter().any(|&y| y > 1) {
        return Err(Error::Domain("labels must be binary".into()));
    }
    if scores.iter().any(|s| !s.is_finite()) {
        return Err(Error::NonFinite("auroc scores".into()));
    }
    let pos: Vec<f64> =
        scores.iter().zip(y_binary).filter(|(_, &y)| y == 1).map(|(&s, _)| s).collect();
    let neg: Vec<f64> =
        scores.iter().zip(y_binary).filter(|(_, &y)| y == 0).map(|(&s, _)| s).collect();
    if pos.is_empty() || neg.is_empty() {
        return Err(Error::Domain("auroc needs both classes present".into()));
    }
    let mut wins = 0u64;
    let mut ties = 0u64;
    for &p in &pos {
        for &n in &neg {
            if p > n {
                wins += 1;
            } else if p == n {
                ties += 1;
            }
        }
    }
    Ok((2 * wins + ties) as f64 / (2 * pos.len() as u64 * neg.len() as u64) as f64)
}

/// Entry (i, j) counts studies with true class i predicted as j.
pub fn confusion_matrix(y_true: &[u8], y_pred: &[u8]) -> Result<[[usize; N_CLASSES]; N_CLASSES]> {
    if y_true.len() != y_pred.len() {
        return Err(Error::Domain("label lengths disagree".into()));
    }
    check_labels("y_true", y_true)?;
    check_labels("y_pred", y_pred)?;
    let mut m = [[0usize; N_CLASSES]; N_CLASSES];
    for (&t, &p) in y_true.iter().zip(y_pred) {
        m[t as usize][p as usize] += 1;
    }
    Ok(m)
}

/// The three screening dichotomies, all scored from class probabilities:
/// class 0 against the rest (score 1−p₀), class 2 against the rest (score
/// p₂), and class 1 against class 2 on that subset (score p₂).
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ScreeningAurocs {
    pub no_vs_some: f64,
    pub significant_vs_not: f64,
    pub early_vs_significant: f64,
}

pub fn screening_aurocs(y_true: &[u8], probs: &[Vec<f64>]) -> Result<ScreeningAurocs> {
    if y_true.len() != probs.len() {
        return Err(Error::Domain("label/probability lengths disagree".into()));
    }
    if probs.iter().any(|p| p.len() != N_CLASSES) {
        return Err(Error::Domain("probabilities must have 3 classes".into()));
    }
    let some: Vec<u8> = y_true.iter().map(|&t| (t > 0) as u8).collect();
    let some_scores: Vec<f64> = probs.iter().map(|p| 1.0 - p[0]).collect();
    let sig: Vec<u8> = y_true.iter().map(|&t| (t == 2) as u8).collect();
    let sig_scores: Vec<f64> = probs.iter().map(|p| p[2]).collect();
    let (sub_scores, sub_labels): (Vec<f64>, Vec<u8>) = y_true
        .iter()
        .zip(probs)
        .filter(|(&t, _)| t >= 1)
        .map(|(&t, p)| (p[2], (t == 2) as u8))
        .unzip();
    Ok(ScreeningAurocs {
        no_vs_some: auroc(&some_scores, &some)?,
        significant_vs_not: auroc(&sig_scores, &sig)?,
        early_vs_significant: auroc(&sub_scores, &sub_labels)?,
    })
}

/// Mean oracle relevance at each attention rank 1..=R, averaged over the
/// studies large enough to have that rank. Rank order is attention
/// descending, ties broken by instance index.
pub fn attention_relevance_curve(
    studies: &[(Vec<f64>, Vec<f64>)],
    max_rank: usize,
) -> Result<Vec<f64>> {
    if studies.is_empty() {
        return Err(Error::Domain("empty split for attention curve".into()));
    }
    if max_rank == 0 {
        return Err(Error::Domain("max rank must be at least 1".into()));
    }
    let mut sums = vec![0.0; max_rank];
    let mut counts = vec![0usize; max_rank];
    for (attention, relevance) in studies {
        if attention.len() != relevance.len() || attention.is_empty() {
            return Err(Error::Domain("attention/relevance lengths disagree".into()));
        }
        let mut order: Vec<usize> = (0..attention.len()).collect();
        order.sort_by(|&a, &b| {
            attention[b].partial_cmp(&attention[a]).expect("finite attention").then(a.cmp(&b))
        });
        for (rank, &idx) in order.iter().take(max_rank).enumerate() {
            sums[rank] += relevance[idx];
            counts[rank] += 1;
        }
    }
    Ok(sums
        .iter()
        .zip(&counts)
        .map(|(&s, &n)| if n == 0 { f64::NAN } else { s / n as f64 })
        .collect())
}

/// Everything reported for one evaluated split.
#[derive(Clone, Debug)]
pub struct MetricsReport {
    pub balanced_accuracy: f64,
    pub aurocs: ScreeningAurocs,
    pub confusion: [[usize; N_CLASSES]; N_CLASSES],
    pub curve: Vec<f64>,
}

impl MetricsReport {
    /// Assembles the full report from split-level predictions; `attention`
    /// pairs each study's final attention with its oracle relevance.
    pub fn compute(
        y_true: &[u8],
        y_pred: &[u8],
        probs: &[Vec<f64>],
        attention: &[(Vec<f64>, Vec<f64>)],
        max_rank: usize,
    ) -> Result<Self> {
        Ok(MetricsReport {
            balanced_accuracy: balanced_accuracy(y_true, y_pred)?,
            aurocs: screening_aurocs(y_true, probs)?,
            confusion: confusion_matrix(y_true, y_pred)?,
            curve: attention_relevance_curve(attention, max_rank)?,
        })
    }
}
