use std::cmp::Ordering;

use crate::error::{Error, Result};

/// Macro- and micro-averaged F1 of single-label predictions.
///
/// The macro average runs over classes that occur in `truth` or `pred`; a
/// class with no true or predicted member would contribute an undefined
/// score and is left out.
pub fn f1_scores(truth: &[usize], pred: &[usize], num_classes: usize) -> Result<(f64, f64)> {
    if truth.len() != pred.len() || truth.is_empty() {
        return Err(Error::invalid(format!(
            "f1 needs equally long non-empty label lists ({} vs {})",
            truth.len(),
            pred.len()
        )));
    }
    if let Some(&c) = truth.iter().chain(pred).find(|&&c| c >= num_classes) {
        return Err(Error::invalid(format!("class {c} out of range")));
    }
    let mut tp = vec![0usize; num_classes];
    let mut n_true = vec![0usize; num_classes];
    let mut n_pred = vec![0usize; num_classes];
    for (&t, &p) in truth.iter().zip(pred) {
        n_true[t] += 1;
        n_pred[p] += 1;
        if t == p {
            tp[t] += 1;
        }
    }
    let mut sum = 0.0;
    let mut present = 0;
    for c in 0..num_classes {
        if n_true[c] + n_pred[c] == 0 {
            continue;
        }
        present += 1;
        sum += 2.0 * tp[c] as f64 / (n_true[c] + n_pred[c]) as f64;
    }
    let correct: usize = tp.iter().sum();
    Ok((sum / present as f64, correct as f64 / truth.len() as f64))
}

fn check_scores(positives: &[f64], negatives: &[f64]) -> Result<()> {
    if positives.is_empty() || negatives.is_empty() {
        return Err(Error::invalid("ranking metrics need positives and negatives"));
    }
    if positives.iter().chain(negatives).any(|s| s.is_nan()) {
        return Err(Error::invalid("scores contain NaN"));
    }
    Ok(())
}

/// `(score, is_positive)` sorted by descending score.
fn ranked(positives: &[f64], negatives: &[f64]) -> Vec<(f64, bool)> {
    let mut all: Vec<(f64, bool)> = positives
        .iter()
        .map(|&s| (s, true))
        .chain(negatives.iter().map(|&s| (s, false)))
        .collect();
    all.sort_by(|a, b| b.0.partial_cmp(&a.0).unwrap_or(Ordering::Equal));
    all
}

/// Groups of tied scores as `(size, positives in group)`, best first.
fn tie_groups(positives: &[f64], negatives: &[f64]) -> Vec<(usize, usize)> {
    let all = ranked(positives, negatives);
    let mut groups = Vec::new();
    let mut i = 0;
    while i < all.len() {
        let mut j = i;
        let mut pos = 0;
        while j < all.len() && all[j].0 == all[i].0 {
            pos += all[j].1 as usize;
            j += 1;
        }
        groups.push((j - i, pos));
        i = j;
    }
    groups
}

/// Area under the ROC curve from the Mann-Whitney statistic; ties between a
/// positive and a negative count one half.
pub fn auc(positives: &[f64], negatives: &[f64]) -> Result<f64> {
    check_scores(positives, negatives)?;
    let (p, n) = (positives.len() as u64, negatives.len() as u64);
    // twice the rank sum of positives, ranks ascending from 1 with midranks
    let mut below = 0u64;
    let mut twice_rank_sum = 0u64;
    for (size, pos) in tie_groups(positives, negatives).into_iter().rev() {
        let (size, pos) = (size as u64, pos as u64);
        // midrank of the group is below + (size + 1) / 2
        twice_rank_sum += pos * (2 * below + size + 1);
        below += size;
    }
    let twice_u = twice_rank_sum - p * (p + 1);
    Ok(twice_u as f64 / (2 * p * n) as f64)
}

/// Fraction of positives among the `k` best-scored items. A tie group
/// straddling the cut-off contributes its positives in proportion to the
/// slots it gets.
pub fn recall_at(positives: &[f64], negatives: &[f64], k: usize) -> Result<f64> {
    check_scores(positives, negatives)?;
    let mut taken = 0usize;
    let mut full = 0u64;
    for (size, pos) in tie_groups(positives, negatives) {
        if taken + size <= k {
            full += pos as u64;
            taken += size;
            continue;
        }
        let slots = (k - taken) as u64;
        let (size, pos) = (size as u64, pos as u64);
        let num = full * size + pos * slots;
        return Ok(num as f64 / (size * positives.len() as u64) as f64);
    }
    Ok(full as f64 / positives.len() as f64)
}

/// Recall among the top `|positives|` scored items.
pub fn recall_at_positives(positives: &[f64], negatives: &[f64]) -> Result<f64> {
    recall_at(positives, negatives, positives.len())
}
