use rand::seq::SliceRandom;

use super::BenchError;
use crate::ring::RngHandle;

/// Splits row indices class by class so both halves keep the class mix.
///
/// Each class sends `round(fraction * n_c)` rows to training, clamped so that
/// both halves get at least one. Indices come back sorted.
pub fn stratified_split(labels: &[usize], fraction: f64, seed: u64) -> Result<(Vec<usize>, Vec<usize>), BenchError> {
    if !(fraction > 0.0 && fraction < 1.0) {
        return Err(BenchError::Invalid(format!("split fraction {fraction} must lie strictly between 0 and 1")));
    }
    let n_classes = labels.iter().max().map_or(0, |m| m + 1);
    let mut by_class = vec![Vec::new(); n_classes];
    for (i, &c) in labels.iter().enumerate() {
        by_class[c].push(i);
    }
    if by_class.iter().filter(|v| !v.is_empty()).count() < 2 {
        return Err(BenchError::Invalid("stratified split needs at least two classes".into()));
    }
    let rng = RngHandle::new(seed);
    let (mut train, mut test) = (Vec::new(), Vec::new());
    for (c, mut rows) in by_class.into_iter().enumerate() {
        if rows.is_empty() {
            continue;
        }
        if rows.len() < 2 {
            return Err(BenchError::Invalid(format!("class {c} has a single observation")));
        }
        rows.shuffle(&mut rng.substream("split-class", c as u64));
        let k = ((fraction * rows.len() as f64).round() as usize).clamp(1, rows.len() - 1);
        train.extend_from_slice(&rows[..k]);
        test.extend_from_slice(&rows[k..]);
    }
    train.sort_unstable();
    test.sort_unstable();
    Ok((train, test))
}

/// Area under the ROC curve: the chance a random positive outscores a random
/// negative, ties counting one half. Computed from midranks.
pub fn auc(scores: &[f64], labels: &[bool]) -> Result<f64, BenchError> {
    if scores.len() != labels.len() {
        return Err(BenchError::Invalid(format!("{} scores for {} labels", scores.len(), labels.len())));
    }
    if scores.iter().any(|s| s.is_nan()) {
        return Err(BenchError::Invalid("NaN score".into()));
    }
    let pos = labels.iter().filter(|&&l| l).count();
    let neg = labels.len() - pos;
    if pos == 0 || neg == 0 {
        return Err(BenchError::Invalid("AUC needs both labels".into()));
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));
    let mut rank_sum = 0.0;
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && scores[order[j + 1]] == scores[order[i]] {
            j += 1;
        }
        // 1-based midrank of the tie group i..=j
        let mid = (i + j) as f64 / 2.0 + 1.0;
        rank_sum += mid * order[i..=j].iter().filter(|&&k| labels[k]).count() as f64;
        i = j + 1;
    }
    let u = rank_sum - (pos * (pos + 1)) as f64 / 2.0;
    Ok(u / (pos as f64 * neg as f64))
}

/// Counts `[tp, fp, tn, fn]` with positives predicted at `score >= threshold`.
pub fn confusion(scores: &[f64], labels: &[bool], threshold: f64) -> [u64; 4] {
    let mut c = [0; 4];
    for (&s, &l) in scores.iter().zip(labels) {
        let idx = match (s >= threshold, l) {
            (true, true) => 0,
            (true, false) => 1,
            (false, false) => 2,
            (false, true) => 3,
        };
        c[idx] += 1;
    }
    c
}
