//! ROC-AUC in the Mann-Whitney rank form with midranks for ties, so a tied
//! positive/negative pair counts one half.

use super::ParityError;

/// AUC = (sum of positive ranks - m(m+1)/2) / (m * n_neg).
pub fn roc_auc(scores: &[f64], labels: &[bool]) -> Result<f64, ParityError> {
    if scores.len() != labels.len() {
        return Err(ParityError::Shape {
            reason: format!("{} scores for {} labels", scores.len(), labels.len()),
        });
    }
    let m = labels.iter().filter(|&&l| l).count();
    let n_neg = labels.len() - m;
    if m == 0 || n_neg == 0 {
        return Err(ParityError::SingleClass);
    }

    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].partial_cmp(&scores[b]).expect("scores are finite"));

    // Midranks over tie groups, 1-based.
    let mut rank_sum_pos = 0.0f64;
    let mut i = 0;
    while i < order.len() {
        let mut j = i + 1;
        while j < order.len() && scores[order[j]] == scores[order[i]] {
            j += 1;
        }
        let midrank = (i + 1 + j) as f64 / 2.0;
        for &idx in &order[i..j] {
            if labels[idx] {
                rank_sum_pos += midrank;
            }
        }
        i = j;
    }

    let m = m as f64;
    Ok((rank_sum_pos - m * (m + 1.0) / 2.0) / (m * n_neg as f64))
}
