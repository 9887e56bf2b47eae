use ndarray::ArrayView2;

use crate::error::{Error, Result};

/// Area under the ROC curve as the Mann-Whitney statistic
/// `P(s+ > s-) + P(s+ = s-) / 2`, computed from average ranks in O(n log n).
pub fn roc_auc_binary(scores: &[f64], labels: &[u8]) -> Result<f64> {
    if scores.len() != labels.len() {
        return Err(Error::ShapeMismatch(format!("{} scores vs {} labels", scores.len(), labels.len())));
    }
    if let Some(s) = scores.iter().find(|s| s.is_nan()) {
        return Err(Error::InvalidArgument(format!("score {s} is not a number")));
    }
    let n_pos = labels.iter().filter(|&&l| l == 1).count();
    let n_neg = labels.iter().filter(|&&l| l == 0).count();
    if n_pos + n_neg != labels.len() {
        return Err(Error::InvalidArgument("labels must be 0 or 1".into()));
    }
    if n_pos == 0 || n_neg == 0 {
        return Err(Error::InvalidArgument("ROC AUC needs both classes present".into()));
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));
    // sum of (1-based, tie-averaged) ranks of the positives
    let mut rank_sum = 0.0;
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && scores[order[j + 1]] == scores[order[i]] {
            j += 1;
        }
        let avg_rank = (i + j) as f64 / 2.0 + 1.0;
        let pos_in_group = order[i..=j].iter().filter(|&&k| labels[k] == 1).count();
        rank_sum += avg_rank * pos_in_group as f64;
        i = j + 1;
    }
    let (np, nn) = (n_pos as f64, n_neg as f64);
    Ok((rank_sum - np * (np + 1.0) / 2.0) / (np * nn))
}

/// Macro-average of one-vs-rest binary AUCs over `C` classes.
pub fn roc_auc_multiclass(probabilities: ArrayView2<f64>, labels: &[usize]) -> Result<f64> {
    let (n, c) = probabilities.dim();
    if n != labels.len() {
        return Err(Error::ShapeMismatch(format!("{n} probability rows vs {} labels", labels.len())));
    }
    for (i, row) in probabilities.rows().into_iter().enumerate() {
        let s: f64 = row.sum();
        if (s - 1.0).abs() > 1e-6 {
            return Err(Error::InvalidArgument(format!("probability row {i} sums to {s}")));
        }
    }
    if let Some(l) = labels.iter().find(|&&l| l >= c) {
        return Err(Error::InvalidArgument(format!("label {l} out of range for {c} classes")));
    }
    let mut total = 0.0;
    for k in 0..c {
        let scores: Vec<f64> = probabilities.column(k).to_vec();
        let bin: Vec<u8> = labels.iter().map(|&l| u8::from(l == k)).collect();
        total += roc_auc_binary(&scores, &bin)?;
    }
    Ok(total / c as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::{arr2, Array2};
    use proptest::prelude::*;

    fn pairwise(scores: &[f64], labels: &[u8]) -> f64 {
        let mut num = 0.0;
        let mut den = 0.0;
        for (i, &li) in labels.iter().enumerate() {
            for (j, &lj) in labels.iter().enumerate() {
                if li == 1 && lj == 0 {
                    den += 1.0;
                    if scores[i] > scores[j] {
                        num += 1.0;
                    } else if scores[i] == scores[j] {
                        num += 0.5;
                    }
                }
            }
        }
        num / den
    }

    #[test]
    fn binary_examples() {
        assert_eq!(roc_auc_binary(&[0.1, 0.2, 0.8, 0.9], &[0, 0, 1, 1]).unwrap(), 1.0);
        assert_eq!(roc_auc_binary(&[0.3; 6], &[0, 1, 0, 1, 1, 0]).unwrap(), 0.5);
        assert_eq!(roc_auc_binary(&[0.1, 0.4, 0.35, 0.8], &[0, 0, 1, 1]).unwrap(), 0.75);
        assert!(roc_auc_binary(&[0.1, 0.2], &[1, 1]).is_err());
        assert!(roc_auc_binary(&[0.1], &[1, 0]).is_err());
    }

    #[test]
    fn multiclass_examples() {
        let labels = [0, 1, 2, 1, 0, 2];
        let onehot = Array2::from_shape_fn((6, 3), |(i, k)| f64::from(u8::from(labels[i] == k)));
        assert_eq!(roc_auc_multiclass(onehot.view(), &labels).unwrap(), 1.0);
        let uniform = Array2::from_elem((6, 3), 1.0 / 3.0);
        assert!((roc_auc_multiclass(uniform.view(), &labels).unwrap() - 0.5).abs() < 1e-15);
        let probs = arr2(&[
            [0.6, 0.3, 0.1],
            [0.2, 0.5, 0.3],
            [0.1, 0.2, 0.7],
            [0.4, 0.4, 0.2],
            [0.3, 0.3, 0.4],
            [0.25, 0.25, 0.5],
        ]);
        let oracle: f64 = (0..3)
            .map(|k| {
                let s: Vec<f64> = probs.column(k).to_vec();
                let b: Vec<u8> = labels.iter().map(|&l| u8::from(l == k)).collect();
                pairwise(&s, &b)
            })
            .sum::<f64>()
            / 3.0;
        assert!((roc_auc_multiclass(probs.view(), &labels).unwrap() - oracle).abs() < 1e-12);
    }

    #[test]
    fn multiclass_rejects_unnormalised_rows() {
        let p = arr2(&[[0.5, 0.6], [0.5, 0.5]]);
        assert!(roc_auc_multiclass(p.view(), &[0, 1]).is_err());
    }

    proptest! {
        #[test]
        fn matches_pairwise_and_complements(raw in prop::collection::vec((0u32..20, any::<bool>()), 2..60)) {
            let scores: Vec<f64> = raw.iter().map(|(s, _)| f64::from(*s) / 20.0).collect();
            let labels: Vec<u8> = raw.iter().map(|(_, l)| u8::from(*l)).collect();
            prop_assume!(labels.contains(&0) && labels.contains(&1));
            let auc = roc_auc_binary(&scores, &labels).unwrap();
            prop_assert!((auc - pairwise(&scores, &labels)).abs() < 1e-12);
            let flipped: Vec<u8> = labels.iter().map(|l| 1 - l).collect();
            // holds with ties too, since ties contribute 1/2 to both sides
            prop_assert!((auc + roc_auc_binary(&scores, &flipped).unwrap() - 1.0).abs() < 1e-12);
        }
    }
}
