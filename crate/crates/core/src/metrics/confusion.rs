use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Rows are truth, columns are predictions.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    pub counts: Vec<Vec<u64>>,
    pub class_names: Vec<String>,
}

pub fn confusion(predictions: &[usize], labels: &[usize], class_names: &[String]) -> Result<ConfusionMatrix> {
    let c = class_names.len();
    if predictions.len() != labels.len() {
        return Err(Error::ShapeMismatch(format!("{} predictions vs {} labels", predictions.len(), labels.len())));
    }
    let mut counts = vec![vec![0u64; c]; c];
    for (&p, &t) in predictions.iter().zip(labels) {
        if p >= c || t >= c {
            return Err(Error::InvalidArgument(format!("class index {} out of range for {c} classes", p.max(t))));
        }
        counts[t][p] += 1;
    }
    Ok(ConfusionMatrix { counts, class_names: class_names.to_vec() })
}

impl ConfusionMatrix {
    pub fn total(&self) -> u64 {
        self.counts.iter().flatten().sum()
    }

    pub fn correct(&self) -> u64 {
        (0..self.counts.len()).map(|i| self.counts[i][i]).sum()
    }

    pub fn accuracy(&self) -> f64 {
        let t = self.total();
        if t == 0 {
            0.0
        } else {
            self.correct() as f64 / t as f64
        }
    }

    /// Class supports (row sums).
    pub fn supports(&self) -> Vec<u64> {
        self.counts.iter().map(|r| r.iter().sum()).collect()
    }

    /// Summary such as `1 of 420 (1 mid predicted as high)`.
    pub fn mismatch_summary(&self) -> String {
        let mut parts = Vec::new();
        for (t, row) in self.counts.iter().enumerate() {
            for (p, &n) in row.iter().enumerate() {
                if t != p && n > 0 {
                    parts.push(format!("{n} {} predicted as {}", self.class_names[t], self.class_names[p]));
                }
            }
        }
        let wrong = self.total() - self.correct();
        if parts.is_empty() {
            format!("{wrong} of {}", self.total())
        } else {
            format!("{wrong} of {} ({})", self.total(), parts.join(", "))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::types::Severity;

    #[test]
    fn one_mid_predicted_as_high_out_of_420() {
        let labels: Vec<usize> = (0..420).map(|i| i % 3).collect();
        let mut preds = labels.clone();
        let mid = labels.iter().position(|&l| l == Severity::Mid.index()).unwrap();
        preds[mid] = Severity::High.index();
        let m = confusion(&preds, &labels, &Severity::class_names()).unwrap();
        assert_eq!(m.counts[1][2], 1);
        assert_eq!(m.correct(), 419);
        assert_eq!(m.total(), 420);
        assert_eq!(m.supports(), vec![140, 140, 140]);
        assert_eq!(m.mismatch_summary(), "1 of 420 (1 mid predicted as high)");
    }

    #[test]
    fn perfect_predictions_are_diagonal() {
        let l = vec![0, 1, 2, 2];
        let m = confusion(&l, &l, &Severity::class_names()).unwrap();
        assert_eq!(m.counts, vec![vec![1, 0, 0], vec![0, 1, 0], vec![0, 0, 2]]);
    }

    #[test]
    fn reversed_predictions_fill_the_anti_diagonal() {
        let m = confusion(&[2, 1, 0], &[0, 1, 2], &Severity::class_names()).unwrap();
        assert_eq!(m.counts, vec![vec![0, 0, 1], vec![0, 1, 0], vec![1, 0, 0]]);
    }

    #[test]
    fn out_of_range_index_errors() {
        assert!(confusion(&[3], &[0], &Severity::class_names()).is_err());
    }
}
