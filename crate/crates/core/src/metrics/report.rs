use std::io::Write;
use std::path::Path;

use ndarray::{Array1, Array2};
use serde::{Deserialize, Serialize};

use super::roc::roc_auc_binary;
use super::seg::{avg_test_iou, dice_coef, mean_iou, precision_recall, soft_iou, thresholded_accuracy, BINARIZE_THRESHOLD, DEFAULT_SMOOTH};
use crate::error::{Error, Result};
use crate::types::BinaryMask;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ThresholdAccuracy {
    pub threshold: f64,
    pub accuracy: f64,
}

/// Per-image and pooled segmentation scores for one evaluated model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SegMetricsReport {
    pub per_image_iou: Vec<f64>,
    pub avg_test_iou: f64,
    pub threshold_accuracies: Vec<ThresholdAccuracy>,
    pub dice: f64,
    pub dice_loss: f64,
    /// Soft IOU over all pooled pixels.
    pub iou: f64,
    pub mean_iou: f64,
    pub precision: f64,
    pub recall: f64,
    /// Pooled pixel ROC AUC; `None` when the truth masks hold a single class.
    pub roc_auc: Option<f64>,
}

impl SegMetricsReport {
    /// Scores probability maps against their truth masks. Per-image IOU is
    /// soft IOU; every other field is computed on the pooled pixels.
    pub fn from_predictions(preds: &[Array2<f64>], truths: &[BinaryMask], iou_thresholds: &[f64]) -> Result<Self> {
        if preds.is_empty() {
            return Err(Error::Empty("empty test set".into()));
        }
        if preds.len() != truths.len() {
            return Err(Error::SizeMismatch(format!("{} predictions vs {} masks", preds.len(), truths.len())));
        }
        let mut per_image_iou = Vec::with_capacity(preds.len());
        let mut pooled_p = Vec::new();
        let mut pooled_t = Vec::new();
        for (p, t) in preds.iter().zip(truths) {
            let tf = t.mapv(f64::from);
            per_image_iou.push(soft_iou(p.view(), tf.view(), DEFAULT_SMOOTH)?);
            pooled_p.extend(p.iter().copied());
            pooled_t.extend(t.iter().copied());
        }
        let pp = Array1::from(pooled_p);
        let tf = Array1::from(pooled_t.iter().map(|&v| f64::from(v)).collect::<Vec<_>>());
        let dice = dice_coef(pp.view(), tf.view(), DEFAULT_SMOOTH)?;
        let (precision, recall) = precision_recall(pp.view(), tf.view(), BINARIZE_THRESHOLD)?;
        let single_class = pooled_t.iter().all(|&v| v == pooled_t[0]);
        let roc_auc = if single_class { None } else { Some(roc_auc_binary(pp.as_slice().unwrap_or(&[]), &pooled_t)?) };
        let threshold_accuracies = iou_thresholds
            .iter()
            .map(|&t| Ok(ThresholdAccuracy { threshold: t, accuracy: thresholded_accuracy(&per_image_iou, t)? }))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            avg_test_iou: avg_test_iou(&per_image_iou)?,
            per_image_iou,
            threshold_accuracies,
            dice,
            dice_loss: -dice,
            iou: soft_iou(pp.view(), tf.view(), DEFAULT_SMOOTH)?,
            mean_iou: mean_iou(pp.view(), tf.view(), BINARIZE_THRESHOLD)?,
            precision,
            recall,
            roc_auc,
        })
    }

    pub fn accuracy_at(&self, threshold: f64) -> Option<f64> {
        self.threshold_accuracies.iter().find(|t| (t.threshold - threshold).abs() < 1e-12).map(|t| t.accuracy)
    }
}

/// One evaluated model, labelled for the comparison tables.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SegReportRow {
    pub model: String,
    pub optimizer: String,
    #[serde(flatten)]
    pub report: SegMetricsReport,
}

pub fn write_seg_reports_jsonl(rows: &[SegReportRow], path: &Path) -> Result<()> {
    let mut out = Vec::new();
    for r in rows {
        serde_json::to_writer(&mut out, r)?;
        out.push(b'\n');
    }
    std::fs::write(path, out).map_err(|e| Error::io(path, e))
}

/// One row per model; threshold columns come from the first row.
pub fn write_seg_reports_csv(rows: &[SegReportRow], path: &Path) -> Result<()> {
    let thresholds: Vec<f64> = rows.first().map_or(Vec::new(), |r| r.report.threshold_accuracies.iter().map(|t| t.threshold).collect());
    let mut w = csv::Writer::from_writer(Vec::new());
    let mut header = vec!["model".to_string(), "optimizer".into(), "avg_test_iou".into()];
    header.extend(thresholds.iter().map(|t| format!("test_accuracy_iou_{t:.2}")));
    header.extend(["dice", "dice_loss", "iou", "mean_iou", "precision", "recall", "roc_auc"].map(String::from));
    w.write_record(&header)?;
    for r in rows {
        let m = &r.report;
        let mut rec = vec![r.model.clone(), r.optimizer.clone(), m.avg_test_iou.to_string()];
        for &t in &thresholds {
            rec.push(m.accuracy_at(t).map_or(String::new(), |a| a.to_string()));
        }
        for v in [m.dice, m.dice_loss, m.iou, m.mean_iou, m.precision, m.recall] {
            rec.push(v.to_string());
        }
        rec.push(m.roc_auc.map_or(String::new(), |v| v.to_string()));
        w.write_record(&rec)?;
    }
    let bytes = w.into_inner().map_err(|e| Error::io(path, e.into_error()))?;
    let mut f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    f.write_all(&bytes).map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn blob(n: usize, on: usize) -> BinaryMask {
        BinaryMask::from_shape_fn((n, n), |(y, x)| u8::from(y < on && x < on))
    }

    #[test]
    fn perfect_predictor_scores_one_everywhere() {
        let truths = vec![blob(8, 3), blob(8, 5)];
        let preds: Vec<_> = truths.iter().map(|t| t.mapv(f64::from)).collect();
        let r = SegMetricsReport::from_predictions(&preds, &truths, &[0.9, 0.85]).unwrap();
        assert_eq!(r.avg_test_iou, 1.0);
        assert_eq!(r.accuracy_at(0.9), Some(1.0));
        assert_eq!(r.accuracy_at(0.85), Some(1.0));
        for v in [r.dice, r.iou, r.mean_iou, r.precision, r.recall, r.roc_auc.unwrap()] {
            assert_eq!(v, 1.0);
        }
        assert_eq!(r.dice_loss, -1.0);
    }

    #[test]
    fn constant_half_predictor_has_chance_roc() {
        let truths = vec![blob(8, 3)];
        let preds = vec![Array2::from_elem((8, 8), 0.5)];
        let r = SegMetricsReport::from_predictions(&preds, &truths, &[0.9]).unwrap();
        assert_eq!(r.roc_auc, Some(0.5));
    }

    #[test]
    fn empty_test_set_errors() {
        assert!(SegMetricsReport::from_predictions(&[], &[], &[0.9]).is_err());
    }

    #[test]
    fn csv_and_jsonl_have_one_record_per_model() {
        let truths = vec![blob(4, 2)];
        let preds: Vec<_> = truths.iter().map(|t| t.mapv(f64::from)).collect();
        let report = SegMetricsReport::from_predictions(&preds, &truths, &[0.9, 0.85]).unwrap();
        let rows = vec![
            SegReportRow { model: "double_unet".into(), optimizer: "rmsprop".into(), report: report.clone() },
            SegReportRow { model: "resunet_pp".into(), optimizer: "adam".into(), report },
        ];
        let dir = tempfile::tempdir().unwrap();
        write_seg_reports_csv(&rows, &dir.path().join("r.csv")).unwrap();
        write_seg_reports_jsonl(&rows, &dir.path().join("r.jsonl")).unwrap();
        let csv = std::fs::read_to_string(dir.path().join("r.csv")).unwrap();
        assert_eq!(csv.lines().count(), 3);
        assert!(csv.starts_with("model,optimizer,avg_test_iou,test_accuracy_iou_0.90,test_accuracy_iou_0.85,dice"));
        let jl = std::fs::read_to_string(dir.path().join("r.jsonl")).unwrap();
        let back: SegReportRow = serde_json::from_str(jl.lines().nth(1).unwrap()).unwrap();
        assert_eq!(back, rows[1]);
    }
}
