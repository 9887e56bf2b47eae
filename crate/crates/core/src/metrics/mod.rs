//! Evaluation mathematics: overlap scores, the per-image IOU protocol,
//! ROC AUC and confusion matrices.

mod confusion;
mod report;
mod roc;
mod seg;

pub use confusion::{confusion, ConfusionMatrix};
pub use report::{write_seg_reports_csv, write_seg_reports_jsonl, SegMetricsReport, SegReportRow, ThresholdAccuracy};
pub use roc::{roc_auc_binary, roc_auc_multiclass};
pub use seg::{
    avg_test_iou, dice_coef, dice_loss, mean_iou, precision_recall, soft_iou, thresholded_accuracy,
    BINARIZE_THRESHOLD, DEFAULT_SMOOTH,
};
