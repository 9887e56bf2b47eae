use serde::{Deserialize, Serialize};

use super::model::SegModel;
use super::resunet::ResUnetOptions;
use super::train::{evaluate_segmenter, train_segmenter_with, StopReason, TrainOptions};
use crate::config::RunConfig;
use crate::data::make_kfold_ids;
use crate::error::{Error, Result};
use crate::metrics::SegMetricsReport;
use crate::types::SegPair;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FoldOutcome {
    /// 1-based round number.
    pub round: usize,
    pub train_folds: String,
    pub test_fold: char,
    pub epochs_run: usize,
    pub stop_reason: StopReason,
    pub report: SegMetricsReport,
}

/// k-fold rotation: each round trains a fresh model on k-1 folds (minus
/// `n_valid` ids carved off for validation) and scores the held-out fold.
pub fn run_crossval(
    data: &[(String, SegPair)],
    k: usize,
    n_valid: usize,
    config: &RunConfig,
    iou_thresholds: &[f64],
    options: &TrainOptions,
) -> Result<Vec<FoldOutcome>> {
    let first = data.first().ok_or_else(|| Error::Empty("no segmentation pairs".into()))?;
    let shape = (first.1.image.shape()[0], first.1.image.shape()[1]);
    let ids: Vec<String> = data.iter().map(|(id, _)| id.clone()).collect();
    let plan = make_kfold_ids(&ids, k, config.seed)?;
    let index: std::collections::HashMap<&str, &SegPair> = data.iter().map(|(id, p)| (id.as_str(), p)).collect();
    let pick = |ids: &[String]| ids.iter().map(|id| index[id.as_str()].clone()).collect::<Vec<_>>();
    let mut out = Vec::new();
    for r in 0..k {
        let (train_ids, valid_ids, test_ids) = plan.rotation_with_validation(r, n_valid, config.seed)?;
        let rot = plan.rotation(r);
        let model = SegModel::build(config.model, shape, config.width_scale, config.seed, ResUnetOptions::default())?;
        let valid = if valid_ids.is_empty() { pick(&train_ids) } else { pick(&valid_ids) };
        let (model, history) = train_segmenter_with(model, &pick(&train_ids), &valid, config, options)?;
        let report = evaluate_segmenter(&model, &pick(&test_ids), iou_thresholds)?;
        out.push(FoldOutcome {
            round: r + 1,
            train_folds: rot.train_folds.iter().collect(),
            test_fold: rot.test_fold,
            epochs_run: history.records.len(),
            stop_reason: history.stop_reason,
            report,
        });
    }
    Ok(out)
}
