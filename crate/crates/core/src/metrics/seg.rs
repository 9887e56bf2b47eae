use ndarray::{ArrayView, Dimension, Zip};

use crate::error::{Error, Result};

/// Additive smoothing used by dice and soft IOU unless stated otherwise.
pub const DEFAULT_SMOOTH: f64 = 1.0;
/// Cut-off for every hard-mask derivation: a pixel is foreground when `p > 0.5`.
pub const BINARIZE_THRESHOLD: f64 = 0.5;

fn check<D: Dimension>(pred: &ArrayView<f64, D>, truth: &ArrayView<f64, D>) -> Result<()> {
    if pred.shape() != truth.shape() {
        return Err(Error::ShapeMismatch(format!("prediction {:?} vs truth {:?}", pred.shape(), truth.shape())));
    }
    Ok(())
}

fn sums<D: Dimension>(pred: &ArrayView<f64, D>, truth: &ArrayView<f64, D>) -> (f64, f64, f64) {
    let mut inter = 0.0;
    let mut sp = 0.0;
    let mut st = 0.0;
    Zip::from(pred).and(truth).for_each(|&p, &t| {
        inter += p * t;
        sp += p;
        st += t;
    });
    (inter, sp, st)
}

/// `(2 sum(p t) + s) / (sum p + sum t + s)`.
pub fn dice_coef<D: Dimension>(pred: ArrayView<f64, D>, truth: ArrayView<f64, D>, smooth: f64) -> Result<f64> {
    check(&pred, &truth)?;
    let (inter, sp, st) = sums(&pred, &truth);
    Ok((2.0 * inter + smooth) / (sp + st + smooth))
}

pub fn dice_loss<D: Dimension>(pred: ArrayView<f64, D>, truth: ArrayView<f64, D>, smooth: f64) -> Result<f64> {
    dice_coef(pred, truth, smooth).map(|d| -d)
}

/// `(sum(p t) + s) / (sum p + sum t - sum(p t) + s)`.
pub fn soft_iou<D: Dimension>(pred: ArrayView<f64, D>, truth: ArrayView<f64, D>, smooth: f64) -> Result<f64> {
    check(&pred, &truth)?;
    let (inter, sp, st) = sums(&pred, &truth);
    Ok((inter + smooth) / (sp + st - inter + smooth))
}

/// Hard confusion counts `(tp, fp, fn, tn)` after binarising `pred`.
fn hard_counts<D: Dimension>(pred: &ArrayView<f64, D>, truth: &ArrayView<f64, D>, threshold: f64) -> [u64; 4] {
    let mut c = [0u64; 4];
    Zip::from(pred).and(truth).for_each(|&p, &t| {
        let p1 = p > threshold;
        let t1 = t > 0.5;
        let idx = match (p1, t1) {
            (true, true) => 0,
            (true, false) => 1,
            (false, true) => 2,
            (false, false) => 3,
        };
        c[idx] += 1;
    });
    c
}

/// Unweighted mean of background and foreground IOU on hard masks; a class
/// absent from both prediction and truth scores 1.
pub fn mean_iou<D: Dimension>(pred: ArrayView<f64, D>, truth: ArrayView<f64, D>, binarize_threshold: f64) -> Result<f64> {
    check(&pred, &truth)?;
    let [tp, fp, fn_, tn] = hard_counts(&pred, &truth, binarize_threshold);
    let iou = |inter: u64, union: u64| if union == 0 { 1.0 } else { inter as f64 / union as f64 };
    let fg = iou(tp, tp + fp + fn_);
    let bg = iou(tn, tn + fp + fn_);
    Ok((fg + bg) / 2.0)
}

/// Hard precision and recall; each is 1 when its denominator is 0.
pub fn precision_recall<D: Dimension>(
    pred: ArrayView<f64, D>,
    truth: ArrayView<f64, D>,
    binarize_threshold: f64,
) -> Result<(f64, f64)> {
    check(&pred, &truth)?;
    let [tp, fp, fn_, _] = hard_counts(&pred, &truth, binarize_threshold);
    let ratio = |num: u64, den: u64| if den == 0 { 1.0 } else { num as f64 / den as f64 };
    Ok((ratio(tp, tp + fp), ratio(tp, tp + fn_)))
}

/// Arithmetic mean of per-image IOUs.
pub fn avg_test_iou(per_image_ious: &[f64]) -> Result<f64> {
    if per_image_ious.is_empty() {
        return Err(Error::Empty("no per-image IOU values".into()));
    }
    Ok(per_image_ious.iter().sum::<f64>() / per_image_ious.len() as f64)
}

/// Fraction of images whose IOU is strictly greater than `iou_threshold`.
pub fn thresholded_accuracy(per_image_ious: &[f64], iou_threshold: f64) -> Result<f64> {
    if per_image_ious.is_empty() {
        return Err(Error::Empty("no per-image IOU values".into()));
    }
    if !(iou_threshold > 0.0 && iou_threshold < 1.0) {
        return Err(Error::InvalidArgument(format!("IOU threshold {iou_threshold} outside (0, 1)")));
    }
    let hits = per_image_ious.iter().filter(|&&v| v > iou_threshold).count();
    Ok(hits as f64 / per_image_ious.len() as f64)
}
