// Segmentation and classification metrics on a synthetic prediction.

use ndarray::Array2;
use slideqc::metrics::{
    avg_test_iou, confusion, dice_coef, mean_iou, precision_recall, roc_auc_binary, soft_iou, thresholded_accuracy,
    BINARIZE_THRESHOLD, DEFAULT_SMOOTH,
};
use slideqc::synth;

pub fn run() -> slideqc::Result<()> {
    let truth = synth::blob_pair(64, 7).mask.mapv(f64::from);
    // a blurred, slightly shifted prediction
    let pred = Array2::from_shape_fn((64, 64), |(y, x)| {
        let t = truth[[y, x.saturating_sub(2)]];
        0.1 + 0.8 * t
    });

    println!("dice       {:.4}", dice_coef(pred.view(), truth.view(), DEFAULT_SMOOTH)?);
    println!("soft iou   {:.4}", soft_iou(pred.view(), truth.view(), DEFAULT_SMOOTH)?);
    println!("mean iou   {:.4}", mean_iou(pred.view(), truth.view(), BINARIZE_THRESHOLD)?);
    let (p, r) = precision_recall(pred.view(), truth.view(), BINARIZE_THRESHOLD)?;
    println!("precision  {p:.4}  recall {r:.4}");

    let scores: Vec<f64> = pred.iter().copied().collect();
    let labels: Vec<u8> = truth.iter().map(|&t| t as u8).collect();
    println!("pixel roc  {:.4}", roc_auc_binary(&scores, &labels)?);

    let ious = [0.97, 0.93, 0.91, 0.88, 0.95];
    println!("avg iou    {:.4}", avg_test_iou(&ious)?);
    for t in [0.90, 0.85] {
        println!("acc > {t:.2} {:.4}", thresholded_accuracy(&ious, t)?);
    }

    let names: Vec<String> = ["low", "mid", "high"].map(String::from).to_vec();
    let cm = confusion(&[0, 1, 2, 2, 1, 0], &[0, 1, 2, 1, 1, 0], &names)?;
    println!("confusion accuracy {:.4}", cm.accuracy());
    Ok(())
}

#[allow(dead_code)]
fn main() -> slideqc::Result<()> {
    run()
}
