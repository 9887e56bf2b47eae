// Train a small U-Net on synthetic blob tiles and score it.

use slideqc::config::{Architecture, LossKind, PlateauConfig, RunConfig};
use slideqc::segmentation::{evaluate_segmenter, train_segmenter_with, ResUnetOptions, SegModel, TrainOptions};
use slideqc::{synth, OptimizerKind};

pub fn run() -> slideqc::Result<()> {
    let train = synth::blob_dataset(8, 32, 1);
    let valid = synth::blob_dataset(4, 32, 2);
    let cfg = RunConfig {
        epochs: 40,
        batch_size: 4,
        learning_rate: 1e-2,
        optimizer: OptimizerKind::Rmsprop,
        loss: LossKind::DiceCoefLoss,
        plateau: PlateauConfig { factor: 0.5, patience: 10 },
        model: Architecture::UnetBaseline,
        width_scale: 0.25,
        ..RunConfig::default()
    };
    let model = SegModel::build(cfg.model, (32, 32), cfg.width_scale, cfg.seed, ResUnetOptions::default())?;
    println!("{} with {} parameters", cfg.model, model.parameter_count());
    let (model, history) = train_segmenter_with(model, &train, &valid, &cfg, &TrainOptions::default())?;
    if let Some(last) = history.last() {
        println!("stopped after {} epochs ({:?}), val loss {:.4}", history.records.len(), history.stop_reason, last.val_loss);
    }
    let report = evaluate_segmenter(&model, &valid, &[0.9, 0.85])?;
    println!("avg test iou {:.4}", report.avg_test_iou);
    for t in &report.threshold_accuracies {
        println!("accuracy at iou > {}: {:.2}%", t.threshold, 100.0 * t.accuracy);
    }
    Ok(())
}

#[allow(dead_code)]
fn main() -> slideqc::Result<()> {
    run()
}
